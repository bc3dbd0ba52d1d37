//! Two-round coded gradient: round one decodes `Xw` from `S⁽¹⁾X`, the master
//! forms `f′(w)`, round two decodes `Xᵀf′(w)` from `S⁽²⁾Xᵀ`.

use super::model::{prox, GlmState, Loss, ModelSpec, XwCache};
use super::{coded_product, row_scale, Metrics};
use crate::cluster::{Cluster, ClusterConfig, Request};
use crate::encoder::{encode, storage_report, BlockGeometry, EncodedShare, Provenance, StorageReport};
use crate::error::{Error, Result};
use crate::linalg::{norm, Flops, Matrix};

/// A cluster holding both rounds' shares of `X`. Labels stay at the master.
#[derive(Debug, Clone)]
pub struct CodedGlm {
    cluster: Cluster,
    data: Vec<EncodedShare>,
    transposed: Vec<EncodedShare>,
    y: Vec<f64>,
    data_scale: f64,
    transposed_scale: f64,
    encode_flops: Flops,
    metrics: Metrics,
}

impl CodedGlm {
    pub fn new(x: &Matrix, y: &[f64], config: ClusterConfig) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!("{} labels for {} samples", y.len(), x.rows())));
        }
        let cluster = Cluster::new(config)?;
        let mut encode_flops = Flops::default();
        let data = encode(cluster.basis(), x, Provenance::Data, &mut encode_flops)?;
        let transposed = encode(cluster.basis(), &x.transpose(), Provenance::Transposed, &mut encode_flops)?;
        let metrics = Metrics::new(cluster.config().m);
        let (data_scale, transposed_scale) = (row_scale(&data), row_scale(&transposed));
        Ok(CodedGlm { cluster, data, transposed, y: y.to_vec(), data_scale, transposed_scale, encode_flops, metrics })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn samples(&self) -> usize {
        self.y.len()
    }

    pub fn features(&self) -> usize {
        self.data[0].cols()
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn storage(&self) -> StorageReport {
        storage_report(&[&self.data, &self.transposed])
    }

    pub fn encode_flops(&self) -> u64 {
        self.encode_flops.get()
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn take_metrics(&mut self) -> Metrics {
        self.metrics.take()
    }

    /// Coded `X·v`.
    pub fn product(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.features() {
            return Err(Error::DimensionMismatch(format!("vector has length {}, expected {}", v.len(), self.features())));
        }
        let widths = self.data[0].geometry().widths();
        let basis = self.cluster.basis().clone();
        let floor = self.data_scale * norm(v);
        coded_product(&mut self.cluster, &self.data, &basis, Request::Vector(v.to_vec()), &widths, floor, &mut self.metrics)
    }

    /// Coded `Xᵀ·u`.
    pub fn transposed_product(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.samples() {
            return Err(Error::DimensionMismatch(format!("vector has length {}, expected {}", u.len(), self.samples())));
        }
        let widths = self.transposed[0].geometry().widths();
        let basis = self.cluster.basis().clone();
        let floor = self.transposed_scale * norm(u);
        coded_product(&mut self.cluster, &self.transposed, &basis, Request::Vector(u.to_vec()), &widths, floor, &mut self.metrics)
    }

    pub fn sample_geometry(&self) -> BlockGeometry {
        self.data[0].geometry()
    }

    pub fn feature_geometry(&self) -> BlockGeometry {
        self.transposed[0].geometry()
    }
}

/// `∇f(w) = Xᵀ f′(Xw)` in two coded rounds. Also returns the decoded `Xw`.
pub fn coded_gradient(glm: &mut CodedGlm, w: &[f64], loss: Loss) -> Result<(Vec<f64>, Vec<f64>)> {
    let xw = glm.product(w)?;
    let phi = loss.derivatives(&xw, &glm.y);
    glm.metrics.record_master(2 * phi.len());
    let grad = glm.transposed_product(&phi)?;
    Ok((grad, xw))
}

/// `w ← prox(w − α∇f(w))`.
pub fn pgd_step(glm: &mut CodedGlm, state: &GlmState, model: &ModelSpec) -> Result<GlmState> {
    let alpha = model.step.at(state.iteration);
    let (grad, xw) = coded_gradient(glm, &state.w, model.loss)?;
    let z: Vec<f64> = state.w.iter().zip(&grad).map(|(a, g)| a - alpha * g).collect();
    glm.metrics.record_master(3 * z.len());
    Ok(GlmState {
        w: prox(&model.regularizer, &z, alpha),
        iteration: state.iteration + 1,
        cache: Some(XwCache { point: state.w.clone(), xw }),
    })
}
