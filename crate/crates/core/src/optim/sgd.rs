//! SGD on recovered data: the master broadcasts a sample index, workers
//! return their slice of the encoded sample, and the master decodes the raw
//! row and takes the gradient step itself.

use super::model::{prox, GlmState, ModelSpec};
use super::{coded_product, row_scale, Metrics};
use crate::cluster::{Cluster, ClusterConfig, Request};
use crate::encoder::{encode, EncodedShare, Provenance};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct CodedSgd {
    cluster: Cluster,
    shares: Vec<EncodedShare>,
    scale: f64,
    y: Vec<f64>,
    metrics: Metrics,
    last: Option<(usize, Vec<f64>)>,
}

impl CodedSgd {
    pub fn new(x: &Matrix, y: &[f64], config: ClusterConfig) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!("{} labels for {} samples", y.len(), x.rows())));
        }
        let cluster = Cluster::new(config)?;
        let shares = encode(cluster.basis(), &x.transpose(), Provenance::Transposed, &mut Default::default())?;
        let metrics = Metrics::new(cluster.config().m);
        let scale = row_scale(&shares);
        Ok(CodedSgd { cluster, shares, scale, y: y.to_vec(), metrics, last: None })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn samples(&self) -> usize {
        self.y.len()
    }

    /// Index and decoded row of the most recent step.
    pub fn last_sample(&self) -> Option<(usize, &[f64])> {
        self.last.as_ref().map(|(r, x)| (*r, x.as_slice()))
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn take_metrics(&mut self) -> Metrics {
        self.metrics.take()
    }

    /// Decodes sample row `index` from the workers.
    pub fn recover(&mut self, index: usize) -> Result<Vec<f64>> {
        let n = self.samples();
        if index >= n {
            return Err(Error::OutOfRange { index, len: n });
        }
        let widths = self.shares[0].geometry().widths();
        let basis = self.cluster.basis().clone();
        let row = coded_product(&mut self.cluster, &self.shares, &basis, Request::Index { index, bound: n }, &widths, self.scale, &mut self.metrics)?;
        self.last = Some((index, row.clone()));
        Ok(row)
    }
}

/// One step on a uniformly drawn sample: `w ← prox(w − α ℓ′(⟨x_r, w⟩; y_r) x_r)`.
pub fn sgd_step<R: Rng + ?Sized>(sgd: &mut CodedSgd, state: &GlmState, model: &ModelSpec, rng: &mut R) -> Result<GlmState> {
    let r = rng.random_range(0..sgd.samples());
    sgd_step_at(sgd, state, model, r)
}

/// [`sgd_step`] with a caller-chosen sample index.
pub fn sgd_step_at(sgd: &mut CodedSgd, state: &GlmState, model: &ModelSpec, index: usize) -> Result<GlmState> {
    let alpha = model.step.at(state.iteration);
    let xr = sgd.recover(index)?;
    if xr.len() != state.w.len() {
        return Err(Error::DimensionMismatch(format!("w has length {}, samples have {}", state.w.len(), xr.len())));
    }
    let scale = model.loss.derivative(dot(&xr, &state.w), sgd.y[index]);
    let z: Vec<f64> = state.w.iter().zip(&xr).map(|(a, b)| a - alpha * scale * b).collect();
    sgd.metrics.record_master(4 * z.len());
    Ok(GlmState { w: prox(&model.regularizer, &z, alpha), iteration: state.iteration + 1, cache: None })
}

/// A step with an arbitrary per-sample gradient `grad(x_r, y_r, w)` computed
/// at the master on the recovered row.
pub fn sgd_step_with<R, G>(sgd: &mut CodedSgd, state: &GlmState, alpha: f64, rng: &mut R, grad: G) -> Result<GlmState>
where
    R: Rng + ?Sized,
    G: Fn(&[f64], f64, &[f64]) -> Vec<f64>,
{
    let r = rng.random_range(0..sgd.samples());
    let xr = sgd.recover(r)?;
    let g = grad(&xr, sgd.y[r], &state.w);
    if g.len() != state.w.len() {
        return Err(Error::DimensionMismatch(format!("gradient has length {}, expected {}", g.len(), state.w.len())));
    }
    let w = state.w.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
    Ok(GlmState { w, iteration: state.iteration + 1, cache: None })
}
