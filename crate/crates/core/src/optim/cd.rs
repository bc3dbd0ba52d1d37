//! Encoded coordinate descent. Each worker holds `XR_i`-style columns (the
//! rows of `S_R Xᵀ`) and its slice `v_i = S_R,i w` of the encoded parameter
//! vector. An iteration updates the coordinates `f(U)` of a block subset `U`.

use super::model::{GlmState, ModelSpec, Regularizer, XwCache};
use super::{coded_product, finish_decode, row_scale, Metrics};
use crate::cluster::{Cluster, ClusterConfig, Request};
use crate::codec::{null_basis, BasisVariant, ErrorLocatorMatrix, NullBasis};
use crate::encoder::{encode, BlockGeometry, EncodedShare, Provenance};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Flops, Matrix};
use rand::seq::index::sample;
use rand::Rng;
use std::ops::Range;

/// The two codes used by coordinate descent.
#[derive(Debug, Clone)]
pub struct CdCodebook {
    /// Orthonormal basis; its encoding matrix is `R⁺`.
    pub r_basis: NullBasis,
    /// Basis of the `Xw` round.
    pub l_basis: NullBasis,
    /// Blocks over the `d` parameters.
    pub params: BlockGeometry,
    /// Blocks over the `n` samples.
    pub samples: BlockGeometry,
}

impl CdCodebook {
    pub fn new(locator: &ErrorLocatorMatrix, samples: usize, features: usize) -> Result<Self> {
        let r_basis = null_basis(locator, BasisVariant::Orthonormal);
        let l_basis = null_basis(locator, BasisVariant::RrefSparse);
        let q = r_basis.q();
        Ok(CdCodebook { r_basis, l_basis, params: BlockGeometry::new(features, q)?, samples: BlockGeometry::new(samples, q)? })
    }

    /// Parameter coordinates of block `block`.
    pub fn f(&self, block: usize) -> Range<usize> {
        self.params.range(block)
    }

    /// `f(U)` in block order.
    pub fn coords(&self, blocks: &[usize]) -> Vec<usize> {
        blocks.iter().flat_map(|&b| self.f(b)).collect()
    }

    /// `R⁺_i w`: what worker `i` should hold for parameters `w`.
    pub fn encode_params(&self, worker: usize, w: &[f64]) -> Vec<f64> {
        let coeffs = self.r_basis.coeffs(worker);
        (0..self.params.p).map(|j| self.f(j).enumerate().map(|(c, r)| coeffs[c] * w[r]).sum()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CodedCd {
    cluster: Cluster,
    codebook: CdCodebook,
    data: Vec<EncodedShare>,
    params: Vec<EncodedShare>,
    data_scale: f64,
    params_scale: f64,
    held: Vec<Vec<f64>>,
    y: Vec<f64>,
    metrics: Metrics,
}

impl CodedCd {
    pub fn new(x: &Matrix, y: &[f64], config: ClusterConfig) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!("{} labels for {} samples", y.len(), x.rows())));
        }
        let cluster = Cluster::new(config)?;
        let codebook = CdCodebook::new(cluster.locator(), x.rows(), x.cols())?;
        let mut flops = Flops::default();
        let data = encode(&codebook.l_basis, x, Provenance::Data, &mut flops)?;
        let params = encode(&codebook.r_basis, &x.transpose(), Provenance::Transposed, &mut flops)?;
        let m = cluster.config().m;
        let held = vec![vec![0.0; codebook.params.p]; m];
        let (data_scale, params_scale) = (row_scale(&data), row_scale(&params));
        Ok(CodedCd { cluster, codebook, data, params, data_scale, params_scale, held, y: y.to_vec(), metrics: Metrics::new(m) })
    }

    /// Resets every worker's encoded parameters to `R⁺_i w0`.
    pub fn start(&mut self, w0: Vec<f64>) -> Result<GlmState> {
        if w0.len() != self.codebook.params.rows {
            return Err(Error::DimensionMismatch(format!("w0 has length {}, expected {}", w0.len(), self.codebook.params.rows)));
        }
        self.held = (0..self.held.len()).map(|i| self.codebook.encode_params(i, &w0)).collect();
        Ok(GlmState::new(w0))
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn codebook(&self) -> &CdCodebook {
        &self.codebook
    }

    /// Blocks over the parameters (`p₂` of them).
    pub fn blocks(&self) -> usize {
        self.codebook.params.p
    }

    /// Encoded parameters held by `worker`.
    pub fn held(&self, worker: usize) -> &[f64] {
        &self.held[worker]
    }

    /// Largest `|v_i − R⁺_i w|` over all workers.
    pub fn invariant_gap(&self, w: &[f64]) -> f64 {
        (0..self.held.len())
            .flat_map(|i| {
                let want = self.codebook.encode_params(i, w);
                self.held[i].iter().zip(want).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn take_metrics(&mut self) -> Metrics {
        self.metrics.take()
    }
}

/// Blocks `{iteration·τ + j mod p₂ : j < τ}`, sorted.
pub fn round_robin(iteration: usize, tau: usize, blocks: usize) -> Vec<usize> {
    let tau = tau.min(blocks);
    let mut u: Vec<usize> = (0..tau).map(|j| (iteration * tau + j) % blocks).collect();
    u.sort_unstable();
    u
}

/// `τ` distinct blocks drawn uniformly, sorted.
pub fn random_blocks<R: Rng + ?Sized>(rng: &mut R, tau: usize, blocks: usize) -> Vec<usize> {
    let mut u = sample(rng, blocks, tau.min(blocks)).into_vec();
    u.sort_unstable();
    u
}

/// One iteration on the blocks `blocks`. `state` must be the state returned by
/// [`CodedCd::start`] or the previous call, since workers keep `v` in sync
/// with it.
pub fn cd_iteration(cd: &mut CodedCd, state: &GlmState, blocks: &[usize], model: &ModelSpec) -> Result<GlmState> {
    if model.regularizer != Regularizer::None {
        return Err(Error::InvalidParameter("coordinate descent supports only the unregularized objective".into()));
    }
    let p2 = cd.blocks();
    if state.w.len() != cd.codebook.params.rows {
        return Err(Error::DimensionMismatch(format!("w has length {}, expected {}", state.w.len(), cd.codebook.params.rows)));
    }
    let mut seen = vec![false; p2];
    for &b in blocks {
        if b >= p2 {
            return Err(Error::OutOfRange { index: b, len: p2 });
        }
        if std::mem::replace(&mut seen[b], true) {
            return Err(Error::InvalidParameter(format!("block {b} listed twice")));
        }
    }
    let alpha = model.step.at(state.iteration);
    let n = cd.y.len();
    let l_basis = cd.codebook.l_basis.clone();
    let sample_widths = cd.codebook.samples.widths();

    // Bring the master's X·w up to date with the coordinates changed last time.
    let (indices, values, base): (Vec<usize>, Vec<f64>, Vec<f64>) = match &state.cache {
        None => {
            let idx: Vec<usize> = (0..state.w.len()).filter(|&j| state.w[j] != 0.0).collect();
            let vals = idx.iter().map(|&j| state.w[j]).collect();
            (idx, vals, vec![0.0; n])
        }
        Some(c) => {
            let idx: Vec<usize> = (0..state.w.len()).filter(|&j| c.point[j] != state.w[j]).collect();
            let vals = idx.iter().map(|&j| state.w[j] - c.point[j]).collect();
            (idx, vals, c.xw.clone())
        }
    };
    let xw = if indices.is_empty() {
        base
    } else {
        let floor = cd.data_scale * norm(&values);
        let request = Request::Sparse { indices, values };
        let change = coded_product(&mut cd.cluster, &cd.data, &l_basis, request, &sample_widths, floor, &mut cd.metrics)?;
        cd.metrics.record_master(n);
        base.iter().zip(&change).map(|(a, b)| a + b).collect()
    };
    let phi = model.loss.derivatives(&xw, &cd.y);
    cd.metrics.record_master(2 * n);

    // Workers step their encoded parameters on U; the master decodes w_{f(U)}.
    // Held entries are bounded by ‖w‖ since the rows of R⁺ have norm at most one.
    let floor = norm(&state.w) + alpha * cd.params_scale * norm(&phi);
    let request = Request::Blocks { blocks: blocks.to_vec(), vector: phi, scale: alpha };
    let (held, params) = (&cd.held, &cd.params);
    let round = cd.cluster.run_round(&request, |i, req, fl| match req {
        Request::Blocks { blocks, vector, scale } => {
            let share = &params[i].matrix;
            if vector.len() != share.cols() {
                return Err(Error::DimensionMismatch(format!("vector has length {}, expected {}", vector.len(), share.cols())));
            }
            fl.add(blocks.len() * (2 * share.cols() + 2));
            Ok(blocks.iter().map(|&u| held[i][u] - scale * dot(share.row(u), vector)).collect())
        }
        _ => Err(Error::InvalidParameter("coordinate descent workers expect a block request".into())),
    })?;
    cd.metrics.record_round(&round);
    let widths: Vec<usize> = blocks.iter().map(|&b| cd.codebook.params.width(b)).collect();
    let updated = finish_decode(&cd.cluster, &cd.codebook.r_basis, &round, &widths, floor, &mut cd.metrics)?;
    for (i, sent) in round.honest.iter().enumerate() {
        for (k, &u) in blocks.iter().enumerate() {
            cd.held[i][u] = sent[k];
        }
    }

    let mut w = state.w.clone();
    for (c, val) in cd.codebook.coords(blocks).into_iter().zip(updated) {
        w[c] = val;
    }
    Ok(GlmState { w, iteration: state.iteration + 1, cache: Some(XwCache { point: state.w.clone(), xw }) })
}
