//! Coded optimizers (two-round proximal gradient descent, coordinate descent
//! with the parameter-side code, data-recovery SGD) and their serial oracles.

pub mod cd;
pub mod gd;
pub mod model;
pub mod serial;
pub mod sgd;

pub use cd::{cd_iteration, random_blocks, round_robin, CdCodebook, CodedCd};
pub use gd::{coded_gradient, pgd_step, CodedGlm};
pub use model::{default_step, prox, GlmState, Loss, ModelSpec, Regularizer, StepSchedule, XwCache};
pub use serial::{serial_cd, serial_gradient, serial_pgd, serial_sgd};
pub use sgd::{sgd_step, sgd_step_at, sgd_step_with, CodedSgd};

use crate::cluster::{Cluster, Request, Round};
use crate::encoder::EncodedShare;
use crate::error::{Error, Result};
use crate::linalg::Flops;
use crate::mvp::{decode_blocks_with_floor, sparse_product, worker_product, DecodeOutcome};
use crate::codec::NullBasis;
use std::time::{Duration, Instant};

/// Work and time accumulated since the last [`Metrics::take`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    /// Flops per worker.
    pub worker_flops: Vec<u64>,
    pub master_flops: u64,
    pub worker_time: Vec<Duration>,
    pub master_time: Duration,
    pub rounds: usize,
    /// Corrupt sets identified by each decode, in order.
    pub corrupt_sets: Vec<Vec<usize>>,
}

impl Metrics {
    fn new(m: usize) -> Self {
        Metrics { worker_flops: vec![0; m], worker_time: vec![Duration::ZERO; m], ..Default::default() }
    }

    fn record_round(&mut self, round: &Round) {
        for (acc, f) in self.worker_flops.iter_mut().zip(&round.worker_flops) {
            *acc += f;
        }
        for (acc, t) in self.worker_time.iter_mut().zip(&round.worker_times) {
            *acc += *t;
        }
        self.rounds += 1;
    }

    fn record_decode(&mut self, flops: Flops, elapsed: Duration, outcome: &DecodeOutcome) {
        self.master_flops += flops.get();
        self.master_time += elapsed;
        self.corrupt_sets.push(outcome.corrupt.clone());
    }

    fn record_master(&mut self, flops: usize) {
        self.master_flops += flops as u64;
    }

    pub fn max_worker_flops(&self) -> u64 {
        self.worker_flops.iter().copied().max().unwrap_or(0)
    }

    pub fn max_worker_time(&self) -> Duration {
        self.worker_time.iter().copied().max().unwrap_or_default()
    }

    /// Returns the accumulated metrics and resets the counters.
    pub fn take(&mut self) -> Metrics {
        let m = self.worker_flops.len();
        std::mem::replace(self, Metrics::new(m))
    }
}

/// One coded product round: broadcast, worker products on `shares`, decode.
fn coded_product(
    cluster: &mut Cluster,
    shares: &[EncodedShare],
    basis: &NullBasis,
    request: Request,
    widths: &[usize],
    floor: f64,
    metrics: &mut Metrics,
) -> Result<Vec<f64>> {
    let round = cluster.run_round(&request, |i, req, fl| match req {
        Request::Vector(v) => worker_product(&shares[i], v, fl),
        Request::Sparse { indices, values } => sparse_product(&shares[i], indices, values, fl),
        Request::Index { index, bound } => {
            let sh = &shares[i];
            if *index >= sh.cols() || *bound != sh.cols() {
                return Err(Error::OutOfRange { index: *index, len: sh.cols() });
            }
            fl.add(sh.matrix.rows());
            Ok(sh.matrix.column(*index))
        }
        Request::Blocks { .. } => Err(Error::InvalidParameter("block request sent to a product round".into())),
    })?;
    metrics.record_round(&round);
    finish_decode(cluster, basis, &round, widths, floor, metrics)
}

fn finish_decode(cluster: &Cluster, basis: &NullBasis, round: &Round, widths: &[usize], floor: f64, metrics: &mut Metrics) -> Result<Vec<f64>> {
    let mut flops = Flops::default();
    let start = Instant::now();
    let seed = cluster.decode_seed(round.index);
    let outcome = decode_blocks_with_floor(&round.responses, cluster.locator(), basis, widths, floor, seed, &mut flops)?;
    metrics.record_decode(flops, start.elapsed(), &outcome);
    Ok(outcome.product)
}

/// Largest row norm over all shares: with `‖v‖` it bounds every term a
/// worker sums, which sets the decoder's noise floor.
fn row_scale(shares: &[EncodedShare]) -> f64 {
    shares
        .iter()
        .flat_map(|sh| (0..sh.matrix.rows()).map(move |r| crate::linalg::norm(sh.matrix.row(r))))
        .fold(0.0, f64::max)
}
