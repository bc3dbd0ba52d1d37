//! Byzantine-resilient matrix-vector multiplication: local worker products,
//! corrupt-worker localization and exact recovery of `A·v`.

use crate::codec::{self, chebyshev_values, ErrorLocatorMatrix, NullBasis, DEFAULT_TOL, EXHAUSTIVE_MAX_WORKERS};
use crate::encoder::{BlockGeometry, EncodedShare};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Flops, Matrix, Pinv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Relative bound on the per-block recovery residual of accepted decodes.
pub const RESIDUAL_GATE: f64 = 1e-8;

/// Extra attempts with fresh combination weights before giving up.
pub const DECODE_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerResponse {
    pub worker: usize,
    /// Claimed `S_i A v`; `None` for a straggler.
    pub payload: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub product: Vec<f64>,
    /// Workers identified as corrupt, sorted.
    pub corrupt: Vec<usize>,
    /// Workers that did not respond, sorted.
    pub erased: Vec<usize>,
    /// Largest relative block residual on the honest set.
    pub residual: f64,
    /// Seed of the combination weights that produced this outcome.
    pub seed: u64,
}

pub fn worker_product(share: &EncodedShare, v: &[f64], flops: &mut Flops) -> Result<Vec<f64>> {
    if v.len() != share.cols() {
        return Err(Error::DimensionMismatch(format!("vector has length {}, share has {} columns", v.len(), share.cols())));
    }
    flops.add(2 * share.matrix.rows() * share.cols());
    Ok(share.matrix.mul_vec(v))
}

/// Product with a vector that is zero outside `indices`.
pub fn sparse_product(share: &EncodedShare, indices: &[usize], values: &[f64], flops: &mut Flops) -> Result<Vec<f64>> {
    if indices.len() != values.len() {
        return Err(Error::DimensionMismatch(format!("{} indices but {} values", indices.len(), values.len())));
    }
    let cols = share.cols();
    if let Some(&bad) = indices.iter().find(|&&c| c >= cols) {
        return Err(Error::OutOfRange { index: bad, len: cols });
    }
    let m = &share.matrix;
    flops.add(2 * m.rows() * indices.len());
    Ok((0..m.rows())
        .map(|r| {
            let row = m.row(r);
            indices.iter().zip(values).map(|(&c, &x)| row[c] * x).sum()
        })
        .collect())
}

/// Decodes `A·v` from one response per worker, blocks laid out by `geometry`.
pub fn decode(
    responses: &[WorkerResponse],
    locator: &ErrorLocatorMatrix,
    basis: &NullBasis,
    geometry: &BlockGeometry,
    seed: u64,
    flops: &mut Flops,
) -> Result<DecodeOutcome> {
    decode_blocks(responses, locator, basis, &geometry.widths(), seed, flops)
}

/// Decodes a product whose payload entry `j` encodes a block of `widths[j]`
/// coordinates. Used directly when only a subset of blocks is requested.
pub fn decode_blocks(
    responses: &[WorkerResponse],
    locator: &ErrorLocatorMatrix,
    basis: &NullBasis,
    widths: &[usize],
    seed: u64,
    flops: &mut Flops,
) -> Result<DecodeOutcome> {
    decode_blocks_with_floor(responses, locator, basis, widths, 0.0, seed, flops)
}

/// [`decode_blocks`] with `floor`, a bound on the magnitude of the terms
/// summed into each honest payload entry (for `S_i A v`, the largest row norm
/// of the shares times `‖v‖`). Tolerances are taken relative to at least
/// this scale, so products that cancel to nearly zero are not mistaken for
/// corruption. Deviations below `DEFAULT_TOL · floor` go undetected.
pub fn decode_blocks_with_floor(
    responses: &[WorkerResponse],
    locator: &ErrorLocatorMatrix,
    basis: &NullBasis,
    widths: &[usize],
    floor: f64,
    seed: u64,
    flops: &mut Flops,
) -> Result<DecodeOutcome> {
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise floor {floor} must be finite and nonnegative")));
    }
    let m = locator.workers();
    let q = basis.q();
    if basis.workers() != m || q != locator.q() {
        return Err(Error::DimensionMismatch("basis does not match locator".into()));
    }
    if let Some(&w) = widths.iter().find(|&&w| w == 0 || w > q) {
        return Err(Error::DimensionMismatch(format!("block width {w} outside 1..={q}")));
    }
    if responses.len() != m {
        return Err(Error::DimensionMismatch(format!("{} responses for {m} workers", responses.len())));
    }
    let p = widths.len();
    let mut payloads: Vec<Option<&[f64]>> = vec![None; m];
    let mut seen = vec![false; m];
    for r in responses {
        if r.worker >= m {
            return Err(Error::OutOfRange { index: r.worker, len: m });
        }
        if std::mem::replace(&mut seen[r.worker], true) {
            return Err(Error::DimensionMismatch(format!("worker {} responded twice", r.worker)));
        }
        if let Some(pl) = &r.payload {
            if pl.len() != p {
                return Err(Error::DimensionMismatch(format!("worker {} sent {} entries, expected {p}", r.worker, pl.len())));
            }
        }
        payloads[r.worker] = r.payload.as_deref();
    }

    let erased: Vec<usize> = (0..m).filter(|&i| payloads[i].is_none()).collect();
    let present: Vec<usize> = (0..m).filter(|&i| payloads[i].is_some()).collect();
    let k = locator.rows();
    if erased.len() > k {
        return Err(Error::BudgetExceeded(format!("{} stragglers exceed the {k} erasures the code tolerates", erased.len())));
    }
    let kk = k - erased.len();
    let max_errors = locator.t().min(kk / 2);

    // Parity checks of the code punctured at the erasures: a null vector of F
    // has entries w_i p(z_i), and Σ_{i∉E} T_a(x_i) Ω(z_i) w_i p(z_i) = 0 for
    // a < k − |E|, where Ω is the erasure locator.
    let z = locator.nodes();
    let mut omega: Vec<f64> = present.iter().map(|&i| erased.iter().map(|&e| z[i] - z[e]).product()).collect();
    let omax = omega.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    omega.iter_mut().for_each(|w| *w /= omax);
    let xs: Vec<f64> = present.iter().map(|&i| locator.cheb_coord(i)).collect();
    let cheb: Vec<Vec<f64>> = xs.iter().map(|&x| chebyshev_values(x, kk)).collect();

    let mut failure = String::from("no consistent error pattern within the budget");
    for attempt in 0..=DECODE_RETRIES {
        let attempt_seed = seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let alpha: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();

        // Combining the received vectors first and taking one syndrome is
        // the same as combining the p block syndromes.
        let weighted: Vec<f64> = present
            .iter()
            .zip(&omega)
            .map(|(&i, &w)| w * dot(&alpha, payloads[i].unwrap()))
            .collect();
        flops.add(2 * p * present.len() + present.len());
        let mut moments = vec![0.0; kk];
        for (wv, t) in weighted.iter().zip(&cheb) {
            for (c, ta) in moments.iter_mut().zip(t) {
                *c += wv * ta;
            }
        }
        flops.add(2 * kk * present.len());
        let alpha_l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        let term_scale = floor * alpha_l1 * omega.iter().map(|w| w.abs()).sum::<f64>();
        let scale = weighted.iter().map(|v| v.abs()).sum::<f64>().max(term_scale);

        let located = codec::locate(&xs, &moments, max_errors, DEFAULT_TOL, scale, present.len() <= EXHAUSTIVE_MAX_WORKERS);
        flops.add((max_errors + 2) * (kk + 1).pow(3));
        if located.failed {
            continue;
        }
        let corrupt: Vec<usize> = located.support.iter().map(|&r| present[r]).collect();
        let honest: Vec<usize> = present.iter().copied().filter(|i| !corrupt.contains(i)).collect();
        let (product, residual) = recover(&payloads, &honest, basis, widths, floor, flops)?;
        if residual <= RESIDUAL_GATE {
            return Ok(DecodeOutcome { product, corrupt, erased, residual, seed: attempt_seed });
        }
        failure = format!("recovery residual {residual:.3e} above gate with corrupt set {corrupt:?}");
    }
    Err(Error::BudgetExceeded(failure))
}

/// Solves the per-block systems `F_T x = r_T` on the honest rows, reusing one
/// pseudo-inverse per distinct block width.
fn recover(
    payloads: &[Option<&[f64]>],
    honest: &[usize],
    basis: &NullBasis,
    widths: &[usize],
    floor: f64,
    flops: &mut Flops,
) -> Result<(Vec<f64>, f64)> {
    let nt = honest.len();
    let mut solvers: Vec<(usize, Matrix, Pinv)> = Vec::new();
    for &w in widths {
        if solvers.iter().all(|s| s.0 != w) {
            let ft = basis.matrix().select(honest, w);
            let pinv = Pinv::new(&ft).ok_or_else(|| Error::RankDeficient(format!("{nt} honest rows, width {w}")))?;
            flops.add(4 * nt * w * w);
            solvers.push((w, ft, pinv));
        }
    }
    let mut product = Vec::with_capacity(widths.iter().sum());
    let mut worst = 0.0f64;
    let mut rt = vec![0.0; nt];
    for (j, &w) in widths.iter().enumerate() {
        for (slot, &i) in rt.iter_mut().zip(honest) {
            *slot = payloads[i].unwrap()[j];
        }
        let (_, ft, pinv) = solvers.iter().find(|s| s.0 == w).unwrap();
        let x = pinv.apply(&rt);
        let fitted = ft.mul_vec(&x);
        flops.add(4 * w * nt);
        let resid = norm(&crate::linalg::sub(&fitted, &rt));
        let scale = norm(&rt).max(floor * (nt as f64).sqrt());
        let rel = if resid == 0.0 { 0.0 } else if scale == 0.0 { f64::INFINITY } else { resid / scale };
        worst = worst.max(rel);
        product.extend_from_slice(&x);
    }
    Ok((product, worst))
}
