//! Real-number error locator, sparse support recovery and the null-space
//! bases that become the encoding matrices.
//!
//! The locator `F` is the `k × m` Vandermonde matrix `F[j][i] = z_i^j` with
//! `k = 2t`. Syndromes are decoded in a row-equivalent Chebyshev basis
//! (`T_a(x_i)` with `x` the affine image of the nodes in `[-1, 1]`), which has
//! the same null space as `F` but stays well conditioned at the worker counts
//! this crate targets.

use crate::error::{Error, Result};
use crate::linalg::{self, norm, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Default relative tolerance for syndrome consistency checks.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Exhaustive subset search is used as a fallback up to this many candidates.
pub const EXHAUSTIVE_MAX_WORKERS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeScheme {
    /// Chebyshev points of the first kind, mapped into `[0.2, 1]`.
    Chebyshev,
    /// `z_i = i / m`.
    Equispaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisVariant {
    /// Identity block in the last `q` rows; only the first `k` rows are dense.
    RrefSparse,
    /// Orthonormal columns (`BᵀB = I`).
    Orthonormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorLocatorMatrix {
    nodes: Vec<f64>,
    k: usize,
    t: usize,
    /// Interval mapped affinely onto `[-1, 1]` for the Chebyshev rows.
    interval: (f64, f64),
}

impl ErrorLocatorMatrix {
    /// Builds the locator for `m` workers tolerating `t` corrupt ones.
    ///
    /// With the Chebyshev scheme the last `m − 2t` workers (the identity block
    /// of the RREF basis) receive nodes spread evenly across the interval; the
    /// remaining nodes go to the first `2t` workers. This keeps every honest
    /// restriction of the basis well conditioned.
    pub fn build(m: usize, t: usize, scheme: NodeScheme) -> Result<Self> {
        check_threshold(m, t)?;
        let k = 2 * t;
        match scheme {
            NodeScheme::Equispaced => {
                let nodes = (1..=m).map(|i| i as f64 / m as f64).collect();
                Self::with_interval(nodes, t, None)
            }
            NodeScheme::Chebyshev => {
                let sorted: Vec<f64> = (1..=m)
                    .map(|i| {
                        let theta = (2 * i - 1) as f64 * std::f64::consts::PI / (2 * m) as f64;
                        (theta.cos() + 1.5) / 2.5
                    })
                    .collect();
                let q = m - k;
                let free = spread_indices(m, q);
                let mut is_free = vec![false; m];
                for &f in &free {
                    is_free[f] = true;
                }
                let mut nodes: Vec<f64> = (0..m).filter(|&i| !is_free[i]).map(|i| sorted[i]).collect();
                nodes.extend(free.iter().map(|&i| sorted[i]));
                Self::with_interval(nodes, t, Some((0.2, 1.0)))
            }
        }
    }

    /// Locator over caller-chosen nodes, in worker order.
    pub fn from_nodes(nodes: Vec<f64>, t: usize) -> Result<Self> {
        check_threshold(nodes.len(), t)?;
        Self::with_interval(nodes, t, None)
    }

    fn with_interval(nodes: Vec<f64>, t: usize, interval: Option<(f64, f64)>) -> Result<Self> {
        for (i, &z) in nodes.iter().enumerate() {
            if !z.is_finite() || z == 0.0 {
                return Err(Error::InvalidNodes(format!("node {i} is {z}; nodes must be finite and nonzero")));
            }
            if nodes[..i].contains(&z) {
                return Err(Error::InvalidNodes(format!("node {z} repeated")));
            }
        }
        let interval = interval.unwrap_or_else(|| {
            let lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        });
        Ok(ErrorLocatorMatrix { nodes, k: 2 * t, t, interval })
    }

    pub fn workers(&self) -> usize {
        self.nodes.len()
    }

    /// Number of syndrome rows, `2t`.
    pub fn rows(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Null-space dimension `m − k`.
    pub fn q(&self) -> usize {
        self.workers() - self.k
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.nodes[col].powi(row as i32)
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.k, self.workers(), |j, i| self.entry(j, i))
    }

    /// Monomial syndrome `F·v`.
    pub fn syndrome(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.workers());
        let mut out = vec![0.0; self.k];
        for (&z, &vi) in self.nodes.iter().zip(v) {
            let mut p = 1.0;
            for o in out.iter_mut() {
                *o += p * vi;
                p *= z;
            }
        }
        out
    }

    /// Node `i` mapped into `[-1, 1]`.
    pub fn cheb_coord(&self, i: usize) -> f64 {
        let (lo, hi) = self.interval;
        (2.0 * self.nodes[i] - lo - hi) / (hi - lo)
    }

    pub fn cheb_coords(&self) -> Vec<f64> {
        (0..self.workers()).map(|i| self.cheb_coord(i)).collect()
    }

    /// Chebyshev-moment syndrome `Σ_i v_i T_a(x_i)`, `a < k`. Row-equivalent
    /// to [`Self::syndrome`].
    pub fn stable_syndrome(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.workers());
        let mut out = vec![0.0; self.k];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, ta) in out.iter_mut().zip(chebyshev_values(self.cheb_coord(i), self.k)) {
                *o += vi * ta;
            }
        }
        out
    }

    /// Converts a monomial syndrome into Chebyshev moments.
    pub fn monomial_to_stable(&self, s: &[f64]) -> Vec<f64> {
        let c = self.change_of_basis();
        c.mul_vec(s)
    }

    /// Lower-triangular `C` with `T_a(x(z)) = Σ_j C[a][j] z^j`.
    fn change_of_basis(&self) -> Matrix {
        let k = self.k;
        let (lo, hi) = self.interval;
        let alpha = 2.0 / (hi - lo);
        let beta = -(hi + lo) / (hi - lo);
        let mut c = Matrix::zeros(k, k);
        if k == 0 {
            return c;
        }
        c[(0, 0)] = 1.0;
        if k > 1 {
            c[(1, 0)] = beta;
            c[(1, 1)] = alpha;
        }
        for a in 2..k {
            for j in 0..=a {
                let mut v = 2.0 * beta * c[(a - 1, j)] - c[(a - 2, j)];
                if j > 0 {
                    v += 2.0 * alpha * c[(a - 1, j - 1)];
                }
                c[(a, j)] = v;
            }
        }
        c
    }
}

fn check_threshold(m: usize, t: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidWorkerCount(m));
    }
    if 2 * t + 1 > m {
        return Err(Error::InvalidThreshold { m, t });
    }
    Ok(())
}

/// `q` distinct indices spread evenly over `0..m`, sorted.
fn spread_indices(m: usize, q: usize) -> Vec<usize> {
    match q {
        0 => vec![],
        1 => vec![0],
        _ => (0..q).map(|j| ((j * (m - 1)) as f64 / (q - 1) as f64).round() as usize).collect(),
    }
}

/// `T_0(x), …, T_{n-1}(x)`.
pub fn chebyshev_values(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(1.0);
    }
    if n > 1 {
        out.push(x);
    }
    for a in 2..n {
        let next = 2.0 * x * out[a - 1] - out[a - 2];
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullBasis {
    matrix: Matrix,
    variant: BasisVariant,
}

impl NullBasis {
    pub fn new(locator: &ErrorLocatorMatrix, variant: BasisVariant) -> Self {
        let rref = rref_basis(locator);
        let matrix = match variant {
            BasisVariant::RrefSparse => rref,
            BasisVariant::Orthonormal => {
                let q = rref.to_nalgebra().qr().q();
                Matrix::from_nalgebra(&q)
            }
        };
        NullBasis { matrix, variant }
    }

    pub fn variant(&self) -> BasisVariant {
        self.variant
    }

    pub fn q(&self) -> usize {
        self.matrix.cols()
    }

    pub fn workers(&self) -> usize {
        self.matrix.rows()
    }

    /// Worker `i`'s coefficient row `(b_{1i}, …, b_{qi})`.
    pub fn coeffs(&self, worker: usize) -> &[f64] {
        self.matrix.row(worker)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

pub fn null_basis(locator: &ErrorLocatorMatrix, variant: BasisVariant) -> NullBasis {
    NullBasis::new(locator, variant)
}

/// Null basis of `F` with an identity block on the last `q` workers.
///
/// Every null vector of a Vandermonde matrix has the form `w ⊙ p(z)` with
/// `w_i = 1/∏_{j≠i}(z_i − z_j)` and `deg p < q`. Column `j` picks `p` as the
/// Lagrange polynomial of free node `j`, scaled so the free entry is one.
fn rref_basis(locator: &ErrorLocatorMatrix) -> Matrix {
    let z = locator.nodes();
    let m = z.len();
    let k = locator.rows();
    let q = m - k;
    // log|w_i| and sign(w_i)
    let weights: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let (mut log, mut sign) = (0.0, 1.0);
            for j in (0..m).filter(|&j| j != i) {
                let d = z[i] - z[j];
                log -= d.abs().ln();
                if d < 0.0 {
                    sign = -sign;
                }
            }
            (log, sign)
        })
        .collect();
    let mut b = Matrix::zeros(m, q);
    for col in 0..q {
        let f = k + col;
        b[(f, col)] = 1.0;
        for i in 0..k {
            let (mut log, mut sign) = (weights[i].0 - weights[f].0, weights[i].1 * weights[f].1);
            for l in (k..m).filter(|&l| l != f) {
                let ratio = (z[i] - z[l]) / (z[f] - z[l]);
                log += ratio.abs().ln();
                if ratio < 0.0 {
                    sign = -sign;
                }
            }
            b[(i, col)] = sign * log.exp();
        }
    }
    b
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    /// Sorted worker indices.
    pub support: Vec<usize>,
    /// Recovered error values, one per worker (zero off the support).
    pub magnitudes: Option<Vec<f64>>,
    pub residual: f64,
    pub declared_failure: bool,
}

impl SupportReport {
    fn empty() -> Self {
        SupportReport { support: vec![], magnitudes: None, residual: 0.0, declared_failure: false }
    }
}

/// Finds the sparsest `e` (at most `t` nonzeros) with `F·e = syndrome`.
pub fn recover_support(locator: &ErrorLocatorMatrix, syndrome: &[f64], t: usize, tol: f64) -> Result<SupportReport> {
    let k = locator.rows();
    if syndrome.len() != k {
        return Err(Error::DimensionMismatch(format!("syndrome has length {}, locator has {k} rows", syndrome.len())));
    }
    let m = locator.workers();
    let snorm = norm(syndrome);
    if k == 0 || snorm == 0.0 {
        let mut r = SupportReport::empty();
        r.magnitudes = Some(vec![0.0; m]);
        return Ok(r);
    }
    let moments = locator.monomial_to_stable(syndrome);
    let xs = locator.cheb_coords();
    let max_errors = t.min(k / 2);
    let located = locate(&xs, &moments, max_errors, tol, norm(&moments), m <= EXHAUSTIVE_MAX_WORKERS);
    if located.failed {
        return Ok(SupportReport {
            support: vec![],
            magnitudes: None,
            residual: located.residual,
            declared_failure: true,
        });
    }
    // Refit the magnitudes against the monomial rows so the reported
    // residual is the one callers can check.
    let fit = fit_monomial(locator, &located.support, syndrome);
    let (support, values, residual) = match fit {
        Some((values, residual)) => {
            let keep: Vec<usize> = (0..values.len()).filter(|&j| values[j].abs() >= tol * snorm).collect();
            if keep.len() == values.len() {
                (located.support, values, residual)
            } else {
                let support: Vec<usize> = keep.iter().map(|&j| located.support[j]).collect();
                let (values, residual) = fit_monomial(locator, &support, syndrome).unwrap_or((vec![], f64::INFINITY));
                (support, values, residual)
            }
        }
        None => (vec![], vec![], f64::INFINITY),
    };
    if residual > tol * snorm {
        return Ok(SupportReport { support: vec![], magnitudes: None, residual, declared_failure: true });
    }
    let mut magnitudes = vec![0.0; m];
    for (&i, &v) in support.iter().zip(&values) {
        magnitudes[i] = v;
    }
    Ok(SupportReport { support, magnitudes: Some(magnitudes), residual, declared_failure: false })
}

fn fit_monomial(locator: &ErrorLocatorMatrix, support: &[usize], syndrome: &[f64]) -> Option<(Vec<f64>, f64)> {
    if support.is_empty() {
        return Some((vec![], norm(syndrome)));
    }
    let g = Matrix::from_fn(locator.rows(), support.len(), |j, s| locator.entry(j, support[s]));
    let values = linalg::lstsq(&g, syndrome)?;
    let residual = norm(&linalg::sub(&g.mul_vec(&values), syndrome));
    Some((values, residual))
}

/// Combines `p` syndromes with i.i.d. standard Gaussian weights and recovers
/// the support of the combination, which is the union of the row supports
/// with probability one.
pub fn joint_support(locator: &ErrorLocatorMatrix, syndromes: &Matrix, seed: u64) -> Result<SupportReport> {
    if syndromes.cols() != locator.rows() {
        return Err(Error::DimensionMismatch(format!(
            "syndromes have {} columns, locator has {} rows",
            syndromes.cols(),
            locator.rows()
        )));
    }
    let combined = if syndromes.rows() == 1 {
        syndromes.row(0).to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = vec![0.0; locator.rows()];
        for j in 0..syndromes.rows() {
            let alpha: f64 = StandardNormal.sample(&mut rng);
            linalg::axpy(alpha, syndromes.row(j), &mut acc);
        }
        acc
    };
    recover_support(locator, &combined, locator.t(), DEFAULT_TOL)
}

/// Output of the Chebyshev-moment locator. Indices refer to the candidate list.
#[derive(Debug, Clone)]
pub(crate) struct Located {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub residual: f64,
    pub failed: bool,
}

/// Finds the fewest candidates `S` (at most `max_errors`) and values `g` with
/// `Σ_{s∈S} g_s T_a(x_s) = moments[a]` to within `tol·scale`.
///
/// For each hypothesis `ν`, the annihilator `Λ = Σ_b λ_b T_b` of the error
/// nodes satisfies `Σ_b λ_b (c_{a+b} + c_{|a−b|}) / 2 = 0`; its coefficients are
/// the smallest right singular vector of that system, and the error nodes are
/// where `|Λ|` is smallest. The first hypothesis tried is the numerical rank
/// of the full moment matrix, then `ν = 0, 1, …`.
pub(crate) fn locate(xs: &[f64], moments: &[f64], max_errors: usize, tol: f64, scale: f64, exhaustive: bool) -> Located {
    let kk = moments.len();
    let max_errors = max_errors.min(kk / 2).min(xs.len());
    let threshold = tol * scale.max(f64::MIN_POSITIVE);
    let cheb: Vec<Vec<f64>> = xs.iter().map(|&x| chebyshev_values(x, kk)).collect();

    let mut order = Vec::with_capacity(max_errors + 1);
    if max_errors > 0 {
        let full = moment_matrix(moments, max_errors);
        let guess = linalg::singular_values(&full).iter().filter(|&&sv| sv > threshold).count();
        order.push(guess.min(max_errors));
    }
    let first = order.first().copied();
    order.extend((0..=max_errors).filter(|&nu| first != Some(nu)));

    let mut best_residual = f64::INFINITY;
    for nu in order {
        let candidate = try_hypothesis(&cheb, moments, nu, max_errors, threshold);
        if let Some(found) = candidate {
            if found.residual <= threshold {
                return prune(&cheb, moments, found, threshold);
            }
            best_residual = best_residual.min(found.residual);
        }
    }
    if exhaustive {
        if let Some(found) = exhaustive_search(&cheb, moments, max_errors, threshold) {
            return found;
        }
    }
    Located { support: vec![], values: vec![], residual: best_residual, failed: true }
}

/// Drops values below the detection floor and refits on what remains.
fn prune(cheb: &[Vec<f64>], moments: &[f64], found: Located, threshold: f64) -> Located {
    let keep: Vec<usize> = found
        .support
        .iter()
        .zip(&found.values)
        .filter(|(_, v)| v.abs() >= threshold)
        .map(|(&i, _)| i)
        .collect();
    if keep.len() == found.support.len() {
        return found;
    }
    match fit_chebyshev(cheb, moments, keep) {
        Some(refit) if refit.residual <= threshold => refit,
        _ => found,
    }
}

fn moment_matrix(c: &[f64], nu: usize) -> Matrix {
    let kk = c.len();
    Matrix::from_fn(kk - nu, nu + 1, |a, b| 0.5 * (c[a + b] + c[a.abs_diff(b)]))
}

fn try_hypothesis(cheb: &[Vec<f64>], moments: &[f64], nu: usize, max_errors: usize, threshold: f64) -> Option<Located> {
    if nu == 0 {
        return Some(Located { support: vec![], values: vec![], residual: norm(moments), failed: false });
    }
    let (lambda, _) = linalg::smallest_right_singular(&moment_matrix(moments, nu));
    let mut scored: Vec<(f64, usize)> = cheb
        .iter()
        .enumerate()
        .map(|(i, t)| (linalg::dot(&lambda, &t[..=nu]).abs(), i))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let pick = |width: usize| {
        let mut support: Vec<usize> = scored[..width].iter().map(|&(_, i)| i).collect();
        support.sort_unstable();
        fit_chebyshev(cheb, moments, support)
    };
    let narrow = pick(nu);
    if narrow.as_ref().is_some_and(|f| f.residual <= threshold) {
        return narrow;
    }
    // Nodes next to the error nodes can make |Λ| almost vanish too. Fit over
    // up to 2ν of the smallest (still overdetermined while fewer than k), then
    // keep the fewest largest-magnitude candidates that still explain the
    // moments.
    let wide_width = (2 * nu).min(moments.len() - 1).min(scored.len());
    let wide = match pick(wide_width) {
        Some(w) if w.residual <= threshold => w,
        other => return [narrow, other].into_iter().flatten().min_by(|a, b| a.residual.total_cmp(&b.residual)),
    };
    let mut ranked: Vec<(f64, usize)> = wide.values.iter().zip(&wide.support).map(|(v, &i)| (v.abs(), i)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for j in 1..=max_errors.min(ranked.len()) {
        let mut support: Vec<usize> = ranked[..j].iter().map(|&(_, i)| i).collect();
        support.sort_unstable();
        if let Some(found) = fit_chebyshev(cheb, moments, support) {
            if found.residual <= threshold {
                return Some(found);
            }
        }
    }
    narrow
}

fn fit_chebyshev(cheb: &[Vec<f64>], moments: &[f64], support: Vec<usize>) -> Option<Located> {
    let g = Matrix::from_fn(moments.len(), support.len(), |a, s| cheb[support[s]][a]);
    let values = linalg::lstsq(&g, moments)?;
    let residual = norm(&linalg::sub(&g.mul_vec(&values), moments));
    Some(Located { support, values, residual, failed: false })
}

fn exhaustive_search(cheb: &[Vec<f64>], moments: &[f64], max_errors: usize, threshold: f64) -> Option<Located> {
    let n = cheb.len();
    for size in 0..=max_errors {
        let mut best: Option<Located> = None;
        for_each_subset(n, size, &mut |subset| {
            if let Some(found) = fit_chebyshev(cheb, moments, subset.to_vec()) {
                if best.as_ref().is_none_or(|b| found.residual < b.residual) {
                    best = Some(found);
                }
            }
        });
        if let Some(found) = best {
            if found.residual <= threshold {
                return Some(found);
            }
        }
    }
    None
}

/// Calls `f` on every sorted `size`-subset of `0..n`.
pub fn for_each_subset(n: usize, size: usize, f: &mut dyn FnMut(&[usize])) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - size {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
