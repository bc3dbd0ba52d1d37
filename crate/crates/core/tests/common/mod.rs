use nalgebra::{DMatrix, DVector};

/// Smallest support (size ≤ t) whose locator columns reproduce the syndrome,
/// by brute-force least squares over every subset.
pub fn exhaustive_support(f: &DMatrix<f64>, s: &DVector<f64>, t: usize) -> Option<Vec<usize>> {
    let m = f.ncols();
    for size in 0..=t {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let resid = if size == 0 {
                s.norm()
            } else {
                let cols: Vec<DVector<f64>> = idx.iter().map(|&i| f.column(i).into_owned()).collect();
                let g = DMatrix::from_columns(&cols);
                let x = g.clone().svd(true, true).solve(s, 1e-14).unwrap();
                (g * x - s).norm()
            };
            if best.as_ref().is_none_or(|(r, _)| resid < *r) {
                best = Some((resid, idx.clone()));
            }
            let mut i = size;
            while i > 0 && idx[i - 1] == m - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
        let (resid, support) = best.unwrap();
        if resid <= 1e-9 * s.norm() {
            return Some(support);
        }
    }
    None
}
