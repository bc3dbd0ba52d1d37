//! Uncoded single-machine reference implementations used as oracles.

use super::model::{prox, Loss, ModelSpec, Regularizer};
use crate::encoder::BlockGeometry;
use crate::linalg::{dot, Matrix};

/// `Xᵀ f′(Xw)`.
pub fn serial_gradient(x: &Matrix, y: &[f64], w: &[f64], loss: Loss) -> Vec<f64> {
    let u = x.mul_vec(w);
    x.tr_mul_vec(&loss.derivatives(&u, y))
}

/// Proximal gradient descent; returns `w⁰, …, w^T`.
pub fn serial_pgd(x: &Matrix, y: &[f64], w0: &[f64], model: &ModelSpec, iterations: usize) -> Vec<Vec<f64>> {
    let mut out = vec![w0.to_vec()];
    let mut w = w0.to_vec();
    for it in 0..iterations {
        let alpha = model.step.at(it);
        let g = serial_gradient(x, y, &w, model.loss);
        let z: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        w = prox(&model.regularizer, &z, alpha);
        out.push(w.clone());
    }
    out
}

/// Block coordinate descent: iteration `t` updates the coordinates of blocks
/// `schedule[t]` (blocks of `geometry`) by a gradient step.
pub fn serial_cd(
    x: &Matrix,
    y: &[f64],
    w0: &[f64],
    model: &ModelSpec,
    geometry: &BlockGeometry,
    schedule: &[Vec<usize>],
) -> Vec<Vec<f64>> {
    assert_eq!(model.regularizer, Regularizer::None, "coordinate descent runs unregularized");
    let mut out = vec![w0.to_vec()];
    let mut w = w0.to_vec();
    for (it, blocks) in schedule.iter().enumerate() {
        let alpha = model.step.at(it);
        let phi = model.loss.derivatives(&x.mul_vec(&w), y);
        for &b in blocks {
            for c in geometry.range(b) {
                let g: f64 = (0..x.rows()).map(|i| x[(i, c)] * phi[i]).sum();
                w[c] -= alpha * g;
            }
        }
        out.push(w.clone());
    }
    out
}

/// SGD over the given sample indices; returns `w⁰, …, w^T`.
pub fn serial_sgd(x: &Matrix, y: &[f64], w0: &[f64], model: &ModelSpec, indices: &[usize]) -> Vec<Vec<f64>> {
    let mut out = vec![w0.to_vec()];
    let mut w = w0.to_vec();
    for (it, &r) in indices.iter().enumerate() {
        let alpha = model.step.at(it);
        let xr = x.row(r);
        let scale = model.loss.derivative(dot(xr, &w), y[r]);
        let z: Vec<f64> = w.iter().zip(xr).map(|(a, b)| a - alpha * scale * b).collect();
        w = prox(&model.regularizer, &z, alpha);
        out.push(w.clone());
    }
    out
}
