use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `ℓ(u; y) = ½(u − y)²`.
    Squared,
    /// `ℓ(u; y) = −y log σ(u) − (1 − y) log(1 − σ(u))` with `y ∈ {0, 1}`.
    Logistic,
}

impl Loss {
    pub fn value(self, u: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => 0.5 * (u - y) * (u - y),
            // log(1 + e^u) − y·u, written to avoid overflow.
            Loss::Logistic => u.max(0.0) + (-u.abs()).exp().ln_1p() - y * u,
        }
    }

    /// `∂ℓ/∂u`.
    pub fn derivative(self, u: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => u - y,
            Loss::Logistic => sigmoid(u) - y,
        }
    }

    /// `f′` over all samples given the margins `u = Xw`.
    pub fn derivatives(self, u: &[f64], y: &[f64]) -> Vec<f64> {
        u.iter().zip(y).map(|(&a, &b)| self.derivative(a, b)).collect()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// `λ‖w‖₁`.
    L1(f64),
    /// `(λ/2)‖w‖²`.
    L2(f64),
    /// Indicator of `[lo, hi]^d`.
    Box { lo: f64, hi: f64 },
}

impl Regularizer {
    pub fn value(&self, w: &[f64]) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1(lambda) => lambda * w.iter().map(|x| x.abs()).sum::<f64>(),
            Regularizer::L2(lambda) => 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>(),
            Regularizer::Box { lo, hi } => {
                if w.iter().all(|&x| (lo..=hi).contains(&x)) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::L1(l) | Regularizer::L2(l) if !(l >= 0.0 && l.is_finite()) => {
                Err(Error::InvalidParameter(format!("regularization weight {l} must be finite and nonnegative")))
            }
            Regularizer::Box { lo, hi } if !(lo <= hi) => Err(Error::InvalidParameter(format!("box bounds {lo} > {hi}"))),
            _ => Ok(()),
        }
    }
}

/// `argmin_w h(w) + ‖w − z‖² / (2α)`.
pub fn prox(reg: &Regularizer, z: &[f64], alpha: f64) -> Vec<f64> {
    assert!(alpha >= 0.0, "step must be nonnegative");
    match *reg {
        Regularizer::None => z.to_vec(),
        Regularizer::L1(lambda) => {
            let k = lambda * alpha;
            z.iter()
                .map(|&x| {
                    if x > k {
                        x - k
                    } else if x < -k {
                        x + k
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        Regularizer::L2(lambda) => z.iter().map(|&x| x / (1.0 + lambda * alpha)).collect(),
        Regularizer::Box { lo, hi } => z.iter().map(|&x| x.clamp(lo, hi)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `steps[t]` at iteration `t`; the last entry repeats.
    PerIteration(Vec<f64>),
}

impl StepSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        match self {
            StepSchedule::Constant(a) => *a,
            StepSchedule::PerIteration(steps) => steps[iteration.min(steps.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub loss: Loss,
    pub regularizer: Regularizer,
    pub step: StepSchedule,
}

impl ModelSpec {
    pub fn new(loss: Loss, regularizer: Regularizer, step: StepSchedule) -> Result<Self> {
        let spec = ModelSpec { loss, regularizer, step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.regularizer.validate()?;
        match &self.step {
            StepSchedule::PerIteration(s) if s.is_empty() => Err(Error::InvalidParameter("empty step schedule".into())),
            StepSchedule::PerIteration(s) if s.iter().any(|a| !(*a >= 0.0)) => {
                Err(Error::InvalidParameter("step sizes must be nonnegative".into()))
            }
            StepSchedule::Constant(a) if !(*a >= 0.0) => Err(Error::InvalidParameter(format!("step size {a} must be nonnegative"))),
            _ => Ok(()),
        }
    }

    /// `Σ_i ℓ(⟨x_i, w⟩; y_i) + h(w)`.
    pub fn objective(&self, x: &Matrix, y: &[f64], w: &[f64]) -> f64 {
        let u = x.mul_vec(w);
        u.iter().zip(y).map(|(&a, &b)| self.loss.value(a, b)).sum::<f64>() + self.regularizer.value(w)
    }
}

/// Constant step `1/L` with `L` the power-iteration estimate of `λ_max(XᵀX)`.
pub fn default_step(x: &Matrix) -> f64 {
    let l = crate::linalg::power_iteration_gram(x, 20);
    if l > 0.0 {
        1.0 / l
    } else {
        1.0
    }
}

/// Parameter vector plus the master's cached `X·w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmState {
    pub w: Vec<f64>,
    pub iteration: usize,
    pub cache: Option<XwCache>,
}

/// `xw = X·point`, where `point` is the iterate of the last gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct XwCache {
    pub point: Vec<f64>,
    pub xw: Vec<f64>,
}

impl GlmState {
    pub fn new(w: Vec<f64>) -> Self {
        GlmState { w, iteration: 0, cache: None }
    }

    pub fn zeros(d: usize) -> Self {
        GlmState::new(vec![0.0; d])
    }
}
