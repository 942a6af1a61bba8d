//! Loss functions and the regularized empirical-risk objective.
//!
//! The trained objective is
//!
//! ```text
//! P(w) = (1/n) * sum_i h(x_i . w; y_i)  +  (lambda1/2) * |w|_2^2  +  lambda2 * |w|_1
//! ```
//!
//! where `h` is a smooth per-instance loss. Solvers treat everything except
//! the `lambda2 * |w|_1` term as the smooth part and handle the L1 term
//! through its proximal map.

use thiserror::Error;

use crate::data::Dataset;

/// Smooth per-instance losses on the margin/prediction `t = x . w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `ln(1 + exp(-y t))`, for labels in {-1, +1}.
    Logistic,
    /// `(t - y)^2 / 2`.
    Squared,
}

impl Loss {
    /// Loss value at prediction `t` for label `y`.
    pub fn value(self, t: f64, y: f64) -> f64 {
        match self {
            Loss::Logistic => {
                // Split on the margin sign so the exponent is never large
                // and positive.
                let s = y * t;
                if s > 0.0 {
                    (-s).exp().ln_1p()
                } else {
                    -s + s.exp().ln_1p()
                }
            }
            Loss::Squared => {
                let r = t - y;
                0.5 * r * r
            }
        }
    }

    /// Derivative of the loss with respect to `t`.
    pub fn derivative(self, t: f64, y: f64) -> f64 {
        match self {
            Loss::Logistic => {
                // -y / (1 + exp(y t)); the division saturates cleanly when
                // the exponential overflows.
                -y / (1.0 + (y * t).exp())
            }
            Loss::Squared => t - y,
        }
    }

    /// Upper bound on the loss's second derivative in `t`, used for
    /// smoothness estimates.
    pub fn curvature_bound(self) -> f64 {
        match self {
            Loss::Logistic => 0.25,
            Loss::Squared => 1.0,
        }
    }
}

/// Invalid model or solver parameters.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// The model being fit: a loss plus elastic-net regularization strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub loss: Loss,
    /// Strength of the squared-norm (ridge) term.
    pub lambda1: f64,
    /// Strength of the L1 term.
    pub lambda2: f64,
}

impl Model {
    pub fn new(loss: Loss, lambda1: f64, lambda2: f64) -> Result<Self, ConfigError> {
        if !lambda1.is_finite() || lambda1 < 0.0 {
            return Err(ConfigError(format!("lambda1 must be finite and >= 0, got {lambda1}")));
        }
        if !lambda2.is_finite() || lambda2 < 0.0 {
            return Err(ConfigError(format!("lambda2 must be finite and >= 0, got {lambda2}")));
        }
        Ok(Self { loss, lambda1, lambda2 })
    }
}

/// Proximal map of `threshold * |.|`: soft-thresholding.
#[inline]
pub fn prox_l1(u: f64, threshold: f64) -> f64 {
    debug_assert!(threshold >= 0.0);
    if u > threshold {
        u - threshold
    } else if u < -threshold {
        u + threshold
    } else {
        0.0
    }
}

/// `|w|_1`.
pub fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

/// `|w|_2^2`.
pub fn norm_sq(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

/// Sum of loss values over the given instances (no regularization).
pub fn loss_sum<I>(loss: Loss, data: &Dataset, idxs: I, w: &[f64]) -> f64
where
    I: IntoIterator<Item = usize>,
{
    let mut acc = 0.0;
    for i in idxs {
        let inst = &data.instances()[i];
        acc += loss.value(inst.features.dot(w), inst.label);
    }
    acc
}

/// Unnormalized gradient of the loss sum over the given instances:
/// `sum_i h'(x_i . w; y_i) * x_i`. Accumulation follows the iteration
/// order, so identical inputs give bitwise-identical output.
pub fn grad_sum<I>(loss: Loss, data: &Dataset, idxs: I, w: &[f64]) -> Vec<f64>
where
    I: IntoIterator<Item = usize>,
{
    let mut out = vec![0.0; data.dim()];
    for i in idxs {
        let inst = &data.instances()[i];
        let g = loss.derivative(inst.features.dot(w), inst.label);
        for (j, v) in inst.features.iter() {
            out[j] += g * v;
        }
    }
    out
}

/// The smooth part of the objective: mean loss plus the ridge term.
pub fn smooth_objective_value(model: &Model, data: &Dataset, w: &[f64]) -> f64 {
    assert_eq!(w.len(), data.dim(), "weight length must match dataset dimension");
    let n = data.n().max(1) as f64;
    loss_sum(model.loss, data, 0..data.n(), w) / n + 0.5 * model.lambda1 * norm_sq(w)
}

/// Full objective value `P(w)`.
pub fn objective_value(model: &Model, data: &Dataset, w: &[f64]) -> f64 {
    smooth_objective_value(model, data, w) + model.lambda2 * l1_norm(w)
}

/// Gradient of the smooth part: mean loss gradient plus `lambda1 * w`.
pub fn smooth_gradient(model: &Model, data: &Dataset, w: &[f64]) -> Vec<f64> {
    assert_eq!(w.len(), data.dim(), "weight length must match dataset dimension");
    let n = data.n().max(1) as f64;
    let mut g = grad_sum(model.loss, data, 0..data.n(), w);
    for (gj, wj) in g.iter_mut().zip(w) {
        *gj = *gj / n + model.lambda1 * wj;
    }
    g
}

/// Upper bound on the smoothness constant of the smooth part over the given
/// instances: `lambda1 + curvature * max_i |x_i|^2`.
pub fn smoothness_bound_over<I>(model: &Model, data: &Dataset, idxs: I) -> f64
where
    I: IntoIterator<Item = usize>,
{
    let max_sq = idxs
        .into_iter()
        .map(|i| data.instances()[i].features.norm_sq())
        .fold(0.0, f64::max);
    model.lambda1 + model.loss.curvature_bound() * max_sq
}

/// Smoothness bound over the whole dataset.
pub fn smoothness_bound(model: &Model, data: &Dataset) -> f64 {
    smoothness_bound_over(model, data, 0..data.n())
}
