//! SGD with momentum and coupled weight decay:
//! `v <- momentum * v + (g + weight_decay * p)`, `p <- p - lr * v`.

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const PAPER_LEARNING_RATE: f64 = 0.0004;
pub const PAPER_MOMENTUM: f64 = 0.9;
pub const PAPER_WEIGHT_DECAY: f64 = 0.0005;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Zero velocity, one buffer per parameter, shape-matched.
    pub fn new<'a>(
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
        params: impl IntoIterator<Item = &'a Tensor<T>>,
    ) -> Result<Self> {
        for (name, v) in [("learning_rate", learning_rate), ("momentum", momentum), ("weight_decay", weight_decay)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(OptimizerState {
            learning_rate: T::lit(learning_rate),
            momentum: T::lit(momentum),
            weight_decay: T::lit(weight_decay),
            velocity: params
                .into_iter()
                .map(|p| vec![T::zero(); p.len()])
                .collect(),
        })
    }

    pub fn paper<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Result<Self> {
        Self::new(PAPER_LEARNING_RATE, PAPER_MOMENTUM, PAPER_WEIGHT_DECAY, params)
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    /// Restores saved velocity buffers, checking they match the current state.
    pub fn set_velocity(&mut self, velocity: Vec<Vec<T>>) -> Result<()> {
        if velocity.len() != self.velocity.len()
            || velocity.iter().zip(&self.velocity).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::invalid("velocity buffers do not match parameters"));
        }
        self.velocity = velocity;
        Ok(())
    }
}

/// Updates parameters in place. Gradients are left untouched; zeroing them is
/// the caller's job.
pub fn sgd_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Tensor<T>>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    let params: Vec<&mut Tensor<T>> = params.into_iter().collect();
    if params.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            expected: vec![state.velocity.len()],
            actual: vec![params.len()],
        });
    }
    for (i, (p, v)) in params.iter().zip(&state.velocity).enumerate() {
        if p.grad().is_none() {
            return Err(Error::MissingGrad(i));
        }
        if p.len() != v.len() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                expected: vec![v.len()],
                actual: p.shape().to_vec(),
            });
        }
    }
    let (lr, mu, wd) = (state.learning_rate, state.momentum, state.weight_decay);
    for (p, v) in params.into_iter().zip(state.velocity.iter_mut()) {
        let (data, grad) = p.data_and_grad_mut();
        let grad = grad.expect("checked above");
        for ((w, g), vel) in data.iter_mut().zip(grad.iter()).zip(v.iter_mut()) {
            *vel = mu * *vel + (*g + wd * *w);
            *w = *w - lr * *vel;
        }
    }
    Ok(())
}
