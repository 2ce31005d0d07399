//! Stochastic gradient descent with classic momentum.

use crate::error::{Error, Result};

/// Velocity buffer, zero-initialized on first use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentumState {
    velocity: Vec<f64>,
}

impl MomentumState {
    pub fn new(len: usize) -> Self {
        MomentumState {
            velocity: vec![0.0; len],
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }
}

/// `v <- momentum * v + g; p <- p - lr * v`.
pub fn sgd_momentum_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut MomentumState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            found: grads.len(),
        });
    }
    if state.velocity.is_empty() {
        state.velocity = vec![0.0; params.len()];
    }
    if state.velocity.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            found: state.velocity.len(),
        });
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}
