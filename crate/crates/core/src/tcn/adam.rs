use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Move along the gradient (policy objective).
    Ascent,
    /// Move against the gradient (losses).
    Descent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    /// Defaults used for the matching policy: lr 0.75, betas 0.9 / 0.999, eps 1e-8.
    pub fn new(num_params: usize) -> Self {
        Self::with_learning_rate(num_params, 0.75)
    }

    pub fn with_learning_rate(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }
}

/// One bias-corrected ADAM update of `params` in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, direction: Direction) -> Result<()> {
    if params.len() != grad.len() || state.first_moment.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grad.len(),
            state.first_moment.len()
        )));
    }
    if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    state.step += 1;
    let step = i32::try_from(state.step).unwrap_or(i32::MAX);
    let bias1 = 1.0 - state.beta1.powi(step);
    let bias2 = 1.0 - state.beta2.powi(step);
    let sign = match direction {
        Direction::Ascent => 1.0,
        Direction::Descent => -1.0,
    };
    for i in 0..params.len() {
        let g = grad[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        params[i] += sign * state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
