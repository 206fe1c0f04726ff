use serde::{Deserialize, Serialize};

use super::Elem;
use crate::error::{Error, Result};

/// Adam moment-decay hyperparameters. The defaults are the usual
/// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8; every run logs them in its
/// manifest.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::Config(format!(
                "adam betas must be in (0,1), got {} / {}",
                self.beta1, self.beta2
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config(format!("adam epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-parameter Adam state: step counter plus first/second moment buffers
/// matching the parameter shape.
pub struct AdamState<E> {
    pub step_count: u64,
    pub first_moment: Vec<E>,
    pub second_moment: Vec<E>,
    pub hyper: AdamHyper,
}

impl<E: Elem> AdamState<E> {
    pub fn new(param_len: usize, hyper: AdamHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(AdamState {
            step_count: 0,
            first_moment: vec![E::zero(); param_len],
            second_moment: vec![E::zero(); param_len],
            hyper,
        })
    }
}

/// One bias-corrected Adam update. When `apply_l2` is set the effective
/// gradient is `g + 2*l2_lambda*p`; biases are exempt from L2 so their
/// callers pass `false`.
pub fn adam_step<E: Elem>(
    params: &mut [E],
    grads: &[E],
    state: &mut AdamState<E>,
    lr: f64,
    l2_lambda: f64,
    apply_l2: bool,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Usage(format!(
            "adam_step: shape mismatch (params {}, grads {}, state {})",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = E::from_f64(state.hyper.beta1);
    let b2 = E::from_f64(state.hyper.beta2);
    let eps = E::from_f64(state.hyper.epsilon);
    let lr = E::from_f64(lr);
    let one = E::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let l2 = E::from_f64(2.0 * l2_lambda);
    for i in 0..params.len() {
        let g = if apply_l2 { grads[i] + l2 * params[i] } else { grads[i] };
        let m = b1 * state.first_moment[i] + (one - b1) * g;
        let v = b2 * state.second_moment[i] + (one - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
