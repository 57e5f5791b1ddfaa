use super::TrainError;
use crate::models::{Gradients, ModelParameters};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn for_shapes(lens: &[usize]) -> Self {
        let zeros: Vec<Vec<f64>> = lens.iter().map(|&n| vec![0.0; n]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// Bias-corrected Adam update of one slice. `t` is the step number after
/// incrementing (starts at 1).
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64) {
    let bc1 = 1.0 - BETA1.powi(t as i32);
    let bc2 = 1.0 - BETA2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// One Adam step over every tensor followed by constraint projection.
/// Gradients are checked before anything is modified, so on error the
/// parameters are untouched.
pub fn adam_step(params: &mut ModelParameters, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    for (tensor, g) in params.tensors.iter().zip(&grads.tensors) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient(tensor.name.clone()));
        }
    }
    state.t += 1;
    for (i, tensor) in params.tensors.iter_mut().enumerate() {
        adam_update(&mut tensor.data, &grads.tensors[i], &mut state.m[i], &mut state.v[i], state.t, lr);
    }
    params.project();
    Ok(())
}
