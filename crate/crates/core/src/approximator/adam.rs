use crate::error::{Error, Result};
use crate::float::Float;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and step count for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update of `params` along `-grad`.
///
/// Nothing is modified if `grad` holds a non-finite entry.
pub fn adam_step<T: Float>(state: &mut AdamState<T>, params: &mut [T], grad: &[T], lr: T) -> Result<()> {
    if state.len() != params.len() || grad.len() != params.len() {
        return Err(Error::Usage(format!(
            "adam: state {} / params {} / grad {} lengths differ",
            state.len(),
            params.len(),
            grad.len()
        )));
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric { what: "gradient", index });
    }
    state.step += 1;
    let b1 = T::of(BETA1);
    let b2 = T::of(BETA2);
    let eps = T::of(EPSILON);
    let t = state.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
