use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::numerics::{Scalar, Tensor};
use crate::vit::ModelParameters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.lr.is_finite();
        if ok {
            Ok(())
        } else {
            Err(TrainingError::InvalidArgument(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moments mirroring the parameters, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Scalar = f32> {
    pub m: ModelParameters<T>,
    pub v: ModelParameters<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ModelParameters<T>, config: AdamConfig) -> Self {
        let zeros = params.map(|_, p| Tensor::zeros(p.shape().to_vec()));
        Self { m: zeros.clone(), v: zeros, t: 0, config }
    }
}

/// One Adam update of a single tensor at step `t` (already incremented).
/// Bias corrections and the update are evaluated in f64.
pub fn adam_update<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
    t: u64,
    config: &AdamConfig,
) {
    let AdamConfig { lr, beta1, beta2, eps } = *config;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let moments = m.data_mut().iter_mut().zip(v.data_mut());
    for ((p, &g), (m, v)) in param.data_mut().iter_mut().zip(grad.data()).zip(moments) {
        let g = g.as_f64();
        let m_new = beta1 * m.as_f64() + (1.0 - beta1) * g;
        let v_new = beta2 * v.as_f64() + (1.0 - beta2) * g * g;
        *m = T::from_f64_lossy(m_new);
        *v = T::from_f64_lossy(v_new);
        let step = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
        *p = T::from_f64_lossy(p.as_f64() - step);
    }
}

/// Applies one Adam step to every parameter. Parameters whose gradient is
/// identically zero from the first step on are left exactly unchanged, which
/// is how frozen parameters are handled.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParameters<T>,
    grads: &ModelParameters<T>,
    state: &mut OptimizerState<T>,
) -> Result<(), TrainingError> {
    for ((name, p), g) in params.named().into_iter().zip(grads.leaves()) {
        if p.shape() != g.shape() {
            return Err(TrainingError::InvalidArgument(format!(
                "gradient of {name} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(TrainingError::NonFiniteGradient { name });
        }
    }
    state.t += 1;
    let t = state.t;
    let config = state.config;
    let moments = state.m.leaves_mut().into_iter().zip(state.v.leaves_mut());
    for ((p, g), (m, v)) in params.leaves_mut().into_iter().zip(grads.leaves()).zip(moments) {
        adam_update(p, g, m, v, t, &config);
    }
    Ok(())
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ModelParameters<T>, max_norm: f64) -> f64 {
    let norm = grads
        .leaves()
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v.as_f64().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let factor = T::from_f64_lossy(max_norm / norm);
        for g in grads.leaves_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * factor);
        }
    }
    norm
}
