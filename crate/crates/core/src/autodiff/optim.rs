use super::{AutodiffError, ParameterStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 5e-5,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one accumulator per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: RmsPropConfig,
    pub accum: ParameterStore,
}

impl OptimizerState {
    pub fn new(config: RmsPropConfig, params: &ParameterStore) -> Self {
        OptimizerState {
            config,
            accum: params.zeros_like(),
        }
    }
}

/// `s <- rho*s + (1-rho)*g^2`, `w <- w - lr*g/sqrt(s+eps)`.
pub fn rmsprop_step(
    state: &mut OptimizerState,
    params: &mut ParameterStore,
    grads: &[Tensor],
) -> Result<(), AutodiffError> {
    if !state.accum.same_layout(params) || grads.len() != params.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "rmsprop",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for ((_, w), g) in params.iter().zip(grads) {
        if w.shape() != g.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "rmsprop",
                left: w.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    let RmsPropConfig {
        learning_rate,
        rho,
        eps,
    } = state.config;
    for ((w, s), g) in params
        .tensors_mut()
        .zip(state.accum.tensors_mut())
        .zip(grads)
    {
        for ((w, s), &g) in w.data_mut().iter_mut().zip(s.data_mut()).zip(g.data()) {
            *s = rho * *s + (1.0 - rho) * g * g;
            if g != 0.0 {
                *w -= learning_rate * g / (*s + eps).sqrt();
            }
        }
    }
    Ok(())
}

/// Clamps every entry to `[-c, c]`.
pub fn clip_params(params: &mut ParameterStore, c: f64) -> Result<(), AutodiffError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(AutodiffError::InvalidClip(c));
    }
    for t in params.tensors_mut() {
        for w in t.data_mut() {
            *w = w.clamp(-c, c);
        }
    }
    Ok(())
}
