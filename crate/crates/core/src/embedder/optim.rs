use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Network;

/// SGD with classical momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(
                "momentum",
                format!("must be in [0, 1), got {}", self.momentum),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    pub velocity: Network<T>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Zero velocity shaped like `params`.
    pub fn new(config: OptimizerConfig, params: &Network<T>) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            velocity: params.zeros_like(),
        })
    }
}

/// `v ← momentum·v + g`, then `θ ← θ − lr·v`.
pub fn sgd_step<T: Scalar>(params: &mut Network<T>, grads: &Network<T>, state: &mut OptimizerState<T>) -> Result<()> {
    params.same_shape(grads)?;
    params.same_shape(&state.velocity)?;
    let lr = T::of(state.config.learning_rate);
    let mu = T::of(state.config.momentum);
    for ((p, g), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.velocity.layers)
    {
        v.weight.zip_mut_with(&g.weight, |v, &g| *v = mu * *v + g);
        v.bias.zip_mut_with(&g.bias, |v, &g| *v = mu * *v + g);
        p.weight.scaled_add(-lr, &v.weight);
        p.bias.scaled_add(-lr, &v.bias);
    }
    Ok(())
}
