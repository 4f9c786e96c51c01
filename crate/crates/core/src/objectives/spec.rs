use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Fixed pixel variance of the Gaussian likelihood.
pub const GAUSSIAN_VARIANCE: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    #[default]
    BernoulliLogits,
    GaussianFixedVariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorSpec {
    pub hidden_layers: usize,
    pub width: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            hidden_layers: 6,
            width: 1000,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorVaeSpec {
    pub gamma: f64,
    pub discriminator: DiscriminatorSpec,
    pub discriminator_lr: f64,
}

impl Default for FactorVaeSpec {
    fn default() -> Self {
        FactorVaeSpec {
            gamma: 35.0,
            discriminator: DiscriminatorSpec::default(),
            discriminator_lr: 2e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveSpec {
    pub likelihood: Likelihood,
    pub beta: f64,
    pub factorvae: Option<FactorVaeSpec>,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            likelihood: Likelihood::BernoulliLogits,
            beta: 1.0,
            factorvae: None,
        }
    }
}

impl ObjectiveSpec {
    pub fn beta(beta: f64) -> Self {
        ObjectiveSpec {
            beta,
            ..Default::default()
        }
    }

    pub fn factorvae() -> Self {
        ObjectiveSpec {
            factorvae: Some(FactorVaeSpec::default()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(config_err!("beta must be a finite non-negative number, got {}", self.beta));
        }
        if let Some(f) = &self.factorvae {
            if !(f.gamma.is_finite() && f.gamma > 0.0) {
                return Err(config_err!("FactorVAE gamma must be positive, got {}", f.gamma));
            }
            if !(f.discriminator_lr.is_finite() && f.discriminator_lr > 0.0) {
                return Err(config_err!("discriminator learning rate must be positive"));
            }
            if f.discriminator.width == 0 {
                return Err(config_err!("discriminator width must be positive"));
            }
            if !f.discriminator.leaky_slope.is_finite() {
                return Err(config_err!("discriminator leaky slope must be finite"));
            }
        }
        Ok(())
    }
}

/// Per-image losses averaged over a batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub nll: f64,
    pub kl: f64,
    pub elbo_loss: f64,
    pub tc_penalty: Option<f64>,
    pub discriminator_accuracy: Option<f64>,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.nll, self.kl, self.elbo_loss].iter().all(|v| v.is_finite())
            && self.tc_penalty.is_none_or(f64::is_finite)
            && self.discriminator_accuracy.is_none_or(f64::is_finite)
    }
}
