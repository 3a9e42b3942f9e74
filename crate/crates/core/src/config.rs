use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hnm::MatchMode;
use crate::hpm::HpmConfig;
use crate::objective::LossConfig;

/// Run-wide hyper-parameters. The defaults are the tuned values: threshold
/// 0.6, co-appearance weight 0.1, temperature 0.1, three shifting rounds and
/// a 1% hard negative ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub delta: f64,
    pub beta: f64,
    pub tau: f64,
    pub hpm_max_iters: usize,
    pub hard_neg_ratio: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            delta: 0.6,
            beta: 0.1,
            tau: 0.1,
            hpm_max_iters: 3,
            hard_neg_ratio: 0.01,
            dim: 128,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > -1.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta {} outside (-1, 1)",
                self.delta
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta {} must be finite and >= 0",
                self.beta
            )));
        }
        self.loss().validate()
    }

    pub fn hpm(&self, mode: MatchMode) -> HpmConfig {
        HpmConfig {
            delta: self.delta,
            beta: self.beta,
            max_iters: self.hpm_max_iters,
            mode,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            hard_neg_ratio: self.hard_neg_ratio,
        }
    }
}
