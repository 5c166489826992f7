//! Seeded Bernoulli reward environment.
//!
//! Rewards are a pure function of `(seed, slot, arm)`, so a trace can be
//! replayed without storing the reward stream and two policies run on the
//! same seed see identical outcomes for identical pulls.
//!
//! Generator: three rounds of the SplitMix64 finalizer
//!
//! ```text
//! h = mix(seed + G)
//! h = mix(h ^ (slot + G))
//! h = mix(h ^ (arm + G))
//! u = (h >> 11) * 2^-53          // uniform in [0, 1)
//! reward = u < mean[arm]
//! ```
//!
//! with `G = 0x9E3779B97F4A7C15` and wrapping arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("environment needs at least one arm")]
    NoArms,
    #[error("mean {mean} of arm {arm} outside [0, 1]")]
    Mean { arm: usize, mean: f64 },
    #[error("arm {arm} out of range for {k} arms")]
    ArmOutOfRange { arm: usize, k: usize },
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform variate in `[0, 1)` keyed by `(seed, slot, arm)`.
#[inline]
pub fn counter_uniform(seed: u64, slot: u64, arm: u64) -> f64 {
    let mut h = mix(seed.wrapping_add(GOLDEN));
    h = mix(h ^ slot.wrapping_add(GOLDEN));
    h = mix(h ^ arm.wrapping_add(GOLDEN));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliEnv {
    means: Vec<f64>,
    seed: u64,
}

impl BernoulliEnv {
    pub fn new(means: Vec<f64>, seed: u64) -> Result<Self, EnvError> {
        if means.is_empty() {
            return Err(EnvError::NoArms);
        }
        if let Some((arm, &mean)) = means.iter().enumerate().find(|(_, m)| !(0.0..=1.0).contains(*m)) {
            return Err(EnvError::Mean { arm, mean });
        }
        Ok(Self { means, seed })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { means: self.means.clone(), seed }
    }

    /// Largest arm mean.
    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bernoulli reward of pulling `arm` in `slot`.
    #[inline]
    pub fn draw_reward(&self, arm: usize, slot: u64) -> Result<bool, EnvError> {
        let mean = *self.means.get(arm).ok_or(EnvError::ArmOutOfRange { arm, k: self.k() })?;
        Ok(counter_uniform(self.seed, slot, arm as u64) < mean)
    }

    /// Rewards of every arm for slots `1..=horizon`, laid out slot-major.
    pub fn reward_table(&self, horizon: u64) -> Vec<bool> {
        let k = self.k();
        let mut table = Vec::with_capacity(horizon as usize * k);
        for slot in 1..=horizon {
            for arm in 0..k {
                table.push(counter_uniform(self.seed, slot, arm as u64) < self.means[arm]);
            }
        }
        table
    }
}
