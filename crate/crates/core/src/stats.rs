//! Per-arm reward statistics.

use serde::{Deserialize, Serialize};

/// Cumulative reward and pull count of a single arm.
///
/// Rewards are Bernoulli, so `x_sum` is always an integer no larger than
/// `t_pulls`. It is kept as `u64` and converted when a quality factor needs
/// the empirical mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmStats {
    pub x_sum: u64,
    pub t_pulls: u64,
}

impl ArmStats {
    pub fn new(x_sum: u64, t_pulls: u64) -> Self {
        debug_assert!(x_sum <= t_pulls);
        Self { x_sum, t_pulls }
    }

    /// Records one pull of this arm.
    #[inline]
    pub fn record(&mut self, reward: bool) {
        self.t_pulls += 1;
        self.x_sum += u64::from(reward);
    }

    /// Empirical mean `X / T`, or `None` before the first pull.
    pub fn mean(&self) -> Option<f64> {
        (self.t_pulls > 0).then(|| self.x_sum as f64 / self.t_pulls as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_updates_both_counters() {
        let mut s = ArmStats::default();
        s.record(true);
        s.record(false);
        s.record(true);
        assert_eq!(s, ArmStats::new(2, 3));
        assert_eq!(s.mean(), Some(2.0 / 3.0));
    }

    #[test]
    fn mean_undefined_before_first_pull() {
        assert_eq!(ArmStats::default().mean(), None);
    }
}
