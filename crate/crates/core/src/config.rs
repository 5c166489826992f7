//! Engine parameters and policy selection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("k_max must be a power of two, got {0}")]
    KMax(usize),
    #[error("alpha must lie in [0.5, 2], got {0}")]
    Alpha(f64),
    #[error("c must be finite and non-negative, got {0}")]
    LogLogCoefficient(f64),
    #[error("beta must be at least 1")]
    Beta,
    #[error("epsilon must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("beta = {beta} is inconsistent with epsilon = {epsilon} (expected beta = ceil(1/epsilon) = {expected})")]
    BetaEpsilon { beta: u32, epsilon: f64, expected: u32 },
    #[error("window must hold at least one sample")]
    Window,
    #[error("agreement threshold must lie in (0.5, 1], got {0}")]
    Threshold(f64),
    #[error("unknown policy `{0}`; valid policies: {valid}", valid = PolicyKind::NAMES.join(", "))]
    UnknownPolicy(String),
}

/// UCB-family index used on its own or as the post-switch half of a hybrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UcbVariant {
    Ucb,
    Tuned,
    V,
}

impl UcbVariant {
    pub fn name(self) -> &'static str {
        match self {
            UcbVariant::Ucb => "ucb",
            UcbVariant::Tuned => "ucb-t",
            UcbVariant::V => "ucb-v",
        }
    }
}

/// Quality-factor policy run by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PolicyKind {
    Ucb(UcbVariant),
    KlUcb,
    /// KL-UCB until the agreement window fires, then the given UCB variant.
    Hybrid(UcbVariant),
}

impl PolicyKind {
    pub const UCB: PolicyKind = PolicyKind::Ucb(UcbVariant::Ucb);
    pub const HYBRID: PolicyKind = PolicyKind::Hybrid(UcbVariant::Ucb);

    pub const NAMES: [&'static str; 7] =
        ["ucb", "ucb-t", "ucb-v", "klucb", "klucb+ucb", "klucb+ucb-t", "klucb+ucb-v"];

    pub fn name(self) -> String {
        match self {
            PolicyKind::Ucb(v) => v.name().to_string(),
            PolicyKind::KlUcb => "klucb".to_string(),
            PolicyKind::Hybrid(v) => format!("klucb+{}", v.name()),
        }
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, PolicyKind::Hybrid(_))
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let variant = |v: &str| match v {
            "ucb" => Some(UcbVariant::Ucb),
            "ucb-t" | "ucbt" => Some(UcbVariant::Tuned),
            "ucb-v" | "ucbv" => Some(UcbVariant::V),
            _ => None,
        };
        let kind = match norm.as_str() {
            "klucb" | "kl-ucb" => Some(PolicyKind::KlUcb),
            other => match other.strip_prefix("klucb+").or_else(|| other.strip_prefix("kl-ucb+")) {
                Some(rest) => variant(rest).map(PolicyKind::Hybrid),
                None => variant(other).map(PolicyKind::Ucb),
            },
        };
        kind.ok_or_else(|| ConfigError::UnknownPolicy(s.to_string()))
    }
}

impl From<PolicyKind> for String {
    fn from(p: PolicyKind) -> String {
        p.name()
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// How the agreement window is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowStyle {
    /// Evaluate the trailing `window` samples every slot.
    #[default]
    Sliding,
    /// Evaluate once per `window` samples, then start a new window.
    Tumbling,
}

/// `ceil(1/epsilon)`, with a small guard so that `epsilon = 1/b` maps back
/// to `b` despite rounding in the reciprocal.
pub fn beta_for_epsilon(epsilon: f64) -> u32 {
    (1.0 / epsilon - 1e-9).ceil().max(1.0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Arm capacity; a power of two so the feedback frame has a fixed width.
    pub k_max: usize,
    /// UCB exploration factor.
    pub alpha: f64,
    /// Exploration factor of the UCB half of a hybrid policy, used both for
    /// the agreement bit and after the switch.
    pub hybrid_alpha: f64,
    /// Coefficient of the `ln ln n` term in the KL-UCB budget.
    pub c: f64,
    /// Bisection iterations for the KL-UCB index.
    pub beta: u32,
    /// Resolution the bisection targets; `beta = ceil(1/epsilon)`.
    pub epsilon: f64,
    /// Agreement window length.
    pub window: usize,
    /// Fraction of agreeing slots in a full window needed to switch.
    pub agree_threshold: f64,
    pub window_style: WindowStyle,
    /// Keep existing arms' statistics when an arm is added instead of
    /// restarting the experiment.
    pub preserve_stats_on_add: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k_max: 16,
            alpha: 2.0,
            hybrid_alpha: 0.5,
            c: 3.0,
            beta: 16,
            epsilon: 1.0 / 16.0,
            window: 100,
            agree_threshold: 0.95,
            window_style: WindowStyle::Sliding,
            preserve_stats_on_add: false,
        }
    }
}

impl EngineConfig {
    /// Sets `beta` and the matching `epsilon = 1/beta`.
    pub fn with_beta(mut self, beta: u32) -> Self {
        self.beta = beta;
        self.epsilon = 1.0 / f64::from(beta.max(1));
        self
    }

    /// Sets `epsilon` and derives `beta = ceil(1/epsilon)`.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        if epsilon > 0.0 && epsilon < 1.0 {
            self.beta = beta_for_epsilon(epsilon);
        }
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_hybrid_alpha(mut self, alpha: f64) -> Self {
        self.hybrid_alpha = alpha;
        self
    }

    /// Exploration factor used by the UCB index under `policy`.
    pub fn ucb_alpha(&self, policy: PolicyKind) -> f64 {
        if policy.is_hybrid() {
            self.hybrid_alpha
        } else {
            self.alpha
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_window(mut self, window: usize, agree_threshold: f64) -> Self {
        self.window = window;
        self.agree_threshold = agree_threshold;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.k_max.is_power_of_two() {
            return Err(ConfigError::KMax(self.k_max));
        }
        for alpha in [self.alpha, self.hybrid_alpha] {
            if !(0.5..=2.0).contains(&alpha) {
                return Err(ConfigError::Alpha(alpha));
            }
        }
        if !self.c.is_finite() || self.c < 0.0 {
            return Err(ConfigError::LogLogCoefficient(self.c));
        }
        if self.beta == 0 {
            return Err(ConfigError::Beta);
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        let expected = beta_for_epsilon(self.epsilon);
        if expected != self.beta {
            return Err(ConfigError::BetaEpsilon { beta: self.beta, epsilon: self.epsilon, expected });
        }
        if self.window == 0 {
            return Err(ConfigError::Window);
        }
        if !(self.agree_threshold > 0.5 && self.agree_threshold <= 1.0) {
            return Err(ConfigError::Threshold(self.agree_threshold));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.beta, 16);
        assert_eq!(cfg.alpha, 2.0);
        assert_eq!(cfg.c, 3.0);
        assert_eq!(cfg.window, 100);
    }

    #[test]
    fn beta_epsilon_agree() {
        for b in 1..=64 {
            let cfg = EngineConfig::default().with_beta(b);
            if b > 1 {
                cfg.validate().unwrap();
            }
            assert_eq!(beta_for_epsilon(1.0 / f64::from(b)), b);
        }
        assert_eq!(EngineConfig::default().with_epsilon(0.07).beta, 15);
        let bad = EngineConfig { beta: 8, ..EngineConfig::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::BetaEpsilon { expected: 16, .. })));
    }

    #[test]
    fn range_checks() {
        assert_eq!(EngineConfig::default().with_alpha(2.5).validate(), Err(ConfigError::Alpha(2.5)));
        assert_eq!(EngineConfig::default().with_alpha(0.4).validate(), Err(ConfigError::Alpha(0.4)));
        assert_eq!(EngineConfig::default().with_hybrid_alpha(3.0).validate(), Err(ConfigError::Alpha(3.0)));
        assert!(EngineConfig::default().with_c(-1.0).validate().is_err());
        assert!(EngineConfig::default().with_window(0, 0.9).validate().is_err());
        assert!(EngineConfig::default().with_window(10, 0.5).validate().is_err());
        assert!(EngineConfig::default().with_k_max(6).validate().is_err());
        EngineConfig::default().with_c(0.0).with_window(10, 1.0).validate().unwrap();
    }

    #[test]
    fn policy_names_round_trip() {
        for name in PolicyKind::NAMES {
            let p: PolicyKind = name.parse().unwrap();
            assert_eq!(p.name(), name);
        }
        assert_eq!("KLUCB+UCB_T".parse::<PolicyKind>(), Ok(PolicyKind::Hybrid(UcbVariant::Tuned)));
        let err = "nonsense".parse::<PolicyKind>().unwrap_err();
        assert!(err.to_string().contains("klucb+ucb"));
    }

    #[test]
    fn policy_serializes_as_name() {
        let json = serde_json::to_string(&PolicyKind::HYBRID).unwrap();
        assert_eq!(json, "\"klucb+ucb\"");
        let back: PolicyKind = serde_json::from_str(&json).unwrap();
        assert_eq!(back, PolicyKind::HYBRID);
    }
}
