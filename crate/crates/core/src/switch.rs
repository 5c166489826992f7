//! Agreement-window controller for the one-way KL-UCB to UCB switch.
//!
//! While a hybrid engine runs KL-UCB it also evaluates the UCB index. The
//! agreement bit `C_n` is 1 when both pick the same arm. Once the recent
//! window is dominated by agreement the KL-UCB exploration is considered
//! complete and the engine drops to the cheaper index for the rest of the
//! experiment.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::{EngineConfig, WindowStyle};
use crate::qf::{select_arm, QfError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    #[default]
    KlucbActive,
    UcbActive,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwitchState {
    pub mode: SwitchMode,
    #[serde(skip)]
    window: VecDeque<bool>,
    #[serde(skip)]
    ones: usize,
    /// Slot at which the switch fired. Set iff `mode == UcbActive`.
    pub switch_slot: Option<u64>,
}

impl SwitchState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of agreement samples currently held.
    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn agreeing(&self) -> usize {
        self.ones
    }

    /// Pushes `c_n` observed in `slot` and fires the switch when a full
    /// window reaches the agreement threshold. Returns `true` in the slot
    /// the switch fires. A no-op once UCB is active.
    pub fn record_and_decide(&mut self, c_n: bool, cfg: &EngineConfig, slot: u64) -> bool {
        if self.mode == SwitchMode::UcbActive {
            return false;
        }
        let w = cfg.window.max(1);
        self.window.push_back(c_n);
        self.ones += usize::from(c_n);
        if self.window.len() > w
            && self.window.pop_front() == Some(true) {
                self.ones -= 1;
            }
        if self.window.len() < w {
            return false;
        }
        let fire = self.ones as f64 + 1e-9 >= cfg.agree_threshold * w as f64;
        if fire {
            self.mode = SwitchMode::UcbActive;
            self.switch_slot = Some(slot);
            self.window.clear();
            self.ones = 0;
        } else if cfg.window_style == WindowStyle::Tumbling {
            self.window.clear();
            self.ones = 0;
        }
        fire
    }
}

/// `C_n`: 1 when both index vectors select the same arm.
pub fn agreement_bit(qf_kl: &[f64], qf_ucb: &[f64]) -> Result<bool, QfError> {
    if qf_kl.len() != qf_ucb.len() {
        return Err(QfError::LengthMismatch(qf_kl.len(), qf_ucb.len()));
    }
    Ok(select_arm(qf_kl)? == select_arm(qf_ucb)?)
}
