//! Per-slot decision engine.
//!
//! Each slot runs three tasks: apply the feedback of the previous slot to the
//! arm statistics, evaluate one quality factor per arm, and pull the arm with
//! the largest value. The first `K` slots of an experiment (the INIT phase)
//! pull every arm once in a seeded random order and skip the quality
//! factors entirely.
//!
//! `n` counts processed pulls, so the slot being decided has the one-based
//! index `n + 1`. Quality factors are evaluated with that index, which makes
//! the first RUN slot see `n + 1 = K + 1`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig, PolicyKind, UcbVariant};
use crate::frame::FeedbackFrame;
use crate::qf::{self, QfError, QfInputs};
use crate::stats::ArmStats;
use crate::switch::{SwitchMode, SwitchState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("arm {arm} out of range for {k} active arms (stale frame?)")]
    ArmOutOfRange { arm: usize, k: usize },
    #[error("arm count {k} outside [1, {k_max}]")]
    ArmCount { k: usize, k_max: usize },
    #[error("cannot add an arm: already at capacity k_max = {k_max}")]
    Capacity { k_max: usize },
    #[error("cannot remove the last remaining arm")]
    LastArm,
    #[error("INIT sequence requested outside the INIT phase")]
    NotInInit,
    #[error(transparent)]
    Qf(#[from] QfError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Run,
}

/// Which index produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionKind {
    Init,
    Ucb,
    UcbTuned,
    UcbV,
    Klucb,
}

impl DecisionKind {
    pub fn label(self) -> &'static str {
        match self {
            DecisionKind::Init => "init",
            DecisionKind::Ucb => "ucb",
            DecisionKind::UcbTuned => "ucb-t",
            DecisionKind::UcbV => "ucb-v",
            DecisionKind::Klucb => "klucb",
        }
    }
}

impl From<UcbVariant> for DecisionKind {
    fn from(v: UcbVariant) -> Self {
        match v {
            UcbVariant::Ucb => DecisionKind::Ucb,
            UcbVariant::Tuned => DecisionKind::UcbTuned,
            UcbVariant::V => DecisionKind::UcbV,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub arm: usize,
    pub kind: DecisionKind,
    /// Agreement bit, present only for pre-switch hybrid slots.
    pub agreement: Option<bool>,
    /// The hybrid switch fired in this slot.
    pub switched: bool,
}

/// Runtime reconfiguration, the software counterpart of swapping arm and
/// policy blocks on the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconfigCommand {
    AddArm,
    RemoveArm(usize),
    SetPolicy(PolicyKind),
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    /// Processed pulls in the current experiment, INIT included.
    pub n: u64,
    /// Active arm count.
    pub k: usize,
    pub phase: Phase,
    pub init_order: Vec<usize>,
    /// INIT slots already consumed.
    pub init_pos: usize,
    pub stats: Vec<ArmStats>,
    pub policy: PolicyKind,
    pub switch: SwitchState,
}

impl EngineState {
    fn fresh(k: usize, policy: PolicyKind, init_order: Vec<usize>) -> Self {
        Self {
            n: 0,
            k,
            phase: if k == 0 { Phase::Run } else { Phase::Init },
            init_order,
            init_pos: 0,
            stats: vec![ArmStats::default(); k],
            policy,
            switch: SwitchState::new(),
        }
    }

    fn refresh_phase(&mut self) {
        self.phase = if self.init_pos < self.init_order.len() { Phase::Init } else { Phase::Run };
    }

    /// One-based index of the slot about to be decided.
    pub fn slot(&self) -> u64 {
        self.n + 1
    }

    pub fn total_pulls(&self) -> u64 {
        self.stats.iter().map(|s| s.t_pulls).sum()
    }

    /// Trace-dump form: `{n, k, phase, x[], t[], policy, mode, switch_slot}`.
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            n: self.n,
            k: self.k,
            phase: self.phase,
            x: self.stats.iter().map(|s| s.x_sum).collect(),
            t: self.stats.iter().map(|s| s.t_pulls).collect(),
            policy: self.policy,
            mode: self.switch.mode,
            switch_slot: self.switch.switch_slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub n: u64,
    pub k: usize,
    pub phase: Phase,
    pub x: Vec<u64>,
    pub t: Vec<u64>,
    pub policy: PolicyKind,
    pub mode: SwitchMode,
    pub switch_slot: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    state: EngineState,
    rng: ChaCha8Rng,
    qf_evals: u64,
    klucb_evals: u64,
    primary: Vec<f64>,
    secondary: Vec<f64>,
}

impl Engine {
    /// A fresh experiment with `k` arms. `seed` drives the INIT order.
    pub fn new(config: EngineConfig, policy: PolicyKind, k: usize, seed: u64) -> Result<Self, EngineError> {
        config.validate()?;
        if k == 0 || k > config.k_max {
            return Err(EngineError::ArmCount { k, k_max: config.k_max });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = draw_permutation(&mut rng, k);
        Ok(Self {
            state: EngineState::fresh(k, policy, order),
            config,
            rng,
            qf_evals: 0,
            klucb_evals: 0,
            primary: Vec::with_capacity(k),
            secondary: Vec::with_capacity(k),
        })
    }

    /// An engine resumed from arm statistics, with `n = sum of pulls`.
    /// Arms with no pulls are queued for INIT.
    pub fn from_stats(
        config: EngineConfig,
        policy: PolicyKind,
        stats: Vec<ArmStats>,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let mut engine = Self::new(config, policy, stats.len(), seed)?;
        let st = &mut engine.state;
        st.init_order = (0..stats.len()).filter(|&a| stats[a].t_pulls == 0).collect();
        st.init_pos = 0;
        st.n = stats.iter().map(|s| s.t_pulls).sum();
        st.stats = stats;
        st.refresh_phase();
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn policy(&self) -> PolicyKind {
        self.state.policy
    }

    /// Quality factors evaluated since construction, all policies.
    pub fn qf_evaluations(&self) -> u64 {
        self.qf_evals
    }

    /// KL-UCB quality factors evaluated since construction.
    pub fn klucb_evaluations(&self) -> u64 {
        self.klucb_evals
    }

    pub fn state_json(&self) -> String {
        serde_json::to_string(&self.state.snapshot()).expect("snapshot serializes")
    }

    fn restart(&mut self) {
        let order = draw_permutation(&mut self.rng, self.state.k);
        self.state = EngineState::fresh(self.state.k, self.state.policy, order);
    }

    /// Applies one feedback frame to the statistics.
    pub fn update_stats(&mut self, frame: &FeedbackFrame) -> Result<(), EngineError> {
        if frame.restart {
            self.restart();
            return Ok(());
        }
        let k = self.state.k;
        let stats = self
            .state
            .stats
            .get_mut(frame.prev_arm)
            .ok_or(EngineError::ArmOutOfRange { arm: frame.prev_arm, k })?;
        stats.record(frame.reward);
        self.state.n += 1;
        if self.state.phase == Phase::Init {
            self.state.init_pos += 1;
            self.state.refresh_phase();
        }
        Ok(())
    }

    pub fn init_next_arm(&self) -> Result<usize, EngineError> {
        match self.state.phase {
            Phase::Init => Ok(self.state.init_order[self.state.init_pos]),
            Phase::Run => Err(EngineError::NotInInit),
        }
    }

    /// Quality-factor vector of `kind` for the current statistics. Does not
    /// touch evaluation counters.
    pub fn quality_factors(&self, kind: DecisionKind) -> Result<Vec<f64>, EngineError> {
        let mut out = Vec::with_capacity(self.state.k);
        fill_qfs(&self.config, &self.state, kind, &mut out)?;
        Ok(out)
    }

    fn eval_into(&mut self, kind: DecisionKind, secondary: bool) -> Result<usize, EngineError> {
        let buf = if secondary { &mut self.secondary } else { &mut self.primary };
        fill_qfs(&self.config, &self.state, kind, buf)?;
        let k = self.state.k as u64;
        self.qf_evals += k;
        if kind == DecisionKind::Klucb {
            self.klucb_evals += k;
        }
        Ok(qf::select_arm(buf)?)
    }

    /// Chooses the arm for the current slot. Call once per slot: in hybrid
    /// mode this also feeds the agreement window.
    pub fn decide(&mut self) -> Result<Decision, EngineError> {
        if self.state.phase == Phase::Init {
            return Ok(Decision {
                arm: self.init_next_arm()?,
                kind: DecisionKind::Init,
                agreement: None,
                switched: false,
            });
        }
        let slot = self.state.slot();
        match self.state.policy {
            PolicyKind::Ucb(v) => {
                let arm = self.eval_into(v.into(), false)?;
                Ok(Decision { arm, kind: v.into(), agreement: None, switched: false })
            }
            PolicyKind::KlUcb => {
                let arm = self.eval_into(DecisionKind::Klucb, false)?;
                Ok(Decision { arm, kind: DecisionKind::Klucb, agreement: None, switched: false })
            }
            PolicyKind::Hybrid(v) => match self.state.switch.mode {
                SwitchMode::KlucbActive => {
                    let arm = self.eval_into(DecisionKind::Klucb, false)?;
                    let ucb_arm = self.eval_into(v.into(), true)?;
                    let agree = arm == ucb_arm;
                    let switched = self.state.switch.record_and_decide(agree, &self.config, slot);
                    Ok(Decision { arm, kind: DecisionKind::Klucb, agreement: Some(agree), switched })
                }
                SwitchMode::UcbActive => {
                    let arm = self.eval_into(v.into(), false)?;
                    Ok(Decision { arm, kind: v.into(), agreement: None, switched: false })
                }
            },
        }
    }

    /// Full slot: apply the feedback, then decide.
    pub fn step(&mut self, frame: &FeedbackFrame) -> Result<Decision, EngineError> {
        self.update_stats(frame)?;
        self.decide()
    }

    pub fn apply_reconfig(&mut self, cmd: ReconfigCommand) -> Result<(), EngineError> {
        let k_max = self.config.k_max;
        match cmd {
            ReconfigCommand::AddArm => {
                if self.state.k >= k_max {
                    return Err(EngineError::Capacity { k_max });
                }
                self.state.k += 1;
                if self.config.preserve_stats_on_add {
                    let st = &mut self.state;
                    st.stats.push(ArmStats::default());
                    st.init_order = vec![st.k - 1];
                    st.init_pos = 0;
                    st.switch = SwitchState::new();
                    st.refresh_phase();
                } else {
                    self.restart();
                }
            }
            ReconfigCommand::RemoveArm(arm) => {
                if self.state.k == 1 {
                    return Err(EngineError::LastArm);
                }
                if arm >= self.state.k {
                    return Err(EngineError::ArmOutOfRange { arm, k: self.state.k });
                }
                self.state.k -= 1;
                self.restart();
            }
            ReconfigCommand::SetPolicy(policy) => {
                self.state.policy = policy;
                self.state.switch = SwitchState::new();
            }
            ReconfigCommand::Restart => self.restart(),
        }
        Ok(())
    }
}

fn draw_permutation(rng: &mut ChaCha8Rng, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    order
}

fn fill_qfs(
    cfg: &EngineConfig,
    state: &EngineState,
    kind: DecisionKind,
    out: &mut Vec<f64>,
) -> Result<(), QfError> {
    out.clear();
    let n = state.slot();
    let alpha = cfg.ucb_alpha(state.policy);
    for s in &state.stats {
        let input = QfInputs::from_stats(s, n);
        let v = match kind {
            DecisionKind::Ucb => qf::qf_ucb(&input, alpha)?,
            DecisionKind::UcbTuned => qf::qf_ucb_tuned(&input)?,
            DecisionKind::UcbV => qf::qf_ucb_v(&input)?,
            DecisionKind::Klucb => qf::qf_klucb_bisect(&input, cfg.c, cfg.beta)?,
            DecisionKind::Init => unreachable!("INIT slots bypass quality factors"),
        };
        out.push(v);
    }
    Ok(())
}
