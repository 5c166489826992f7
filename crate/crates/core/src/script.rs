//! Line-oriented reconfiguration scripts.
//!
//! ```text
//! # three arms, then a fourth
//! run 5000
//! add-arm 0.8
//! run 5000
//! ```
//!
//! Commands: `add-arm [mean]`, `remove-arm <i>`, `set-policy <name>`,
//! `restart`, `run <slots>`. Blank lines and `#` comments are skipped.
//! `add-arm` without a mean takes the next value from the session's spare
//! means. Consecutive `run`s continue the same experiment; `add-arm`,
//! `remove-arm` and `restart` begin a new one.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EngineConfig, PolicyKind};
use crate::engine::{Engine, EngineError, ReconfigCommand};
use crate::env::{BernoulliEnv, EnvError};
use crate::frame::FeedbackFrame;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Engine { line: usize, source: EngineError },
    #[error("line {line}: {source}")]
    Env { line: usize, source: EnvError },
    #[error("line {line}: add-arm needs a mean and no spare means are left")]
    NoSpareMean { line: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptCommand {
    AddArm(Option<f64>),
    RemoveArm(usize),
    SetPolicy(PolicyKind),
    Restart,
    Run(u64),
}

/// A parsed command and its one-based source line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptLine {
    pub line: usize,
    pub command: ScriptCommand,
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ScriptError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ScriptError::Parse { line, message };
        let mut parts = content.split_whitespace();
        let verb = parts.next().unwrap_or_default();
        let arg = parts.next();
        if let Some(extra) = parts.next() {
            return Err(err(format!("unexpected argument `{extra}`")));
        }
        let command = match (verb, arg) {
            ("add-arm", None) => ScriptCommand::AddArm(None),
            ("add-arm", Some(m)) => {
                let mean: f64 = m.parse().map_err(|_| err(format!("invalid mean `{m}`")))?;
                if !(0.0..=1.0).contains(&mean) {
                    return Err(err(format!("mean {mean} outside [0, 1]")));
                }
                ScriptCommand::AddArm(Some(mean))
            }
            ("remove-arm", Some(i)) => {
                ScriptCommand::RemoveArm(i.parse().map_err(|_| err(format!("invalid arm index `{i}`")))?)
            }
            ("set-policy", Some(p)) => ScriptCommand::SetPolicy(p.parse().map_err(|e| err(format!("{e}")))?),
            ("restart", None) => ScriptCommand::Restart,
            ("run", Some(n)) => {
                ScriptCommand::Run(n.parse().map_err(|_| err(format!("invalid slot count `{n}`")))?)
            }
            ("remove-arm" | "set-policy" | "run", None) => return Err(err(format!("`{verb}` needs an argument"))),
            ("restart", Some(a)) => return Err(err(format!("unexpected argument `{a}`"))),
            (other, _) => return Err(err(format!("unknown command `{other}`"))),
        };
        out.push(ScriptLine { line, command });
    }
    Ok(out)
}

/// Outcome of one `run` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// Zero-based experiment counter within the session.
    pub experiment: usize,
    pub k: usize,
    pub slots: u64,
    /// Slots elapsed in the experiment after this run.
    pub experiment_slots: u64,
    /// Most selected arm over the whole experiment so far.
    pub best_arm: usize,
    pub switch_slot: Option<u64>,
    pub total_reward: u64,
}

/// Replays scripts against a live engine and a mutable Bernoulli
/// environment. Rewards are keyed by a session-wide slot counter so
/// successive experiments draw fresh outcomes.
pub struct ScriptSession {
    engine: Engine,
    env: BernoulliEnv,
    spare: VecDeque<f64>,
    pending: Option<FeedbackFrame>,
    global_slot: u64,
    experiment: usize,
    counts: Vec<u64>,
    reward: u64,
}

impl ScriptSession {
    pub fn new(
        config: EngineConfig,
        policy: PolicyKind,
        means: Vec<f64>,
        spare: Vec<f64>,
        seed: u64,
    ) -> Result<Self, ScriptError> {
        let env = BernoulliEnv::new(means, seed).map_err(|source| ScriptError::Env { line: 0, source })?;
        let engine = Engine::new(config, policy, env.k(), seed).map_err(|source| ScriptError::Engine { line: 0, source })?;
        Ok(Self {
            counts: vec![0; env.k()],
            engine,
            env,
            spare: spare.into(),
            pending: None,
            global_slot: 0,
            experiment: 0,
            reward: 0,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn means(&self) -> &[f64] {
        self.env.means()
    }

    fn new_experiment(&mut self) {
        self.pending = None;
        self.experiment += 1;
        self.counts = vec![0; self.env.k()];
        self.reward = 0;
    }

    fn reconfigure(&mut self, line: usize, cmd: ReconfigCommand, means: Option<Vec<f64>>) -> Result<(), ScriptError> {
        self.engine.apply_reconfig(cmd).map_err(|source| ScriptError::Engine { line, source })?;
        if let Some(means) = means {
            self.env = BernoulliEnv::new(means, self.env.seed()).map_err(|source| ScriptError::Env { line, source })?;
        }
        Ok(())
    }

    pub fn execute(&mut self, step: &ScriptLine) -> Result<Option<RunRecord>, ScriptError> {
        let line = step.line;
        match step.command {
            ScriptCommand::AddArm(mean) => {
                let mean = match mean {
                    Some(m) => m,
                    None => *self.spare.front().ok_or(ScriptError::NoSpareMean { line })?,
                };
                let mut means = self.env.means().to_vec();
                means.push(mean);
                self.reconfigure(line, ReconfigCommand::AddArm, Some(means))?;
                if step.command == ScriptCommand::AddArm(None) {
                    self.spare.pop_front();
                }
                self.new_experiment();
            }
            ScriptCommand::RemoveArm(arm) => {
                let mut means = self.env.means().to_vec();
                if arm < means.len() {
                    means.remove(arm);
                }
                self.reconfigure(line, ReconfigCommand::RemoveArm(arm), Some(means))?;
                self.new_experiment();
            }
            ScriptCommand::SetPolicy(p) => self.reconfigure(line, ReconfigCommand::SetPolicy(p), None)?,
            ScriptCommand::Restart => {
                self.reconfigure(line, ReconfigCommand::Restart, None)?;
                self.new_experiment();
            }
            ScriptCommand::Run(slots) => return self.run(line, slots).map(Some),
        }
        Ok(None)
    }

    fn run(&mut self, line: usize, slots: u64) -> Result<RunRecord, ScriptError> {
        let engine_err = |source| ScriptError::Engine { line, source };
        for _ in 0..slots {
            let decision = match self.pending.take() {
                Some(frame) => self.engine.step(&frame),
                None => self.engine.decide(),
            }
            .map_err(engine_err)?;
            self.global_slot += 1;
            let r = self
                .env
                .draw_reward(decision.arm, self.global_slot)
                .map_err(|source| ScriptError::Env { line, source })?;
            self.counts[decision.arm] += 1;
            self.reward += u64::from(r);
            self.pending = Some(FeedbackFrame::pull(decision.arm, r));
        }
        let best = self.counts.iter().copied().max().unwrap_or(0);
        let state = self.engine.state();
        Ok(RunRecord {
            seed: self.env.seed(),
            experiment: self.experiment,
            k: state.k,
            slots,
            experiment_slots: self.counts.iter().sum(),
            best_arm: self.counts.iter().position(|&c| c == best).unwrap_or(0),
            switch_slot: state.switch.switch_slot,
            total_reward: self.reward,
        })
    }
}

/// Parses and replays `text`, returning one record per `run`.
pub fn replay_script(
    text: &str,
    config: EngineConfig,
    policy: PolicyKind,
    means: Vec<f64>,
    spare: Vec<f64>,
    seed: u64,
) -> Result<Vec<RunRecord>, ScriptError> {
    let lines = parse_script(text)?;
    let mut session = ScriptSession::new(config, policy, means, spare, seed)?;
    let mut records = Vec::new();
    for l in &lines {
        if let Some(r) = session.execute(l)? {
            records.push(r);
        }
    }
    Ok(records)
}

/// Event log with header
/// `seed,experiment,k,slots,experiment_slots,best_arm,switch_slot,total_reward`.
pub fn write_records_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), ScriptError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "experiment", "k", "slots", "experiment_slots", "best_arm", "switch_slot", "total_reward"])?;
    for r in records {
        w.write_record([
            r.seed.to_string(),
            r.experiment.to_string(),
            r.k.to_string(),
            r.slots.to_string(),
            r.experiment_slots.to_string(),
            r.best_arm.to_string(),
            r.switch_slot.map(|s| s.to_string()).unwrap_or_default(),
            r.total_reward.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
