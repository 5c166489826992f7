//! Closed-loop experiments: engine decision, environment reward, feedback
//! frame, next decision.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig, PolicyKind};
use crate::engine::{DecisionKind, Engine, EngineError};
use crate::env::{BernoulliEnv, EnvError};
use crate::frame::FeedbackFrame;
use crate::stats::ArmStats;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("horizon {horizon} shorter than the {k}-slot INIT phase")]
    Horizon { horizon: u64, k: usize },
    #[error("{k} arms exceed k_max = {k_max}")]
    TooManyArms { k: usize, k_max: usize },
    #[error("nothing to aggregate")]
    Empty,
    #[error("traces have different horizons ({0} vs {1})")]
    ShapeMismatch(u64, u64),
    #[error("benchmark needs at least {min} repetitions, got {got}")]
    Repetitions { got: usize, min: usize },
    #[error("bits per success must be positive")]
    BitsPerSuccess,
    #[error("arm {0} was never pulled")]
    Unpulled(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub env: BernoulliEnv,
    pub policy: PolicyKind,
    pub config: EngineConfig,
    pub horizon: u64,
}

impl ExperimentSpec {
    pub fn new(env: BernoulliEnv, policy: PolicyKind, config: EngineConfig, horizon: u64) -> Result<Self, SimError> {
        let spec = Self { env, policy, config, horizon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.config.validate()?;
        let k = self.env.k();
        if k > self.config.k_max {
            return Err(SimError::TooManyArms { k, k_max: self.config.k_max });
        }
        if self.horizon < k as u64 {
            return Err(SimError::Horizon { horizon: self.horizon, k });
        }
        Ok(())
    }

    /// Same spec on another reward seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { env: self.env.with_seed(seed), ..self.clone() }
    }

    pub fn with_policy(&self, policy: PolicyKind) -> Self {
        Self { policy, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub policy: PolicyKind,
    pub seed: u64,
    pub selections: Vec<usize>,
    pub rewards: Vec<bool>,
    pub kinds: Vec<DecisionKind>,
    pub switch_slot: Option<u64>,
    pub qf_eval_count: u64,
    pub klucb_eval_count: u64,
    pub wall_time: Duration,
    /// Statistics after the last slot's reward has been applied.
    pub final_stats: Vec<ArmStats>,
    pub regret: f64,
}

impl ExperimentTrace {
    pub fn horizon(&self) -> u64 {
        self.selections.len() as u64
    }

    pub fn total_reward(&self) -> u64 {
        self.rewards.iter().filter(|&&r| r).count() as u64
    }

    pub fn cumulative_rewards(&self) -> impl Iterator<Item = u64> + '_ {
        self.rewards.iter().scan(0u64, |acc, &r| {
            *acc += u64::from(r);
            Some(*acc)
        })
    }

    pub fn selection_counts(&self, k: usize) -> Vec<u64> {
        let mut counts = vec![0u64; k];
        for &a in &self.selections {
            counts[a] += 1;
        }
        counts
    }

    /// Most frequently selected arm, lowest index on ties.
    pub fn most_selected(&self) -> Option<usize> {
        let k = self.selections.iter().copied().max()? + 1;
        let counts = self.selection_counts(k);
        let best = *counts.iter().max()?;
        counts.iter().position(|&c| c == best)
    }

    pub fn summary(&self, env: &BernoulliEnv) -> TraceSummary {
        TraceSummary {
            policy: self.policy,
            seed: self.seed,
            horizon: self.horizon(),
            means: env.means().to_vec(),
            total_reward: self.total_reward(),
            mean_reward: self.total_reward() as f64 / self.horizon().max(1) as f64,
            regret: self.regret,
            switch_slot: self.switch_slot,
            most_selected: self.most_selected(),
            selection_counts: self.selection_counts(env.k()),
            qf_evaluations: self.qf_eval_count,
            wall_time_us: self.wall_time.as_secs_f64() * 1e6,
        }
    }

    /// CSV with header `slot,arm,reward,cum_reward,mode`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "arm", "reward", "cum_reward", "mode"])?;
        for (i, cum) in self.cumulative_rewards().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                self.selections[i].to_string(),
                u8::from(self.rewards[i]).to_string(),
                cum.to_string(),
                self.kinds[i].label().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// JSON sidecar of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub policy: PolicyKind,
    pub seed: u64,
    pub horizon: u64,
    pub means: Vec<f64>,
    pub total_reward: u64,
    pub mean_reward: f64,
    pub regret: f64,
    pub switch_slot: Option<u64>,
    pub most_selected: Option<usize>,
    pub selection_counts: Vec<u64>,
    pub qf_evaluations: u64,
    pub wall_time_us: f64,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTrace, SimError> {
    spec.validate()?;
    let env = &spec.env;
    let n = spec.horizon as usize;
    let mut engine = Engine::new(spec.config.clone(), spec.policy, env.k(), env.seed())?;
    let mut selections = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);

    let start = Instant::now();
    let mut frame = FeedbackFrame::restart();
    for slot in 1..=spec.horizon {
        let d = engine.step(&frame)?;
        let r = env.draw_reward(d.arm, slot)?;
        selections.push(d.arm);
        rewards.push(r);
        kinds.push(d.kind);
        frame = FeedbackFrame::pull(d.arm, r);
    }
    engine.update_stats(&frame)?;
    let wall_time = start.elapsed();

    let regret = pseudo_regret(&selections, env);
    Ok(ExperimentTrace {
        policy: spec.policy,
        seed: env.seed(),
        selections,
        rewards,
        kinds,
        switch_slot: engine.state().switch.switch_slot,
        qf_eval_count: engine.qf_evaluations(),
        klucb_eval_count: engine.klucb_evaluations(),
        wall_time,
        final_stats: engine.state().stats.clone(),
        regret,
    })
}

/// Runs `spec` once per seed, in parallel. Output order follows `seeds`.
pub fn run_seeds(spec: &ExperimentSpec, seeds: &[u64]) -> Result<Vec<ExperimentTrace>, SimError> {
    seeds.par_iter().map(|&s| run_experiment(&spec.with_seed(s))).collect()
}

/// `sum_t (mu* - mu[I_t])`. Every selection must index an arm of `env`.
pub fn pseudo_regret(selections: &[usize], env: &BernoulliEnv) -> f64 {
    let best = env.best_mean();
    selections.iter().map(|&a| best - env.means()[a]).sum()
}

/// `max_k |X_k / T_k - mu_k|`.
pub fn learned_mean_error(stats: &[ArmStats], env: &BernoulliEnv) -> Result<f64, SimError> {
    stats.iter().zip(env.means()).enumerate().try_fold(0.0f64, |acc, (arm, (s, &mu))| {
        let mean = s.mean().ok_or(SimError::Unpulled(arm))?;
        Ok(acc.max((mean - mu).abs()))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchSummary {
    pub switched_runs: usize,
    pub fraction: f64,
    pub median: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
    pub slots: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: PolicyKind,
    pub runs: usize,
    pub horizon: u64,
    pub mean_total_reward: f64,
    pub sd_total_reward: f64,
    /// Half-width of a normal-approximation 95% interval on the mean.
    pub ci95_total_reward: f64,
    pub mean_regret: f64,
    pub mean_qf_evaluations: f64,
    pub switch: SwitchSummary,
    /// Mean over runs of the running average reward `cum_reward(t) / t`.
    #[serde(skip)]
    pub mean_reward_curve: Vec<f64>,
}

impl Summary {
    /// Running average reward at the horizon.
    pub fn final_mean_reward(&self) -> f64 {
        self.mean_reward_curve.last().copied().unwrap_or(0.0)
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len().is_multiple_of(2) { 0.5 * (values[m - 1] + values[m]) } else { values[m] })
}

pub fn aggregate(traces: &[ExperimentTrace]) -> Result<Summary, SimError> {
    let first = traces.first().ok_or(SimError::Empty)?;
    let horizon = first.horizon();
    if let Some(t) = traces.iter().find(|t| t.horizon() != horizon) {
        return Err(SimError::ShapeMismatch(horizon, t.horizon()));
    }
    let runs = traces.len();
    let rf = runs as f64;

    let totals: Vec<f64> = traces.iter().map(|t| t.total_reward() as f64).collect();
    let mean_total_reward = totals.iter().sum::<f64>() / rf;
    let sd_total_reward = if runs > 1 {
        (totals.iter().map(|x| (x - mean_total_reward).powi(2)).sum::<f64>() / (rf - 1.0)).sqrt()
    } else {
        0.0
    };

    let mut curve = vec![0.0; horizon as usize];
    for t in traces {
        for (i, cum) in t.cumulative_rewards().enumerate() {
            curve[i] += cum as f64 / (i + 1) as f64;
        }
    }
    curve.iter_mut().for_each(|c| *c /= rf);

    let mut slots: Vec<u64> = traces.iter().filter_map(|t| t.switch_slot).collect();
    slots.sort_unstable();
    let mut as_f: Vec<f64> = slots.iter().map(|&s| s as f64).collect();
    let switch = SwitchSummary {
        switched_runs: slots.len(),
        fraction: slots.len() as f64 / rf,
        median: median(&mut as_f),
        min: slots.first().copied(),
        max: slots.last().copied(),
        slots,
    };

    Ok(Summary {
        policy: first.policy,
        runs,
        horizon,
        mean_total_reward,
        sd_total_reward,
        ci95_total_reward: 1.96 * sd_total_reward / rf.sqrt(),
        mean_regret: traces.iter().map(|t| t.regret).sum::<f64>() / rf,
        mean_qf_evaluations: traces.iter().map(|t| t.qf_eval_count as f64).sum::<f64>() / rf,
        switch,
        mean_reward_curve: curve,
    })
}
