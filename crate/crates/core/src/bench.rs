//! Decision-latency benchmarks, the beta sweep and the channel-selection
//! throughput demo.
//!
//! Timed runs precompute the full reward table first, so the clock only
//! covers the statistic update, the quality factors and the arm selection.
//! Absolute numbers depend on the machine; compare ratios.

use std::hint::black_box;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::PolicyKind;
use crate::engine::Engine;
use crate::experiment::{learned_mean_error, median, run_seeds, ExperimentSpec, SimError};
use crate::frame::FeedbackFrame;

const WARMUP_RUNS: usize = 2;
pub const MIN_REPETITIONS: usize = 10;

/// Reward table for `spec`, laid out slot-major.
struct Rewards {
    table: Vec<bool>,
    k: usize,
}

impl Rewards {
    fn new(spec: &ExperimentSpec) -> Self {
        Self { table: spec.env.reward_table(spec.horizon), k: spec.env.k() }
    }

    #[inline]
    fn get(&self, slot_index: usize, arm: usize) -> bool {
        self.table[slot_index * self.k + arm]
    }
}

/// One closed-loop run over the precomputed table. Returns the decision-path
/// time, the selections and the number of reward-1 slots.
fn timed_run(spec: &ExperimentSpec, rewards: &Rewards) -> Result<(Duration, Vec<usize>, u64), SimError> {
    let n = spec.horizon as usize;
    let mut engine = Engine::new(spec.config.clone(), spec.policy, spec.env.k(), spec.env.seed())?;
    let mut selections = vec![0usize; n];
    let mut successes = 0u64;
    let mut frame = FeedbackFrame::restart();
    let start = Instant::now();
    for (i, sel) in selections.iter_mut().enumerate() {
        let arm = engine.step(black_box(&frame))?.arm;
        let r = rewards.get(i, arm);
        successes += u64::from(r);
        *sel = arm;
        frame = FeedbackFrame::pull(arm, r);
    }
    let elapsed = start.elapsed();
    Ok((elapsed, black_box(selections), successes))
}

/// Same loop with every slot timed individually. Each sample includes the
/// clock-read overhead.
fn per_slot_samples(spec: &ExperimentSpec, rewards: &Rewards) -> Result<Vec<f64>, SimError> {
    let mut engine = Engine::new(spec.config.clone(), spec.policy, spec.env.k(), spec.env.seed())?;
    let mut samples = Vec::with_capacity(spec.horizon as usize);
    let mut frame = FeedbackFrame::restart();
    for i in 0..spec.horizon as usize {
        let t0 = Instant::now();
        let arm = engine.step(black_box(&frame))?.arm;
        samples.push(t0.elapsed().as_nanos() as f64);
        frame = FeedbackFrame::pull(arm, rewards.get(i, arm));
    }
    Ok(samples)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub policy: PolicyKind,
    pub horizon: u64,
    pub repetitions: usize,
    /// Mean over repetitions of decision time / horizon.
    pub mean_slot_ns: f64,
    /// Median over repetitions of decision time / horizon.
    pub median_slot_ns: f64,
    /// Percentiles of individually timed slots (clock overhead included).
    pub p50_slot_ns: f64,
    pub p99_slot_ns: f64,
    /// Median decision time of a whole experiment.
    pub median_total_us: f64,
    pub rep_total_us: Vec<f64>,
}

/// Times the decision path of `spec` over `repetitions` runs after
/// discarding warm-up runs.
pub fn bench_policy(spec: &ExperimentSpec, repetitions: usize) -> Result<BenchResult, SimError> {
    spec.validate()?;
    if repetitions < MIN_REPETITIONS {
        return Err(SimError::Repetitions { got: repetitions, min: MIN_REPETITIONS });
    }
    let rewards = Rewards::new(spec);
    for _ in 0..WARMUP_RUNS {
        timed_run(spec, &rewards)?;
    }
    let mut totals = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        totals.push(timed_run(spec, &rewards)?.0.as_secs_f64() * 1e6);
    }
    let n = spec.horizon as f64;
    let per_slot: Vec<f64> = totals.iter().map(|us| us * 1e3 / n).collect();
    let mut samples = per_slot_samples(spec, &rewards)?;
    samples.sort_by(f64::total_cmp);
    Ok(BenchResult {
        policy: spec.policy,
        horizon: spec.horizon,
        repetitions,
        mean_slot_ns: per_slot.iter().sum::<f64>() / per_slot.len() as f64,
        median_slot_ns: median(&mut per_slot.clone()).unwrap_or(0.0),
        p50_slot_ns: percentile(&samples, 0.5),
        p99_slot_ns: percentile(&samples, 0.99),
        median_total_us: median(&mut totals.clone()).unwrap_or(0.0),
        rep_total_us: totals,
    })
}

/// Selections of a timed run, for checking that timing does not perturb
/// decisions.
pub fn timed_selections(spec: &ExperimentSpec) -> Result<Vec<usize>, SimError> {
    spec.validate()?;
    Ok(timed_run(spec, &Rewards::new(spec))?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub beta: u32,
    pub mean_total_reward: f64,
    pub mean_learned_error: f64,
    pub mean_slot_ns: f64,
    /// Per-seed learned-mean errors, in seed order.
    #[serde(skip)]
    pub learned_errors: Vec<f64>,
}

/// Reward, learned-mean error and per-slot decision time for each `beta`.
/// Reward and error are averaged over `seeds`; timing uses the reward seed
/// of `spec`.
pub fn sweep_beta(
    spec: &ExperimentSpec,
    betas: &[u32],
    seeds: &[u64],
    repetitions: usize,
) -> Result<Vec<BetaRow>, SimError> {
    if betas.is_empty() || seeds.is_empty() {
        return Err(SimError::Empty);
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let s = ExperimentSpec { config: spec.config.clone().with_beta(beta), ..spec.clone() };
        s.validate()?;
        let traces = run_seeds(&s, seeds)?;
        let learned_errors = traces
            .iter()
            .map(|t| learned_mean_error(&t.final_stats, &s.env))
            .collect::<Result<Vec<_>, _>>()?;
        let runs = traces.len() as f64;
        rows.push(BetaRow {
            beta,
            mean_total_reward: traces.iter().map(|t| t.total_reward() as f64).sum::<f64>() / runs,
            mean_learned_error: learned_errors.iter().sum::<f64>() / runs,
            mean_slot_ns: bench_policy(&s, repetitions)?.median_slot_ns,
            learned_errors,
        });
    }
    Ok(rows)
}

/// CSV with header `beta,mean_total_reward,mean_learned_error,mean_slot_ns`.
pub fn write_beta_csv<W: Write>(rows: &[BetaRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["beta", "mean_total_reward", "mean_learned_error", "mean_slot_ns"])?;
    }
    w.flush()?;
    Ok(())
}

/// Channel-selection throughput: every reward-1 slot delivers one packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioDemoResult {
    pub policy: PolicyKind,
    pub successes: u64,
    pub data_bits: u64,
    pub decision_time_us: f64,
    /// Bits per second of decision-path wall time.
    pub throughput_bps: f64,
}

impl RadioDemoResult {
    pub fn from_counts(policy: PolicyKind, successes: u64, bits_per_success: u64, decision_time: Duration) -> Self {
        let data_bits = successes * bits_per_success;
        let secs = decision_time.as_secs_f64();
        let throughput_bps = if data_bits == 0 || secs <= 0.0 { 0.0 } else { data_bits as f64 / secs };
        Self { policy, successes, data_bits, decision_time_us: secs * 1e6, throughput_bps }
    }

    pub fn data_kbits(&self) -> f64 {
        self.data_bits as f64 / 1e3
    }
}

pub const DEFAULT_BITS_PER_SUCCESS: u64 = 1000;
const RADIO_TIMED_RUNS: usize = 5;

pub fn radio_demo(spec: &ExperimentSpec, bits_per_success: u64) -> Result<RadioDemoResult, SimError> {
    spec.validate()?;
    if bits_per_success == 0 {
        return Err(SimError::BitsPerSuccess);
    }
    let rewards = Rewards::new(spec);
    timed_run(spec, &rewards)?;
    let mut times = Vec::with_capacity(RADIO_TIMED_RUNS);
    let mut successes = 0;
    for _ in 0..RADIO_TIMED_RUNS {
        let (t, _, s) = timed_run(spec, &rewards)?;
        times.push(t);
        successes = s;
    }
    times.sort_unstable();
    Ok(RadioDemoResult::from_counts(spec.policy, successes, bits_per_success, times[RADIO_TIMED_RUNS / 2]))
}

/// CPU model string from `/proc/cpuinfo`, when available.
pub fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}
