use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use klucb::{EngineConfig, PolicyKind};

pub const OUT_DIR_ENV: &str = "KLUCB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "klucb", version, about = "Bandit arm selection with KL-UCB, UCB and the hybrid switch")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its trace and summary.
    Run(RunArgs),
    /// Average reward curves of several policies over many seeds.
    Compare(CompareArgs),
    /// Reward, learned-mean error and decision time for several beta values.
    SweepBeta(SweepArgs),
    /// Time the decision path of each policy.
    Bench(BenchArgs),
    /// Channel-selection data volume and throughput per policy.
    Radio(RadioArgs),
    /// Replay a reconfiguration script over several seeds.
    Script(ScriptArgs),
}

/// Engine parameters shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Exploration weight of standalone UCB policies.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Exploration weight of the UCB half of a hybrid policy.
    #[arg(long)]
    pub hybrid_alpha: Option<f64>,
    /// Coefficient of the ln ln n term in the KL-UCB budget.
    #[arg(long)]
    pub c: Option<f64>,
    /// Bisection iterations.
    #[arg(long, conflicts_with = "epsilon")]
    pub beta: Option<u32>,
    /// Target resolution; sets beta = ceil(1 / epsilon).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Agreement window length.
    #[arg(long)]
    pub window: Option<usize>,
    /// Fraction of agreeing slots in the window that triggers the switch.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Arm capacity; must be a power of two.
    #[arg(long)]
    pub k_max: Option<usize>,
}

impl EngineArgs {
    pub fn config(&self) -> EngineConfig {
        let mut cfg = EngineConfig::default();
        if let Some(a) = self.alpha {
            cfg = cfg.with_alpha(a);
        }
        if let Some(a) = self.hybrid_alpha {
            cfg = cfg.with_hybrid_alpha(a);
        }
        if let Some(c) = self.c {
            cfg = cfg.with_c(c);
        }
        if let Some(b) = self.beta {
            cfg = cfg.with_beta(b);
        }
        if let Some(e) = self.epsilon {
            cfg = cfg.with_epsilon(e);
        }
        if self.window.is_some() || self.threshold.is_some() {
            let window = self.window.unwrap_or(cfg.window);
            let threshold = self.threshold.unwrap_or(cfg.agree_threshold);
            cfg = cfg.with_window(window, threshold);
        }
        if let Some(k) = self.k_max {
            cfg = cfg.with_k_max(k);
        }
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SeedRange {
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
}

impl SeedRange {
    pub fn list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Comma-separated Bernoulli arm means.
    #[arg(long, value_delimiter = ',', required = true)]
    pub means: Vec<f64>,
    #[arg(long, default_value = "klucb+ucb", value_parser = parse_policy)]
    pub policy: PolicyKind,
    /// Horizon in slots.
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub means: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "ucb,klucb,klucb+ucb", value_parser = parse_policy)]
    pub policies: Vec<PolicyKind>,
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[command(flatten)]
    pub seeds: SeedRange,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub means: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,12,16")]
    pub betas: Vec<u32>,
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    /// Timed repetitions per beta.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[command(flatten)]
    pub seeds: SeedRange,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub means: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "ucb,klucb,klucb+ucb", value_parser = parse_policy)]
    pub policies: Vec<PolicyKind>,
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RadioArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub means: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "klucb,klucb+ucb", value_parser = parse_policy)]
    pub policies: Vec<PolicyKind>,
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    /// Payload bits credited per reward-1 slot.
    #[arg(long, default_value_t = klucb::bench::DEFAULT_BITS_PER_SUCCESS)]
    pub bits_per_success: u64,
    #[command(flatten)]
    pub seeds: SeedRange,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ScriptArgs {
    /// Script file with one command per line.
    pub file: PathBuf,
    /// Means of the arms present at the start.
    #[arg(long, value_delimiter = ',', required = true)]
    pub means: Vec<f64>,
    /// Means handed out, in order, to `add-arm` lines without an explicit mean.
    #[arg(long, value_delimiter = ',')]
    pub extra_means: Vec<f64>,
    #[arg(long, default_value = "klucb+ucb", value_parser = parse_policy)]
    pub policy: PolicyKind,
    #[command(flatten)]
    pub seeds: SeedRange,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse::<PolicyKind>().map_err(|e| e.to_string())
}
