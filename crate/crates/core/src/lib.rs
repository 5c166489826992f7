//! Reconfigurable multi-armed bandit decision engine.
//!
//! The crate is organised around the per-slot pipeline of a hardware-style
//! bandit accelerator:
//!
//! * [`stats`], [`frame`] and [`config`] hold the per-arm statistics, the
//!   packed feedback word that drives the statistic update, and the engine
//!   parameters.
//! * [`qf`] computes quality factors: UCB, UCB-Tuned, UCB-V and KL-UCB, the
//!   latter both as a fixed-iteration bisection and as a tolerance-driven
//!   reference solver.
//! * [`engine`] and [`switch`] run the decision loop, including the one-way
//!   KL-UCB to UCB switch and runtime reconfiguration of arms and policy.
//! * [`env`], [`experiment`], [`script`] and [`bench`] close the loop with a
//!   seeded Bernoulli environment, collect traces and metrics, replay
//!   reconfiguration scripts and measure decision latency.

pub mod bench;
pub mod config;
pub mod engine;
pub mod env;
pub mod experiment;
pub mod frame;
pub mod qf;
pub mod script;
pub mod stats;
pub mod switch;

pub use config::{ConfigError, EngineConfig, PolicyKind, UcbVariant, WindowStyle};
pub use engine::{Decision, DecisionKind, Engine, EngineError, EngineState, Phase, ReconfigCommand};
pub use env::BernoulliEnv;
pub use experiment::{run_experiment, ExperimentSpec, ExperimentTrace};
pub use frame::FeedbackFrame;
pub use stats::ArmStats;
