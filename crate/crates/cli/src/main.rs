mod args;
mod output;

use std::collections::BTreeMap;
use std::io::Write;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use klucb::bench::{self, BenchResult};
use klucb::experiment::{aggregate, median, run_experiment, run_seeds, SimError, Summary};
use klucb::script::{replay_script, write_records_csv, RunRecord, ScriptError};
use klucb::{BernoulliEnv, EngineConfig, ExperimentSpec, PolicyKind};
use serde_json::json;

use args::{BenchArgs, Cli, Command, CompareArgs, RadioArgs, RunArgs, ScriptArgs, SweepArgs};
use output::{file_tag, metadata, Staged};

/// Exit code 1: arguments or configuration rejected before any work.
/// Exit code 2: failure while running or writing results.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn sim_err(e: SimError) -> Failure {
    match e {
        SimError::Io(_) | SimError::Csv(_) | SimError::Json(_) | SimError::Engine(_) => runtime_err(e),
        _ => config_err(e),
    }
}

fn script_err(e: ScriptError) -> Failure {
    match e {
        ScriptError::Io(_) | ScriptError::Csv(_) => runtime_err(e),
        _ => config_err(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::SweepBeta(a) => cmd_sweep_beta(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Radio(a) => cmd_radio(a),
        Command::Script(a) => cmd_script(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", render(f.error()));
            ExitCode::from(f.code())
        }
    }
}

/// Error chain joined with `: `, skipping causes the outer message already
/// contains.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn build_spec(means: &[f64], policy: PolicyKind, config: EngineConfig, n: u64, seed: u64) -> Result<ExperimentSpec, Failure> {
    let env = BernoulliEnv::new(means.to_vec(), seed).map_err(config_err)?;
    ExperimentSpec::new(env, policy, config, n).map_err(config_err)
}

fn check_seeds(count: u64) -> CmdResult {
    if count == 0 {
        return Err(config_err(anyhow!("--seeds must be at least 1")));
    }
    Ok(())
}

fn check_policies(policies: &[PolicyKind]) -> CmdResult {
    if policies.len() < 2 {
        return Err(config_err(anyhow!("at least 2 policies are required, got {}", policies.len())));
    }
    Ok(())
}

fn report_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let spec = build_spec(&a.means, a.policy, a.engine.config(), a.n, a.seed)?;
    let trace = run_experiment(&spec).map_err(sim_err)?;
    let summary = trace.summary(&spec.env);

    let tag = format!("run_{}_s{}", file_tag(&a.policy.name()), a.seed);
    let mut staged = Staged::new(&a.out.out).map_err(runtime_err)?;
    staged
        .write(&format!("{tag}.csv"), |w| trace.write_csv(w).map_err(Into::into))
        .map_err(runtime_err)?;
    staged
        .write_json(
            &format!("{tag}.json"),
            &json!({ "metadata": metadata(), "config": spec.config, "summary": summary }),
        )
        .map_err(runtime_err)?;
    let written = staged.commit().map_err(runtime_err)?;

    println!("policy        {}", a.policy.name());
    println!("total reward  {}", summary.total_reward);
    println!("mean reward   {:.4}", summary.mean_reward);
    println!("regret        {:.2}", summary.regret);
    match summary.switch_slot {
        Some(s) => println!("switch slot   {s}"),
        None => println!("switch slot   none"),
    }
    report_written(&written);
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    check_policies(&a.policies)?;
    check_seeds(a.seeds.seeds)?;
    let config = a.engine.config();
    let specs = a
        .policies
        .iter()
        .map(|&p| build_spec(&a.means, p, config.clone(), a.n, a.seeds.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = a.seeds.list();
    let ideal = specs[0].env.best_mean();

    let summaries = specs
        .iter()
        .map(|s| run_seeds(s, &seeds).and_then(|t| aggregate(&t)))
        .collect::<Result<Vec<Summary>, _>>()
        .map_err(sim_err)?;

    let mut staged = Staged::new(&a.out.out).map_err(runtime_err)?;
    staged
        .write("compare_curves.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["slot", "policy", "mean_reward", "ideal"])?;
            for s in &summaries {
                let name = s.policy.name();
                for (i, v) in s.mean_reward_curve.iter().enumerate() {
                    csv.write_record([(i + 1).to_string(), name.clone(), format!("{v:.6}"), ideal.to_string()])?;
                }
            }
            csv.flush()?;
            Ok(())
        })
        .map_err(runtime_err)?;
    let finals: BTreeMap<String, f64> = summaries.iter().map(|s| (s.policy.name(), s.final_mean_reward())).collect();
    staged
        .write_json(
            "compare_summary.json",
            &json!({
                "metadata": metadata(),
                "config": config,
                "means": a.means,
                "ideal": ideal,
                "seeds": seeds.len(),
                "final_mean_reward": finals,
                "summaries": summaries,
            }),
        )
        .map_err(runtime_err)?;
    let written = staged.commit().map_err(runtime_err)?;

    println!("ideal {ideal:.4}, {} seeds, N = {}", seeds.len(), a.n);
    for s in &summaries {
        let sw = match s.switch.median {
            Some(m) if s.policy.is_hybrid() => format!("  switch median {m:.1} ({}/{})", s.switch.switched_runs, s.runs),
            _ => String::new(),
        };
        println!(
            "{:<12} mean reward {:.4}  regret {:.1}{}",
            s.policy.name(),
            s.final_mean_reward(),
            s.mean_regret,
            sw
        );
    }
    report_written(&written);
    Ok(())
}

fn cmd_sweep_beta(a: SweepArgs) -> CmdResult {
    check_seeds(a.seeds.seeds)?;
    if a.betas.is_empty() {
        return Err(config_err(anyhow!("--betas must list at least one value")));
    }
    let spec = build_spec(&a.means, PolicyKind::KlUcb, a.engine.config(), a.n, a.seeds.seed)?;
    for &b in &a.betas {
        spec.config.clone().with_beta(b).validate().map_err(config_err)?;
    }
    if a.reps < bench::MIN_REPETITIONS {
        return Err(sim_err(SimError::Repetitions { got: a.reps, min: bench::MIN_REPETITIONS }));
    }
    let rows = bench::sweep_beta(&spec, &a.betas, &a.seeds.list(), a.reps).map_err(sim_err)?;

    let mut staged = Staged::new(&a.out.out).map_err(runtime_err)?;
    staged
        .write("sweep_beta.csv", |w| bench::write_beta_csv(&rows, w).map_err(Into::into))
        .map_err(runtime_err)?;
    staged
        .write_json(
            "sweep_beta.json",
            &json!({ "metadata": metadata(), "means": a.means, "horizon": a.n, "seeds": a.seeds.seeds, "rows": rows }),
        )
        .map_err(runtime_err)?;
    let written = staged.commit().map_err(runtime_err)?;

    println!("{:>5} {:>12} {:>14} {:>10}", "beta", "reward", "learned error", "ns/slot");
    for r in &rows {
        println!("{:>5} {:>12.1} {:>14.5} {:>10.1}", r.beta, r.mean_total_reward, r.mean_learned_error, r.mean_slot_ns);
    }
    report_written(&written);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    if a.policies.is_empty() {
        return Err(config_err(anyhow!("--policies must list at least one policy")));
    }
    if a.reps < bench::MIN_REPETITIONS {
        return Err(sim_err(SimError::Repetitions { got: a.reps, min: bench::MIN_REPETITIONS }));
    }
    let config = a.engine.config();
    let specs = a
        .policies
        .iter()
        .map(|&p| build_spec(&a.means, p, config.clone(), a.n, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    // Timed runs stay sequential.
    let results = specs
        .iter()
        .map(|s| bench::bench_policy(s, a.reps))
        .collect::<Result<Vec<BenchResult>, _>>()
        .map_err(sim_err)?;

    let mut staged = Staged::new(&a.out.out).map_err(runtime_err)?;
    staged
        .write("bench.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record([
                "policy",
                "horizon",
                "repetitions",
                "mean_slot_ns",
                "median_slot_ns",
                "p50_slot_ns",
                "p99_slot_ns",
                "median_total_us",
            ])?;
            for r in &results {
                csv.write_record([
                    r.policy.name(),
                    r.horizon.to_string(),
                    r.repetitions.to_string(),
                    format!("{:.2}", r.mean_slot_ns),
                    format!("{:.2}", r.median_slot_ns),
                    format!("{:.2}", r.p50_slot_ns),
                    format!("{:.2}", r.p99_slot_ns),
                    format!("{:.2}", r.median_total_us),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })
        .map_err(runtime_err)?;
    staged
        .write_json("bench.json", &json!({ "metadata": metadata(), "config": config, "results": results }))
        .map_err(runtime_err)?;
    let written = staged.commit().map_err(runtime_err)?;

    let base = results[0].median_slot_ns;
    println!("{:<12} {:>10} {:>10} {:>10} {:>8}", "policy", "ns/slot", "p50", "p99", "ratio");
    for r in &results {
        println!(
            "{:<12} {:>10.1} {:>10.1} {:>10.1} {:>8.2}",
            r.policy.name(),
            r.median_slot_ns,
            r.p50_slot_ns,
            r.p99_slot_ns,
            r.median_slot_ns / base
        );
    }
    println!("ratios relative to {}", results[0].policy.name());
    report_written(&written);
    Ok(())
}

fn cmd_radio(a: RadioArgs) -> CmdResult {
    check_seeds(a.seeds.seeds)?;
    if a.policies.is_empty() {
        return Err(config_err(anyhow!("--policies must list at least one policy")));
    }
    if a.bits_per_success == 0 {
        return Err(sim_err(SimError::BitsPerSuccess));
    }
    let config = a.engine.config();
    let specs = a
        .policies
        .iter()
        .map(|&p| build_spec(&a.means, p, config.clone(), a.n, a.seeds.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = a.seeds.list();

    let mut rows = Vec::with_capacity(specs.len() * seeds.len());
    for s in &specs {
        for &seed in &seeds {
            rows.push(bench::radio_demo(&s.with_seed(seed), a.bits_per_success).map(|r| (seed, r)).map_err(sim_err)?);
        }
    }

    let mut totals: Vec<(PolicyKind, f64, f64)> = Vec::new();
    for s in &specs {
        let mine: Vec<_> = rows.iter().filter(|(_, r)| r.policy == s.policy).collect();
        let k = mine.len() as f64;
        let kbits = mine.iter().map(|(_, r)| r.data_kbits()).sum::<f64>() / k;
        let bps = mine.iter().map(|(_, r)| r.throughput_bps).sum::<f64>() / k;
        totals.push((s.policy, kbits, bps));
    }

    let mut staged = Staged::new(&a.out.out).map_err(runtime_err)?;
    staged
        .write("radio.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["policy", "seed", "successes", "data_bits", "decision_time_us", "throughput_bps"])?;
            for (seed, r) in &rows {
                csv.write_record([
                    r.policy.name(),
                    seed.to_string(),
                    r.successes.to_string(),
                    r.data_bits.to_string(),
                    format!("{:.3}", r.decision_time_us),
                    format!("{:.1}", r.throughput_bps),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })
        .map_err(runtime_err)?;
    let mean_rows: Vec<_> = totals
        .iter()
        .map(|(p, kb, bps)| json!({ "policy": p, "mean_data_kbits": kb, "mean_throughput_bps": bps }))
        .collect();
    staged
        .write_json(
            "radio.json",
            &json!({
                "metadata": metadata(),
                "bits_per_success": a.bits_per_success,
                "horizon": a.n,
                "seeds": seeds.len(),
                "policies": mean_rows,
            }),
        )
        .map_err(runtime_err)?;
    let written = staged.commit().map_err(runtime_err)?;

    println!("{:<12} {:>14} {:>16}", "policy", "data (kbit)", "throughput (Mbps)");
    for (p, kb, bps) in &totals {
        println!("{:<12} {:>14.1} {:>16.2}", p.name(), kb, bps / 1e6);
    }
    report_written(&written);
    Ok(())
}

/// Last record of each experiment, grouped by experiment index.
fn experiment_ends(records: &[RunRecord]) -> BTreeMap<usize, RunRecord> {
    let mut ends = BTreeMap::new();
    for r in records {
        ends.insert(r.experiment, r.clone());
    }
    ends
}

fn cmd_script(a: ScriptArgs) -> CmdResult {
    check_seeds(a.seeds.seeds)?;
    let text = std::fs::read_to_string(&a.file)
        .with_context(|| format!("reading {}", a.file.display()))
        .map_err(config_err)?;
    klucb::script::parse_script(&text).map_err(script_err)?;
    let config = a.engine.config();
    config.validate().map_err(config_err)?;
    let seeds = a.seeds.list();

    let mut records = Vec::new();
    let mut per_experiment: BTreeMap<usize, Vec<RunRecord>> = BTreeMap::new();
    for &seed in &seeds {
        let recs = replay_script(&text, config.clone(), a.policy, a.means.clone(), a.extra_means.clone(), seed)
            .map_err(script_err)?;
        for (exp, end) in experiment_ends(&recs) {
            per_experiment.entry(exp).or_default().push(end);
        }
        records.extend(recs);
    }

    let mut lines = Vec::new();
    for (exp, ends) in &per_experiment {
        let mut slots: Vec<f64> = ends.iter().filter_map(|r| r.switch_slot.map(|s| s as f64)).collect();
        let switched = slots.len();
        let med = median(&mut slots);
        let mut best: BTreeMap<usize, usize> = BTreeMap::new();
        for r in ends {
            *best.entry(r.best_arm).or_default() += 1;
        }
        let modal_best = best.iter().max_by_key(|(arm, c)| (**c, std::cmp::Reverse(**arm))).map(|(arm, _)| *arm);
        lines.push(json!({
            "experiment": exp,
            "k": ends[0].k,
            "runs": ends.len(),
            "switched_runs": switched,
            "median_switch_slot": med,
            "modal_best_arm": modal_best,
        }));
    }

    let mut staged = Staged::new(&a.out.out).map_err(runtime_err)?;
    staged
        .write("script_events.csv", |w| write_records_csv(&records, w).map_err(Into::into))
        .map_err(runtime_err)?;
    staged
        .write_json(
            "script_summary.json",
            &json!({
                "metadata": metadata(),
                "script": a.file.display().to_string(),
                "policy": a.policy,
                "means": a.means,
                "extra_means": a.extra_means,
                "seeds": seeds.len(),
                "experiments": lines,
            }),
        )
        .map_err(runtime_err)?;
    let written = staged.commit().map_err(runtime_err)?;

    if lines.is_empty() {
        println!("script ran no slots");
    }
    let mut out = std::io::stdout().lock();
    for l in &lines {
        let med = l["median_switch_slot"].as_f64().map_or_else(|| "none".to_string(), |m| format!("{m:.1}"));
        writeln!(
            out,
            "experiment {}: K={} best arm {} median switch slot {} ({}/{} switched)",
            l["experiment"], l["k"], l["modal_best_arm"], med, l["switched_runs"], l["runs"]
        )
        .map_err(runtime_err)?;
    }
    drop(out);
    report_written(&written);
    Ok(())
}
