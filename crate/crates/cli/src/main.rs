use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use moderate_rl::harness::{self, RunConfig, SummaryRow};
use moderate_rl::tabular::{bias_probe, verify_suite, MdpTable, ProbeEstimator};

#[derive(Parser)]
#[command(name = "moderate-rl", version, about = "Train and compare moderate-target actor-critic agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm on one environment for every seed.
    Train(TrainArgs),
    /// Brute-force checks of the moderate Bellman operator on random finite MDPs.
    TabularVerify {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize the final evaluations of every metrics file in a directory.
    Aggregate {
        dir: PathBuf,
        /// Also write seed-averaged learning curves to `curves.csv`.
        #[arg(long)]
        curves: bool,
        /// Smooth the curves with a moving average of window 5.
        #[arg(long, requires = "curves")]
        smooth: bool,
    },
    /// Bias of a next-state value estimator on a K-armed bandit with equal arms.
    BiasProbe {
        #[arg(long)]
        estimator: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.2)]
        omega: f64,
        #[arg(long, default_value_t = 0.01)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    /// Comma-separated list, e.g. `0,1,2`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    warmup: Option<u64>,
    /// Seeds trained in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// File of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn train(args: TrainArgs) -> Result<()> {
    let mut pairs = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            harness::parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    push("algorithm", args.algo);
    push("env", args.env);
    push("steps", args.steps.map(|v| v.to_string()));
    push("seeds", args.seeds);
    push("omega", args.omega.map(|v| v.to_string()));
    push("tau", args.tau.map(|v| v.to_string()));
    push("eval_interval", args.eval_interval.map(|v| v.to_string()));
    push("eval_episodes", args.eval_episodes.map(|v| v.to_string()));
    push("warmup", args.warmup.map(|v| v.to_string()));
    push("jobs", args.jobs.map(|v| v.to_string()));
    for o in &args.overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("override `{o}` is not KEY=VALUE");
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let cfg = RunConfig::from_pairs(&pairs)?;
    let out = harness::run_experiment(&cfg, &args.out)?;
    print_summary(&out.summary);
    println!(
        "random policy: {:.3} ± {:.3} over {} episodes",
        out.baseline.mean_return,
        out.baseline.std_return,
        out.baseline.returns.len()
    );
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<10} {:<16} {:>5} {:>8} {:>12} {:>12} {:>12}",
        "algorithm", "env", "seeds", "step", "mean", "std(seeds)", "std(pooled)"
    );
    for r in rows {
        println!(
            "{:<10} {:<16} {:>5} {:>8} {:>12.3} {:>12.3} {:>12.3}{}",
            r.algorithm,
            r.env,
            r.seeds,
            r.final_step,
            r.mean,
            r.std_across_seeds,
            r.std_pooled,
            if r.best { "  *" } else { "" }
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(args) => train(args)?,
        Command::TabularVerify { trials, seed } => {
            let checks = verify_suite(trials, seed)?;
            let mut ok = true;
            for c in &checks {
                ok &= c.passed();
                println!(
                    "{} {} ({} cases, {} failures, worst {:e})",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.failures,
                    c.worst
                );
            }
            return Ok(ok);
        }
        Command::Aggregate { dir, curves, smooth } => {
            let files = harness::metrics_files_in(&dir)?;
            let rows = harness::aggregate(&files)?;
            harness::write_summary(&dir.join("summary.csv"), &rows)?;
            print_summary(&rows);
            if curves {
                harness::write_curves(&dir.join("curves.csv"), &harness::curves(&files, smooth)?)?;
            }
        }
        Command::BiasProbe { estimator, k, trials, noise, omega, tau, seed } => {
            let est = ProbeEstimator::parse(&estimator, omega, tau)?;
            let m = MdpTable::noisy_bandit(k, 0.99)?;
            let b = bias_probe(&m, noise, trials, est, seed)?;
            println!("{}: bias {:.6} ± {:.6} (standard error, {} trials)", est.name(), b.mean, b.std_err, b.trials);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
