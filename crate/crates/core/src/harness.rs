//! Seeded training runs, periodic evaluation, CSV metrics and summaries.
//!
//! A run writes one `{algo}__{env}__seed{n}.csv` per seed, a `config.txt`
//! with the resolved settings, `random_baseline.csv` and `summary.csv`.
//! Metrics are a pure function of the config and the seed unless
//! `record_wall_time` is set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentConfig, Algorithm, UpdateStats};
use crate::error::{Error, Result};
use crate::mdp::{episode_seed, make_env, ActionVec, Environment, Evaluation, StateVec, Transition};
use crate::seeding::{derive_seed, stream_rng};

const RESET_STREAM: u64 = 40;
const EVAL_STREAM: u64 = 41;
const WARMUP_STREAM: u64 = 42;
const PROBE_STREAM: u64 = 43;
const PROBE_STATES: usize = 32;
const BASELINE_STREAM: u64 = 44;

/// Everything needed to reproduce a batch of runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Uniform-random steps collected before the agent starts acting.
    pub warmup: u64,
    pub jobs: usize,
    pub record_wall_time: bool,
    pub agent: AgentConfig,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, env: &str) -> Self {
        Self {
            env: env.to_string(),
            steps: 30_000,
            eval_interval: 1_000,
            eval_episodes: 5,
            seeds: vec![0, 1, 2, 3, 4],
            warmup: 1_000,
            jobs: 1,
            record_wall_time: false,
            agent: AgentConfig::desk(algorithm),
        }
    }

    /// Builds a config from ordered `key = value` pairs; later pairs win.
    ///
    /// The agent fields start from [`AgentConfig::desk`] for the final
    /// `algorithm` value, so pairs may come in any order.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let get = |key: &str| {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| k.as_ref() == key)
                .map(|(_, v)| v.as_ref().trim().to_string())
        };
        let algorithm: Algorithm = get("algorithm")
            .ok_or_else(|| Error::invalid("`algorithm` is required"))?
            .parse()?;
        let env = get("env").ok_or_else(|| Error::invalid("`env` is required"))?;
        let mut cfg = Self::new(algorithm, &env);
        for (k, v) in pairs {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "algorithm" => {}
            "env" => self.env = value.trim().to_string(),
            "steps" => self.steps = num(key, value)?,
            "eval_interval" => self.eval_interval = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "warmup" => self.warmup = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "record_wall_time" => self.record_wall_time = num(key, value)?,
            _ => {
                if !self.agent.set(key, value)? {
                    return Err(Error::invalid(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(Error::invalid("eval_interval must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::invalid("eval_episodes must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        make_env(&self.env)?;
        self.agent.validate()
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let mut out = vec![
            ("env", self.env.clone()),
            ("steps", self.steps.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("seeds", seeds),
            ("warmup", self.warmup.to_string()),
            ("jobs", self.jobs.to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
        ];
        out.extend(self.agent.pairs());
        out
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::invalid(format!("bad seed `{s}`"))))
        .collect()
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub eval_mean_return: f64,
    pub eval_std_return: f64,
    pub target_q_mean: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub protester_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub wall_seconds: Option<f64>,
}

pub fn metrics_file_name(algorithm: Algorithm, env: &str, seed: u64) -> String {
    format!("{}__{}__seed{}.csv", algorithm.id(), env, seed)
}

/// Splits a metrics file name into `(algorithm, env, seed)`.
pub fn parse_metrics_file_name(path: &Path) -> Option<(String, String, u64)> {
    let stem = path.file_name()?.to_str()?.strip_suffix(".csv")?;
    let mut parts = stem.split("__");
    let algo = parts.next()?;
    let env = parts.next()?;
    let seed = parts.next()?.strip_prefix("seed")?.parse().ok()?;
    if parts.next().is_some() || algo.parse::<Algorithm>().is_err() {
        return None;
    }
    Some((algo.to_string(), env.to_string(), seed))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Default)]
struct Accum {
    n: usize,
    critic: f64,
    actor: (f64, usize),
    protester: (f64, usize),
    alpha: (f64, usize),
}

impl Accum {
    fn push(&mut self, s: &UpdateStats) {
        fn add(slot: &mut (f64, usize), v: Option<f64>) {
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
        self.n += 1;
        self.critic += s.critic_loss;
        add(&mut self.actor, s.actor_loss);
        add(&mut self.protester, s.protester_loss);
        add(&mut self.alpha, s.alpha);
    }

    fn take(&mut self) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        let mean = |(sum, n): (f64, usize)| (n > 0).then(|| sum / n as f64);
        let out = (
            (self.n > 0).then(|| self.critic / self.n as f64),
            mean(self.actor),
            mean(self.protester),
            mean(self.alpha),
        );
        *self = Self::default();
        out
    }
}

/// States drawn from the environment's reset distribution, fixed per seed.
pub fn probe_states(env: &mut dyn Environment, seed: u64) -> Vec<StateVec> {
    (0..PROBE_STATES)
        .map(|i| env.reset(derive_seed(seed, PROBE_STREAM, i as u64)))
        .collect()
}

/// Trains one seed and returns its metrics rows.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<Vec<MetricsRow>> {
    let mut env = make_env(&cfg.env)?;
    let mut eval_env = make_env(&cfg.env)?;
    let spec = env.spec().clone();
    let mut agent: Agent<f32> = Agent::new(cfg.agent.clone(), &spec, seed)?;
    let probes = probe_states(&mut *eval_env, seed);
    let eval_seed = derive_seed(seed, EVAL_STREAM, 0);
    let mut warmup_rng = stream_rng(seed, WARMUP_STREAM, 0);
    let start = Instant::now();

    let mut episode = 0u64;
    let mut s = env.reset(derive_seed(seed, RESET_STREAM, episode));
    let mut stats = Accum::default();
    let mut rows = Vec::new();
    for step in 1..=cfg.steps {
        let unit: Vec<f64> = if step <= cfg.warmup {
            (0..spec.action_dim).map(|_| warmup_rng.gen_range(-1.0..=1.0)).collect()
        } else {
            agent.act_explore(&s.0)?
        };
        let out = env.step(&spec.denormalize(&unit));
        let t = Transition {
            s: s.clone(),
            a: ActionVec(unit),
            r: out.reward,
            s_next: out.state.clone(),
            done: out.terminated,
        };
        if step <= cfg.warmup {
            agent.observe(t);
        } else if let Some(u) = agent.train_step(t)? {
            stats.push(&u);
        }
        s = if out.done() {
            episode += 1;
            env.reset(derive_seed(seed, RESET_STREAM, episode))
        } else {
            out.state
        };

        if step % cfg.eval_interval == 0 || step == cfg.steps {
            let eval = crate::mdp::evaluate_policy(&mut *eval_env, &agent, cfg.eval_episodes, eval_seed)?;
            let (critic_loss, actor_loss, protester_loss, alpha) = stats.take();
            rows.push(MetricsRow {
                step,
                eval_mean_return: eval.mean_return,
                eval_std_return: eval.std_return,
                target_q_mean: agent.measure_target_q(&probes)?,
                critic_loss,
                actor_loss,
                protester_loss,
                alpha,
                wall_seconds: cfg.record_wall_time.then(|| start.elapsed().as_secs_f64()),
            });
        }
    }
    Ok(rows)
}

/// Return of a policy drawing uniform actions, over `episodes` rollouts
/// on the evaluation episode seeds.
pub fn random_policy_baseline(env_id: &str, episodes: usize, seed: u64) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::invalid("baseline needs at least one episode"));
    }
    let mut env = make_env(env_id)?;
    let spec = env.spec().clone();
    let mut rng = stream_rng(seed, BASELINE_STREAM, 0);
    let returns = (0..episodes)
        .map(|ep| {
            env.reset(episode_seed(seed, ep));
            let mut total = 0.0;
            for _ in 0..spec.max_episode_steps {
                let unit: Vec<f64> = (0..spec.action_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let out = env.step(&spec.denormalize(&unit));
                total += out.reward;
                if out.done() {
                    break;
                }
            }
            total
        })
        .collect();
    Ok(Evaluation::from_returns(returns))
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub metrics_files: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
    pub baseline: Evaluation,
}

/// Runs every seed, writes per-seed metrics, the baseline and the summary.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.to_text())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let files = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let rows = run_seed(cfg, seed)?;
                let path = out_dir.join(metrics_file_name(cfg.agent.algorithm, &cfg.env, seed));
                write_metrics(&path, &rows)?;
                Ok(path)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let episodes = cfg.eval_episodes * cfg.seeds.len().max(4);
    let baseline = random_policy_baseline(&cfg.env, episodes, cfg.seeds[0])?;
    let mut w = csv::Writer::from_path(out_dir.join("random_baseline.csv"))?;
    w.write_record(["env", "episodes", "mean_return", "std_return"])?;
    w.write_record([
        cfg.env.clone(),
        episodes.to_string(),
        baseline.mean_return.to_string(),
        baseline.std_return.to_string(),
    ])?;
    w.flush()?;

    let summary = aggregate(&files)?;
    write_summary(&out_dir.join("summary.csv"), &summary)?;
    Ok(ExperimentOutput {
        metrics_files: files,
        summary,
        baseline,
    })
}

/// Final-evaluation statistics for one (algorithm, environment) group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub env: String,
    pub seeds: usize,
    pub final_step: u64,
    pub mean: f64,
    /// Population std of the per-seed final means.
    pub std_across_seeds: f64,
    /// Population std of all final episodes pooled over seeds.
    pub std_pooled: f64,
    pub best: bool,
}

/// One seed's final evaluation, tagged with its group.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalEval {
    pub algorithm: String,
    pub env: String,
    pub seed: u64,
    pub step: u64,
    pub mean: f64,
    pub std: f64,
}

pub fn final_eval(path: &Path) -> Result<FinalEval> {
    let (algorithm, env, seed) =
        parse_metrics_file_name(path).ok_or_else(|| Error::UngroupedMetrics(path.to_path_buf()))?;
    let rows = read_metrics(path)?;
    let last = rows
        .last()
        .ok_or_else(|| Error::invalid(format!("{} has no rows", path.display())))?;
    Ok(FinalEval {
        algorithm,
        env,
        seed,
        step: last.step,
        mean: last.eval_mean_return,
        std: last.eval_std_return,
    })
}

/// Summarizes runs that must all share one algorithm and environment.
pub fn summarize(runs: &[FinalEval]) -> Result<SummaryRow> {
    let first = runs.first().ok_or_else(|| Error::invalid("nothing to summarize"))?;
    if let Some(odd) = runs.iter().find(|r| r.algorithm != first.algorithm || r.env != first.env) {
        return Err(Error::MixedGroups(format!(
            "{}/{} and {}/{}",
            first.algorithm, first.env, odd.algorithm, odd.env
        )));
    }
    let mut runs = runs.to_vec();
    runs.sort_by_key(|r| r.seed);
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.mean).sum::<f64>() / n;
    let var_seeds = runs.iter().map(|r| (r.mean - mean).powi(2)).sum::<f64>() / n;
    let second_moment = runs.iter().map(|r| r.std * r.std + r.mean * r.mean).sum::<f64>() / n;
    Ok(SummaryRow {
        algorithm: first.algorithm.clone(),
        env: first.env.clone(),
        seeds: runs.len(),
        final_step: runs.iter().map(|r| r.step).min().unwrap_or(0),
        mean,
        std_across_seeds: var_seeds.sqrt(),
        std_pooled: (second_moment - mean * mean).max(0.0).sqrt(),
        best: false,
    })
}

/// Groups metrics files by (algorithm, env), summarizes each group and
/// flags the best mean per environment.
pub fn aggregate(files: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    if files.is_empty() {
        return Err(Error::invalid("no metrics files"));
    }
    let mut groups: BTreeMap<(String, String), Vec<FinalEval>> = BTreeMap::new();
    for f in files {
        let e = final_eval(f)?;
        groups.entry((e.env.clone(), e.algorithm.clone())).or_default().push(e);
    }
    let mut rows = groups.values().map(|g| summarize(g)).collect::<Result<Vec<_>>>()?;
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for r in &rows {
        let b = best.entry(r.env.clone()).or_insert(f64::NEG_INFINITY);
        *b = b.max(r.mean);
    }
    for r in &mut rows {
        r.best = r.mean == best[&r.env];
    }
    Ok(rows)
}

/// Every metrics file directly inside `dir`, sorted by name.
pub fn metrics_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n.to_string_lossy().contains("__seed")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Trailing moving average; the first entries average what is available.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let part = &values[lo..=i];
            part.iter().sum::<f64>() / part.len() as f64
        })
        .collect()
}

/// `sign(x)·ln(1 + |x|)`, for plotting target values on a log scale.
pub fn signed_log1p(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Per-step means across seeds of one group's learning curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub algorithm: String,
    pub env: String,
    pub step: u64,
    pub eval_mean_return: f64,
    pub target_q_mean: f64,
    pub target_q_log: f64,
}

/// Learning curves averaged over seeds, optionally smoothed with window 5.
/// Steps missing from any seed are dropped.
pub fn curves(files: &[PathBuf], smoothed: bool) -> Result<Vec<CurvePoint>> {
    let mut groups: BTreeMap<(String, String), Vec<Vec<MetricsRow>>> = BTreeMap::new();
    for f in files {
        let (algo, env, _) = parse_metrics_file_name(f).ok_or_else(|| Error::UngroupedMetrics(f.clone()))?;
        groups.entry((env, algo)).or_default().push(read_metrics(f)?);
    }
    let mut out = Vec::new();
    for ((env, algo), runs) in groups {
        let mut by_step: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for run in &runs {
            for row in run {
                let e = by_step.entry(row.step).or_insert((0.0, 0.0, 0));
                e.0 += row.eval_mean_return;
                e.1 += row.target_q_mean;
                e.2 += 1;
            }
        }
        let points: Vec<(u64, f64, f64)> = by_step
            .into_iter()
            .filter(|(_, (_, _, n))| *n == runs.len())
            .map(|(step, (r, q, n))| (step, r / n as f64, q / n as f64))
            .collect();
        let mut returns: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut qs: Vec<f64> = points.iter().map(|p| p.2).collect();
        if smoothed {
            returns = smooth(&returns, 5);
            qs = smooth(&qs, 5);
        }
        for (i, p) in points.iter().enumerate() {
            out.push(CurvePoint {
                algorithm: algo.clone(),
                env: env.clone(),
                step: p.0,
                eval_mean_return: returns[i],
                target_q_mean: qs[i],
                target_q_log: signed_log1p(qs[i]),
            });
        }
    }
    Ok(out)
}

pub fn write_curves(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
