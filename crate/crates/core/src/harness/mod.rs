//! Config-driven experiments: trials in parallel, regret and detection metrics,
//! CSV and SVG output.

mod emit;
mod metrics;

pub use emit::{emit_csv, emit_plot, series_csv, CSV_HEADER};
pub use metrics::{compute_auc, compute_regret, mean_stderr, regret_from_values};

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::{theory_beta, Club, CwOful, Exp3S, Exp3SParams, LinUcb, RLinUcb, SwUcb};
use crate::cbmum::{Rclumb, RclumbParams, Rsclumb};
use crate::conbandit::{ConLinUcb, ConversationalPolicy, KeyTermStrategy};
use crate::dueling::{Coldb, ColdbParams};
use crate::env::{gen_env, stream_rng, EnvKind, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::locud::{DetectionReport, RclubWcu, RclubWcuParams};
use crate::nonstat::{Bob, BobParams, Radius, RwOful, RwOfulParams, SavePlus, SavePlusParams};
use crate::policy::{Context, DuelingPolicy, Policy};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "BANDITLAB_THREADS";

const STREAM_POLICY: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    LinucbInd,
    LinucbOne,
    RlinucbInd,
    CwofulInd,
    Club,
    Rclumb,
    Rsclumb,
    Sclub,
    RclubWcu,
    Conlinucb,
    RwOful,
    SavePlus,
    SavePlusBob,
    SwUcb,
    Exp3s,
    Coldb,
    LdbInd,
}

impl Algo {
    pub fn params(self) -> &'static [&'static str] {
        match self {
            Algo::LinucbInd | Algo::LinucbOne => &["lambda", "beta", "delta"],
            Algo::RlinucbInd => &["lambda", "beta", "delta", "eps_star", "clip"],
            Algo::CwofulInd => &["lambda", "beta", "delta", "alpha", "corruption"],
            Algo::Club => &["lambda", "beta", "delta", "alpha1"],
            Algo::Rclumb | Algo::Rsclumb => &["lambda", "beta", "delta", "eps_star", "alpha1", "alpha2", "clip"],
            Algo::Sclub => &["lambda", "beta", "delta", "alpha1", "alpha2"],
            Algo::RclubWcu => &["lambda", "beta", "delta", "alpha", "alpha1", "corruption"],
            Algo::Conlinucb => &["strategy", "lambda", "delta", "alpha"],
            Algo::RwOful => &[
                "lambda", "alpha", "gamma", "window", "delta", "arm_bound", "theta_bound", "noise_bound", "beta",
            ],
            Algo::SavePlus => &["alpha", "window", "delta", "theta_bound", "noise_bound", "beta_scale"],
            Algo::SavePlusBob => &["delta", "theta_bound", "noise_bound", "strict"],
            Algo::SwUcb => &["lambda", "beta", "delta", "window"],
            Algo::Exp3s => &["gamma", "share", "lr", "reward_min", "reward_max"],
            Algo::Coldb | Algo::LdbInd => &["lambda", "delta", "score_bound", "lambda_x", "beta", "refit_ratio"],
        }
    }

    pub fn is_dueling(self) -> bool {
        matches!(self, Algo::Coldb | Algo::LdbInd)
    }

    /// Whether the policy reports corrupted-user detection scores.
    pub fn detects(self) -> bool {
        matches!(self, Algo::RclubWcu)
    }

    fn check_kind(self, kind: EnvKind) -> Result<()> {
        let ok = match self {
            Algo::Coldb | Algo::LdbInd => kind == EnvKind::Dueling,
            Algo::Conlinucb => kind == EnvKind::Conversational,
            Algo::RwOful | Algo::Exp3s => kind == EnvKind::Nonstat2arm,
            _ => kind != EnvKind::Dueling,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("algorithm {self:?} cannot run on a {kind:?} environment")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Cumulative regret.
    Regret,
    /// AUC of OCCUD detection scores.
    Auc,
    /// AUC of GCUD gap scores.
    GcudAuc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Regret => "regret",
            Metric::Auc => "auc",
            Metric::GcudAuc => "gcud_auc",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    pub algo: Algo,
    #[serde(default)]
    pub params: toml::Table,
}

fn default_trials() -> usize {
    1
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Regret]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Base seed; defaults to `env.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Sampling stride of the regret series; defaults to `horizon / 100`.
    #[serde(default)]
    pub record_every: Option<usize>,
    /// Rounds at which detection metrics are computed; defaults to the horizon.
    #[serde(default)]
    pub detect_at: Vec<usize>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub env: EnvSpec,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicyConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(self.env.seed)
    }

    pub fn record_stride(&self) -> usize {
        self.record_every.unwrap_or(self.env.horizon / 100).max(1)
    }

    pub fn detection_rounds(&self) -> Vec<usize> {
        let mut r = if self.detect_at.is_empty() {
            vec![self.env.horizon]
        } else {
            self.detect_at.clone()
        };
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Static checks: counts, names, parameter names and algorithm/environment compatibility.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        self.env.validate()?;
        if self.policies.is_empty() {
            return Err(Error::Config("at least one [[policy]] is required".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("metrics must not be empty".into()));
        }
        if self.metrics.iter().any(|&m| m != Metric::Regret) && !self.policies.iter().any(|p| p.algo.detects()) {
            return Err(Error::Config("detection metrics need a policy that supports detection".into()));
        }
        if self.detect_at.iter().any(|&t| t == 0 || t > self.env.horizon) {
            return Err(Error::Config("detect_at rounds must lie in 1..=horizon".into()));
        }
        let mut names = HashSet::new();
        for p in &self.policies {
            if p.name.is_empty() || !p.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::Config(format!("policy name {:?} must be non-empty [A-Za-z0-9._-]", p.name)));
            }
            if !names.insert(p.name.as_str()) {
                return Err(Error::Config(format!("duplicate policy name {:?}", p.name)));
            }
            p.algo.check_kind(self.env.kind)?;
            let allowed = p.algo.params();
            for key in p.params.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::Config(format!(
                        "unknown parameter {key:?} for {:?} (allowed: {})",
                        p.algo,
                        allowed.join(", ")
                    )));
                }
            }
            if p.algo.is_dueling() && !p.params.contains_key("lambda_x") {
                return Err(Error::Config(format!("policy {:?} requires lambda_x", p.name)));
            }
        }
        Ok(())
    }

    /// Keeps only the named policy.
    pub fn retain_policy(&mut self, name: &str) -> Result<()> {
        self.policies.retain(|p| p.name == name);
        if self.policies.is_empty() {
            return Err(Error::Config(format!("no policy named {name:?}")));
        }
        Ok(())
    }
}

struct Params<'a> {
    table: &'a toml::Table,
    name: &'a str,
}

impl Params<'_> {
    fn bad(&self, key: &str, want: &str) -> Error {
        Error::Config(format!("policy {:?}: parameter {key:?} must be {want}", self.name))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.bad(key, "a number")),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.table.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(_) => Err(self.bad(key, "a non-negative integer")),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.table.get(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.bad(key, "a boolean")),
        }
    }

    fn str(&self, key: &str) -> Result<Option<&str>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.bad(key, "a string")),
        }
    }
}

/// A built policy of either feedback type.
pub enum Learner {
    Scalar(Box<dyn Policy>),
    Dueling(Box<dyn DuelingPolicy>),
}

/// Builds the policy described by `pc` for `env`.
pub fn build_policy(pc: &PolicyConfig, env: &Environment, rng: ChaCha8Rng) -> Result<Learner> {
    pc.algo.check_kind(env.kind())?;
    let p = Params {
        table: &pc.params,
        name: &pc.name,
    };
    let spec = env.spec();
    let (arms, users, dim, horizon) = (env.arms(), env.users(), env.dim(), env.horizon());
    let lambda = p.f64("lambda", 1.0)?;
    let delta = p.f64("delta", 0.01)?;
    let beta = || -> Result<f64> { Ok(p.opt_f64("beta")?.unwrap_or_else(|| theory_beta(lambda, delta, dim, horizon))) };
    let rclumb = |eps_default: f64| -> Result<RclumbParams> {
        Ok(RclumbParams {
            lambda,
            beta: beta()?,
            eps_star: p.f64("eps_star", eps_default)?,
            alpha1: p.f64("alpha1", 1.0)?,
            alpha2: p.f64("alpha2", 1.0)?,
            clip: p.bool("clip", true)?,
        })
    };
    let scalar = |x: Box<dyn Policy>| Ok(Learner::Scalar(x));
    match pc.algo {
        Algo::LinucbInd => scalar(Box::new(LinUcb::new(arms, users, lambda, beta()?, false)?)),
        Algo::LinucbOne => scalar(Box::new(LinUcb::new(arms, users, lambda, beta()?, true)?)),
        Algo::RlinucbInd => scalar(Box::new(RLinUcb::new(
            arms,
            users,
            lambda,
            beta()?,
            p.f64("eps_star", spec.misspec)?,
            p.bool("clip", true)?,
            false,
        )?)),
        Algo::CwofulInd => {
            let mut wp = RclubWcuParams::new(horizon);
            wp.lambda = lambda;
            wp.corruption = p.f64("corruption", wp.corruption)?;
            wp.alpha = p.opt_f64("alpha")?;
            let alpha = wp.weight_scale(dim);
            scalar(Box::new(CwOful::new(arms, users, lambda, alpha, beta()?, false)?))
        }
        Algo::Club => scalar(Box::new(Club::new(arms, users, lambda, beta()?, p.f64("alpha1", 1.0)?)?)),
        Algo::Rclumb => scalar(Box::new(Rclumb::new(arms, users, rclumb(spec.misspec)?)?)),
        Algo::Rsclumb => scalar(Box::new(Rsclumb::new(arms, users, rclumb(spec.misspec)?)?)),
        Algo::Sclub => scalar(Box::new(Rsclumb::new(arms, users, rclumb(0.0)?)?)),
        Algo::RclubWcu => {
            let mut wp = RclubWcuParams::new(horizon);
            wp.lambda = lambda;
            wp.delta = delta;
            wp.corruption = p.f64("corruption", wp.corruption)?;
            wp.alpha = p.opt_f64("alpha")?;
            wp.alpha1 = p.f64("alpha1", wp.alpha1)?;
            wp.beta = p.opt_f64("beta")?;
            scalar(Box::new(RclubWcu::new(arms, users, wp)?))
        }
        Algo::Conlinucb => {
            let strategy = match p.str("strategy")?.unwrap_or("mcr") {
                "bs" => KeyTermStrategy::Bs,
                "mcr" => KeyTermStrategy::Mcr,
                "ucb" => KeyTermStrategy::Ucb,
                "none" => KeyTermStrategy::None,
                other => return Err(Error::Config(format!("unknown key-term strategy {other:?}"))),
            };
            let keys = env
                .key_terms()
                .ok_or_else(|| Error::Config("conversational policy needs key-terms".into()))?;
            let mut template = ConLinUcb::new(dim, lambda, delta, spec.budget, strategy)?;
            if let Some(a) = p.opt_f64("alpha")? {
                template = template.with_alpha(a);
            }
            scalar(Box::new(ConversationalPolicy::new(arms, users, keys, template, rng)?))
        }
        Algo::RwOful => {
            let d = RwOfulParams::default();
            let rp = RwOfulParams {
                lambda,
                alpha: p.f64("alpha", d.alpha)?,
                gamma: p.f64("gamma", d.gamma)?,
                window: p.usize("window", d.window)?,
                delta,
                arm_bound: p.f64("arm_bound", d.arm_bound)?,
                theta_bound: p.f64("theta_bound", d.theta_bound)?,
                noise_bound: p.f64("noise_bound", d.noise_bound)?,
                radius: p.opt_f64("beta")?.map_or(Radius::Theory, Radius::Fixed),
            };
            scalar(Box::new(RwOful::new(arms, rp)?))
        }
        Algo::SavePlus => {
            let d = SavePlusParams::default();
            let sp = SavePlusParams {
                alpha: p.f64("alpha", d.alpha)?,
                window: p.usize("window", d.window)?,
                delta,
                theta_bound: p.f64("theta_bound", d.theta_bound)?,
                noise_bound: p.f64("noise_bound", d.noise_bound)?,
                radius: p.opt_f64("beta_scale")?.map_or(Radius::Theory, Radius::Fixed),
            };
            scalar(Box::new(SavePlus::new(arms, sp)?))
        }
        Algo::SavePlusBob => {
            let mut bp = BobParams::new(horizon);
            bp.delta = delta;
            bp.theta_bound = p.f64("theta_bound", bp.theta_bound)?;
            bp.noise_bound = p.f64("noise_bound", bp.noise_bound)?;
            bp.strict = p.bool("strict", false)?;
            scalar(Box::new(Bob::new(arms, bp, rng)?))
        }
        Algo::SwUcb => scalar(Box::new(SwUcb::new(arms, lambda, beta()?, p.usize("window", 1000)?)?)),
        Algo::Exp3s => {
            let gamma = p.f64("gamma", 0.01)?;
            let ep = Exp3SParams {
                gamma,
                share: p.f64("share", 1.0 / horizon as f64)?,
                lr: p.opt_f64("lr")?,
                reward_range: (p.f64("reward_min", 0.0)?, p.f64("reward_max", 1.0)?),
            };
            scalar(Box::new(Exp3S::new(arms.len(), ep, rng)?))
        }
        Algo::Coldb | Algo::LdbInd => {
            let lambda_x = p
                .opt_f64("lambda_x")?
                .ok_or_else(|| Error::Config(format!("policy {:?} requires lambda_x", pc.name)))?;
            let mut cp = ColdbParams::new(lambda_x);
            cp.lambda = lambda;
            cp.delta = delta;
            cp.score_bound = p.f64("score_bound", cp.score_bound)?;
            cp.beta = p.opt_f64("beta")?;
            cp.refit_ratio = p.f64("refit_ratio", cp.refit_ratio)?;
            cp.independent = pc.algo == Algo::LdbInd;
            Ok(Learner::Dueling(Box::new(Coldb::new(arms, users, cp)?)))
        }
    }
}

/// Seed of trial `trial`: one draw from a ChaCha stream keyed by the trial index.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    stream_rng(base, 1 << 32 | trial as u64).next_u64()
}

/// Worker count from `BANDITLAB_THREADS`, else the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Output of one (policy, trial) run.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub seed: u64,
    pub instantaneous: Vec<f64>,
    /// Rounds at which `cumulative` was sampled.
    pub rounds: Vec<usize>,
    pub cumulative: Vec<f64>,
    pub detection_rounds: Vec<usize>,
    pub occud_auc: Vec<f64>,
    pub gcud_auc: Vec<f64>,
    pub reports: Vec<DetectionReport>,
    /// Learned partition at the horizon, if the policy clusters.
    pub partition: Option<Vec<usize>>,
    pub true_clusters: Vec<usize>,
    pub queries: usize,
    pub wall: Duration,
}

impl TrialResult {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// One aggregated metric curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub metric: String,
    pub rounds: Vec<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PolicyResult {
    pub name: String,
    pub series: Vec<Series>,
    pub trials: Vec<TrialResult>,
}

impl PolicyResult {
    pub fn series(&self, metric: Metric) -> Option<&Series> {
        self.series.iter().find(|s| s.metric == metric.name())
    }

    /// Mean final cumulative regret over trials.
    pub fn mean_final_regret(&self) -> f64 {
        self.trials.iter().map(TrialResult::final_regret).sum::<f64>() / self.trials.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub policies: Vec<PolicyResult>,
}

impl ExperimentResult {
    pub fn policy(&self, name: &str) -> Option<&PolicyResult> {
        self.policies.iter().find(|p| p.name == name)
    }
}

/// Runs one trial of one policy.
pub fn run_trial(cfg: &ExperimentConfig, pc: &PolicyConfig, trial: usize) -> Result<TrialResult> {
    let start = Instant::now();
    let seed = trial_seed(cfg.base_seed(), trial);
    let mut spec = cfg.env.clone();
    spec.seed = seed;
    let mut env = gen_env(&spec)?;
    let mut learner = build_policy(pc, &env, stream_rng(seed, STREAM_POLICY))?;
    let horizon = spec.horizon;
    let stride = cfg.record_stride();
    let wants_auc = pc.algo.detects() && cfg.metrics.contains(&Metric::Auc);
    let wants_gcud = pc.algo.detects() && cfg.metrics.contains(&Metric::GcudAuc);
    let detect = if wants_auc || wants_gcud {
        cfg.detection_rounds()
    } else {
        Vec::new()
    };
    let labels = env.corruption().corrupted.clone();

    let mut out = TrialResult {
        seed,
        instantaneous: Vec::with_capacity(horizon),
        rounds: Vec::new(),
        cumulative: Vec::new(),
        detection_rounds: detect.clone(),
        occud_auc: Vec::new(),
        gcud_auc: Vec::new(),
        reports: Vec::new(),
        partition: None,
        true_clusters: env.user_clusters().to_vec(),
        queries: 0,
        wall: Duration::ZERO,
    };
    let mut cum = 0.0;
    let mut next_detect = 0;
    for t in 1..=horizon {
        let round = env.sample_round(t);
        let ctx = Context {
            t,
            user: round.user,
            arms: &round.arms,
        };
        let event = match &mut learner {
            Learner::Scalar(pol) => {
                out.queries += pol.converse(&ctx, &mut env)?;
                let arm = pol.select(&ctx)?;
                let ev = env.feedback(&round, arm)?;
                pol.update(&ctx, arm, &ev)?;
                ev
            }
            Learner::Dueling(pol) => {
                let pair = pol.select_pair(&ctx)?;
                let ev = env.duel_feedback(&round, pair.0, pair.1)?;
                let bit = ev.bit().ok_or_else(|| Error::Data("missing preference bit".into()))?;
                pol.update(&ctx, pair, bit)?;
                ev
            }
        };
        let r = compute_regret(&event, &env)?;
        out.instantaneous.push(r);
        cum += r;
        if t % stride == 0 || t == horizon {
            out.rounds.push(t);
            out.cumulative.push(cum);
        }
        if next_detect < detect.len() && detect[next_detect] == t {
            next_detect += 1;
            let Learner::Scalar(pol) = &learner else {
                return Err(Error::Config("detection metrics need a scalar policy".into()));
            };
            if wants_auc {
                let report = pol
                    .detect(t)
                    .ok_or_else(|| Error::Config(format!("policy {:?} does not support detection", pc.name)))??
                    .with_labels(&labels);
                out.occud_auc.push(compute_auc(&report.scores, &labels)?);
                out.reports.push(report);
            }
            if wants_gcud {
                let scores = pol
                    .gap_scores()
                    .ok_or_else(|| Error::Config(format!("policy {:?} does not expose gap scores", pc.name)))?;
                out.gcud_auc.push(compute_auc(&scores, &labels)?);
            }
        }
    }
    out.partition = match &learner {
        Learner::Scalar(p) => p.partition(),
        Learner::Dueling(p) => p.partition(),
    };
    out.wall = start.elapsed();
    log::info!(
        "{} trial {trial}: final regret {:.3} in {:.2?}",
        pc.name,
        cum,
        out.wall
    );
    Ok(out)
}

fn aggregate_policy(cfg: &ExperimentConfig, pc: &PolicyConfig, trials: Vec<TrialResult>) -> Result<PolicyResult> {
    let mut series = Vec::new();
    for &m in &cfg.metrics {
        if m != Metric::Regret && !pc.algo.detects() {
            continue;
        }
        let (rounds, data): (Vec<usize>, Vec<Vec<f64>>) = match m {
            Metric::Regret => (trials[0].rounds.clone(), trials.iter().map(|t| t.cumulative.clone()).collect()),
            Metric::Auc => (
                trials[0].detection_rounds.clone(),
                trials.iter().map(|t| t.occud_auc.clone()).collect(),
            ),
            Metric::GcudAuc => (
                trials[0].detection_rounds.clone(),
                trials.iter().map(|t| t.gcud_auc.clone()).collect(),
            ),
        };
        let (mean, stderr) = mean_stderr(&data)?;
        series.push(Series {
            metric: m.name().to_string(),
            rounds,
            mean,
            stderr,
        });
    }
    Ok(PolicyResult {
        name: pc.name.clone(),
        series,
        trials,
    })
}

/// Runs every (policy, trial) pair on a pool of `BANDITLAB_THREADS` workers.
/// Results do not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_threads(cfg, worker_threads())
}

pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    // Build every policy once before any round runs, so parameter errors surface early.
    let probe = {
        let mut spec = cfg.env.clone();
        spec.seed = trial_seed(cfg.base_seed(), 0);
        gen_env(&spec)?
    };
    for pc in &cfg.policies {
        build_policy(pc, &probe, stream_rng(0, STREAM_POLICY))?;
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.policies.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut results: Vec<Result<TrialResult>> =
        pool.install(|| jobs.par_iter().map(|&(p, t)| run_trial(cfg, &cfg.policies[p], t)).collect());
    let mut policies = Vec::with_capacity(cfg.policies.len());
    for pc in cfg.policies.iter().rev() {
        let trials = results.split_off(results.len() - cfg.trials);
        let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
        policies.push(aggregate_policy(cfg, pc, trials)?);
    }
    policies.reverse();
    Ok(ExperimentResult { policies })
}

/// Writes CSVs, plots and (for detection runs) `<policy>_detection.csv` from trial 0.
pub fn emit_all(results: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = emit_csv(results, dir)?;
    paths.extend(emit_plot(results, dir)?);
    for p in &results.policies {
        if let Some(t) = p.trials.first() {
            if !t.reports.is_empty() {
                let path = dir.join(format!("{}_detection.csv", p.name));
                crate::locud::write_detection_csv(&path, &t.reports)?;
                paths.push(path);
            }
        }
    }
    Ok(paths)
}
