//! Seeded synthetic environments.
//!
//! One [`Environment`] type covers five protocols selected by [`EnvKind`].
//! Generation, user/arm arrivals, reward noise and key-term noise use
//! separate ChaCha streams of the same seed, so the arrival sequence is
//! identical for every policy run against the same spec.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conbandit::KeyTermGraph;
use crate::error::{Error, Result};
use crate::linalg::{normalize, Matrix, Vector};

const STREAM_GEN: u64 = 0;
const STREAM_ARRIVAL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_KEY_NOISE: u64 = 3;
const MAX_SEPARATION_TRIES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Cbmum,
    Locud,
    Conversational,
    Nonstat2arm,
    Dueling,
}

impl EnvKind {
    pub fn is_dueling(self) -> bool {
        self == EnvKind::Dueling
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    #[default]
    None,
    FlipFirstK,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    E,
    #[serde(rename = "10")]
    Ten,
    #[serde(rename = "2")]
    Two,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Ten => x.log10(),
            LogBase::Two => x.log2(),
        }
    }
}

/// Conversation budget `b(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetFn {
    /// `scale * floor(log(t + 1))`
    Log {
        #[serde(default = "default_budget_scale")]
        scale: f64,
        #[serde(default)]
        base: LogBase,
    },
    /// `rate * t`
    Linear { rate: f64 },
    Constant { value: f64 },
}

fn default_budget_scale() -> f64 {
    5.0
}

impl Default for BudgetFn {
    fn default() -> Self {
        BudgetFn::Log {
            scale: 5.0,
            base: LogBase::E,
        }
    }
}

impl BudgetFn {
    pub fn eval(&self, t: u64) -> f64 {
        match *self {
            BudgetFn::Log { scale, base } => scale * base.log(t as f64 + 1.0).floor(),
            BudgetFn::Linear { rate } => rate * t as f64,
            BudgetFn::Constant { value } => value,
        }
    }
}

/// Declarative environment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub users: usize,
    pub clusters: usize,
    pub dim: usize,
    pub pool_size: usize,
    pub arms_per_round: usize,
    pub horizon: usize,
    /// Misspecification level `eps_*`.
    pub misspec: f64,
    /// Standard deviation of Gaussian reward noise.
    pub noise: f64,
    /// Minimum pairwise distance between cluster preference vectors.
    pub gamma: f64,
    pub corruption: CorruptionMode,
    pub corrupted_fraction: f64,
    /// Rounds subject to reward flipping; defaults to 2% of the horizon.
    pub flip_k: Option<usize>,
    pub key_terms: usize,
    pub max_arms_per_key: usize,
    pub budget: BudgetFn,
    /// Total-variation parameter `B_K` of the sinusoid drift.
    pub drift_budget: f64,
    /// Dueling only: deterministic bits (1 iff the first arm scores higher).
    pub threshold_feedback: bool,
    pub seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::Cbmum,
            users: 100,
            clusters: 10,
            dim: 20,
            pool_size: 200,
            arms_per_round: 20,
            horizon: 10_000,
            misspec: 0.0,
            noise: 0.1,
            gamma: 0.5,
            corruption: CorruptionMode::None,
            corrupted_fraction: 0.0,
            flip_k: None,
            key_terms: 100,
            max_arms_per_key: 10,
            budget: BudgetFn::default(),
            drift_budget: 1.0,
            threshold_feedback: false,
            seed: 0,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.users == 0 || self.dim == 0 || self.horizon == 0 {
            return cfg("users, dim and horizon must be positive".into());
        }
        if self.clusters == 0 || self.clusters > self.users {
            return cfg(format!("clusters ({}) must be in 1..=users ({})", self.clusters, self.users));
        }
        if self.kind == EnvKind::Nonstat2arm {
            if self.dim != 2 {
                return cfg("nonstat2arm requires dim = 2".into());
            }
        } else if self.arms_per_round == 0 || self.arms_per_round > self.pool_size {
            return cfg(format!(
                "arms_per_round ({}) must be in 1..=pool_size ({})",
                self.arms_per_round, self.pool_size
            ));
        }
        if self.kind == EnvKind::Locud && self.dim < 2 {
            return cfg("locud requires dim >= 2".into());
        }
        if !(self.misspec >= 0.0) || !(self.noise >= 0.0) || !(self.gamma >= 0.0) {
            return cfg("misspec, noise and gamma must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.corrupted_fraction) {
            return cfg("corrupted_fraction must lie in [0, 1]".into());
        }
        if self.kind == EnvKind::Conversational && (self.key_terms == 0 || self.max_arms_per_key == 0) {
            return cfg("conversational env needs key_terms and max_arms_per_key > 0".into());
        }
        if !(self.drift_budget >= 0.0) {
            return cfg("drift_budget must be >= 0".into());
        }
        Ok(())
    }

    pub fn flip_rounds(&self) -> usize {
        self.flip_k
            .unwrap_or_else(|| ((self.horizon as f64) * 0.02).round() as usize)
    }
}

/// Which users are corrupted, how, and the running tally of `sum |c_t|`.
#[derive(Clone, Debug)]
pub struct CorruptionSchedule {
    pub corrupted: Vec<bool>,
    pub mode: CorruptionMode,
    pub flip_k: usize,
    pub tally: f64,
}

impl CorruptionSchedule {
    pub fn is_active(&self, user: usize, t: usize) -> bool {
        self.mode == CorruptionMode::FlipFirstK && self.corrupted[user] && t <= self.flip_k
    }
}

/// Sinusoidal two-arm drift with Bernoulli-decay noise.
#[derive(Clone, Copy, Debug)]
pub struct DriftSchedule {
    pub budget: f64,
    pub horizon: usize,
}

impl DriftSchedule {
    pub fn theta(&self, k: usize) -> Vector {
        let phase = 5.0 * self.budget * std::f64::consts::PI * k as f64 / self.horizon as f64;
        Vector::from_vec(vec![
            0.5 + 0.3 * phase.sin(),
            0.5 + 0.3 * (std::f64::consts::PI + phase).sin(),
        ])
    }

    /// Success probability `0.5 / k` of the round-`k` noise.
    pub fn noise_p(k: usize) -> f64 {
        0.5 / k.max(1) as f64
    }

    pub fn sigma(k: usize) -> f64 {
        let p = Self::noise_p(k);
        (p * (1.0 - p)).sqrt()
    }

    /// Realised `sum_k ||theta_{k+1} - theta_k||` over rounds `1..=horizon`.
    pub fn total_variation(&self) -> f64 {
        (1..self.horizon)
            .map(|k| (self.theta(k + 1) - self.theta(k)).norm())
            .sum()
    }
}

/// One round's context: arriving user and presented arm ids (ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct Round {
    pub t: usize,
    pub user: usize,
    pub arms: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observation {
    Reward(f64),
    Preference(bool),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackEvent {
    pub t: usize,
    pub user: usize,
    pub presented: Vec<usize>,
    pub chosen: Vec<usize>,
    pub value: Observation,
    pub oracle_best_value: f64,
    /// Noise standard deviation revealed after the pull (nonstat2arm only).
    pub sigma: Option<f64>,
    /// Applied corruption `c_t` (0 when uncorrupted).
    pub corruption: f64,
}

impl FeedbackEvent {
    pub fn reward(&self) -> Option<f64> {
        match self.value {
            Observation::Reward(r) => Some(r),
            Observation::Preference(_) => None,
        }
    }

    pub fn bit(&self) -> Option<bool> {
        match self.value {
            Observation::Preference(b) => Some(b),
            Observation::Reward(_) => None,
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// Gaussian entries, L2-normalised.
pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    loop {
        let v = gaussian_vec(rng, d);
        if v.norm() > 0.0 {
            return normalize(v);
        }
    }
}

/// `d - 1` normalised Gaussian coordinates plus a constant 1, divided by sqrt(2).
pub fn random_unit_with_bias(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    let head = random_unit(rng, d - 1);
    let mut v = Vector::zeros(d);
    v.rows_mut(0, d - 1).copy_from(&head);
    v[d - 1] = 1.0;
    v / std::f64::consts::SQRT_2
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    arms: Vec<Vector>,
    prefs: Vec<Vector>,
    user_cluster: Vec<usize>,
    misspec: Vec<f64>,
    corruption: CorruptionSchedule,
    drift: Option<DriftSchedule>,
    keys: Option<KeyTermGraph>,
    arrival_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    key_rng: ChaCha8Rng,
}

/// Builds an environment; a deterministic function of `spec` (including its seed).
pub fn gen_env(spec: &EnvSpec) -> Result<Environment> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, STREAM_GEN);
    let d = spec.dim;
    let draw = |rng: &mut ChaCha8Rng| match spec.kind {
        EnvKind::Locud => random_unit_with_bias(rng, d),
        _ => random_unit(rng, d),
    };

    let (arms, prefs, user_cluster) = if spec.kind == EnvKind::Nonstat2arm {
        let arms = vec![
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![0.0, 1.0]),
        ];
        (arms, Vec::new(), vec![0; spec.users])
    } else {
        let mut prefs: Vec<Vector> = Vec::with_capacity(spec.clusters);
        let mut tries = 0;
        while prefs.len() < spec.clusters {
            let cand = draw(&mut rng);
            if prefs.iter().all(|p| (p - &cand).norm() >= spec.gamma) {
                prefs.push(cand);
            } else {
                tries += 1;
                if tries > MAX_SEPARATION_TRIES {
                    return Err(Error::Config(format!(
                        "could not draw {} cluster vectors separated by gamma = {}",
                        spec.clusters, spec.gamma
                    )));
                }
            }
        }
        let user_cluster = (0..spec.users).map(|i| i % spec.clusters).collect();
        let arms = (0..spec.pool_size).map(|_| draw(&mut rng)).collect();
        (arms, prefs, user_cluster)
    };

    let misspec = if spec.kind == EnvKind::Cbmum && spec.misspec > 0.0 {
        (0..spec.users * spec.pool_size)
            .map(|_| rng.gen_range(-spec.misspec..=spec.misspec))
            .collect()
    } else {
        Vec::new()
    };

    let n_corrupt = (spec.corrupted_fraction * spec.users as f64).round() as usize;
    let mut corrupted = vec![false; spec.users];
    if n_corrupt > 0 {
        for i in sample_indices(&mut rng, spec.users, n_corrupt) {
            corrupted[i] = true;
        }
    }
    let corruption = CorruptionSchedule {
        corrupted,
        mode: spec.corruption,
        flip_k: spec.flip_rounds(),
        tally: 0.0,
    };

    let keys = if spec.kind == EnvKind::Conversational {
        Some(KeyTermGraph::generate(&arms, spec.key_terms, spec.max_arms_per_key, &mut rng)?)
    } else {
        None
    };
    let drift = (spec.kind == EnvKind::Nonstat2arm).then_some(DriftSchedule {
        budget: spec.drift_budget,
        horizon: spec.horizon,
    });

    Ok(Environment {
        spec: spec.clone(),
        arms,
        prefs,
        user_cluster,
        misspec,
        corruption,
        drift,
        keys,
        arrival_rng: stream_rng(spec.seed, STREAM_ARRIVAL),
        noise_rng: stream_rng(spec.seed, STREAM_NOISE),
        key_rng: stream_rng(spec.seed, STREAM_KEY_NOISE),
    })
}

impl Environment {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn kind(&self) -> EnvKind {
        self.spec.kind
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn users(&self) -> usize {
        self.spec.users
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    /// Feature vectors of the whole arm pool, indexed by arm id.
    pub fn arms(&self) -> &[Vector] {
        &self.arms
    }

    pub fn arm(&self, id: usize) -> &Vector {
        &self.arms[id]
    }

    /// Ground-truth cluster id per user.
    pub fn user_clusters(&self) -> &[usize] {
        &self.user_cluster
    }

    pub fn corruption(&self) -> &CorruptionSchedule {
        &self.corruption
    }

    pub fn drift(&self) -> Option<&DriftSchedule> {
        self.drift.as_ref()
    }

    pub fn key_terms(&self) -> Option<&KeyTermGraph> {
        self.keys.as_ref()
    }

    /// Preference vector of `user` at round `t`.
    pub fn theta(&self, user: usize, t: usize) -> Vector {
        match &self.drift {
            Some(d) => d.theta(t),
            None => self.prefs[self.user_cluster[user]].clone(),
        }
    }

    fn theta_ref(&self, user: usize) -> &Vector {
        &self.prefs[self.user_cluster[user]]
    }

    /// Misspecification deviation `eps(user, arm)`.
    pub fn deviation(&self, user: usize, arm: usize) -> f64 {
        if self.misspec.is_empty() {
            0.0
        } else {
            self.misspec[user * self.spec.pool_size + arm]
        }
    }

    /// Linear score `x^T theta` without deviation (the dueling utility `f`).
    pub fn score(&self, user: usize, arm: usize, t: usize) -> f64 {
        match &self.drift {
            Some(d) => self.arms[arm].dot(&d.theta(t)),
            None => self.arms[arm].dot(self.theta_ref(user)),
        }
    }

    /// Expected uncorrupted reward used by the regret oracle.
    pub fn mean_reward(&self, user: usize, arm: usize, t: usize) -> f64 {
        self.score(user, arm, t) + self.deviation(user, arm)
    }

    pub fn best_value(&self, user: usize, arms: &[usize], t: usize) -> f64 {
        arms.iter()
            .map(|&a| self.mean_reward(user, a, t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample_round(&mut self, t: usize) -> Round {
        let user = self.arrival_rng.gen_range(0..self.spec.users);
        let arms = if self.spec.kind == EnvKind::Nonstat2arm {
            vec![0, 1]
        } else if self.spec.arms_per_round == self.spec.pool_size {
            (0..self.spec.pool_size).collect()
        } else {
            let mut a = sample_indices(&mut self.arrival_rng, self.spec.pool_size, self.spec.arms_per_round)
                .into_vec();
            a.sort_unstable();
            a
        };
        Round { t, user, arms }
    }

    fn gaussian_noise(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.noise_rng);
        self.spec.noise * z
    }

    /// Scalar feedback for pulling `arm` in `round`.
    pub fn feedback(&mut self, round: &Round, arm: usize) -> Result<FeedbackEvent> {
        if self.spec.kind.is_dueling() {
            return Err(Error::Config("scalar feedback requested from a dueling environment".into()));
        }
        if !round.arms.contains(&arm) {
            return Err(Error::param(format!("arm {arm} was not presented")));
        }
        let (t, user) = (round.t, round.user);
        let best = self.best_value(user, &round.arms, t);
        let mut corruption = 0.0;
        let (reward, sigma) = if self.spec.kind == EnvKind::Nonstat2arm {
            let p = DriftSchedule::noise_p(t);
            let bern = if self.noise_rng.gen::<f64>() < p { 1.0 } else { 0.0 };
            (self.score(user, arm, t) + bern - p, Some(DriftSchedule::sigma(t)))
        } else {
            let eta = self.gaussian_noise();
            let lin = self.score(user, arm, t);
            if self.corruption.is_active(user, t) {
                corruption = -2.0 * lin;
                self.corruption.tally += corruption.abs();
                (-lin + eta, None)
            } else {
                (lin + self.deviation(user, arm) + eta, None)
            }
        };
        Ok(FeedbackEvent {
            t,
            user,
            presented: round.arms.clone(),
            chosen: vec![arm],
            value: Observation::Reward(reward),
            oracle_best_value: best,
            sigma,
            corruption,
        })
    }

    /// Preference bit for the ordered pair `(arm1, arm2)`.
    pub fn duel_feedback(&mut self, round: &Round, arm1: usize, arm2: usize) -> Result<FeedbackEvent> {
        if !self.spec.kind.is_dueling() {
            return Err(Error::Config("duel feedback requested from a scalar environment".into()));
        }
        if !round.arms.contains(&arm1) || !round.arms.contains(&arm2) {
            return Err(Error::param("duel arms must both be presented"));
        }
        let (t, user) = (round.t, round.user);
        let diff = self.score(user, arm1, t) - self.score(user, arm2, t);
        let bit = if self.spec.threshold_feedback {
            diff > 0.0
        } else {
            self.noise_rng.gen::<f64>() < logistic(diff)
        };
        Ok(FeedbackEvent {
            t,
            user,
            presented: round.arms.clone(),
            chosen: vec![arm1, arm2],
            value: Observation::Preference(bit),
            oracle_best_value: self.best_value(user, &round.arms, t),
            sigma: None,
            corruption: 0.0,
        })
    }

    /// Noisy key-term feedback `x~_k^T theta + eta` (conversational kind).
    pub fn key_feedback(&mut self, user: usize, key: usize) -> Result<f64> {
        let keys = self
            .keys
            .as_ref()
            .ok_or_else(|| Error::Config("key-term feedback needs a conversational environment".into()))?;
        let x = keys.feature(key).ok_or_else(|| Error::param(format!("unknown key-term {key}")))?;
        let z: f64 = StandardNormal.sample(&mut self.key_rng);
        Ok(x.dot(self.theta_ref(user)) + self.spec.noise * z)
    }
}

/// Truncated SVD with singular values in descending order.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

/// Top-`d` SVD of `r`; columns beyond the numerical rank are zero.
pub fn truncated_svd(r: &Matrix, d: usize) -> Result<TruncatedSvd> {
    let (n_rows, n_cols) = r.shape();
    if d == 0 || d > n_rows.min(n_cols) {
        return Err(Error::param(format!(
            "d = {d} must be in 1..={}",
            n_rows.min(n_cols)
        )));
    }
    crate::linalg::ensure_finite_slice(r.as_slice(), "feedback matrix")?;
    let svd = r.clone().svd(true, true);
    let u_full = svd.u.ok_or(Error::Singular("svd failed to produce U"))?;
    let vt_full = svd.v_t.ok_or(Error::Singular("svd failed to produce V"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let tol = svd.singular_values.max() * (n_rows.max(n_cols) as f64) * f64::EPSILON;
    let mut u = Matrix::zeros(n_rows, d);
    let mut v = Matrix::zeros(n_cols, d);
    let mut s = Vector::zeros(d);
    let mut rank = 0;
    for (j, &idx) in order.iter().take(d).enumerate() {
        let sv = svd.singular_values[idx];
        if sv <= tol {
            continue;
        }
        rank += 1;
        s[j] = sv;
        u.set_column(j, &u_full.column(idx));
        v.set_column(j, &vt_full.row(idx).transpose());
    }
    if rank < d {
        log::warn!("feedback matrix has rank {rank} < d = {d}; padding with zeros");
    }
    Ok(TruncatedSvd {
        u,
        singular_values: s,
        v,
    })
}

/// Splits a user-by-item feedback matrix into `d`-dimensional unit user and arm vectors.
///
/// Rows of `U sqrt(S)` and `V sqrt(S)` are L2-normalised; all-zero rows stay zero.
pub fn svd_ingest(r: &Matrix, d: usize) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let svd = truncated_svd(r, d)?;
    let root = svd.singular_values.map(f64::sqrt);
    let scale_rows = |m: &Matrix| -> Vec<Vector> {
        (0..m.nrows())
            .map(|i| normalize(m.row(i).transpose().component_mul(&root)))
            .collect()
    };
    Ok((scale_rows(&svd.u), scale_rows(&svd.v)))
}

/// Reads a header-free, comma-delimited CSV of 0/1 values.
pub fn read_feedback_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| match c.trim() {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(Error::Data(format!(
                    "{}:{}: expected 0 or 1, found {other:?}",
                    path.display(),
                    lineno + 1
                ))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Data(format!(
                    "{}:{}: row has {} columns, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    }
    let n = rows[0].len();
    Ok(Matrix::from_row_iterator(rows.len(), n, rows.into_iter().flatten()))
}
