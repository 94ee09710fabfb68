//! Conversational contextual bandits: key-term graph, barycentric spanner,
//! and ConLinUCB with BS / MCR / UCB key-term selection.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::reward_of;
use crate::env::{BudgetFn, Environment, FeedbackEvent};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RidgeState, Vector};
use crate::policy::{ArmPool, Context, Policy};

/// Improvement factor a swap must exceed in the spanner search.
pub const SPANNER_SWAP_FACTOR: f64 = 1.0 + 1e-6;

/// Weighted bipartite graph between arms and key-terms.
#[derive(Clone, Debug)]
pub struct KeyTermGraph {
    /// `(key, weight)` links per arm; weights of an arm sum to one.
    links: Vec<Vec<(usize, f64)>>,
    features: Vec<Vector>,
}

impl KeyTermGraph {
    /// Builds the graph from a dense `arms x keys` weight matrix.
    pub fn from_weights(arms: &[Vector], w: &Matrix) -> Result<Self> {
        if w.nrows() != arms.len() {
            return Err(Error::DimensionMismatch {
                expected: arms.len(),
                got: w.nrows(),
            });
        }
        let dim = arms.first().map_or(0, |a| a.len());
        let n_keys = w.ncols();
        let mut links = vec![Vec::new(); arms.len()];
        let mut features = vec![Vector::zeros(dim); n_keys];
        let mut totals = vec![0.0; n_keys];
        for (a, row) in links.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..n_keys {
                let wk = w[(a, k)];
                if !(wk >= 0.0) || !wk.is_finite() {
                    return Err(Error::param(format!("weight W[{a},{k}] must be finite and >= 0")));
                }
                if wk > 0.0 {
                    row.push((k, wk));
                    features[k].axpy(wk, &arms[a], 1.0);
                    totals[k] += wk;
                    s += wk;
                }
            }
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("weights of arm {a} sum to {s}, expected 1")));
            }
        }
        for (k, (f, &tot)) in features.iter_mut().zip(&totals).enumerate() {
            if tot <= 0.0 {
                return Err(Error::param(format!("key-term {k} has no linked arm")));
            }
            *f /= tot;
        }
        Ok(Self { links, features })
    }

    /// Random graph: key `k` links `n_k ~ U{1..max_per_key}` arms; arms left
    /// unlinked are attached to one uniformly drawn key; each arm splits its
    /// unit weight equally over its keys.
    pub fn generate(arms: &[Vector], n_keys: usize, max_per_key: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if arms.is_empty() || n_keys == 0 || max_per_key == 0 {
            return Err(Error::param("key-term graph needs arms, keys and max_per_key > 0"));
        }
        let mut arm_keys: Vec<Vec<usize>> = vec![Vec::new(); arms.len()];
        for k in 0..n_keys {
            let n_k = rng.gen_range(1..=max_per_key).min(arms.len());
            for a in sample_indices(rng, arms.len(), n_k) {
                arm_keys[a].push(k);
            }
        }
        for keys in arm_keys.iter_mut() {
            if keys.is_empty() {
                keys.push(rng.gen_range(0..n_keys));
            }
        }
        let mut w = Matrix::zeros(arms.len(), n_keys);
        for (a, keys) in arm_keys.iter().enumerate() {
            let share = 1.0 / keys.len() as f64;
            for &k in keys {
                w[(a, k)] = share;
            }
        }
        Self::from_weights(arms, &w)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, key: usize) -> Option<&Vector> {
        self.features.get(key)
    }

    pub fn features(&self) -> &[Vector] {
        &self.features
    }

    pub fn links(&self, arm: usize) -> &[(usize, f64)] {
        &self.links[arm]
    }
}

fn abs_det(m: &Matrix) -> f64 {
    m.clone().lu().determinant().abs()
}

/// Indices of a `d`-element barycentric spanner of `features`.
///
/// Every feature is a combination of the spanner with coefficients bounded
/// by [`SPANNER_SWAP_FACTOR`] in absolute value.
pub fn barycentric_spanner(features: &[Vector]) -> Result<Vec<usize>> {
    let d = features.first().map_or(0, |f| f.len()).max(1);
    if features.is_empty() {
        return Err(Error::RankDeficient("no features".into()));
    }
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::param("features have inconsistent dimensions"));
    }
    let all = Matrix::from_columns(features);
    let rank = all.clone().svd(false, false).rank(1e-10 * all.amax().max(1.0));
    if rank < d {
        return Err(Error::RankDeficient(format!(
            "features span {rank} of {d} dimensions"
        )));
    }

    let mut basis = Matrix::identity(d, d);
    let mut chosen = vec![usize::MAX; d];
    for i in 0..d {
        let mut best = (-1.0, 0);
        for (j, f) in features.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            let mut trial = basis.clone();
            trial.set_column(i, f);
            let det = abs_det(&trial);
            if det > best.0 {
                best = (det, j);
            }
        }
        chosen[i] = best.1;
        basis.set_column(i, &features[best.1]);
    }

    // |det(B with column i replaced by x)| / |det B| = |(B^-1 x)_i|.
    loop {
        let inv = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("spanner basis became singular".into()))?;
        let mut swap = None;
        'scan: for (j, f) in features.iter().enumerate() {
            let c = &inv * f;
            for i in 0..d {
                if c[i].abs() > SPANNER_SWAP_FACTOR {
                    swap = Some((i, j));
                    break 'scan;
                }
            }
        }
        match swap {
            Some((i, j)) => {
                chosen[i] = j;
                basis.set_column(i, &features[j]);
            }
            None => return Ok(chosen),
        }
    }
}

/// Coefficients expressing `x` in the spanner basis.
pub fn spanner_coefficients(features: &[Vector], spanner: &[usize], x: &Vector) -> Result<Vector> {
    let cols: Vec<Vector> = spanner.iter().map(|&i| features[i].clone()).collect();
    Matrix::from_columns(&cols)
        .lu()
        .solve(x)
        .ok_or(Error::Singular("spanner basis is singular"))
}

/// Number of conversations allowed at round `t`: `floor(b(t)) - floor(b(t-1))`.
pub fn conversation_budget(b: &BudgetFn, t: u64) -> u64 {
    if t == 0 {
        return 0;
    }
    let now = b.eval(t).floor();
    let prev = b.eval(t - 1).floor();
    (now - prev).max(0.0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyTermStrategy {
    /// Uniform over a barycentric spanner.
    Bs,
    /// Maximal confidence radius.
    Mcr,
    /// Optimistic index on key-term features.
    Ucb,
    /// No conversations.
    None,
}

/// Single-user ConLinUCB state with joint arm/key-term regression.
#[derive(Clone, Debug)]
pub struct ConLinUcb {
    ridge: RidgeState,
    reg_beta: f64,
    delta: f64,
    budget: BudgetFn,
    strategy: KeyTermStrategy,
    spanner: Option<Vec<usize>>,
    n_keys: Option<usize>,
    alpha_override: Option<f64>,
    t: u64,
}

impl ConLinUcb {
    pub fn new(dim: usize, reg_beta: f64, delta: f64, budget: BudgetFn, strategy: KeyTermStrategy) -> Result<Self> {
        if !(reg_beta > 0.0) {
            return Err(Error::param("reg_beta must be > 0"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta must lie in (0, 1)"));
        }
        Ok(Self {
            ridge: RidgeState::new(dim, reg_beta)?,
            reg_beta,
            delta,
            budget,
            strategy,
            spanner: None,
            n_keys: None,
            alpha_override: None,
            t: 0,
        })
    }

    /// Precomputes the spanner for the BS strategy on a fixed key set.
    pub fn with_spanner(mut self, keys: &KeyTermGraph) -> Result<Self> {
        self.spanner = Some(barycentric_spanner(keys.features())?);
        self.n_keys = Some(keys.len());
        Ok(self)
    }

    /// Replaces the theoretical exploration radius by a constant.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_override = Some(alpha);
        self
    }

    pub fn state(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn strategy(&self) -> KeyTermStrategy {
        self.strategy
    }

    /// Advances the round counter and returns `q(t)` (zero without a strategy).
    pub fn begin_round(&mut self) -> u64 {
        self.t += 1;
        if self.strategy == KeyTermStrategy::None {
            0
        } else {
            conversation_budget(&self.budget, self.t)
        }
    }

    /// Exploration radius `alpha_t`.
    pub fn alpha(&self) -> f64 {
        if let Some(a) = self.alpha_override {
            return a;
        }
        let d = self.ridge.dim() as f64;
        let t = self.t as f64;
        let b = if self.strategy == KeyTermStrategy::None {
            0.0
        } else {
            self.budget.eval(self.t)
        };
        (2.0 * (1.0 / self.delta).ln() + d * (1.0 + (t + b) / (self.reg_beta * d)).ln()).sqrt()
            + self.reg_beta.sqrt()
    }

    /// Picks a key-term among `available` (ids into `keys`).
    pub fn select_key(&self, keys: &KeyTermGraph, available: &[usize], rng: &mut ChaCha8Rng) -> Result<usize> {
        if available.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        match self.strategy {
            KeyTermStrategy::Bs => {
                let spanner = self
                    .spanner
                    .as_ref()
                    .ok_or_else(|| Error::Config("BS strategy needs a precomputed spanner".into()))?;
                let fixed = self.n_keys == Some(keys.len())
                    && available.len() == keys.len()
                    && available.iter().enumerate().all(|(i, &k)| i == k);
                if !fixed {
                    return Err(Error::Config(
                        "BS strategy does not apply to a time-varying key-term set".into(),
                    ));
                }
                Ok(spanner[rng.gen_range(0..spanner.len())])
            }
            KeyTermStrategy::Mcr => Ok(argmax_by(available, |k| self.ridge.mnorm(&keys.features()[k]))),
            KeyTermStrategy::Ucb => {
                let theta = self.ridge.estimate()?;
                let a = self.alpha();
                Ok(argmax_by(available, |k| {
                    let x = &keys.features()[k];
                    x.dot(&theta) + a * self.ridge.mnorm(x)
                }))
            }
            KeyTermStrategy::None => Err(Error::Config("no key-term strategy configured".into())),
        }
    }

    /// Index of the chosen arm within `arms`.
    pub fn select_arm(&self, arms: &[&Vector]) -> Result<usize> {
        if arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        let theta = self.ridge.estimate()?;
        let a = self.alpha();
        let idx: Vec<usize> = (0..arms.len()).collect();
        Ok(argmax_by(&idx, |i| arms[i].dot(&theta) + a * self.ridge.mnorm(arms[i])))
    }

    pub fn absorb(&mut self, x: &Vector, r: f64) -> Result<()> {
        self.ridge.update(x, r, 1.0)
    }
}

/// One ConLinUCB learner per user, querying key-terms from the environment.
#[derive(Clone, Debug)]
pub struct ConversationalPolicy {
    learners: Vec<ConLinUcb>,
    keys: KeyTermGraph,
    pool: ArmPool,
    rng: ChaCha8Rng,
    queries: u64,
}

impl ConversationalPolicy {
    pub fn new(pool: &[Vector], users: usize, keys: &KeyTermGraph, template: ConLinUcb, rng: ChaCha8Rng) -> Result<Self> {
        let template = if template.strategy == KeyTermStrategy::Bs && template.spanner.is_none() {
            template.with_spanner(keys)?
        } else {
            template
        };
        Ok(Self {
            learners: vec![template; users],
            keys: keys.clone(),
            pool: ArmPool::new(pool),
            rng,
            queries: 0,
        })
    }

    pub fn learner(&self, user: usize) -> &ConLinUcb {
        &self.learners[user]
    }

    /// Total key-term queries made so far.
    pub fn queries(&self) -> u64 {
        self.queries
    }
}

impl Policy for ConversationalPolicy {
    fn converse(&mut self, ctx: &Context, env: &mut Environment) -> Result<usize> {
        let learner = self.learners.get_mut(ctx.user).ok_or(Error::UnknownUser(ctx.user))?;
        let q = learner.begin_round();
        let available: Vec<usize> = (0..self.keys.len()).collect();
        for _ in 0..q {
            let k = learner.select_key(&self.keys, &available, &mut self.rng)?;
            let r = env.key_feedback(ctx.user, k)?;
            learner.absorb(&self.keys.features()[k], r)?;
        }
        self.queries += q;
        Ok(q as usize)
    }

    fn select(&mut self, ctx: &Context) -> Result<usize> {
        let learner = self.learners.get(ctx.user).ok_or(Error::UnknownUser(ctx.user))?;
        let arms: Vec<&Vector> = ctx.arms.iter().map(|&a| self.pool.get(a)).collect();
        Ok(ctx.arms[learner.select_arm(&arms)?])
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let x = self.pool.get(arm).clone();
        self.learners[ctx.user].absorb(&x, r)
    }
}

/// First element of `items` maximising `f` (ties keep the earliest).
pub(crate) fn argmax_by<F: FnMut(usize) -> f64>(items: &[usize], mut f: F) -> usize {
    let mut best = items[0];
    let mut best_v = f64::NEG_INFINITY;
    for &i in items {
        let v = f(i);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::LogBase;

    fn e(d: usize, i: usize) -> Vector {
        let mut v = Vector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn budget_log_schedule() {
        let b = BudgetFn::Log {
            scale: 5.0,
            base: LogBase::E,
        };
        assert_eq!(conversation_budget(&b, 2), 5);
        assert_eq!(conversation_budget(&b, 3), 0);
        assert_eq!(conversation_budget(&BudgetFn::Linear { rate: 1.0 }, 7), 1);
        assert_eq!(conversation_budget(&BudgetFn::Constant { value: 3.0 }, 7), 0);
    }

    #[test]
    fn spanner_of_basis_is_basis() {
        let f: Vec<Vector> = (0..3).map(|i| e(3, i)).collect();
        let mut s = barycentric_spanner(&f).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn spanner_skips_scaled_copy() {
        let f = vec![e(2, 0), e(2, 1), e(2, 0) * 0.5];
        let mut s = barycentric_spanner(&f).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1]);
    }

    #[test]
    fn spanner_rejects_rank_deficiency() {
        let f = vec![e(3, 0), e(3, 1), e(3, 0) + e(3, 1)];
        assert!(matches!(barycentric_spanner(&f), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn key_feature_is_weighted_average() {
        let arms = vec![e(2, 0), e(2, 1)];
        let w = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        let g = KeyTermGraph::from_weights(&arms, &w).unwrap();
        // key 1: weights 0.5 (arm 0) and 1.0 (arm 1)
        let f1 = g.feature(1).unwrap();
        assert!((f1[0] - 1.0 / 3.0).abs() < 1e-12 && (f1[1] - 2.0 / 3.0).abs() < 1e-12);
        let bad = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert!(KeyTermGraph::from_weights(&arms, &bad).is_err());
    }

    #[test]
    fn key_feedback_shrinks_radius() {
        // d=1, beta=1: arm-only round gives 1/sqrt(2); adding the key gives 1/sqrt(3).
        let x = e(1, 0);
        let mut s = ConLinUcb::new(1, 1.0, 0.1, BudgetFn::Constant { value: 0.0 }, KeyTermStrategy::Mcr).unwrap();
        s.absorb(&x, 1.0).unwrap();
        assert!((s.state().mnorm(&x) - 0.5f64.sqrt()).abs() < 1e-12);
        s.absorb(&x, 1.0).unwrap();
        assert!((s.state().mnorm(&x) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
