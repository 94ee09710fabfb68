//! Reference policies: LinUCB, RLinUCB, CW-OFUL, CLUB, EXP3.S and SW-UCB.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::FeedbackEvent;
use crate::error::{Error, Result};
use crate::graph::UserGraph;
use crate::linalg::{aggregate, Matrix, RidgeState, Vector};
use crate::policy::{argmax_ids, ArmPool, Context, Policy};

/// `sqrt(lambda) + sqrt(2 ln(1/delta) + d ln(1 + T / (lambda d)))`.
pub fn theory_beta(lambda: f64, delta: f64, dim: usize, horizon: usize) -> f64 {
    let d = dim as f64;
    lambda.sqrt() + (2.0 * (1.0 / delta).ln() + d * (1.0 + horizon as f64 / (lambda * d)).ln()).sqrt()
}

/// Edge-deletion scale `sqrt((1 + ln(1 + T)) / (1 + T))`.
pub fn deletion_f(t: u64) -> f64 {
    let t = t as f64;
    ((1.0 + (1.0 + t).ln()) / (1.0 + t)).sqrt()
}

/// `min{1, alpha / uncertainty}`; zero uncertainty gives 1.
pub fn corruption_weight(alpha: f64, uncertainty: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("weight scale alpha must be >= 0, got {alpha}")));
    }
    if uncertainty <= 0.0 || alpha.is_infinite() {
        return Ok(1.0);
    }
    Ok((alpha / uncertainty).min(1.0))
}

pub(crate) fn reward_of(event: &FeedbackEvent) -> Result<f64> {
    event
        .reward()
        .ok_or_else(|| Error::Config("scalar policy received preference feedback".into()))
}

/// Optimistic argmax of `x^T theta + beta ||x||` over `arms`; ties go to the lowest id.
pub fn linucb_select(state: &RidgeState, arms: &[usize], pool: &ArmPool, beta: f64) -> Result<usize> {
    if arms.is_empty() {
        return Err(Error::EmptyArmSet);
    }
    let theta = state.estimate()?;
    let scores: Vec<f64> = arms
        .iter()
        .map(|&a| {
            let x = pool.get(a);
            x.dot(&theta) + beta * state.mnorm(x)
        })
        .collect();
    Ok(argmax_ids(arms, &scores))
}

/// Misspecification-aware index
/// `x^T theta + beta ||x|| + eps * sum_s n_s |x^T A^-1 x_s|`, optionally clipped at 1.
pub fn rlinucb_index(
    state: &RidgeState,
    x: &Vector,
    beta: f64,
    eps_star: f64,
    history: &[(Vector, f64)],
    clip: bool,
) -> Result<f64> {
    let theta = state.estimate()?;
    let inv = state
        .inverse()
        .ok_or(Error::Singular("regularised Gram matrix is not invertible"))?;
    let y = inv * x;
    let bonus: f64 = history.iter().map(|(xs, n)| n * xs.dot(&y).abs()).sum();
    let v = x.dot(&theta) + beta * state.mnorm(x) + eps_star * bonus;
    Ok(if clip { v.min(1.0) } else { v })
}

/// LinUCB with one state per user (`Ind`) or one shared state.
#[derive(Clone, Debug)]
pub struct LinUcb {
    states: Vec<RidgeState>,
    shared: bool,
    beta: f64,
    pool: ArmPool,
}

impl LinUcb {
    pub fn new(pool: &[Vector], users: usize, lambda: f64, beta: f64, shared: bool) -> Result<Self> {
        let dim = pool.first().map_or(0, |a| a.len());
        let n = if shared { 1 } else { users };
        Ok(Self {
            states: (0..n).map(|_| RidgeState::new(dim, lambda)).collect::<Result<_>>()?,
            shared,
            beta,
            pool: ArmPool::new(pool),
        })
    }

    fn slot(&self, user: usize) -> usize {
        if self.shared {
            0
        } else {
            user
        }
    }

    pub fn state(&self, user: usize) -> &RidgeState {
        &self.states[self.slot(user)]
    }
}

impl Policy for LinUcb {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        linucb_select(&self.states[self.slot(ctx.user)], ctx.arms, &self.pool, self.beta)
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let s = self.slot(ctx.user);
        self.states[s].update(self.pool.get(arm), r, 1.0)
    }
}

/// RLinUCB: LinUCB with the misspecification bonus over its own history.
#[derive(Clone, Debug)]
pub struct RLinUcb {
    states: Vec<RidgeState>,
    counts: Vec<Vec<f64>>,
    shared: bool,
    beta: f64,
    eps_star: f64,
    clip: bool,
    pool: ArmPool,
}

impl RLinUcb {
    pub fn new(pool: &[Vector], users: usize, lambda: f64, beta: f64, eps_star: f64, clip: bool, shared: bool) -> Result<Self> {
        let dim = pool.first().map_or(0, |a| a.len());
        let n = if shared { 1 } else { users };
        Ok(Self {
            states: (0..n).map(|_| RidgeState::new(dim, lambda)).collect::<Result<_>>()?,
            counts: vec![vec![0.0; pool.len()]; n],
            shared,
            beta,
            eps_star,
            clip,
            pool: ArmPool::new(pool),
        })
    }

    fn slot(&self, user: usize) -> usize {
        if self.shared {
            0
        } else {
            user
        }
    }
}

impl Policy for RLinUcb {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        let s = self.slot(ctx.user);
        let state = &self.states[s];
        let theta = state.estimate()?;
        let inv = state.inverse().ok_or(Error::Singular("user matrix"))?;
        let bonus = self.pool.misspec_bonus(inv, &self.counts[s], ctx.arms);
        let scores: Vec<f64> = ctx
            .arms
            .iter()
            .zip(&bonus)
            .map(|(&a, b)| {
                let x = self.pool.get(a);
                let v = x.dot(&theta) + self.beta * state.mnorm(x) + self.eps_star * b;
                if self.clip {
                    v.min(1.0)
                } else {
                    v
                }
            })
            .collect();
        Ok(argmax_ids(ctx.arms, &scores))
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let s = self.slot(ctx.user);
        self.counts[s][arm] += 1.0;
        self.states[s].update(self.pool.get(arm), r, 1.0)
    }
}

/// CW-OFUL: weighted OFUL with weight `min{1, alpha / ||x||}` from the pre-update state.
#[derive(Clone, Debug)]
pub struct CwOful {
    states: Vec<RidgeState>,
    shared: bool,
    alpha: f64,
    beta: f64,
    pool: ArmPool,
}

impl CwOful {
    pub fn new(pool: &[Vector], users: usize, lambda: f64, alpha: f64, beta: f64, shared: bool) -> Result<Self> {
        corruption_weight(alpha, 1.0)?;
        let dim = pool.first().map_or(0, |a| a.len());
        let n = if shared { 1 } else { users };
        Ok(Self {
            states: (0..n).map(|_| RidgeState::new(dim, lambda)).collect::<Result<_>>()?,
            shared,
            alpha,
            beta,
            pool: ArmPool::new(pool),
        })
    }

    fn slot(&self, user: usize) -> usize {
        if self.shared {
            0
        } else {
            user
        }
    }

    pub fn state(&self, user: usize) -> &RidgeState {
        &self.states[self.slot(user)]
    }
}

/// Applies one CW-OFUL update to `state`; returns the weight used.
pub fn cwoful_update(state: &mut RidgeState, x: &Vector, r: f64, alpha: f64) -> Result<f64> {
    let w = corruption_weight(alpha, state.mnorm(x))?;
    state.update(x, r, w)?;
    Ok(w)
}

impl Policy for CwOful {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        linucb_select(&self.states[self.slot(ctx.user)], ctx.arms, &self.pool, self.beta)
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let s = self.slot(ctx.user);
        cwoful_update(&mut self.states[s], self.pool.get(arm), r, self.alpha)?;
        Ok(())
    }
}

/// CLUB: graph clustering with connected-component aggregation.
#[derive(Clone, Debug)]
pub struct Club {
    users: Vec<RidgeState>,
    theta: Vec<Vector>,
    graph: UserGraph,
    lambda: f64,
    beta: f64,
    alpha1: f64,
    pool: ArmPool,
}

impl Club {
    pub fn new(pool: &[Vector], users: usize, lambda: f64, beta: f64, alpha1: f64) -> Result<Self> {
        let dim = pool.first().map_or(0, |a| a.len());
        Ok(Self {
            users: (0..users).map(|_| RidgeState::new(dim, lambda)).collect::<Result<_>>()?,
            theta: vec![Vector::zeros(dim); users],
            graph: UserGraph::complete(users),
            lambda,
            beta,
            alpha1,
            pool: ArmPool::new(pool),
        })
    }

    pub fn graph(&self) -> &UserGraph {
        &self.graph
    }
}

/// Deletes every edge `(user, l)` whose estimates differ by at least `threshold(T_user, T_l)`.
pub(crate) fn prune_edges<F: Fn(u64, u64) -> f64>(
    graph: &mut UserGraph,
    theta: &[Vector],
    counts: &[u64],
    user: usize,
    threshold: F,
) {
    let nbrs: Vec<usize> = graph.neighbors(user).collect();
    for l in nbrs {
        let gap = (&theta[user] - &theta[l]).norm();
        if gap >= threshold(counts[user], counts[l]) {
            graph.remove_edge(user, l);
        }
    }
}

impl Policy for Club {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        let members = self.graph.component_of(ctx.user);
        let dim = self.pool.dim();
        let agg = aggregate(dim, self.lambda, members.iter().map(|&i| &self.users[i]))?;
        linucb_select(&agg, ctx.arms, &self.pool, self.beta)
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let i = ctx.user;
        self.users[i].update(self.pool.get(arm), r, 1.0)?;
        self.theta[i] = self.users[i].estimate()?;
        let counts: Vec<u64> = self.users.iter().map(|s| s.count()).collect();
        let a1 = self.alpha1;
        prune_edges(&mut self.graph, &self.theta, &counts, i, |ti, tl| {
            a1 * (deletion_f(ti) + deletion_f(tl))
        });
        Ok(())
    }

    fn partition(&self) -> Option<Vec<usize>> {
        Some(self.graph.component_labels())
    }
}

/// Parameters of EXP3.S.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exp3SParams {
    /// Uniform exploration mix `gamma_bar`.
    pub gamma: f64,
    /// Weight-sharing rate `alpha_bar`.
    pub share: f64,
    /// Learning rate; `None` uses `gamma / N`.
    pub lr: Option<f64>,
    /// Rewards are clamped into this range and rescaled to [0, 1].
    pub reward_range: (f64, f64),
}

impl Default for Exp3SParams {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            share: 0.0,
            lr: None,
            reward_range: (0.0, 1.0),
        }
    }
}

/// EXP3.S weights over a fixed set of `N` arms.
#[derive(Clone, Debug)]
pub struct Exp3S {
    weights: Vec<f64>,
    params: Exp3SParams,
    rng: ChaCha8Rng,
    last_probs: Vec<f64>,
    warned: bool,
}

impl Exp3S {
    pub fn new(n_arms: usize, params: Exp3SParams, rng: ChaCha8Rng) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::EmptyArmSet);
        }
        if !(0.0..=1.0).contains(&params.gamma) || !(params.share >= 0.0) {
            return Err(Error::Config("EXP3.S needs gamma in [0, 1] and share >= 0".into()));
        }
        if !(params.reward_range.1 > params.reward_range.0) {
            return Err(Error::Config("EXP3.S reward range must be increasing".into()));
        }
        Ok(Self {
            weights: vec![1.0; n_arms],
            params,
            rng,
            last_probs: vec![1.0 / n_arms as f64; n_arms],
            warned: false,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `p_i = (1 - gamma) w_i / sum w + gamma / N`.
    pub fn probabilities(&self) -> Vec<f64> {
        exp3s_probabilities(&self.weights, self.params.gamma)
    }

    fn rescale(&mut self, r: f64) -> f64 {
        let (lo, hi) = self.params.reward_range;
        if (r < lo || r > hi) && !self.warned {
            log::warn!("EXP3.S reward {r} outside [{lo}, {hi}]; clamping");
            self.warned = true;
        }
        (r.clamp(lo, hi) - lo) / (hi - lo)
    }

    /// Samples an arm index in `0..N`.
    pub fn sample(&mut self) -> usize {
        self.last_probs = self.probabilities();
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.last_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.last_probs.len() - 1
    }

    /// Updates weights with reward `r` observed on arm index `i`.
    pub fn observe(&mut self, i: usize, r: f64) {
        let x = self.rescale(r);
        let probs = self.probabilities();
        exp3s_update(&mut self.weights, &probs, i, x, &self.params);
    }
}

pub fn exp3s_probabilities(weights: &[f64], gamma: f64) -> Vec<f64> {
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| (1.0 - gamma) * w / total + gamma / n)
        .collect()
}

/// One EXP3.S weight update for reward `x` in [0, 1] on arm `i`; weights are renormalised to sum 1.
pub fn exp3s_update(weights: &mut [f64], probs: &[f64], i: usize, x: f64, params: &Exp3SParams) {
    let n = weights.len() as f64;
    let lr = params.lr.unwrap_or(params.gamma / n);
    let total: f64 = weights.iter().sum();
    let share = std::f64::consts::E * params.share / n * total;
    for (j, w) in weights.iter_mut().enumerate() {
        let xhat = if j == i { x / probs[i] } else { 0.0 };
        *w = *w * (lr * xhat).exp() + share;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

impl Policy for Exp3S {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "EXP3.S was built for {} arms but {} were presented",
                self.weights.len(),
                ctx.arms.len()
            )));
        }
        let i = self.sample();
        Ok(ctx.arms[i])
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let i = ctx
            .arms
            .iter()
            .position(|&a| a == arm)
            .ok_or_else(|| Error::param("updated arm was not presented"))?;
        self.observe(i, r);
        Ok(())
    }
}

/// Sliding-window OFUL over the most recent `window` samples.
#[derive(Clone, Debug)]
pub struct SwUcb {
    buffer: VecDeque<(Vector, f64)>,
    window: usize,
    lambda: f64,
    beta: f64,
    gram: Matrix,
    resp: Vector,
    since_rebuild: usize,
    pool: ArmPool,
}

impl SwUcb {
    pub fn new(pool: &[Vector], lambda: f64, beta: f64, window: usize) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config("SW-UCB needs lambda > 0".into()));
        }
        let dim = pool.first().map_or(0, |a| a.len());
        Ok(Self {
            buffer: VecDeque::new(),
            window,
            lambda,
            beta,
            gram: Matrix::zeros(dim, dim),
            resp: Vector::zeros(dim),
            since_rebuild: 0,
            pool: ArmPool::new(pool),
        })
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Ridge state over the buffered window.
    pub fn state(&self) -> Result<RidgeState> {
        RidgeState::from_parts(
            self.lambda,
            self.gram.clone(),
            self.resp.clone(),
            self.buffer.len() as u64,
            self.buffer.len() as f64,
        )
    }

    pub fn push(&mut self, x: Vector, r: f64) {
        if self.window == 0 {
            return;
        }
        self.gram.ger(1.0, &x, &x, 1.0);
        self.resp.axpy(r, &x, 1.0);
        self.buffer.push_back((x, r));
        if self.buffer.len() > self.window {
            let (old, r_old) = self.buffer.pop_front().expect("non-empty buffer");
            self.gram.ger(-1.0, &old, &old, 1.0);
            self.resp.axpy(-r_old, &old, 1.0);
        }
        self.since_rebuild += 1;
        if self.since_rebuild >= self.window.max(1) {
            self.rebuild();
        }
    }

    fn rebuild(&mut self) {
        self.since_rebuild = 0;
        self.gram.fill(0.0);
        self.resp.fill(0.0);
        for (x, r) in &self.buffer {
            self.gram.ger(1.0, x, x, 1.0);
            self.resp.axpy(*r, x, 1.0);
        }
    }
}

impl Policy for SwUcb {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        let state = self.state()?;
        linucb_select(&state, ctx.arms, &self.pool, self.beta)
    }

    fn update(&mut self, _ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        crate::linalg::ensure_finite(r, "reward")?;
        self.push(self.pool.get(arm).clone(), r);
        Ok(())
    }
}
