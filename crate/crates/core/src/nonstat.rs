//! Non-stationary linear bandits with heteroscedastic noise: Restarted-WeightedOFUL+,
//! Restarted SAVE+ and the bandit-over-bandit wrapper around SAVE+.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::reward_of;
use crate::env::FeedbackEvent;
use crate::error::{Error, Result};
use crate::linalg::{RidgeState, Vector};
use crate::policy::{argmax_ids, ArmPool, Context, Policy};

/// How a confidence radius is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Radius {
    /// The data-dependent theoretical radius.
    Theory,
    /// A fixed radius. For SAVE+ this is a scale `c`, giving `c * 2^(1 - l)` on layer `l`.
    Fixed(f64),
}

/// `max{sigma, alpha, gamma * sqrt(uncertainty)}`.
pub fn sigma_bar(sigma: f64, alpha: f64, gamma: f64, uncertainty: f64) -> f64 {
    sigma.max(alpha).max(gamma * uncertainty.max(0.0).sqrt())
}

/// Restart window and variance floor for known `V_K` and `B_K`, RW-OFUL form.
/// Returns `(w, alpha)`, with `w` rounded up.
pub fn optimal_window(dim: usize, total_variance: f64, budget: f64, horizon: usize) -> (usize, f64) {
    let (d, v, b, k) = (dim as f64, total_variance, budget, horizon as f64);
    let w = if d * v.powi(6) >= k.powi(4) * b * b {
        d.powf(0.25) * (v / b).sqrt()
    } else {
        d.powf(1.0 / 6.0) * (k / b).cbrt()
    };
    let w = (w.ceil() as usize).max(1);
    let alpha = d.powf(-0.25) * b.sqrt() * w as f64 / k.sqrt();
    (w, alpha)
}

/// Restart window and `alpha` for known `V_K` and `B_K`, SAVE+ form.
pub fn optimal_window_save(dim: usize, total_variance: f64, budget: f64, horizon: usize) -> (usize, f64) {
    let (d, v, b, k) = (dim as f64, total_variance, budget, horizon as f64);
    let w = if k * k >= v.powi(3) * d / b {
        d.cbrt() * (k / b).cbrt()
    } else {
        d.powf(0.4) * (k * v).powf(0.2) / b.powf(0.4)
    };
    let w = (w.ceil() as usize).max(1);
    let wf = w as f64;
    let alpha = d.powf(1.0 / 6.0) * wf.sqrt() * b.cbrt() / (k.cbrt() + (v * k * wf).powf(1.0 / 6.0));
    (w, alpha)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RwOfulParams {
    pub lambda: f64,
    /// Variance floor.
    pub alpha: f64,
    /// Uncertainty-to-variance factor.
    pub gamma: f64,
    pub window: usize,
    pub delta: f64,
    /// Bound on arm norms `A`.
    pub arm_bound: f64,
    /// Bound on parameter norms `B`.
    pub theta_bound: f64,
    /// Noise bound `R`.
    pub noise_bound: f64,
    pub radius: Radius,
}

impl Default for RwOfulParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1.0,
            gamma: 2.0,
            window: 1000,
            delta: 0.01,
            arm_bound: 1.0,
            theta_bound: 1.0,
            noise_bound: 1.0,
            radius: Radius::Theory,
        }
    }
}

impl RwOfulParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.alpha > 0.0 && self.gamma > 0.0) {
            return Err(Error::Config("RW-OFUL needs lambda, alpha and gamma > 0".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("restart window must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        if self.radius == Radius::Theory && (self.gamma * self.gamma / self.alpha).ln() + 1.0 <= 0.0 {
            return Err(Error::Config("theoretical radius needs ln(gamma^2 / alpha) > -1".into()));
        }
        Ok(())
    }

    /// Radius at round `k`; `k % w == 0` is evaluated with count 1.
    pub fn beta(&self, dim: usize, k: usize) -> f64 {
        match self.radius {
            Radius::Fixed(b) => b,
            Radius::Theory => {
                let n = (k % self.window).max(1) as f64;
                let d = dim as f64;
                let a2 = self.arm_bound * self.arm_bound;
                let g2 = self.gamma * self.gamma;
                let iota = (32.0 * ((g2 / self.alpha).ln() + 1.0) * n * n / self.delta).ln();
                let log_det = (1.0 + n * a2 / (self.alpha * self.alpha * d * self.lambda)).ln();
                12.0 * (d * log_det * iota).sqrt()
                    + 30.0 * iota * self.noise_bound / g2
                    + self.lambda.sqrt() * self.theta_bound
            }
        }
    }
}

/// Restarted-WeightedOFUL+. Needs the noise scale revealed after each pull.
#[derive(Clone, Debug)]
pub struct RwOful {
    params: RwOfulParams,
    state: RidgeState,
    pool: ArmPool,
    k: usize,
    beta: f64,
    restarts: usize,
}

impl RwOful {
    pub fn new(pool: &[Vector], params: RwOfulParams) -> Result<Self> {
        params.validate()?;
        let dim = pool.first().map_or(0, |a| a.len());
        Ok(Self {
            params,
            state: RidgeState::new(dim, params.lambda)?,
            pool: ArmPool::new(pool),
            k: 0,
            beta: params.lambda.sqrt() * params.theta_bound,
            restarts: 0,
        })
    }

    pub fn state(&self) -> &RidgeState {
        &self.state
    }

    pub fn round(&self) -> usize {
        self.k
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn begin_round(&mut self) -> Result<()> {
        self.k += 1;
        if self.k.is_multiple_of(self.params.window) {
            self.state = RidgeState::new(self.pool.dim(), self.params.lambda)?;
            self.restarts += 1;
        }
        self.beta = self.params.beta(self.pool.dim(), self.k);
        Ok(())
    }

    /// Weighted update for arm vector `x`, reward `r` and revealed noise scale `sigma`.
    /// Returns the weight `1 / sigma_bar^2`.
    pub fn observe(&mut self, x: &Vector, r: f64, sigma: f64) -> Result<f64> {
        let p = &self.params;
        let sb = sigma_bar(sigma, p.alpha, p.gamma, self.state.mnorm(x));
        let w = 1.0 / (sb * sb);
        self.state.update(x, r, w)?;
        Ok(w)
    }
}

impl Policy for RwOful {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        self.begin_round()?;
        let theta = self.state.estimate()?;
        let scores: Vec<f64> = ctx
            .arms
            .iter()
            .map(|&a| {
                let x = self.pool.get(a);
                x.dot(&theta) + self.beta * self.state.mnorm(x)
            })
            .collect();
        Ok(argmax_ids(ctx.arms, &scores))
    }

    fn update(&mut self, _ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let sigma = event
            .sigma
            .ok_or_else(|| Error::Config("RW-OFUL needs an environment that reveals the noise scale".into()))?;
        let x = self.pool.get(arm).clone();
        self.observe(&x, r, sigma)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SavePlusParams {
    /// Sets the layer count `L = ceil(log2(1 / alpha))`, at least 1.
    pub alpha: f64,
    pub window: usize,
    pub delta: f64,
    pub theta_bound: f64,
    pub noise_bound: f64,
    pub radius: Radius,
}

impl Default for SavePlusParams {
    fn default() -> Self {
        Self {
            alpha: 1.0 / 64.0,
            window: 1000,
            delta: 0.01,
            theta_bound: 1.0,
            noise_bound: 1.0,
            radius: Radius::Theory,
        }
    }
}

impl SavePlusParams {
    pub fn layers(&self) -> usize {
        ((1.0 / self.alpha).log2().ceil().max(1.0)) as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("SAVE+ needs alpha > 0".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("restart window must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Layer {
    state: RidgeState,
    samples: Vec<(Vector, f64, f64)>,
    beta: f64,
    theta: Vector,
}

/// Restarted SAVE+: a multi-layer weighted ridge estimator with no access to the noise scale.
#[derive(Clone, Debug)]
pub struct SavePlus {
    params: SavePlusParams,
    layers: Vec<Layer>,
    pool: ArmPool,
    k: usize,
    restarts: usize,
    skipped: usize,
    max_identity_error: f64,
}

fn scale(l: usize) -> f64 {
    0.5f64.powi(l as i32)
}

impl SavePlus {
    pub fn new(pool: &[Vector], params: SavePlusParams) -> Result<Self> {
        params.validate()?;
        let pool = ArmPool::new(pool);
        let mut s = Self {
            params,
            layers: Vec::new(),
            pool,
            k: 0,
            restarts: 0,
            skipped: 0,
            max_identity_error: 0.0,
        };
        s.reset()?;
        s.restarts = 0;
        Ok(s)
    }

    fn initial_beta(&self, l: usize) -> f64 {
        let c = match self.params.radius {
            Radius::Fixed(c) => c,
            Radius::Theory => 1.0,
        };
        c * 2.0 * scale(l)
    }

    fn reset(&mut self) -> Result<()> {
        let d = self.pool.dim();
        let n = self.params.layers();
        self.layers = (1..=n)
            .map(|l| {
                Ok(Layer {
                    state: RidgeState::new(d, scale(2 * l))?,
                    samples: Vec::new(),
                    beta: self.initial_beta(l),
                    theta: Vector::zeros(d),
                })
            })
            .collect::<Result<_>>()?;
        self.skipped = 0;
        self.restarts += 1;
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Ridge state of layer `l` (1-based).
    pub fn layer_state(&self, l: usize) -> &RidgeState {
        &self.layers[l - 1].state
    }

    pub fn layer_beta(&self, l: usize) -> f64 {
        self.layers[l - 1].beta
    }

    /// Samples absorbed by layer `l` since the last restart.
    pub fn layer_size(&self, l: usize) -> usize {
        self.layers[l - 1].samples.len()
    }

    /// Rounds since the last restart that updated no layer.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn round(&self) -> usize {
        self.k
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    /// Largest `|w_k * ||a_k|| - 2^-l|` seen at any absorption.
    pub fn max_identity_error(&self) -> f64 {
        self.max_identity_error
    }

    /// Starts round `k`, restarting when `k % w == 0`.
    pub fn begin_round(&mut self) -> Result<()> {
        self.k += 1;
        if self.k.is_multiple_of(self.params.window) {
            self.reset()?;
        }
        Ok(())
    }

    /// Index `min_l <a, theta_l> + beta_l ||a||_l`.
    pub fn index(&self, x: &Vector) -> f64 {
        self.layers
            .iter()
            .map(|ly| x.dot(&ly.theta) + ly.beta * ly.state.mnorm(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Absorbs `(x, r)`; returns the chosen layer (1-based) and weight, or `None` when no layer qualifies.
    pub fn observe(&mut self, x: &Vector, r: f64) -> Result<Option<(usize, f64)>> {
        crate::linalg::ensure_finite(r, "reward")?;
        let mut chosen = None;
        for (i, ly) in self.layers.iter().enumerate() {
            let m = ly.state.mnorm(x);
            if m >= scale(i + 1) {
                chosen = Some((i, m));
                break;
            }
        }
        let Some((i, m)) = chosen else {
            self.skipped += 1;
            return Ok(None);
        };
        let l = i + 1;
        let w = scale(l) / m;
        self.max_identity_error = self.max_identity_error.max((w * m - scale(l)).abs());
        let ly = &mut self.layers[i];
        ly.state.update(x, r, w * w)?;
        ly.samples.push((x.clone(), r, w));
        ly.theta = ly.state.estimate()?;
        if self.params.radius == Radius::Theory {
            let beta = self.theory_beta(i);
            self.layers[i].beta = beta;
        }
        Ok(Some((l, w)))
    }

    fn theory_beta(&self, i: usize) -> f64 {
        let p = &self.params;
        let l = i + 1;
        let ly = &self.layers[i];
        let nl = self.layers.len() as f64;
        let w = p.window as f64;
        let r = p.noise_bound;
        let log_a = (4.0 * (w + 1.0).powi(2) * nl / p.delta).ln();
        let log_b = (4.0 * w * w * nl / p.delta).ln();
        let var = if 2f64.powi(l as i32) >= 64.0 * log_a.sqrt() {
            ly.samples
                .iter()
                .map(|(a, ri, wi)| wi * wi * (ri - ly.theta.dot(a)).powi(2))
                .sum()
        } else {
            r * r * ly.samples.len() as f64
        };
        let s = scale(l);
        16.0 * s * (8.0 * var + 6.0 * r * r * log_a + 16.0 * s * s).sqrt() * log_b.sqrt()
            + 6.0 * s * r * log_b
            + s * p.theta_bound
    }

    fn scores(&self, arms: &[usize]) -> Vec<f64> {
        arms.iter().map(|&a| self.index(self.pool.get(a))).collect()
    }
}

impl Policy for SavePlus {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        self.begin_round()?;
        let scores = self.scores(ctx.arms);
        Ok(argmax_ids(ctx.arms, &scores))
    }

    fn update(&mut self, _ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let x = self.pool.get(arm).clone();
        self.observe(&x, r)?;
        Ok(())
    }
}

/// Candidate `(w, alpha)` grid for the meta-learner.
pub fn bob_pool(dim: usize, horizon: usize) -> Vec<(usize, f64)> {
    let d = dim as f64;
    let lk = (horizon as f64).log2();
    let grid = |frac: f64| (frac * lk).ceil() as i32 + 1;
    let mut ws = Vec::new();
    for (base, frac) in [(d.cbrt(), 1.0 / 3.0), (d.powf(0.4), 0.4)] {
        for i in 1..=grid(frac) {
            ws.push(((base * 2f64.powi(i - 1)).round() as usize).max(1));
        }
    }
    let mut alphas = Vec::new();
    for (base, frac) in [(d.cbrt(), 1.0 / 3.0), (d.powf(11.0 / 30.0), 11.0 / 30.0)] {
        for i in 1..=grid(frac) {
            alphas.push(base * 2f64.powi(1 - i));
        }
    }
    let mut pool = Vec::with_capacity(ws.len() * alphas.len());
    for &w in &ws {
        for &a in &alphas {
            pool.push((w, a));
        }
    }
    pool
}

/// `H = ceil(d^(2/5) K^(2/5))`.
pub fn bob_block_length(dim: usize, horizon: usize) -> usize {
    ((dim as f64).powf(0.4) * (horizon as f64).powf(0.4)).ceil() as usize
}

/// Exp3 mixing rate `min{1, sqrt((P + 1) ln(P + 1) / ((e - 1) ceil(K / H)))}`.
pub fn bob_gamma(pool_size: usize, horizon: usize, block: usize) -> f64 {
    let p1 = pool_size as f64 + 1.0;
    let blocks = horizon.div_ceil(block) as f64;
    (p1 * p1.ln() / ((std::f64::consts::E - 1.0) * blocks)).sqrt().min(1.0)
}

/// Meta-learner distribution `(1 - gamma) s_j / sum s + gamma / (P + 1)`, unnormalised.
pub fn bob_probabilities(s: &[f64], gamma: f64) -> Vec<f64> {
    let total: f64 = s.iter().sum();
    let p1 = s.len() as f64 + 1.0;
    s.iter().map(|sj| (1.0 - gamma) * sj / total + gamma / p1).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BobParams {
    pub horizon: usize,
    pub delta: f64,
    pub theta_bound: f64,
    pub noise_bound: f64,
    /// Sample a no-op slot with the leftover mass instead of renormalising.
    pub strict: bool,
}

impl BobParams {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            delta: 0.01,
            theta_bound: 1.0,
            noise_bound: 1.0,
            strict: false,
        }
    }
}

/// Restarted SAVE+ tuned online by an Exp3 meta-learner over `(w, alpha)` blocks.
#[derive(Clone, Debug)]
pub struct Bob {
    params: BobParams,
    arms: Vec<Vector>,
    pool: Vec<(usize, f64)>,
    weights: Vec<f64>,
    gamma: f64,
    block: usize,
    denom: f64,
    rng: ChaCha8Rng,
    base: Option<SavePlus>,
    current: Option<(usize, f64)>,
    in_block: usize,
    block_reward: f64,
    k: usize,
    warned: bool,
}

impl Bob {
    pub fn new(arms: &[Vector], params: BobParams, rng: ChaCha8Rng) -> Result<Self> {
        if params.horizon == 0 {
            return Err(Error::Config("BOB needs a horizon >= 1".into()));
        }
        let dim = arms.first().map_or(0, |a| a.len());
        let pool = bob_pool(dim, params.horizon);
        let block = bob_block_length(dim, params.horizon).max(1);
        let k = params.horizon as f64;
        let h = block as f64;
        let lg = (k * (k / h + 1.0)).ln();
        let denom = h + params.noise_bound * (h / 2.0 * lg).sqrt() + 2.0 / 3.0 * params.noise_bound * lg;
        Ok(Self {
            gamma: bob_gamma(pool.len(), params.horizon, block),
            weights: vec![1.0; pool.len()],
            pool,
            params,
            arms: arms.to_vec(),
            block,
            denom,
            rng,
            base: None,
            current: None,
            in_block: 0,
            block_reward: 0.0,
            k: 0,
            warned: false,
        })
    }

    pub fn pool(&self) -> &[(usize, f64)] {
        &self.pool
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn block_length(&self) -> usize {
        self.block
    }

    /// Maps a block's cumulative reward into the meta-learner's range.
    pub fn rescale(&mut self, total: f64) -> f64 {
        let x = total / self.denom;
        if !(-0.5..=1.5).contains(&x) && !self.warned {
            log::warn!("BOB rescaled block reward {x} outside [-1/2, 3/2]; clamping");
            self.warned = true;
        }
        x.clamp(-0.5, 1.5)
    }

    /// Draws the next candidate; `None` is the strict-mode no-op slot.
    pub fn draw(&mut self) -> Option<usize> {
        let p = bob_probabilities(&self.weights, self.gamma);
        let mass: f64 = p.iter().sum();
        let u: f64 = self.rng.gen();
        let target = if self.params.strict { u } else { u * mass };
        let mut acc = 0.0;
        for (j, pj) in p.iter().enumerate() {
            acc += pj;
            if target < acc {
                return Some(j);
            }
        }
        if self.params.strict {
            None
        } else {
            Some(p.len() - 1)
        }
    }

    /// Meta update for candidate `j` after a block with cumulative reward `total`.
    pub fn meta_update(&mut self, j: usize, total: f64) {
        let p = bob_probabilities(&self.weights, self.gamma)[j];
        let x = self.rescale(total);
        let p1 = self.pool.len() as f64 + 1.0;
        self.weights[j] *= (self.gamma / (p1 * p) * (0.5 + x)).exp();
        let sum: f64 = self.weights.iter().sum();
        for s in &mut self.weights {
            *s /= sum;
        }
    }

    fn start_block(&mut self) -> Result<()> {
        self.in_block = 0;
        self.block_reward = 0.0;
        match self.draw() {
            Some(j) => {
                let (w, alpha) = self.pool[j];
                let p = SavePlusParams {
                    alpha,
                    window: w,
                    delta: self.params.delta,
                    theta_bound: self.params.theta_bound,
                    noise_bound: self.params.noise_bound,
                    radius: Radius::Theory,
                };
                self.base = Some(SavePlus::new(&self.arms, p)?);
                self.current = Some((j, alpha));
            }
            None => {
                self.base = None;
                self.current = None;
            }
        }
        Ok(())
    }
}

impl Policy for Bob {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        if self.in_block == 0 {
            self.start_block()?;
        }
        match self.base.as_mut() {
            Some(b) => b.select(ctx),
            None => Ok(ctx.arms[0]),
        }
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        if let Some(b) = self.base.as_mut() {
            b.update(ctx, arm, event)?;
        }
        self.k += 1;
        self.in_block += 1;
        self.block_reward += r;
        if self.in_block == self.block || self.k == self.params.horizon {
            if let Some((j, _)) = self.current {
                self.meta_update(j, self.block_reward);
            }
            self.in_block = 0;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn sigma_bar_examples() {
        assert_eq!(sigma_bar(2.0, 1.0, 1.0, 0.25), 2.0);
        assert_eq!(sigma_bar(0.0, 0.3, 1.0, 0.0), 0.3);
        assert_eq!(sigma_bar(0.2, 0.1, 0.0, 9.0), 0.2);
    }

    #[test]
    fn optimal_window_small_variance_branch() {
        let (w, alpha) = optimal_window(1, 1.0, 1.0, 10_000);
        assert_eq!(w, 22);
        assert_relative_eq!(alpha, 22.0 / 100.0, epsilon = 1e-12);
    }

    #[test]
    fn layer_count() {
        let p = SavePlusParams {
            alpha: 0.125,
            ..Default::default()
        };
        assert_eq!(p.layers(), 3);
    }

    fn unit_arms() -> Vec<Vector> {
        vec![Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![0.0, 1.0])]
    }

    #[test]
    fn first_save_update_lands_on_layer_one() {
        let mut s = SavePlus::new(&unit_arms(), SavePlusParams::default()).unwrap();
        s.begin_round().unwrap();
        let x = Vector::from_vec(vec![1.0, 0.0]);
        assert_relative_eq!(s.layer_state(1).mnorm(&x), 2.0, epsilon = 1e-12);
        let (l, w) = s.observe(&x, 0.5).unwrap().unwrap();
        assert_eq!(l, 1);
        assert_relative_eq!(w, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rw_oful_restarts_to_zero() {
        let p = RwOfulParams {
            window: 5,
            ..Default::default()
        };
        let mut pol = RwOful::new(&unit_arms(), p).unwrap();
        let x = Vector::from_vec(vec![1.0, 0.0]);
        for _ in 0..4 {
            pol.begin_round().unwrap();
            pol.observe(&x, 1.0, 0.1).unwrap();
        }
        assert!(pol.state().estimate().unwrap()[0] > 0.0);
        pol.begin_round().unwrap();
        assert_eq!(pol.round(), 5);
        assert_eq!(pol.state().estimate().unwrap(), Vector::zeros(2));
        assert_eq!(pol.restarts(), 1);
    }

    #[test]
    fn bob_probabilities_leave_residual_mass() {
        let p = bob_probabilities(&[1.0, 1.0, 1.0], 0.5);
        for pj in &p {
            assert_relative_eq!(*pj, 7.0 / 24.0, epsilon = 1e-15);
        }
        let q = bob_probabilities(&[1.0, 3.0], 0.0);
        assert_relative_eq!(q[1] / q[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn bob_pool_cardinality() {
        let pool = bob_pool(1, 1 << 15);
        assert_eq!(pool.len(), 13 * 13);
        let ws: Vec<usize> = pool.iter().step_by(13).map(|p| p.0).collect();
        assert_eq!(ws, vec![1, 2, 4, 8, 16, 32, 1, 2, 4, 8, 16, 32, 64]);
    }

    #[test]
    fn bob_weights_stay_positive() {
        let mut b = Bob::new(&unit_arms(), BobParams::new(100_000), ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let j = b.draw().unwrap();
            let r = rng.gen::<f64>() * b.block_length() as f64;
            b.meta_update(j, r);
        }
        assert!(b.weights().iter().all(|s| s.is_finite() && *s > 0.0));
    }
}
