//! Clustering of linear dueling bandits (COLDB) and its per-user baseline, built on a
//! regularised logistic MLE.

use std::collections::HashMap;

use crate::env::logistic;
use crate::error::{Error, Result};
use crate::graph::UserGraph;
use crate::linalg::{aggregate, ensure_finite_slice, Matrix, RidgeState, Vector};
use crate::policy::{argmax_ids, ArmPool, Context, DuelingPolicy};

pub const MLE_TOLERANCE: f64 = 1e-8;
pub const MLE_MAX_ITERS: usize = 500;

/// Lipschitz constant of the logistic link.
pub const LOGISTIC_LIPSCHITZ: f64 = 0.25;

/// `mu'(x) = mu(x) (1 - mu(x))`.
pub fn logistic_slope(x: f64) -> f64 {
    let m = logistic(x);
    m * (1.0 - m)
}

/// Curvature floor over scores bounded by `score_bound` in absolute value.
pub fn kappa_mu(score_bound: f64) -> f64 {
    logistic_slope(2.0 * score_bound)
}

/// `-ln mu(s)`, computed without overflow.
fn neg_log_mu(s: f64) -> f64 {
    if s > 0.0 {
        (-s).exp().ln_1p()
    } else {
        -s + s.exp().ln_1p()
    }
}

/// Preference data for one logistic regression: difference vectors and outcome bits.
#[derive(Clone, Debug, Default)]
pub struct LogisticProblem {
    pub diffs: Vec<Vector>,
    pub bits: Vec<bool>,
}

impl LogisticProblem {
    pub fn push(&mut self, z: Vector, y: bool) {
        self.diffs.push(z);
        self.bits.push(y);
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }
}

fn samples<'a>(parts: &'a [&'a LogisticProblem]) -> impl Iterator<Item = (&'a Vector, bool)> + 'a {
    parts
        .iter()
        .flat_map(|p| p.diffs.iter().zip(p.bits.iter().copied()))
}

/// `-sum [y ln mu(theta^T z) + (1 - y) ln mu(-theta^T z)] + (lambda / 2) ||theta||^2`.
pub fn logistic_objective(parts: &[&LogisticProblem], lambda: f64, theta: &Vector) -> f64 {
    let data: f64 = samples(parts)
        .map(|(z, y)| {
            let s = theta.dot(z);
            if y {
                neg_log_mu(s)
            } else {
                neg_log_mu(-s)
            }
        })
        .sum();
    data + 0.5 * lambda * theta.norm_squared()
}

/// Gradient `sum (mu(theta^T z) - y) z + lambda theta`.
pub fn logistic_gradient(parts: &[&LogisticProblem], lambda: f64, theta: &Vector) -> Vector {
    let mut g = theta * lambda;
    for (z, y) in samples(parts) {
        let c = logistic(theta.dot(z)) - if y { 1.0 } else { 0.0 };
        g.axpy(c, z, 1.0);
    }
    g
}

fn gradient_and_hessian(parts: &[&LogisticProblem], lambda: f64, theta: &Vector) -> (Vector, Matrix) {
    let d = theta.len();
    let mut g = theta * lambda;
    let mut h = Matrix::identity(d, d) * lambda;
    for (z, y) in samples(parts) {
        let s = theta.dot(z);
        let m = logistic(s);
        g.axpy(m - if y { 1.0 } else { 0.0 }, z, 1.0);
        h.ger(m * (1.0 - m), z, z, 1.0);
    }
    (g, h)
}

/// Regularised logistic MLE over the union of `parts`, by damped Newton from `start`.
pub fn logistic_mle(parts: &[&LogisticProblem], lambda: f64, dim: usize, start: Option<&Vector>) -> Result<Vector> {
    if !(lambda > 0.0) {
        return Err(Error::Config("logistic MLE needs lambda > 0".into()));
    }
    let mut theta = match start {
        Some(s) if s.len() == dim => s.clone(),
        Some(s) => {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            })
        }
        None => Vector::zeros(dim),
    };
    if parts.iter().all(|p| p.is_empty()) {
        return Ok(Vector::zeros(dim));
    }
    let mut obj = logistic_objective(parts, lambda, &theta);
    let mut gnorm = f64::INFINITY;
    for _ in 0..MLE_MAX_ITERS {
        let (g, h) = gradient_and_hessian(parts, lambda, &theta);
        gnorm = g.norm();
        if gnorm <= MLE_TOLERANCE {
            return Ok(theta);
        }
        let dir = match h.cholesky() {
            Some(c) => -c.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta + &dir * step;
            let cand_obj = logistic_objective(parts, lambda, &cand);
            let sufficient = cand_obj <= obj + 1e-4 * step * slope;
            if sufficient || logistic_gradient(parts, lambda, &cand).norm() < gnorm {
                theta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let gnorm_final = logistic_gradient(parts, lambda, &theta).norm();
    if gnorm_final <= MLE_TOLERANCE {
        return Ok(theta);
    }
    Err(Error::NonConvergence {
        iterations: MLE_MAX_ITERS,
        grad_norm: gnorm_final.min(gnorm),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColdbParams {
    pub lambda: f64,
    pub delta: f64,
    /// Bound on `|theta^T x|`; sets `kappa_mu = mu'(2 * bound)`.
    pub score_bound: f64,
    /// Arm-distribution eigenvalue floor used by the deletion threshold. Required.
    pub lambda_x: f64,
    /// Overrides the confidence radius `beta_t`.
    pub beta: Option<f64>,
    /// Cluster estimates are refit when the cluster's sample count has grown by this fraction
    /// since the last fit, or the membership changed. 0 refits every round.
    pub refit_ratio: f64,
    /// Start with an empty graph (per-user baseline).
    pub independent: bool,
}

impl ColdbParams {
    pub fn new(lambda_x: f64) -> Self {
        Self {
            lambda: 1.0,
            delta: 0.01,
            score_bound: 1.0,
            lambda_x,
            beta: None,
            refit_ratio: 0.0,
            independent: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("COLDB needs lambda > 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        if !(self.score_bound > 0.0 && self.score_bound.is_finite()) {
            return Err(Error::Config("score_bound must be positive".into()));
        }
        if !(self.lambda_x > 0.0) {
            return Err(Error::Config("lambda_x must be > 0".into()));
        }
        if !(self.refit_ratio >= 0.0) {
            return Err(Error::Config("refit_ratio must be >= 0".into()));
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) {
                return Err(Error::Config("beta must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Deletion threshold `f(T)`; infinite at `T = 0`.
pub fn coldb_threshold(params: &ColdbParams, users: usize, dim: usize, t: u64) -> f64 {
    if t == 0 {
        return f64::INFINITY;
    }
    let kappa = kappa_mu(params.score_bound);
    let (d, t, lam) = (dim as f64, t as f64, params.lambda);
    let num = (lam / kappa).sqrt()
        + (2.0 * (users as f64 / params.delta).ln() + d * (1.0 + 4.0 * t * kappa / (d * lam)).ln()).sqrt();
    num / (kappa * (2.0 * params.lambda_x * t).sqrt())
}

/// `beta_t = sqrt(2 ln(1/delta) + d ln(1 + t L^2 kappa / (d lambda)))`.
pub fn coldb_beta(params: &ColdbParams, dim: usize, t: usize) -> f64 {
    if let Some(b) = params.beta {
        return b;
    }
    let kappa = kappa_mu(params.score_bound);
    let d = dim as f64;
    let l2 = LOGISTIC_LIPSCHITZ * LOGISTIC_LIPSCHITZ;
    (2.0 * (1.0 / params.delta).ln() + d * (1.0 + t as f64 * l2 * kappa / (d * params.lambda)).ln()).sqrt()
}

#[derive(Clone, Debug)]
struct ClusterFit {
    samples: usize,
    theta: Vector,
}

/// COLDB. With `independent` set it is the per-user baseline.
#[derive(Clone, Debug)]
pub struct Coldb {
    params: ColdbParams,
    kappa: f64,
    pool: ArmPool,
    data: Vec<LogisticProblem>,
    info: Vec<RidgeState>,
    theta: Vec<Vector>,
    graph: UserGraph,
    cache: HashMap<Vec<usize>, ClusterFit>,
}

impl Coldb {
    pub fn new(pool: &[Vector], users: usize, params: ColdbParams) -> Result<Self> {
        params.validate()?;
        let dim = pool.first().map_or(0, |a| a.len());
        let kappa = kappa_mu(params.score_bound);
        let info = (0..users)
            .map(|_| RidgeState::new(dim, params.lambda / kappa))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kappa,
            pool: ArmPool::new(pool),
            data: (0..users).map(|_| LogisticProblem::default()).collect(),
            info,
            theta: vec![Vector::zeros(dim); users],
            graph: if params.independent {
                UserGraph::empty(users)
            } else {
                UserGraph::complete(users)
            },
            cache: HashMap::new(),
            params,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn graph(&self) -> &UserGraph {
        &self.graph
    }

    pub fn user_estimate(&self, user: usize) -> &Vector {
        &self.theta[user]
    }

    pub fn user_info(&self, user: usize) -> &RidgeState {
        &self.info[user]
    }

    pub fn user_data(&self, user: usize) -> &LogisticProblem {
        &self.data[user]
    }

    /// Cluster estimate and aggregated information matrix for `user`'s component.
    pub fn cluster_statistics(&mut self, user: usize) -> Result<(Vector, RidgeState)> {
        let dim = self.pool.dim();
        let members = self.graph.component_of(user);
        if members.len() == 1 {
            return Ok((self.theta[user].clone(), self.info[user].clone()));
        }
        let info = aggregate(dim, self.params.lambda / self.kappa, members.iter().map(|&i| &self.info[i]))?;
        let n: usize = members.iter().map(|&i| self.data[i].len()).sum();
        let ratio = self.params.refit_ratio;
        if let Some(fit) = self.cache.get(&members) {
            if ratio > 0.0 && (n as f64) < (1.0 + ratio) * fit.samples as f64 {
                return Ok((fit.theta.clone(), info));
            }
        }
        let parts: Vec<&LogisticProblem> = members.iter().map(|&i| &self.data[i]).collect();
        let start = match self.cache.get(&members) {
            Some(fit) => fit.theta.clone(),
            None => {
                let mut avg = Vector::zeros(dim);
                for &i in &members {
                    avg += &self.theta[i];
                }
                avg / members.len() as f64
            }
        };
        let theta = logistic_mle(&parts, self.params.lambda, dim, Some(&start))?;
        self.cache.insert(members, ClusterFit { samples: n, theta: theta.clone() });
        Ok((theta, info))
    }

    fn drop_cached(&mut self, a: usize, b: usize) {
        self.cache.retain(|m, _| !m.contains(&a) && !m.contains(&b));
    }
}

/// `(x1, x2)` with `x1 = argmax theta^T x` and `x2 = argmax theta^T x + scale ||x - x1||_{V^-1}`.
pub fn coldb_pair(theta: &Vector, info: &RidgeState, arms: &[usize], pool: &ArmPool, scale: f64) -> Result<(usize, usize)> {
    if arms.is_empty() {
        return Err(Error::EmptyArmSet);
    }
    let base: Vec<f64> = arms.iter().map(|&a| pool.get(a).dot(theta)).collect();
    let x1 = argmax_ids(arms, &base);
    let v1 = pool.get(x1);
    let scores: Vec<f64> = arms
        .iter()
        .zip(base.iter())
        .map(|(&a, b)| {
            let diff = pool.get(a) - v1;
            b + scale * info.mnorm(&diff)
        })
        .collect();
    Ok((x1, argmax_ids(arms, &scores)))
}

impl DuelingPolicy for Coldb {
    fn select_pair(&mut self, ctx: &Context) -> Result<(usize, usize)> {
        let (theta, info) = self.cluster_statistics(ctx.user)?;
        let scale = coldb_beta(&self.params, self.pool.dim(), ctx.t) / self.kappa;
        coldb_pair(&theta, &info, ctx.arms, &self.pool, scale)
    }

    fn update(&mut self, ctx: &Context, pair: (usize, usize), bit: bool) -> Result<()> {
        let i = ctx.user;
        let z = self.pool.get(pair.0) - self.pool.get(pair.1);
        ensure_finite_slice(z.as_slice(), "difference vector")?;
        self.info[i].update(&z, 0.0, 1.0)?;
        self.data[i].push(z, bit);
        let dim = self.pool.dim();
        self.theta[i] = logistic_mle(&[&self.data[i]], self.params.lambda, dim, Some(&self.theta[i]))?;
        let users = self.theta.len();
        let ti = self.data[i].len() as u64;
        let fi = coldb_threshold(&self.params, users, dim, ti);
        let nbrs: Vec<usize> = self.graph.neighbors(i).collect();
        for l in nbrs {
            let fl = coldb_threshold(&self.params, users, dim, self.data[l].len() as u64);
            if (&self.theta[i] - &self.theta[l]).norm() > fi + fl {
                self.graph.remove_edge(i, l);
                self.drop_cached(i, l);
            }
        }
        Ok(())
    }

    fn partition(&self) -> Option<Vec<usize>> {
        Some(self.graph.component_labels())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_data_gives_zero() {
        let p = LogisticProblem::default();
        let th = logistic_mle(&[&p], 1.0, 3, None).unwrap();
        assert_eq!(th, Vector::zeros(3));
    }

    #[test]
    fn balanced_pair_gives_zero() {
        let mut p = LogisticProblem::default();
        let z = Vector::from_vec(vec![0.3, -0.7]);
        p.push(z.clone(), true);
        p.push(z, false);
        let th = logistic_mle(&[&p], 1.0, 2, None).unwrap();
        assert!(th.norm() < 1e-9);
    }

    #[test]
    fn kappa_from_bound() {
        assert_relative_eq!(kappa_mu(1.0), 0.104_993_585_403_506_6, epsilon = 1e-12);
    }

    #[test]
    fn threshold_scales_with_lambda_x() {
        let a = ColdbParams::new(0.1);
        let b = ColdbParams::new(0.2);
        for t in [1, 10, 1000] {
            let r = coldb_threshold(&a, 50, 5, t) / coldb_threshold(&b, 50, 5, t);
            assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-12);
        }
        assert!(coldb_threshold(&a, 50, 5, 0).is_infinite());
    }

    #[test]
    fn greedy_pair_without_bonus() {
        let pool = ArmPool::new(&[Vector::from_vec(vec![1.0]), Vector::from_vec(vec![0.5])]);
        let info = RidgeState::new(1, 1.0).unwrap();
        let theta = Vector::from_vec(vec![0.4263]);
        assert_eq!(coldb_pair(&theta, &info, &[0, 1], &pool, 0.0).unwrap(), (0, 0));
    }

    #[test]
    fn cold_start_pair() {
        let arms: Vec<Vector> = vec![
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::from_vec(vec![0.0, -2.0]),
        ];
        let mut c = Coldb::new(&arms, 3, ColdbParams::new(0.1)).unwrap();
        let ctx = Context { t: 1, user: 0, arms: &[0, 1, 2] };
        let (x1, x2) = c.select_pair(&ctx).unwrap();
        assert_eq!(x1, 0);
        assert_eq!(x2, 2);
    }
}
