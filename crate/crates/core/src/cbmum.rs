//! Clustering of bandits with misspecified user models: RCLUMB (graph based,
//! 1-hop clusters) and RSCLUMB (set based, phased split and merge).

use crate::baselines::{deletion_f, prune_edges, reward_of, theory_beta};
use crate::env::FeedbackEvent;
use crate::error::{Error, Result};
use crate::graph::UserGraph;
use crate::linalg::{aggregate, RidgeState, Vector};
use crate::policy::{argmax_ids, ArmPool, Context, Policy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RclumbParams {
    pub lambda: f64,
    pub beta: f64,
    pub eps_star: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Clip the index at 1.
    pub clip: bool,
}

impl RclumbParams {
    /// Defaults with the theoretical `beta` for horizon `T`.
    pub fn with_theory_beta(dim: usize, horizon: usize, lambda: f64, delta: f64, eps_star: f64) -> Self {
        Self {
            lambda,
            beta: theory_beta(lambda, delta, dim, horizon),
            eps_star,
            alpha1: 1.0,
            alpha2: 1.0,
            clip: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be > 0".into()));
        }
        if !(self.eps_star >= 0.0) || !(self.alpha1 >= 0.0) || !(self.alpha2 >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config("beta, eps_star, alpha1 and alpha2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Minimum distinguishable gap `2 eps_* sqrt(2 / lambda_x)`.
pub fn zeta(eps_star: f64, lambda_x: f64) -> f64 {
    2.0 * eps_star * (2.0 / lambda_x).sqrt()
}

/// Index `min{1, x^T theta_V + beta ||x|| + eps_* sum_s |x^T M^-1 x_s|}` for every presented arm.
///
/// `counts[a]` is how often pool arm `a` appears in the cluster history.
pub fn rclumb_index(
    agg: &RidgeState,
    counts: &[f64],
    arms: &[usize],
    pool: &ArmPool,
    params: &RclumbParams,
) -> Result<Vec<f64>> {
    let theta = agg.estimate()?;
    let inv = agg.inverse().ok_or(Error::Singular("cluster matrix"))?;
    let bonus = if params.eps_star > 0.0 {
        pool.misspec_bonus(inv, counts, arms)
    } else {
        vec![0.0; arms.len()]
    };
    Ok(arms
        .iter()
        .zip(bonus)
        .map(|(&a, b)| {
            let x = pool.get(a);
            let v = x.dot(&theta) + params.beta * agg.mnorm(x) + params.eps_star * b;
            if params.clip {
                v.min(1.0)
            } else {
                v
            }
        })
        .collect())
}

fn add_counts(into: &mut [f64], from: &[f64], sign: f64) {
    for (a, b) in into.iter_mut().zip(from) {
        *a += sign * b;
    }
}

/// RCLUMB state.
#[derive(Clone, Debug)]
pub struct Rclumb {
    params: RclumbParams,
    users: Vec<RidgeState>,
    theta: Vec<Vector>,
    counts: Vec<Vec<f64>>,
    graph: UserGraph,
    pool: ArmPool,
}

impl Rclumb {
    pub fn new(pool: &[Vector], users: usize, params: RclumbParams) -> Result<Self> {
        params.validate()?;
        let dim = pool.first().map_or(0, |a| a.len());
        Ok(Self {
            params,
            users: (0..users).map(|_| RidgeState::new(dim, params.lambda)).collect::<Result<_>>()?,
            theta: vec![Vector::zeros(dim); users],
            counts: vec![vec![0.0; pool.len()]; users],
            graph: UserGraph::complete(users),
            pool: ArmPool::new(pool),
        })
    }

    pub fn graph(&self) -> &UserGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut UserGraph {
        &mut self.graph
    }

    pub fn user_state(&self, user: usize) -> &RidgeState {
        &self.users[user]
    }

    /// The user together with its 1-hop neighbours.
    pub fn rclumb_cluster(&self, user: usize) -> Result<Vec<usize>> {
        if user >= self.users.len() {
            return Err(Error::UnknownUser(user));
        }
        Ok(self.graph.closed_neighborhood(user))
    }

    fn cluster_stats(&self, members: &[usize]) -> Result<(RidgeState, Vec<f64>)> {
        let agg = aggregate(self.pool.dim(), self.params.lambda, members.iter().map(|&i| &self.users[i]))?;
        let mut counts = vec![0.0; self.pool.len()];
        if self.params.eps_star > 0.0 {
            for &i in members {
                add_counts(&mut counts, &self.counts[i], 1.0);
            }
        }
        Ok((agg, counts))
    }
}

impl Policy for Rclumb {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        let members = self.rclumb_cluster(ctx.user)?;
        let (agg, counts) = self.cluster_stats(&members)?;
        let scores = rclumb_index(&agg, &counts, ctx.arms, &self.pool, &self.params)?;
        Ok(argmax_ids(ctx.arms, &scores))
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let i = ctx.user;
        self.users[i].update(self.pool.get(arm), r, 1.0)?;
        self.counts[i][arm] += 1.0;
        self.theta[i] = self.users[i].estimate()?;
        let counts: Vec<u64> = self.users.iter().map(|s| s.count()).collect();
        let p = self.params;
        prune_edges(&mut self.graph, &self.theta, &counts, i, |ti, tl| {
            p.alpha1 * (deletion_f(ti) + deletion_f(tl)) + p.alpha2 * p.eps_star
        });
        Ok(())
    }

    fn partition(&self) -> Option<Vec<usize>> {
        Some(self.graph.component_labels())
    }
}

#[derive(Clone, Debug)]
struct Cluster {
    members: Vec<usize>,
    agg: RidgeState,
    counts: Vec<f64>,
}

/// RSCLUMB state (SCLUB when `eps_star = 0`).
#[derive(Clone, Debug)]
pub struct Rsclumb {
    params: RclumbParams,
    users: Vec<RidgeState>,
    theta: Vec<Vector>,
    counts: Vec<Vec<f64>>,
    clusters: Vec<Cluster>,
    assign: Vec<usize>,
    checked: Vec<bool>,
    phase: u32,
    phase_end: u64,
    round: u64,
    pool: ArmPool,
}

impl Rsclumb {
    pub fn new(pool: &[Vector], users: usize, params: RclumbParams) -> Result<Self> {
        params.validate()?;
        let dim = pool.first().map_or(0, |a| a.len());
        Ok(Self {
            params,
            users: (0..users).map(|_| RidgeState::new(dim, params.lambda)).collect::<Result<_>>()?,
            theta: vec![Vector::zeros(dim); users],
            counts: vec![vec![0.0; pool.len()]; users],
            clusters: vec![Cluster {
                members: (0..users).collect(),
                agg: RidgeState::new(dim, params.lambda)?,
                counts: vec![0.0; pool.len()],
            }],
            assign: vec![0; users],
            checked: vec![false; users],
            phase: 0,
            phase_end: 0,
            round: 0,
            pool: ArmPool::new(pool),
        })
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn is_checked(&self, user: usize) -> bool {
        self.checked[user]
    }

    /// Members of each cluster, each ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        self.clusters.iter().map(|c| c.members.clone()).collect()
    }

    /// Aggregated statistics of cluster `j`.
    pub fn cluster_state(&self, j: usize) -> &RidgeState {
        &self.clusters[j].agg
    }

    pub fn user_state(&self, user: usize) -> &RidgeState {
        &self.users[user]
    }

    /// Average of member estimates.
    pub fn averaged_estimate(&self, j: usize) -> Vector {
        let members = &self.clusters[j].members;
        let mut s = Vector::zeros(self.pool.dim());
        for &i in members {
            s += &self.theta[i];
        }
        s / members.len() as f64
    }

    fn cluster_checked(&self, j: usize) -> bool {
        self.clusters[j].members.iter().all(|&i| self.checked[i])
    }

    fn advance_round(&mut self) {
        self.round += 1;
        while self.round > self.phase_end {
            self.phase += 1;
            self.phase_end += 1u64 << self.phase.min(62);
            self.checked.iter_mut().for_each(|c| *c = false);
        }
    }

    /// Splits `user` into a singleton cluster if its estimate is far from the cluster average.
    pub fn split(&mut self, user: usize) -> Result<bool> {
        let j = self.assign[user];
        if self.clusters[j].members.len() <= 1 {
            return Ok(false);
        }
        let avg = self.averaged_estimate(j);
        let gap = (&self.theta[user] - avg).norm();
        let p = self.params;
        let thr = p.alpha1 * (deletion_f(self.users[user].count()) + deletion_f(self.clusters[j].agg.count()))
            + p.alpha2 * p.eps_star;
        if gap <= thr {
            return Ok(false);
        }
        let c = &mut self.clusters[j];
        c.members.retain(|&m| m != user);
        c.agg.subtract(&self.users[user])?;
        add_counts(&mut c.counts, &self.counts[user], -1.0);
        let mut agg = RidgeState::new(self.pool.dim(), p.lambda)?;
        agg.absorb(&self.users[user])?;
        self.clusters.push(Cluster {
            members: vec![user],
            agg,
            counts: self.counts[user].clone(),
        });
        self.assign[user] = self.clusters.len() - 1;
        Ok(true)
    }

    /// Merges checked cluster pairs with close averaged estimates until none remain.
    pub fn merge(&mut self) -> Result<usize> {
        let p = self.params;
        let mut merged = 0;
        loop {
            let avgs: Vec<Vector> = (0..self.clusters.len()).map(|j| self.averaged_estimate(j)).collect();
            let checked: Vec<bool> = (0..self.clusters.len()).map(|j| self.cluster_checked(j)).collect();
            let mut pair = None;
            'scan: for j1 in 0..self.clusters.len() {
                if !checked[j1] {
                    continue;
                }
                for j2 in (j1 + 1)..self.clusters.len() {
                    if !checked[j2] {
                        continue;
                    }
                    let gap = (&avgs[j1] - &avgs[j2]).norm();
                    let thr = 0.5
                        * p.alpha1
                        * (deletion_f(self.clusters[j1].agg.count()) + deletion_f(self.clusters[j2].agg.count()))
                        + 0.5 * p.alpha2 * p.eps_star;
                    if gap < thr {
                        pair = Some((j1, j2));
                        break 'scan;
                    }
                }
            }
            let Some((j1, j2)) = pair else {
                return Ok(merged);
            };
            let gone = self.clusters.remove(j2);
            let keep = &mut self.clusters[j1];
            keep.agg.absorb(&gone.agg)?;
            add_counts(&mut keep.counts, &gone.counts, 1.0);
            keep.members.extend(gone.members);
            keep.members.sort_unstable();
            for (j, c) in self.clusters.iter().enumerate() {
                for &m in &c.members {
                    self.assign[m] = j;
                }
            }
            merged += 1;
        }
    }
}

impl Policy for Rsclumb {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        if ctx.arms.is_empty() {
            return Err(Error::EmptyArmSet);
        }
        if ctx.user >= self.users.len() {
            return Err(Error::UnknownUser(ctx.user));
        }
        self.advance_round();
        let c = &self.clusters[self.assign[ctx.user]];
        let scores = rclumb_index(&c.agg, &c.counts, ctx.arms, &self.pool, &self.params)?;
        Ok(argmax_ids(ctx.arms, &scores))
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let i = ctx.user;
        let x = self.pool.get(arm).clone();
        self.users[i].update(&x, r, 1.0)?;
        self.counts[i][arm] += 1.0;
        self.theta[i] = self.users[i].estimate()?;
        let j = self.assign[i];
        self.clusters[j].agg.update(&x, r, 1.0)?;
        self.clusters[j].counts[arm] += 1.0;
        if !self.checked[i] {
            self.split(i)?;
            self.checked[i] = true;
            self.merge()?;
        }
        Ok(())
    }

    fn partition(&self) -> Option<Vec<usize>> {
        Some(self.assign.clone())
    }
}
