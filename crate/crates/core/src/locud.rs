//! Clustering under corrupted users: RCLUB-WCU, the OCCUD detector and the
//! GCUD gap-ranking comparator.

use std::io::Write;
use std::path::Path;

use crate::baselines::{corruption_weight, deletion_f, linucb_select, prune_edges, reward_of};
use crate::env::FeedbackEvent;
use crate::error::{Error, Result};
use crate::graph::UserGraph;
use crate::linalg::{aggregate, min_eigenvalue, RidgeState, Vector};
use crate::policy::{ArmPool, Context, Policy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RclubWcuParams {
    pub lambda: f64,
    /// Corruption level `C` (or its estimate).
    pub corruption: f64,
    /// Weight scale; `None` uses `(sqrt(d) + sqrt(lambda)) / C`.
    pub alpha: Option<f64>,
    pub alpha1: f64,
    pub delta: f64,
    /// Exploration radius; `None` uses the theoretical value for `horizon`.
    pub beta: Option<f64>,
    pub horizon: usize,
}

impl RclubWcuParams {
    pub fn new(horizon: usize) -> Self {
        Self {
            lambda: 1.0,
            corruption: (horizon as f64).sqrt(),
            alpha: None,
            alpha1: 1.0,
            delta: 0.01,
            beta: None,
            horizon,
        }
    }

    /// Resolved weight scale (infinite when `C = 0` and unset).
    pub fn weight_scale(&self, dim: usize) -> f64 {
        match self.alpha {
            Some(a) => a,
            None if self.corruption == 0.0 => f64::INFINITY,
            None => ((dim as f64).sqrt() + self.lambda.sqrt()) / self.corruption,
        }
    }

    /// `alpha * C`, taken as 0 when `C = 0`.
    pub fn alpha_c(&self, dim: usize) -> f64 {
        if self.corruption == 0.0 {
            0.0
        } else {
            self.weight_scale(dim) * self.corruption
        }
    }

    /// `sqrt(lambda) + sqrt(2 log(1/delta) + d log(1 + T/(lambda d))) + alpha C`.
    pub fn radius(&self, dim: usize) -> f64 {
        self.beta.unwrap_or_else(|| {
            crate::baselines::theory_beta(self.lambda, self.delta, dim, self.horizon) + self.alpha_c(dim)
        })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be > 0".into()));
        }
        if !(self.corruption >= 0.0) || !(self.alpha1 >= 0.0) {
            return Err(Error::Config("corruption level and alpha1 must be >= 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        corruption_weight(self.weight_scale(dim), 1.0).map(|_| ())
    }
}

/// Per-round OCCUD output. `score = gap - threshold`; flagged iff `score > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub t: usize,
    pub scores: Vec<f64>,
    pub flagged: Vec<bool>,
    /// Ground-truth corruption labels, attached by the caller.
    pub labels: Vec<bool>,
}

impl DetectionReport {
    pub fn flagged_users(&self) -> Vec<usize> {
        (0..self.flagged.len()).filter(|&i| self.flagged[i]).collect()
    }

    pub fn with_labels(mut self, labels: &[bool]) -> Self {
        self.labels = labels.to_vec();
        self
    }
}

/// Writes reports as CSV with header `t,user,score,flagged,label`.
pub fn write_detection_csv(path: &Path, reports: &[DetectionReport]) -> Result<()> {
    let mut out = String::from("t,user,score,flagged,label\n");
    for r in reports {
        for (u, s) in r.scores.iter().enumerate() {
            let label = r.labels.get(u).map_or(String::new(), |&l| (l as u8).to_string());
            out.push_str(&format!("{},{},{},{},{}\n", r.t, u, s, r.flagged[u] as u8, label));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// RCLUB-WCU state with the non-robust statistics OCCUD needs.
#[derive(Clone, Debug)]
pub struct RclubWcu {
    params: RclubWcuParams,
    alpha: f64,
    alpha_c: f64,
    beta: f64,
    robust: Vec<RidgeState>,
    plain: Vec<RidgeState>,
    next_weight: Vec<f64>,
    theta: Vec<Vector>,
    graph: UserGraph,
    pool: ArmPool,
    last_weight: f64,
}

impl RclubWcu {
    pub fn new(pool: &[Vector], users: usize, params: RclubWcuParams) -> Result<Self> {
        let dim = pool.first().map_or(0, |a| a.len());
        params.validate(dim)?;
        let mk = || (0..users).map(|_| RidgeState::new(dim, params.lambda)).collect::<Result<Vec<_>>>();
        Ok(Self {
            alpha: params.weight_scale(dim),
            alpha_c: params.alpha_c(dim),
            beta: params.radius(dim),
            params,
            robust: mk()?,
            plain: mk()?,
            next_weight: vec![1.0; users],
            theta: vec![Vector::zeros(dim); users],
            graph: UserGraph::complete(users),
            pool: ArmPool::new(pool),
            last_weight: 1.0,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn graph(&self) -> &UserGraph {
        &self.graph
    }

    pub fn robust_state(&self, user: usize) -> &RidgeState {
        &self.robust[user]
    }

    pub fn plain_state(&self, user: usize) -> &RidgeState {
        &self.plain[user]
    }

    /// Weight that will be applied to the user's next sample.
    pub fn pending_weight(&self, user: usize) -> f64 {
        self.next_weight[user]
    }

    /// Weight applied by the most recent update.
    pub fn last_weight(&self) -> f64 {
        self.last_weight
    }

    fn component_state(&self, members: &[usize]) -> Result<RidgeState> {
        aggregate(self.pool.dim(), self.params.lambda, members.iter().map(|&i| &self.robust[i]))
    }

    /// OCCUD over the current connected components.
    pub fn occud_detect(&self, t: usize) -> Result<DetectionReport> {
        let n = self.robust.len();
        let d = self.pool.dim() as f64;
        let lam = self.params.lambda;
        let log_term = 2.0 * (1.0 / self.params.delta).ln();
        let mut scores = vec![0.0; n];
        for members in self.graph.components() {
            let agg = self.component_state(&members)?;
            let theta_v = agg.estimate()?;
            let lmin_v = min_eigenvalue(&agg.matrix())?;
            let t_v = agg.count() as f64;
            let second = if lmin_v <= 0.0 {
                f64::INFINITY
            } else {
                ((d * (1.0 + t_v / (lam * d)).ln() + log_term).sqrt() + lam.sqrt() + self.alpha_c) / lmin_v.sqrt()
            };
            for &i in &members {
                let plain = &self.plain[i];
                let theta_tilde = plain.estimate()?;
                let t_i = plain.count() as f64;
                let lmin_i = min_eigenvalue(plain.gram())?.max(0.0);
                let first = (d * (1.0 + t_i / (lam * d)).ln() + log_term).sqrt() * lam.sqrt() / (lmin_i + lam).sqrt();
                let gap = (theta_tilde - &theta_v).norm();
                scores[i] = gap - (first + second);
            }
        }
        let flagged = scores.iter().map(|&s| s > 0.0).collect();
        Ok(DetectionReport {
            t,
            scores,
            flagged,
            labels: Vec::new(),
        })
    }

    /// GCUD scores `||theta_i - theta_V||` on robust estimates.
    pub fn gcud_scores(&self) -> Result<Vec<f64>> {
        let mut scores = vec![0.0; self.robust.len()];
        for members in self.graph.components() {
            let theta_v = self.component_state(&members)?.estimate()?;
            for &i in &members {
                scores[i] = (&self.theta[i] - &theta_v).norm();
            }
        }
        Ok(scores)
    }

    /// GCUD flags: the top `fraction` of each cluster by gap.
    pub fn gcud_flags(&self, fraction: f64) -> Result<Vec<bool>> {
        let scores = self.gcud_scores()?;
        let mut flags = vec![false; scores.len()];
        for members in self.graph.components() {
            let k = (fraction * members.len() as f64).round() as usize;
            let mut ranked = members.clone();
            ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for &i in ranked.iter().take(k) {
                flags[i] = true;
            }
        }
        Ok(flags)
    }
}

impl Policy for RclubWcu {
    fn select(&mut self, ctx: &Context) -> Result<usize> {
        let members = self.graph.component_of(ctx.user);
        let agg = self.component_state(&members)?;
        linucb_select(&agg, ctx.arms, &self.pool, self.beta)
    }

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()> {
        let r = reward_of(event)?;
        let i = ctx.user;
        let x = self.pool.get(arm);
        let w = self.next_weight[i];
        self.robust[i].update(x, r, w)?;
        self.plain[i].update(x, r, 1.0)?;
        self.last_weight = w;
        self.next_weight[i] = corruption_weight(self.alpha, self.robust[i].mnorm(x))?;
        self.theta[i] = self.robust[i].estimate()?;
        let counts: Vec<u64> = self.robust.iter().map(|s| s.count()).collect();
        let (a1, ac) = (self.params.alpha1, self.alpha_c);
        prune_edges(&mut self.graph, &self.theta, &counts, i, |ti, tl| {
            a1 * (deletion_f(ti) + deletion_f(tl) + ac)
        });
        Ok(())
    }

    fn partition(&self) -> Option<Vec<usize>> {
        Some(self.graph.component_labels())
    }

    fn detect(&self, t: usize) -> Option<Result<DetectionReport>> {
        Some(self.occud_detect(t))
    }

    fn gap_scores(&self) -> Option<Vec<f64>> {
        self.gcud_scores().ok()
    }
}
