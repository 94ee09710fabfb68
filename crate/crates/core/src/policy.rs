//! Policy interfaces driven by the harness.

use crate::env::{Environment, FeedbackEvent};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::locud::DetectionReport;

/// What a policy sees before choosing.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub t: usize,
    pub user: usize,
    /// Presented arm ids, ascending.
    pub arms: &'a [usize],
}

/// Policies receiving a scalar reward per round.
pub trait Policy: Send {
    /// Runs any conversational queries for this round; returns how many were made.
    fn converse(&mut self, _ctx: &Context, _env: &mut Environment) -> Result<usize> {
        Ok(0)
    }

    fn select(&mut self, ctx: &Context) -> Result<usize>;

    fn update(&mut self, ctx: &Context, arm: usize, event: &FeedbackEvent) -> Result<()>;

    /// Current learned partition as one label per user, if the policy clusters.
    fn partition(&self) -> Option<Vec<usize>> {
        None
    }

    /// OCCUD detection report, for policies that support it.
    fn detect(&self, _t: usize) -> Option<Result<DetectionReport>> {
        None
    }

    /// GCUD ranking scores, for policies that support it.
    fn gap_scores(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Policies receiving a preference bit over a pair of arms.
pub trait DuelingPolicy: Send {
    fn select_pair(&mut self, ctx: &Context) -> Result<(usize, usize)>;

    fn update(&mut self, ctx: &Context, pair: (usize, usize), bit: bool) -> Result<()>;

    fn partition(&self) -> Option<Vec<usize>> {
        None
    }
}

/// Arm pool stored as rows, for batched products.
#[derive(Clone, Debug)]
pub struct ArmPool {
    arms: Vec<Vector>,
    rows: Matrix,
}

impl ArmPool {
    pub fn new(arms: &[Vector]) -> Self {
        let d = arms.first().map_or(0, |a| a.len());
        let rows = Matrix::from_fn(arms.len(), d, |i, j| arms[i][j]);
        Self {
            arms: arms.to_vec(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn get(&self, id: usize) -> &Vector {
        &self.arms[id]
    }

    /// Presented arms as columns of a `d x K` matrix.
    pub fn columns(&self, ids: &[usize]) -> Matrix {
        Matrix::from_fn(self.dim(), ids.len(), |i, j| self.arms[ids[j]][i])
    }

    /// `sum_a n_a |x_a^T inv x_k|` for every presented arm `k`.
    pub fn misspec_bonus(&self, inv: &Matrix, counts: &[f64], ids: &[usize]) -> Vec<f64> {
        let y = inv * self.columns(ids);
        let s = &self.rows * y;
        (0..ids.len())
            .map(|k| {
                let col = s.column(k);
                counts
                    .iter()
                    .zip(col.iter())
                    .filter(|(n, _)| **n > 0.0)
                    .map(|(n, v)| n * v.abs())
                    .sum()
            })
            .collect()
    }
}

/// First id in `ids` maximising `score` (ties keep the lowest position).
pub fn argmax_ids(ids: &[usize], scores: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    ids[best]
}
