//! Weighted ridge regression with a rank-one maintained inverse.
//!
//! `RidgeState` keeps the unregularised Gram matrix `M = sum w x x^T`, the
//! response vector `b = sum w r x`, and `(lambda I + M)^-1` updated by
//! Sherman-Morrison. The inverse is recomputed from scratch every
//! [`REFRESH_EVERY`] updates to bound drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Number of rank-one updates between full re-inversions.
pub const REFRESH_EVERY: usize = 512;

const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn ensure_finite_slice(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite(x: f64, what: &'static str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Scales `v` to unit Euclidean norm. Zero vectors are returned unchanged.
pub fn normalize(mut v: Vector) -> Vector {
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    match m.clone().cholesky() {
        Some(c) => Ok(c.inverse()),
        None => m
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("matrix is not invertible")),
    }
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Rejects inputs whose entries differ from their transpose by more than
/// `1e-10` (scaled by the largest magnitude when that exceeds one).
pub fn min_eigenvalue(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    ensure_finite_slice(m.as_slice(), "matrix")?;
    if m.nrows() == 0 {
        return Err(Error::param("empty matrix"));
    }
    let scale = m.amax().max(1.0);
    let mut asym = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric(asym));
    }
    let eig = m.clone().symmetric_eigen();
    Ok(eig.eigenvalues.min())
}

/// Online weighted ridge regression state.
#[derive(Clone, Debug)]
pub struct RidgeState {
    dim: usize,
    reg: f64,
    gram: Matrix,
    inv: Option<Matrix>,
    resp: Vector,
    count: u64,
    weight_sum: f64,
    since_refresh: usize,
}

impl RidgeState {
    pub fn new(dim: usize, reg: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        if !(reg >= 0.0) || !reg.is_finite() {
            return Err(Error::param(format!("regulariser must be finite and >= 0, got {reg}")));
        }
        let inv = if reg > 0.0 {
            Some(Matrix::identity(dim, dim) / reg)
        } else {
            None
        };
        Ok(Self {
            dim,
            reg,
            gram: Matrix::zeros(dim, dim),
            inv,
            resp: Vector::zeros(dim),
            count: 0,
            weight_sum: 0.0,
            since_refresh: 0,
        })
    }

    /// Builds a state from accumulated sufficient statistics.
    pub fn from_parts(reg: f64, gram: Matrix, resp: Vector, count: u64, weight_sum: f64) -> Result<Self> {
        let dim = resp.len();
        if gram.nrows() != dim || gram.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: gram.nrows(),
            });
        }
        let mut s = Self::new(dim, reg)?;
        s.gram = gram;
        s.resp = resp;
        s.count = count;
        s.weight_sum = weight_sum;
        s.refresh();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// Number of updates applied, including zero-weight ones.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    /// Unregularised Gram matrix `sum w x x^T`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn resp(&self) -> &Vector {
        &self.resp
    }

    /// `lambda I + M`.
    pub fn matrix(&self) -> Matrix {
        let mut m = self.gram.clone();
        for i in 0..self.dim {
            m[(i, i)] += self.reg;
        }
        m
    }

    /// `(lambda I + M)^-1`, if the regularised matrix is invertible.
    pub fn inverse(&self) -> Option<&Matrix> {
        self.inv.as_ref()
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Adds the observation `(x, r)` with weight `w`.
    pub fn update(&mut self, x: &Vector, r: f64, w: f64) -> Result<()> {
        self.check_dim(x)?;
        ensure_finite_slice(x.as_slice(), "feature vector")?;
        ensure_finite(r, "reward")?;
        ensure_finite(w, "weight")?;
        if w < 0.0 {
            return Err(Error::param(format!("weight must be >= 0, got {w}")));
        }
        self.count += 1;
        if w == 0.0 {
            return Ok(());
        }
        self.weight_sum += w;
        self.gram.ger(w, x, x, 1.0);
        self.resp.axpy(w * r, x, 1.0);
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY || self.inv.is_none() {
            self.refresh();
            return Ok(());
        }
        if let Some(inv) = self.inv.as_mut() {
            let ax = &*inv * x;
            let denom = 1.0 + w * x.dot(&ax);
            inv.ger(-w / denom, &ax, &ax, 1.0);
        }
        Ok(())
    }

    /// Recomputes the inverse from the Gram matrix.
    pub fn refresh(&mut self) {
        self.since_refresh = 0;
        self.inv = spd_inverse(&self.matrix()).ok();
    }

    /// Ridge estimate `(lambda I + M)^-1 b`.
    pub fn estimate(&self) -> Result<Vector> {
        match &self.inv {
            Some(inv) => Ok(inv * &self.resp),
            None => Err(Error::Singular("regularised Gram matrix is not invertible")),
        }
    }

    /// `||x||` in the norm induced by `(lambda I + M)^-1`. Infinite when singular.
    pub fn mnorm(&self, x: &Vector) -> f64 {
        match &self.inv {
            Some(inv) => quad_form(inv, x).max(0.0).sqrt(),
            None => f64::INFINITY,
        }
    }

    /// Adds another state's statistics (regulariser of `self` is kept).
    pub fn absorb(&mut self, other: &RidgeState) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        self.gram += &other.gram;
        self.resp += &other.resp;
        self.count += other.count;
        self.weight_sum += other.weight_sum;
        self.refresh();
        Ok(())
    }

    /// Removes another state's statistics (exact inverse of `absorb`).
    pub fn subtract(&mut self, other: &RidgeState) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        self.gram -= &other.gram;
        self.resp -= &other.resp;
        self.count = self.count.saturating_sub(other.count);
        self.weight_sum -= other.weight_sum;
        self.refresh();
        Ok(())
    }

    /// Smallest eigenvalue of the unregularised Gram matrix.
    pub fn gram_min_eigenvalue(&self) -> f64 {
        self.gram.clone().symmetric_eigen().eigenvalues.min()
    }
}

/// `x^T A x`.
pub fn quad_form(a: &Matrix, x: &Vector) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let col = a.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += col[i] * x[i];
        }
        acc += s * x[j];
    }
    acc
}

/// Sum of several states' statistics as a fresh state with regulariser `reg`.
pub fn aggregate<'a, I>(dim: usize, reg: f64, states: I) -> Result<RidgeState>
where
    I: IntoIterator<Item = &'a RidgeState>,
{
    let mut gram = Matrix::zeros(dim, dim);
    let mut resp = Vector::zeros(dim);
    let mut count = 0;
    let mut wsum = 0.0;
    for s in states {
        if s.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.dim,
            });
        }
        gram += &s.gram;
        resp += &s.resp;
        count += s.count;
        wsum += s.weight_sum;
    }
    RidgeState::from_parts(reg, gram, resp, count, wsum)
}
