//! Log marginal likelihood of an inclusion pattern with phi, beta and
//! sigma^2 integrated out.
//!
//! With M_U the projector removing the always-included columns, active
//! columns X_A, D = diag(gamma^2 lambda_i^2) and
//!
//! ```text
//! A   = X_A' M_U X_A + D^-1
//! SSR = y' M_U y - y' M_U X_A A^-1 X_A' M_U y
//! ```
//!
//! the log marginal is, up to a constant that depends on neither the
//! active set nor gamma^2,
//!
//! ```text
//! -1/2 sum_A log(gamma^2 lambda_i^2) - 1/2 log det A - e log(SSR + 2 b0)
//! ```
//!
//! where e = (n - l)/2 + a0 and (a0, b0) are the shape and rate of the
//! sigma^2 prior (both zero for Jeffreys).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::prior::Sigma2Prior;

/// Included predictors in set form with their latent scales.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    indices: Vec<usize>,
    scales: Vec<f64>,
}

impl ActiveSet {
    pub fn new(indices: Vec<usize>, scales: Vec<f64>) -> Result<Self> {
        if indices.len() != scales.len() {
            return Err(Error::Domain("active set indices and scales differ in length".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("active set indices must be strictly increasing".into()));
        }
        if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("active set scales must be positive".into()));
        }
        Ok(Self { indices, scales })
    }

    pub fn empty() -> Self {
        Self { indices: Vec::new(), scales: Vec::new() }
    }

    /// Active set with all latent scales equal to one (Gaussian slab).
    pub fn unit(indices: Vec<usize>) -> Result<Self> {
        let scales = vec![1.0; indices.len()];
        Self::new(indices, scales)
    }

    /// Builds the active set of an inclusion vector.
    pub fn from_inclusion(z: &[bool], lambda2: &[f64]) -> Self {
        let indices: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
        let scales = indices.iter().map(|&i| lambda2[i]).collect();
        Self { indices, scales }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Projected sufficient statistics of a dataset.
#[derive(Clone, Debug)]
pub struct MarginalModel {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    utu_chol: Option<Cholesky<f64, Dyn>>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    exponent: f64,
    rate_term: f64,
}

impl MarginalModel {
    pub fn new(
        y: &DVector<f64>,
        x: &DMatrix<f64>,
        u: &DMatrix<f64>,
        sigma2_prior: Sigma2Prior,
    ) -> Result<Self> {
        let n = y.len();
        let l = u.ncols();
        let utu_chol = if l > 0 {
            Some(Cholesky::new(u.transpose() * u).ok_or_else(|| {
                Error::Singular("always-included columns are linearly dependent".into())
            })?)
        } else {
            None
        };
        let (a0, b0) = sigma2_prior.shape_rate();
        let mut model = Self {
            x: x.clone(),
            u: u.clone(),
            utu_chol,
            gram: DMatrix::zeros(0, 0),
            xty: DVector::zeros(x.ncols()),
            yty: 0.0,
            exponent: (n as f64 - l as f64) / 2.0 + a0,
            rate_term: 2.0 * b0,
        };
        let xt = model.project_matrix(x);
        model.gram = xt.transpose() * &xt;
        model.set_response(y);
        Ok(model)
    }

    pub fn from_dataset(data: &Dataset, sigma2_prior: Sigma2Prior) -> Result<Self> {
        Self::new(data.y(), data.x(), data.u(), sigma2_prior)
    }

    fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.utu_chol {
            None => m.clone(),
            Some(chol) => m - &self.u * chol.solve(&(self.u.transpose() * m)),
        }
    }

    fn project_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.utu_chol {
            None => v.clone(),
            Some(chol) => v - &self.u * chol.solve(&(self.u.transpose() * v)),
        }
    }

    /// Replaces the response, keeping the predictor-side statistics.
    pub fn set_response(&mut self, y: &DVector<f64>) {
        let yt = self.project_vector(y);
        // X' M_U y = (M_U X)' y since M_U is symmetric and idempotent
        self.xty = self.x.transpose() * &yt;
        self.yty = yt.dot(&yt);
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn projected_yty(&self) -> f64 {
        self.yty
    }

    /// (shape, rate) of the sigma^2 conditional with beta and phi integrated out.
    pub fn collapsed_sigma2_params(&self, ssr: f64) -> (f64, f64) {
        (self.exponent, (ssr + self.rate_term) / 2.0)
    }

    pub fn log_marginal(&self, active: &ActiveSet, gamma2: f64) -> Result<f64> {
        check_gamma2(gamma2)?;
        Ok(self.factor(active, gamma2)?.log_marginal(self))
    }

    /// log m(active + i) - log m(active), via a bordered update of the
    /// factorization of A.
    pub fn log_bayes_factor(
        &self,
        active_without_i: &ActiveSet,
        i: usize,
        lambda2_i: f64,
        gamma2: f64,
    ) -> Result<f64> {
        check_gamma2(gamma2)?;
        if active_without_i.contains(i) {
            return Err(Error::Domain(format!("predictor {i} is already active")));
        }
        if i >= self.k() {
            return Err(Error::Domain(format!("predictor index {i} out of range")));
        }
        let base = self.factor(active_without_i, gamma2)?;
        let d_inv = 1.0 / (gamma2 * lambda2_i);
        match base.border(self, i, d_inv) {
            Some(b) => Ok(base.log_bf(self, &b, gamma2 * lambda2_i)),
            None => {
                let mut with = active_without_i.clone();
                let pos = with.indices.partition_point(|&j| j < i);
                with.indices.insert(pos, i);
                with.scales.insert(pos, lambda2_i);
                let full = self.factor(&with, gamma2)?;
                Ok(full.log_marginal(self) - base.log_marginal(self))
            }
        }
    }

    /// Fresh factorization of A for an active set.
    pub(crate) fn factor(&self, active: &ActiveSet, gamma2: f64) -> Result<Factor> {
        let d_inv: Vec<f64> = active.scales.iter().map(|s| 1.0 / (gamma2 * s)).collect();
        Factor::build(self, active.indices.clone(), d_inv)
    }
}

fn check_gamma2(gamma2: f64) -> Result<()> {
    if gamma2 > 0.0 && gamma2.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma^2 must be positive and finite, got {gamma2}")))
    }
}

/// Result of bordering a factor with one extra column.
pub(crate) struct Border {
    delta2: f64,
    w_new: f64,
}

/// Cholesky factor of A for one active set, with the pieces of the log
/// marginal that depend on it.
#[derive(Clone, Debug)]
pub(crate) struct Factor {
    indices: Vec<usize>,
    d_inv: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    w: DVector<f64>,
    log_det: f64,
    ssr: f64,
}

impl Factor {
    fn build(model: &MarginalModel, indices: Vec<usize>, d_inv: Vec<f64>) -> Result<Self> {
        let s = indices.len();
        if s == 0 {
            return Self::finish(model, indices, d_inv, None);
        }
        let mut a = DMatrix::from_fn(s, s, |r, c| model.gram[(indices[r], indices[c])]);
        for (j, d) in d_inv.iter().enumerate() {
            a[(j, j)] += d;
        }
        let chol = match Cholesky::new(a.clone()) {
            Some(c) => c,
            None => {
                let jitter = 1e-10 * a.trace() / s as f64;
                for j in 0..s {
                    a[(j, j)] += jitter;
                }
                Cholesky::new(a).ok_or_else(|| Error::Degenerate {
                    active: indices.clone(),
                    reason: "A is not positive definite after jitter".into(),
                })?
            }
        };
        Self::finish(model, indices, d_inv, Some(chol))
    }

    fn finish(
        model: &MarginalModel,
        indices: Vec<usize>,
        d_inv: Vec<f64>,
        chol: Option<Cholesky<f64, Dyn>>,
    ) -> Result<Self> {
        let (w, log_det) = match &chol {
            None => (DVector::zeros(0), 0.0),
            Some(c) => {
                let b = DVector::from_iterator(indices.len(), indices.iter().map(|&i| model.xty[i]));
                let l = c.l_dirty();
                let w = l.solve_lower_triangular(&b).ok_or_else(|| Error::Degenerate {
                    active: indices.clone(),
                    reason: "triangular solve failed".into(),
                })?;
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                (w, log_det)
            }
        };
        let ssr = model.yty - w.dot(&w);
        if !(ssr + model.rate_term > 0.0) || !log_det.is_finite() {
            return Err(Error::Degenerate {
                active: indices,
                reason: format!("residual sum of squares {ssr} is not positive"),
            });
        }
        Ok(Self { indices, d_inv, chol, w, log_det, ssr })
    }

    pub(crate) fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub(crate) fn ssr(&self) -> f64 {
        self.ssr
    }

    pub(crate) fn log_marginal(&self, model: &MarginalModel) -> f64 {
        // log(gamma^2 lambda^2) = -log(d_inv)
        let prior_log_det: f64 = self.d_inv.iter().map(|d| -d.ln()).sum();
        -0.5 * prior_log_det - 0.5 * self.log_det - model.exponent * (self.ssr + model.rate_term).ln()
    }

    /// Borders the factor with predictor `i`. Returns None when the new
    /// pivot is numerically unusable; callers then refactor from scratch.
    pub(crate) fn border(&self, model: &MarginalModel, i: usize, d_inv: f64) -> Option<Border> {
        let d = model.gram[(i, i)] + d_inv;
        let (ll, lw) = match &self.chol {
            None => (0.0, 0.0),
            Some(c) => {
                let col = DVector::from_iterator(
                    self.indices.len(),
                    self.indices.iter().map(|&j| model.gram[(j, i)]),
                );
                let l = c.l_dirty().solve_lower_triangular(&col)?;
                (l.dot(&l), l.dot(&self.w))
            }
        };
        let delta2 = d - ll;
        if !(delta2 > 1e-12 * d) {
            return None;
        }
        let w_new = (model.xty[i] - lw) / delta2.sqrt();
        let ssr_new = self.ssr - w_new * w_new;
        if !(ssr_new + model.rate_term > 0.0) {
            return None;
        }
        Some(Border { delta2, w_new })
    }

    /// log m(with i) - log m(self) given a successful border.
    pub(crate) fn log_bf(&self, model: &MarginalModel, b: &Border, slab_var: f64) -> f64 {
        let ssr_new = self.ssr - b.w_new * b.w_new;
        -0.5 * slab_var.ln() - 0.5 * b.delta2.ln()
            - model.exponent
                * ((ssr_new + model.rate_term).ln() - (self.ssr + model.rate_term).ln())
    }

    /// Factor of the active set with predictor `i` added.
    pub(crate) fn insert(&self, model: &MarginalModel, i: usize, d_inv: f64) -> Result<Self> {
        let pos = self.indices.partition_point(|&j| j < i);
        let mut indices = self.indices.clone();
        indices.insert(pos, i);
        let mut d_inv_all = self.d_inv.clone();
        d_inv_all.insert(pos, d_inv);
        let col = DVector::from_iterator(
            indices.len(),
            indices.iter().map(|&j| model.gram[(j, i)] + if j == i { d_inv } else { 0.0 }),
        );
        let chol = match &self.chol {
            None => Cholesky::new(DMatrix::from_element(1, 1, col[0])),
            Some(c) => Some(c.insert_column(pos, col)),
        };
        match chol {
            Some(c) if c.l_dirty().diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) => {
                Self::finish(model, indices, d_inv_all, Some(c))
            }
            _ => Self::build(model, indices, d_inv_all),
        }
    }

    /// Factor of the active set with predictor `i` removed.
    pub(crate) fn remove(&self, model: &MarginalModel, i: usize) -> Result<Self> {
        let pos = self
            .indices
            .binary_search(&i)
            .map_err(|_| Error::Domain(format!("predictor {i} is not active")))?;
        let mut indices = self.indices.clone();
        indices.remove(pos);
        let mut d_inv = self.d_inv.clone();
        d_inv.remove(pos);
        if indices.is_empty() {
            return Self::finish(model, indices, d_inv, None);
        }
        let chol = self.chol.as_ref().map(|c| c.remove_column(pos));
        Self::finish(model, indices, d_inv, chol)
    }
}

/// Jeffreys-prior log marginal of `data` for an active set.
pub fn log_marginal(data: &Dataset, active: &ActiveSet, gamma2: f64) -> Result<f64> {
    MarginalModel::from_dataset(data, Sigma2Prior::Jeffreys)?.log_marginal(active, gamma2)
}

/// Jeffreys-prior log Bayes factor for adding predictor `i`.
pub fn log_bayes_factor(
    data: &Dataset,
    active_without_i: &ActiveSet,
    i: usize,
    lambda2_i: f64,
    gamma2: f64,
) -> Result<f64> {
    MarginalModel::from_dataset(data, Sigma2Prior::Jeffreys)?
        .log_bayes_factor(active_without_i, i, lambda2_i, gamma2)
}
