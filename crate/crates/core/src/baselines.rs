//! Penalized least-squares reference estimators. Both use the objective
//! `RSS + penalty` without the 1/2 or 1/n scalings some libraries apply, so
//! the lasso threshold is lambda_l / 2.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PenaltySpec {
    /// Squared-norm weight lambda_r^2.
    Ridge(f64),
    /// Absolute-value weight lambda_l.
    Lasso(f64),
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        let w = match *self {
            PenaltySpec::Ridge(w) | PenaltySpec::Lasso(w) => w,
        };
        if w >= 0.0 && w.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("penalty weight must be finite and non-negative, got {w}")))
        }
    }
}

/// (X'X + lambda_r^2 I)^-1 X'y.
pub fn ridge_fit(data: &Dataset, lambda_r2: f64) -> Result<DVector<f64>> {
    ridge_solve(data.x(), data.y(), lambda_r2)
}

pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda_r2: f64) -> Result<DVector<f64>> {
    PenaltySpec::Ridge(lambda_r2).validate()?;
    let mut a = x.transpose() * x;
    for j in 0..a.nrows() {
        a[(j, j)] += lambda_r2;
    }
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Singular("X'X is not invertible; use a positive ridge penalty".into())
    })?;
    Ok(chol.solve(&(x.transpose() * y)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` passes ran without the largest coordinate change
    /// dropping below `tol`; `coef` is then the best iterate seen.
    pub converged: bool,
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda_l: f64) -> f64 {
    let r = y - x * beta;
    r.dot(&r) + lambda_l * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn lasso_fit(data: &Dataset, lambda_l: f64, tol: f64, max_iter: usize) -> Result<LassoFit> {
    lasso_solve(data.x(), data.y(), lambda_l, tol, max_iter)
}

/// Cyclic coordinate descent with exact soft-threshold updates.
pub fn lasso_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda_l: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    PenaltySpec::Lasso(lambda_l).validate()?;
    let k = x.ncols();
    let col_sq: Vec<f64> = (0..k).map(|j| x.column(j).norm_squared()).collect();
    let mut beta = DVector::zeros(k);
    let mut resid = y.clone();
    let mut best = (lasso_objective(x, y, &beta, lambda_l), beta.clone());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..k {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = x.column(j).dot(&resid) + col_sq[j] * old;
            let new = soft_threshold(rho, lambda_l / 2.0) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &x.column(j), 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        let obj = lasso_objective(x, y, &beta, lambda_l);
        if obj <= best.0 {
            best = (obj, beta.clone());
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    Ok(LassoFit {
        coef: best.1,
        objective: best.0,
        iterations,
        converged,
    })
}

/// Largest violation of the lasso subgradient optimality conditions.
pub fn lasso_kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda_l: f64) -> f64 {
    let r = y - x * beta;
    (0..x.ncols())
        .map(|j| {
            let g = 2.0 * x.column(j).dot(&r);
            if beta[j] != 0.0 {
                (g - lambda_l * beta[j].signum()).abs()
            } else {
                (g.abs() - lambda_l).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ridge_diagonal_system() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![2.0, 4.0]);
        let b = ridge_solve(&x, &y, 1.0).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ridge_solve(&x, &y, 0.0), Err(Error::Singular(_))));
        assert!(ridge_solve(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn ridge_is_a_strict_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(15, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(15, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lam = 0.7;
        let obj = |b: &DVector<f64>| (&y - &x * b).norm_squared() + lam * b.norm_squared();
        let b = ridge_solve(&x, &y, lam).unwrap();
        let f0 = obj(&b);
        for j in 0..4 {
            for step in [1e-3, -1e-3] {
                let mut p = b.clone();
                p[j] += step;
                assert!(obj(&p) > f0);
            }
        }
    }

    #[test]
    fn lasso_scalar_soft_threshold() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 3.0);
        let fit = lasso_solve(&x, &y, 2.0, 1e-12, 100).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.coef[0], 2.0);
    }

    #[test]
    fn lasso_full_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let threshold = 2.0 * (x.transpose() * &y).amax();
        let fit = lasso_solve(&x, &y, threshold, 1e-12, 100).unwrap();
        assert!(fit.coef.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lasso_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = lasso_solve(&x, &y, 0.1, 0.0, 2).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
    }

    #[test]
    fn negative_penalty_rejected() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::zeros(2);
        assert!(ridge_solve(&x, &y, -1.0).is_err());
        assert!(lasso_solve(&x, &y, -1.0, 1e-9, 10).is_err());
    }
}
