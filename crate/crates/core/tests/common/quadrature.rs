use nalgebra::{DMatrix, DVector};
use slabspike::Sigma2Prior;

use super::log_sum_exp;

/// Columns of `u` followed by the active columns of `x`.
fn design(x: &DMatrix<f64>, u: &DMatrix<f64>, active: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut w = DMatrix::zeros(n, u.ncols() + active.len());
    for j in 0..u.ncols() {
        w.set_column(j, &u.column(j));
    }
    for (j, &i) in active.iter().enumerate() {
        w.set_column(u.ncols() + j, &x.column(i));
    }
    w
}

/// Lower Cholesky factor of a symmetric matrix of order at most 2, by hand.
fn small_cholesky(h: &DMatrix<f64>) -> DMatrix<f64> {
    let d = h.nrows();
    let mut l = DMatrix::zeros(d, d);
    if d >= 1 {
        l[(0, 0)] = h[(0, 0)].sqrt();
    }
    if d == 2 {
        l[(1, 0)] = h[(1, 0)] / l[(0, 0)];
        l[(1, 1)] = (h[(1, 1)] - l[(1, 0)] * l[(1, 0)]).sqrt();
    }
    l
}

/// Solves L' v = u for lower-triangular L of order at most 2.
fn back_solve(l: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    match u.len() {
        0 => vec![],
        1 => vec![u[0] / l[(0, 0)]],
        _ => {
            let v1 = u[1] / l[(1, 1)];
            vec![(u[0] - l[(1, 0)] * v1) / l[(0, 0)], v1]
        }
    }
}

/// log of the integrated likelihood by brute-force trapezoid quadrature over
/// t = log sigma^2 and the (phi, beta_A) coordinates, at most two of them.
/// The coordinates are mapped affinely to a standardized grid so the rule
/// sees a well-scaled integrand; the integrand itself is evaluated directly
/// from the Gaussian likelihood and the priors.
pub fn quadrature_log_marginal(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    active: &[usize],
    scales: &[f64],
    gamma2: f64,
    prior: Sigma2Prior,
) -> f64 {
    let n = y.len();
    let l = u.ncols();
    let w = design(x, u, active);
    let d = w.ncols();
    assert!(d <= 2, "oracle handles at most two integrated coordinates");
    let prior_prec: Vec<f64> = (0..d)
        .map(|j| if j < l { 0.0 } else { 1.0 / (gamma2 * scales[j - l]) })
        .collect();

    let mut h = w.transpose() * &w;
    for j in 0..d {
        h[(j, j)] += prior_prec[j];
    }
    let wty = w.transpose() * y;
    let center: Vec<f64> = match d {
        0 => vec![],
        1 => vec![wty[0] / h[(0, 0)]],
        _ => {
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            vec![
                (h[(1, 1)] * wty[0] - h[(0, 1)] * wty[1]) / det,
                (h[(0, 0)] * wty[1] - h[(1, 0)] * wty[0]) / det,
            ]
        }
    };
    let chol = small_cholesky(&h);
    let log_det_l: f64 = (0..d).map(|j| chol[(j, j)].ln()).sum();

    let (a0, b0) = prior.shape_rate();
    let resid_at_center = y - &w * DVector::from_column_slice(&center);
    let s = resid_at_center.norm_squared()
        + (0..d).map(|j| prior_prec[j] * center[j] * center[j]).sum::<f64>()
        + 2.0 * b0;
    let alpha = (n - l) as f64 / 2.0 + a0;
    let t0 = (s / (2.0 * alpha)).ln();
    let (t_lo, t_hi, ht) = (t0 - 6.0, t0 + 30.0 / alpha + 2.0, 0.005f64);
    let (u_max, hu) = (9.0f64, 0.15f64);
    let nu_pts = (2.0 * u_max / hu).round() as usize + 1;
    let u_grid: Vec<f64> = (0..nu_pts).map(|i| -u_max + hu * i as f64).collect();
    let u_points: Vec<Vec<f64>> = match d {
        0 => vec![vec![]],
        1 => u_grid.iter().map(|&a| vec![a]).collect(),
        _ => u_grid.iter().flat_map(|&a| u_grid.iter().map(move |&b| vec![a, b])).collect(),
    };
    let trap = |i: usize, m: usize| if i == 0 || i + 1 == m { 0.5 } else { 1.0 };
    let u_weight = |p: &[f64]| -> f64 {
        p.iter()
            .map(|&v| {
                let i = ((v + u_max) / hu).round() as usize;
                trap(i, nu_pts)
            })
            .product::<f64>()
    };
    let offsets: Vec<Vec<f64>> = u_points.iter().map(|p| back_solve(&chol, p)).collect();
    let u_weights: Vec<f64> = u_points.iter().map(|p| u_weight(p).ln()).collect();

    let nt = ((t_hi - t_lo) / ht).ceil() as usize + 1;
    let mut outer = Vec::with_capacity(nt);
    let mut inner = vec![0.0; u_points.len()];
    for it in 0..nt {
        let t = t_lo + ht * it as f64;
        let sigma2 = t.exp();
        let sigma = sigma2.sqrt();
        // dt measure: Jeffreys contributes nothing, IG(a0, b0) contributes -a0 t - b0/sigma^2
        let log_sigma_prior = -a0 * t - b0 / sigma2;
        let log_jac = d as f64 * 0.5 * t - log_det_l;
        for (idx, off) in offsets.iter().enumerate() {
            let theta: Vec<f64> = (0..d).map(|j| center[j] + sigma * off[j]).collect();
            let mut rss = 0.0;
            for r in 0..n {
                let mut fit = 0.0;
                for j in 0..d {
                    fit += w[(r, j)] * theta[j];
                }
                rss += (y[r] - fit).powi(2);
            }
            let mut lp = -0.5 * n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() - rss / (2.0 * sigma2);
            for j in l..d {
                let v = sigma2 * gamma2 * scales[j - l];
                lp += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - theta[j] * theta[j] / (2.0 * v);
            }
            inner[idx] = lp + u_weights[idx];
        }
        let du = (hu.ln()) * d as f64;
        outer.push(log_sum_exp(&inner) + du + log_jac + log_sigma_prior + trap(it, nt).ln());
    }
    log_sum_exp(&outer) + ht.ln()
}
