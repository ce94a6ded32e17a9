use nalgebra::{DMatrix, DVector};
use slabspike::prior::midpoint_grid;
use slabspike::{gamma2_from_r2_q, Dataset, SlabFamily, VbarX};

use super::log_sum_exp;

/// log m(z | gamma^2) under Jeffreys, up to a z-independent constant, from the
/// n x n marginal covariance I + gamma^2 X_A X_A' of y.
pub fn direct_log_marginal(y: &DVector<f64>, x: &DMatrix<f64>, active: &[usize], gamma2: f64) -> f64 {
    let n = y.len();
    let mut cov = DMatrix::<f64>::identity(n, n);
    for &i in active {
        cov += gamma2 * x.column(i) * x.column(i).transpose();
    }
    let lu = cov.clone().lu();
    let quad = y.dot(&lu.solve(y).unwrap());
    -0.5 * lu.determinant().ln() - 0.5 * n as f64 * quad.ln()
}

/// Exact posterior over the 2^k models with (q, R^2) summed over the grid.
pub fn enumerate_posterior(data: &Dataset, grid: usize) -> Vec<f64> {
    let (k, y, x) = (data.k(), data.y(), data.x());
    let vbar = VbarX::compute(data, &SlabFamily::Gaussian);
    let g = midpoint_grid(grid);
    let log_post: Vec<f64> = (0..1usize << k)
        .map(|mask| {
            let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let s = active.len() as f64;
            let terms: Vec<f64> = g
                .iter()
                .flat_map(|&q| g.iter().map(move |&r2| (q, r2)))
                .map(|(q, r2)| {
                    let gamma2 = gamma2_from_r2_q(r2, q, k, vbar).unwrap();
                    s * q.ln() + (k as f64 - s) * (1.0 - q).ln() + direct_log_marginal(y, x, &active, gamma2)
                })
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    let norm = log_sum_exp(&log_post);
    log_post.iter().map(|v| (v - norm).exp()).collect()
}
