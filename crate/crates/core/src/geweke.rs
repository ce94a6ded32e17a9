//! Joint-distribution ("getting it right") test of the sampler.
//!
//! Marginal-conditional draws sample parameters from the prior and then data
//! given parameters. Successive-conditional draws alternate one Gibbs sweep
//! with regenerating the data from the current parameters. Both target the
//! same joint distribution, so the means of any parameter functional must
//! agree. The comparison needs a proper prior, so the test uses an
//! inverse-gamma sigma^2 prior and no always-included columns (phi has a flat
//! prior).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gibbs::{draw_lambda2_prior, ChainRng, ChainState, Sampler};
use crate::prior::{Sigma2Prior, SlabFamily, SlabSpec};

/// sigma^2 prior substituted when the spec carries the improper Jeffreys prior.
pub const DEFAULT_SIGMA2_PRIOR: Sigma2Prior = Sigma2Prior::InverseGamma { shape: 5.0, rate: 4.0 };
pub const PASS_THRESHOLD: f64 = 4.0;
const BATCHES: usize = 100;

/// Deliberate sampler defects, used to check the test has power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Full-conditional sigma^2 update uses shape n + s instead of (n + s)/2.
    DoubledSigma2Shape,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub name: &'static str,
    pub prior_mean: f64,
    pub prior_se: f64,
    pub gibbs_mean: f64,
    pub gibbs_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GewekeReport {
    pub n_draws: usize,
    pub checks: Vec<MomentCheck>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_abs_z() < PASS_THRESHOLD
    }
}

const NAMES: [&str; 8] = ["q", "q^2", "r2", "r2^2", "sigma2", "log sigma2", "s", "s^2"];

fn functionals(state: &ChainState) -> [f64; 8] {
    let s = state.n_active() as f64;
    [
        state.q,
        state.q * state.q,
        state.r2,
        state.r2 * state.r2,
        state.sigma2,
        state.sigma2.ln(),
        s,
        s * s,
    ]
}

fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    use rand_distr::{Distribution, Gamma};
    rate / Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
}

/// Draws every parameter from the (grid-discretized) prior.
pub fn draw_from_prior<R: Rng + ?Sized>(sampler: &Sampler, rng: &mut R) -> ChainState {
    let spec = sampler.spec();
    let k = sampler.k();
    let q = sampler.grid_q()[rng.random_range(0..sampler.grid_q().len())];
    let r2 = sampler.grid_r2()[rng.random_range(0..sampler.grid_r2().len())];
    let gamma2 = sampler.gamma2(q, r2).expect("grid midpoints are interior");
    let (a0, b0) = spec.sigma2_prior.shape_rate();
    let sigma2 = inverse_gamma(rng, a0, b0);
    let lambda2 = DVector::from_fn(k, |_, _| match spec.family {
        SlabFamily::Gaussian => 1.0,
        SlabFamily::StudentT { nu } => draw_lambda2_prior(rng, nu),
    });
    let z: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < q).collect();
    let beta = DVector::from_fn(k, |i, _| {
        if z[i] {
            (sigma2 * gamma2 * lambda2[i]).sqrt() * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    });
    ChainState {
        z,
        beta,
        phi: DVector::zeros(0),
        sigma2,
        q,
        r2,
        gamma2,
        lambda2,
    }
}

fn draw_response<R: Rng + ?Sized>(x: &DMatrix<f64>, state: &ChainState, rng: &mut R) -> DVector<f64> {
    let sd = state.sigma2.sqrt();
    let mean = x * &state.beta;
    DVector::from_fn(x.nrows(), |i, _| mean[i] + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Mean and batch-means standard error of an autocorrelated series.
pub fn batch_mean_se(series: &[f64], batches: usize) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

fn iid_mean_se(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn geweke_joint_test(shape: (usize, usize, usize), spec: &SlabSpec, n_draws: usize) -> Result<GewekeReport> {
    geweke_joint_test_with(shape, spec, n_draws, Mutation::None)
}

pub fn geweke_joint_test_with(
    (n, k, l): (usize, usize, usize),
    spec: &SlabSpec,
    n_draws: usize,
    mutation: Mutation,
) -> Result<GewekeReport> {
    if l != 0 {
        return Err(Error::InvalidSpec(
            "the joint test needs l = 0: always-included coefficients have an improper prior".into(),
        ));
    }
    if n < 2 || k == 0 {
        return Err(Error::InvalidSpec("the joint test needs n >= 2 and k >= 1".into()));
    }
    if n_draws < 10 * BATCHES {
        return Err(Error::InvalidSpec(format!("need at least {} draws", 10 * BATCHES)));
    }
    let mut spec = spec.clone();
    if !spec.sigma2_prior.is_proper() {
        spec.sigma2_prior = DEFAULT_SIGMA2_PRIOR;
    }
    spec.validate()?;

    let mut rng = ChainRng::seed_from_u64(spec.seed);
    let x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = Dataset::from_xy(y0, x.clone())?;
    let mut sampler = Sampler::new(&data, &spec)?;
    sampler.corrupt_sigma2_shape(mutation == Mutation::DoubledSigma2Shape);

    let mut prior_series: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); NAMES.len()];
    for _ in 0..n_draws {
        let state = draw_from_prior(&sampler, &mut rng);
        for (s, v) in prior_series.iter_mut().zip(functionals(&state)) {
            s.push(v);
        }
    }

    let mut gibbs_series: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); NAMES.len()];
    let mut state = draw_from_prior(&sampler, &mut rng);
    let mut y = draw_response(&x, &state, &mut rng);
    for it in 0..n_draws {
        sampler.set_response(y);
        sampler.sweep(&mut state, &mut rng).map_err(|e| Error::Sweep {
            sweep: it + 1,
            source: Box::new(e),
        })?;
        y = draw_response(&x, &state, &mut rng);
        for (s, v) in gibbs_series.iter_mut().zip(functionals(&state)) {
            s.push(v);
        }
    }

    let checks = NAMES
        .iter()
        .zip(prior_series.iter().zip(&gibbs_series))
        .map(|(&name, (p, g))| {
            let (pm, pse) = iid_mean_se(p);
            let (gm, gse) = batch_mean_se(g, BATCHES);
            let denom = (pse * pse + gse * gse).sqrt();
            MomentCheck {
                name,
                prior_mean: pm,
                prior_se: pse,
                gibbs_mean: gm,
                gibbs_se: gse,
                z: if denom > 0.0 { (pm - gm) / denom } else { 0.0 },
            }
        })
        .collect();
    Ok(GewekeReport { n_draws, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_always_included_columns() {
        assert!(geweke_joint_test((10, 3, 1), &SlabSpec::default(), 5_000).is_err());
    }

    #[test]
    fn batch_means_of_constant_series() {
        let (m, se) = batch_mean_se(&vec![2.0; 1000], 10);
        assert_eq!((m, se), (2.0, 0.0));
    }

    #[test]
    fn short_run_is_clean() {
        let spec = SlabSpec { grid_q: 20, grid_r2: 20, seed: 3, ..SlabSpec::default() };
        let r = geweke_joint_test((12, 3, 0), &spec, 20_000).unwrap();
        assert!(r.passed(), "{:#?}", r.checks);
    }
}
