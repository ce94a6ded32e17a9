//! Prior-sensitivity experiments: the sparse simulation design, injection of
//! pure-noise predictors, and sweeps over the Student-t degrees of freedom.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_moments, ColumnMoments, Dataset};
use crate::error::{Error, Result};
use crate::gibbs::{chain_seed, run_chains, ChainRng, Sampler, TraceStore};
use crate::prior::{SlabFamily, SlabSpec};

pub const SIM_N: usize = 68;
pub const SIM_K: usize = 16;
pub const SIM_BETA: [f64; 3] = [-0.86, 0.64, 0.89];
pub const SIM_SIGMA_STEP: f64 = 0.75;
pub const DEFAULT_NUS: [f64; 5] = [4.0, 10.0, 30.0, 100.0, 500.0];

/// Prefix marking injected noise predictors.
pub const INJECTED_PREFIX: &str = "rnd:";

/// One noise level of the simulation design. X and the standardized errors
/// depend only on the seed, so all six scenarios of a seed share them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub s: u32,
    pub n: usize,
    pub k: usize,
    pub beta_true: Vec<f64>,
    pub sigma_step: f64,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(s: u32, seed: u64) -> Self {
        Self {
            s,
            n: SIM_N,
            k: SIM_K,
            beta_true: SIM_BETA.to_vec(),
            sigma_step: SIM_SIGMA_STEP,
            seed,
        }
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_step * self.s as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::InvalidSpec("scenario index starts at 1".into()));
        }
        if self.beta_true.len() > self.k || self.n < 2 || self.k == 0 {
            return Err(Error::InvalidSpec(format!(
                "scenario needs n >= 2 and at most k = {} true coefficients",
                self.k
            )));
        }
        if !(self.sigma_step > 0.0) {
            return Err(Error::InvalidSpec("noise step must be positive".into()));
        }
        Ok(())
    }
}

/// X_ij ~ N(0,1) (drawn row by row), eps_i ~ N(0,1),
/// y = X beta + sigma_eps eps; y and X are then standardized.
pub fn simulate_dataset(scenario: &SimScenario) -> Result<Dataset> {
    scenario.validate()?;
    let (n, k) = (scenario.n, scenario.k);
    let mut rng = ChainRng::seed_from_u64(scenario.seed);
    let x = DMatrix::from_row_iterator(n, k, (0..n * k).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let sigma = scenario.sigma_eps();
    let y = DVector::from_fn(n, |i, _| {
        let signal: f64 = scenario.beta_true.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum();
        signal + sigma * eps[i]
    });
    Dataset::from_xy(y, x)?.standardize()
}

/// Appends `count` standardized N(0,1) columns named `rnd:1..`.
pub fn inject_random(data: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Ok(data.clone());
    }
    let n = data.n();
    let mut rng = ChainRng::seed_from_u64(seed);
    let mut cols = DMatrix::from_fn(n, count, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut moments: Vec<ColumnMoments> = Vec::with_capacity(count);
    for j in 0..count {
        let mut col = cols.column_mut(j);
        let m = sample_moments(col.as_slice());
        for v in col.iter_mut() {
            *v = (*v - m.mean) / m.sd;
        }
        moments.push(m);
    }
    let names = (1..=count).map(|j| format!("{INJECTED_PREFIX}{j}")).collect();
    data.with_extra_predictors(cols, names, Some(moments))
}

/// Row key of a sweep or heatmap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelKey {
    StudentT { nu: f64 },
    Gaussian,
}

impl ModelKey {
    pub fn family(&self) -> SlabFamily {
        match *self {
            ModelKey::StudentT { nu } => SlabFamily::StudentT { nu },
            ModelKey::Gaussian => SlabFamily::Gaussian,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ModelKey::StudentT { nu } => format!("nu={nu}"),
            ModelKey::Gaussian => "gaussian".into(),
        }
    }

    pub fn dir_name(&self) -> String {
        match *self {
            ModelKey::StudentT { nu } => format!("nu_{nu}"),
            ModelKey::Gaussian => "gaussian".into(),
        }
    }
}

pub struct SweepResult {
    pub key: ModelKey,
    pub spec: SlabSpec,
    pub chains: Result<Vec<TraceStore>>,
}

/// Runs every nu in `nus` (and the Gaussian slab when `include_gaussian`)
/// independently. Model m gets base seed `spec.seed + 1000 * m`; its chains
/// are offset from there. A failing model does not stop the others.
pub fn nu_sweep(
    data: &Dataset,
    spec: &SlabSpec,
    nus: &[f64],
    include_gaussian: bool,
    chains: usize,
    threads: usize,
) -> Result<Vec<SweepResult>> {
    if let Some(bad) = nus.iter().find(|&&nu| !(nu > 2.0)) {
        return Err(Error::InvalidSpec(format!("every nu must exceed 2, got {bad}")));
    }
    let mut keys: Vec<ModelKey> = nus.iter().map(|&nu| ModelKey::StudentT { nu }).collect();
    if include_gaussian {
        keys.push(ModelKey::Gaussian);
    }
    let specs: Vec<SlabSpec> = keys
        .iter()
        .enumerate()
        .map(|(m, key)| SlabSpec {
            family: key.family(),
            seed: spec.seed.wrapping_add(1000 * m as u64),
            ..spec.clone()
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<TraceStore>>> = pool.install(|| {
        specs
            .par_iter()
            .map(|s| run_chains(data, s, chains, 1))
            .collect()
    });
    Ok(keys
        .into_iter()
        .zip(specs)
        .zip(results)
        .map(|((key, spec), chains)| SweepResult { key, spec, chains })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionReplicate {
    pub seed: u64,
    /// Inclusion probabilities of all k + count predictors.
    pub inc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionStudy {
    pub count: usize,
    pub names: Vec<String>,
    /// Inclusion probabilities on the original data.
    pub baseline_inc: Vec<f64>,
    pub replicates: Vec<InjectionReplicate>,
}

impl InjectionStudy {
    fn k(&self) -> usize {
        self.baseline_inc.len()
    }

    /// Median over replicates of each injected predictor's inclusion probability.
    pub fn median_injected_inc(&self) -> Vec<f64> {
        (0..self.count)
            .map(|j| median(self.replicates.iter().map(|r| r.inc[self.k() + j]).collect()))
            .collect()
    }

    /// Largest absolute change of any original predictor's inclusion
    /// probability across all replicates.
    pub fn max_original_shift(&self) -> f64 {
        self.replicates
            .iter()
            .flat_map(|r| {
                r.inc[..self.k()]
                    .iter()
                    .zip(&self.baseline_inc)
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn inclusion_of(traces: &[TraceStore]) -> Result<Vec<f64>> {
    let pooled = TraceStore::merge(traces)?;
    Ok(crate::reporting::inclusion_probabilities(&pooled))
}

/// Fits the original data once and the data with `count` injected noise
/// predictors once per seed. Every fit uses the same sampler seed so the
/// only difference between replicates is the injected columns.
pub fn injection_study(
    data: &Dataset,
    spec: &SlabSpec,
    count: usize,
    injection_seeds: &[u64],
    chains: usize,
    threads: usize,
) -> Result<InjectionStudy> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let fit = |d: &Dataset| -> Result<Vec<f64>> {
        let sampler = Sampler::new(d, spec)?;
        let traces = (0..chains)
            .map(|c| sampler.run(chain_seed(spec.seed, c)))
            .collect::<Result<Vec<_>>>()?;
        inclusion_of(&traces)
    };
    let (baseline, replicates) = pool.install(|| {
        rayon::join(
            || fit(data),
            || {
                injection_seeds
                    .par_iter()
                    .map(|&seed| {
                        let augmented = inject_random(data, count, seed)?;
                        Ok(InjectionReplicate { seed, inc: fit(&augmented)? })
                    })
                    .collect::<Result<Vec<_>>>()
            },
        )
    });
    let mut names = data.names().to_vec();
    names.extend((1..=count).map(|j| format!("{INJECTED_PREFIX}{j}")));
    Ok(InjectionStudy {
        count,
        names,
        baseline_inc: baseline?,
        replicates: replicates?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_levels() {
        assert_eq!(SimScenario::new(1, 0).sigma_eps(), 0.75);
        assert_eq!(SimScenario::new(3, 0).sigma_eps(), 2.25);
        let all: Vec<f64> = (1..=6).map(|s| SimScenario::new(s, 0).sigma_eps()).collect();
        assert_eq!(all, vec![0.75, 1.5, 2.25, 3.0, 3.75, 4.5]);
        assert_eq!(SimScenario::new(1, 0).beta_true.iter().filter(|b| **b != 0.0).count(), 3);
    }

    #[test]
    fn simulated_shape_and_moments() {
        let d = simulate_dataset(&SimScenario::new(1, 11)).unwrap();
        assert_eq!((d.n(), d.k(), d.l()), (68, 16, 0));
        let cols = std::iter::once(d.y().iter().copied().collect::<Vec<_>>())
            .chain((0..16).map(|j| d.x().column(j).iter().copied().collect()));
        for col in cols {
            let m = sample_moments(&col);
            assert!(m.mean.abs() < 1e-10);
            assert!((m.sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_shares_x() {
        let a = simulate_dataset(&SimScenario::new(2, 5)).unwrap();
        let b = simulate_dataset(&SimScenario::new(2, 5)).unwrap();
        assert_eq!(a.y(), b.y());
        assert_eq!(a.x(), b.x());
        let c = simulate_dataset(&SimScenario::new(4, 5)).unwrap();
        assert_eq!(a.x(), c.x());
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn injection_appends_labelled_columns() {
        let d = simulate_dataset(&SimScenario::new(1, 1)).unwrap();
        let e = inject_random(&d, 2, 9).unwrap();
        assert_eq!(e.k(), 18);
        assert_eq!(&e.names()[16..], &["rnd:1".to_string(), "rnd:2".to_string()]);
        for j in 0..16 {
            let a: Vec<u64> = d.x().column(j).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = e.x().column(j).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        for j in 16..18 {
            let m = sample_moments(e.x().column(j).as_slice());
            assert!(m.mean.abs() < 1e-12 && (m.sd - 1.0).abs() < 1e-12);
        }
        let same = inject_random(&d, 0, 9).unwrap();
        assert_eq!(same.x(), d.x());
        assert_eq!(same.names(), d.names());
    }

    #[test]
    fn sweep_rejects_small_nu() {
        let d = simulate_dataset(&SimScenario::new(1, 1)).unwrap();
        assert!(nu_sweep(&d, &SlabSpec::default(), &[4.0, 2.0], true, 1, 1).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
