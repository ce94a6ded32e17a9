//! Systematic-scan Gibbs sampler for the spike-and-slab regression.
//!
//! One sweep runs, in order:
//!
//! 1. `update_z`: collapsed single-site flips of every z_i, beta, phi and
//!    sigma^2 integrated out, conditional on (q, gamma^2, lambda^2);
//! 2. `update_sigma2_collapsed`: sigma^2 | z, gamma^2, lambda^2, y with beta
//!    and phi still integrated out;
//! 3. `update_beta_phi`: joint Gaussian draw of (phi, beta_A);
//! 4. `update_sigma2`: full conditional inverse-gamma draw;
//! 5. `update_lambda2`: Student-t latent scales (no-op for the Gaussian slab);
//! 6. `update_q_r2`: joint draw of (q, R^2) on the midpoint grid, followed by
//!    the deterministic gamma^2 refresh.
//!
//! Step 2 is required for the partially collapsed scheme to keep the
//! posterior invariant: step 1 marginalizes sigma^2, so the sigma^2 carried
//! over from the previous sweep is no longer a draw from its conditional.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::data::{Dataset, VbarX};
use crate::error::{Error, Result};
use crate::marginal::{Factor, MarginalModel};
use crate::prior::{gamma2_from_r2_q, midpoint_grid, SlabFamily, SlabSpec};

/// Random number generator used by every chain. ChaCha8 is portable, so a
/// seed reproduces the same stream on every platform.
pub type ChainRng = ChaCha8Rng;

/// Full parameter state after one sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub z: Vec<bool>,
    pub beta: DVector<f64>,
    pub phi: DVector<f64>,
    pub sigma2: f64,
    pub q: f64,
    pub r2: f64,
    pub gamma2: f64,
    pub lambda2: DVector<f64>,
}

impl ChainState {
    pub fn n_active(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }

    /// Checks the structural invariants of a stored state.
    pub fn check_invariants(&self, vbar: VbarX, family: &SlabFamily) -> std::result::Result<(), String> {
        let k = self.z.len();
        for i in 0..k {
            if (self.beta[i] == 0.0) == self.z[i] {
                // an included coefficient drawn as exactly 0.0 has probability zero
                return Err(format!("beta_{i} = {} inconsistent with z_{i} = {}", self.beta[i], self.z[i]));
            }
        }
        if !(self.sigma2 > 0.0) {
            return Err(format!("sigma2 = {} is not positive", self.sigma2));
        }
        if !(self.q > 0.0 && self.q < 1.0) || !(self.r2 > 0.0 && self.r2 < 1.0) {
            return Err(format!("q = {} or R^2 = {} outside (0, 1)", self.q, self.r2));
        }
        let implied = gamma2_from_r2_q(self.r2, self.q, k, vbar).map_err(|e| e.to_string())?;
        if ((self.gamma2 - implied) / implied).abs() > 1e-12 {
            return Err(format!("gamma2 = {} but (q, R^2) imply {implied}", self.gamma2));
        }
        if matches!(family, SlabFamily::Gaussian) && self.lambda2.iter().any(|&l| l != 1.0) {
            return Err("Gaussian slab with lambda^2 != 1".into());
        }
        if self.lambda2.iter().any(|&l| !(l > 0.0)) {
            return Err("non-positive lambda^2".into());
        }
        Ok(())
    }
}

/// One stored post-burn-in draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    /// 1-based sweep index the draw was taken at.
    pub iter: usize,
    pub z: Vec<bool>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub q: f64,
    pub r2: f64,
    pub gamma2: f64,
    /// Latent scales. Empty when the trace was loaded from a CSV export,
    /// which does not carry them.
    pub lambda2: Vec<f64>,
}

impl Draw {
    fn from_state(iter: usize, s: &ChainState) -> Self {
        Self {
            iter,
            z: s.z.clone(),
            beta: s.beta.iter().copied().collect(),
            sigma2: s.sigma2,
            q: s.q,
            r2: s.r2,
            gamma2: s.gamma2,
            lambda2: s.lambda2.iter().copied().collect(),
        }
    }

    pub fn n_active(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }
}

/// Append-only store of thinned draws.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStore {
    k: usize,
    draws: Vec<Draw>,
}

impl TraceStore {
    pub fn new(k: usize) -> Self {
        Self { k, draws: Vec::new() }
    }

    pub fn push(&mut self, draw: Draw) -> Result<()> {
        if draw.z.len() != self.k || draw.beta.len() != self.k {
            return Err(Error::Trace(format!(
                "draw has {} indicators, store expects {}",
                draw.z.len(),
                self.k
            )));
        }
        if let Some(prev) = self.draws.last() {
            if draw.iter <= prev.iter {
                return Err(Error::Trace(format!("iteration {} is not after {}", draw.iter, prev.iter)));
            }
        }
        self.draws.push(draw);
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Pools chains in the given order. Iteration numbers are kept as
    /// recorded, so the result is a pooled sample rather than a chain.
    pub fn merge(stores: &[TraceStore]) -> Result<TraceStore> {
        let k = stores
            .first()
            .map(|s| s.k)
            .ok_or_else(|| Error::Trace("no traces to merge".into()))?;
        if stores.iter().any(|s| s.k != k) {
            return Err(Error::Trace("traces disagree on the number of predictors".into()));
        }
        Ok(TraceStore {
            k,
            draws: stores.iter().flat_map(|s| s.draws.iter().cloned()).collect(),
        })
    }
}

fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Domain(format!("inverse-gamma shape {shape}: {e}")))?;
    Ok(rate / g.sample(rng))
}

/// Draws lambda^2 ~ IG(nu/2, nu/2), the Student-t mixing prior.
pub fn draw_lambda2_prior<R: Rng + ?Sized>(rng: &mut R, nu: f64) -> f64 {
    let g = Gamma::new(nu / 2.0, 1.0).expect("nu > 0");
    (nu / 2.0) / g.sample(rng)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Precomputed data products and grids for one chain.
#[derive(Clone, Debug)]
pub struct Sampler {
    spec: SlabSpec,
    vbar: VbarX,
    model: MarginalModel,
    y: DVector<f64>,
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    xtx: DMatrix<f64>,
    utx: DMatrix<f64>,
    utu: DMatrix<f64>,
    xty: DVector<f64>,
    uty: DVector<f64>,
    grid_q: Vec<f64>,
    grid_r2: Vec<f64>,
    corrupt_sigma2_shape: bool,
}

impl Sampler {
    pub fn new(data: &Dataset, spec: &SlabSpec) -> Result<Self> {
        spec.validate()?;
        let model = MarginalModel::from_dataset(data, spec.sigma2_prior)?;
        let (x, u, y) = (data.x().clone(), data.u().clone(), data.y().clone());
        Ok(Self {
            spec: spec.clone(),
            vbar: VbarX::compute(data, &spec.family),
            model,
            xtx: x.transpose() * &x,
            utx: u.transpose() * &x,
            utu: u.transpose() * &u,
            xty: x.transpose() * &y,
            uty: u.transpose() * &y,
            grid_q: midpoint_grid(spec.grid_q),
            grid_r2: midpoint_grid(spec.grid_r2),
            y,
            x,
            u,
            corrupt_sigma2_shape: false,
        })
    }

    /// Swaps in a new response vector (prior-predictive simulation).
    pub fn set_response(&mut self, y: DVector<f64>) {
        self.model.set_response(&y);
        self.xty = self.x.transpose() * &y;
        self.uty = self.u.transpose() * &y;
        self.y = y;
    }

    /// Mutation hook for sampler-correctness checks: doubles the shape of the
    /// full-conditional sigma^2 update.
    #[doc(hidden)]
    pub fn corrupt_sigma2_shape(&mut self, on: bool) {
        self.corrupt_sigma2_shape = on;
    }

    pub fn spec(&self) -> &SlabSpec {
        &self.spec
    }

    pub fn vbar(&self) -> VbarX {
        self.vbar
    }

    pub fn grid_q(&self) -> &[f64] {
        &self.grid_q
    }

    pub fn grid_r2(&self) -> &[f64] {
        &self.grid_r2
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn gamma2(&self, q: f64, r2: f64) -> Result<f64> {
        gamma2_from_r2_q(r2, q, self.k(), self.vbar)
    }

    /// z = 0, phi = 0, sigma^2 = 1, lambda^2 = 1, (q, R^2) at the grid medians.
    pub fn initial_state(&self) -> ChainState {
        let k = self.k();
        let q = self.grid_q[self.grid_q.len() / 2];
        let r2 = self.grid_r2[self.grid_r2.len() / 2];
        ChainState {
            z: vec![false; k],
            beta: DVector::zeros(k),
            phi: DVector::zeros(self.u.ncols()),
            sigma2: 1.0,
            q,
            r2,
            gamma2: self.gamma2(q, r2).expect("grid midpoints are interior"),
            lambda2: DVector::from_element(k, 1.0),
        }
    }

    fn current_factor(&self, state: &ChainState) -> Result<Factor> {
        let active = crate::marginal::ActiveSet::from_inclusion(&state.z, state.lambda2.as_slice());
        self.model.factor(&active, state.gamma2)
    }

    /// Resamples every z_i in ascending order from its collapsed conditional.
    /// beta is left stale; `update_beta_phi` refreshes it.
    pub fn update_z<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        self.update_z_factor(state, rng).map(|_| ())
    }

    fn update_z_factor<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<Factor> {
        let prior_log_odds = state.q.ln() - (1.0 - state.q).ln();
        let mut factor = self.current_factor(state)?;
        for i in 0..self.k() {
            let slab_var = state.gamma2 * state.lambda2[i];
            let d_inv = 1.0 / slab_var;
            let (without, kept) = if state.z[i] {
                (factor.remove(&self.model, i)?, Some(factor))
            } else {
                (factor, None)
            };
            let (log_bf, with) = match without.border(&self.model, i, d_inv) {
                Some(b) => (without.log_bf(&self.model, &b, slab_var), None),
                None => {
                    let with = without.insert(&self.model, i, d_inv)?;
                    (with.log_marginal(&self.model) - without.log_marginal(&self.model), Some(with))
                }
            };
            let p = sigmoid(prior_log_odds + log_bf);
            let include = rng.random::<f64>() < p;
            factor = if include {
                match (kept, with) {
                    (Some(k), _) => k,
                    (None, Some(w)) => w,
                    (None, None) => without.insert(&self.model, i, d_inv)?,
                }
            } else {
                without
            };
            state.z[i] = include;
        }
        Ok(factor)
    }

    /// sigma^2 | z, gamma^2, lambda^2, y with phi and beta integrated out.
    pub fn update_sigma2_collapsed<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let factor = self.current_factor(state)?;
        self.draw_sigma2_collapsed(state, &factor, rng)
    }

    fn draw_sigma2_collapsed<R: Rng + ?Sized>(&self, state: &mut ChainState, factor: &Factor, rng: &mut R) -> Result<()> {
        let (shape, rate) = self.model.collapsed_sigma2_params(factor.ssr());
        state.sigma2 = inverse_gamma(rng, shape, rate).map_err(|_| Error::Degenerate {
            active: factor.indices().to_vec(),
            reason: format!("collapsed sigma^2 conditional IG({shape}, {rate}) is improper"),
        })?;
        Ok(())
    }

    /// Joint draw of (phi, beta_A) from their Gaussian conditional; inactive
    /// coefficients are set to zero.
    pub fn update_beta_phi<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let l = self.u.ncols();
        let active: Vec<usize> = (0..self.k()).filter(|&i| state.z[i]).collect();
        let m = l + active.len();
        state.beta.fill(0.0);
        if m == 0 {
            return Ok(());
        }
        let mut prec = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        prec.view_mut((0, 0), (l, l)).copy_from(&self.utu);
        for a in 0..l {
            rhs[a] = self.uty[a];
            for (jj, &j) in active.iter().enumerate() {
                prec[(a, l + jj)] = self.utx[(a, j)];
                prec[(l + jj, a)] = self.utx[(a, j)];
            }
        }
        for (ii, &i) in active.iter().enumerate() {
            rhs[l + ii] = self.xty[i];
            for (jj, &j) in active.iter().enumerate() {
                prec[(l + ii, l + jj)] = self.xtx[(i, j)];
            }
            prec[(l + ii, l + ii)] += 1.0 / (state.gamma2 * state.lambda2[i]);
        }
        let chol = match Cholesky::new(prec.clone()) {
            Some(c) => c,
            None => {
                let jitter = 1e-10 * prec.trace() / m as f64;
                for j in 0..m {
                    prec[(j, j)] += jitter;
                }
                Cholesky::new(prec).ok_or_else(|| Error::Degenerate {
                    active: active.clone(),
                    reason: "coefficient precision matrix is not positive definite".into(),
                })?
            }
        };
        let mean = chol.solve(&rhs);
        let xi = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = chol
            .l_dirty()
            .tr_solve_lower_triangular(&xi)
            .ok_or_else(|| Error::Degenerate {
                active: active.clone(),
                reason: "triangular solve failed".into(),
            })?;
        let theta = mean + noise * state.sigma2.sqrt();
        for a in 0..l {
            state.phi[a] = theta[a];
        }
        for (ii, &i) in active.iter().enumerate() {
            state.beta[i] = theta[l + ii];
        }
        Ok(())
    }

    /// sigma^2 from IG((n + s)/2 + a0, (RSS + sum_A beta_i^2/(gamma^2 lambda_i^2))/2 + b0).
    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let mut resid = self.y.clone();
        if self.u.ncols() > 0 {
            resid -= &self.u * &state.phi;
        }
        let mut penalty = 0.0;
        let mut s = 0usize;
        for i in 0..self.k() {
            if state.z[i] {
                resid.axpy(-state.beta[i], &self.x.column(i), 1.0);
                penalty += state.beta[i] * state.beta[i] / (state.gamma2 * state.lambda2[i]);
                s += 1;
            }
        }
        let rss = resid.dot(&resid);
        let (a0, b0) = self.spec.sigma2_prior.shape_rate();
        let mut shape = (self.y.len() + s) as f64 / 2.0 + a0;
        if self.corrupt_sigma2_shape {
            shape *= 2.0;
        }
        let rate = (rss + penalty) / 2.0 + b0;
        assert!(rate > 0.0, "sigma^2 rate must be positive, got {rate}");
        state.sigma2 = inverse_gamma(rng, shape, rate)?;
        Ok(())
    }

    /// Student-t latent scales. Active: IG((nu+1)/2, (nu + beta_i^2/(sigma^2 gamma^2))/2);
    /// inactive: refreshed from the prior IG(nu/2, nu/2). No-op for the Gaussian slab.
    pub fn update_lambda2<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let SlabFamily::StudentT { nu } = self.spec.family else {
            return Ok(());
        };
        for i in 0..self.k() {
            state.lambda2[i] = if state.z[i] {
                let b = state.beta[i];
                inverse_gamma(rng, (nu + 1.0) / 2.0, (nu + b * b / (state.sigma2 * state.gamma2)) / 2.0)?
            } else {
                draw_lambda2_prior(rng, nu)
            };
        }
        Ok(())
    }

    /// Unnormalized log weights of the (q, R^2) grid, row-major over q.
    pub fn q_r2_log_weights(&self, state: &ChainState) -> Vec<f64> {
        let k = self.k();
        let s = state.n_active();
        let sf = s as f64;
        let kv = k as f64 * self.vbar.value();
        // S = sum_A beta_i^2 / (sigma^2 lambda_i^2); the density term is -S / (2 gamma^2)
        let big_s: f64 = (0..k)
            .filter(|&i| state.z[i])
            .map(|i| state.beta[i] * state.beta[i] / (state.sigma2 * state.lambda2[i]))
            .sum();
        // log gamma^2 = logit(r) - log q - log(kv); 1/gamma^2 = q kv (1 - r)/r
        let r_terms: Vec<(f64, f64)> = self
            .grid_r2
            .iter()
            .map(|&r| (-0.5 * sf * (r.ln() - (1.0 - r).ln()), (1.0 - r) / r))
            .collect();
        let mut out = Vec::with_capacity(self.grid_q.len() * self.grid_r2.len());
        for &q in &self.grid_q {
            let a = sf * q.ln() + (k - s) as f64 * (1.0 - q).ln() + 0.5 * sf * (q.ln() + kv.ln());
            let c = 0.5 * big_s * kv * q;
            for &(b, odds) in &r_terms {
                out.push(a + b - c * odds);
            }
        }
        out
    }

    /// Joint (q, R^2) draw on the midpoint grid, then the gamma^2 refresh.
    pub fn update_q_r2<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let mut w = self.q_r2_log_weights(state);
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in w.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        assert!(total > 0.0 && total.is_finite(), "grid weights degenerate");
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = w.len() - 1;
        for (idx, v) in w.iter().enumerate() {
            acc += v;
            if acc > target {
                pick = idx;
                break;
            }
        }
        let nr = self.grid_r2.len();
        state.q = self.grid_q[pick / nr];
        state.r2 = self.grid_r2[pick % nr];
        state.gamma2 = self.gamma2(state.q, state.r2)?;
        Ok(())
    }

    /// One full sweep in the documented order.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let factor = self.update_z_factor(state, rng)?;
        self.draw_sigma2_collapsed(state, &factor, rng)?;
        self.update_beta_phi(state, rng)?;
        self.update_sigma2(state, rng)?;
        self.update_lambda2(state, rng)?;
        self.update_q_r2(state, rng)
    }

    /// Runs one chain from the initial state with the given seed.
    pub fn run(&self, seed: u64) -> Result<TraceStore> {
        let spec = &self.spec;
        let mut rng = ChainRng::seed_from_u64(seed);
        let mut state = self.initial_state();
        let mut trace = TraceStore::new(self.k());
        for it in 1..=spec.n_iter {
            self.sweep(&mut state, &mut rng).map_err(|e| Error::Sweep {
                sweep: it,
                source: Box::new(e),
            })?;
            if it > spec.n_burn && (it - spec.n_burn) % spec.thin == 0 {
                debug_assert_eq!(state.check_invariants(self.vbar, &spec.family), Ok(()));
                trace.push(Draw::from_state(it, &state))?;
            }
        }
        Ok(trace)
    }
}

/// Runs a single chain seeded with `spec.seed`.
pub fn run_chain(data: &Dataset, spec: &SlabSpec) -> Result<TraceStore> {
    Sampler::new(data, spec)?.run(spec.seed)
}

/// Seed of chain `index` derived from a base seed.
pub fn chain_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Runs `chains` independent chains on up to `threads` worker threads.
/// Chain c is seeded with `spec.seed + c`, so results do not depend on the
/// thread count.
pub fn run_chains(data: &Dataset, spec: &SlabSpec, chains: usize, threads: usize) -> Result<Vec<TraceStore>> {
    let sampler = Sampler::new(data, spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..chains)
            .into_par_iter()
            .map(|c| sampler.run(chain_seed(spec.seed, c)))
            .collect()
    })
}
