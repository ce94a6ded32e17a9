//! Spike-and-slab Bayesian linear regression with Gaussian and Student-t
//! slabs, an R^2-induced hyperprior on the slab scale, and the experiment
//! drivers used to study how inclusion probabilities react to the prior.

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiments;
pub mod export;
pub mod geweke;
pub mod gibbs;
pub mod marginal;
pub mod prior;
pub mod reporting;

pub use data::{read_csv, read_csv_path, CsvLayout, Dataset, VbarX};
pub use error::{Error, Result};
pub use gibbs::{run_chain, run_chains, ChainState, Draw, Sampler, TraceStore};
pub use marginal::{log_bayes_factor, log_marginal, ActiveSet, MarginalModel};
pub use prior::{gamma2_from_r2_q, r2_from_gamma2_q, slab_moments, Sigma2Prior, SlabFamily, SlabSpec};
pub use reporting::{summarize, PosteriorSummary};
