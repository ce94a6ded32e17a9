//! Prior configuration and the closed-form prior algebra linking the slab
//! scale gamma^2 to the implied coefficient of determination R^2.

use serde::{Deserialize, Serialize};

use crate::data::VbarX;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SlabFamily {
    Gaussian,
    /// Student-t slab with fixed degrees of freedom, represented as a
    /// normal scale mixture with lambda^2 ~ IG(nu/2, nu/2).
    StudentT { nu: f64 },
}

impl SlabFamily {
    /// Ratio of the slab variance to sigma^2 gamma^2.
    pub fn variance_inflation(&self) -> f64 {
        match *self {
            SlabFamily::Gaussian => 1.0,
            SlabFamily::StudentT { nu } => nu / (nu - 2.0),
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match *self {
            SlabFamily::Gaussian => None,
            SlabFamily::StudentT { nu } => Some(nu),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SlabFamily::Gaussian => "gaussian".to_string(),
            SlabFamily::StudentT { nu } => format!("t{nu}"),
        }
    }
}

/// Prior on the residual variance. `Jeffreys` is p(sigma^2) ∝ 1/sigma^2;
/// the inverse-gamma option exists for prior-predictive checks, which need
/// a proper prior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sigma2Prior {
    #[default]
    Jeffreys,
    InverseGamma { shape: f64, rate: f64 },
}

impl Sigma2Prior {
    /// (shape, rate) of the prior kernel; Jeffreys is the (0, 0) limit.
    pub fn shape_rate(&self) -> (f64, f64) {
        match *self {
            Sigma2Prior::Jeffreys => (0.0, 0.0),
            Sigma2Prior::InverseGamma { shape, rate } => (shape, rate),
        }
    }

    pub fn is_proper(&self) -> bool {
        matches!(self, Sigma2Prior::InverseGamma { shape, rate } if *shape > 0.0 && *rate > 0.0)
    }
}

/// Full sampler configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub family: SlabFamily,
    pub grid_q: usize,
    pub grid_r2: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub sigma2_prior: Sigma2Prior,
}

impl Default for SlabSpec {
    fn default() -> Self {
        Self {
            family: SlabFamily::Gaussian,
            grid_q: 100,
            grid_r2: 100,
            n_iter: 22_000,
            n_burn: 2_000,
            thin: 10,
            seed: 0,
            sigma2_prior: Sigma2Prior::Jeffreys,
        }
    }
}

impl SlabSpec {
    pub fn validate(&self) -> Result<()> {
        if let SlabFamily::StudentT { nu } = self.family {
            if !(nu > 2.0) || !nu.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "Student-t slab needs finite nu > 2, got {nu}"
                )));
            }
        }
        if self.n_burn >= self.n_iter {
            return Err(Error::InvalidSpec(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.n_burn, self.n_iter
            )));
        }
        if self.thin < 1 {
            return Err(Error::InvalidSpec("thin must be at least 1".into()));
        }
        if self.grid_q < 2 || self.grid_r2 < 2 {
            return Err(Error::InvalidSpec("grid resolutions must be at least 2".into()));
        }
        if let Sigma2Prior::InverseGamma { shape, rate } = self.sigma2_prior {
            if !(shape > 0.0 && rate > 0.0) {
                return Err(Error::InvalidSpec("inverse-gamma sigma^2 prior needs positive shape and rate".into()));
            }
        }
        Ok(())
    }

    /// Number of stored draws per chain.
    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }
}

/// Cell midpoints of a uniform partition of (0, 1).
pub fn midpoint_grid(cells: usize) -> Vec<f64> {
    (0..cells).map(|j| (j as f64 + 0.5) / cells as f64).collect()
}

/// Inverts R^2 = q k gamma^2 vbar / (q k gamma^2 vbar + 1) for gamma^2.
pub fn gamma2_from_r2_q(r2: f64, q: f64, k: usize, vbar: VbarX) -> Result<f64> {
    if !(r2 > 0.0 && r2 < 1.0) {
        return Err(Error::Domain(format!("R^2 must lie in (0, 1), got {r2}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
    }
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    Ok(r2 / ((1.0 - r2) * q * k as f64 * vbar.value()))
}

pub fn r2_from_gamma2_q(gamma2: f64, q: f64, k: usize, vbar: VbarX) -> Result<f64> {
    if !(gamma2 > 0.0) || !gamma2.is_finite() {
        return Err(Error::Domain(format!("gamma^2 must be positive, got {gamma2}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
    }
    let a = q * k as f64 * gamma2 * vbar.value();
    Ok(a / (a + 1.0))
}

/// Zero-centered slab shapes with their scale parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlabShape {
    /// N(0, 1/lambda_r^2), the prior whose mode is ridge.
    Gaussian { lambda_r: f64 },
    /// Laplace(0, 2/lambda_l), the prior whose mode is lasso.
    Laplace { lambda_l: f64 },
    /// t_nu(0, scale2), scale2 = sigma^2 gamma^2.
    StudentT { nu: f64, scale2: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
}

pub fn slab_moments(shape: SlabShape) -> Moments {
    match shape {
        SlabShape::Gaussian { lambda_r } => Moments {
            mean: 0.0,
            variance: 1.0 / (lambda_r * lambda_r),
            excess_kurtosis: 0.0,
        },
        SlabShape::Laplace { lambda_l } => {
            let b = 2.0 / lambda_l;
            Moments {
                mean: 0.0,
                variance: 2.0 * b * b,
                excess_kurtosis: 3.0,
            }
        }
        SlabShape::StudentT { nu, scale2 } => Moments {
            mean: if nu > 1.0 { 0.0 } else { f64::NAN },
            variance: if nu > 2.0 {
                nu / (nu - 2.0) * scale2
            } else {
                f64::INFINITY
            },
            excess_kurtosis: if nu > 4.0 { 6.0 / (nu - 4.0) } else { f64::INFINITY },
        },
    }
}
