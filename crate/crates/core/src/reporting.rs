//! Posterior summaries: inclusion probabilities ("Inc"), the probability a
//! coefficient is positive given inclusion ("G0"), conditional coefficient
//! densities, and inclusion heatmap matrices across models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::ModelKey;
use crate::gibbs::TraceStore;

pub const CUTOFF_LEVELS: [f64; 3] = [0.5, 0.75, 0.9];
pub const DENSITY_GRID: usize = 512;
/// Below this many included draws the density falls back to a histogram.
pub const KERNEL_MIN_DRAWS: usize = 50;
pub const HISTOGRAM_BINS: usize = 10;

/// Number of predictors whose inclusion probability exceeds each cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub above_50: usize,
    pub above_75: usize,
    pub above_90: usize,
}

impl Cutoffs {
    pub fn from_inc(inc: &[f64]) -> Self {
        let count = |c: f64| inc.iter().filter(|&&p| p > c).count();
        Self {
            above_50: count(CUTOFF_LEVELS[0]),
            above_75: count(CUTOFF_LEVELS[1]),
            above_90: count(CUTOFF_LEVELS[2]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityEstimate {
    /// Gaussian KDE evaluated on a uniform grid.
    Kernel {
        bandwidth: f64,
        grid: Vec<f64>,
        density: Vec<f64>,
    },
    /// `edges` has one more entry than `density`.
    Histogram { edges: Vec<f64>, density: Vec<f64> },
    /// No included draws.
    Missing,
}

impl DensityEstimate {
    /// Total mass: trapezoid rule for kernels, bin areas for histograms.
    pub fn mass(&self) -> f64 {
        match self {
            DensityEstimate::Kernel { grid, density, .. } => trapezoid(grid, density),
            DensityEstimate::Histogram { edges, density } => edges
                .windows(2)
                .zip(density)
                .map(|(e, d)| (e[1] - e[0]) * d)
                .sum(),
            DensityEstimate::Missing => f64::NAN,
        }
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5).
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // all draws identical
        1e-3 * mean.abs().max(1.0) * n.powf(-0.2)
    }
}

/// Density of the included draws of one coefficient. Kernel mode needs at
/// least `KERNEL_MIN_DRAWS` draws; the kernel estimate is renormalized so its
/// trapezoid mass over the grid is one.
pub fn density_estimate(draws: &[f64], grid_size: usize) -> DensityEstimate {
    if draws.is_empty() {
        return DensityEstimate::Missing;
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if draws.len() < KERNEL_MIN_DRAWS {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let half = 5e-4 * lo.abs().max(1.0);
            (lo - half, hi + half)
        };
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &v in &sorted {
            let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
        let n = draws.len() as f64;
        return DensityEstimate::Histogram {
            edges: (0..=HISTOGRAM_BINS).map(|j| lo + j as f64 * width).collect(),
            density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        };
    }
    let h = silverman_bandwidth(&sorted);
    let grid_size = grid_size.max(2);
    let (g0, g1) = (lo - 3.0 * h, hi + 3.0 * h);
    let step = (g1 - g0) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|j| g0 + j as f64 * step).collect();
    let norm = 1.0 / (draws.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            // only draws within 8 bandwidths contribute above 1e-14
            let a = sorted.partition_point(|&v| v < g - 8.0 * h);
            let b = sorted.partition_point(|&v| v <= g + 8.0 * h);
            sorted[a..b]
                .iter()
                .map(|&v| {
                    let t = (g - v) / h;
                    (-0.5 * t * t).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    if mass > 0.0 {
        for d in density.iter_mut() {
            *d /= mass;
        }
    }
    DensityEstimate::Kernel { bandwidth: h, grid, density }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub inc: Vec<f64>,
    /// Missing for predictors never included.
    pub g0: Vec<Option<f64>>,
    pub n_included: Vec<usize>,
    pub density: Vec<DensityEstimate>,
    pub cutoffs: Cutoffs,
}

impl PosteriorSummary {
    pub fn k(&self) -> usize {
        self.inc.len()
    }

    pub fn mean_inc(&self) -> f64 {
        self.inc.iter().sum::<f64>() / self.inc.len() as f64
    }
}

pub fn inclusion_probabilities(trace: &TraceStore) -> Vec<f64> {
    let total = trace.len() as f64;
    (0..trace.k())
        .map(|i| trace.draws().iter().filter(|d| d.z[i]).count() as f64 / total)
        .collect()
}

pub fn summarize(trace: &TraceStore) -> Result<PosteriorSummary> {
    summarize_with_grid(trace, DENSITY_GRID)
}

pub fn summarize_with_grid(trace: &TraceStore, grid_size: usize) -> Result<PosteriorSummary> {
    if trace.is_empty() {
        return Err(Error::Trace("cannot summarize an empty trace".into()));
    }
    let inc = inclusion_probabilities(trace);
    let mut g0 = Vec::with_capacity(trace.k());
    let mut n_included = Vec::with_capacity(trace.k());
    let mut density = Vec::with_capacity(trace.k());
    for i in 0..trace.k() {
        let included: Vec<f64> = trace
            .draws()
            .iter()
            .filter(|d| d.z[i])
            .map(|d| d.beta[i])
            .collect();
        n_included.push(included.len());
        g0.push(if included.is_empty() {
            None
        } else {
            Some(included.iter().filter(|&&b| b > 0.0).count() as f64 / included.len() as f64)
        });
        density.push(density_estimate(&included, grid_size));
    }
    Ok(PosteriorSummary {
        n_draws: trace.len(),
        cutoffs: Cutoffs::from_inc(&inc),
        inc,
        g0,
        n_included,
        density,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowKey {
    Model(ModelKey),
    Dataset(String),
}

impl RowKey {
    pub fn label(&self) -> String {
        match self {
            RowKey::Model(m) => m.label(),
            RowKey::Dataset(s) => s.clone(),
        }
    }

    fn order(&self) -> (u8, f64) {
        match self {
            RowKey::Model(ModelKey::StudentT { nu }) => (0, *nu),
            RowKey::Model(ModelKey::Gaussian) => (1, 0.0),
            RowKey::Dataset(_) => (2, 0.0),
        }
    }
}

/// Rows are models or datasets, columns are predictors, values are Inc.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub cutoffs: Vec<Cutoffs>,
}

/// Orders rows by ascending nu, then the Gaussian slab, then datasets in
/// their given order.
pub fn heatmap_matrix(rows: &[(RowKey, &PosteriorSummary)], col_labels: &[String]) -> Result<HeatmapMatrix> {
    let k = col_labels.len();
    if let Some((key, s)) = rows.iter().find(|(_, s)| s.k() != k) {
        return Err(Error::InvalidData(format!(
            "row `{}` has {} predictors, expected {k}",
            key.label(),
            s.k()
        )));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, va) = rows[a].0.order();
        let (tb, vb) = rows[b].0.order();
        ta.cmp(&tb).then(va.total_cmp(&vb)).then(a.cmp(&b))
    });
    Ok(HeatmapMatrix {
        row_labels: order.iter().map(|&r| rows[r].0.label()).collect(),
        col_labels: col_labels.to_vec(),
        values: order.iter().map(|&r| rows[r].1.inc.clone()).collect(),
        cutoffs: order.iter().map(|&r| rows[r].1.cutoffs).collect(),
    })
}
