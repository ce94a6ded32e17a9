//! Regression datasets: response, candidate predictors and always-included
//! predictors, plus the moments needed to undo standardization.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::SlabFamily;

/// Original location and scale of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMoments {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y: ColumnMoments,
    pub x: Vec<ColumnMoments>,
    pub u: Vec<ColumnMoments>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    response: String,
    names: Vec<String>,
    always_names: Vec<String>,
    standardization: Option<Standardization>,
}

/// Sample mean and standard deviation (denominator n - 1).
pub fn sample_moments(values: &[f64]) -> ColumnMoments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    ColumnMoments {
        mean,
        sd: (ss / (n - 1.0)).sqrt(),
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn standardize_column(values: &mut [f64], name: &str) -> Result<ColumnMoments> {
    if is_constant(values) {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    let m = sample_moments(values);
    if !(m.sd > 0.0) || !m.sd.is_finite() {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    for v in values.iter_mut() {
        *v = (*v - m.mean) / m.sd;
    }
    Ok(m)
}

impl Dataset {
    /// Builds an unstandardized dataset.
    ///
    /// Requires n >= 2, k >= 1, l < n, finite entries and no constant
    /// candidate predictor. Always-included columns may be constant (an
    /// intercept), which is only meaningful when the data are not
    /// standardized afterwards.
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        u: DMatrix<f64>,
        response: impl Into<String>,
        names: Vec<String>,
        always_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {n}")));
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidData("need at least one candidate predictor".into()));
        }
        if x.nrows() != n || u.nrows() != n {
            return Err(Error::InvalidData(format!(
                "row mismatch: y has {n}, X has {}, U has {}",
                x.nrows(),
                u.nrows()
            )));
        }
        if u.ncols() >= n {
            return Err(Error::InvalidData(format!(
                "{} always-included columns leave no residual degrees of freedom with n = {n}",
                u.ncols()
            )));
        }
        if names.len() != x.ncols() || always_names.len() != u.ncols() {
            return Err(Error::InvalidData("column name count does not match matrix width".into()));
        }
        if y.iter().chain(x.iter()).chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        for (j, name) in names.iter().enumerate() {
            if is_constant(x.column(j).as_slice()) {
                return Err(Error::ConstantColumn(name.clone()));
            }
        }
        Ok(Self {
            y,
            x,
            u,
            response: response.into(),
            names,
            always_names,
            standardization: None,
        })
    }

    /// Convenience constructor with generated names `x1..xk` and no U.
    pub fn from_xy(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let n = y.len();
        Self::new(y, x, DMatrix::zeros(n, 0), "y", names, Vec::new())
    }

    /// A dataset with zero observations: the sampler then explores the prior.
    /// Only meaningful together with a proper sigma^2 prior.
    pub fn prior_only(k: usize) -> Self {
        Self {
            y: DVector::zeros(0),
            x: DMatrix::zeros(0, k),
            u: DMatrix::zeros(0, 0),
            response: "y".into(),
            names: (1..=k).map(|j| format!("x{j}")).collect(),
            always_names: Vec::new(),
            standardization: None,
        }
    }

    /// Centers and scales y and every column of X and U to mean 0 and
    /// sample standard deviation 1. Moments are composed with any earlier
    /// standardization so the metadata always refers to the raw data.
    pub fn standardize(mut self) -> Result<Self> {
        let y_m = standardize_column(self.y.as_mut_slice(), &self.response)?;
        let mut x_m = Vec::with_capacity(self.x.ncols());
        for j in 0..self.x.ncols() {
            let mut col = self.x.column_mut(j);
            x_m.push(standardize_column(col.as_mut_slice(), &self.names[j])?);
        }
        let mut u_m = Vec::with_capacity(self.u.ncols());
        for j in 0..self.u.ncols() {
            let mut col = self.u.column_mut(j);
            u_m.push(standardize_column(col.as_mut_slice(), &self.always_names[j])?);
        }
        let compose = |prev: Option<&ColumnMoments>, new: ColumnMoments| match prev {
            Some(p) => ColumnMoments {
                mean: p.mean + p.sd * new.mean,
                sd: p.sd * new.sd,
            },
            None => new,
        };
        let prev = self.standardization.take();
        self.standardization = Some(Standardization {
            y: compose(prev.as_ref().map(|s| &s.y), y_m),
            x: x_m
                .into_iter()
                .enumerate()
                .map(|(j, m)| compose(prev.as_ref().map(|s| &s.x[j]), m))
                .collect(),
            u: u_m
                .into_iter()
                .enumerate()
                .map(|(j, m)| compose(prev.as_ref().map(|s| &s.u[j]), m))
                .collect(),
        });
        Ok(self)
    }

    /// Appends candidate predictors. Existing columns are copied verbatim.
    pub fn with_extra_predictors(
        &self,
        columns: DMatrix<f64>,
        names: Vec<String>,
        moments: Option<Vec<ColumnMoments>>,
    ) -> Result<Self> {
        if columns.nrows() != self.n() || columns.ncols() != names.len() {
            return Err(Error::InvalidData("extra predictor shape mismatch".into()));
        }
        let k = self.k();
        let extra = columns.ncols();
        let mut x = DMatrix::zeros(self.n(), k + extra);
        x.columns_mut(0, k).copy_from(&self.x);
        x.columns_mut(k, extra).copy_from(&columns);
        let mut all_names = self.names.clone();
        all_names.extend(names);
        let standardization = match (&self.standardization, moments) {
            (Some(s), Some(m)) => {
                let mut s = s.clone();
                s.x.extend(m);
                Some(s)
            }
            _ => None,
        };
        Ok(Self {
            y: self.y.clone(),
            x,
            u: self.u.clone(),
            response: self.response.clone(),
            names: all_names,
            always_names: self.always_names.clone(),
            standardization,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn l(&self) -> usize {
        self.u.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn response_name(&self) -> &str {
        &self.response
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn always_names(&self) -> &[String] {
        &self.always_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Average sample variance of the candidate predictors, before any
    /// slab-family rescaling.
    pub fn mean_predictor_variance(&self) -> f64 {
        if self.n() < 2 {
            return 1.0;
        }
        let total: f64 = (0..self.k())
            .map(|j| {
                let sd = sample_moments(self.x.column(j).as_slice()).sd;
                sd * sd
            })
            .sum();
        total / self.k() as f64
    }
}

/// Average predictor variance entering the R^2 link, rescaled by
/// nu / (nu - 2) under a Student-t slab.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VbarX(f64);

impl VbarX {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("vbar must be positive and finite, got {value}")))
        }
    }

    pub fn compute(data: &Dataset, family: &SlabFamily) -> Self {
        Self(data.mean_predictor_variance() * family.variance_inflation())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Column roles when reading a CSV file.
#[derive(Clone, Debug, Default)]
pub struct CsvLayout {
    pub response: String,
    pub always_include: Vec<String>,
}

/// Reads a headered CSV. The response column and always-included columns are
/// selected by name; every other column becomes a candidate predictor.
/// Missing or non-numeric cells are rejected with their line number.
pub fn read_csv<R: Read>(reader: R, layout: &CsvLayout) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(&layout.response)?;
    let u_idx = layout
        .always_include
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;
    if u_idx.contains(&y_idx) {
        return Err(Error::InvalidData(format!(
            "response `{}` cannot also be always-included",
            layout.response
        )));
    }
    let x_idx: Vec<usize> = (0..header.len())
        .filter(|j| *j != y_idx && !u_idx.contains(j))
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    return Err(Error::Csv {
                        line,
                        message: format!("missing value in column `{}`", header[j]),
                    });
                }
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Csv {
                        line,
                        message: format!("non-numeric value `{cell}` in column `{}`", header[j]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[y_idx]));
    let x = DMatrix::from_fn(n, x_idx.len(), |i, j| rows[i][x_idx[j]]);
    let u = DMatrix::from_fn(n, u_idx.len(), |i, j| rows[i][u_idx[j]]);
    Dataset::new(
        y,
        x,
        u,
        layout.response.clone(),
        x_idx.iter().map(|&j| header[j].clone()).collect(),
        layout.always_include.clone(),
    )
}

pub fn read_csv_path(path: &Path, layout: &CsvLayout) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), layout)
}
