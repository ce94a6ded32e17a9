//! File formats: per-chain trace CSVs, `summary.json`, the inclusion heatmap
//! CSV and per-predictor density CSVs. Every real number is written with 17
//! significant digits so values round-trip bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::gibbs::{Draw, TraceStore};
use crate::reporting::{Cutoffs, DensityEstimate, HeatmapMatrix, PosteriorSummary};

/// 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "sigma2", "q", "r2", "gamma2"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|i| format!("z_{i}")));
    h.extend((1..=k).map(|i| format!("beta_{i}")));
    h
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &TraceStore) -> Result<()> {
    writeln!(w, "{}", trace_header(trace.k()).join(","))?;
    let mut line = String::new();
    for d in trace.draws() {
        line.clear();
        line.push_str(&d.iter.to_string());
        for v in [d.sigma2, d.q, d.r2, d.gamma2] {
            line.push(',');
            line.push_str(&fmt17(v));
        }
        for &z in &d.z {
            line.push_str(if z { ",1" } else { ",0" });
        }
        for &b in &d.beta {
            line.push(',');
            line.push_str(&fmt17(b));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<TraceStore> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Trace(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 7 || (header.len() - 5) % 2 != 0 {
        return Err(Error::Trace(format!("unexpected header with {} columns", header.len())));
    }
    let k = (header.len() - 5) / 2;
    if header != trace_header(k) {
        return Err(Error::Trace("header does not match the trace layout".into()));
    }
    let mut trace = TraceStore::new(k);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Trace(e.to_string()))?;
        let line = row + 2;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Trace(format!("line {line}: bad value in column `{}`", header[j])))
        };
        let iter = rec
            .get(0)
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Trace(format!("line {line}: bad iteration number")))?;
        let z = (0..k)
            .map(|i| match rec.get(5 + i) {
                Some("0") => Ok(false),
                Some("1") => Ok(true),
                _ => Err(Error::Trace(format!("line {line}: indicator z_{} is not 0/1", i + 1))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let beta = (0..k).map(|i| num(5 + k + i)).collect::<Result<Vec<f64>>>()?;
        trace.push(Draw {
            iter,
            z,
            beta,
            sigma2: num(1)?,
            q: num(2)?,
            r2: num(3)?,
            gamma2: num(4)?,
            lambda2: Vec::new(),
        })?;
    }
    if trace.is_empty() {
        return Err(Error::Trace("trace has no draws".into()));
    }
    Ok(trace)
}

pub fn read_trace_path(path: &Path) -> Result<TraceStore> {
    let f = std::fs::File::open(path)?;
    read_trace_csv(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Trace(m) => Error::Trace(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn raw(v: f64) -> Box<RawValue> {
    RawValue::from_string(fmt17(v)).expect("finite numbers are valid JSON")
}

#[derive(Serialize)]
struct PredictorJson<'a> {
    name: &'a str,
    inc: Box<RawValue>,
    g0: Option<Box<RawValue>>,
    n_included: usize,
    density: &'static str,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    n_draws: usize,
    cutoffs: Cutoffs,
    mean_inc: Box<RawValue>,
    predictors: Vec<PredictorJson<'a>>,
}

pub fn summary_json(summary: &PosteriorSummary, names: &[String]) -> Result<String> {
    if names.len() != summary.k() {
        return Err(Error::InvalidData("summary and name list differ in length".into()));
    }
    let doc = SummaryJson {
        n_draws: summary.n_draws,
        cutoffs: summary.cutoffs,
        mean_inc: raw(summary.mean_inc()),
        predictors: (0..summary.k())
            .map(|i| PredictorJson {
                name: &names[i],
                inc: raw(summary.inc[i]),
                g0: summary.g0[i].map(raw),
                n_included: summary.n_included[i],
                density: match summary.density[i] {
                    DensityEstimate::Kernel { .. } => "kernel",
                    DensityEstimate::Histogram { .. } => "histogram",
                    DensityEstimate::Missing => "missing",
                },
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn write_heatmap_csv<W: Write>(mut w: W, h: &HeatmapMatrix) -> Result<()> {
    let mut header = vec!["model".to_string()];
    header.extend(h.col_labels.iter().map(|c| csv_field(c)));
    header.extend(["above_0.5", "above_0.75", "above_0.9"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for ((label, row), c) in h.row_labels.iter().zip(&h.values).zip(&h.cutoffs) {
        let mut fields = vec![csv_field(label)];
        fields.extend(row.iter().map(|&v| fmt17(v)));
        fields.extend([c.above_50, c.above_75, c.above_90].map(|n| n.to_string()));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes a density as CSV. Returns false (and writes nothing) when missing.
pub fn write_density_csv<W: Write>(mut w: W, d: &DensityEstimate) -> Result<bool> {
    match d {
        DensityEstimate::Kernel { grid, density, .. } => {
            writeln!(w, "beta,density")?;
            for (g, f) in grid.iter().zip(density) {
                writeln!(w, "{},{}", fmt17(*g), fmt17(*f))?;
            }
        }
        DensityEstimate::Histogram { edges, density } => {
            writeln!(w, "bin_start,bin_end,density")?;
            for (e, f) in edges.windows(2).zip(density) {
                writeln!(w, "{},{},{}", fmt17(e[0]), fmt17(e[1]), fmt17(*f))?;
            }
        }
        DensityEstimate::Missing => return Ok(false),
    }
    Ok(true)
}

/// File-system safe version of a predictor name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
