//! On-disk layout of a run directory and the manifest that makes it
//! reproducible.
//!
//! A run directory holds `trace_chain_<c>.csv` for every chain,
//! `summary.json`, `inclusion.csv`, one `density_<predictor>.csv` per
//! predictor with included draws, and `manifest.json`. A sweep directory
//! holds one run directory per model plus a combined `inclusion.csv`.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slabspike::experiments::{ModelKey, SimScenario};
use slabspike::export::{file_stem, read_trace_path, summary_json, write_density_csv, write_heatmap_csv, write_trace_csv};
use slabspike::reporting::{heatmap_matrix, HeatmapMatrix, RowKey};
use slabspike::{summarize, Error, PosteriorSummary, Result, SlabSpec, TraceStore};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const INCLUSION: &str = "inclusion.csv";
const TRACE_PREFIX: &str = "trace_chain_";

/// Where the data of a run came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputRecord {
    Csv {
        path: String,
        sha256: String,
        response: String,
        always_include: Vec<String>,
        standardize: bool,
    },
    Simulation { scenario: SimScenario },
}

/// Written next to every set of artifacts. Contains no timestamps or host
/// details so that identical runs produce identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: InputRecord,
    pub names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SlabSpec>,
    #[serde(default)]
    pub chains: usize,
    /// Extra command-specific settings.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub settings: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, input: InputRecord, names: &[String]) -> Self {
        Self {
            tool: "slabspike".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            input,
            names: names.to_vec(),
            model: None,
            spec: None,
            chains: 0,
            settings: serde_json::Value::Null,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(manifest)?;
    s.push('\n');
    fs::write(dir.join(MANIFEST), s)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))
}

pub fn write_traces(dir: &Path, traces: &[TraceStore]) -> Result<()> {
    for (c, t) in traces.iter().enumerate() {
        let mut w = create_file(&dir.join(format!("{TRACE_PREFIX}{c}.csv")))?;
        write_trace_csv(&mut w, t)?;
        w.flush()?;
    }
    Ok(())
}

/// Trace files of a run directory ordered by chain index. Chain indices
/// must be 0..m without gaps.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(idx) = name.strip_prefix(TRACE_PREFIX).and_then(|r| r.strip_suffix(".csv")) {
            let c = idx
                .parse::<usize>()
                .map_err(|_| Error::Trace(format!("unexpected trace file name `{name}`")))?;
            found.push((c, path));
        }
    }
    found.sort();
    if let Some((pos, (c, _))) = found.iter().enumerate().find(|(pos, (c, _))| pos != c) {
        return Err(Error::Trace(format!(
            "{}: trace chain {pos} missing (found chain {c})",
            dir.display()
        )));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn read_traces(dir: &Path) -> Result<Vec<TraceStore>> {
    trace_files(dir)?.iter().map(|p| read_trace_path(p)).collect()
}

/// Summarizes the pooled chains and writes `summary.json`, a one-row
/// `inclusion.csv` and the density files.
pub fn write_report(dir: &Path, traces: &[TraceStore], names: &[String], row: &RowKey) -> Result<PosteriorSummary> {
    let pooled = TraceStore::merge(traces)?;
    if pooled.k() != names.len() {
        return Err(Error::Trace(format!(
            "{}: traces have {} predictors but {} names are recorded",
            dir.display(),
            pooled.k(),
            names.len()
        )));
    }
    let summary = summarize(&pooled)?;
    fs::write(dir.join(SUMMARY), summary_json(&summary, names)?)?;
    write_heatmap(dir, &heatmap_matrix(&[(row.clone(), &summary)], names)?)?;
    for (name, d) in density_file_names(names).iter().zip(&summary.density) {
        let path = dir.join(name);
        let mut buf = Vec::new();
        if write_density_csv(&mut buf, d)? {
            fs::write(&path, buf)?;
        } else if path.exists() {
            // a stale file from an earlier run would contradict summary.json
            fs::remove_file(&path)?;
        }
    }
    Ok(summary)
}

pub fn write_heatmap(dir: &Path, h: &HeatmapMatrix) -> Result<()> {
    let mut w = create_file(&dir.join(INCLUSION))?;
    write_heatmap_csv(&mut w, h)?;
    w.flush()?;
    Ok(())
}

/// `density_<stem>.csv` per predictor; stems that collide after sanitizing
/// get the 1-based predictor index appended.
pub fn density_file_names(names: &[String]) -> Vec<String> {
    let stems: Vec<String> = names.iter().map(|n| file_stem(n)).collect();
    let mut seen = HashSet::new();
    let dup: HashSet<&String> = stems.iter().filter(|s| !seen.insert(*s)).collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if dup.contains(s) {
                format!("density_{s}_{}.csv", i + 1)
            } else {
                format!("density_{s}.csv")
            }
        })
        .collect()
}

pub fn default_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_names_disambiguate_collisions() {
        let names: Vec<String> = ["a:b", "a_b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            density_file_names(&names),
            vec!["density_a_b_1.csv", "density_a_b_2.csv", "density_c.csv"]
        );
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn trace_files_reject_gaps() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("trace_chain_0.csv"), "").unwrap();
        fs::write(dir.path().join("trace_chain_2.csv"), "").unwrap();
        assert!(matches!(trace_files(dir.path()), Err(Error::Trace(_))));
    }
}
