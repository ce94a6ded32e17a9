use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use slabspike::baselines::{lasso_fit, ridge_fit, PenaltySpec};
use slabspike::experiments::{inject_random, injection_study, nu_sweep, simulate_dataset, ModelKey, SimScenario};
use slabspike::export::fmt17;
use slabspike::geweke::{geweke_joint_test_with, Mutation, PASS_THRESHOLD};
use slabspike::reporting::{heatmap_matrix, RowKey};
use slabspike::{read_csv, run_chains, CsvLayout, Dataset, Error, PosteriorSummary, Result, SlabFamily, SlabSpec, TraceStore};

use crate::artifacts::{
    create_file, default_names, read_manifest, read_traces, sha256_hex, trace_files, write_heatmap, write_manifest,
    write_report, write_traces, InputRecord, Manifest, MANIFEST,
};
use crate::{
    BaselineArgs, DataArgs, FitArgs, GewekeArgs, InjectArgs, MutationArg, ReportArgs, SimArgs, SimulateArgs, SweepArgs,
};

pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn scenario(s: u32, sim: &SimArgs) -> SimScenario {
    SimScenario {
        s,
        n: sim.n,
        k: sim.k,
        beta_true: sim.beta.clone(),
        sigma_step: sim.sigma_step,
        seed: sim.sim_seed,
    }
}

fn load(a: &DataArgs) -> Result<(Dataset, InputRecord)> {
    if let Some(s) = a.scenario {
        let scenario = scenario(s, &a.sim);
        let data = simulate_dataset(&scenario)?;
        return Ok((data, InputRecord::Simulation { scenario }));
    }
    let (Some(path), Some(response)) = (&a.input, &a.response) else {
        return Err(Error::InvalidData("--input and --response are required without --scenario".into()));
    };
    let bytes = fs::read(path).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    let layout = CsvLayout {
        response: response.clone(),
        always_include: a.always_include.clone(),
    };
    let mut data = read_csv(bytes.as_slice(), &layout)?;
    if !a.no_standardize {
        data = data.standardize()?;
    }
    Ok((
        data,
        InputRecord::Csv {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            response: response.clone(),
            always_include: a.always_include.clone(),
            standardize: !a.no_standardize,
        },
    ))
}

fn model_key(family: SlabFamily) -> ModelKey {
    match family {
        SlabFamily::Gaussian => ModelKey::Gaussian,
        SlabFamily::StudentT { nu } => ModelKey::StudentT { nu },
    }
}

/// Manifest of a single-file output lives next to it as `<file>.manifest.json`.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn write_sidecar(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(manifest)?;
    s.push('\n');
    fs::write(sidecar(path), s)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Response, always-included columns, then candidates, in the current units.
fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let mut header = vec![data.response_name().to_string()];
    header.extend(data.always_names().iter().cloned());
    header.extend(data.names().iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..data.n() {
        let mut row = vec![fmt17(data.y()[i])];
        row.extend(data.u().row(i).iter().map(|&v| fmt17(v)));
        row.extend(data.x().row(i).iter().map(|&v| fmt17(v)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_run(
    dir: &Path,
    command: &str,
    input: InputRecord,
    names: &[String],
    spec: &SlabSpec,
    chains: usize,
    key: ModelKey,
    traces: &[TraceStore],
) -> Result<PosteriorSummary> {
    fs::create_dir_all(dir)?;
    write_traces(dir, traces)?;
    let summary = write_report(dir, traces, names, &RowKey::Model(key.clone()))?;
    let mut manifest = Manifest::new(command, input, names);
    manifest.model = Some(key);
    manifest.spec = Some(spec.clone());
    manifest.chains = chains;
    write_manifest(dir, &manifest)?;
    Ok(summary)
}

fn print_summary(summary: &PosteriorSummary, names: &[String]) {
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(9);
    println!("{:<width$}  {:>6}  {:>6}", "predictor", "inc", "g0");
    for (i, name) in names.iter().enumerate() {
        let g0 = summary.g0[i].map_or("-".to_string(), |g| format!("{g:.4}"));
        println!("{name:<width$}  {:>6.4}  {g0:>6}", summary.inc[i]);
    }
    let c = summary.cutoffs;
    println!(
        "draws {}, mean inc {:.4}, above 0.5/0.75/0.9: {}/{}/{}",
        summary.n_draws,
        summary.mean_inc(),
        c.above_50,
        c.above_75,
        c.above_90
    );
}

pub fn fit(a: &FitArgs) -> Result<u8> {
    let spec = a.schedule.spec(a.family.family())?;
    let (data, input) = load(&a.data)?;
    let traces = run_chains(&data, &spec, a.schedule.chains, a.schedule.threads())?;
    let summary = write_run(
        &a.out,
        "fit",
        input,
        data.names(),
        &spec,
        a.schedule.chains,
        model_key(spec.family),
        &traces,
    )?;
    print_summary(&summary, data.names());
    Ok(0)
}

/// Inverse of `ModelKey::dir_name`, used when a run has no manifest.
fn row_from_dir(dir: &Path) -> RowKey {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run");
    if name == ModelKey::Gaussian.dir_name() {
        return RowKey::Model(ModelKey::Gaussian);
    }
    match name.strip_prefix("nu_").and_then(|v| v.parse::<f64>().ok()) {
        Some(nu) => RowKey::Model(ModelKey::StudentT { nu }),
        None => RowKey::Dataset(name.to_string()),
    }
}

fn report_run(dir: &Path, out: &Path) -> Result<(Vec<String>, RowKey, PosteriorSummary)> {
    let traces = read_traces(dir)?;
    let manifest = read_manifest(dir)?;
    let names = manifest
        .as_ref()
        .map(|m| m.names.clone())
        .unwrap_or_else(|| default_names(traces[0].k()));
    let row = manifest
        .and_then(|m| m.model)
        .map(RowKey::Model)
        .unwrap_or_else(|| row_from_dir(dir));
    fs::create_dir_all(out)?;
    let summary = write_report(out, &traces, &names, &row)?;
    if out != dir && dir.join(MANIFEST).exists() {
        fs::copy(dir.join(MANIFEST), out.join(MANIFEST))?;
    }
    Ok((names, row, summary))
}

pub fn report(a: &ReportArgs) -> Result<u8> {
    if !a.dir.is_dir() {
        return Err(Error::Trace(format!("{} is not a directory", a.dir.display())));
    }
    let out = a.out.clone().unwrap_or_else(|| a.dir.clone());
    if !trace_files(&a.dir)?.is_empty() {
        let (names, _, summary) = report_run(&a.dir, &out)?;
        print_summary(&summary, &names);
        return Ok(0);
    }

    let mut subdirs: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(&a.dir)? {
        let path = entry?.path();
        if path.is_dir() && !trace_files(&path)?.is_empty() {
            subdirs.push(path);
        }
    }
    if subdirs.is_empty() {
        return Err(Error::Trace(format!("no trace files in {}", a.dir.display())));
    }
    subdirs.sort();
    let mut rows: Vec<(RowKey, PosteriorSummary)> = Vec::new();
    let mut names: Option<Vec<String>> = None;
    for sub in &subdirs {
        let target = out.join(sub.file_name().expect("read_dir entries have names"));
        let (n, row, summary) = report_run(sub, &target)?;
        match &names {
            Some(first) if *first != n => {
                return Err(Error::Trace(format!(
                    "{} has different predictors than the other runs",
                    sub.display()
                )))
            }
            Some(_) => {}
            None => names = Some(n),
        }
        rows.push((row, summary));
    }
    let names = names.expect("at least one subdirectory");
    let refs: Vec<(RowKey, &PosteriorSummary)> = rows.iter().map(|(k, s)| (k.clone(), s)).collect();
    let h = heatmap_matrix(&refs, &names)?;
    write_heatmap(&out, &h)?;
    for (label, values) in h.row_labels.iter().zip(&h.values) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        println!("{label:<10} mean inc {mean:.4}");
    }
    Ok(0)
}

pub fn simulate(a: &SimulateArgs) -> Result<u8> {
    let scenario = scenario(a.scenario, &a.sim);
    let data = simulate_dataset(&scenario)?;
    write_dataset_csv(&a.out, &data)?;
    write_sidecar(&a.out, &Manifest::new("simulate", InputRecord::Simulation { scenario }, data.names()))?;
    Ok(0)
}

pub fn inject(a: &InjectArgs) -> Result<u8> {
    let spec = if a.replicates > 0 {
        Some(a.schedule.spec(a.family.family())?)
    } else {
        None
    };
    let (data, input) = load(&a.data)?;
    let Some(spec) = spec else {
        let augmented = inject_random(&data, a.count, a.inject_seed)?;
        write_dataset_csv(&a.out, &augmented)?;
        let mut manifest = Manifest::new("inject", input, augmented.names());
        manifest.settings = json!({ "count": a.count, "inject_seed": a.inject_seed });
        write_sidecar(&a.out, &manifest)?;
        return Ok(0);
    };

    let seeds: Vec<u64> = (0..a.replicates as u64).map(|r| a.inject_seed.wrapping_add(r)).collect();
    let study = injection_study(&data, &spec, a.count, &seeds, a.schedule.chains, a.schedule.threads())?;
    fs::create_dir_all(&a.out)?;
    let median = study.median_injected_inc();
    let shift = study.max_original_shift();
    let mut doc = serde_json::to_string_pretty(&json!({
        "study": study,
        "median_injected_inc": median,
        "max_original_shift": shift,
    }))?;
    doc.push('\n');
    fs::write(a.out.join("injection.json"), doc)?;

    // one row per fit; the baseline has no injected columns
    let mut w = csv::Writer::from_writer(create_file(&a.out.join("injection.csv"))?);
    let mut header = vec!["model".to_string()];
    header.extend(study.names.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    let mut base = vec!["baseline".to_string()];
    base.extend(study.baseline_inc.iter().map(|&v| fmt17(v)));
    base.extend(std::iter::repeat_n(String::new(), a.count));
    w.write_record(&base).map_err(csv_error)?;
    for r in &study.replicates {
        let mut row = vec![format!("seed={}", r.seed)];
        row.extend(r.inc.iter().map(|&v| fmt17(v)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;

    let mut manifest = Manifest::new("inject", input, &study.names);
    manifest.spec = Some(spec);
    manifest.chains = a.schedule.chains;
    manifest.settings = json!({ "count": a.count, "inject_seeds": seeds });
    write_manifest(&a.out, &manifest)?;

    let median: Vec<String> = median.iter().map(|m| format!("{m:.4}")).collect();
    println!("median injected inc: {}", median.join(", "));
    println!("max original shift: {shift:.4}");
    Ok(0)
}

pub fn sweep(a: &SweepArgs) -> Result<u8> {
    let spec = a.schedule.spec(SlabFamily::Gaussian)?;
    let (data, input) = load(&a.data)?;
    let results = nu_sweep(&data, &spec, &a.nus, !a.no_gaussian, a.schedule.chains, a.schedule.threads())?;

    let mut rows: Vec<(RowKey, PosteriorSummary)> = Vec::new();
    let mut models = Vec::new();
    let mut first_failure: Option<Error> = None;
    for r in results {
        let dir = a.out.join(r.key.dir_name());
        let status = match r.chains {
            Ok(traces) => {
                let summary = write_run(
                    &dir,
                    "sweep",
                    input.clone(),
                    data.names(),
                    &r.spec,
                    a.schedule.chains,
                    r.key.clone(),
                    &traces,
                )?;
                rows.push((RowKey::Model(r.key.clone()), summary));
                "ok".to_string()
            }
            Err(e) => {
                eprintln!("error: model {}: {e}", r.key.label());
                let status = format!("failed: {e}");
                first_failure.get_or_insert(e);
                status
            }
        };
        models.push(json!({
            "label": r.key.label(),
            "dir": r.key.dir_name(),
            "seed": r.spec.seed,
            "status": status,
        }));
    }

    fs::create_dir_all(&a.out)?;
    if !rows.is_empty() {
        let refs: Vec<(RowKey, &PosteriorSummary)> = rows.iter().map(|(k, s)| (k.clone(), s)).collect();
        let h = heatmap_matrix(&refs, data.names())?;
        write_heatmap(&a.out, &h)?;
        for (label, values) in h.row_labels.iter().zip(&h.values) {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            println!("{label:<10} mean inc {mean:.4}");
        }
    }
    let mut manifest = Manifest::new("sweep", input, data.names());
    manifest.spec = Some(spec);
    manifest.chains = a.schedule.chains;
    manifest.settings = json!({ "nus": a.nus, "gaussian": !a.no_gaussian, "models": models });
    write_manifest(&a.out, &manifest)?;
    Ok(first_failure.map_or(0, |e| exit_code(&e)))
}

pub fn baseline(a: &BaselineArgs) -> Result<u8> {
    let penalty = match (a.ridge, a.lasso) {
        (Some(w), None) => PenaltySpec::Ridge(w),
        (None, Some(w)) => PenaltySpec::Lasso(w),
        _ => return Err(Error::InvalidSpec("give exactly one of --ridge and --lasso".into())),
    };
    penalty.validate()?;
    if !(a.tol > 0.0) || a.max_iter == 0 {
        return Err(Error::InvalidSpec("--tol must be positive and --max-iter at least 1".into()));
    }
    let (data, input) = load(&a.data)?;
    let coef = match penalty {
        PenaltySpec::Ridge(w) => ridge_fit(&data, w)?,
        PenaltySpec::Lasso(w) => {
            let fit = lasso_fit(&data, w, a.tol, a.max_iter)?;
            if !fit.converged {
                eprintln!("warning: lasso stopped after {} passes without converging", fit.iterations);
            }
            fit.coef
        }
    };

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["predictor", "coef"]).map_err(csv_error)?;
        for (name, b) in data.names().iter().zip(coef.iter()) {
            w.write_record([name.as_str(), fmt17(*b).as_str()]).map_err(csv_error)?;
        }
        w.flush()?;
    }
    match &a.out {
        Some(path) => {
            ensure_parent(path)?;
            fs::write(path, &buf)?;
            let mut manifest = Manifest::new("baseline", input, data.names());
            manifest.settings = match penalty {
                PenaltySpec::Ridge(w) => json!({ "ridge": w }),
                PenaltySpec::Lasso(w) => json!({ "lasso": w, "tol": a.tol, "max_iter": a.max_iter }),
            };
            write_sidecar(path, &manifest)?;
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(0)
}

pub fn geweke(a: &GewekeArgs) -> Result<u8> {
    let spec = SlabSpec {
        family: a.family.family(),
        grid_q: a.grid_q,
        grid_r2: a.grid_r2,
        seed: a.seed,
        ..SlabSpec::default()
    };
    let mutation = match a.mutation {
        MutationArg::None => Mutation::None,
        MutationArg::DoubledSigma2Shape => Mutation::DoubledSigma2Shape,
    };
    let report = geweke_joint_test_with((a.n, a.k, 0), &spec, a.draws, mutation)?;
    println!("{:<12} {:>12} {:>12} {:>8}", "moment", "prior", "gibbs", "z");
    for c in &report.checks {
        println!("{:<12} {:>12.6} {:>12.6} {:>8.3}", c.name, c.prior_mean, c.gibbs_mean, c.z);
    }
    let passed = report.passed();
    println!(
        "max |z| = {:.3} ({} at threshold {PASS_THRESHOLD})",
        report.max_abs_z(),
        if passed { "pass" } else { "fail" }
    );
    if let Some(path) = &a.out {
        ensure_parent(path)?;
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        fs::write(path, s)?;
    }
    Ok(if passed { 0 } else { 1 })
}
