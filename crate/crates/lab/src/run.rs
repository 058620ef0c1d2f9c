//! Experiment runs: resolve a configuration, run the battery, write outputs.
//!
//! Output layout:
//!
//! ```text
//! <out>/report.json
//! <out>/trajectories/traj_000.csv   t,x0..,psi,vs_norm,phi_residual,dist_sigma
//! <out>/cloud_m.csv                 attractor samples on M
//! <out>/cloud_red.csv               their projections
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nullfold_core::{DVector, Example, Trajectory};

use crate::battery::run_battery;
use crate::config::{available_examples, ConfigError, ExperimentConfig, Settings};
use crate::report::DiagnosticsReport;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output { path: path.display().to_string(), message: e.to_string() }
}

/// Instantiates the system named by resolved settings.
pub fn build_example(s: &Settings) -> Result<Example, ConfigError> {
    match &s.system {
        Some(sys) => Ok(sys.build(&s.bounds)),
        None => Example::by_name(&s.example)
            .ok_or_else(|| ConfigError::UnknownExample { name: s.example.clone(), available: available_examples() }),
    }
}

/// Empty for missing or non-finite values.
fn field(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

fn write_trajectory(path: &Path, t: &Trajectory, embedded: bool) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    let dim = t.states.first().map_or(0, |x| x.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(["psi", "vs_norm", "phi_residual", "dist_sigma"].map(String::from));
    w.write_record(&header).map_err(|e| output_error(path, e))?;
    for i in 0..t.len() {
        let mut row = vec![field(Some(t.times[i]))];
        row.extend(t.states[i].iter().map(|v| field(Some(*v))));
        row.push(field(t.psi.as_ref().map(|p| p[i])));
        row.push(field(Some(t.vs_norm[i])));
        row.push(field(embedded.then(|| t.phi_residual[i])));
        row.push(field(t.dist_sigma.as_ref().map(|d| d[i])));
        w.write_record(&row).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

fn write_cloud(path: &Path, prefix: &str, points: &[DVector<f64>], dim: usize) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record((0..dim).map(|i| format!("{prefix}{i}"))).map_err(|e| output_error(path, e))?;
    for p in points {
        w.write_record(p.iter().map(|v| field(Some(*v)))).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

/// Runs the battery for resolved settings without touching the filesystem.
pub fn diagnose(s: &Settings) -> Result<(DiagnosticsReport, crate::battery::Battery, Example), ConfigError> {
    let ex = build_example(s)?;
    let battery = run_battery(&ex, s);
    let report = DiagnosticsReport::new(s.example.clone(), s.seed, &s.canonical(), battery.checks.clone());
    Ok((report, battery, ex))
}

/// Runs a resolved experiment and writes every artifact under `out`.
/// The report is written even when checks fail.
pub fn run_settings(s: &Settings, out: &Path) -> Result<DiagnosticsReport, RunError> {
    let (report, battery, ex) = diagnose(s)?;
    let traj_dir = out.join("trajectories");
    fs::create_dir_all(&traj_dir).map_err(|e| output_error(&traj_dir, e))?;
    let embedded = ex.manifold.is_embedded();
    for (i, t) in battery.trajectories.iter().enumerate() {
        write_trajectory(&traj_dir.join(format!("traj_{i:03}.csv")), t, embedded)?;
    }
    if let Some(a) = &battery.attractor {
        let m = ex.manifold.state_dim();
        let r = a.cloud_red.first().map_or(0, |y| y.len());
        write_cloud(&out.join("cloud_m.csv"), "x", &a.cloud_m, m)?;
        write_cloud(&out.join("cloud_red.csv"), "y", &a.cloud_red, r)?;
    }
    let path = out.join("report.json");
    fs::write(&path, report.to_json()).map_err(|e| output_error(&path, e))?;
    Ok(report)
}

/// Where outputs go: an explicit directory, then the configuration's
/// `outputs`, then `NULLFOLD_OUT`, then `./nullfold-out`.
pub fn output_dir(explicit: Option<&Path>, s: &Settings) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| s.outputs.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("NULLFOLD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nullfold-out"))
}

/// Loads, resolves and runs a configuration file.
pub fn run_experiment(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<DiagnosticsReport, RunError> {
    let (cfg, text) = ExperimentConfig::load(config)?;
    let mut s = cfg.resolve(Some(&text))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let dir = output_dir(out, &s);
    run_settings(&s, &dir)
}

/// Runs the battery for a built-in example with its defaults. Scalable
/// tolerances are multiplied by `tol_scale`.
pub fn check_suite(name: &str, tol_scale: f64) -> Result<DiagnosticsReport, ConfigError> {
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        return Err(ConfigError::Invalid {
            field: "tol-scale".into(),
            reason: format!("must be positive, got {tol_scale}"),
            line: None,
        });
    }
    let mut s = ExperimentConfig::for_example(name).resolve(None)?;
    s.scale_tolerances(tol_scale);
    Ok(diagnose(&s)?.0)
}
