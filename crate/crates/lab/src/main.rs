use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nullfold::report::{number, CheckRecord, DiagnosticsReport};
use nullfold::{check_suite, list_examples, run_experiment};
use nullfold_core::spectral::spectral_report;
use nullfold_core::{DVector, Example};

/// Diagnostics for dissipative flows on presymplectic manifolds.
#[derive(Parser)]
#[command(name = "nullfold", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in examples.
    List,
    /// Run an experiment from a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory. Falls back to the configuration, then NULLFOLD_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full battery on a built-in example with its defaults.
    Check {
        example: String,
        /// Multiplies every scalable tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Print the JSON report instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// Transversal spectrum at a point.
    Spectrum {
        example: String,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long, default_value_t = 0.4)]
        eta: f64,
    },
}

fn finish(report: &DiagnosticsReport) -> ExitCode {
    print!("{}", report.render());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn spectrum(name: &str, at: &str, eta: f64) -> ExitCode {
    let Some(ex) = Example::by_name(name) else {
        return usage(format!("unknown example `{name}`; available: {}", nullfold::config::available_examples()));
    };
    let coords: Result<Vec<f64>, _> = at.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let coords = match coords {
        Ok(c) if c.len() == ex.manifold.state_dim() => c,
        Ok(c) => return usage(format!("--at needs {} coordinates, got {}", ex.manifold.state_dim(), c.len())),
        Err(e) => return usage(format!("--at: {e}")),
    };
    let mut x = DVector::from_vec(coords);
    if ex.manifold.is_embedded() {
        match ex.manifold.project(&x) {
            Ok(p) => x = p,
            Err(e) => return usage(e),
        }
    }
    ex.manifold.wrap(&mut x);
    let mut gap = CheckRecord::new("spectral.gap");
    let mut center = CheckRecord::new("spectral.center_free");
    gap.tolerance("eta", eta);
    match spectral_report(&ex.field, &ex.manifold, &x, eta) {
        Ok(r) => {
            let eig: Vec<serde_json::Value> =
                r.eigenvalues.iter().map(|z| serde_json::json!([number(z.re), number(z.im)])).collect();
            gap.measure("spectral_abscissa", r.spectral_abscissa)
                .measure_value("eigenvalues", eig)
                .verdict(r.eta_margin > 0.0);
            center.verdict(r.center_free);
            for z in &r.eigenvalues {
                println!("{:+.9} {:+.9}i", z.re, z.im);
            }
        }
        Err(e) => {
            gap.fail(e.to_string());
            center.fail(e.to_string());
        }
    }
    let canonical = format!("{name}|{at}|{eta}");
    finish(&DiagnosticsReport::new(name.to_string(), 0, &canonical, vec![gap, center]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for e in list_examples() {
                println!(
                    "{:<18} m={} k={} leaves={:<10} {}",
                    e.name,
                    e.m,
                    e.k,
                    if e.leaves_compact { "compact" } else { "noncompact" },
                    e.summary
                );
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, seed } => match run_experiment(&config, out.as_deref(), seed) {
            Ok(report) => finish(&report),
            Err(e) => usage(e),
        },
        Command::Check { example, tol_scale, json } => match check_suite(&example, tol_scale) {
            Ok(report) if json => {
                print!("{}", report.to_json());
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Ok(report) => finish(&report),
            Err(e) => usage(e),
        },
        Command::Spectrum { example, at, eta } => spectrum(&example, &at, eta),
    }
}
