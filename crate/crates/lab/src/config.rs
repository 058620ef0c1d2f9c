//! Experiment configuration.
//!
//! A single TOML file names a built-in example (or defines an inline
//! polynomial system) and may override run lengths, the ensemble and any
//! tolerance. Missing keys fall back to the example's defaults.
//!
//! ```toml
//! example = "circle-contract"
//! t_final = 30.0
//! dt = 0.01
//!
//! [ensemble]
//! count = 16
//! seed = 7
//!
//! [tolerances]
//! cluster_radius = 0.5
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nullfold_core::systems::REGISTRY;

use crate::inline::InlineSystem;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{}invalid `{field}`: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { field: String, reason: String, line: Option<usize> },
    #[error("unknown example `{name}`; available: {available}")]
    UnknownExample { name: String, available: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    /// The offending key, for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub fn available_examples() -> String {
    REGISTRY.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub count: Option<usize>,
    pub seed: Option<u64>,
    /// `[lo, hi]` per state coordinate.
    #[serde(rename = "box")]
    pub bounds: Option<Vec<[f64; 2]>>,
}

/// The file as written; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: Option<String>,
    pub system: Option<InlineSystem>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
    pub t_transient: Option<f64>,
    pub t_sample: Option<f64>,
    pub eta: Option<f64>,
    pub outputs: Option<String>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

/// Name, default and whether `--tol-scale` applies.
pub const TOLERANCES: &[(&str, f64, bool)] = &[
    ("budget_rel", 1e-4, true),
    ("c_min", 1e-3, false),
    ("cluster_radius", 1e-3, false),
    ("compatibility", 1e-8, true),
    ("constraint", 1e-8, true),
    ("critical_tangent", 1e-4, true),
    ("decomposition", 1e-10, true),
    ("dimension_slack", 0.2, true),
    ("fiber", 1e-8, true),
    ("h4", 1e-8, true),
    ("involutivity", 1e-6, true),
    ("kernel", 1e-8, true),
    ("metric_invariance", 1e-8, true),
    ("projectability", 1e-6, true),
    ("projected_velocity", 1e-3, true),
    ("projector", 1e-10, true),
    ("psi_zero", 1e-8, true),
    ("rate_slack", 0.05, true),
    ("saturation_eps", 1e-2, false),
    ("sigma_invariance", 1e-8, true),
    ("spread", 1e-3, true),
    ("tail_fraction", 0.2, false),
    ("tangency", 1e-8, true),
    ("z", 1e-6, true),
];

/// Per-example defaults.
struct Defaults {
    t_final: f64,
    dt: f64,
    t_transient: f64,
    t_sample: f64,
    eta: f64,
    tolerances: &'static [(&'static str, f64)],
}

fn defaults_for(name: &str) -> Defaults {
    let compact: &'static [(&'static str, f64)] = &[("cluster_radius", 0.5), ("tail_fraction", 0.5)];
    match name {
        "circle-contract" => Defaults {
            t_final: 30.0,
            dt: 0.01,
            t_transient: 10.0,
            t_sample: 4.0 * std::f64::consts::PI,
            eta: 0.4,
            tolerances: compact,
        },
        // the circle drift 0.3 sweeps a full turn in each half of the sample window
        "presymplectic-toy" => Defaults {
            t_final: 80.0,
            dt: 0.01,
            t_transient: 20.0,
            t_sample: 42.0,
            eta: 0.4,
            tolerances: compact,
        },
        _ => Defaults { t_final: 30.0, dt: 0.01, t_transient: 10.0, t_sample: 20.0, eta: 0.4, tolerances: &[] },
    }
}

/// A fully resolved configuration. Serialized canonically for the report hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub example: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<InlineSystem>,
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub t_transient: f64,
    pub t_sample: f64,
    pub eta: f64,
    pub ensemble_count: usize,
    pub seed: u64,
    pub bounds: Vec<[f64; 2]>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    pub outputs: Option<String>,
}

impl Settings {
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    /// Multiplies every scalable tolerance by `factor`.
    pub fn scale_tolerances(&mut self, factor: f64) {
        for (name, _, scalable) in TOLERANCES {
            if *scalable {
                if let Some(v) = self.tolerances.get_mut(*name) {
                    *v *= factor;
                }
            }
        }
    }

    /// Canonical text: JSON of the resolved settings with sorted maps.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("settings serialize")
    }
}

/// 1-based line of the first `key =` assignment, for error messages.
fn locate(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(leaf).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse { line, column, message: e.message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Ok((Self::parse(&text)?, text))
    }

    /// Built-in defaults for `name`, with nothing overridden.
    pub fn for_example(name: &str) -> Self {
        Self { example: Some(name.to_string()), ..Self::default() }
    }

    /// Fills defaults and validates. `text` is the source, used only to point
    /// validation errors at a line.
    pub fn resolve(&self, text: Option<&str>) -> Result<Settings, ConfigError> {
        let invalid = |field: &str, reason: String| ConfigError::Invalid {
            field: field.to_string(),
            reason,
            line: text.and_then(|t| locate(t, field)),
        };

        let (name, state_dim, default_bounds) = match (&self.example, &self.system) {
            (Some(_), Some(_)) => {
                return Err(invalid("system", "give either `example` or `[system]`, not both".into()));
            }
            (None, None) => return Err(invalid("example", "missing; name a built-in or define `[system]`".into())),
            (Some(name), None) => {
                let ex = nullfold_core::Example::by_name(name).ok_or_else(|| ConfigError::UnknownExample {
                    name: name.clone(),
                    available: available_examples(),
                })?;
                let bounds = ex.bounding_box.iter().map(|&(lo, hi)| [lo, hi]).collect::<Vec<_>>();
                (name.clone(), ex.manifold.state_dim(), Some(bounds))
            }
            (None, Some(sys)) => {
                sys.validate().map_err(|(field, reason)| invalid(&field, reason))?;
                ("inline".to_string(), sys.dim, None)
            }
        };
        let d = defaults_for(&name);

        let t_final = self.t_final.unwrap_or(d.t_final);
        let dt = self.dt.unwrap_or(d.dt);
        let t_transient = self.t_transient.unwrap_or(d.t_transient);
        let t_sample = self.t_sample.unwrap_or(d.t_sample.min(t_final - t_transient));
        let eta = self.eta.unwrap_or(d.eta);
        let record_every = self.record_every.unwrap_or(1);

        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(invalid("t_final", format!("must be positive and finite, got {t_final}")));
        }
        if dt > t_final {
            return Err(invalid("dt", format!("{dt} exceeds t_final = {t_final}")));
        }
        if !(t_transient >= 0.0 && t_transient < t_final) {
            return Err(invalid("t_transient", format!("must lie in [0, t_final = {t_final}), got {t_transient}")));
        }
        if !(t_sample > 0.0 && t_transient + t_sample <= t_final * (1.0 + 1e-12)) {
            return Err(invalid(
                "t_sample",
                format!("must be positive with t_transient + t_sample <= t_final, got {t_sample}"),
            ));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("must be nonnegative and finite, got {eta}")));
        }
        if record_every == 0 {
            return Err(invalid("record_every", "must be at least 1".into()));
        }

        let count = self.ensemble.count.unwrap_or(16);
        if count == 0 {
            return Err(invalid("ensemble.count", "must be at least 1".into()));
        }
        let bounds = match (&self.ensemble.bounds, default_bounds) {
            (Some(b), _) => b.clone(),
            (None, Some(b)) => b,
            (None, None) => return Err(invalid("ensemble.box", "required for inline systems".into())),
        };
        if bounds.len() != state_dim {
            return Err(invalid("ensemble.box", format!("needs {state_dim} intervals, got {}", bounds.len())));
        }
        if let Some(i) = bounds.iter().position(|[lo, hi]| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
            return Err(invalid("ensemble.box", format!("interval {i} is not a finite [lo, hi]")));
        }

        let mut tolerances: BTreeMap<String, f64> =
            TOLERANCES.iter().map(|(n, v, _)| (n.to_string(), *v)).collect();
        for (n, v) in d.tolerances {
            tolerances.insert(n.to_string(), *v);
        }
        for (n, v) in &self.tolerances {
            let field = format!("tolerances.{n}");
            if !tolerances.contains_key(n) {
                let known = TOLERANCES.iter().map(|t| t.0).collect::<Vec<_>>().join(", ");
                return Err(invalid(&field, format!("unknown tolerance; known: {known}")));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(invalid(&field, format!("must be positive, got {v}")));
            }
            if n == "tail_fraction" && *v > 1.0 {
                return Err(invalid(&field, format!("must not exceed 1, got {v}")));
            }
            tolerances.insert(n.clone(), *v);
        }

        Ok(Settings {
            example: name,
            system: self.system.clone(),
            t_final,
            dt,
            record_every,
            t_transient,
            t_sample,
            eta,
            ensemble_count: count,
            seed: self.ensemble.seed.unwrap_or(1),
            bounds,
            tolerances,
            outputs: self.outputs.clone(),
        })
    }
}
