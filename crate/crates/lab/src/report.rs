//! Diagnostics report: one record per check plus the run environment.
//! Serialized as JSON with a fixed key order.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: &'static str,
    pub status: Status,
    pub anchor: &'static str,
    pub measured: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Non-finite floats have no JSON form; they become strings.
pub fn number(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::from(format!("{v}"))
    }
}

impl CheckRecord {
    /// A passing record for `id`. Panics if `id` is not catalogued.
    pub fn new(id: &'static str) -> Self {
        let anchor = catalog::anchor(id).unwrap_or_else(|| panic!("check `{id}` missing from the catalog"));
        Self { id, status: Status::Pass, anchor, measured: BTreeMap::new(), tolerances: BTreeMap::new(), reason: None }
    }

    pub fn measure(&mut self, key: &str, v: f64) -> &mut Self {
        self.measured.insert(key.to_string(), number(v));
        self
    }

    pub fn measure_value(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.measured.insert(key.to_string(), v.into());
        self
    }

    pub fn measure_list(&mut self, key: &str, v: &[f64]) -> &mut Self {
        self.measured.insert(key.to_string(), Value::Array(v.iter().map(|x| number(*x)).collect()));
        self
    }

    pub fn tolerance(&mut self, key: &str, v: f64) -> &mut Self {
        self.tolerances.insert(key.to_string(), v);
        self
    }

    /// Sets pass or fail; a failure that is already recorded sticks.
    pub fn verdict(&mut self, ok: bool) -> &mut Self {
        if !ok {
            self.status = Status::Fail;
        }
        self
    }

    pub fn fail(&mut self, reason: impl Into<String>) -> &mut Self {
        self.status = Status::Fail;
        self.reason = Some(reason.into());
        self
    }

    pub fn skip(&mut self, reason: impl Into<String>) -> &mut Self {
        self.status = Status::Skipped;
        self.reason = Some(reason.into());
        self
    }

    pub fn done(&mut self) -> Self {
        self.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub example: String,
    pub environment: Environment,
    pub summary: Summary,
    pub checks: Vec<CheckRecord>,
}

pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl DiagnosticsReport {
    pub fn new(example: String, seed: u64, canonical_config: &str, checks: Vec<CheckRecord>) -> Self {
        let count = |s| checks.iter().filter(|c| c.status == s).count();
        let summary = Summary { passed: count(Status::Pass), failed: count(Status::Fail), skipped: count(Status::Skipped) };
        Self {
            example,
            environment: Environment { version: env!("CARGO_PKG_VERSION"), seed, config_hash: config_hash(canonical_config) },
            summary,
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn check(&self, id: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One line per check, for terminals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skip",
            };
            out.push_str(&format!("{tag:4}  {}", c.id));
            if let Some(r) = &c.reason {
                out.push_str(&format!("  ({r})"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "{}: {} passed, {} failed, {} skipped\n",
            self.example, self.summary.passed, self.summary.failed, self.summary.skipped
        ));
        out
    }
}
