//! Inline systems: an intrinsic chart with a constant form, a polynomial
//! field and functional, constant null generators and a coordinate quotient.
//!
//! Polynomial terms are written `[coefficient, e0, e1, ...]`, so
//! `[[-1.0, 0, 1]]` is `-x1`.
//!
//! ```toml
//! [system]
//! dim = 2
//! form = [[0.0, 0.0], [0.0, 1.0]]
//! periodic = [0]
//! field = [[[1.0]], [[-1.0, 0, 1]]]
//! functional = [[0.5, 0, 2]]
//! generators = [[1.0, 0.0]]
//! quotient = [1]
//! leaves_compact = true
//! leaf_period = 6.283185307179586
//! ```

use serde::{Deserialize, Serialize};

use nullfold_core::dissipation::FunctionalSpec;
use nullfold_core::dynamics::VectorField;
use nullfold_core::poly::Polynomial;
use nullfold_core::systems::{Example, ExampleInfo};
use nullfold_core::{DMatrix, DVector, Foliation, Manifold};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    pub dim: usize,
    pub form: Vec<Vec<f64>>,
    #[serde(default)]
    pub periodic: Vec<usize>,
    pub corank: Option<usize>,
    pub field: Vec<Vec<Vec<f64>>>,
    pub functional: Vec<Vec<f64>>,
    pub functional_lower_bound: Option<f64>,
    pub generators: Vec<Vec<f64>>,
    pub quotient: Vec<usize>,
    #[serde(default)]
    pub leaves_compact: bool,
    pub leaf_period: Option<f64>,
    #[serde(default = "yes")]
    pub uniform_dissipation: bool,
}

fn yes() -> bool {
    true
}

fn polynomial(terms: &[Vec<f64>]) -> Polynomial {
    Polynomial::new(
        terms
            .iter()
            .map(|t| (t[0], t[1..].iter().map(|&e| e as u32).collect()))
            .collect(),
    )
}

fn check_terms(terms: &[Vec<f64>], dim: usize, field: &str) -> Result<(), (String, String)> {
    for (i, t) in terms.iter().enumerate() {
        if t.is_empty() || t.len() > dim + 1 {
            return Err((field.into(), format!("term {i} needs a coefficient and at most {dim} exponents")));
        }
        if !t[0].is_finite() {
            return Err((field.into(), format!("term {i} has a non-finite coefficient")));
        }
        if t[1..].iter().any(|&e| !(e >= 0.0 && e.fract() == 0.0 && e <= 64.0)) {
            return Err((field.into(), format!("term {i} has a non-integer or negative exponent")));
        }
    }
    Ok(())
}

impl InlineSystem {
    /// Returns the offending key and a reason.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let n = self.dim;
        if n == 0 {
            return Err(("system.dim".into(), "must be at least 1".into()));
        }
        if self.form.len() != n || self.form.iter().any(|r| r.len() != n) {
            return Err(("system.form".into(), format!("must be {n} x {n}")));
        }
        for i in 0..n {
            for j in 0..n {
                if (self.form[i][j] - self.form[j][i]).abs() > 1e-12 {
                    return Err(("system.form".into(), "must be symmetric".into()));
                }
            }
        }
        if let Some(&p) = self.periodic.iter().find(|&&p| p >= n) {
            return Err(("system.periodic".into(), format!("index {p} out of range")));
        }
        if self.field.len() != n {
            return Err(("system.field".into(), format!("needs {n} components, got {}", self.field.len())));
        }
        for c in &self.field {
            check_terms(c, n, "system.field")?;
        }
        check_terms(&self.functional, n, "system.functional")?;
        if self.generators.iter().any(|g| g.len() != n) {
            return Err(("system.generators".into(), format!("each generator needs {n} entries")));
        }
        if self.quotient.is_empty() || self.quotient.iter().any(|&q| q >= n) {
            return Err(("system.quotient".into(), "needs coordinate indices below dim".into()));
        }
        if self.leaves_compact && !self.leaf_period.is_some_and(|p| p > 0.0) {
            return Err(("system.leaf_period".into(), "required and positive when leaves are compact".into()));
        }
        Ok(())
    }

    /// Builds the system. Assumes [`validate`](Self::validate) passed.
    pub fn build(&self, bounds: &[[f64; 2]]) -> Example {
        let n = self.dim;
        let form = DMatrix::from_fn(n, n, |i, j| self.form[i][j]);
        let mut manifold = Manifold::intrinsic(n, Box::new(move |_| form.clone())).with_periodic(self.periodic.clone());
        if let Some(k) = self.corank {
            manifold = manifold.with_corank(k);
        }

        let comps: Vec<Polynomial> = self.field.iter().map(|c| polynomial(c)).collect();
        let jac_comps = comps.clone();
        let field = VectorField::new(
            "inline",
            Box::new(move |x| DVector::from_iterator(n, comps.iter().map(|p| p.eval(x)))),
        )
        .with_jacobian(Box::new(move |x| {
            let mut j = DMatrix::zeros(n, n);
            for (i, p) in jac_comps.iter().enumerate() {
                j.set_row(i, &p.gradient(x).transpose());
            }
            j
        }));

        let psi = polynomial(&self.functional);
        let dpsi = psi.clone();
        let functional = FunctionalSpec::new(
            Box::new(move |x| psi.eval(x)),
            self.functional_lower_bound.unwrap_or(f64::NEG_INFINITY),
        )
        .with_differential(Box::new(move |x| dpsi.gradient(x)));

        let generators = self
            .generators
            .iter()
            .map(|g| {
                let v = DVector::from_vec(g.clone());
                Box::new(move |_: &DVector<f64>| v.clone()) as nullfold_core::geometry::VectorMap
            })
            .collect();
        let q = self.quotient.clone();
        let qj = self.quotient.clone();
        let mut foliation = Foliation::new(
            generators,
            Box::new(move |x| DVector::from_iterator(q.len(), q.iter().map(|&i| x[i]))),
            self.leaves_compact,
        )
        .with_quotient_jacobian(Box::new(move |_| {
            let mut j = DMatrix::zeros(qj.len(), n);
            for (r, &i) in qj.iter().enumerate() {
                j[(r, i)] = 1.0;
            }
            j
        }))
        .with_quotient_periodic(
            self.quotient
                .iter()
                .enumerate()
                .filter(|(_, i)| self.periodic.contains(i))
                .map(|(r, _)| r)
                .collect(),
        );
        if let Some(p) = self.leaf_period {
            foliation = foliation.with_leaf_period(p);
        }

        let centre = DVector::from_iterator(n, bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)));
        let k = self
            .corank
            .unwrap_or_else(|| manifold.null_splitting(&centre).map_or(0, |s| s.corank));
        Example {
            info: ExampleInfo {
                name: "inline",
                m: n,
                k,
                leaves_compact: self.leaves_compact,
                embedded: false,
                analytic_sigma: false,
                closed_form: false,
                uniform_dissipation: self.uniform_dissipation,
                summary: "polynomial system from the configuration",
            },
            manifold,
            field,
            functional,
            foliation,
            sigma_distance: None,
            invariant_splitting: None,
            default_start: centre,
            bounding_box: bounds.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
        }
    }
}
