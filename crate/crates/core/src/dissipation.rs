//! Lyapunov-type functionals compatible with the null distribution and the
//! diagnostics built on them: the transversal dissipation constant, the
//! degeneracy set `Z = {V(x) in N_x}`, monotone decay along trajectories, the
//! integrated dissipation budget and omega-limit estimates.

use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::diff;
use crate::dynamics::{decompose, transversal_norm, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{Manifold, ScalarMap, TangentSplitting, VectorMap};

/// Default floor on `|V_S|_S` below which dissipation ratios are not formed.
pub const RATIO_FLOOR: f64 = 1e-6;
/// Default tolerance for declaring membership in `Z`.
pub const Z_TOL: f64 = 1e-6;

pub struct FunctionalSpec {
    value: ScalarMap,
    differential: Option<VectorMap>,
    pub lower_bound: f64,
}

impl FunctionalSpec {
    pub fn new(value: ScalarMap, lower_bound: f64) -> Self {
        Self { value, differential: None, lower_bound }
    }

    pub fn with_differential(mut self, differential: VectorMap) -> Self {
        self.differential = Some(differential);
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn has_analytic_differential(&self) -> bool {
        self.differential.is_some()
    }

    pub fn differential(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.differential {
            Some(d) => d(x),
            None => self.fd_differential(x, diff::step_for(x)),
        }
    }

    pub fn fd_differential(&self, x: &DVector<f64>, h: f64) -> DVector<f64> {
        diff::gradient(&self.value, x, h)
    }

    /// `dPsi(x) . v`.
    pub fn derivative_along(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.differential(x).dot(v)
    }
}

/// `max_b |dPsi(x) . b| / max(1, |dPsi|)` over the columns `b` of `B_N`.
pub fn check_compatibility(functional: &FunctionalSpec, split: &TangentSplitting, x: &DVector<f64>) -> f64 {
    let d = functional.differential(x);
    let scale = d.norm().max(1.0);
    split
        .basis_n
        .column_iter()
        .map(|b| d.dot(&b).abs() / scale)
        .fold(0.0, f64::max)
}

/// Empirical dissipation constant: the minimum over admissible samples of
/// `-dPsi(V_S) / |V_S|_S^2`, admissible meaning `|V_S|_S > floor`.
pub fn dissipation_constant(
    functional: &FunctionalSpec,
    field: &VectorField,
    manifold: &Manifold,
    samples: &[DVector<f64>],
    floor: f64,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for x in samples {
        let split = manifold.null_splitting(x)?;
        let (_, v_s) = decompose(field, &split, x)?;
        let norm = transversal_norm(&split, manifold, &v_s)?;
        if norm <= floor {
            continue;
        }
        let ratio = -functional.derivative_along(x, &v_s) / (norm * norm);
        if ratio <= 0.0 {
            return Err(Error::DissipationViolated { witness: x.iter().copied().collect(), ratio });
        }
        best = Some(best.map_or(ratio, |b: f64| b.min(ratio)));
    }
    best.ok_or(Error::NoTransversalMotion)
}

/// `|V_S(x)|_S`; `x` is in `Z` when this is below the membership tolerance.
pub fn z_indicator(field: &VectorField, split: &TangentSplitting, manifold: &Manifold, x: &DVector<f64>) -> Result<f64> {
    let (_, v_s) = decompose(field, split, x)?;
    transversal_norm(split, manifold, &v_s)
}

/// Outcome of the two-sided sampled check `|dPsi(V)| <= tol_psi <=> |V_S|_S <= tol_vs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZEquivalence {
    pub samples: usize,
    pub agreements: usize,
    pub in_z: usize,
}

impl ZEquivalence {
    pub fn fraction(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.agreements as f64 / self.samples as f64
        }
    }
}

pub fn z_equivalence(
    functional: &FunctionalSpec,
    field: &VectorField,
    manifold: &Manifold,
    samples: &[DVector<f64>],
    tol_psi: f64,
    tol_vs: f64,
) -> Result<ZEquivalence> {
    let mut out = ZEquivalence { samples: samples.len(), agreements: 0, in_z: 0 };
    for x in samples {
        let split = manifold.null_splitting(x)?;
        let speed = z_indicator(field, &split, manifold, x)?;
        let rate = functional.derivative_along(x, &field.eval(x)).abs();
        let by_speed = speed <= tol_vs;
        if (rate <= tol_psi) == by_speed {
            out.agreements += 1;
        }
        if by_speed {
            out.in_z += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monotonicity {
    /// Largest `Psi(t_{i+1}) - Psi(t_i)`.
    pub max_increment: f64,
    pub slack: f64,
}

impl Monotonicity {
    pub fn passed(&self) -> bool {
        self.max_increment <= self.slack
    }
}

fn psi_series(trajectory: &Trajectory, functional: &FunctionalSpec) -> Vec<f64> {
    match &trajectory.psi {
        Some(p) => p.clone(),
        None => trajectory.states.iter().map(|x| functional.value(x)).collect(),
    }
}

/// Largest one-step increase of `Psi` along a trajectory, with the slack a
/// discretely sampled decaying functional is allowed: ten times the RK4 local
/// error scale `dt^5 max|dPsi(V)|` plus rounding in `Psi`.
pub fn monotonicity_check(trajectory: &Trajectory, functional: &FunctionalSpec, field: &VectorField) -> Monotonicity {
    let psi = psi_series(trajectory, functional);
    let max_increment = psi.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let rate = trajectory
        .states
        .iter()
        .map(|x| functional.derivative_along(x, &field.eval(x)).abs())
        .fold(0.0, f64::max);
    let scale = psi.iter().fold(1.0f64, |a, p| a.max(p.abs()));
    let slack = 10.0 * (trajectory.dt.powi(5) * rate + f64::EPSILON * scale);
    Monotonicity { max_increment: if psi.len() < 2 { 0.0 } else { max_increment }, slack }
}

/// Trapezoidal integral of `y` over `t`.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// `int |V_S|_S^2 dt`.
    pub lhs: f64,
    /// `(Psi(start) - Psi(end)) / c_hat`.
    pub rhs: f64,
}

impl Budget {
    pub fn holds(&self, rel: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel) + f64::EPSILON
    }
}

pub fn dissipation_budget(trajectory: &Trajectory, functional: &FunctionalSpec, c_hat: f64) -> Result<Budget> {
    if !(c_hat > 0.0) {
        return Err(Error::InvalidArgument("dissipation constant must be positive"));
    }
    if trajectory.vs_norm.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("trajectory lacks transversal speed diagnostics"));
    }
    let sq: Vec<f64> = trajectory.vs_norm.iter().map(|v| v * v).collect();
    let lhs = trapezoid(&trajectory.times, &sq);
    let psi = psi_series(trajectory, functional);
    let rhs = match (psi.first(), psi.last()) {
        (Some(a), Some(b)) => (a - b) / c_hat,
        _ => 0.0,
    };
    Ok(Budget { lhs, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaLimitOptions {
    pub tail_fraction: f64,
    pub cluster_radius: f64,
    pub max_clusters: usize,
}

impl Default for OmegaLimitOptions {
    fn default() -> Self {
        Self { tail_fraction: 0.2, cluster_radius: 1e-3, max_clusters: 64 }
    }
}

/// Greedy radius clustering of the trajectory tail; returns the cluster
/// seeds in sample order.
pub fn omega_limit_estimate(trajectory: &Trajectory, opts: &OmegaLimitOptions) -> Result<Vec<DVector<f64>>> {
    if !(opts.tail_fraction > 0.0 && opts.tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument("tail fraction must lie in (0, 1]"));
    }
    let n = trajectory.len();
    let tail = ((n as f64) * opts.tail_fraction).ceil() as usize;
    if tail < 50 {
        return Err(Error::InvalidArgument("omega-limit tail needs at least 50 samples"));
    }
    let mut reps: Vec<DVector<f64>> = Vec::new();
    for x in &trajectory.states[n - tail..] {
        let near = reps.iter().any(|r| {
            crate::geometry::wrapped_difference(x, r, &trajectory.periodic).norm() <= opts.cluster_radius
        });
        if !near {
            reps.push(x.clone());
            if reps.len() > opts.max_clusters {
                return Err(Error::ClusterBudgetExceeded { budget: opts.max_clusters });
            }
        }
    }
    Ok(reps)
}

/// Aggregate of the dissipation checks on one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationDiagnostics {
    pub c_hat: f64,
    pub compat_residual: f64,
    pub budget_lhs: f64,
    pub budget_rhs: f64,
    pub z_membership_tol: f64,
}

/// Estimates `c_hat` on the trajectory samples, the worst compatibility
/// residual along it, and the integrated budget.
pub fn dissipation_diagnostics(
    functional: &FunctionalSpec,
    field: &VectorField,
    manifold: &Manifold,
    trajectory: &Trajectory,
) -> Result<DissipationDiagnostics> {
    let c_hat = dissipation_constant(functional, field, manifold, &trajectory.states, RATIO_FLOOR)?;
    let mut compat_residual = 0.0f64;
    for x in &trajectory.states {
        let split = manifold.null_splitting(x)?;
        compat_residual = compat_residual.max(check_compatibility(functional, &split, x));
    }
    let budget = dissipation_budget(trajectory, functional, c_hat)?;
    Ok(DissipationDiagnostics {
        c_hat,
        compat_residual,
        budget_lhs: budget.lhs,
        budget_rhs: budget.rhs,
        z_membership_tol: Z_TOL,
    })
}
