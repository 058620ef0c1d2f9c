//! Vector fields on the constraint manifold, their null/transversal
//! decomposition, and fixed-step RK4 integration with Newton projection back
//! onto the constraint.

use alloc::{string::String, vec::Vec};

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::diff;
use crate::error::{Error, Result};
use crate::geometry::{Manifold, MatrixMap, TangentSplitting, VectorMap};

pub struct VectorField {
    pub name: String,
    eval: VectorMap,
    jacobian: Option<MatrixMap>,
}

impl VectorField {
    pub fn new(name: impl Into<String>, eval: VectorMap) -> Self {
        Self { name: name.into(), eval, jacobian: None }
    }

    pub fn with_jacobian(mut self, jacobian: MatrixMap) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Analytic Jacobian when supplied, else central differences.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => self.fd_jacobian(x),
        }
    }

    pub fn fd_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        diff::jacobian(&self.eval, x, diff::step_for(x))
    }
}

/// `|dPhi(V(x))|` in embedded mode; intrinsic fields are tangent by construction.
pub fn check_tangency(field: &VectorField, manifold: &Manifold, x: &DVector<f64>) -> f64 {
    manifold.tangency_defect(x, &field.eval(x))
}

/// Splits a tangent vector into its `N` and `S` components.
pub fn decompose_vector(split: &TangentSplitting, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let v_n = &split.basis_n * (&split.coords_n * v);
    let v_s = &split.basis_s * (&split.coords_s * v);
    let residual = (v - &v_n - &v_s).norm();
    if residual > 1e-10 * v.norm().max(1.0) {
        return Err(Error::TangencyViolated { residual });
    }
    Ok((v_n, v_s))
}

/// `V(x) = V_N + V_S`.
pub fn decompose(field: &VectorField, split: &TangentSplitting, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    decompose_vector(split, &field.eval(x))
}

/// Norm of a transversal vector under the restricted form.
pub fn transversal_norm(split: &TangentSplitting, manifold: &Manifold, v_s: &DVector<f64>) -> Result<f64> {
    if split.transversal_rank() == 0 {
        return Ok(0.0);
    }
    let gram = split.transversal_gram(manifold)?;
    if gram.clone().cholesky().is_none() {
        return Err(Error::IndefiniteTransversalForm);
    }
    let c = &split.coords_s * v_s;
    Ok(c.dot(&(gram * &c)).max(0.0).sqrt())
}

/// `|V_S(x)|_S`, computed from a fresh splitting at `x`.
pub fn transversal_speed(field: &VectorField, manifold: &Manifold, x: &DVector<f64>) -> Result<f64> {
    let split = manifold.null_splitting(x)?;
    let (_, v_s) = decompose(field, &split, x)?;
    transversal_norm(&split, manifold, &v_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Constraint tolerance enforced by the Newton projection.
    pub tol: f64,
    /// Keep every `record_every`-th step (the final state is always kept).
    pub record_every: usize,
}

impl IntegrationOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Self { t_final, dt, tol: crate::geometry::DEFAULT_CONSTRAINT_TOL, record_every: 1 }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn recording_every(mut self, stride: usize) -> Self {
        self.record_every = stride.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument("dt must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument("t_final must be nonnegative"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("projection tolerance must be positive"));
        }
        Ok(())
    }

    /// Step sizes covering `[0, t_final]`; the last one may be shorter.
    fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        let ratio = self.t_final / self.dt;
        let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        (0..n).map(move |i| {
            let t = i as f64 * self.dt;
            (self.t_final - t).min(self.dt)
        })
    }
}

/// Sampled solution with per-sample diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Functional value, once attached.
    pub psi: Option<Vec<f64>>,
    /// `|V_S|_S`; NaN where the transversal norm is undefined.
    pub vs_norm: Vec<f64>,
    pub phi_residual: Vec<f64>,
    /// Distance to the tangency set, when an analytic description is known.
    pub dist_sigma: Option<Vec<f64>>,
    pub periodic: Vec<usize>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn with_psi<F: Fn(&DVector<f64>) -> f64>(mut self, psi: F) -> Self {
        self.psi = Some(self.states.iter().map(psi).collect());
        self
    }

    pub fn with_dist_sigma<F: Fn(&DVector<f64>) -> f64>(mut self, dist: F) -> Self {
        self.dist_sigma = Some(self.states.iter().map(dist).collect());
        self
    }

    /// Samples with `t >= t0`.
    pub fn since(&self, t0: f64) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.times
            .iter()
            .copied()
            .zip(self.states.iter())
            .filter(move |(t, _)| *t >= t0)
    }
}

fn rk4_step(field: &VectorField, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = field.eval(x);
    let k2 = field.eval(&(x + &k1 * (h / 2.0)));
    let k3 = field.eval(&(x + &k2 * (h / 2.0)));
    let k4 = field.eval(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn ensure_finite(x: &DVector<f64>, time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { time })
    }
}

fn prepare_start(manifold: &Manifold, x0: &DVector<f64>, opts: &IntegrationOptions) -> Result<DVector<f64>> {
    if x0.len() != manifold.state_dim() {
        return Err(Error::DimensionMismatch { expected: manifold.state_dim(), found: x0.len() });
    }
    ensure_finite(x0, 0.0)?;
    manifold.project_with(x0, opts.tol, 5)
}

/// Classical RK4 with fixed step, Newton projection after every step and
/// periodic coordinates wrapped.
pub fn integrate(
    manifold: &Manifold,
    field: &VectorField,
    x0: &DVector<f64>,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let mut x = prepare_start(manifold, x0, opts)?;
    let mut times = alloc::vec![0.0];
    let mut states = alloc::vec![x.clone()];
    let steps: Vec<f64> = opts.steps().collect();
    let last = steps.len();
    for (i, h) in steps.into_iter().enumerate() {
        let next = rk4_step(field, &x, h);
        let t = ((i + 1) as f64 * opts.dt).min(opts.t_final);
        ensure_finite(&next, t)?;
        x = manifold.project_with(&next, opts.tol, 5)?;
        manifold.wrap(&mut x);
        if (i + 1) % opts.record_every == 0 || i + 1 == last {
            times.push(t);
            states.push(x.clone());
        }
    }
    let phi_residual = states.iter().map(|s| manifold.constraint_residual(s)).collect();
    let vs_norm = states
        .iter()
        .map(|s| transversal_speed(field, manifold, s).unwrap_or(f64::NAN))
        .collect();
    Ok(Trajectory {
        times,
        states,
        psi: None,
        vs_norm,
        phi_residual,
        dist_sigma: None,
        periodic: manifold.periodic().to_vec(),
        dt: opts.dt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSample {
    pub time: f64,
    pub state: DVector<f64>,
    pub tangent: DVector<f64>,
}

/// Jointly integrates the state and the first variation `v' = DV(x) v`.
pub fn variational_trajectory(
    manifold: &Manifold,
    field: &VectorField,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    opts: &IntegrationOptions,
) -> Result<Vec<VariationalSample>> {
    opts.validate()?;
    let mut x = prepare_start(manifold, x0, opts)?;
    if v0.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: v0.len() });
    }
    let mut v = v0.clone();
    let mut out = alloc::vec![VariationalSample { time: 0.0, state: x.clone(), tangent: v.clone() }];
    let steps: Vec<f64> = opts.steps().collect();
    let last = steps.len();
    for (i, h) in steps.into_iter().enumerate() {
        let k1x = field.eval(&x);
        let k1v = field.jacobian(&x) * &v;
        let x2 = &x + &k1x * (h / 2.0);
        let v2 = &v + &k1v * (h / 2.0);
        let k2x = field.eval(&x2);
        let k2v = field.jacobian(&x2) * &v2;
        let x3 = &x + &k2x * (h / 2.0);
        let v3 = &v + &k2v * (h / 2.0);
        let k3x = field.eval(&x3);
        let k3v = field.jacobian(&x3) * &v3;
        let x4 = &x + &k3x * h;
        let v4 = &v + &k3v * h;
        let k4x = field.eval(&x4);
        let k4v = field.jacobian(&x4) * &v4;
        let next = &x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        let t = ((i + 1) as f64 * opts.dt).min(opts.t_final);
        ensure_finite(&next, t)?;
        ensure_finite(&v, t)?;
        x = manifold.project_with(&next, opts.tol, 5)?;
        if let Some(c) = manifold.constraint() {
            let d = c.differential(&x);
            let nn = d.norm_squared();
            if nn > 0.0 {
                v -= &d * (d.dot(&v) / nn);
            }
        }
        manifold.wrap(&mut x);
        if (i + 1) % opts.record_every == 0 || i + 1 == last {
            out.push(VariationalSample { time: t, state: x.clone(), tangent: v.clone() });
        }
    }
    Ok(out)
}

/// `D phi_t(x0) v0`.
pub fn variational_flow(
    manifold: &Manifold,
    field: &VectorField,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t_final: f64,
    dt: f64,
) -> Result<DVector<f64>> {
    let opts = IntegrationOptions::new(t_final, dt).recording_every(usize::MAX);
    let samples = variational_trajectory(manifold, field, x0, v0, &opts)?;
    Ok(samples.last().map(|s| s.tangent.clone()).expect("at least the initial sample"))
}

/// Ratio of endpoint displacement to initial displacement for a perturbed
/// start. Bounded ratios under shrinking perturbations are the numerical
/// stand-in for continuity of the semiflow.
pub fn continuity_ratio(
    manifold: &Manifold,
    field: &VectorField,
    x0: &DVector<f64>,
    perturbation: &DVector<f64>,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let base = integrate(manifold, field, x0, &opts.recording_every(usize::MAX))?;
    let moved = integrate(manifold, field, &(x0 + perturbation), &opts.recording_every(usize::MAX))?;
    let start_gap = manifold.chart_distance(&base.states[0], &moved.states[0]);
    if start_gap == 0.0 {
        return Ok(0.0);
    }
    Ok(manifold.chart_distance(base.last_state(), moved.last_state()) / start_gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::expm;
    use crate::systems::{self, fixtures};
    use alloc::vec;
    use approx::assert_relative_eq;
    use core::f64::consts::TAU;

    fn dv(v: Vec<f64>) -> DVector<f64> {
        DVector::from_vec(v)
    }

    /// Closed-form null-hyperplane solution.
    fn null_plane_exact(x0: &DVector<f64>, t: f64) -> DVector<f64> {
        let z = x0[2];
        let shift = 0.5 * z * z * (1.0 - (-2.0 * t).exp());
        dv(vec![x0[0] + shift, x0[1] + shift, z * (-t).exp()])
    }

    #[test]
    fn tangency_examples() {
        let ex = systems::null_hyperplane();
        assert_eq!(check_tangency(&ex.field, &ex.manifold, &dv(vec![0.3, 0.3, 1.7])), 0.0);
        let cc = systems::circle_contract(1.0);
        assert_eq!(check_tangency(&cc.field, &cc.manifold, &dv(vec![0.0, 2.0])), 0.0);
        let bad = fixtures::transverse_field();
        assert_relative_eq!(check_tangency(&bad, &ex.manifold, &dv(vec![0.0, 0.0, 0.0])), 1.0);
    }

    #[test]
    fn decompose_examples() {
        let ex = systems::null_hyperplane();
        let x = dv(vec![0.0, 0.0, 1.0]);
        let s = ex.manifold.null_splitting(&x).unwrap();
        let (vn, vs) = decompose(&ex.field, &s, &x).unwrap();
        assert_relative_eq!(vn, dv(vec![1.0, 1.0, 0.0]), epsilon = 1e-12);
        assert_relative_eq!(vs, dv(vec![0.0, 0.0, -1.0]), epsilon = 1e-12);

        let eq = dv(vec![0.4, 0.4, 0.0]);
        let s = ex.manifold.null_splitting(&eq).unwrap();
        let (vn, vs) = decompose(&ex.field, &s, &eq).unwrap();
        assert_eq!(vn.norm() + vs.norm(), 0.0);

        let toy = systems::presymplectic_toy(1.0, 0.3);
        let x = dv(vec![1.0, 0.0, 0.0]);
        let s = toy.manifold.null_splitting(&x).unwrap();
        let (vn, vs) = decompose(&toy.field, &s, &x).unwrap();
        assert_relative_eq!(vn, dv(vec![0.0, 0.0, 0.3]), epsilon = 1e-12);
        assert_relative_eq!(vs, dv(vec![0.0, -1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn transversal_norm_examples() {
        let ex = systems::null_hyperplane();
        let x = dv(vec![0.0, 0.0, 1.0]);
        let s = ex.manifold.null_splitting(&x).unwrap();
        assert_relative_eq!(transversal_norm(&s, &ex.manifold, &dv(vec![0.0, 0.0, -1.0])).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(transversal_norm(&s, &ex.manifold, &dv(vec![0.0, 0.0, 0.0])).unwrap(), 0.0);

        let toy = systems::presymplectic_toy(1.0, 0.3);
        let s = toy.manifold.null_splitting(&toy.default_start).unwrap();
        assert_relative_eq!(transversal_norm(&s, &toy.manifold, &dv(vec![3.0, 4.0, 0.0])).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_transversal_form_is_reported() {
        // spacelike normal: the induced form is Lorentzian
        let m = systems::minkowski_family(1.5);
        let x = dv(vec![0.0, 0.0, 0.0]);
        let s = m.null_splitting(&x).unwrap();
        assert_eq!(s.corank, 0);
        let err = transversal_norm(&s, &m, &s.basis_s.column(0).into_owned()).unwrap_err();
        assert_eq!(err, Error::IndefiniteTransversalForm);
    }

    #[test]
    fn null_plane_closed_form() {
        let ex = systems::null_hyperplane();
        let x0 = dv(vec![0.0, 0.0, 1.0]);
        let traj = integrate(&ex.manifold, &ex.field, &x0, &IntegrationOptions::new(5.0, 1e-3)).unwrap();
        let exact = null_plane_exact(&x0, 5.0);
        let end = traj.last_state();
        assert_relative_eq!(end[2], exact[2], max_relative = 1e-6);
        assert_relative_eq!(end[0], exact[0], max_relative = 1e-6);
        assert_relative_eq!(exact[2], 6.7379e-3, max_relative = 1e-4);
        assert_relative_eq!(exact[0], 0.49998, max_relative = 1e-5);
        assert_eq!(traj.len(), 5001);
        assert_eq!(*traj.times.last().unwrap(), 5.0);
        assert!(traj.phi_residual.iter().all(|r| *r <= 1e-8));
    }

    #[test]
    fn equilibrium_stays_put() {
        let ex = systems::null_hyperplane();
        let x0 = dv(vec![0.7, 0.7, 0.0]);
        let traj = integrate(&ex.manifold, &ex.field, &x0, &IntegrationOptions::new(2.0, 0.01)).unwrap();
        assert!(traj.states.iter().all(|s| *s == x0));
    }

    #[test]
    fn circle_contract_closed_form() {
        let ex = systems::circle_contract(1.0);
        let traj = integrate(&ex.manifold, &ex.field, &dv(vec![0.0, 2.0]), &IntegrationOptions::new(3.0, 1e-3)).unwrap();
        let end = traj.last_state();
        assert_relative_eq!(end[1], 2.0 * (-3.0f64).exp(), max_relative = 1e-9);
        assert_relative_eq!(end[1], 9.957e-2, max_relative = 1e-3);
        assert_relative_eq!(end[0], 3.0 % TAU, epsilon = 1e-9);
        // wrapping keeps angles in [0, 2 pi)
        let long = integrate(&ex.manifold, &ex.field, &dv(vec![6.0, 0.0]), &IntegrationOptions::new(1.0, 0.01)).unwrap();
        assert!(long.states.iter().all(|s| (0.0..TAU).contains(&s[0])));
        assert_relative_eq!(long.last_state()[0], 7.0 - TAU, epsilon = 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let ex = systems::null_hyperplane();
        let x0 = dv(vec![0.0, 0.0, 1.0]);
        let exact = null_plane_exact(&x0, 5.0);
        let err = |dt: f64| {
            let t = integrate(&ex.manifold, &ex.field, &x0, &IntegrationOptions::new(5.0, dt)).unwrap();
            (t.last_state() - &exact).norm()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..=20.0).contains(&ratio), "RK4 order ratio {ratio}");
    }

    #[test]
    fn invalid_options_are_rejected() {
        let ex = systems::circle_contract(1.0);
        let x0 = dv(vec![0.0, 1.0]);
        assert!(integrate(&ex.manifold, &ex.field, &x0, &IntegrationOptions::new(1.0, 0.0)).is_err());
        assert!(integrate(&ex.manifold, &ex.field, &x0, &IntegrationOptions::new(1.0, -0.1)).is_err());
        let short = dv(vec![0.0]);
        assert!(matches!(
            integrate(&ex.manifold, &ex.field, &short, &IntegrationOptions::new(1.0, 0.1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let m = crate::geometry::Manifold::intrinsic(1, alloc::boxed::Box::new(|_| DMatrix::identity(1, 1)));
        let f = VectorField::new("blowup", alloc::boxed::Box::new(|x| dv(vec![x[0] * x[0]])));
        let err = integrate(&m, &f, &dv(vec![10.0]), &IntegrationOptions::new(5.0, 0.1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { .. }));
    }

    #[test]
    fn variational_examples() {
        let cc = systems::circle_contract(1.0);
        let v = variational_flow(&cc.manifold, &cc.field, &dv(vec![0.0, 1.0]), &dv(vec![0.0, 1.0]), 2.0, 1e-3).unwrap();
        assert_relative_eq!(v[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(v.norm(), 0.13534, max_relative = 1e-4);

        let zero = variational_flow(&cc.manifold, &cc.field, &dv(vec![0.0, 1.0]), &dv(vec![0.0, 0.0]), 2.0, 1e-2).unwrap();
        assert_eq!(zero.norm(), 0.0);

        let toy = systems::presymplectic_toy(1.0, 0.3);
        let v = variational_flow(&toy.manifold, &toy.field, &toy.default_start, &dv(vec![1.0, 0.0, 0.0]), 4.0, 1e-3).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let oracle = expm(&(a * 4.0)) * DVector::from_vec(vec![1.0, 0.0]);
        assert!((v.rows(0, 2) - &oracle).norm() <= 1e-4);
        assert_relative_eq!(v.norm(), oracle.norm(), epsilon = 1e-4);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn variational_matches_finite_difference_of_flow() {
        let ex = systems::null_hyperplane();
        let x0 = dv(vec![0.1, 0.1, 0.8]);
        let v0 = dv(vec![0.0, 0.0, 1.0]);
        let eps = 1e-6;
        let opts = IntegrationOptions::new(2.0, 1e-3);
        let lin = variational_flow(&ex.manifold, &ex.field, &x0, &v0, 2.0, 1e-3).unwrap();
        let a = integrate(&ex.manifold, &ex.field, &x0, &opts).unwrap();
        let b = integrate(&ex.manifold, &ex.field, &(&x0 + &v0 * eps), &opts).unwrap();
        let fd = (b.last_state() - a.last_state()) / eps;
        assert!((fd - lin).norm() <= 1e-5);
    }

    #[test]
    fn continuity_ratio_is_bounded() {
        let ex = systems::presymplectic_toy(1.0, 0.3);
        let opts = IntegrationOptions::new(5.0, 1e-2);
        for scale in [1e-3, 1e-5] {
            let r = continuity_ratio(&ex.manifold, &ex.field, &dv(vec![0.5, 0.5, 1.0]), &dv(vec![scale, -scale, 0.0]), &opts).unwrap();
            assert!(r < 2.0, "perturbation ratio {r}");
        }
    }
}
