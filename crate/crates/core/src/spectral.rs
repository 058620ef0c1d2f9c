//! Linearization transverse to the null distribution: spectra and gaps,
//! Morse nondegeneracy of the functional, local critical sets, the H1-H4
//! hypothesis verifier and convergence toward the tangency set `Sigma`.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::dissipation::FunctionalSpec;
use crate::dynamics::{integrate, variational_trajectory, IntegrationOptions, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{wrapped_difference, Manifold, TangentSplitting};
use crate::linalg;
use crate::reduction::ReducedTrajectory;

/// `DV(x)`: analytic Jacobian when supplied, else central differences.
pub fn linearize(field: &VectorField, manifold: &Manifold, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let jac = field.jacobian(x);
    if jac.nrows() != manifold.state_dim() || jac.ncols() != manifold.state_dim() {
        return Err(Error::DimensionMismatch { expected: manifold.state_dim(), found: jac.nrows() });
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteJacobian);
    }
    Ok(jac)
}

/// `Pi_S L` restricted to `S`, in `B_S` coordinates.
pub fn transversal_operator(l: &DMatrix<f64>, split: &TangentSplitting) -> DMatrix<f64> {
    &split.coords_s * l * &split.basis_s
}

/// Eigenvalues of a small dense matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Band around the imaginary axis treated as center spectrum:
/// `1e-6 * spectral radius`, floored at `1e-9`.
pub fn center_tolerance(eigs: &[Complex<f64>]) -> f64 {
    let radius = eigs.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max);
    (1e-6 * radius).max(1e-9)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGap {
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_abscissa: f64,
    /// Every eigenvalue satisfies `Re z < -eta`.
    pub gap: bool,
    /// No eigenvalue within the center band.
    pub center_free: bool,
}

pub fn spectrum_gap(l_s: &DMatrix<f64>, eta: f64) -> Result<SpectrumGap> {
    let eigenvalues = eigenvalues(l_s)?;
    let spectral_abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let tol = center_tolerance(&eigenvalues);
    Ok(SpectrumGap {
        gap: eigenvalues.iter().all(|z| z.re < -eta),
        center_free: eigenvalues.iter().all(|z| z.re.abs() > tol),
        spectral_abscissa,
        eigenvalues,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub point: DVector<f64>,
    pub l_full: DMatrix<f64>,
    pub l_s: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_abscissa: f64,
    /// `-abscissa - eta`; positive when the gap holds.
    pub eta_margin: f64,
    pub center_free: bool,
}

pub fn spectral_report(field: &VectorField, manifold: &Manifold, x: &DVector<f64>, eta: f64) -> Result<SpectralReport> {
    let split = manifold.null_splitting(x)?;
    let l_full = linearize(field, manifold, x)?;
    let l_s = transversal_operator(&l_full, &split);
    let gap = spectrum_gap(&l_s, eta)?;
    Ok(SpectralReport {
        point: x.clone(),
        l_full,
        l_s,
        spectral_abscissa: gap.spectral_abscissa,
        eta_margin: -gap.spectral_abscissa - eta,
        center_free: gap.center_free,
        eigenvalues: gap.eigenvalues,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransversalHessian {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub nondegenerate: bool,
}

/// Second central differences of `Psi` along the transversal basis.
///
/// The matrix is nondegenerate when its smallest eigenvalue magnitude
/// exceeds `1e-6` times the larger of its largest eigenvalue magnitude and
/// the unit-probe curvature `max_i |Psi(x + b_i) + Psi(x - b_i) - 2 Psi(x)|`.
/// Both scales are linear in `Psi`, so the verdict is invariant under
/// rescaling the functional.
pub fn hessian_transversal(
    functional: &FunctionalSpec,
    split: &TangentSplitting,
    x: &DVector<f64>,
) -> Result<TransversalHessian> {
    let r = split.transversal_rank();
    let h = f64::EPSILON.powf(0.25) * x.norm().max(1.0);
    let f = |p: &DVector<f64>| functional.value(p);
    let b: Vec<DVector<f64>> = split.basis_s.column_iter().map(|c| c.into_owned()).collect();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(r, r);
    for i in 0..r {
        let fp = f(&(x + &b[i] * h));
        let fm = f(&(x - &b[i] * h));
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in i + 1..r {
            let pp = f(&(x + (&b[i] + &b[j]) * h));
            let pm = f(&(x + (&b[i] - &b[j]) * h));
            let mp = f(&(x + (-&b[i] + &b[j]) * h));
            let mm = f(&(x - (&b[i] + &b[j]) * h));
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let curvature = b
        .iter()
        .map(|bi| (f(&(x + bi)) + f(&(x - bi)) - 2.0 * f0).abs())
        .fold(0.0, f64::max);
    let eigenvalues: Vec<f64> = if r == 0 {
        Vec::new()
    } else {
        hess.clone().symmetric_eigen().eigenvalues.iter().copied().collect()
    };
    let largest = eigenvalues.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let smallest = eigenvalues.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    let threshold = 1e-6 * largest.max(curvature);
    let nondegenerate = r == 0 || (smallest > threshold && smallest > 0.0);
    Ok(TransversalHessian { matrix: hess, eigenvalues, nondegenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub point: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Largest transversal share of the critical-set tangents obtained by
    /// re-solving from seeds displaced along `N`.
    pub tangent_residual: f64,
}

const NEWTON_MAX_ITER: usize = 50;

fn transversal_gradient(functional: &FunctionalSpec, split: &TangentSplitting, x: &DVector<f64>) -> DVector<f64> {
    split.basis_s.transpose() * functional.differential(x)
}

fn newton_transversal(
    functional: &FunctionalSpec,
    manifold: &Manifold,
    seed: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, f64, usize)> {
    let mut x = manifold.project(seed)?;
    let mut residual = f64::INFINITY;
    for it in 0..=NEWTON_MAX_ITER {
        let split = manifold.null_splitting(&x)?;
        let g = transversal_gradient(functional, &split, &x);
        residual = g.norm();
        if residual <= tol {
            return Ok((x, residual, it));
        }
        if it == NEWTON_MAX_ITER || !residual.is_finite() {
            break;
        }
        let r = split.transversal_rank();
        let h = crate::diff::step_for(&x);
        let mut hess = DMatrix::zeros(r, r);
        for j in 0..r {
            let bj = split.basis_s.column(j).into_owned();
            let gp = transversal_gradient(functional, &split, &(&x + &bj * h));
            let gm = transversal_gradient(functional, &split, &(&x - &bj * h));
            hess.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        let hess = linalg::symmetrize(&hess);
        let Some(delta) = hess.lu().solve(&(-&g)) else {
            break;
        };
        x = manifold.project(&(&x + &split.basis_s * delta))?;
        manifold.wrap(&mut x);
    }
    Err(Error::NewtonDiverged { iterations: NEWTON_MAX_ITER, residual })
}

/// Newton iteration on `dPsi|_S = 0` moving only along `S`.
pub fn critical_set_local(
    functional: &FunctionalSpec,
    manifold: &Manifold,
    seed: &DVector<f64>,
    tol: f64,
) -> Result<CriticalPoint> {
    let (point, residual, iterations) = newton_transversal(functional, manifold, seed, tol)?;
    let split = manifold.null_splitting(&point)?;
    let delta = 1e-3;
    let mut tangent_residual = 0.0f64;
    for n in split.basis_n.column_iter() {
        let n = n.into_owned();
        let (plus, _, _) = newton_transversal(functional, manifold, &(&point + &n * delta), tol)?;
        let (minus, _, _) = newton_transversal(functional, manifold, &(&point - &n * delta), tol)?;
        let tangent = wrapped_difference(&plus, &minus, manifold.periodic());
        let len = tangent.norm();
        if len > 0.0 {
            tangent_residual = tangent_residual.max((&split.proj_s * &tangent).norm() / len);
        }
    }
    Ok(CriticalPoint { point, residual, iterations, tangent_residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaConvergence {
    /// `-slope` of `log dist` over the fit window; `None` without two
    /// positive distances in the window.
    pub rate: Option<f64>,
    pub final_dist: f64,
    pub max_dist: f64,
    pub fit_residual: f64,
    /// Distances were proxied by `|V_S|_S`.
    pub proxy: bool,
}

/// Exponential decay rate of the distance to `Sigma`, fitted over
/// `t >= window_start * T`.
pub fn sigma_convergence(trajectory: &Trajectory, window_start: f64) -> SigmaConvergence {
    let (dist, proxy) = match &trajectory.dist_sigma {
        Some(d) => (d.clone(), false),
        None => (trajectory.vs_norm.clone(), true),
    };
    let t_end = trajectory.times.last().copied().unwrap_or(0.0);
    let t0 = trajectory.times.first().copied().unwrap_or(0.0);
    let start = t0 + window_start * (t_end - t0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = trajectory
        .times
        .iter()
        .zip(&dist)
        .filter(|(t, d)| **t >= start && **d > 1e-250 && d.is_finite())
        .map(|(t, d)| (*t, d.ln()))
        .unzip();
    let fit = linalg::linear_fit(&xs, &ys);
    SigmaConvergence {
        rate: fit.map(|(s, _, _)| -s),
        final_dist: dist.last().copied().unwrap_or(0.0),
        max_dist: dist.iter().copied().fold(0.0, f64::max),
        fit_residual: fit.map_or(0.0, |(_, _, r)| r),
        proxy,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedConvergence {
    pub is_cauchy: bool,
    pub limit: DVector<f64>,
    /// `(T, sup_{t >= T} |Y(t) - Y(end)|)`.
    pub oscillations: Vec<(f64, f64)>,
    /// `(T, int_T^end |Ydot| dt)`.
    pub arc_tails: Vec<(f64, f64)>,
}

fn halves(series: &[(f64, f64)]) -> bool {
    let first = series.first().map_or(0.0, |s| s.1);
    let last = series.last().map_or(0.0, |s| s.1);
    series.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12) + 1e-300)
        && (last <= 0.5 * first || first <= 1e-14)
}

/// Cauchy test for `pi(X(t))`: tail oscillation and tail arc length must
/// shrink over successive windows; the limit is the mean of the final window.
pub fn projected_convergence(reduced: &ReducedTrajectory) -> Result<ProjectedConvergence> {
    let n = reduced.len();
    if n < 100 {
        return Err(Error::InvalidArgument("projected convergence needs at least 100 samples"));
    }
    let t0 = reduced.times[0];
    let t_end = reduced.times[n - 1];
    let end = &reduced.points[n - 1];
    let speed: Vec<f64> = reduced.velocities().iter().map(|v| v.norm()).collect();
    let mut oscillations = Vec::new();
    let mut arc_tails = Vec::new();
    for j in 1..8 {
        let t_cut = t0 + (t_end - t0) * j as f64 / 8.0;
        let from = reduced.times.partition_point(|t| *t < t_cut);
        let osc = reduced.points[from..]
            .iter()
            .map(|y| wrapped_difference(y, end, &reduced.periodic).norm())
            .fold(0.0, f64::max);
        oscillations.push((t_cut, osc));
        arc_tails.push((t_cut, crate::dissipation::trapezoid(&reduced.times[from..], &speed[from..])));
    }
    let from = reduced.times.partition_point(|t| *t < t0 + (t_end - t0) * 7.0 / 8.0);
    let window = &reduced.points[from..];
    let mut mean = DVector::zeros(end.len());
    for y in window {
        mean += wrapped_difference(y, end, &reduced.periodic);
    }
    let mut limit = end + mean / window.len() as f64;
    for &i in &reduced.periodic {
        limit[i] = crate::geometry::wrap_angle(limit[i]);
    }
    Ok(ProjectedConvergence {
        is_cauchy: halves(&oscillations) && halves(&arc_tails),
        limit,
        oscillations,
        arc_tails,
    })
}

/// Initial points, horizon and fit settings for the hypothesis verifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub initial_points: Vec<DVector<f64>>,
    pub horizon: f64,
    pub dt: f64,
    /// Regression window starts at this fraction of the horizon.
    pub fit_start: f64,
    pub record_every: usize,
    /// Trajectories exceeding this chart norm count as unbounded.
    pub radius_limit: f64,
}

impl TrialPlan {
    pub fn new(initial_points: Vec<DVector<f64>>, horizon: f64, dt: f64) -> Self {
        Self { initial_points, horizon, dt, fit_start: 0.25, record_every: 10, radius_limit: 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1 {
    pub bounded: bool,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H2 {
    pub corank_constant: bool,
    pub observed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H3 {
    pub c: f64,
    pub alpha: f64,
    pub fit_residual: f64,
}

impl H3 {
    pub fn passed(&self) -> bool {
        self.alpha > 0.0 && self.c.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H4 {
    /// `max |Pi_S Dphi_t n| / |n|` over null probes.
    pub n_residual: f64,
    /// `max |Pi_N Dphi_t s| / |s|` over transversal probes.
    pub s_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub h1: H1,
    pub h2: H2,
    pub h3: H3,
    pub h4: H4,
    pub sigma_convergence: SigmaConvergence,
}

fn observed_corank(manifold: &Manifold, x: &DVector<f64>) -> Result<usize> {
    match manifold.null_splitting(x) {
        Ok(s) => Ok(s.corank),
        Err(Error::CorankMismatch { found, .. }) => Ok(found),
        Err(e) => Err(e),
    }
}

/// Empirical check of H1-H4 along the trial plan. `sigma_distance`, when
/// given, is the analytic distance to `Sigma`; otherwise `|V_S|_S` is used.
/// Splitting used for the H3 probes and H4 residuals; defaults to the
/// Euclidean complement from [`Manifold::null_splitting`].
pub type SplittingProvider<'a> = &'a dyn Fn(&DVector<f64>) -> Result<TangentSplitting>;

/// Analytic distance to `Sigma`.
pub type DistanceFn<'a> = &'a dyn Fn(&DVector<f64>) -> f64;

pub fn check_hypotheses(
    manifold: &Manifold,
    field: &VectorField,
    plan: &TrialPlan,
    splitting: Option<SplittingProvider>,
    sigma_distance: Option<DistanceFn>,
) -> Result<HypothesisReport> {
    let split_at = |x: &DVector<f64>| match splitting {
        Some(f) => f(x),
        None => manifold.null_splitting(x),
    };
    let opts = IntegrationOptions::new(plan.horizon, plan.dt).recording_every(plan.record_every);
    let fit_from = plan.fit_start * plan.horizon;

    let mut radius = 0.0f64;
    let mut finite = true;
    let mut coranks: Vec<usize> = Vec::new();
    let mut sigma: Option<SigmaConvergence> = None;

    let mut alpha = f64::INFINITY;
    let mut fit_residual = 0.0f64;
    let mut s_probe_logs: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut h4 = H4 { n_residual: 0.0, s_residual: 0.0 };

    for x0 in &plan.initial_points {
        let mut traj = integrate(manifold, field, x0, &opts)?;
        if let Some(d) = sigma_distance {
            traj = traj.with_dist_sigma(d);
        }
        for x in &traj.states {
            finite &= x.iter().all(|v| v.is_finite());
            radius = radius.max(x.norm());
            let k = observed_corank(manifold, x)?;
            if !coranks.contains(&k) {
                coranks.push(k);
            }
        }
        let sc = sigma_convergence(&traj, plan.fit_start);
        sigma = Some(match sigma {
            None => sc,
            Some(prev) => SigmaConvergence {
                rate: match (prev.rate, sc.rate) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                },
                final_dist: prev.final_dist.max(sc.final_dist),
                max_dist: prev.max_dist.max(sc.max_dist),
                fit_residual: prev.fit_residual.max(sc.fit_residual),
                proxy: prev.proxy || sc.proxy,
            },
        });

        let split0 = split_at(&traj.states[0])?;
        let start = traj.states[0].clone();
        for (probes, transversal) in [(&split0.basis_s, true), (&split0.basis_n, false)] {
            for probe in probes.column_iter() {
                let v0 = probe.into_owned();
                let v0_norm = v0.norm();
                let samples = variational_trajectory(manifold, field, &start, &v0, &opts)?;
                let mut logs = Vec::new();
                for s in &samples {
                    let split = split_at(&s.state)?;
                    if transversal {
                        h4.s_residual = h4.s_residual.max((&split.proj_n * &s.tangent).norm() / v0_norm);
                        let ratio = s.tangent.norm() / v0_norm;
                        if ratio > 0.0 {
                            logs.push((s.time, ratio.ln()));
                        }
                    } else {
                        h4.n_residual = h4.n_residual.max((&split.proj_s * &s.tangent).norm() / v0_norm);
                    }
                }
                if transversal {
                    let (xs, ys): (Vec<f64>, Vec<f64>) = logs.iter().filter(|(t, _)| *t >= fit_from).copied().unzip();
                    if let Some((slope, _, res)) = linalg::linear_fit(&xs, &ys) {
                        alpha = alpha.min(-slope);
                        fit_residual = fit_residual.max(res);
                    }
                    s_probe_logs.push(logs);
                }
            }
        }
    }

    if !alpha.is_finite() {
        alpha = 0.0;
    }
    let log_c = s_probe_logs
        .iter()
        .flatten()
        .map(|(t, l)| l + alpha * t)
        .fold(0.0f64, f64::max);
    coranks.sort_unstable();
    Ok(HypothesisReport {
        h1: H1 { bounded: finite && radius <= plan.radius_limit, radius },
        h2: H2 { corank_constant: coranks.len() <= 1, observed: coranks },
        h3: H3 { c: log_c.exp(), alpha, fit_residual },
        h4,
        sigma_convergence: sigma.unwrap_or(SigmaConvergence {
            rate: None,
            final_dist: 0.0,
            max_dist: 0.0,
            fit_residual: 0.0,
            proxy: sigma_distance.is_none(),
        }),
    })
}
