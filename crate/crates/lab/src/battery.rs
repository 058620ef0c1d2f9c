//! The invariant battery: integrates a seeded ensemble and runs every check
//! in the catalog against it. Pipeline errors become failed checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nullfold_core::dissipation::{
    check_compatibility, dissipation_budget, dissipation_constant, monotonicity_check, omega_limit_estimate,
    z_equivalence, z_indicator, OmegaLimitOptions, RATIO_FLOOR,
};
use nullfold_core::dynamics::{check_tangency, decompose, integrate, transversal_speed};
use nullfold_core::geometry::{involutivity_residual, wrapped_difference};
use nullfold_core::reduction::{
    absorbing_check, finite_energy_check, leaf_sample, project_trajectory, projected_velocity_residual,
    reduced_metric, reduced_spread, verify_projectability,
};
use nullfold_core::spectral::{
    check_hypotheses, critical_set_local, hessian_transversal, projected_convergence, spectral_report,
    CriticalPoint, DistanceFn, HypothesisReport, SplittingProvider, TrialPlan,
};
use nullfold_core::{
    AttractorEstimate, DVector, Error, Example, IntegrationOptions, Result, Trajectory,
};

use crate::config::Settings;
use crate::report::{number, CheckRecord};

/// Box-counting scales for the dimension bound.
pub const BOX_SCALES: [f64; 6] = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01];

const MAX_CLUSTERS: usize = 64;
const MAX_REPRESENTATIVES: usize = 16;
const TRIAL_POINTS: usize = 4;

pub struct Battery {
    pub checks: Vec<CheckRecord>,
    pub ensemble: Vec<DVector<f64>>,
    /// Successful trajectories, in ensemble order.
    pub trajectories: Vec<Trajectory>,
    pub attractor: Option<AttractorEstimate>,
}

/// Uniform draws from the configured box, lifted onto the manifold.
pub fn sample_ensemble(ex: &Example, s: &Settings) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    (0..s.ensemble_count)
        .map(|_| {
            let x = DVector::from_iterator(
                s.bounds.len(),
                s.bounds.iter().map(|&[lo, hi]| if hi > lo { rng.random_range(lo..hi) } else { lo }),
            );
            ex.place(x)
        })
        .collect()
}

fn guard(id: &'static str, f: impl FnOnce(&mut CheckRecord) -> Result<()>) -> CheckRecord {
    let mut c = CheckRecord::new(id);
    if let Err(e) = f(&mut c) {
        c.fail(e.to_string());
    }
    c
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn vector(v: &DVector<f64>) -> serde_json::Value {
    serde_json::Value::Array(v.iter().map(|x| number(*x)).collect())
}

struct Context<'a> {
    ex: &'a Example,
    s: &'a Settings,
    ensemble: Vec<DVector<f64>>,
    trajectories: Vec<Trajectory>,
    failures: Vec<(usize, Error)>,
    /// Ensemble starts plus a few states from each trajectory.
    samples: Vec<DVector<f64>>,
    omega: Vec<Result<Vec<DVector<f64>>>>,
    representatives: Vec<DVector<f64>>,
    critical: Result<CriticalPoint>,
    hypotheses: Result<HypothesisReport>,
    attractor: Result<AttractorEstimate>,
    c_hat: Result<f64>,
}

impl<'a> Context<'a> {
    fn build(ex: &'a Example, s: &'a Settings) -> Self {
        let ensemble = sample_ensemble(ex, s);
        let opts = IntegrationOptions::new(s.t_final, s.dt).recording_every(s.record_every);
        let results: Vec<Result<Trajectory>> = ensemble
            .par_iter()
            .map(|x0| {
                integrate(&ex.manifold, &ex.field, x0, &opts).map(|t| {
                    let t = t.with_psi(|x| ex.functional.value(x));
                    match &ex.sigma_distance {
                        Some(d) => t.with_dist_sigma(|x| d(x)),
                        None => t,
                    }
                })
            })
            .collect();
        let mut trajectories = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(t) => trajectories.push(t),
                Err(e) => failures.push((i, e)),
            }
        }

        let mut samples = ensemble.clone();
        for t in &trajectories {
            let n = t.len();
            for i in [n / 4, n / 2, 3 * n / 4, n - 1] {
                samples.push(t.states[i].clone());
            }
        }

        let omega_opts = OmegaLimitOptions {
            tail_fraction: s.tol("tail_fraction"),
            cluster_radius: s.tol("cluster_radius"),
            max_clusters: MAX_CLUSTERS,
        };
        let omega: Vec<_> = trajectories.iter().map(|t| omega_limit_estimate(t, &omega_opts)).collect();
        let representatives: Vec<DVector<f64>> = omega
            .iter()
            .filter_map(|o| o.as_ref().ok().and_then(|r| r.first().cloned()))
            .take(MAX_REPRESENTATIVES)
            .collect();

        let seed = representatives.first().cloned().unwrap_or_else(|| ex.default_start.clone());
        let critical = critical_set_local(&ex.functional, &ex.manifold, &seed, 1e-10);

        let plan = TrialPlan::new(ensemble.iter().take(TRIAL_POINTS).cloned().collect(), s.t_final, s.dt);
        let split = |x: &DVector<f64>| ex.splitting(x);
        let provider: Option<SplittingProvider> =
            ex.invariant_splitting.as_ref().map(|_| &split as _);
        let sigma: Option<DistanceFn> = ex.sigma_distance.as_ref().map(|d| d.as_ref() as _);
        let hypotheses = check_hypotheses(&ex.manifold, &ex.field, &plan, provider, sigma);

        let attractor = if trajectories.len() >= 16 && failures.is_empty() {
            Ok(AttractorEstimate::from_trajectories(&trajectories, &ex.foliation, s.t_transient, s.t_sample))
        } else {
            Err(Error::InvalidArgument("attractor estimation needs an ensemble of at least 16 finite trajectories"))
        };

        let pooled: Vec<DVector<f64>> = trajectories.iter().flat_map(|t| t.states.iter().cloned()).collect();
        let c_hat = dissipation_constant(&ex.functional, &ex.field, &ex.manifold, &pooled, RATIO_FLOOR);

        Self {
            ex,
            s,
            ensemble,
            trajectories,
            failures,
            samples,
            omega,
            representatives,
            critical,
            hypotheses,
            attractor,
            c_hat,
        }
    }
}

fn geometry(c: &Context) -> Vec<CheckRecord> {
    let m = &c.ex.manifold;
    let corank = guard("geometry.corank_constant", |r| {
        let mut seen = Vec::new();
        for x in &c.samples {
            let k = m.null_splitting(x)?.corank;
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        seen.sort_unstable();
        r.measure_value("observed", seen.clone()).measure_value("expected", c.ex.info.k);
        r.verdict(seen == [c.ex.info.k]);
        Ok(())
    });
    let kernel = guard("geometry.kernel_property", |r| {
        let tol = c.s.tol("kernel");
        let mut worst = 0.0f64;
        for x in &c.samples {
            let split = m.null_splitting(x)?;
            let g = m.form_at(x)?;
            let scale = g.abs().max().max(1.0);
            let t = m.tangent_basis(x)?;
            let cross = split.basis_n.transpose() * &g * &t;
            worst = worst.max(cross.abs().max() / scale);
        }
        r.measure("max_abs_g_n_t", worst).tolerance("kernel", tol).verdict(worst <= tol);
        Ok(())
    });
    let projectors = guard("geometry.projector_algebra", |r| {
        let tol = c.s.tol("projector");
        let mut worst = 0.0f64;
        for x in &c.samples {
            let s = m.null_splitting(x)?;
            let p = s.tangent_projector();
            for e in [
                &s.proj_n * &s.proj_s,
                &s.proj_s * &s.proj_n,
                &s.proj_n * &s.proj_n - &s.proj_n,
                &s.proj_s * &s.proj_s - &s.proj_s,
                &p * &p - &p,
            ] {
                worst = worst.max(e.abs().max());
            }
        }
        r.measure("max_defect", worst).tolerance("projector", tol).verdict(worst <= tol);
        Ok(())
    });
    let involutive = guard("geometry.involutive", |r| {
        let tol = c.s.tol("involutivity");
        let res = involutivity_residual(m, c.ex.foliation.generators(), &c.ensemble, None)?;
        r.measure("residual", res).tolerance("involutivity", tol).verdict(res <= tol);
        Ok(())
    });
    vec![corank, kernel, projectors, involutive]
}

fn dynamics(c: &Context) -> Vec<CheckRecord> {
    let m = &c.ex.manifold;
    let mut integration = CheckRecord::new("dynamics.integration");
    integration
        .measure_value("members", c.ensemble.len())
        .measure_value("failed", c.failures.len());
    if let Some((i, e)) = c.failures.first() {
        integration.fail(format!("member {i}: {e}"));
    }

    let constraint = guard("dynamics.constraint_preserved", |r| {
        let tol = c.s.tol("constraint");
        if !m.is_embedded() {
            r.skip("intrinsic chart: no constraint function");
            return Ok(());
        }
        let worst = max_of(c.trajectories.iter().flat_map(|t| t.phi_residual.iter().copied()));
        r.measure("max_abs_phi", worst).tolerance("constraint", tol).verdict(worst <= tol);
        Ok(())
    });
    let tangency = guard("dynamics.tangency", |r| {
        let tol = c.s.tol("tangency");
        let worst = max_of(c.samples.iter().map(|x| check_tangency(&c.ex.field, m, x)));
        r.measure("max_defect", worst).tolerance("tangency", tol).verdict(worst <= tol);
        Ok(())
    });
    let decomposition = guard("dynamics.decomposition", |r| {
        let tol = c.s.tol("decomposition");
        let mut worst = 0.0f64;
        for x in &c.samples {
            let split = m.null_splitting(x)?;
            let v = c.ex.field.eval(x);
            let (n, s) = decompose(&c.ex.field, &split, x)?;
            worst = worst.max((&v - n - s).norm() / v.norm().max(1.0));
        }
        r.measure("max_relative_defect", worst).tolerance("decomposition", tol).verdict(worst <= tol);
        Ok(())
    });
    vec![integration, constraint, tangency, decomposition]
}

fn dissipation(c: &Context) -> Vec<CheckRecord> {
    let (ex, s, m) = (c.ex, c.s, &c.ex.manifold);
    let non_uniform = "registered functional has no pointwise dissipation constant: dPsi(V) vanishes off Z";

    let compat = guard("dissipation.compatibility", |r| {
        let tol = s.tol("compatibility");
        let mut worst = 0.0f64;
        for x in &c.samples {
            worst = worst.max(check_compatibility(&ex.functional, &m.null_splitting(x)?, x));
        }
        r.measure("max_dpsi_n", worst).tolerance("compatibility", tol).verdict(worst <= tol);
        Ok(())
    });

    let mut constant = CheckRecord::new("dissipation.pointwise_constant");
    constant.tolerance("c_min", s.tol("c_min")).tolerance("ratio_floor", RATIO_FLOOR);
    match &c.c_hat {
        Ok(v) => {
            constant.measure("c_hat", *v);
            if ex.info.uniform_dissipation {
                constant.verdict(*v >= s.tol("c_min"));
            } else {
                constant.skip(non_uniform);
            }
        }
        Err(e) if !ex.info.uniform_dissipation => {
            constant.skip(format!("{non_uniform} ({e})"));
        }
        Err(e) => {
            constant.fail(e.to_string());
        }
    }

    let equivalence = guard("dissipation.z_equivalence", |r| {
        let (tol_psi, tol_vs) = (s.tol("psi_zero"), s.tol("z"));
        r.tolerance("psi_zero", tol_psi).tolerance("z", tol_vs);
        if !ex.info.uniform_dissipation {
            r.skip(non_uniform);
            return Ok(());
        }
        let mut pts = c.ensemble.clone();
        pts.extend(c.representatives.iter().cloned());
        if let Ok(cp) = &c.critical {
            pts.push(cp.point.clone());
        }
        let eq = z_equivalence(&ex.functional, &ex.field, m, &pts, tol_psi, tol_vs)?;
        r.measure_value("samples", eq.samples)
            .measure_value("in_z", eq.in_z)
            .measure("agreement", eq.fraction())
            .verdict(eq.agreements == eq.samples);
        Ok(())
    });

    let monotone = {
        let mut r = CheckRecord::new("dissipation.monotone");
        let results: Vec<_> = c.trajectories.iter().map(|t| monotonicity_check(t, &ex.functional, &ex.field)).collect();
        let worst = results.iter().map(|m| m.max_increment - m.slack).fold(f64::NEG_INFINITY, f64::max);
        r.measure("max_increment", results.iter().map(|m| m.max_increment).fold(f64::NEG_INFINITY, f64::max))
            .measure("max_slack", max_of(results.iter().map(|m| m.slack)))
            .measure("worst_excess", worst)
            .verdict(results.iter().all(|m| m.passed()));
        r
    };

    let budget = guard("dissipation.budget", |r| {
        let rel = s.tol("budget_rel");
        r.tolerance("budget_rel", rel);
        let c_hat = match &c.c_hat {
            Ok(v) if *v > 0.0 => *v,
            _ => {
                r.skip("no positive dissipation constant on the samples");
                return Ok(());
            }
        };
        let mut worst_ratio = 0.0f64;
        let mut ok = true;
        for t in &c.trajectories {
            let b = dissipation_budget(t, &ex.functional, c_hat)?;
            ok &= b.holds(rel);
            if b.rhs > 0.0 {
                worst_ratio = worst_ratio.max(b.lhs / b.rhs);
            }
        }
        r.measure("c_hat", c_hat).measure("max_lhs_over_rhs", worst_ratio).verdict(ok);
        Ok(())
    });

    let omega = guard("dissipation.omega_in_z", |r| {
        let tol = s.tol("z");
        r.tolerance("z", tol)
            .tolerance("cluster_radius", s.tol("cluster_radius"))
            .tolerance("tail_fraction", s.tol("tail_fraction"));
        let mut worst = 0.0f64;
        let mut clusters = 0usize;
        for o in &c.omega {
            let reps = o.as_ref().map_err(|e| e.clone())?;
            clusters = clusters.max(reps.len());
            for x in reps {
                worst = worst.max(z_indicator(&ex.field, &m.null_splitting(x)?, m, x)?);
            }
        }
        r.measure("max_vs_norm", worst).measure_value("max_clusters", clusters).verdict(worst <= tol);
        if let Some(Ok(reps)) = c.omega.first() {
            r.measure_value("first_limit", vector(&reps[0]));
        }
        Ok(())
    });

    vec![compat, constant, equivalence, monotone, budget, omega]
}

/// Norm of the quotient coordinates that are not angles.
fn quotient_radius(ex: &Example, x: &DVector<f64>) -> f64 {
    let y = ex.foliation.quotient(x);
    y.iter()
        .enumerate()
        .filter(|(i, _)| !ex.foliation.quotient_periodic.contains(i))
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt()
}

fn reduction(c: &Context) -> Vec<CheckRecord> {
    let (ex, s, m, fol) = (c.ex, c.s, &c.ex.manifold, &c.ex.foliation);
    let noncompact = "leaves declared noncompact";
    let mut out = Vec::new();

    out.push(guard("reduction.projectable", |r| {
        let tol = s.tol("projectability");
        let res = verify_projectability(&ex.field, fol, m, &c.samples, None)?;
        r.measure("residual", res).tolerance("projectability", tol).verdict(res <= tol);
        Ok(())
    }));
    out.push(guard("reduction.fiber", |r| {
        let tol = s.tol("fiber");
        let mut worst = 0.0f64;
        for x in &c.samples {
            worst = worst.max(fol.fiber_defect(m, x)?);
        }
        r.measure("max_dpi_n", worst).tolerance("fiber", tol).verdict(worst <= tol);
        Ok(())
    }));
    let step = fol.leaf_period.map_or(0.5, |p| p / 10.0);
    out.push(guard("reduction.metric_leaf_invariant", |r| {
        let tol = s.tol("metric_invariance");
        let mut worst = 0.0f64;
        for x in c.ensemble.iter().take(TRIAL_POINTS) {
            let g0 = reduced_metric(fol, m, x)?;
            for p in leaf_sample(fol, m, x, 10, step)?.points {
                worst = worst.max((reduced_metric(fol, m, &p)? - &g0).abs().max());
            }
        }
        r.measure("max_difference", worst).tolerance("metric_invariance", tol).verdict(worst <= tol);
        Ok(())
    }));
    out.push(guard("reduction.projected_velocity", |r| {
        let tol = s.tol("projected_velocity");
        let mut worst = 0.0f64;
        for t in &c.trajectories {
            let red = project_trajectory(t, fol);
            let speed = max_of(red.velocities().iter().map(|v| v.norm()));
            worst = worst.max(projected_velocity_residual(&red, t, fol, m, &ex.field)? / speed.max(1.0));
        }
        r.measure("max_relative_residual", worst).tolerance("projected_velocity", tol).verdict(worst <= tol);
        Ok(())
    }));
    out.push(guard("reduction.finite_energy", |r| {
        let mut total = 0.0f64;
        let mut last_partial = 0.0f64;
        let mut ok = true;
        for t in &c.trajectories {
            let red = project_trajectory(t, fol).with_metrics(t, fol, m)?;
            let e = finite_energy_check(&red)?;
            ok &= e.decaying() && e.total.is_finite();
            total = total.max(e.total);
            last_partial = last_partial.max(e.partials.last().map_or(0.0, |p| p.1));
        }
        r.measure("max_total", total).measure("max_final_window", last_partial).verdict(ok);
        Ok(())
    }));
    out.push(guard("reduction.leaf_compactness", |r| {
        let arc = fol.leaf_period.map_or(1.0, |p| p / 16.0);
        let leaf = leaf_sample(fol, m, &c.ensemble[0], 16, arc)?;
        r.measure_value("declared_compact", fol.leaves_compact)
            .measure_value("escaped_chart", leaf.escaped)
            .verdict(!leaf.contradicts(fol));
        Ok(())
    }));

    out.push(guard("reduction.absorbing", |r| {
        if !fol.leaves_compact {
            r.skip(noncompact);
            return Ok(());
        }
        let radius = max_of(c.ensemble.iter().map(|x| quotient_radius(ex, x)));
        let inflated: Vec<DVector<f64>> = c
            .ensemble
            .iter()
            .map(|x| {
                let mut y = x.clone();
                for i in 0..y.len() {
                    if !m.periodic().contains(&i) {
                        y[i] *= 2.0;
                    }
                }
                ex.place(y)
            })
            .collect();
        let opts = IntegrationOptions::new(s.t_final, s.dt).recording_every(s.record_every);
        let rep = absorbing_check(m, &ex.field, &inflated, |x| quotient_radius(ex, x), radius, s.t_transient, &opts)?;
        let latest = rep.entry_times.iter().map(|t| t.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        r.measure("radius", radius)
            .measure("latest_entry", latest)
            .measure("max_after_transient", rep.max_after_transient)
            .tolerance("t_transient", s.t_transient)
            .verdict(rep.passed());
        Ok(())
    }));
    out.push(guard("reduction.asymptotic_compactness", |r| {
        let tol = s.tol("spread");
        if !fol.leaves_compact {
            r.skip(noncompact);
            return Ok(());
        }
        let times = [0.0, s.t_transient, s.t_final];
        let spread = reduced_spread(m, &ex.field, fol, &c.ensemble, &times, s.dt)?;
        r.measure_list("times", &times).measure_list("spread", &spread).tolerance("spread", tol);
        r.verdict(spread[2] <= tol && spread[2] <= spread[0]);
        Ok(())
    }));

    let attractor = c.attractor.as_ref().map_err(|e| e.clone());
    out.push(guard("reduction.attractor_stationary", |r| {
        let a = attractor.clone()?;
        let tol = 10.0 * s.tol("cluster_radius");
        r.measure("hausdorff_gap", a.hausdorff_gap)
            .measure_value("cloud_points", a.cloud_m.len())
            .tolerance("ten_cluster_radii", tol)
            .verdict(a.hausdorff_gap <= tol);
        Ok(())
    }));
    out.push(guard("reduction.saturation", |r| {
        let eps = s.tol("saturation_eps");
        r.tolerance("saturation_eps", eps);
        if !fol.leaves_compact {
            r.skip(noncompact);
            return Ok(());
        }
        let a = attractor.clone()?;
        let fraction = nullfold_core::reduction::saturation_check(a, fol, m, eps, 64, 32)?;
        r.measure("fraction", fraction).verdict(fraction >= 1.0);
        Ok(())
    }));
    out.push(guard("reduction.dimension_bound", |r| {
        let a = attractor.clone()?;
        let slack = s.tol("dimension_slack");
        let bound = (ex.info.m - ex.info.k) as f64;
        let red = a.box_dimension_red(&BOX_SCALES)?;
        r.measure("box_dimension_reduced", red.slope)
            .measure("fit_residual", red.residual)
            .measure("bound", bound)
            .tolerance("dimension_slack", slack)
            .measure_list("scales", &BOX_SCALES);
        if let Ok(full) = a.box_dimension_m(&BOX_SCALES) {
            r.measure("box_dimension_full", full.slope);
        }
        r.verdict(red.slope <= bound + slack);
        Ok(())
    }));
    out
}

fn spectral(c: &Context) -> Vec<CheckRecord> {
    let (ex, s, m) = (c.ex, c.s, &c.ex.manifold);
    let reports: Result<Vec<_>> = c.representatives.iter().map(|x| spectral_report(&ex.field, m, x, s.eta)).collect();
    let none = c.representatives.is_empty();

    let gap = guard("spectral.gap", |r| {
        r.tolerance("eta", s.eta);
        if none {
            r.fail("no omega-limit representatives to linearize at");
            return Ok(());
        }
        let reps = reports.clone()?;
        let abscissa = reps.iter().map(|p| p.spectral_abscissa).fold(f64::NEG_INFINITY, f64::max);
        let first: Vec<serde_json::Value> =
            reps[0].eigenvalues.iter().map(|z| serde_json::json!([number(z.re), number(z.im)])).collect();
        r.measure("spectral_abscissa", abscissa)
            .measure_value("points", reps.len())
            .measure_value("eigenvalues_first", first)
            .verdict(abscissa < -s.eta);
        Ok(())
    });
    let center = guard("spectral.center_free", |r| {
        if none {
            r.fail("no omega-limit representatives to linearize at");
            return Ok(());
        }
        let reps = reports.clone()?;
        r.verdict(reps.iter().all(|p| p.center_free));
        Ok(())
    });
    let critical = c.critical.as_ref().map_err(|e| e.clone());
    let morse = guard("spectral.morse", |r| {
        let cp = critical.clone()?;
        let split = m.null_splitting(&cp.point)?;
        let h = hessian_transversal(&ex.functional, &split, &cp.point)?;
        r.measure_value("point", vector(&cp.point))
            .measure_list("eigenvalues", &h.eigenvalues)
            .verdict(h.nondegenerate);
        Ok(())
    });
    let tangent = guard("spectral.critical_tangent", |r| {
        let tol = s.tol("critical_tangent");
        let cp = critical.clone()?;
        r.measure("tangent_residual", cp.tangent_residual)
            .measure("gradient_residual", cp.residual)
            .measure_value("newton_iterations", cp.iterations)
            .tolerance("critical_tangent", tol)
            .verdict(cp.tangent_residual <= tol);
        Ok(())
    });
    vec![gap, center, morse, tangent]
}

fn hypotheses(c: &Context) -> Vec<CheckRecord> {
    let s = c.s;
    let h = c.hypotheses.as_ref().map_err(|e| e.clone());
    let splitting = if c.ex.invariant_splitting.is_some() { "registered invariant" } else { "euclidean complement" };
    vec![
        guard("hypotheses.h1_precompact", |r| {
            let h = h.clone()?;
            r.measure("radius", h.h1.radius).verdict(h.h1.bounded);
            Ok(())
        }),
        guard("hypotheses.h2_constant_rank", |r| {
            let h = h.clone()?;
            r.measure_value("observed", h.h2.observed.clone()).verdict(h.h2.corank_constant);
            Ok(())
        }),
        guard("hypotheses.h3_contraction", |r| {
            let h = h.clone()?;
            r.measure("alpha", h.h3.alpha)
                .measure("c", h.h3.c)
                .measure("fit_residual", h.h3.fit_residual)
                .measure_value("splitting", splitting)
                .verdict(h.h3.passed());
            Ok(())
        }),
        guard("hypotheses.h4_invariant_bundles", |r| {
            let h = h.clone()?;
            let tol = s.tol("h4");
            r.measure("n_residual", h.h4.n_residual)
                .measure("s_residual", h.h4.s_residual)
                .measure_value("splitting", splitting)
                .tolerance("h4", tol)
                .verdict(h.h4.n_residual <= tol && h.h4.s_residual <= tol);
            Ok(())
        }),
    ]
}

fn convergence(c: &Context) -> Vec<CheckRecord> {
    let (ex, s, m) = (c.ex, c.s, &c.ex.manifold);
    let h = c.hypotheses.as_ref().map_err(|e| e.clone());
    let rate = guard("convergence.sigma_rate", |r| {
        let h = h.clone()?;
        let slack = s.tol("rate_slack");
        let sc = &h.sigma_convergence;
        r.measure("alpha", h.h3.alpha)
            .measure("final_distance", sc.final_dist)
            .measure("fit_residual", sc.fit_residual)
            .measure_value("proxy", sc.proxy)
            .tolerance("rate_slack", slack);
        match sc.rate {
            Some(rate) => {
                r.measure("rate", rate).verdict(rate >= h.h3.alpha - slack);
            }
            None if sc.max_dist == 0.0 => {
                r.measure_value("rate", serde_json::Value::Null);
            }
            None => {
                r.fail("distance to Sigma could not be fitted");
            }
        }
        Ok(())
    });
    let invariant = guard("convergence.sigma_invariant", |r| {
        let tol = s.tol("sigma_invariance");
        let start = c.critical.as_ref().map_err(|e| e.clone())?.point.clone();
        let traj = integrate(m, &ex.field, &start, &IntegrationOptions::new(s.t_final, s.dt).recording_every(10))?;
        let mut worst = 0.0f64;
        for x in &traj.states {
            let d = match &ex.sigma_distance {
                Some(d) => d(x),
                None => transversal_speed(&ex.field, m, x)?,
            };
            worst = worst.max(d);
        }
        r.measure_value("start", vector(&start))
            .measure("max_distance", worst)
            .tolerance("sigma_invariance", tol)
            .verdict(worst <= tol);
        Ok(())
    });
    let cauchy = guard("convergence.projected_cauchy", |r| {
        let mut ok = true;
        let mut tail = 0.0f64;
        for t in &c.trajectories {
            let p = projected_convergence(&project_trajectory(t, &ex.foliation))?;
            ok &= p.is_cauchy;
            tail = tail.max(p.oscillations.last().map_or(0.0, |o| o.1));
            if !r.measured.contains_key("first_limit") {
                r.measure_value("first_limit", vector(&p.limit));
            }
        }
        r.measure("max_final_oscillation", tail).verdict(ok);
        Ok(())
    });
    vec![rate, invariant, cauchy]
}

/// Runs the full battery on `ex` with the resolved settings.
pub fn run_battery(ex: &Example, s: &Settings) -> Battery {
    let c = Context::build(ex, s);
    let mut checks = Vec::new();
    checks.extend(geometry(&c));
    checks.extend(dynamics(&c));
    checks.extend(dissipation(&c));
    checks.extend(reduction(&c));
    checks.extend(spectral(&c));
    checks.extend(hypotheses(&c));
    checks.extend(convergence(&c));
    Battery { checks, ensemble: c.ensemble, trajectories: c.trajectories, attractor: c.attractor.ok() }
}

/// Largest chart distance between two ensembles; used by tests of determinism.
pub fn ensemble_distance(a: &[DVector<f64>], b: &[DVector<f64>], periodic: &[usize]) -> f64 {
    a.iter().zip(b).map(|(x, y)| wrapped_difference(x, y, periodic).norm()).fold(0.0, f64::max)
}
