//! Acceptance criteria. Runs without the libtest harness so each criterion
//! prints exactly one pass/fail line; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nullfold::run::diagnose;
use nullfold::{run_settings, ExperimentConfig};
use nullfold_core::dissipation::{
    dissipation_budget, dissipation_constant, monotonicity_check, omega_limit_estimate, z_equivalence,
    OmegaLimitOptions, RATIO_FLOOR,
};
use nullfold_core::dynamics::{integrate, transversal_speed};
use nullfold_core::geometry::normal_causal_character;
use nullfold_core::reduction::{leaf_sample, project_trajectory, reduced_metric, saturation_check};
use nullfold_core::spectral::{
    check_hypotheses, hessian_transversal, projected_convergence, spectral_report, TrialPlan,
};
use nullfold_core::systems::{self, fixtures, minkowski_family};
use nullfold_core::{diff, AmbientSpace, Constraint, DVector, Example, FunctionalSpec, IntegrationOptions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn dv(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corank_boundary() -> Outcome {
    let start = Instant::now();
    for s in [1.0, 0.5, 0.9, 1.1, 1.5] {
        let m = minkowski_family(s);
        let x = dv(vec![0.7 * s, 0.7, 0.3]);
        let k = m.null_splitting(&x).map_err(|e| format!("s = {s}: {e}"))?.corank;
        let expected = if s == 1.0 { 1 } else { 0 };
        ensure(k == expected, || format!("s = {s}: corank {k}, expected {expected}"))?;
        let c = normal_causal_character(&AmbientSpace::minkowski(3), &Constraint::linear(dv(vec![1.0, -s, 0.0])), &x)
            .map_err(|e| e.to_string())?;
        ensure((c - (s * s - 1.0)).abs() <= 1e-10, || format!("s = {s}: causal character {c}"))?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 1.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("k = 1 only at s = 1; causal character = s^2 - 1 ({elapsed:.3}s)"))
}

fn z_characterization() -> Outcome {
    let ex = systems::null_hyperplane();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<DVector<f64>> = (0..1000)
        .map(|i| {
            let a = rng.random_range(-5.0..5.0);
            let z = match i % 4 {
                0 => 0.0,
                1 => rng.random_range(-1e-7..1e-7),
                _ => rng.random_range(-5.0..5.0),
            };
            dv(vec![a, a, z])
        })
        .collect();
    let mut agree = 0;
    for x in &points {
        let d = ex.functional.derivative_along(x, &ex.field.eval(x)).abs();
        let vs = transversal_speed(&ex.field, &ex.manifold, x).map_err(|e| e.to_string())?;
        if (d <= 1e-8) == (vs <= 1e-6) {
            agree += 1;
        }
    }
    let eq = z_equivalence(&ex.functional, &ex.field, &ex.manifold, &points, 1e-8, 1e-6).map_err(|e| e.to_string())?;
    ensure(agree == 1000 && eq.agreements == eq.samples, || format!("{agree}/1000 agree"))?;
    Ok(format!("1000/1000 agree, {} in Z", eq.in_z))
}

fn dissipation_and_budget() -> Outcome {
    let ex = systems::null_hyperplane();
    let traj = integrate(&ex.manifold, &ex.field, &dv(vec![0.0, 0.0, 1.0]), &IntegrationOptions::new(20.0, 1e-3))
        .map_err(|e| e.to_string())?
        .with_psi(|x| ex.functional.value(x));
    let mono = monotonicity_check(&traj, &ex.functional, &ex.field);
    ensure(mono.passed(), || format!("Psi increased by {}", mono.max_increment))?;
    let reps = omega_limit_estimate(&traj, &OmegaLimitOptions::default()).map_err(|e| e.to_string())?;
    ensure(reps.len() == 1, || format!("{} omega-limit clusters", reps.len()))?;
    let err = (&reps[0] - dv(vec![0.5, 0.5, 0.0])).norm();
    ensure(err <= 1e-4, || format!("omega-limit off by {err}"))?;
    let c_hat = dissipation_constant(&ex.functional, &ex.field, &ex.manifold, &traj.states, RATIO_FLOOR)
        .map_err(|e| e.to_string())?;
    ensure((c_hat - 1.0).abs() <= 1e-6, || format!("c_hat = {c_hat}"))?;
    let b = dissipation_budget(&traj, &ex.functional, c_hat).map_err(|e| e.to_string())?;
    ensure((b.lhs - 0.5).abs() <= 1e-4, || format!("energy integral {}", b.lhs))?;
    ensure((b.lhs - b.rhs).abs() <= 1e-4, || format!("integral {} vs budget {}", b.lhs, b.rhs))?;
    Ok(format!("omega error {err:.1e}, c_hat = {c_hat:.9}, integral {:.7}", b.lhs))
}

fn quotient_structure() -> Outcome {
    let mut worst_metric = 0.0f64;
    let mut worst_fiber = 0.0f64;
    let starts = [
        ("null-hyperplane", vec![dv(vec![0.3, 0.3, 0.8]), dv(vec![-1.0, -1.0, -0.4])]),
        ("circle-contract", vec![dv(vec![0.5, 1.2]), dv(vec![4.0, -0.7])]),
        ("presymplectic-toy", vec![dv(vec![0.4, -0.3, 1.0]), dv(vec![-1.1, 0.6, 5.0])]),
    ];
    for (name, points) in starts {
        let ex = Example::by_name(name).expect("registered");
        let step = ex.foliation.leaf_period.map_or(0.5, |p| p / 10.0);
        for x in &points {
            let g0 = reduced_metric(&ex.foliation, &ex.manifold, x).map_err(|e| format!("{name}: {e}"))?;
            let leaf = leaf_sample(&ex.foliation, &ex.manifold, x, 10, step).map_err(|e| format!("{name}: {e}"))?;
            for p in &leaf.points {
                let g = reduced_metric(&ex.foliation, &ex.manifold, p).map_err(|e| format!("{name}: {e}"))?;
                worst_metric = worst_metric.max((g - &g0).abs().max());
                worst_fiber = worst_fiber.max(ex.foliation.fiber_defect(&ex.manifold, p).map_err(|e| e.to_string())?);
            }
        }
    }
    ensure(worst_metric <= 1e-8, || format!("reduced metric varies by {worst_metric}"))?;
    ensure(worst_fiber <= 1e-8, || format!("d pi(N) = {worst_fiber}"))?;
    Ok(format!("metric variation {worst_metric:.1e}, d pi(N) {worst_fiber:.1e}"))
}

fn finite_energy_compact_fibres() -> Outcome {
    let ex = systems::circle_contract(1.0);
    let traj = integrate(&ex.manifold, &ex.field, &ex.default_start, &IntegrationOptions::new(30.0, 1e-2))
        .map_err(|e| e.to_string())?;
    let red = project_trajectory(&traj, &ex.foliation)
        .with_metrics(&traj, &ex.foliation, &ex.manifold)
        .map_err(|e| e.to_string())?;
    let tail = red.energy_between(10.0, 20.0);
    ensure(tail <= 1e-8, || format!("tail energy {tail}"))?;
    let opts = OmegaLimitOptions { tail_fraction: 0.5, cluster_radius: 0.5, max_clusters: 64 };
    let reps = omega_limit_estimate(&traj, &opts).map_err(|e| e.to_string())?;
    let off_leaf = reps.iter().map(|x| x[1].abs()).fold(0.0, f64::max);
    ensure(off_leaf <= 1e-6, || format!("omega-limit at |y| = {off_leaf}"))?;
    Ok(format!("tail energy {tail:.2e}, omega-limit within {off_leaf:.1e} of y = 0"))
}

fn dimension_bound() -> Outcome {
    let scales = nullfold::battery::BOX_SCALES;
    let mut notes = Vec::new();
    for name in ["circle-contract", "presymplectic-toy"] {
        let s = ExperimentConfig::for_example(name).resolve(None).map_err(|e| e.to_string())?;
        let (_, battery, ex) = diagnose(&s).map_err(|e| e.to_string())?;
        let a = battery.attractor.ok_or(format!("{name}: no attractor estimate"))?;
        let red = a.box_dimension_red(&scales).map_err(|e| e.to_string())?.slope;
        ensure(red <= 0.2, || format!("{name}: reduced dimension {red}"))?;
        if name == "circle-contract" {
            let full = a.box_dimension_m(&scales).map_err(|e| e.to_string())?.slope;
            ensure((full - 1.0).abs() <= 0.15, || format!("unreduced dimension {full}"))?;
            notes.push(format!("circle full {full:.3}"));
        }
        let sat = saturation_check(&a, &ex.foliation, &ex.manifold, 1e-2, 64, 32).map_err(|e| e.to_string())?;
        ensure(sat == 1.0, || format!("{name}: saturation {sat}"))?;
        notes.push(format!("{name} reduced {red:.3}"));
    }
    Ok(format!("{}; saturation 1.0", notes.join(", ")))
}

fn spectral_checks() -> Outcome {
    let toy = systems::presymplectic_toy(1.0, 0.3);
    let x = dv(vec![0.0, 0.0, 1.0]);
    let r = spectral_report(&toy.field, &toy.manifold, &x, 0.4).map_err(|e| e.to_string())?;
    let mut eig: Vec<(f64, f64)> = r.eigenvalues.iter().map(|z| (z.re, z.im)).collect();
    eig.sort_by(|a, b| a.1.total_cmp(&b.1));
    let root = 0.75f64.sqrt();
    let expected = [(-0.5, -root), (-0.5, root)];
    ensure(eig.len() == 2, || format!("{} transversal eigenvalues", eig.len()))?;
    for (z, w) in eig.iter().zip(&expected) {
        ensure((z.0 - w.0).abs() <= 1e-6 && (z.1 - w.1).abs() <= 1e-6, || format!("eigenvalue {z:?}"))?;
    }
    ensure(r.eta_margin > 0.0, || "gap fails at eta = 0.4".into())?;
    let r6 = spectral_report(&toy.field, &toy.manifold, &x, 0.6).map_err(|e| e.to_string())?;
    ensure(r6.eta_margin <= 0.0, || "gap holds at eta = 0.6".into())?;

    let ex = systems::null_hyperplane();
    let p = dv(vec![0.2, 0.2, 0.0]);
    let split = ex.manifold.null_splitting(&p).map_err(|e| e.to_string())?;
    let quad = FunctionalSpec::new(Box::new(|x| 0.5 * x[2] * x[2]), 0.0);
    let quartic = FunctionalSpec::new(Box::new(|x| 0.25 * x[2].powi(4)), 0.0);
    let hq = hessian_transversal(&quad, &split, &p).map_err(|e| e.to_string())?;
    let h4 = hessian_transversal(&quartic, &split, &p).map_err(|e| e.to_string())?;
    ensure(hq.nondegenerate && !h4.nondegenerate, || "Morse verdicts wrong".into())?;
    Ok("eigenvalues -0.5 +/- 0.8660254i; gap at 0.4 not 0.6; y^2/2 Morse, y^4/4 not".into())
}

fn hypotheses_and_convergence() -> Outcome {
    let cc = systems::circle_contract(1.0);
    let plan = TrialPlan::new(vec![dv(vec![0.0, 2.0]), dv(vec![3.0, -1.0])], 10.0, 1e-2);
    let d = |x: &DVector<f64>| x[1].abs();
    let r = check_hypotheses(&cc.manifold, &cc.field, &plan, None, Some(&d)).map_err(|e| e.to_string())?;
    let alpha_c = r.h3.alpha;
    ensure((alpha_c - 1.0).abs() <= 0.01, || format!("circle alpha {alpha_c}"))?;
    ensure(r.h4.n_residual <= 1e-8 && r.h4.s_residual <= 1e-8, || format!("circle {:?}", r.h4))?;
    let rate = r.sigma_convergence.rate.ok_or("circle: no Sigma rate")?;
    ensure((rate - alpha_c).abs() <= 0.01, || format!("circle Sigma rate {rate} vs alpha {alpha_c}"))?;

    let toy = systems::presymplectic_toy(1.0, 0.3);
    let plan = TrialPlan::new(vec![dv(vec![1.0, 0.0, 0.0]), dv(vec![-0.5, 0.5, 2.0])], 40.0, 1e-2);
    let d = |x: &DVector<f64>| x[0].hypot(x[1]);
    let r = check_hypotheses(&toy.manifold, &toy.field, &plan, None, Some(&d)).map_err(|e| e.to_string())?;
    let alpha_t = r.h3.alpha;
    ensure((alpha_t - 0.5).abs() <= 0.05, || format!("toy alpha {alpha_t}"))?;
    let rate = r.sigma_convergence.rate.ok_or("toy: no Sigma rate")?;
    ensure((rate - alpha_t).abs() <= 0.05, || format!("toy Sigma rate {rate} vs alpha {alpha_t}"))?;

    let mut limit_err = 0.0f64;
    for (ex, t_final) in [(systems::null_hyperplane(), 30.0), (cc, 30.0), (toy, 40.0)] {
        let traj = integrate(&ex.manifold, &ex.field, &ex.default_start, &IntegrationOptions::new(t_final, 1e-2))
            .map_err(|e| e.to_string())?;
        let p = projected_convergence(&project_trajectory(&traj, &ex.foliation)).map_err(|e| e.to_string())?;
        ensure(p.is_cauchy, || format!("{}: projection not Cauchy", ex.info.name))?;
        // every example's quotient limit is the origin
        limit_err = limit_err.max(p.limit.norm());
    }
    ensure(limit_err <= 1e-4, || format!("limit error {limit_err}"))?;

    let coupled = fixtures::coupled_toy(1.0);
    let plan = TrialPlan::new(vec![dv(vec![1.0, 0.0, 0.0])], 20.0, 1e-2);
    let r = check_hypotheses(&coupled.manifold, &coupled.field, &plan, None, None).map_err(|e| e.to_string())?;
    ensure(r.h4.s_residual > 1e-2, || format!("coupled fixture H4 residual {}", r.h4.s_residual))?;
    Ok(format!(
        "alpha {alpha_c:.4} / {alpha_t:.4}; limit error {limit_err:.1e}; coupled H4 {:.2}",
        r.h4.s_residual
    ))
}

fn numerical_hygiene() -> Outcome {
    let ex = systems::null_hyperplane();
    let x0 = dv(vec![0.0, 0.0, 1.0]);
    let shift = 0.5 * (1.0 - (-10.0f64).exp());
    let exact = dv(vec![shift, shift, (-5.0f64).exp()]);
    let err = |dt: f64| -> Result<f64, String> {
        let t = integrate(&ex.manifold, &ex.field, &x0, &IntegrationOptions::new(5.0, dt)).map_err(|e| e.to_string())?;
        Ok((t.last_state() - &exact).norm())
    };
    let ratio = err(0.1)? / err(0.05)?;
    ensure((12.0..=20.0).contains(&ratio), || format!("RK4 order ratio {ratio}"))?;

    let cases = [
        ("null-hyperplane", dv(vec![0.4, 0.4, -0.8])),
        ("circle-contract", dv(vec![1.0, 0.6])),
        ("presymplectic-toy", dv(vec![0.2, -0.5, 2.0])),
    ];
    for (name, x) in &cases {
        let ex = Example::by_name(name).expect("registered");
        let f = |p: &DVector<f64>| ex.field.eval(p);
        let psi = |p: &DVector<f64>| ex.functional.value(p);
        for h in [1e-2, 3e-3, 1e-3] {
            let ej = (diff::jacobian(f, x, h) - ex.field.jacobian(x)).abs().max();
            let eg = (diff::gradient(psi, x, h) - ex.functional.differential(x)).norm();
            ensure(ej <= 10.0 * h * h + 1e-9 && eg <= 10.0 * h * h + 1e-9, || {
                format!("{name}: h = {h}, Jacobian error {ej}, gradient error {eg}")
            })?;
        }
    }

    let mut s = ExperimentConfig::for_example("circle-contract").resolve(None).map_err(|e| e.to_string())?;
    s.t_final = 12.0;
    s.t_transient = 4.0;
    s.t_sample = 8.0;
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        run_settings(&s, d.path()).map_err(|e| e.to_string())?;
    }
    let files = tree(dirs[0].path());
    ensure(files.len() == s.ensemble_count + 3, || format!("{} output files", files.len()))?;
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{} differs between runs", f.display()))?;
    }
    Ok(format!("RK4 ratio {ratio:.2}; derivatives O(h^2); {} files byte-identical", files.len()))
}

fn tree(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable output directory") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("corank boundary of the Minkowski family", corank_boundary),
        ("dPsi(V) = 0 iff V_S = 0 on 1000 points", z_characterization),
        ("monotone functional, omega-limit and energy budget", dissipation_and_budget),
        ("reduced metric and fibre invariance", quotient_structure),
        ("finite energy and compact fibres", finite_energy_compact_fibres),
        ("attractor dimension bound and saturation", dimension_bound),
        ("transversal spectrum, gap and Morse check", spectral_checks),
        ("H1-H4, Sigma rate and projected convergence", hypotheses_and_convergence),
        ("integrator order, derivatives and determinism", numerical_hygiene),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
