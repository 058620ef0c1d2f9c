//! Null foliation and quotient: projectability of the flow, the reduced
//! metric, projected trajectories and their energy, leaf sampling, attractor
//! clouds, leaf saturation and box-counting dimension.

use alloc::{collections::BTreeMap, vec::Vec};

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::diff;
use crate::dissipation::trapezoid;
use crate::dynamics::{decompose, integrate, IntegrationOptions, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{
    check_generators_span, wrap_angle, wrapped_difference, Manifold, MatrixMap, VectorMap,
};
use crate::linalg;

/// Generators of the null foliation together with a quotient map whose
/// fibres contain the leaves.
pub struct Foliation {
    generators: Vec<VectorMap>,
    quotient: VectorMap,
    quotient_jacobian: Option<MatrixMap>,
    pub quotient_periodic: Vec<usize>,
    /// Declared, not verified.
    pub leaves_compact: bool,
    /// Flow time after which a generator returns to its start, for compact leaves.
    pub leaf_period: Option<f64>,
    /// Leaf samples leaving this chart ball are reported as escaped.
    pub chart_radius: Option<f64>,
}

impl Foliation {
    pub fn new(generators: Vec<VectorMap>, quotient: VectorMap, leaves_compact: bool) -> Self {
        Self {
            generators,
            quotient,
            quotient_jacobian: None,
            quotient_periodic: Vec::new(),
            leaves_compact,
            leaf_period: None,
            chart_radius: None,
        }
    }

    pub fn with_quotient_jacobian(mut self, jacobian: MatrixMap) -> Self {
        self.quotient_jacobian = Some(jacobian);
        self
    }

    pub fn with_quotient_periodic(mut self, coords: Vec<usize>) -> Self {
        self.quotient_periodic = coords;
        self
    }

    pub fn with_leaf_period(mut self, period: f64) -> Self {
        self.leaf_period = Some(period);
        self
    }

    pub fn with_chart_radius(mut self, radius: f64) -> Self {
        self.chart_radius = Some(radius);
        self
    }

    pub fn generators(&self) -> &[VectorMap] {
        &self.generators
    }

    pub fn quotient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = (self.quotient)(x);
        for &i in &self.quotient_periodic {
            y[i] = wrap_angle(y[i]);
        }
        y
    }

    pub fn quotient_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.quotient_jacobian {
            Some(j) => j(x),
            None => diff::jacobian(&self.quotient, x, diff::step_for(x)),
        }
    }

    /// `max |dpi(x) b|` over the null basis at `x`; zero when fibres contain leaves.
    pub fn fiber_defect(&self, manifold: &Manifold, x: &DVector<f64>) -> Result<f64> {
        let split = manifold.null_splitting(x)?;
        let dpi = self.quotient_jacobian(x);
        Ok(split
            .basis_n
            .column_iter()
            .map(|b| (&dpi * b).norm() / b.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max))
    }
}

/// Largest transversal component of `[V, W]` over generators `W` and samples.
pub fn verify_projectability(
    field: &VectorField,
    foliation: &Foliation,
    manifold: &Manifold,
    samples: &[DVector<f64>],
    h: Option<f64>,
) -> Result<f64> {
    let eval = |x: &DVector<f64>| field.eval(x);
    let mut worst = 0.0f64;
    for x in samples {
        let split = manifold.null_splitting(x)?;
        check_generators_span(&split, foliation.generators(), x, manifold.rank_tol())?;
        let h = h.unwrap_or_else(|| diff::step_for(x));
        for w in foliation.generators() {
            let bracket = diff::lie_bracket(eval, w, x, h);
            worst = worst.max((&split.proj_s * bracket).norm());
        }
    }
    Ok(worst)
}

/// Gram matrix of the form on the transversal lifts of the quotient frame.
pub fn reduced_metric(foliation: &Foliation, manifold: &Manifold, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let split = manifold.null_splitting(x)?;
    let a = foliation.quotient_jacobian(x) * &split.basis_s;
    if a.nrows() != a.ncols() {
        return Err(Error::QuotientRankError);
    }
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (a_inv, cond) = linalg::left_inverse(&a);
    if cond > 1e12 {
        return Err(Error::QuotientRankError);
    }
    let gram = split.transversal_gram(manifold)?;
    Ok(linalg::symmetrize(&(a_inv.transpose() * gram * a_inv)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub periodic: Vec<usize>,
    /// Reduced metric per sample; Euclidean when absent.
    pub metrics: Option<Vec<DMatrix<f64>>>,
}

impl ReducedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Attaches the reduced metric evaluated along the source trajectory.
    pub fn with_metrics(mut self, trajectory: &Trajectory, foliation: &Foliation, manifold: &Manifold) -> Result<Self> {
        let metrics = trajectory
            .states
            .iter()
            .map(|x| reduced_metric(foliation, manifold, x))
            .collect::<Result<Vec<_>>>()?;
        self.metrics = Some(metrics);
        Ok(self)
    }

    /// Velocity by second-order finite differences (one-sided at the ends).
    pub fn velocities(&self) -> Vec<DVector<f64>> {
        let n = self.len();
        let p = &self.points;
        let t = &self.times;
        let d = |a: usize, b: usize| wrapped_difference(&p[a], &p[b], &self.periodic);
        (0..n)
            .map(|i| {
                if n < 2 {
                    DVector::zeros(p[0].len())
                } else if n == 2 {
                    d(1, 0) / (t[1] - t[0])
                } else if i == 0 {
                    let h = t[1] - t[0];
                    (d(1, 0) * 4.0 - d(2, 0)) / (2.0 * h)
                } else if i == n - 1 {
                    let h = t[n - 1] - t[n - 2];
                    (d(n - 1, n - 2) * 4.0 - d(n - 1, n - 3)) / (2.0 * h)
                } else {
                    d(i + 1, i - 1) / (t[i + 1] - t[i - 1])
                }
            })
            .collect()
    }

    /// `|Ydot|^2` in the reduced metric at each sample.
    pub fn speed_squared(&self) -> Vec<f64> {
        self.velocities()
            .iter()
            .enumerate()
            .map(|(i, v)| match &self.metrics {
                Some(m) => v.dot(&(&m[i] * v)),
                None => v.norm_squared(),
            })
            .collect()
    }

    /// Energy `int |Ydot|^2 dt` over `[a, b]`.
    pub fn energy_between(&self, a: f64, b: f64) -> f64 {
        let sq = self.speed_squared();
        let (t, y): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(sq)
            .filter(|(t, _)| **t >= a - 1e-12 && **t <= b + 1e-12)
            .map(|(t, y)| (*t, y))
            .unzip();
        trapezoid(&t, &y)
    }
}

/// `Y(t_i) = pi(X(t_i))`.
pub fn project_trajectory(trajectory: &Trajectory, foliation: &Foliation) -> ReducedTrajectory {
    ReducedTrajectory {
        times: trajectory.times.clone(),
        points: trajectory.states.iter().map(|x| foliation.quotient(x)).collect(),
        periodic: foliation.quotient_periodic.clone(),
        metrics: None,
    }
}

/// Largest gap at interior samples between the finite-difference reduced
/// velocity and `dpi(V_S)`.
pub fn projected_velocity_residual(
    reduced: &ReducedTrajectory,
    trajectory: &Trajectory,
    foliation: &Foliation,
    manifold: &Manifold,
    field: &VectorField,
) -> Result<f64> {
    let vel = reduced.velocities();
    let mut worst = 0.0f64;
    let interior = reduced.len().saturating_sub(1);
    for (x, v) in trajectory.states.iter().zip(&vel).take(interior).skip(1) {
        let split = manifold.null_splitting(x)?;
        let (_, v_s) = decompose(field, &split, x)?;
        let predicted = foliation.quotient_jacobian(x) * v_s;
        worst = worst.max((v - predicted).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteEnergy {
    pub total: f64,
    /// `(T, int_T^{2T} |Ydot|^2 dt)` for doubling `T`.
    pub partials: Vec<(f64, f64)>,
}

impl FiniteEnergy {
    /// Successive doubling-window partials shrink.
    pub fn decaying(&self) -> bool {
        self.partials.windows(2).all(|w| w[1].1 <= w[0].1)
            && self
                .partials
                .windows(2)
                .all(|w| w[0].1 <= f64::MIN_POSITIVE || w[1].1 / w[0].1 < 1.0)
    }
}

pub fn finite_energy_check(reduced: &ReducedTrajectory) -> Result<FiniteEnergy> {
    if reduced.len() < 100 {
        return Err(Error::InvalidArgument("finite-energy check needs at least 100 samples"));
    }
    let t0 = reduced.times[0];
    let end = *reduced.times.last().expect("nonempty");
    let span = end - t0;
    let total = reduced.energy_between(t0, end);
    let mut partials = Vec::new();
    let mut t = span / 16.0;
    while 2.0 * t <= span + 1e-12 {
        partials.push((t0 + t, reduced.energy_between(t0 + t, t0 + 2.0 * t)));
        t *= 2.0;
    }
    Ok(FiniteEnergy { total, partials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafSample {
    pub points: Vec<DVector<f64>>,
    /// Some sample left the declared chart ball: evidence of a noncompact leaf.
    pub escaped: bool,
}

impl LeafSample {
    /// Escape contradicts a compact-leaf declaration.
    pub fn contradicts(&self, foliation: &Foliation) -> bool {
        self.escaped && foliation.leaves_compact
    }
}

fn flow_generator(
    manifold: &Manifold,
    generator: &VectorMap,
    x: &DVector<f64>,
    time: f64,
) -> Result<DVector<f64>> {
    let substeps = (time.abs() / 0.01).ceil().max(1.0) as usize;
    let h = time / substeps as f64;
    let mut y = x.clone();
    for _ in 0..substeps {
        let k1 = generator(&y);
        let k2 = generator(&(&y + &k1 * (h / 2.0)));
        let k3 = generator(&(&y + &k2 * (h / 2.0)));
        let k4 = generator(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        y = manifold.project(&y)?;
    }
    manifold.wrap(&mut y);
    Ok(y)
}

/// Points on the leaf through `x`, reached by flowing each generator in turn
/// by multiples of `arc_step`.
pub fn leaf_sample(
    foliation: &Foliation,
    manifold: &Manifold,
    x: &DVector<f64>,
    count: usize,
    arc_step: f64,
) -> Result<LeafSample> {
    let gens = foliation.generators();
    if gens.is_empty() {
        return Ok(LeafSample { points: alloc::vec![x.clone(); count.max(1)], escaped: false });
    }
    let mut cursors: Vec<DVector<f64>> = alloc::vec![x.clone(); gens.len()];
    let mut points = Vec::with_capacity(count);
    let mut escaped = false;
    for j in 0..count {
        let g = j % gens.len();
        if j >= gens.len() {
            cursors[g] = flow_generator(manifold, &gens[g], &cursors[g], arc_step)?;
        }
        let p = cursors[g].clone();
        if let Some(r) = foliation.chart_radius {
            let mut free = p.clone();
            for &i in manifold.periodic() {
                free[i] = 0.0;
            }
            escaped |= free.norm() > r;
        }
        points.push(p);
    }
    Ok(LeafSample { points, escaped })
}

/// Grid bucket index answering "is any point within `eps`" queries, with
/// periodic coordinates wrapped.
pub struct CellIndex<'a> {
    points: &'a [DVector<f64>],
    periodic: Vec<usize>,
    cell: Vec<f64>,
    wrap_cells: Vec<Option<i64>>,
    buckets: BTreeMap<Vec<i64>, Vec<usize>>,
    eps: f64,
}

impl<'a> CellIndex<'a> {
    pub fn new(points: &'a [DVector<f64>], periodic: &[usize], eps: f64) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let mut cell = alloc::vec![eps; dim];
        let mut wrap_cells = alloc::vec![None; dim];
        for &i in periodic {
            let n = (core::f64::consts::TAU / eps).floor().max(1.0);
            cell[i] = core::f64::consts::TAU / n;
            wrap_cells[i] = Some(n as i64);
        }
        let mut index = Self { points, periodic: periodic.to_vec(), cell, wrap_cells, buckets: BTreeMap::new(), eps };
        for (k, p) in points.iter().enumerate() {
            let key = index.key(p);
            index.buckets.entry(key).or_default().push(k);
        }
        index
    }

    fn key(&self, p: &DVector<f64>) -> Vec<i64> {
        (0..p.len())
            .map(|i| {
                let v = if self.wrap_cells[i].is_some() { wrap_angle(p[i]) } else { p[i] };
                let c = (v / self.cell[i]).floor() as i64;
                match self.wrap_cells[i] {
                    Some(n) => c.rem_euclid(n),
                    None => c,
                }
            })
            .collect()
    }

    /// Keys of the 3^d cells around `q`.
    fn neighbourhood(&self, q: &DVector<f64>) -> impl Iterator<Item = Vec<i64>> + '_ {
        let base = self.key(q);
        let total = 3usize.pow(base.len() as u32);
        (0..total).map(move |code| {
            let mut key = base.clone();
            let mut c = code;
            for (i, k) in key.iter_mut().enumerate() {
                *k += (c % 3) as i64 - 1;
                c /= 3;
                if let Some(n) = self.wrap_cells[i] {
                    *k = k.rem_euclid(n);
                }
            }
            key
        })
    }

    pub fn any_within(&self, q: &DVector<f64>) -> bool {
        self.neighbourhood(q).any(|key| {
            self.buckets.get(&key).is_some_and(|bucket| {
                bucket.iter().any(|&j| wrapped_difference(q, &self.points[j], &self.periodic).norm() <= self.eps)
            })
        })
    }

    /// Distance to the nearest indexed point, if it is within `eps`. Every
    /// such point lies in the neighbourhood, so the answer is exact.
    pub fn nearest_within(&self, q: &DVector<f64>) -> Option<f64> {
        let mut best = f64::INFINITY;
        for key in self.neighbourhood(q) {
            if let Some(bucket) = self.buckets.get(&key) {
                for &j in bucket {
                    best = best.min(wrapped_difference(q, &self.points[j], &self.periodic).norm());
                }
            }
        }
        (best <= self.eps).then_some(best)
    }
}

/// Symmetric Hausdorff distance with periodic coordinates wrapped.
pub fn hausdorff(a: &[DVector<f64>], b: &[DVector<f64>], periodic: &[usize]) -> f64 {
    directed_hausdorff(a, b, periodic).max(directed_hausdorff(b, a, periodic))
}

fn directed_hausdorff(a: &[DVector<f64>], b: &[DVector<f64>], periodic: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    // Early-break scan; visiting `b` in a strided order finds a close point
    // quickly for clouds stored in trajectory order.
    // Exact nearest neighbours from a grid where they are close; a strided
    // early-break scan for the rest.
    let dim = b[0].len();
    let mut extent = 0.0f64;
    for i in 0..dim {
        if periodic.contains(&i) {
            extent = extent.max(core::f64::consts::TAU);
        } else {
            let lo = b.iter().map(|x| x[i]).fold(f64::INFINITY, f64::min);
            let hi = b.iter().map(|x| x[i]).fold(f64::NEG_INFINITY, f64::max);
            extent = extent.max(hi - lo);
        }
    }
    let index = (extent > 0.0 && extent.is_finite()).then(|| CellIndex::new(b, periodic, extent / 512.0));
    let stride = stride_coprime(b.len());
    let mut h = 0.0f64;
    for p in a {
        if let Some(d) = index.as_ref().and_then(|ix| ix.nearest_within(p)) {
            h = h.max(d);
            continue;
        }
        let mut best = f64::INFINITY;
        let mut j = 0usize;
        for _ in 0..b.len() {
            let d = wrapped_difference(p, &b[j], periodic).norm();
            if d < best {
                best = d;
                if best <= h {
                    break;
                }
            }
            j = (j + stride) % b.len();
        }
        h = h.max(best);
    }
    h
}

fn stride_coprime(n: usize) -> usize {
    let mut s = ((n as f64) * 0.618_033_988_75) as usize | 1;
    while s > 1 && gcd(s, n) != 1 {
        s += 2;
    }
    s.max(1)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDimension {
    pub counts: Vec<(f64, usize)>,
    pub slope: f64,
    pub residual: f64,
}

/// Least-squares slope of `log N(eps)` against `log(1/eps)`.
pub fn box_dimension(points: &[DVector<f64>], scales: &[f64], periodic: &[usize]) -> Result<BoxDimension> {
    let degenerate = Error::DegenerateScaleRange { min_points: 500, min_decades: 1.5 };
    if points.len() < 500 || scales.len() < 4 || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(degenerate);
    }
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().copied().fold(0.0, f64::max);
    if (hi / lo).log10() < 1.5 {
        return Err(degenerate);
    }
    let mut counts = Vec::with_capacity(scales.len());
    for &eps in scales {
        let mut boxes = alloc::collections::BTreeSet::new();
        for p in points {
            let key: Vec<i64> = (0..p.len())
                .map(|i| {
                    let v = if periodic.contains(&i) { wrap_angle(p[i]) } else { p[i] };
                    (v / eps).floor() as i64
                })
                .collect();
            boxes.insert(key);
        }
        counts.push((eps, boxes.len()));
    }
    let x: Vec<f64> = counts.iter().map(|(e, _)| (1.0 / e).ln()).collect();
    let y: Vec<f64> = counts.iter().map(|(_, c)| (*c as f64).ln()).collect();
    let (slope, _, residual) = linalg::linear_fit(&x, &y).ok_or(degenerate)?;
    Ok(BoxDimension { counts, slope, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorOptions {
    pub t_transient: f64,
    pub t_sample: f64,
    pub dt: f64,
    /// Record every `stride`-th integration step.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorEstimate {
    pub cloud_m: Vec<DVector<f64>>,
    pub cloud_red: Vec<DVector<f64>>,
    /// Hausdorff distance between the first-half and second-half sampling epochs.
    pub hausdorff_gap: f64,
    pub periodic_m: Vec<usize>,
    pub periodic_red: Vec<usize>,
}

impl AttractorEstimate {
    /// Pools the samples in `[t_transient, t_transient + t_sample]` across
    /// trajectories, in order.
    pub fn from_trajectories(trajectories: &[Trajectory], foliation: &Foliation, t_transient: f64, t_sample: f64) -> Self {
        let split_time = t_transient + t_sample / 2.0;
        let end = t_transient + t_sample + 1e-9 * t_sample.max(1.0);
        let mut first = Vec::new();
        let mut second = Vec::new();
        let mut cloud_m = Vec::new();
        for traj in trajectories {
            for (t, x) in traj.since(t_transient).take_while(|(t, _)| *t <= end) {
                cloud_m.push(x.clone());
                if t < split_time {
                    first.push(x.clone());
                } else {
                    second.push(x.clone());
                }
            }
        }
        let periodic_m = trajectories.first().map(|t| t.periodic.clone()).unwrap_or_default();
        let hausdorff_gap = hausdorff(&first, &second, &periodic_m);
        let cloud_red = cloud_m.iter().map(|x| foliation.quotient(x)).collect();
        Self { cloud_m, cloud_red, hausdorff_gap, periodic_m, periodic_red: foliation.quotient_periodic.clone() }
    }

    pub fn box_dimension_m(&self, scales: &[f64]) -> Result<BoxDimension> {
        box_dimension(&self.cloud_m, scales, &self.periodic_m)
    }

    pub fn box_dimension_red(&self, scales: &[f64]) -> Result<BoxDimension> {
        box_dimension(&self.cloud_red, scales, &self.periodic_red)
    }
}

/// Integrates the ensemble past the transient and pools the sampling window.
pub fn attractor_estimate(
    manifold: &Manifold,
    field: &VectorField,
    foliation: &Foliation,
    ensemble: &[DVector<f64>],
    opts: &AttractorOptions,
) -> Result<AttractorEstimate> {
    if ensemble.len() < 16 {
        return Err(Error::InvalidArgument("attractor estimation needs an ensemble of at least 16 points"));
    }
    let run = IntegrationOptions::new(opts.t_transient + opts.t_sample, opts.dt).recording_every(opts.stride);
    let trajectories = ensemble
        .iter()
        .map(|x0| integrate(manifold, field, x0, &run))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttractorEstimate::from_trajectories(&trajectories, foliation, opts.t_transient, opts.t_sample))
}

/// Fraction of leaf samples through cloud points that lie within `epsilon`
/// of the cloud. Equals one for a saturated cloud.
pub fn saturation_check(
    estimate: &AttractorEstimate,
    foliation: &Foliation,
    manifold: &Manifold,
    epsilon: f64,
    leaf_count: usize,
    max_seeds: usize,
) -> Result<f64> {
    if !foliation.leaves_compact {
        return Err(Error::InvalidArgument("saturation check requires compact leaves"));
    }
    let period = foliation
        .leaf_period
        .ok_or(Error::InvalidArgument("compact foliation must declare its leaf period"))?;
    if estimate.cloud_m.is_empty() {
        return Ok(1.0);
    }
    let index = CellIndex::new(&estimate.cloud_m, &estimate.periodic_m, epsilon);
    let step = (estimate.cloud_m.len() / max_seeds.max(1)).max(1);
    let (mut hits, mut total) = (0usize, 0usize);
    for seed in estimate.cloud_m.iter().step_by(step) {
        let leaf = leaf_sample(foliation, manifold, seed, leaf_count, period / leaf_count as f64)?;
        for p in &leaf.points {
            total += 1;
            if index.any_within(p) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingReport {
    /// First time each trajectory is inside the ball, if ever.
    pub entry_times: Vec<Option<f64>>,
    /// Largest distance observed after `t_transient`.
    pub max_after_transient: f64,
    pub radius: f64,
    pub t_transient: f64,
}

impl AbsorbingReport {
    pub fn passed(&self) -> bool {
        self.entry_times.iter().all(|t| matches!(t, Some(t) if *t <= self.t_transient))
            && self.max_after_transient <= self.radius
    }
}

/// Integrates an ensemble and records when each member enters the set
/// `{distance <= radius}` and whether it stays after `t_transient`.
pub fn absorbing_check<D>(
    manifold: &Manifold,
    field: &VectorField,
    ensemble: &[DVector<f64>],
    distance: D,
    radius: f64,
    t_transient: f64,
    opts: &IntegrationOptions,
) -> Result<AbsorbingReport>
where
    D: Fn(&DVector<f64>) -> f64,
{
    let mut entry_times = Vec::with_capacity(ensemble.len());
    let mut max_after = 0.0f64;
    for x0 in ensemble {
        let traj = integrate(manifold, field, x0, opts)?;
        let mut entry = None;
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let d = distance(x);
            if entry.is_none() && d <= radius {
                entry = Some(*t);
            }
            if *t >= t_transient {
                max_after = max_after.max(d);
            }
        }
        entry_times.push(entry);
    }
    Ok(AbsorbingReport { entry_times, max_after_transient: max_after, radius, t_transient })
}

/// Diameter of `{pi(phi_t(x_k))}` at each requested time. Shrinking
/// diameters together with compact fibres give convergent subsequences of
/// `phi_{t_k}(x_k)`.
pub fn reduced_spread(
    manifold: &Manifold,
    field: &VectorField,
    foliation: &Foliation,
    starts: &[DVector<f64>],
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let opts = IntegrationOptions::new(t_max, dt);
    let trajs = starts
        .iter()
        .map(|x| integrate(manifold, field, x, &opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .map(|&t| {
            let pts: Vec<DVector<f64>> = trajs
                .iter()
                .map(|tr| {
                    let i = tr.times.partition_point(|s| *s < t - 1e-12).min(tr.len() - 1);
                    foliation.quotient(&tr.states[i])
                })
                .collect();
            let mut diam = 0.0f64;
            for (i, a) in pts.iter().enumerate() {
                for b in &pts[i + 1..] {
                    diam = diam.max(wrapped_difference(a, b, &foliation.quotient_periodic).norm());
                }
            }
            diam
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::systems::{self, fixtures};
    use alloc::{boxed::Box, vec};
    use approx::assert_relative_eq;
    use core::f64::consts::{PI, TAU};

    fn dv(v: Vec<f64>) -> DVector<f64> {
        DVector::from_vec(v)
    }

    fn toy_matrix(lambda: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -lambda])
    }

    #[test]
    fn projectability_examples() {
        let ex = systems::null_hyperplane();
        let samples: Vec<_> = [-1.0, 0.0, 0.4, 2.0].iter().map(|&z| dv(vec![z + 1.0, z + 1.0, z])).collect();
        let r = verify_projectability(&ex.field, &ex.foliation, &ex.manifold, &samples, None).unwrap();
        assert!(r <= 1e-8, "{r}");

        let bad = fixtures::non_projectable_field();
        let r = verify_projectability(&bad, &ex.foliation, &ex.manifold, &samples, None).unwrap();
        assert!(r > 1e-3, "{r}");

        let cc = systems::circle_contract(1.0);
        let samples = vec![dv(vec![0.5, 1.0]), dv(vec![4.0, -0.3])];
        let r = verify_projectability(&cc.field, &cc.foliation, &cc.manifold, &samples, None).unwrap();
        assert!(r <= 1e-8, "{r}");
    }

    #[test]
    fn reduced_metric_examples() {
        let ex = systems::null_hyperplane();
        let a = reduced_metric(&ex.foliation, &ex.manifold, &dv(vec![0.0, 0.0, 1.0])).unwrap();
        let b = reduced_metric(&ex.foliation, &ex.manifold, &dv(vec![5.0, 5.0, 1.0])).unwrap();
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-12);
        assert!((&a - &b).abs().max() <= 1e-10);

        let toy = systems::presymplectic_toy(1.0, 0.3);
        let g = reduced_metric(&toy.foliation, &toy.manifold, &dv(vec![0.2, -0.7, 1.0])).unwrap();
        assert!((g - DMatrix::<f64>::identity(2, 2)).abs().max() <= 1e-12);
    }

    #[test]
    fn quotient_of_zero_rank_is_an_error() {
        let ex = systems::null_hyperplane();
        let along_leaf = Foliation::new(
            vec![Box::new(|_| dv(vec![1.0, 1.0, 0.0]))],
            Box::new(|x| dv(vec![x[0]])),
            false,
        );
        // d(x0) vanishes on S = span(e2)
        let err = reduced_metric(&along_leaf, &ex.manifold, &dv(vec![0.0, 0.0, 1.0])).unwrap_err();
        assert_eq!(err, Error::QuotientRankError);
    }

    #[test]
    fn projected_trajectories() {
        let ex = systems::null_hyperplane();
        let traj = integrate(&ex.manifold, &ex.field, &ex.default_start, &IntegrationOptions::new(5.0, 1e-3)).unwrap();
        let red = project_trajectory(&traj, &ex.foliation);
        for (t, y) in red.times.iter().zip(&red.points) {
            assert!((y[0] - (-t).exp()).abs() <= 1e-6);
        }
        let r = projected_velocity_residual(&red, &traj, &ex.foliation, &ex.manifold, &ex.field).unwrap();
        assert!(r <= 1e-5, "{r}");

        let eq = integrate(&ex.manifold, &ex.field, &dv(vec![2.0, 2.0, 0.0]), &IntegrationOptions::new(1.0, 1e-2)).unwrap();
        let red = project_trajectory(&eq, &ex.foliation);
        assert!(red.points.iter().all(|y| y[0] == 0.0));

        let toy = systems::presymplectic_toy(1.0, 0.3);
        let traj = integrate(&toy.manifold, &toy.field, &toy.default_start, &IntegrationOptions::new(10.0, 1e-3)).unwrap();
        let red = project_trajectory(&traj, &toy.foliation);
        let a = toy_matrix(1.0);
        for (t, y) in red.times.iter().zip(&red.points).step_by(97) {
            let exact = oracle::expm(&(&a * *t)) * dv(vec![1.0, 0.0]);
            assert!((y - exact).norm() <= 1e-5, "t = {t}");
        }
    }

    #[test]
    fn finite_energy_examples() {
        let ex = systems::null_hyperplane();
        let traj = integrate(
            &ex.manifold,
            &ex.field,
            &ex.default_start,
            &IntegrationOptions::new(20.0, 1e-3),
        )
        .unwrap();
        let red = project_trajectory(&traj, &ex.foliation);
        let e = finite_energy_check(&red).unwrap();
        assert_relative_eq!(e.total, 0.5, epsilon = 1e-5);
        assert!(red.energy_between(10.0, 20.0) <= 1e-8);
        assert!(e.decaying(), "{:?}", e.partials);

        let constant = ReducedTrajectory {
            times: (0..200).map(|i| i as f64 * 0.1).collect(),
            points: vec![dv(vec![0.3]); 200],
            periodic: vec![],
            metrics: None,
        };
        assert_eq!(finite_energy_check(&constant).unwrap().total, 0.0);

        let toy = systems::presymplectic_toy(1.0, 0.0);
        let traj = integrate(
            &toy.manifold,
            &toy.field,
            &toy.default_start,
            &IntegrationOptions::new(30.0, 1e-3).recording_every(10),
        )
        .unwrap();
        let red = project_trajectory(&traj, &toy.foliation);
        let e = finite_energy_check(&red).unwrap();
        let a = toy_matrix(1.0);
        let y0 = dv(vec![1.0, 0.0]);
        let exact = oracle::simpson(|t| (&a * oracle::expm(&(&a * t)) * &y0).norm_squared(), 0.0, 30.0, 3000);
        assert!((e.total - exact).abs() <= 1e-4, "{} vs {exact}", e.total);
    }

    #[test]
    fn too_short_for_energy_check() {
        let short = ReducedTrajectory { times: vec![0.0, 1.0], points: vec![dv(vec![0.0]); 2], periodic: vec![], metrics: None };
        assert!(finite_energy_check(&short).is_err());
    }

    #[test]
    fn leaf_samples() {
        let cc = systems::circle_contract(1.0);
        let leaf = leaf_sample(&cc.foliation, &cc.manifold, &dv(vec![0.0, 0.7]), 8, TAU / 8.0).unwrap();
        assert!(!leaf.escaped);
        for (j, p) in leaf.points.iter().enumerate() {
            let expected = dv(vec![TAU * j as f64 / 8.0, 0.7]);
            assert!(wrapped_difference(p, &expected, &[0]).norm() <= 1e-9, "{j}: {p}");
        }

        let ex = systems::null_hyperplane();
        let leaf = leaf_sample(&ex.foliation, &ex.manifold, &ex.default_start, 6, 3.0).unwrap();
        for (j, p) in leaf.points.iter().enumerate() {
            let s = 3.0 * j as f64;
            assert!((p - dv(vec![s, s, 1.0])).norm() <= 1e-9);
        }
        assert!(leaf.escaped);
        assert!(!leaf.contradicts(&ex.foliation));

        let toy = systems::presymplectic_toy(1.0, 0.3);
        let x = dv(vec![0.4, -0.2, 1.0]);
        let leaf = leaf_sample(&toy.foliation, &toy.manifold, &x, 16, TAU / 16.0).unwrap();
        for p in &leaf.points {
            assert!((toy.foliation.quotient(p) - dv(vec![0.4, -0.2])).norm() <= 1e-6);
        }
        let thetas: Vec<f64> = leaf.points.iter().map(|p| p[2]).collect();
        assert!(thetas.iter().all(|t| (0.0..TAU).contains(t)));
    }

    #[test]
    fn escape_contradicts_compact_declaration() {
        let ex = systems::null_hyperplane();
        let lying = Foliation::new(
            vec![Box::new(|_| dv(vec![1.0, 1.0, 0.0]))],
            Box::new(|x| dv(vec![x[2]])),
            true,
        )
        .with_chart_radius(10.0);
        let leaf = leaf_sample(&lying, &ex.manifold, &ex.default_start, 6, 3.0).unwrap();
        assert!(leaf.contradicts(&lying));
    }

    fn circle_points(n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|i| {
            let a = TAU * i as f64 / n as f64;
            dv(vec![a.cos(), a.sin()])
        }).collect()
    }

    const SCALES: [f64; 6] = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01];

    #[test]
    fn box_dimension_oracles() {
        let single = vec![dv(vec![0.0, 0.0]); 600];
        assert!(box_dimension(&single, &SCALES, &[]).unwrap().slope.abs() <= 0.2);

        let circle = box_dimension(&circle_points(4000), &SCALES, &[]).unwrap();
        assert!((circle.slope - 1.0).abs() <= 0.15, "{circle:?}");

        let grid: Vec<_> = (0..200)
            .flat_map(|i| (0..200).map(move |j| dv(vec![i as f64 / 200.0, j as f64 / 200.0])))
            .collect();
        let square = box_dimension(&grid, &SCALES, &[]).unwrap();
        assert!((square.slope - 2.0).abs() <= 0.15, "{square:?}");
    }

    #[test]
    fn box_dimension_rejects_degenerate_input() {
        let pts = circle_points(600);
        assert!(box_dimension(&pts[..100], &SCALES, &[]).is_err());
        assert!(box_dimension(&pts, &[0.1, 0.05, 0.02], &[]).is_err());
        assert!(box_dimension(&pts, &[0.1, 0.08, 0.05, 0.02], &[]).is_err());
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        let mut state = 12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut cloud = |n: usize, spread: f64| -> Vec<DVector<f64>> {
            (0..n).map(|_| dv(vec![TAU * next(), spread * next(), spread * next()])).collect()
        };
        let brute = |a: &[DVector<f64>], b: &[DVector<f64>]| {
            a.iter()
                .map(|p| b.iter().map(|q| wrapped_difference(p, q, &[0]).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        for (na, nb, spread) in [(400, 300, 1e-3), (200, 250, 2.0), (50, 5, 0.5)] {
            let a = cloud(na, spread);
            let b = cloud(nb, spread);
            let exact = brute(&a, &b).max(brute(&b, &a));
            assert_relative_eq!(hausdorff(&a, &b, &[0]), exact, epsilon = 1e-15);
        }
    }

    #[test]
    fn hausdorff_distance() {
        let a = vec![dv(vec![0.0, 0.0]), dv(vec![1.0, 0.0])];
        let b = vec![dv(vec![0.0, 0.5])];
        assert_relative_eq!(hausdorff(&a, &b, &[]), 1.25f64.sqrt(), epsilon = 1e-12);
        let c = vec![dv(vec![0.01, 0.0])];
        let d = vec![dv(vec![TAU - 0.01, 0.0])];
        assert_relative_eq!(hausdorff(&c, &d, &[0]), 0.02, epsilon = 1e-9);
    }

    fn circle_ensemble() -> Vec<DVector<f64>> {
        (0..16).map(|j| dv(vec![TAU * j as f64 / 16.0, -2.0 + 4.0 * j as f64 / 15.0])).collect()
    }

    #[test]
    fn circle_attractor() {
        let cc = systems::circle_contract(1.0);
        let opts = AttractorOptions { t_transient: 10.0, t_sample: 4.0 * PI, dt: 1e-2, stride: 1 };
        let est = attractor_estimate(&cc.manifold, &cc.field, &cc.foliation, &circle_ensemble(), &opts).unwrap();
        let max_y = est.cloud_m.iter().map(|x| x[1].abs()).fold(0.0, f64::max);
        assert!(max_y <= (-10.0f64).exp() * 2.0 * (1.0 + 1e-6));
        assert!(est.hausdorff_gap <= 1e-2, "{}", est.hausdorff_gap);
        for (x, y) in est.cloud_m.iter().zip(&est.cloud_red) {
            assert!((cc.foliation.quotient(x) - y).norm() <= 1e-10);
        }
        assert!((est.box_dimension_m(&SCALES).unwrap().slope - 1.0).abs() <= 0.15);
        assert!(est.box_dimension_red(&SCALES).unwrap().slope <= 0.2);

        let sat = saturation_check(&est, &cc.foliation, &cc.manifold, 1e-2, 64, 32).unwrap();
        assert_eq!(sat, 1.0);

        let half = AttractorEstimate {
            cloud_m: est.cloud_m.iter().filter(|x| x[0] < PI).cloned().collect(),
            ..est.clone()
        };
        let sat = saturation_check(&half, &cc.foliation, &cc.manifold, 1e-2, 64, 32).unwrap();
        assert!((sat - 0.5).abs() <= 0.05, "{sat}");
    }

    #[test]
    fn point_leaves_are_saturated() {
        let cc = systems::circle_contract(1.0);
        let points = Foliation::new(vec![], Box::new(|x| x.clone()), true).with_leaf_period(1.0);
        let est = AttractorEstimate {
            cloud_m: vec![dv(vec![1.0, 0.0]), dv(vec![2.0, 0.5])],
            cloud_red: vec![],
            hausdorff_gap: 0.0,
            periodic_m: vec![0],
            periodic_red: vec![],
        };
        assert_eq!(saturation_check(&est, &points, &cc.manifold, 1e-6, 8, 8).unwrap(), 1.0);
        assert!(saturation_check(&est, &systems::null_hyperplane().foliation, &cc.manifold, 1e-2, 8, 8).is_err());
    }

    #[test]
    fn equilibrium_attractor_is_a_point() {
        let ex = systems::null_hyperplane();
        let ensemble = vec![dv(vec![0.5, 0.5, 0.0]); 16];
        let opts = AttractorOptions { t_transient: 1.0, t_sample: 1.0, dt: 1e-2, stride: 1 };
        let est = attractor_estimate(&ex.manifold, &ex.field, &ex.foliation, &ensemble, &opts).unwrap();
        assert!(est.cloud_m.iter().all(|x| x == &ensemble[0]));
        assert_eq!(est.hausdorff_gap, 0.0);
        assert!(attractor_estimate(&ex.manifold, &ex.field, &ex.foliation, &ensemble[..4], &opts).is_err());
    }

    #[test]
    fn toy_attractor_concentrates_at_origin() {
        let toy = systems::presymplectic_toy(1.0, 0.3);
        let ensemble: Vec<_> = (0..16)
            .map(|j| {
                let a = TAU * j as f64 / 16.0;
                dv(vec![a.cos(), a.sin(), a])
            })
            .collect();
        let opts = AttractorOptions { t_transient: 15.0, t_sample: 5.0, dt: 1e-2, stride: 5 };
        let est = attractor_estimate(&toy.manifold, &toy.field, &toy.foliation, &ensemble, &opts).unwrap();
        let bound = 2.0 * (-0.5f64 * 15.0).exp();
        assert!(est.cloud_red.iter().all(|y| y.norm() <= bound));
    }

    #[test]
    fn absorbing_ball_and_spread() {
        let cc = systems::circle_contract(1.0);
        let inflated: Vec<_> = circle_ensemble().into_iter().map(|x| dv(vec![x[0], 2.0 * x[1]])).collect();
        let rep = absorbing_check(&cc.manifold, &cc.field, &inflated, |x| x[1].abs(), 1.0, 2.0, &IntegrationOptions::new(5.0, 1e-2))
            .unwrap();
        assert!(rep.passed(), "{rep:?}");
        let rep = absorbing_check(&cc.manifold, &cc.field, &inflated, |x| x[1].abs(), 1.0, 1.0, &IntegrationOptions::new(5.0, 1e-2))
            .unwrap();
        assert!(!rep.passed());

        let spread = reduced_spread(&cc.manifold, &cc.field, &cc.foliation, &inflated, &[0.0, 5.0, 10.0], 1e-2).unwrap();
        assert_relative_eq!(spread[0], 8.0, epsilon = 1e-12);
        assert!(spread[1] < spread[0] && spread[2] < 1e-3);
    }

    #[test]
    fn fiber_defect_vanishes_on_examples() {
        let ex = systems::null_hyperplane();
        assert!(ex.foliation.fiber_defect(&ex.manifold, &dv(vec![1.0, 1.0, 0.3])).unwrap() <= 1e-8);
        let toy = systems::presymplectic_toy(1.0, 0.0);
        assert!(toy.foliation.fiber_defect(&toy.manifold, &dv(vec![0.1, 0.2, 3.0])).unwrap() <= 1e-8);
    }
}
