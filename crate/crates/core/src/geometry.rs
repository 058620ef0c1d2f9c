//! Pointwise geometry of a constraint manifold carrying a possibly degenerate
//! induced form: tangent spaces, Gram matrices, corank detection and the
//! null/transversal splitting of the tangent bundle.
//!
//! Two chart modes are supported. In embedded mode states are points of the
//! ambient space `R^n` and tangent vectors are ambient vectors annihilated by
//! `dPhi`. In intrinsic mode states are chart coordinates in `R^m` and the form
//! is supplied directly; some coordinates may be angles with period `2 pi`.

use alloc::{boxed::Box, vec::Vec};
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::diff;
use crate::error::{Error, Result};
use crate::linalg;

pub type ScalarMap = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type SplittingMap = Box<dyn Fn(&DVector<f64>) -> Result<TangentSplitting> + Send + Sync>;

/// Relative singular-value threshold for corank detection.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Constraint tolerance enforced after every projection.
pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-9;

/// Ambient space `R^n` with a nondegenerate symmetric metric field.
pub struct AmbientSpace {
    dim: usize,
    metric: MatrixMap,
    expected_signature: Option<Vec<i8>>,
}

impl AmbientSpace {
    pub fn new(dim: usize, metric: MatrixMap) -> Self {
        Self { dim, metric, expected_signature: None }
    }

    pub fn constant(metric: DMatrix<f64>) -> Self {
        let dim = metric.nrows();
        Self::new(dim, Box::new(move |_| metric.clone()))
    }

    /// `diag(-1, 1, ..., 1)`.
    pub fn minkowski(dim: usize) -> Self {
        let mut diag = DVector::from_element(dim, 1.0);
        diag[0] = -1.0;
        let mut sig = alloc::vec![1i8; dim];
        sig[0] = -1;
        Self::constant(DMatrix::from_diagonal(&diag)).with_signature(sig)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::constant(DMatrix::identity(dim, dim)).with_signature(alloc::vec![1; dim])
    }

    pub fn with_signature(mut self, signature: Vec<i8>) -> Self {
        self.expected_signature = Some(signature);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expected_signature(&self) -> Option<&[i8]> {
        self.expected_signature.as_deref()
    }

    /// Metric at `x`, checked for symmetry and invertibility.
    pub fn metric_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = (self.metric)(x);
        if g.nrows() != self.dim || g.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: g.nrows() });
        }
        if linalg::asymmetry(&g) > 1e-12 * g.amax().max(1.0) {
            return Err(Error::InvalidArgument("ambient metric is not symmetric"));
        }
        let sv = g.clone().svd(false, false).singular_values;
        let min = sv.min();
        if min <= linalg::rank_threshold(&sv, DEFAULT_RANK_TOL) {
            return Err(Error::MetricSingular { min_singular: min });
        }
        Ok(g)
    }
}

/// Scalar constraint `Phi` whose zero set is the phase manifold.
pub struct Constraint {
    value: ScalarMap,
    differential: Option<VectorMap>,
}

impl Constraint {
    pub fn new(value: ScalarMap) -> Self {
        Self { value, differential: None }
    }

    pub fn with_differential(mut self, differential: VectorMap) -> Self {
        self.differential = Some(differential);
        self
    }

    /// Linear constraint `Phi(x) = c . x`.
    pub fn linear(coefficients: DVector<f64>) -> Self {
        let c = coefficients.clone();
        Self::new(Box::new(move |x| c.dot(x)))
            .with_differential(Box::new(move |_| coefficients.clone()))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn has_analytic_differential(&self) -> bool {
        self.differential.is_some()
    }

    /// `dPhi(x)`, analytic when supplied, else central differences.
    pub fn differential(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.differential {
            Some(d) => d(x),
            None => self.fd_differential(x, diff::step_for(x)),
        }
    }

    pub fn fd_differential(&self, x: &DVector<f64>, h: f64) -> DVector<f64> {
        diff::gradient(&self.value, x, h)
    }
}

pub enum Chart {
    Embedded { ambient: AmbientSpace, constraint: Constraint },
    Intrinsic { dim: usize, form: MatrixMap },
}

/// Constraint manifold carrying a possibly degenerate induced form.
pub struct Manifold {
    chart: Chart,
    periodic: Vec<usize>,
    registered_corank: Option<usize>,
    rank_tol: f64,
    constraint_tol: f64,
}

impl Manifold {
    pub fn embedded(ambient: AmbientSpace, constraint: Constraint) -> Self {
        Self::from_chart(Chart::Embedded { ambient, constraint })
    }

    pub fn intrinsic(dim: usize, form: MatrixMap) -> Self {
        Self::from_chart(Chart::Intrinsic { dim, form })
    }

    fn from_chart(chart: Chart) -> Self {
        Self {
            chart,
            periodic: Vec::new(),
            registered_corank: None,
            rank_tol: DEFAULT_RANK_TOL,
            constraint_tol: DEFAULT_CONSTRAINT_TOL,
        }
    }

    /// Declares coordinates that are angles of period `2 pi`.
    pub fn with_periodic(mut self, coords: Vec<usize>) -> Self {
        self.periodic = coords;
        self
    }

    /// Registers the expected constant corank; splittings that observe a
    /// different corank fail with [`Error::CorankMismatch`].
    pub fn with_corank(mut self, k: usize) -> Self {
        self.registered_corank = Some(k);
        self
    }

    pub fn with_rank_tol(mut self, tol: f64) -> Self {
        self.rank_tol = tol;
        self
    }

    pub fn with_constraint_tol(mut self, tol: f64) -> Self {
        self.constraint_tol = tol;
        self
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn is_embedded(&self) -> bool {
        matches!(self.chart, Chart::Embedded { .. })
    }

    /// Length of a state vector (ambient `n` or chart `m`).
    pub fn state_dim(&self) -> usize {
        match &self.chart {
            Chart::Embedded { ambient, .. } => ambient.dim(),
            Chart::Intrinsic { dim, .. } => *dim,
        }
    }

    /// Intrinsic dimension `m`.
    pub fn dim(&self) -> usize {
        match &self.chart {
            Chart::Embedded { ambient, .. } => ambient.dim() - 1,
            Chart::Intrinsic { dim, .. } => *dim,
        }
    }

    pub fn periodic(&self) -> &[usize] {
        &self.periodic
    }

    pub fn registered_corank(&self) -> Option<usize> {
        self.registered_corank
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn constraint_tol(&self) -> f64 {
        self.constraint_tol
    }

    pub fn constraint(&self) -> Option<&Constraint> {
        match &self.chart {
            Chart::Embedded { constraint, .. } => Some(constraint),
            Chart::Intrinsic { .. } => None,
        }
    }

    /// `|Phi(x)|` in embedded mode, zero otherwise.
    pub fn constraint_residual(&self, x: &DVector<f64>) -> f64 {
        self.constraint().map_or(0.0, |c| c.value(x).abs())
    }

    /// Reduces periodic coordinates into `[0, 2 pi)`.
    pub fn wrap(&self, x: &mut DVector<f64>) {
        for &i in &self.periodic {
            x[i] = wrap_angle(x[i]);
        }
    }

    /// Difference `a - b` with periodic components reduced to `(-pi, pi]`.
    pub fn chart_difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        wrapped_difference(a, b, &self.periodic)
    }

    pub fn chart_distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.chart_difference(a, b).norm()
    }

    /// Bilinear form acting on state-space vectors: the ambient metric in
    /// embedded mode, the chart form in intrinsic mode.
    pub fn form_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.chart {
            Chart::Embedded { ambient, .. } => ambient.metric_at(x),
            Chart::Intrinsic { dim, form } => {
                let f = form(x);
                if f.nrows() != *dim || f.ncols() != *dim {
                    return Err(Error::DimensionMismatch { expected: *dim, found: f.nrows() });
                }
                Ok(linalg::symmetrize(&f))
            }
        }
    }

    /// Orthonormal columns spanning `T_x M` (embedded) or the chart identity.
    pub fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.chart {
            Chart::Embedded { constraint, .. } => {
                let d = constraint.differential(x);
                let norm = d.norm();
                if norm <= self.rank_tol {
                    return Err(Error::RegularityViolated { norm });
                }
                let row = DMatrix::from_row_slice(1, d.len(), d.as_slice());
                Ok(linalg::kernel_split(&row, self.rank_tol).0)
            }
            Chart::Intrinsic { dim, .. } => Ok(DMatrix::identity(*dim, *dim)),
        }
    }

    /// `|dPhi(x) . v|`, zero in intrinsic mode.
    pub fn tangency_defect(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.constraint().map_or(0.0, |c| c.differential(x).dot(v).abs())
    }

    /// Gram matrix of the induced form on the columns of `basis`.
    pub fn induced_form(&self, x: &DVector<f64>, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if let Some(c) = self.constraint() {
            let d = c.differential(x);
            for col in basis.column_iter() {
                let residual = d.dot(&col).abs();
                if residual > 1e-9 * (d.norm() * col.norm()).max(1.0) {
                    return Err(Error::TangencyViolated { residual });
                }
            }
        }
        let g = self.form_at(x)?;
        Ok(linalg::symmetrize(&(basis.transpose() * g * basis)))
    }

    pub fn null_splitting(&self, x: &DVector<f64>) -> Result<TangentSplitting> {
        self.null_splitting_with_tol(x, self.rank_tol)
    }

    /// Kernel of the induced form and its Euclidean-orthogonal complement
    /// inside the tangent space.
    pub fn null_splitting_with_tol(&self, x: &DVector<f64>, rank_tol: f64) -> Result<TangentSplitting> {
        let tangent = self.tangent_basis(x)?;
        let gram = linalg::symmetrize(&(tangent.transpose() * self.form_at(x)? * &tangent));
        let (ker, row) = linalg::kernel_split(&gram, rank_tol);
        if let Some(expected) = self.registered_corank {
            if ker.ncols() != expected {
                return Err(Error::CorankMismatch { expected, found: ker.ncols() });
            }
        }
        TangentSplitting::from_bases(x.clone(), &tangent * ker, &tangent * row)
    }

    /// Newton projection onto `Phi = 0` along the Euclidean gradient of `Phi`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.project_with(x, self.constraint_tol, 5)
    }

    pub fn project_with(&self, x: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
        let Some(c) = self.constraint() else {
            let mut y = x.clone();
            self.wrap(&mut y);
            return Ok(y);
        };
        let mut y = x.clone();
        let mut phi = c.value(&y);
        for _ in 0..max_iter {
            if phi.abs() <= tol {
                return Ok(y);
            }
            let d = c.differential(&y);
            let nn = d.norm_squared();
            if nn == 0.0 || !nn.is_finite() {
                break;
            }
            y -= d * (phi / nn);
            phi = c.value(&y);
        }
        if phi.abs() <= tol {
            Ok(y)
        } else {
            Err(Error::ProjectionDiverged { residual: phi.abs() })
        }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = a % TAU;
    if r < 0.0 {
        r + TAU
    } else {
        r
    }
}

pub fn wrapped_difference(a: &DVector<f64>, b: &DVector<f64>, periodic: &[usize]) -> DVector<f64> {
    let mut d = a - b;
    for &i in periodic {
        let r = wrap_angle(d[i]);
        d[i] = if r > core::f64::consts::PI { r - TAU } else { r };
    }
    d
}

/// Pointwise decomposition `T_x M = N_x (+) S_x`.
///
/// Projectors are built from the combined basis `[B_N | B_S]` through its left
/// inverse, so any pair of bases for the same subspaces yields the same
/// projectors. `proj_n + proj_s` is the projector onto `T_x M`, which is the
/// identity in intrinsic mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSplitting {
    pub point: DVector<f64>,
    pub basis_n: DMatrix<f64>,
    pub basis_s: DMatrix<f64>,
    pub proj_n: DMatrix<f64>,
    pub proj_s: DMatrix<f64>,
    /// Rows mapping a tangent vector to its `B_N` coordinates.
    pub coords_n: DMatrix<f64>,
    /// Rows mapping a tangent vector to its `B_S` coordinates.
    pub coords_s: DMatrix<f64>,
    pub corank: usize,
}

impl TangentSplitting {
    pub fn from_bases(point: DVector<f64>, basis_n: DMatrix<f64>, basis_s: DMatrix<f64>) -> Result<Self> {
        let d = point.len();
        let basis_n = if basis_n.ncols() == 0 { DMatrix::zeros(d, 0) } else { basis_n };
        let basis_s = if basis_s.ncols() == 0 { DMatrix::zeros(d, 0) } else { basis_s };
        let k = basis_n.ncols();
        let combined = linalg::hstack(&basis_n, &basis_s);
        let (inv, condition) = linalg::left_inverse(&combined);
        if condition > 1e12 {
            return Err(Error::SplittingIllConditioned { condition });
        }
        let coords_n = inv.rows(0, k).into_owned();
        let coords_s = inv.rows(k, basis_s.ncols()).into_owned();
        let proj_n = &basis_n * &coords_n;
        let proj_s = &basis_s * &coords_s;
        Ok(Self { point, basis_n, basis_s, proj_n, proj_s, coords_n, coords_s, corank: k })
    }

    pub fn state_dim(&self) -> usize {
        self.point.len()
    }

    /// Rank `m - k` of the transversal complement.
    pub fn transversal_rank(&self) -> usize {
        self.basis_s.ncols()
    }

    pub fn tangent_projector(&self) -> DMatrix<f64> {
        &self.proj_n + &self.proj_s
    }

    /// Gram matrix of the form restricted to `B_S`.
    pub fn transversal_gram(&self, manifold: &Manifold) -> Result<DMatrix<f64>> {
        let g = manifold.form_at(&self.point)?;
        Ok(linalg::symmetrize(&(self.basis_s.transpose() * g * &self.basis_s)))
    }
}

/// `g(x)^{-1} dPhi(x)`.
pub fn ambient_gradient(space: &AmbientSpace, constraint: &Constraint, x: &DVector<f64>) -> Result<DVector<f64>> {
    let g = space.metric_at(x)?;
    let d = constraint.differential(x);
    g.lu()
        .solve(&d)
        .ok_or(Error::MetricSingular { min_singular: 0.0 })
}

/// `g(grad Phi, grad Phi)`; zero marks a null normal and a degenerate
/// induced form.
pub fn normal_causal_character(space: &AmbientSpace, constraint: &Constraint, x: &DVector<f64>) -> Result<f64> {
    let grad = ambient_gradient(space, constraint, x)?;
    let g = space.metric_at(x)?;
    Ok(grad.dot(&(g * &grad)))
}

/// Largest transversal component of the brackets of null generators over the
/// sample points. Small values are numerical evidence that the null
/// distribution is involutive.
pub fn involutivity_residual(
    manifold: &Manifold,
    generators: &[VectorMap],
    samples: &[DVector<f64>],
    h: Option<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in samples {
        let split = manifold.null_splitting(x)?;
        check_generators_span(&split, generators, x, manifold.rank_tol())?;
        let h = h.unwrap_or_else(|| diff::step_for(x));
        for (i, u) in generators.iter().enumerate() {
            for w in &generators[i + 1..] {
                let bracket = diff::lie_bracket(u, w, x, h);
                worst = worst.max((&split.proj_s * bracket).norm());
            }
        }
    }
    Ok(worst)
}

/// Fails unless the generator values at `x` lie in `N_x` and span it.
pub fn check_generators_span(
    split: &TangentSplitting,
    generators: &[VectorMap],
    x: &DVector<f64>,
    rank_tol: f64,
) -> Result<()> {
    let cols: Vec<DVector<f64>> = generators.iter().map(|g| g(x)).collect();
    if cols.is_empty() {
        return if split.corank == 0 {
            Ok(())
        } else {
            Err(Error::GeneratorSpanError { residual: 1.0 })
        };
    }
    let mat = DMatrix::from_columns(&cols);
    let scale = mat.norm().max(f64::MIN_POSITIVE);
    let leak = (&split.proj_s * &mat).norm() / scale;
    let outside = ((split.tangent_projector() * &mat) - &mat).norm() / scale;
    let residual = leak.max(outside);
    if residual > 1e-6 || linalg::rank(&mat, rank_tol) != split.corank {
        return Err(Error::GeneratorSpanError { residual });
    }
    Ok(())
}
