//! Built-in example systems with closed-form behaviour.
//!
//! * `null-hyperplane`: the null plane `x0 = x1` in 3D Minkowski space, field
//!   `(x2^2, x2^2, -x2)`, functional `x2^2 / 2`, quotient `x2`.
//! * `circle-contract`: chart `(theta, y)` with form `diag(0, 1)`, field
//!   `(1, -alpha y)`, functional `y^2 / 2`, quotient `y`; leaves are circles.
//! * `presymplectic-toy`: chart `(q, p, theta)` with form `diag(1, 1, 0)`,
//!   damped oscillator `(p, -q - lambda p)` plus a constant drift `c` along
//!   the circle, functional `(q^2 + p^2) / 2`, quotient `(q, p)`.

use alloc::{boxed::Box, vec, vec::Vec};
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::dissipation::FunctionalSpec;
use crate::dynamics::VectorField;
use crate::geometry::{AmbientSpace, Constraint, Manifold, ScalarMap, SplittingMap, TangentSplitting, VectorMap};
use crate::reduction::Foliation;

fn dv(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn constant_field(v: Vec<f64>) -> VectorMap {
    let v = dv(v);
    Box::new(move |_| v.clone())
}

/// Registry metadata for a built-in example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleInfo {
    pub name: &'static str,
    /// Intrinsic dimension `m`.
    pub m: usize,
    /// Corank `k` of the induced form.
    pub k: usize,
    pub leaves_compact: bool,
    pub embedded: bool,
    pub analytic_sigma: bool,
    pub closed_form: bool,
    /// `dPsi(V) <= -c |V_S|^2` holds pointwise with some `c > 0`.
    pub uniform_dissipation: bool,
    pub summary: &'static str,
}

pub const REGISTRY: [ExampleInfo; 3] = [
    ExampleInfo {
        name: "null-hyperplane",
        m: 2,
        k: 1,
        leaves_compact: false,
        embedded: true,
        analytic_sigma: true,
        closed_form: true,
        uniform_dissipation: true,
        summary: "null plane x0 = x1 in Minkowski R^3; x2 decays, leaves are null lines",
    },
    ExampleInfo {
        name: "circle-contract",
        m: 2,
        k: 1,
        leaves_compact: true,
        embedded: false,
        analytic_sigma: true,
        closed_form: true,
        uniform_dissipation: true,
        summary: "rotation on circle leaves with exponential contraction transverse to them",
    },
    ExampleInfo {
        name: "presymplectic-toy",
        m: 3,
        k: 1,
        leaves_compact: true,
        embedded: false,
        analytic_sigma: true,
        closed_form: true,
        uniform_dissipation: false,
        summary: "damped oscillator times a drifting characteristic circle",
    },
];

pub fn info(name: &str) -> Option<ExampleInfo> {
    REGISTRY.iter().copied().find(|e| e.name == name)
}

/// A complete system: manifold, flow, functional and null foliation.
pub struct Example {
    pub info: ExampleInfo,
    pub manifold: Manifold,
    pub field: VectorField,
    pub functional: FunctionalSpec,
    pub foliation: Foliation,
    /// Analytic distance to `Sigma = {V in N}`.
    pub sigma_distance: Option<ScalarMap>,
    /// A splitting invariant under the linearized flow, when the Euclidean
    /// complement is not.
    pub invariant_splitting: Option<SplittingMap>,
    pub default_start: DVector<f64>,
    /// Coordinate box holding the absorbing candidate set.
    pub bounding_box: Vec<(f64, f64)>,
}

impl Example {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "null-hyperplane" => Some(null_hyperplane()),
            "circle-contract" => Some(circle_contract(1.0)),
            "presymplectic-toy" => Some(presymplectic_toy(1.0, 0.3)),
            _ => None,
        }
    }

    /// Lifts a point given in free coordinates onto the manifold; the
    /// embedded example fixes `x1 = x0`.
    pub fn place(&self, mut x: DVector<f64>) -> DVector<f64> {
        if self.info.name == "null-hyperplane" {
            x[1] = x[0];
        }
        self.manifold.wrap(&mut x);
        x
    }

    /// The registered invariant splitting, else the manifold's own.
    pub fn splitting(&self, x: &DVector<f64>) -> crate::Result<TangentSplitting> {
        match &self.invariant_splitting {
            Some(f) => f(x),
            None => self.manifold.null_splitting(x),
        }
    }

    pub fn sigma_distance(&self, x: &DVector<f64>) -> Option<f64> {
        self.sigma_distance.as_ref().map(|d| d(x))
    }
}

/// `Phi_s = x0 - s x1` in 3D Minkowski space; degenerate exactly at `s = 1`.
pub fn minkowski_family(s: f64) -> Manifold {
    Manifold::embedded(
        AmbientSpace::minkowski(3),
        Constraint::linear(dv(vec![1.0, -s, 0.0])),
    )
}

pub fn null_hyperplane() -> Example {
    let manifold = Manifold::embedded(
        AmbientSpace::minkowski(3),
        Constraint::linear(dv(vec![1.0, -1.0, 0.0])),
    )
    .with_corank(1);
    let field = VectorField::new(
        "null-hyperplane",
        Box::new(|x| {
            let z = x[2];
            dv(vec![z * z, z * z, -z])
        }),
    )
    .with_jacobian(Box::new(|x| {
        let z = x[2];
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 2.0 * z, 0.0, 0.0, 2.0 * z, 0.0, 0.0, -1.0])
    }));
    let functional = FunctionalSpec::new(Box::new(|x| 0.5 * x[2] * x[2]), 0.0)
        .with_differential(Box::new(|x| dv(vec![0.0, 0.0, x[2]])));
    let foliation = Foliation::new(
        vec![constant_field(vec![1.0, 1.0, 0.0])],
        Box::new(|x| dv(vec![x[2]])),
        false,
    )
    .with_quotient_jacobian(Box::new(|_| DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])))
    .with_chart_radius(10.0);
    Example {
        info: REGISTRY[0],
        manifold,
        field,
        functional,
        foliation,
        sigma_distance: Some(Box::new(|x| x[2].abs())),
        // D(phi_t) maps (-z, -z, 1) at z to e^{-t} (-z e^{-t}, -z e^{-t}, 1)
        invariant_splitting: Some(Box::new(|x| {
            let z = x[2];
            TangentSplitting::from_bases(
                x.clone(),
                DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]),
                DMatrix::from_column_slice(3, 1, &[-z, -z, 1.0]),
            )
        })),
        default_start: dv(vec![0.0, 0.0, 1.0]),
        bounding_box: vec![(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
    }
}

pub fn circle_contract(alpha: f64) -> Example {
    let manifold = Manifold::intrinsic(2, Box::new(|_| DMatrix::from_diagonal(&dv(vec![0.0, 1.0]))))
        .with_periodic(vec![0])
        .with_corank(1);
    let field = VectorField::new("circle-contract", Box::new(move |x| dv(vec![1.0, -alpha * x[1]])))
        .with_jacobian(Box::new(move |_| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -alpha])));
    let functional = FunctionalSpec::new(Box::new(|x| 0.5 * x[1] * x[1]), 0.0)
        .with_differential(Box::new(|x| dv(vec![0.0, x[1]])));
    let foliation = Foliation::new(vec![constant_field(vec![1.0, 0.0])], Box::new(|x| dv(vec![x[1]])), true)
        .with_quotient_jacobian(Box::new(|_| DMatrix::from_row_slice(1, 2, &[0.0, 1.0])))
        .with_leaf_period(TAU);
    Example {
        info: REGISTRY[1],
        manifold,
        field,
        functional,
        foliation,
        sigma_distance: Some(Box::new(|x| x[1].abs())),
        invariant_splitting: None,
        default_start: dv(vec![0.0, 2.0]),
        bounding_box: vec![(0.0, TAU), (-2.0, 2.0)],
    }
}

fn toy_parts() -> (Manifold, FunctionalSpec, Foliation) {
    let manifold = Manifold::intrinsic(3, Box::new(|_| DMatrix::from_diagonal(&dv(vec![1.0, 1.0, 0.0]))))
        .with_periodic(vec![2])
        .with_corank(1);
    let functional = FunctionalSpec::new(Box::new(|x| 0.5 * (x[0] * x[0] + x[1] * x[1])), 0.0)
        .with_differential(Box::new(|x| dv(vec![x[0], x[1], 0.0])));
    let foliation = Foliation::new(
        vec![constant_field(vec![0.0, 0.0, 1.0])],
        Box::new(|x| dv(vec![x[0], x[1]])),
        true,
    )
    .with_quotient_jacobian(Box::new(|_| {
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }))
    .with_leaf_period(TAU);
    (manifold, functional, foliation)
}

pub fn presymplectic_toy(lambda: f64, drift: f64) -> Example {
    let (manifold, functional, foliation) = toy_parts();
    let field = VectorField::new(
        "presymplectic-toy",
        Box::new(move |x| dv(vec![x[1], -x[0] - lambda * x[1], drift])),
    )
    .with_jacobian(Box::new(move |_| {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, -lambda, 0.0, 0.0, 0.0, 0.0])
    }));
    Example {
        info: REGISTRY[2],
        manifold,
        field,
        functional,
        foliation,
        sigma_distance: Some(Box::new(|x| (x[0] * x[0] + x[1] * x[1]).sqrt())),
        invariant_splitting: None,
        default_start: dv(vec![1.0, 0.0, 0.0]),
        bounding_box: vec![(-1.0, 1.0), (-1.0, 1.0), (0.0, TAU)],
    }
}

/// Deliberately broken systems used to show that the checks can fail.
pub mod fixtures {
    use super::*;

    /// The presymplectic toy with circle drift `theta' = q`: the Jacobian
    /// couples the transversal block into the null direction.
    pub fn coupled_toy(lambda: f64) -> Example {
        let mut ex = presymplectic_toy(lambda, 0.0);
        ex.field = VectorField::new(
            "coupled-toy",
            Box::new(move |x| dv(vec![x[1], -x[0] - lambda * x[1], x[0]])),
        )
        .with_jacobian(Box::new(move |_| {
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, -lambda, 0.0, 1.0, 0.0, 0.0])
        }));
        ex
    }

    /// Contact distribution `ker(dz - x dy)` on `R^3`: corank two, spanned by
    /// `d_x` and `d_y + x d_z`, not involutive.
    pub fn contact_manifold() -> (Manifold, Vec<VectorMap>) {
        let manifold = Manifold::intrinsic(
            3,
            Box::new(|x| {
                let a = dv(vec![0.0, -x[0], 1.0]);
                &a * a.transpose()
            }),
        )
        .with_corank(2);
        let gens: Vec<VectorMap> = vec![
            constant_field(vec![1.0, 0.0, 0.0]),
            Box::new(|x| dv(vec![0.0, 1.0, x[0]])),
        ];
        (manifold, gens)
    }

    /// Null-hyperplane field whose transversal part depends on `x0`.
    pub fn non_projectable_field() -> VectorField {
        VectorField::new(
            "non-projectable",
            Box::new(|x| {
                let z = x[2];
                dv(vec![z * z, z * z, -z + x[0]])
            }),
        )
    }

    /// Tangent to the null plane nowhere: `(1, 0, 0)`.
    pub fn transverse_field() -> VectorField {
        VectorField::new("transverse", constant_field(vec![1.0, 0.0, 0.0]))
    }
}
