//! Every check the battery can emit, with the statement it tests.

pub struct CheckSpec {
    pub id: &'static str,
    pub anchor: &'static str,
}

const fn spec(id: &'static str, anchor: &'static str) -> CheckSpec {
    CheckSpec { id, anchor }
}

pub const CATALOG: &[CheckSpec] = &[
    spec("geometry.corank_constant", "rank N_X = k for all X in M"),
    spec("geometry.kernel_property", "g(b, w) = 0 for b in N_X, w in T_X M"),
    spec("geometry.projector_algebra", "T_X M = N_X + S_X, a direct sum"),
    spec("geometry.involutive", "[Gamma(N), Gamma(N)] in Gamma(N)"),
    spec("dynamics.integration", "X(t) exists and stays finite on [0, T]"),
    spec("dynamics.constraint_preserved", "Phi(X(t)) = 0"),
    spec("dynamics.tangency", "V(X) in T_X M"),
    spec("dynamics.decomposition", "V = V_N + V_S"),
    spec("dissipation.compatibility", "dPsi(N) = 0"),
    spec("dissipation.pointwise_constant", "dPsi(V) <= -c |V_S|_S^2"),
    spec("dissipation.z_equivalence", "dPsi(V)(X) = 0 iff V_S(X) = 0"),
    spec("dissipation.monotone", "t -> Psi(X(t)) is nonincreasing"),
    spec("dissipation.budget", "c int_0^T |V_S|_S^2 dt <= Psi(X_0) - Psi(X(T))"),
    spec("dissipation.omega_in_z", "omega(X_0) in Z = {V_S = 0}"),
    spec("reduction.projectable", "[V, Gamma(N)] in Gamma(N)"),
    spec("reduction.fiber", "d pi(N) = 0"),
    spec("reduction.metric_leaf_invariant", "g_red(u, v) := g(U, V) is independent of the representative"),
    spec("reduction.projected_velocity", "dY/dt = d pi(V_S(X(t)))"),
    spec("reduction.finite_energy", "int_0^infinity |dY/dt|_red^2 dt < infinity"),
    spec("reduction.leaf_compactness", "leaves are compact as declared"),
    spec("reduction.absorbing", "a bounded absorbing set exists"),
    spec("reduction.asymptotic_compactness", "X(t_k; X_k) has a convergent subsequence"),
    spec("reduction.attractor_stationary", "dist(X(t; X_0), A) -> 0"),
    spec("reduction.saturation", "A is saturated with respect to the foliation"),
    spec("reduction.dimension_bound", "dim pi(A) <= m - k"),
    spec("spectral.gap", "Re z < -eta for z in sigma(L^S)"),
    spec("spectral.center_free", "sigma(L^S) has empty intersection with iR"),
    spec("spectral.morse", "Hess Psi restricted to S is nondegenerate on the critical set"),
    spec("spectral.critical_tangent", "T_X C = N_X"),
    spec("hypotheses.h1_precompact", "(H1) trajectories are precompact"),
    spec("hypotheses.h2_constant_rank", "(H2) N has constant rank"),
    spec("hypotheses.h3_contraction", "(H3) |D phi_t v| <= C exp(-alpha t) |v| for v in S"),
    spec("hypotheses.h4_invariant_bundles", "(H4) D phi_t N in N and D phi_t S in S"),
    spec("convergence.sigma_rate", "dist(X(t), Sigma) <= C exp(-alpha t)"),
    spec("convergence.sigma_invariant", "Sigma = {V in N} is positively invariant"),
    spec("convergence.projected_cauchy", "pi(X(t)) converges"),
];

pub fn anchor(id: &str) -> Option<&'static str> {
    CATALOG.iter().find(|c| c.id == id).map(|c| c.anchor)
}
