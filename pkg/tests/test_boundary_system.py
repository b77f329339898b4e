import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgraph_nls.boundary_system import (KreinForm, boundary_form, build_constraints, build_delta,
                                        build_delta_prime, build_delta_prime_loop, build_matrix,
                                        build_subspace, constraints_from_matrix, delta_constraints,
                                        delta_prime_witness_matrix, delta_witness_matrix,
                                        greens_identity_defect, is_krein_unitary, krein_adjoint,
                                        membership_residual, operator_extension,
                                        periodic_star_constraints, random_delta_parameters,
                                        random_delta_prime_parameters, tadpole_delta_matrix,
                                        tadpole_delta_prime_matrix, ExtensionSpec)
from qgraph_nls.graph_model import T_SHAPED, GraphFunction, GraphSpec
from qgraph_nls.standing_waves import exact_trace, loop_only_wave, solve_shift

NS = (1, 2, 3, 5)


def _isotropic(cs):
    """Max boundary form over pairs of admissible trace vectors."""
    B = cs.null_space()
    return max(abs(boundary_form(B[:, i], B[:, j], cs.N))
               for i in range(B.shape[1]) for j in range(B.shape[1]))


def test_krein_form():
    kf = KreinForm(3)
    assert np.allclose(kf.P_plus, -kf.P_plus.T)
    assert np.linalg.matrix_rank(kf.P_plus) == 8
    assert np.array_equal(kf.P_minus, kf.P_plus / 4)


@pytest.mark.parametrize("N", NS)
def test_scaled_identity_is_unitary_identity_is_not(N):
    n = 2 * (N + 1)
    assert is_krein_unitary(np.sqrt(N + 1) * np.eye(n), N)
    check = is_krein_unitary(np.eye(n), N)
    assert not check
    # ||P+/(N+1) - P+||_max = N/(N+1)
    assert check.residual == pytest.approx(N / (N + 1), rel=1e-14)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        is_krein_unitary(np.eye(3), 1)


def test_L2_prime_with_unit_parameters():
    m = np.ones((3, 3))
    assert is_krein_unitary(delta_prime_witness_matrix(m), 2)


@pytest.mark.parametrize("N", NS)
def test_witness_families_100_draws(N):
    rng = np.random.default_rng(N)
    for _ in range(100):
        m = rng.normal(size=(N + 1, N + 1))
        m = 0.5 * (m + m.T)
        assert is_krein_unitary(delta_witness_matrix(m), N).residual <= 1e-10
        assert is_krein_unitary(delta_prime_witness_matrix(m), N).residual <= 1e-10
        assert is_krein_unitary(delta_witness_matrix(random_delta_parameters(0.3, N, rng)), N)
        assert is_krein_unitary(delta_prime_witness_matrix(
            random_delta_prime_parameters(1.0, -2.0, N, rng)), N)


@pytest.mark.parametrize("N", NS)
def test_krein_adjoint_is_inverse(N):
    rng = np.random.default_rng(10 + N)
    m = random_delta_parameters(1.2, N, rng)
    M = delta_witness_matrix(m)
    assert np.max(np.abs(krein_adjoint(M, N) - np.linalg.inv(M))) <= 1e-9


@pytest.mark.parametrize("N", NS)
def test_delta_row_sum_reproduces_flux_rule(N):
    rng = np.random.default_rng(N)
    Z = -0.8
    m = random_delta_parameters(Z, N, rng)
    assert m.sum() / (N + 1) == pytest.approx(Z, rel=1e-12)
    # summing the derivative rows of L_N gives the flux rule with Z = sum(m)/(N+1),
    # so the reduced rows and the delta condition span the same space
    cs = constraints_from_matrix(delta_witness_matrix(m), N)
    joint = np.vstack([cs.A, delta_constraints(Z, N).A])
    assert np.linalg.matrix_rank(joint) == N + 2


@pytest.mark.parametrize("N", NS)
def test_reductions_lagrangian_for_unitary_matrices(N):
    rng = np.random.default_rng(20 + N)
    for M in (delta_witness_matrix(random_delta_parameters(0.5, N, rng)),
              delta_prime_witness_matrix(random_delta_prime_parameters(1.0, 2.0, N, rng))):
        for red in ("values", "derivatives"):
            cs = constraints_from_matrix(M, N, red)
            assert cs.rank == N + 2
            assert _isotropic(cs) <= 1e-10


@pytest.mark.parametrize("N", NS)
def test_canonical_ranks(N):
    assert build_delta(1.0, N).constraints.rank == N + 2
    assert periodic_star_constraints(-1.5, N).rank == N + 2
    assert _isotropic(periodic_star_constraints(-1.5, N)) <= 1e-12
    # the coupled delta' conditions have one row too many (isotropic, not Lagrangian)
    cs = build_delta_prime(2.0, 0.5, N).constraints
    assert cs.rank == N + 3
    assert _isotropic(cs) <= 1e-12


def test_tadpole_delta_reduces_to_delta():
    Z = 0.7
    M = tadpole_delta_matrix(-0.3, Z, 0.3)
    assert is_krein_unitary(M, 1)
    joint = np.vstack([constraints_from_matrix(M, 1).A, delta_constraints(Z, 1).A])
    assert np.linalg.matrix_rank(joint) == 3


def test_tadpole_delta_prime_decoupled():
    Z1, Z2 = 0.4, 0.9
    M = tadpole_delta_prime_matrix(Z1, Z2, -1.0)
    assert is_krein_unitary(M, 1)
    # phi(L) = phi(-L), phi'(L) - phi'(-L) = Z1 phi(-L), psi(L) = Z2 psi'(L);
    # full trace order: phi(-L), phi'(-L), psi, psi', phi(L), phi'(L)
    expected = np.array([[1, 0, 0, 0, -1, 0],
                         [-Z1, -1, 0, 0, 0, 1],
                         [0, 0, 1, -Z2, 0, 0]], dtype=float)
    joint = np.vstack([constraints_from_matrix(M, 1).A, expected])
    assert np.linalg.matrix_rank(joint) == 3


def test_Y0_subspace_conditions():
    g = 2.0
    cs = build_subspace([[g], [1 / g], [0.0]], 1).constraints
    assert cs.rank == 3
    # admissible: phi(-L) = g^2 phi(L), phi'(L) = g^2 phi'(-L), psi = 0
    t = np.array([g * g, 1.0, 0.0, 5.0, 1.0, g * g])
    assert cs.residual(t) <= 1e-12
    assert cs.residual(np.array([1.0, 1.0, 0.0, 0.0, g * g, g * g])) > 1e-3


def test_e9_subspace_conditions():
    cs = build_subspace([[1.0], [0.0], [-1.0]], 1).constraints
    # phi(L) = 0, phi(-L) = -psi(L), phi'(-L) = psi'(L)
    t = np.array([2.0, 3.0, -2.0, 3.0, 0.0, 7.0])
    assert cs.residual(t) <= 1e-12


def test_full_subspace_is_neumann():
    cs = build_subspace(np.eye(4), 2).constraints
    t = np.array([1.0, 0, 2, 0, 3, 0, 4, 0])
    assert cs.residual(t) <= 1e-12
    t[1] = 1.0
    assert cs.residual(t) > 0.1


def test_dependent_generators_rejected():
    with pytest.raises(ValueError):
        build_subspace([[1, 1], [0, 0], [1, 1]], 1)


@pytest.mark.parametrize("ext", [
    build_delta(3.0, 2), build_delta(0.0, 1), build_delta_prime(2.0, 0.5, 2),
    build_delta_prime_loop(-2.0, 3), operator_extension(build_delta_prime_loop(-1.0, 2)),
    build_subspace([[2.0], [0.5], [0.0]], 1), build_subspace([[1.0], [0.0], [-1.0]], 1),
], ids=["delta", "kirchhoff", "delta_prime", "delta_prime_loop", "periodic_star", "Y0", "e9"])
def test_greens_identity(ext):
    assert greens_identity_defect(ext, trials=50) <= 1e-6


@pytest.mark.parametrize("ext", [build_delta(1.0, 2), build_subspace([[1.0], [0.0], [-1.0]], 1)],
                         ids=["delta", "e9"])
def test_greens_identity_by_quadrature(ext):
    # integrals computed directly, independent of the boundary-form formula
    assert greens_identity_defect(ext, trials=3, method="quadrature") <= 1e-6


def test_non_unitary_matrix_breaks_greens_identity():
    ext = build_matrix(np.eye(4), 1)
    assert greens_identity_defect(ext, trials=50) > 1e-2
    assert greens_identity_defect(ext, trials=3, method="quadrature") > 1e-2


def test_membership_constant_against_delta():
    Z, c = 1.7, 0.6
    g = GraphSpec(L=1, N=2, R=3)
    u = GraphFunction.from_callables(g, 51, 51, lambda x: c + 0 * x, lambda x: c + 0 * x)
    assert membership_residual(u, build_delta(Z, 2)) == pytest.approx(abs(Z * c), rel=1e-10)


def test_membership_of_loop_only_wave():
    w = loop_only_wave(2.0, 2.0, 2, -1.0)
    ext = build_delta_prime_loop(-1.0, 2)
    assert ext.constraints.residual(exact_trace(w).full()) <= 1e-8
    g = w.default_graph()
    assert membership_residual(w.sample(g, 1601, 1601), ext) <= 1e-6


def test_membership_of_tailed_wave():
    w = solve_shift(4.2, 2, -1.0, 2.0)
    ext = build_delta_prime_loop(-1.0, 2)
    assert ext.constraints.residual(exact_trace(w).full()) <= 1e-8


def test_t_shaped_constraints():
    L = 1.0
    g = GraphSpec(L=L, N=1, R=4.0, kind=T_SHAPED)
    # psi'(0+) = phi'(0-), phi'(-L) = 0, psi(0+) = phi(0-)
    rows = [[0, 0, 0, 1, 0, -1], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, -1, 0]]
    ext = build_constraints(rows, 1, "T")
    # phi'(-L) = phi'(0-) = 0, phi(0-) = -1; the ray matches value and slope
    phi = lambda x: np.cos(np.pi * (x + L))
    psi = lambda x: -np.exp(-x**2)
    u = GraphFunction.from_callables(g, 801, 3201, phi, psi)
    assert membership_residual(u, ext) <= 1e-6
    assert ext.describe()[1] == "1*phi'(-L) = 0"


@pytest.mark.parametrize("ext", [build_delta(1.5, 3), build_delta_prime(2.0, 0.0, 2),
                                 build_delta_prime_loop(-1.0, 2),
                                 operator_extension(build_delta_prime_loop(-1.0, 2)),
                                 build_matrix(np.sqrt(2) * np.eye(4), 1),
                                 build_subspace([[1.0], [0.0], [-1.0]], 1)])
def test_extension_json_round_trip(ext):
    ext = ext.with_graph(GraphSpec(L=1.5, N=ext.N, R=7.0))
    back = ExtensionSpec.from_json(ext.to_json())
    assert back.kind == ext.kind and back.graph == ext.graph
    assert np.allclose(back.constraints.A, ext.constraints.A)


def test_operator_extension_passthrough():
    ext = build_delta(1.0, 2)
    assert operator_extension(ext) is ext
    op = operator_extension(build_delta_prime_loop(-1.0, 2))
    assert op.kind == "periodic_star" and op.Z == -1.0


@settings(max_examples=40, deadline=None)
@given(N=st.sampled_from(NS), seed=st.integers(0, 2**20),
       Z=st.floats(min_value=-5, max_value=5, allow_nan=False))
def test_delta_witness_property(N, seed, Z):
    rng = np.random.default_rng(seed)
    M = delta_witness_matrix(random_delta_parameters(Z, N, rng))
    assert is_krein_unitary(M, N)
    assert np.max(np.abs(krein_adjoint(M, N) @ M - np.eye(2 * N + 2))) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(N=st.sampled_from(NS), seed=st.integers(0, 2**20))
def test_non_unitary_full_rank_matrices_fail(N, seed):
    rng = np.random.default_rng(seed)
    M = np.eye(2 * N + 2) + 0.5 * rng.normal(size=(2 * N + 2, 2 * N + 2))
    assert not is_krein_unitary(M, N)


@settings(max_examples=20, deadline=None)
@given(N=st.sampled_from((1, 2, 3)), Z=st.floats(min_value=-4, max_value=-0.1))
def test_periodic_star_green_property(N, Z):
    ext = operator_extension(build_delta_prime_loop(Z, N))
    assert greens_identity_defect(ext, trials=5, rng=np.random.default_rng(1)) <= 1e-6
