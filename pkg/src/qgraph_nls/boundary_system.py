"""Vertex conditions on looping-edge and T-shaped graphs.

A vertex condition is stored as a ConstraintSet: rows of a matrix A acting
on the full trace vector

    t = (phi(-L), phi'(-L), psi_1(v), psi_1'(v), ..., psi_N(v), psi_N'(v), phi(v), phi'(v))

with A t = 0. The boundary form of -d^2 on the graph,

    [H*U, V] - [U, H*V] = (P+ x_U | x_V) - (P- y_U | y_V),

uses the Krein matrices P+ = blockdiag(P0), P- = P+/(N+1), P0 = [[0, 1], [-1, 0]],
where x is the first 2(N+1) entries of t and y repeats (phi(v), phi'(v))
N+1 times. A condition is self-adjoint exactly when its trace space is
Lagrangian for this form: isotropic and of dimension N+2.

Matrices M of size 2(N+1) enter through the relation M x = y. A Krein
unitary M (M* P- M = P+) gives an isotropic relation of dimension N+2 in
the 4(N+1)-dimensional space of (x, y) pairs, but y is constrained to the
diagonal, so only part of that relation is realised by functions on the
graph. `constraints_from_matrix` offers three ways to read it:

  - "literal": all 2(N+1) rows of M x = y (isotropic, usually too many rows);
  - "values": value rows kept one by one, derivative rows summed;
  - "derivatives": derivative rows kept one by one, value rows summed.

The two summed readings are symplectic reductions of the graph of M and
are Lagrangian (N+2 independent rows) for every Krein-unitary M.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .graph_model import LOOPING_EDGE, GraphFunction, GraphSpec, trace

P0 = np.array([[0.0, 1.0], [-1.0, 0.0]])

UNITARY_TOL = 1e-10
MEMBERSHIP_TOL = 1e-6


class KreinForm:
    """The pair (P+, P-) for a vertex with N half-lines."""

    def __init__(self, N: int):
        if N < 1:
            raise ValueError("N must be at least 1")
        self.N = N
        self.P_plus = np.kron(np.eye(N + 1), P0)
        self.P_minus = self.P_plus / (N + 1)

    def plus(self, x, y) -> complex:
        return complex(np.vdot(y, self.P_plus @ x))

    def minus(self, x, y) -> complex:
        return complex(np.vdot(y, self.P_minus @ x))


@dataclass(frozen=True)
class UnitarityCheck:
    ok: bool
    residual: float
    min_singular_ratio: float

    def __bool__(self):
        return self.ok


def is_krein_unitary(M, N: int, tol: float = UNITARY_TOL) -> UnitarityCheck:
    """Check M* P- M = P+ to `tol` in max norm and that M has full rank."""
    M = np.asarray(M)
    n = 2 * (N + 1)
    if M.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix for N={N}, got {M.shape}")
    kf = KreinForm(N)
    residual = float(np.max(np.abs(M.conj().T @ kf.P_minus @ M - kf.P_plus)))
    s = np.linalg.svd(M, compute_uv=False)
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    return UnitarityCheck(residual <= tol and ratio > 1e-10, residual, ratio)


def krein_adjoint(M, N: int) -> np.ndarray:
    """M# = P+^{-1} M* P-; equals M^{-1} exactly when M is Krein unitary."""
    kf = KreinForm(N)
    return np.linalg.solve(kf.P_plus, np.asarray(M).conj().T @ kf.P_minus)


# ---------------------------------------------------------------- witnesses

def delta_witness_matrix(m) -> np.ndarray:
    """Block matrix L_N for a symmetric (N+1)x(N+1) parameter array m.

    Diagonal blocks [[1, 0], [m_ii, N+1]], off-diagonal blocks [[0, 0], [m_ij, 0]].
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or not np.allclose(m, m.T):
        raise ValueError("m must be a symmetric square array")
    M = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            if i == j:
                block = [[1.0, 0.0], [m[i, i], float(n)]]
            else:
                block = [[0.0, 0.0], [m[i, j], 0.0]]
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = block
    return M


def delta_prime_witness_matrix(m) -> np.ndarray:
    """Block matrix L'_N for an (N+1)x(N+1) parameter array m.

    m[0, 0] is m_11, m[0, j] the first-row couplings m_1j, and the trailing
    N x N block must be symmetric. Blocks (zero-based i, j):
      A_00 = [[1, 0], [m_00, N+1]],  A_0j = [[0, 0], [0, m_0j]],
      A_j0 = [[-m_0j, 0], [0, 0]],   A_ii = [[N+1, m_ii], [0, 1]],
      A_ij = [[0, m_ij], [0, 0]]  for i != j, both nonzero.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    inner = m[1:, 1:]
    if not np.allclose(inner, inner.T):
        raise ValueError("the trailing block of m must be symmetric")
    M = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            if i == 0 and j == 0:
                block = [[1.0, 0.0], [m[0, 0], float(n)]]
            elif i == 0:
                block = [[0.0, 0.0], [0.0, m[0, j]]]
            elif j == 0:
                block = [[-m[0, i], 0.0], [0.0, 0.0]]
            elif i == j:
                block = [[float(n), m[i, i]], [0.0, 1.0]]
            else:
                block = [[0.0, m[i, j]], [0.0, 0.0]]
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = block
    return M


def tadpole_delta_matrix(m1, m2, m3) -> np.ndarray:
    """4x4 delta-type matrix on the tadpole; m1 = -m3, m2 = Z gives delta(Z)."""
    return np.array([[1.0, 0, 0, 0], [m1, 2, m2, 0], [0, 0, 1, 0], [m2, 0, m3, 2]])


def tadpole_delta_prime_matrix(Z1, Z2, m1) -> np.ndarray:
    """4x4 delta'-type matrix on the tadpole; m1 = -1 decouples the edges."""
    return np.array([[1.0, 0, 0, 0], [2 * Z1, 2, 0, m1], [-m1, 0, 2, -2 * Z2], [0, 0, 0, 1]])


def tadpole_general_prime_matrix(m1, m2, m3, m4) -> np.ndarray:
    """Four-parameter tadpole family with continuous derivative at the vertex (m1 != 0)."""
    return np.array([[m1, m2, 0, 0], [0, 2.0 / m1, 0, m3],
                     [-m1 * m3, -m2 * m3, 2, m4], [0, 0, 0, 1]], dtype=float)


def random_delta_parameters(Z, N, rng) -> np.ndarray:
    """Random symmetric m with sum(m)/(N+1) = Z."""
    n = N + 1
    m = rng.normal(size=(n, n))
    m = 0.5 * (m + m.T)
    shift = ((N + 1) * Z - m.sum()) / n**2
    return m + shift


def random_delta_prime_parameters(Z1, Z2, N, rng) -> np.ndarray:
    """Parameters for L'_N with m_11 = Z2, m_1j = -1 and trailing sum Z1."""
    n = N + 1
    m = np.zeros((n, n))
    m[0, 0] = Z2
    m[0, 1:] = -1.0
    m[1:, 0] = -1.0
    inner = rng.normal(size=(N, N))
    inner = 0.5 * (inner + inner.T)
    inner += (Z1 - inner.sum()) / N**2
    m[1:, 1:] = inner
    return m


# ------------------------------------------------------------- constraints

@dataclass(frozen=True)
class ConstraintSet:
    """Rows of A with A t = 0 on the full trace vector t."""

    A: np.ndarray
    N: int

    @property
    def rank(self) -> int:
        if self.A.shape[0] == 0:
            return 0
        return int(np.linalg.matrix_rank(self.A, tol=1e-10 * max(1.0, np.abs(self.A).max())))

    def null_space(self) -> np.ndarray:
        """Orthonormal basis (columns) of the admissible trace vectors."""
        n = 2 * (self.N + 1) + 2
        if self.A.shape[0] == 0:
            return np.eye(n, dtype=complex)
        _, s, vh = np.linalg.svd(self.A)
        r = int(np.sum(s > 1e-10 * max(1.0, s[0])))
        return vh[r:].conj().T

    def residual(self, t) -> float:
        return float(np.max(np.abs(self.A @ np.asarray(t)))) if self.A.shape[0] else 0.0

    def describe(self, graph: GraphSpec | None = None) -> list[str]:
        labels = trace_labels(self.N, graph)
        out = []
        for row in self.A:
            terms = []
            for c, lab in zip(row, labels):
                if abs(c) < 1e-14:
                    continue
                terms.append(f"{_fmt_coef(c)}*{lab}")
            out.append(" + ".join(terms) + " = 0" if terms else "0 = 0")
        return out


def _fmt_coef(c) -> str:
    c = complex(c)
    if abs(c.imag) < 1e-14:
        return f"{c.real:.6g}"
    return f"({c.real:.6g}{c.imag:+.6g}j)"


def trace_labels(N: int, graph: GraphSpec | None = None) -> list[str]:
    t_shaped = graph is not None and graph.kind != LOOPING_EDGE
    v = "0+" if t_shaped else "L"
    right = "0-" if t_shaped else "L"
    labels = ["phi(-L)", "phi'(-L)"]
    for j in range(1, N + 1):
        labels += [f"psi_{j}({v})", f"psi_{j}'({v})"]
    labels += [f"phi({right})", f"phi'({right})"]
    return labels


class _Cols:
    """Column indices in the full trace vector."""

    def __init__(self, N):
        self.N = N
        self.n = 2 * (N + 1) + 2
        self.phi_l, self.dphi_l = 0, 1
        self.phi_r, self.dphi_r = self.n - 2, self.n - 1

    def psi(self, j):
        return 2 * j

    def dpsi(self, j):
        return 2 * j + 1

    def zero(self):
        return np.zeros(self.n)


def constraints_from_matrix(M, N: int, reduction: str = "values") -> ConstraintSet:
    """Constraint rows read off the relation M x = (phi(v), phi'(v)) repeated."""
    M = np.asarray(M)
    n = 2 * (N + 1)
    E = np.zeros((n, 2))
    E[0::2, 0] = 1.0
    E[1::2, 1] = 1.0
    rows = np.hstack([M, -E])
    if reduction == "literal":
        A = rows
    elif reduction == "values":
        A = np.vstack([rows[0::2], rows[1::2].sum(axis=0)])
    elif reduction == "derivatives":
        A = np.vstack([rows[1::2], rows[0::2].sum(axis=0)])
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    return ConstraintSet(A, N)


def delta_constraints(Z, N) -> ConstraintSet:
    c = _Cols(N)
    rows = []
    r = c.zero(); r[c.phi_l] = 1; r[c.phi_r] = -1
    rows.append(r)
    for j in range(1, N + 1):
        r = c.zero(); r[c.psi(j)] = 1; r[c.phi_r] = -1
        rows.append(r)
    r = c.zero()
    r[c.dphi_r] = 1
    r[c.dphi_l] = -1
    for j in range(1, N + 1):
        r[c.dpsi(j)] = -1
    r[c.psi(1)] -= Z
    rows.append(r)
    return ConstraintSet(np.array(rows), N)


def delta_prime_constraints(Z1, Z2, N) -> ConstraintSet:
    c = _Cols(N)
    rows = []
    r = c.zero(); r[c.phi_r] = 1; r[c.phi_l] = -1
    rows.append(r)
    for j in range(1, N + 1):
        r = c.zero(); r[c.dphi_r] = 1; r[c.dpsi(j)] = -1
        rows.append(r)
    r = c.zero(); r[c.dphi_r] = 1; r[c.dphi_l] = -1; r[c.phi_l] = -Z2 / (N + 1)
    rows.append(r)
    r = c.zero()
    for j in range(1, N + 1):
        r[c.psi(j)] = 1
    r[c.dpsi(1)] -= Z1 / (N + 1)
    rows.append(r)
    return ConstraintSet(np.array(rows), N)


def periodic_star_constraints(Z, N) -> ConstraintSet:
    """Periodic loop plus delta' star on the half-lines, with no coupling
    between them: phi(v) = phi(-L), phi'(v) = phi'(-L), psi_j'(v) = psi_1'(v),
    sum psi_j(v) = Z psi_1'(v). N+2 rows, a Lagrangian trace space."""
    c = _Cols(N)
    rows = []
    r = c.zero(); r[c.phi_r] = 1; r[c.phi_l] = -1
    rows.append(r)
    r = c.zero(); r[c.dphi_r] = 1; r[c.dphi_l] = -1
    rows.append(r)
    for j in range(2, N + 1):
        r = c.zero(); r[c.dpsi(j)] = 1; r[c.dpsi(1)] = -1
        rows.append(r)
    r = c.zero()
    for j in range(1, N + 1):
        r[c.psi(j)] = 1
    r[c.dpsi(1)] = -Z
    rows.append(r)
    return ConstraintSet(np.array(rows), N)


def vertex_vector_maps(N):
    """Matrices S, D with S t = (phi(-L), phi(v), psi_j(v)) and D t = the derivatives."""
    c = _Cols(N)
    S = np.zeros((N + 2, c.n))
    D = np.zeros((N + 2, c.n))
    S[0, c.phi_l] = 1; S[1, c.phi_r] = 1
    D[0, c.dphi_l] = 1; D[1, c.dphi_r] = 1
    for j in range(1, N + 1):
        S[j + 1, c.psi(j)] = 1
        D[j + 1, c.dpsi(j)] = 1
    return S, D


def q_matrix(N) -> np.ndarray:
    q = np.ones(N + 2)
    q[1] = -1.0
    return np.diag(q)


def orthonormal_basis(Y, N) -> np.ndarray:
    """Orthonormal columns spanning the generators Y (columns or list of vectors)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    if Y.shape[0] != N + 2:
        Y = Y.T
    if Y.shape[0] != N + 2:
        raise ValueError(f"subspace generators must have length N+2 = {N + 2}")
    if Y.shape[1] == 0:
        return Y
    u, s, _ = np.linalg.svd(Y, full_matrices=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError("subspace generators are linearly dependent")
    return u


def subspace_constraints(Y, N) -> ConstraintSet:
    """U-vector in Y and Q U-vector' in Y-perp."""
    B = orthonormal_basis(Y, N)
    S, D = vertex_vector_maps(N)
    full = np.eye(N + 2, dtype=complex)
    proj_perp = full - B @ B.conj().T
    # rows spanning Y-perp applied to U, rows spanning Y applied to Q U'
    u, s, _ = np.linalg.svd(proj_perp)
    perp = u[:, s > 0.5]
    rows = [perp.conj().T @ S, B.conj().T @ q_matrix(N) @ D]
    A = np.vstack([r for r in rows if r.size])
    if np.allclose(A.imag, 0.0):
        A = A.real
    return ConstraintSet(A, N)


# --------------------------------------------------------------- extensions

@dataclass(frozen=True)
class ExtensionSpec:
    """A vertex condition together with the graph it lives on.

    kind is one of "matrix", "delta", "delta_prime", "delta_prime_loop",
    "periodic_star", "subspace", "constraints". `matrix` holds the defining matrix for
    "matrix" and a Krein-unitary witness for the named families.
    """

    kind: str
    N: int
    params: dict
    constraints: ConstraintSet
    matrix: np.ndarray | None = None
    graph: GraphSpec | None = None
    notes: tuple = field(default_factory=tuple)

    @property
    def Z(self) -> float:
        return float(self.params["Z"])

    def describe(self) -> list[str]:
        return self.constraints.describe(self.graph)

    def with_graph(self, graph: GraphSpec) -> "ExtensionSpec":
        if graph.N != self.N:
            raise ValueError("graph and extension disagree on N")
        return ExtensionSpec(self.kind, self.N, self.params, self.constraints,
                             self.matrix, graph, self.notes)

    def to_json(self) -> str:
        params = {}
        for key, val in self.params.items():
            if isinstance(val, np.ndarray):
                params[key] = {"re": val.real.tolist(), "im": val.imag.tolist()}
            else:
                params[key] = val
        d = {"kind": self.kind, "N": self.N, "params": params,
             "matrix": None if self.matrix is None else np.asarray(self.matrix).tolist()}
        if self.kind == "constraints":
            d["constraints"] = {"re": self.constraints.A.real.tolist(),
                                "im": np.asarray(self.constraints.A).imag.tolist()}
        if self.graph is not None:
            d["graph"] = self.graph.to_dict()
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "ExtensionSpec":
        return extension_from_dict(json.loads(text))


def extension_from_dict(d: dict) -> ExtensionSpec:
    kind = d["kind"]
    N = int(d["N"])
    params = d.get("params", {}) or {}
    graph = GraphSpec.from_dict(d["graph"]) if d.get("graph") else None
    if kind == "matrix":
        ext = build_matrix(np.array(d["matrix"], dtype=float), N,
                           reduction=params.get("reduction", "values"))
    elif kind == "delta":
        m = d.get("matrix")
        ext = build_delta(float(params["Z"]), N)
        if m is not None:
            ext = ExtensionSpec(ext.kind, N, ext.params, ext.constraints, np.array(m), None)
    elif kind == "delta_prime":
        ext = build_delta_prime(float(params["Z1"]), float(params["Z2"]), N)
    elif kind == "delta_prime_loop":
        ext = build_delta_prime_loop(float(params["Z"]), N)
    elif kind == "periodic_star":
        ext = operator_extension(build_delta_prime_loop(float(params["Z"]), N))
    elif kind == "subspace":
        Y = params["Y"]
        Y = np.array(Y["re"]) + 1j * np.array(Y["im"]) if isinstance(Y, dict) else np.array(Y)
        ext = build_subspace(Y, N)
    elif kind == "constraints":
        A = np.array(d["constraints"]["re"]) + 1j * np.array(d["constraints"]["im"])
        ext = ExtensionSpec("constraints", N, params, ConstraintSet(A, N))
    else:
        raise ValueError(f"unknown extension kind {kind!r}")
    return ext.with_graph(graph) if graph is not None else ext


def build_matrix(M, N: int, reduction: str = "values") -> ExtensionSpec:
    """Extension defined by a boundary matrix M (checked separately for unitarity)."""
    M = np.asarray(M)
    if M.shape != (2 * (N + 1),) * 2:
        raise ValueError(f"matrix must be {2 * (N + 1)}x{2 * (N + 1)} for N={N}")
    cs = constraints_from_matrix(M, N, reduction)
    return ExtensionSpec("matrix", N, {"reduction": reduction}, cs, M)


def build_delta(Z: float, N: int, rng=None) -> ExtensionSpec:
    """Continuity at the vertex plus phi'(v) - phi'(-L) = sum psi_j'(v) + Z psi_1(v)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    m = random_delta_parameters(Z, N, rng)
    return ExtensionSpec("delta", N, {"Z": float(Z)}, delta_constraints(Z, N),
                         delta_witness_matrix(m))


def build_delta_prime(Z1: float, Z2: float, N: int, rng=None) -> ExtensionSpec:
    """phi(v) = phi(-L), phi'(v) = psi_j'(v), phi'(v) - phi'(-L) = Z2/(N+1) phi(-L),
    sum psi_j(v) = Z1/(N+1) psi_1'(v).

    These N+3 rows are independent, so the trace space is isotropic of
    dimension N+1: the operator is symmetric but one dimension short of a
    self-adjoint realisation. The witness matrix L'_N is Krein unitary; its
    "derivatives" reduction is the self-adjoint condition obtained by
    dropping phi(v) = phi(-L) in favour of the summed value row.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    m = random_delta_prime_parameters(Z1, Z2, N, rng)
    return ExtensionSpec("delta_prime", N, {"Z1": float(Z1), "Z2": float(Z2)},
                         delta_prime_constraints(Z1, Z2, N), delta_prime_witness_matrix(m))


def build_delta_prime_loop(Z: float, N: int, rng=None) -> ExtensionSpec:
    """The Z2 = 0, Z1 = (N+1) Z member: continuous derivatives everywhere at the
    vertex, phi(v) = phi(-L) and sum psi_j(v) = Z psi_1'(v)."""
    base = build_delta_prime((N + 1) * Z, 0.0, N, rng)
    return ExtensionSpec("delta_prime_loop", N, {"Z": float(Z)}, base.constraints, base.matrix)


def operator_extension(ext: ExtensionSpec) -> ExtensionSpec:
    """The vertex condition of the operator that `spectral` and `evolution`
    actually assemble. For the delta' loop coupling this is the periodic
    loop plus delta' star (a self-adjoint extension of the symmetric
    operator on the coupled domain); other kinds are returned unchanged."""
    if ext.kind != "delta_prime_loop":
        return ext
    return ExtensionSpec("periodic_star", ext.N, {"Z": ext.Z},
                         periodic_star_constraints(ext.Z, ext.N), None, ext.graph)


def build_subspace(Y, N: int) -> ExtensionSpec:
    B = orthonormal_basis(Y, N)
    return ExtensionSpec("subspace", N, {"Y": B}, subspace_constraints(B, N))


def build_constraints(rows, N: int, label: str = "") -> ExtensionSpec:
    """Wrap arbitrary constraint rows (e.g. for T-shaped examples)."""
    return ExtensionSpec("constraints", N, {"label": label},
                         ConstraintSet(np.atleast_2d(np.asarray(rows)), N))


# ------------------------------------------------------------ residual checks

def membership_residual(u: GraphFunction, ext: ExtensionSpec) -> float:
    """max |A trace(u)|; u satisfies the vertex condition when this is small."""
    if u.graph.N != ext.N:
        raise ValueError("graph function and extension disagree on N")
    return ext.constraints.residual(trace(u).full())


def boundary_form(tu, tv, N: int) -> complex:
    """(P+ x_U | x_V) - (P- y_U | y_V) for full trace vectors tu, tv."""
    tu, tv = np.asarray(tu), np.asarray(tv)
    kf = KreinForm(N)
    xu, xv = tu[:-2], tv[:-2]
    yu, yv = np.tile(tu[-2:], N + 1), np.tile(tv[-2:], N + 1)
    return kf.plus(xu, xv) - kf.minus(yu, yv)


class _Piecewise:
    """Smooth edge function: bulk term plus corrective cubics at the ends.

    bulk(x) returns (f, f', f''); corrections are Hermite cubics supported on
    [a, a+delta] or [b-delta, b].
    """

    def __init__(self, bulk, a, b, delta):
        self.bulk, self.a, self.b, self.delta = bulk, a, b, delta
        self.left = (0.0, 0.0)
        self.right = None if b is None else (0.0, 0.0)

    def eval(self, x):
        f, d1, d2 = self.bulk(x)
        f, d1, d2 = f.astype(complex), d1.astype(complex), d2.astype(complex)
        dl = self.delta
        s = (x - self.a) / dl
        mask = (s >= 0) & (s <= 1)
        al, be = self.left
        g, g1, g2 = _hermite(s[mask], al, be * dl)
        f[mask] += g; d1[mask] += g1 / dl; d2[mask] += g2 / dl**2
        if self.right is not None:
            s = (self.b - x) / dl
            mask = (s >= 0) & (s <= 1)
            al, be = self.right
            g, g1, g2 = _hermite(s[mask], al, -be * dl)
            f[mask] += g; d1[mask] -= g1 / dl; d2[mask] += g2 / dl**2
        return f, d1, d2


def _hermite(s, value, slope):
    """Cubic with h(0)=value, h'(0)=slope, h(1)=h'(1)=0 and its s-derivatives."""
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    d00 = 6 * s**2 - 6 * s
    d10 = 3 * s**2 - 4 * s + 1
    e00 = 12 * s - 6
    e10 = 6 * s - 4
    return (value * h00 + slope * h10, value * d00 + slope * d10, value * e00 + slope * e10)


def _random_poly(rng, deg, a, b):
    c = rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)
    p = np.polynomial.Polynomial(c, domain=[a, b], window=[-1, 1])
    return p


def _random_pair_functions(graph: GraphSpec, null_basis, rng):
    """Random edge functions whose traces are the projection of their bulk
    traces onto the admissible trace space."""
    N = graph.N
    a, b = graph.compact_edge
    v = graph.vertex
    loop_p = _random_poly(rng, 5, a, b)
    loop = _Piecewise(lambda x, p=loop_p: (p(x), p.deriv()(x), p.deriv(2)(x)), a, b, 0.25 * (b - a))
    rays = []
    for _ in range(N):
        q = _random_poly(rng, 4, v, v + 4.0)

        def bulk(x, q=q):
            e = np.exp(-(x - v))
            q0, q1, q2 = q(x), q.deriv()(x), q.deriv(2)(x)
            return q0 * e, (q1 - q0) * e, (q2 - 2 * q1 + q0) * e

        rays.append(_Piecewise(bulk, v, None, 1.0))

    def edge_trace():
        t = []
        f, d1, _ = loop.eval(np.array([a]))
        t += [f[0], d1[0]]
        for r in rays:
            f, d1, _ = r.eval(np.array([v]))
            t += [f[0], d1[0]]
        f, d1, _ = loop.eval(np.array([b]))
        t += [f[0], d1[0]]
        return np.array(t)

    t0 = edge_trace()
    target = null_basis @ (null_basis.conj().T @ t0)
    corr = target - t0
    loop.left = (corr[0], corr[1])
    for j, r in enumerate(rays, start=1):
        r.left = (corr[2 * j], corr[2 * j + 1])
    loop.right = (corr[-2], corr[-1])
    return loop, rays, edge_trace()


def greens_identity_defect(ext: ExtensionSpec, trials: int = 50, rng=None,
                           graph: GraphSpec | None = None, method: str = "trace") -> float:
    """Largest |[H*U, V] - [U, H*V]| over random admissible pairs.

    Pairs are smooth edge functions whose vertex traces were projected onto
    the null space of the constraint rows by corrective cubics. With
    method="trace" the boundary form is evaluated from the traces; with
    method="quadrature" the two integrals are computed directly by
    Gauss-Legendre quadrature, which independently checks the
    integration-by-parts identity.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    graph = graph or ext.graph or GraphSpec(L=1.0, N=ext.N)
    null = ext.constraints.null_space()
    worst = 0.0
    for _ in range(trials):
        lu, ru, tu = _random_pair_functions(graph, null, rng)
        lv, rv, tv = _random_pair_functions(graph, null, rng)
        if method == "trace":
            d = boundary_form(tu, tv, ext.N)
        elif method == "quadrature":
            d = _green_by_quadrature(graph, (lu, ru), (lv, rv))
        else:
            raise ValueError(f"unknown method {method!r}")
        worst = max(worst, abs(d))
    return float(worst)


def _gauss_integral(fn, a, b, pieces=64, order=12):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, pieces + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        x = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * np.sum(wg * fn(x))
    return total


def _green_by_quadrature(graph, U, V):
    a, b = graph.compact_edge
    v = graph.vertex

    def integrand(fu, fv):
        def g(x):
            u, _, u2 = fu.eval(x)
            w, _, w2 = fv.eval(x)
            return -u2 * np.conj(w) + u * np.conj(w2)
        return g

    # break points where the corrective cubics end keep the integrand smooth per piece
    total = _gauss_integral(integrand(U[0], V[0]), a, b, pieces=64)
    for ru, rv in zip(U[1], V[1]):
        total += _gauss_integral(integrand(ru, rv), v, v + 1.0, pieces=16)
        total += _gauss_integral(integrand(ru, rv), v + 1.0, v + 60.0, pieces=236)
    return complex(total)
