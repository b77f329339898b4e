"""Discretised Schrodinger operators on the looping-edge graph.

Operators are assembled from their quadratic forms with piecewise-linear
elements and a lumped (trapezoidal) mass matrix, which is the standard
second-order finite-difference scheme:

  - loop: periodic wraparound coupling between x = L and x = -L;
  - half-lines: Dirichlet at the truncation point L + R, natural condition
    at the vertex, plus the rank-one vertex term (1/Z)|sum_j w_j(L)|^2 for
    the delta' coupling (the loop and half-lines are then independent
    blocks), or a shared vertex node with -Z|u(v)|^2 for the delta coupling.

Potentials for the linearised operators around a standing wave Theta are
omega - 3 Theta^2 (L_plus) and omega - Theta^2 (L_minus).
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .boundary_system import ExtensionSpec
from .graph_model import GraphFunction, GraphSpec
from .standing_waves import StandingWave

FULL = "full"
HALF_SPLIT = "half_split"
SYMMETRIC = "symmetric"

H_LINEAR = "H"
L_PLUS = "L_plus"
L_MINUS = "L_minus"

DENSE_LIMIT = 2000


class AssemblyError(ValueError):
    pass


@dataclass
class AssembledOperator:
    """Generalised eigenproblem (matrix, diag(mass)) on the free DOFs.

    dof_map[i] = (edge, node): edge 0 is the loop, edge r >= 1 the r-th
    represented half-line (in HalfSplit/Symmetric modes one represented
    half-line stands for `multiplicity[r-1]` identified ones).
    """

    matrix: sp.csr_matrix
    mass: np.ndarray
    dof_map: np.ndarray
    extension: ExtensionSpec | None
    graph: GraphSpec
    n0: int
    n1: int
    mode: str
    which: str
    sector: str
    multiplicity: tuple
    omega: float = 0.0
    ray_groups: tuple = ()
    potential_min: float = 0.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def h0(self) -> float:
        a, b = self.graph.compact_edge
        return (b - a) / (self.n0 - 1)

    @property
    def h1(self) -> float:
        return self.graph.R / (self.n1 - 1)

    def symmetric_matrix(self) -> sp.csr_matrix:
        d = sp.diags(1.0 / np.sqrt(self.mass))
        return (d @ self.matrix @ d).tocsr()

    def to_graph_function(self, vec) -> GraphFunction:
        """Expand a DOF vector to samples on every edge of the full graph."""
        vec = np.asarray(vec)
        loop = np.zeros(self.n0, dtype=vec.dtype)
        reps = [np.zeros(self.n1, dtype=vec.dtype) for _ in self.multiplicity]
        for (edge, node), val in zip(self.dof_map, vec):
            if edge == 0:
                loop[node] = val
            else:
                reps[edge - 1][node] = val
        if self.extension is not None and self.extension.kind == "delta":
            for r in reps:
                r[0] = loop[0]
        if self.sector != "rays":
            loop[-1] = loop[0]
        rays = [None] * self.graph.N
        for r, group in zip(reps, self.ray_groups):
            for j in group:
                rays[j] = r
        rays = [np.zeros(self.n1, dtype=vec.dtype) if r is None else r for r in rays]
        return GraphFunction(self.graph, loop, tuple(rays))

    def from_graph_function(self, u: GraphFunction) -> np.ndarray:
        """Restrict samples to DOFs; identified half-lines are averaged."""
        reps = [np.mean([u.ray_values[j] for j in g], axis=0) for g in self.ray_groups]
        out = np.empty(self.size, dtype=complex)
        for i, (edge, node) in enumerate(self.dof_map):
            out[i] = u.loop_values[node] if edge == 0 else reps[edge - 1][node]
        return out

    def apply(self, vec) -> np.ndarray:
        """M^{-1} A v: the discrete operator acting on nodal values."""
        return (self.matrix @ vec) / self.mass


def _stiffness_1d(n, h, periodic=False, dirichlet_right=False):
    """P1 stiffness on n nodes (after removing wrapped/Dirichlet nodes)."""
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    K = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        K[0, n - 1] = -1.0
        K[n - 1, 0] = -1.0
    else:
        K[0, 0] = 1.0
        if not dirichlet_right:
            K[n - 1, n - 1] = 1.0
    return (K / h).tocsr()


def _ray_groups(N, mode):
    if mode == FULL:
        return tuple((j,) for j in range(N))
    if mode == HALF_SPLIT:
        if N % 2:
            raise AssemblyError("HalfSplit mode needs an even number of half-lines")
        return (tuple(range(N // 2)), tuple(range(N // 2, N)))
    if mode == SYMMETRIC:
        return (tuple(range(N)),)
    raise AssemblyError(f"unknown mode {mode!r}")


def _potential(which, wave, omega, x, edge):
    if which == H_LINEAR:
        return np.zeros_like(x)
    if wave is None:
        theta2 = np.zeros_like(x)
    else:
        theta = wave.loop(x) if edge == 0 else wave.ray(x)
        theta2 = theta**2
    if which == L_PLUS:
        return omega - 3.0 * theta2
    if which == L_MINUS:
        return omega - theta2
    raise AssemblyError(f"unknown operator {which!r}")


def assemble(wave: StandingWave | None, which: str, ext: ExtensionSpec, n0: int, n1: int,
             graph: GraphSpec | None = None, mode: str = FULL, sector: str = "all",
             omega: float | None = None) -> AssembledOperator:
    """Assemble H (which="H"), L_plus or L_minus around `wave`.

    `wave=None` means the zero profile (then `omega` sets the spectral
    shift for L_plus/L_minus). sector="loop" or "rays" assembles one block
    only (delta' coupling only).
    """
    if ext.kind not in ("delta_prime_loop", "periodic_star", "delta"):
        raise AssemblyError("assembly supports the delta' loop and delta couplings")
    if graph is None:
        if wave is None:
            raise AssemblyError("a graph is needed when no wave is given")
        graph = wave.default_graph()
    if graph.N != ext.N:
        raise AssemblyError("graph and extension disagree on N")
    if omega is None:
        omega = wave.omega if wave is not None else 0.0
    Z = ext.Z
    N = graph.N
    groups = _ray_groups(N, mode)
    mult = tuple(float(len(g)) for g in groups)
    a, b = graph.compact_edge
    h0 = (b - a) / (n0 - 1)
    h1 = graph.R / (n1 - 1)
    xl = graph.loop_grid(n0)[:-1]
    xr = graph.ray_grid(n1)[:-1]

    blocks, masses, dofs, pots = [], [], [], []
    delta = ext.kind == "delta"
    if delta and (mode != FULL or sector != "all"):
        raise AssemblyError("delta coupling is assembled on the full graph only")

    if sector in ("all", "loop"):
        Kl = _stiffness_1d(n0 - 1, h0, periodic=True)
        Ml = np.full(n0 - 1, h0)
        Vl = _potential(which, wave, omega, xl, 0)
        blocks.append(Kl + sp.diags(Ml * Vl))
        pots.append(Vl.min())
        masses.append(Ml)
        dofs += [(0, i) for i in range(n0 - 1)]
    if sector in ("all", "rays"):
        for r, m in enumerate(mult, start=1):
            Kr = _stiffness_1d(n1 - 1, h1, dirichlet_right=True)
            Mr = np.full(n1 - 1, h1)
            Mr[0] = 0.5 * h1
            Vr = _potential(which, wave, omega, xr, r)
            blocks.append(m * (Kr + sp.diags(Mr * Vr)))
            pots.append(Vr.min())
            masses.append(m * Mr)
            dofs += [(r, i) for i in range(n1 - 1)]
    if sector not in ("all", "loop", "rays"):
        raise AssemblyError(f"unknown sector {sector!r}")

    A = sp.block_diag(blocks, format="lil")
    mass = np.concatenate(masses)
    dof_map = np.array(dofs)

    ray_vertex = [i for i, (e, node) in enumerate(dofs) if e > 0 and node == 0]
    if delta:
        # merge each ray's vertex node into loop node 0 (x = -L ~ L)
        A, mass, dof_map = _merge_vertex(A.tocsr(), mass, dof_map, ray_vertex)
        A = A.tolil()
        A[0, 0] -= Z
    elif ray_vertex:
        if Z == 0:
            raise AssemblyError("delta' coupling needs Z != 0")
        for i, mi in zip(ray_vertex, mult):
            for j, mj in zip(ray_vertex, mult):
                A[i, j] += mi * mj / Z

    A = A.tocsr()
    A = 0.5 * (A + A.T)
    return AssembledOperator(A.tocsr(), mass, dof_map, ext, graph, n0, n1, mode, which,
                             sector, mult, float(omega), groups,
                             float(min(pots)))


def _merge_vertex(A, mass, dof_map, ray_vertex):
    n = A.shape[0]
    keep = np.array([i for i in range(n) if i not in set(ray_vertex)])
    P = sp.lil_matrix((n, keep.size))
    col = {k: c for c, k in enumerate(keep)}
    for i in range(n):
        P[i, col[i] if i in col else col[0]] = 1.0
    P = P.tocsr()
    return (P.T @ A @ P), P.T @ mass, dof_map[keep]


def lowest_eigenpairs(op: AssembledOperator, m: int = 10, sigma: float | None = None,
                      check_residual: bool = True):
    """m smallest eigenpairs of A v = lambda M v; eigenvectors are M-orthonormal."""
    if m > 20:
        raise ValueError("at most 20 eigenpairs")
    m = min(m, op.size - 1)
    B = op.symmetric_matrix()
    if op.size <= DENSE_LIMIT:
        vals, vecs = scipy.linalg.eigh(B.toarray(), subset_by_index=[0, m - 1])
    else:
        if sigma is None:
            sigma = _spectral_lower_bound(op)
        vals, vecs = spla.eigsh(B, k=m, sigma=sigma, which="LM", tol=1e-13,
                                ncv=max(2 * m + 1, 40), maxiter=20000)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.sqrt(op.mass)[:, None]
    if check_residual:
        R = op.matrix @ vecs - (op.mass[:, None] * vecs) * vals[None, :]
        scale = np.abs(op.matrix).max()
        res = np.linalg.norm(R, axis=0) / np.linalg.norm(vecs, axis=0)
        if np.any(res > 1e-9 * max(1.0, scale)):
            raise RuntimeError(f"eigenpair residual too large: {res.max():.3g}")
    return vals, vecs


def _spectral_lower_bound(op):
    # the kinetic form is non-negative and the delta' vertex term cannot push
    # the spectrum much below the star ground state -(N/Z)^2 (-Z^2 for delta)
    Z = op.extension.Z if op.extension is not None else 0.0
    if op.extension is not None and op.extension.kind == "delta":
        extra = Z * Z
    else:
        extra = (op.graph.N / Z) ** 2 if Z else 0.0
    return op.potential_min - 2.0 * extra - 1.0


def dump_eigenvector_csv(op: AssembledOperator, vec) -> str:
    from .graph_model import to_csv
    return to_csv(op.to_graph_function(vec))


def lambda0_formula(omega: float, k: float) -> float:
    """Ground eigenvalue of the periodic dnoidal operator -d^2 + omega - 3 Phi^2."""
    return -omega - (2.0 * omega / (2.0 - k * k)) * np.sqrt(1.0 - k * k + k**4)


def chi0(p, x):
    """Even positive ground state 1 - (1 + k^2 - sqrt(1 - k^2 + k^4)) sn^2."""
    from .elliptic import jacobi_sn_cn_dn
    k = p.k
    sn, _, _ = jacobi_sn_cn_dn(p.eta1 * np.asarray(x) / np.sqrt(2.0), k, p.kprime)
    return 1.0 - (1.0 + k * k - np.sqrt(1.0 - k * k + k**4)) * sn**2


# Morse index and nullity

GUARD_BAND = 1e-6
STABLE = "STABLE"
UNSTABLE = "UNSTABLE"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class SpectralReport:
    lowest_eigenvalues: list
    morse_index: int
    nullity: int
    tol_neg: float
    tol_null: float
    n0: int
    n1: int
    R: float
    extrapolated: bool
    grid_counts: list
    consistent: bool
    case: str
    mode: str
    omega: float
    expected_morse: int | None = None
    expected_nullity: int | None = None
    in_guard_band: bool = False
    grid_eigenvalues: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def matches_expected(self) -> bool | None:
        if self.expected_morse is None:
            return None
        ok = self.consistent and self.morse_index == self.expected_morse
        if self.expected_nullity is not None:
            ok = ok and self.nullity == self.expected_nullity
        return ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["matches_expected"] = self.matches_expected
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def classify_wave(wave: StandingWave, mode: str = FULL):
    """Case label and the (Morse index, nullity) the stability theory predicts.

    Returns (case, expected_morse, expected_nullity, in_guard_band).
    """
    w, N, Z = wave.omega, wave.N, wave.Z
    guard = False
    if Z:
        for thr in (N * N / Z**2, 2.0 * N * N / Z**2):
            guard = guard or abs(w - thr) <= GUARD_BAND * thr
    if not wave.tails:
        return "loop_only", 1, 0, guard
    if w < 2.0 * N * N / Z**2:
        return "tails_below_threshold", 1, 0, guard
    if mode == HALF_SPLIT and N % 2 == 0:
        return "tails_above_threshold_half_split", 2, None, guard
    return "tails_above_threshold", None, None, guard


def default_grid(wave: StandingWave, n0: int | None = None, n1: int | None = None,
                 R: float | None = None):
    """Grid with comparable loop and half-line spacings, fine enough to put
    about 40 points on the length scale 1/sqrt(omega)."""
    graph = wave.default_graph(R)
    if n0 is None:
        n0 = max(401, int(np.ceil(80.0 * graph.L * np.sqrt(wave.omega))) + 1)
    if n1 is None:
        h0 = 2.0 * graph.L / (n0 - 1)
        n1 = int(min(max(np.ceil(graph.R / h0), 200), 4000)) + 1
    return graph, n0, n1


def _counts(vals, tol_neg, tol_null):
    vals = np.asarray(vals)
    return int(np.sum(vals < -tol_neg)), int(np.sum(np.abs(vals) <= tol_null))


def morse_and_nullity(wave: StandingWave, ext: ExtensionSpec, mode: str = FULL,
                      n0: int | None = None, n1: int | None = None, R: float | None = None,
                      m: int = 10, which: str = L_PLUS) -> SpectralReport:
    """Morse index and nullity of L_plus (or L_minus) around `wave`.

    Eigenvalues are computed on grids h and h/2, Richardson-extrapolated
    (second order) index by index, and counted with tolerances 1e-3 omega.
    """
    graph, n0, n1 = default_grid(wave, n0, n1, R)
    omega = wave.omega
    tol = 1e-3 * omega
    grids = [(n0, n1), (2 * n0 - 1, 2 * n1 - 1)]
    spectra = []
    for a, b in grids:
        op = assemble(wave, which, ext, a, b, graph=graph, mode=mode)
        vals, _ = lowest_eigenpairs(op, m)
        spectra.append(vals)
    coarse, fine = spectra
    extrap = (4.0 * fine - coarse) / 3.0
    counts = [_counts(v, tol, tol) for v in (coarse, fine)]
    morse, nullity = _counts(extrap, tol, tol)
    consistent = counts[0] == counts[1] == (morse, nullity)
    case, exp_n, exp_z, guard = classify_wave(wave, mode)
    notes = []
    if not consistent:
        notes.append(f"inconclusive: grid counts {counts} vs extrapolated {(morse, nullity)}")
    if guard:
        notes.append("omega lies in the guard band around N^2/Z^2 or 2N^2/Z^2")
    if which != L_PLUS:
        exp_n = exp_z = None
    return SpectralReport(
        lowest_eigenvalues=extrap.tolist(), morse_index=morse, nullity=nullity,
        tol_neg=tol, tol_null=tol, n0=n0, n1=n1, R=graph.R, extrapolated=True,
        grid_counts=[list(c) for c in counts], consistent=consistent, case=case, mode=mode,
        omega=omega, expected_morse=exp_n, expected_nullity=exp_z, in_guard_band=guard,
        grid_eigenvalues=[coarse.tolist(), fine.tolist()], notes=notes)


def gss_verdict(report: SpectralReport, slope: float):
    """Decision table: (n=1, slope>0) stable; (n=2 in HalfSplit, slope>0)
    unstable; everything else inconclusive. Returns (verdict, reasons)."""
    reasons = []
    if report.in_guard_band:
        reasons.append("omega in the degenerate guard band")
    if not report.consistent:
        reasons.append("Morse/nullity counts differ between grids")
    if not slope > 0:
        reasons.append(f"mass slope {slope:.4g} is not positive")
    if reasons:
        return INCONCLUSIVE, reasons
    if report.morse_index == 1:
        return STABLE, ["Morse index 1 and positive mass slope"]
    if report.morse_index == 2 and report.mode == HALF_SPLIT:
        return UNSTABLE, ["Morse index 2 on the HalfSplit subspace and positive mass slope"]
    return INCONCLUSIVE, [f"Morse index {report.morse_index} (nullity {report.nullity}) "
                          f"in mode {report.mode} is outside the decision table"]


# Non-negativity of L_minus

@dataclass
class LMinusReport:
    lowest_eigenvalues: list
    tol_null: float
    nonnegative: bool
    near_zero_count: int
    alignment: float
    kernel_alignment: float
    second_eigenvalue: float
    n0: int
    n1: int
    R: float

    def to_dict(self) -> dict:
        return asdict(self)


def l_minus_nonnegativity(wave: StandingWave, ext: ExtensionSpec, n0: int = 801,
                          n1: int = 801, R: float | None = None, mode: str = FULL,
                          m: int = 6) -> LMinusReport:
    """Lowest L_minus eigenvalues and the alignment of the lowest eigenvector
    (and of the whole near-zero eigenspace) with the sampled profile."""
    graph = wave.default_graph(R)
    op = assemble(wave, L_MINUS, ext, n0, n1, graph=graph, mode=mode)
    vals, vecs = lowest_eigenpairs(op, m)
    tol = 1e-3 * wave.omega
    prof = op.from_graph_function(wave.sample(graph, n0, n1)).real
    M = op.mass
    pn = np.sqrt(prof @ (M * prof))
    align = abs(vecs[:, 0] @ (M * prof)) / pn
    near = np.abs(vals) <= tol
    proj = vecs[:, near].T @ (M * prof) if near.any() else np.zeros(0)
    kernel_align = float(np.linalg.norm(proj) / pn)
    return LMinusReport(vals.tolist(), tol, bool(vals[0] >= -tol), int(near.sum()),
                        float(align), kernel_align, float(vals[1]), n0, n1, graph.R)


def jensen_term(w, Z: float) -> float:
    """(1/Z)(sum w)^2 - (N/Z) sum w^2, non-negative for Z < 0."""
    w = np.asarray(w, dtype=float)
    return float(np.sum(w) ** 2 / Z - w.size * np.sum(w**2) / Z)


# Resolvent

def _fd_weights(z, x, m):
    """Fornberg finite-difference weights for the m-th derivative at z."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def second_derivative(y, h, width=9):
    """High-order second derivative on a uniform grid, one-sided near the ends."""
    y = np.asarray(y)
    n = y.size
    if n < width:
        raise ValueError("grid too short for the stencil")
    half = width // 2
    offsets = np.arange(width, dtype=float)
    weights = [_fd_weights(float(p), offsets, 2) for p in range(width)]
    out = np.empty_like(y)
    for i in range(n):
        s = min(max(i - half, 0), n - width)
        out[i] = weights[i - s] @ y[s:s + width]
    return out / h**2


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _green_sweeps(fn, x, kappa):
    """I1(x_i) = int_{x_0}^{x_i} e^{-kappa(x_i - s)} f, I2(x_i) = int_{x_i}^{x_n} e^{-kappa(s - x_i)} f."""
    n = x.size
    h = x[1] - x[0]
    s = x[:-1, None] + 0.5 * h * (_GL_X[None, :] + 1.0)
    fs = fn(s)
    wl = 0.5 * h * _GL_W[None, :]
    left = np.sum(wl * np.exp(-kappa * (x[1:, None] - s)) * fs, axis=1)
    right = np.sum(wl * np.exp(-kappa * (s - x[:-1, None])) * fs, axis=1)
    decay = np.exp(-kappa * h)
    I1 = np.zeros(n, dtype=complex)
    I2 = np.zeros(n, dtype=complex)
    for i in range(1, n):
        I1[i] = decay * I1[i - 1] + left[i - 1]
    for i in range(n - 2, -1, -1):
        I2[i] = decay * I2[i + 1] + right[i]
    return I1, I2


def _edge_callable(x, values):
    re = CubicSpline(x, values.real)
    im = CubicSpline(x, values.imag)
    return lambda s: re(s) + 1j * im(s)


class ResolventError(RuntimeError):
    pass


def resolvent_solve(ext: ExtensionSpec, lam: float, f: GraphFunction,
                    callables=None) -> GraphFunction:
    """u = (lambda - H)^{-1} f for the delta' loop coupling, lambda < 0.

    The loop and half-line problems are solved separately: free-space Green's
    function -e^{-kappa|x-s|}/(2 kappa), kappa = sqrt(-lambda), plus
    homogeneous terms fixed by periodicity on the loop and by equal
    derivatives and sum_j psi_j(L) = Z psi'(L) at the vertex. `callables`
    (loop_fn, [ray_fns]) gives exact f for quadrature; otherwise f is
    interpolated by cubic splines.
    """
    if ext.kind not in ("delta_prime_loop", "periodic_star"):
        raise ResolventError("the semi-analytic resolvent covers the delta' loop coupling")
    if not lam < 0:
        raise ResolventError("lambda must be negative")
    Z, N, L = ext.Z, f.graph.N, f.graph.L
    kappa = np.sqrt(-lam)
    xl, xr = f.loop_x(), f.ray_x()
    if callables is None:
        loop_fn = _edge_callable(xl, f.loop_values)
        ray_fns = [_edge_callable(xr, r) for r in f.ray_values]
    else:
        loop_fn, ray_fns = callables

    I1, I2 = _green_sweeps(loop_fn, xl, kappa)
    up = -(I1 + I2) / (2.0 * kappa)
    dup = 0.5 * (I1 - I2)
    e = np.exp(-2.0 * kappa * L)
    # u = up + A e^{kappa(x-L)} + B e^{-kappa(x+L)}, periodic in value and slope
    Msys = np.array([[1.0 - e, e - 1.0], [kappa * (1.0 - e), kappa * (1.0 - e)]])
    rhs = -np.array([up[-1] - up[0], dup[-1] - dup[0]])
    A, B = np.linalg.solve(Msys, rhs)
    loop = up + A * np.exp(kappa * (xl - L)) + B * np.exp(-kappa * (xl + L))

    ups, dups = [], []
    for fn in ray_fns:
        J1, J2 = _green_sweeps(fn, xr, kappa)
        ups.append(-(J1 + J2) / (2.0 * kappa))
        dups.append(0.5 * (J1 - J2))
    # psi_j = up_j + C_j e^{-kappa(x-L)}
    S = np.zeros((N, N))
    r = np.zeros(N, dtype=complex)
    for j in range(1, N):
        S[j - 1, j] = -kappa
        S[j - 1, 0] = kappa
        r[j - 1] = -(dups[j][0] - dups[0][0])
    S[N - 1, :] = 1.0
    S[N - 1, 0] += Z * kappa
    r[N - 1] = -(sum(u[0] for u in ups) - Z * dups[0][0])
    if np.linalg.cond(S) > 1e12:
        raise ResolventError("lambda is (numerically) an eigenvalue of the half-line operator")
    C = np.linalg.solve(S, r)
    rays = tuple(u + c * np.exp(-kappa * (xr - L)) for u, c in zip(ups, C))
    return GraphFunction(f.graph, loop, rays)


@dataclass
class ResolventReport:
    residual: float
    relative_residual: float
    vertex_residual: float
    leakage: float
    discrete_leakage: float
    discrete_difference: float

    def __float__(self):
        return self.residual

    def to_dict(self) -> dict:
        return asdict(self)


def resolvent_check(ext: ExtensionSpec, lam: float, f: GraphFunction,
                    callables=None) -> ResolventReport:
    """Residual max|(lambda - H)u - f| of the semi-analytic resolvent.

    u'' is taken from a nine-point finite-difference stencil of the samples
    (independent of the construction). Also reports the vertex-condition
    residual of u, the half-line response to the loop part of f alone
    (semi-analytic and through the assembled matrix), and the max difference
    to the discrete resolvent.
    """
    from .boundary_system import membership_residual, operator_extension
    u = resolvent_solve(ext, lam, f, callables)
    res = []
    for (_, _, uv), (_, _, fv), h in zip(u.edges(), f.edges(),
                                           [u.h_loop] + [u.h_ray] * f.graph.N):
        res.append(np.max(np.abs(lam * uv + second_derivative(uv, h) - fv)))
    fnorm = max(np.max(np.abs(v)) for _, _, v in f.edges())
    residual = float(max(res))
    vres = membership_residual(u, operator_extension(ext))

    zero_rays = tuple(np.zeros_like(r) for r in f.ray_values)
    f_loop = GraphFunction(f.graph, f.loop_values, zero_rays)
    loop_cb = None
    if callables is not None:
        loop_cb = (callables[0], [lambda s: np.zeros_like(s)] * f.graph.N)
    u_loop = resolvent_solve(ext, lam, f_loop, loop_cb)
    scale = max(np.max(np.abs(u_loop.loop_values)), 1e-300)
    leak = max(np.max(np.abs(r)) for r in u_loop.ray_values) / scale

    op = assemble(None, H_LINEAR, ext, f.n0, f.n1, graph=f.graph)
    rhs = op.mass * op.from_graph_function(f_loop)
    ud = spla.spsolve((lam * sp.diags(op.mass) - op.matrix).tocsc(), rhs)
    ug = op.to_graph_function(ud)
    dleak = max(np.max(np.abs(r)) for r in ug.ray_values) / max(np.max(np.abs(ug.loop_values)), 1e-300)

    rhs_full = op.mass * op.from_graph_function(f)
    ufull = op.to_graph_function(spla.spsolve((lam * sp.diags(op.mass) - op.matrix).tocsc(), rhs_full))
    diff = max(np.max(np.abs(a[:-1] - b[:-1])) for (_, _, a), (_, _, b) in zip(u.edges(), ufull.edges()))
    return ResolventReport(residual, float(residual / fnorm) if fnorm else residual, float(vres),
                           float(leak), float(dleak), float(diff))


def random_smooth_function(graph: GraphSpec, rng, loop_only: bool = False, modes: int = 4):
    """Random smooth data: trigonometric-plus-polynomial on the loop and
    polynomial times e^{-(x-v)} on each half-line. Returns (loop_fn, ray_fns)."""
    L = graph.L
    a = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    b = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    c = rng.normal(size=3)

    def loop_fn(x, a=a, b=b, c=c):
        x = np.asarray(x, dtype=float)
        out = np.polynomial.polynomial.polyval(x / L, c).astype(complex)
        for n in range(modes):
            out = out + a[n] * np.cos(n * np.pi * x / L) + b[n] * np.sin(n * np.pi * x / L)
        return out

    ray_fns = []
    for _ in range(graph.N):
        q = rng.normal(size=3) + 1j * rng.normal(size=3)
        if loop_only:
            ray_fns.append(lambda x: np.zeros_like(np.asarray(x, dtype=float), dtype=complex))
            continue

        def ray_fn(x, q=q):
            s = np.asarray(x, dtype=float) - graph.vertex
            return np.polynomial.polynomial.polyval(s, q) * np.exp(-s)
        ray_fns.append(ray_fn)
    return loop_fn, ray_fns
