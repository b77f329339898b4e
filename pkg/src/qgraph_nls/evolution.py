"""Time integration of the cubic NLS  i U_t = H U - |U|^2 U  on the graph.

The linear operator H is the matrix assembled by `spectral` (vertex
conditions built in), so every state stays in the discrete operator domain
without projection. One step is Strang splitting: half a step of the exact
nonlinear phase rotation, a Crank-Nicolson step for H, and another half
nonlinear step. Both sub-steps preserve the discrete mass sum m_i |u_i|^2.
"""

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .boundary_system import ExtensionSpec, membership_residual, operator_extension
from .graph_model import GraphFunction, GraphSpec
from .spectral import FULL, H_LINEAR, AssembledOperator, assemble
from .standing_waves import StandingWave

STRANG_CN = "StrangCN"

STABLE_CONSISTENT = "STABLE-CONSISTENT"
INSTABILITY_CONSISTENT = "INSTABILITY-CONSISTENT"
NO_VERDICT = "NO-VERDICT"
BLOW_UP = "BLOW-UP"


class EvolutionError(RuntimeError):
    pass


@dataclass
class EvolutionConfig:
    dt: float
    t_end: float
    ext: ExtensionSpec
    n0: int
    n1: int
    R: float
    scheme: str = STRANG_CN
    mode: str = FULL
    monitor_every: int = 10
    monitor_mass: bool = True
    monitor_energy: bool = True
    monitor_orbit: bool = True

    def __post_init__(self):
        if self.scheme != STRANG_CN:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_dt(self, omega: float):
        """Warn when dt exceeds the splitting-accuracy recommendation 1e-2/omega."""
        if omega > 0 and self.dt > 1e-2 / omega:
            warnings.warn(f"dt = {self.dt:g} exceeds the recommended 1e-2/omega = "
                          f"{1e-2 / omega:g}", RuntimeWarning, stacklevel=2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ext"] = json.loads(self.ext.to_json())
        return d


class Propagator:
    """Strang/Crank-Nicolson stepper on the DOF vector of an assembled H."""

    def __init__(self, op: AssembledOperator, dt: float):
        self.op = op
        self.dt = dt
        M = sp.diags(op.mass)
        A = op.matrix
        self._rhs = (M - 0.5j * dt * A).tocsr()
        self._lu = spla.splu((M + 0.5j * dt * A).tocsc())

    def nonlinear(self, u, tau):
        return u * np.exp(1j * np.abs(u) ** 2 * tau)

    def linear(self, u):
        out = self._lu.solve(self._rhs @ u)
        if not np.all(np.isfinite(out)):
            raise EvolutionError("linear solve produced non-finite values")
        return out

    def step(self, u, nonlinear=True):
        if not nonlinear:
            return self.linear(u)
        u = self.nonlinear(u, 0.5 * self.dt)
        u = self.linear(u)
        return self.nonlinear(u, 0.5 * self.dt)


def _graph_for(cfg: EvolutionConfig, L: float) -> GraphSpec:
    g = cfg.ext.graph
    if g is not None:
        return g
    return GraphSpec(L=L, N=cfg.ext.N, R=cfg.R)


def operator_for(cfg: EvolutionConfig, graph: GraphSpec) -> AssembledOperator:
    return assemble(None, H_LINEAR, cfg.ext, cfg.n0, cfg.n1, graph=graph, mode=cfg.mode)


def step(state: GraphFunction, cfg: EvolutionConfig, nonlinear: bool = True,
         _cache: dict = {}) -> GraphFunction:
    """One Strang-split step of size cfg.dt applied to a graph function."""
    key = (id(cfg), state.graph)
    if key not in _cache:
        _cache.clear()
        op = operator_for(cfg, state.graph)
        _cache[key] = Propagator(op, cfg.dt)
    prop = _cache[key]
    u = prop.op.from_graph_function(state)
    return prop.op.to_graph_function(prop.step(u, nonlinear))


# conserved quantities

@dataclass
class Conserved:
    mass: float
    energy: float
    flags: list = field(default_factory=list)


def _vertex_term(u: GraphFunction, ext: ExtensionSpec, flags: list) -> float:
    Z = ext.params.get("Z")
    if ext.kind == "delta":
        return -float(Z) * abs(u.loop_values[0]) ** 2
    if Z is None or Z == 0:
        flags.append("Z = 0: vertex term omitted from the energy")
        return 0.0
    s = sum(r[0] for r in u.ray_values)
    return abs(s) ** 2 / float(Z)


def conserved_quantities(state: GraphFunction, ext: ExtensionSpec) -> Conserved:
    """Mass Q = ||U||^2 and energy
    E = 1/2 sum ||U_e'||^2 + 1/(2Z)|sum_j psi_j(L)|^2 - 1/4 sum ||U_e||_4^4
    with the discrete (trapezoidal, forward-difference) quadrature the time
    integrator conserves. For the delta coupling the vertex term is
    -Z/2 |U(v)|^2."""
    flags = []
    h0, h1 = state.h_loop, state.h_ray

    def trap(v, h, periodic):
        if periodic:
            return h * np.sum(v[:-1])
        return h * (np.sum(v) - 0.5 * v[0] - 0.5 * v[-1])

    loop = state.loop_values
    mass = trap(np.abs(loop) ** 2, h0, True)
    quartic = trap(np.abs(loop) ** 4, h0, True)
    kinetic = np.sum(np.abs(np.diff(loop)) ** 2) / h0
    for r in state.ray_values:
        mass += trap(np.abs(r) ** 2, h1, False)
        quartic += trap(np.abs(r) ** 4, h1, False)
        kinetic += np.sum(np.abs(np.diff(r)) ** 2) / h1
    energy = 0.5 * kinetic + 0.5 * _vertex_term(state, ext, flags) - 0.25 * quartic
    return Conserved(float(mass), float(energy), flags)


def _dof_quantities(op: AssembledOperator, u):
    mass = float(np.real(np.vdot(u, op.mass * u)))
    energy = float(0.5 * np.real(np.vdot(u, op.matrix @ u))
                   - 0.25 * np.sum(op.mass * np.abs(u) ** 4))
    return mass, energy


# discrete stationary states

def refine_profile(op: AssembledOperator, wave: StandingWave, tol: float = 1e-12,
                   max_iter: int = 30) -> np.ndarray:
    """Newton-refine the sampled wave to a root of A theta + omega M theta - M theta^3.

    The loop translation direction is pinned by a bordering row so the
    nearly singular Jacobian does not shift the crest.
    """
    graph = op.graph
    theta = op.from_graph_function(wave.sample(graph, op.n0, op.n1)).real
    trans_gf = GraphFunction.from_callables(
        graph, op.n0, op.n1, lambda x: wave.loop(x, 1), lambda x: np.zeros_like(x))
    t = op.from_graph_function(trans_gf).real
    t = t / np.linalg.norm(t) if np.linalg.norm(t) > 0 else t
    A, M, w = op.matrix, op.mass, wave.omega
    n = theta.size
    for _ in range(max_iter):
        F = A @ theta + w * M * theta - M * theta**3
        res = np.max(np.abs(F / M))
        if res < tol * max(1.0, w * np.max(np.abs(theta))):
            break
        J = A + sp.diags(w * M - 3.0 * M * theta**2)
        if np.any(t):
            Jb = sp.bmat([[J, sp.csr_matrix(t[:, None])], [sp.csr_matrix(t[None, :]), None]])
            sol = spla.spsolve(Jb.tocsc(), np.concatenate([-F, [0.0]]))
            delta = sol[:n]
        else:
            delta = spla.spsolve(J.tocsc(), -F)
        theta = theta + delta
    return theta


# orbital experiments

@dataclass
class OrbitDistance:
    t: float
    theta_star: float
    d_H1: float
    d_rel: float
    mass: float
    energy: float
    max_amplitude: float
    membership: float = float("nan")


@dataclass
class OrbitalResult:
    series: list
    epsilon: float
    verdict: str
    heuristic_note: str
    blow_up: bool
    config: dict
    wave: dict
    perturbation: str
    max_d_rel: float
    first_exceed_t: float | None
    mass_drift: float
    energy_drift: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mass", "energy", "d_H1", "theta_star", "max_amplitude"])
        for r in self.series:
            w.writerow([f"{r.t:.17g}", f"{r.mass:.17g}", f"{r.energy:.17g}",
                        f"{r.d_H1:.17g}", f"{r.theta_star:.17g}", f"{r.max_amplitude:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "series"}
        d["n_records"] = len(self.series)
        return d


def _h1_inner(op, K0, u, v):
    return np.vdot(v, op.mass * u) + np.vdot(v, K0 @ u)


def _kinetic_matrix(op: AssembledOperator) -> sp.csr_matrix:
    # H with the vertex term removed is the pure kinetic form
    if op.extension.kind == "delta":
        K = op.matrix.tolil(copy=True)
        K[0, 0] += op.extension.Z
        return K.tocsr()
    K = op.matrix.tolil(copy=True)
    vertex = [i for i, (e, node) in enumerate(op.dof_map) if e > 0 and node == 0]
    Z = op.extension.Z
    for i, mi in zip(vertex, op.multiplicity):
        for j, mj in zip(vertex, op.multiplicity):
            K[i, j] -= mi * mj / Z
    return K.tocsr()


def orbit_distance(op, K0, u, theta, seed=None):
    """min over phase of ||u - e^{i phi} theta||_{H1} by golden-section search
    around arg <u, theta>_{L2}. Returns (phi*, distance)."""
    if seed is None:
        seed = float(np.angle(np.vdot(theta, op.mass * u)))
    f = lambda p: float(np.real(_h1_inner(op, K0, u - np.exp(1j * p) * theta,
                                          u - np.exp(1j * p) * theta)))
    width = 0.5
    a, b = seed - width, seed + width
    while not (f(seed) <= f(a) and f(seed) <= f(b)) and width < np.pi:
        width *= 2.0
        a, b = seed - width, seed + width
    res = minimize_scalar(f, bracket=(a, seed, b), method="golden",
                          options={"xtol": 1e-10})
    phi = float(np.angle(np.exp(1j * res.x)))
    return phi, float(np.sqrt(max(res.fun, 0.0)))


def symmetric_instability_direction(wave: StandingWave, graph: GraphSpec, n0, n1,
                                    domain_compatible: bool = True):
    """(0, Psi', ..., Psi', -Psi', ..., -Psi'): first half of the half-lines +,
    second half -.

    Psi' itself has nonzero slope at the vertex, so the raw direction lies in
    the energy space but not in the operator domain. With
    domain_compatible=True each component is multiplied by 1 + beta s e^{-s}
    (s = x - L), beta chosen to make the vertex slope vanish; the
    antisymmetric data then satisfy every half-line vertex condition.
    """
    N = graph.N
    if N % 2:
        raise ValueError("the symmetric instability direction needs N even")
    xr = graph.ray_grid(n1)
    sx = xr - graph.vertex
    d = wave.ray(xr, 1)
    if domain_compatible:
        d1, d2 = wave.ray(graph.vertex, 1), wave.ray(graph.vertex, 2)
        beta = -d2 / d1
        d = d * (1.0 + beta * sx * np.exp(-sx))
    rays = tuple(d if j < N // 2 else -d for j in range(N))
    return GraphFunction(graph, np.zeros(n0), rays)


def generic_direction(graph: GraphSpec, n0, n1, rng, ext: ExtensionSpec | None = None):
    """Smooth real data inside the operator domain.

    Loop: a low-mode trigonometric sum (periodic; tapered to vanish with
    its slope at the vertex unless the coupling is the periodic delta'
    one). Half-lines: random multiples of s^2 e^{-s}, whose vertex traces
    vanish, plus for the delta' coupling a multiple of the star bound state
    e^{-N s/|Z|} on every half-line.
    """
    L = graph.L
    c = rng.normal(size=4)
    sn = rng.normal(size=4)
    xl = graph.loop_grid(n0)
    loop = sum(c[n] * np.cos(n * np.pi * xl / L) + sn[n] * np.sin(n * np.pi * xl / L)
               for n in range(4))
    periodic = ext is not None and ext.kind in ("delta_prime_loop", "periodic_star")
    if not periodic:
        a, b = graph.compact_edge
        loop = loop * np.sin(np.pi * (xl - a) / (b - a)) ** 2
    s = graph.ray_grid(n1) - graph.vertex
    rays = [rng.normal() * s**2 * np.exp(-s) for _ in range(graph.N)]
    if periodic and ext.Z < 0:
        bound = rng.normal() * np.exp(-graph.N * s / abs(ext.Z))
        rays = [r + bound for r in rays]
    return GraphFunction(graph, loop, tuple(rays))


def orbital_experiment(wave: StandingWave, perturbation: str, cfg: EvolutionConfig,
                       epsilon: float, seed: int = 0, refine: bool = True,
                       membership_every: int = 0,
                       domain_compatible: bool = True) -> OrbitalResult:
    """Evolve Theta + eps ||Theta||_H1 p/||p||_H1 and monitor the distance to
    the orbit {e^{i theta} Theta}.

    perturbation is "generic" (smooth random, seeded) or "symmetric" (the
    direction (0, Psi', ..., -Psi') for N even). Verdicts are heuristics:
    STABLE-CONSISTENT if max d_rel <= 5 eps, INSTABILITY-CONSISTENT if
    d_rel exceeds 50 eps before t_end.
    """
    cfg.check_dt(wave.omega)
    graph = _graph_for(cfg, wave.L)
    op = operator_for(cfg, graph)
    K0 = _kinetic_matrix(op)
    prop = Propagator(op, cfg.dt)
    theta = refine_profile(op, wave) if refine else \
        op.from_graph_function(wave.sample(graph, cfg.n0, cfg.n1)).real
    theta = theta.astype(complex)
    if perturbation == "symmetric":
        p_gf = symmetric_instability_direction(wave, graph, cfg.n0, cfg.n1,
                                               domain_compatible)
    elif perturbation == "generic":
        p_gf = generic_direction(graph, cfg.n0, cfg.n1, np.random.default_rng(seed), cfg.ext)
    else:
        raise ValueError(f"unknown perturbation {perturbation!r}")
    p = op.from_graph_function(p_gf)
    norm_theta = float(np.sqrt(np.real(_h1_inner(op, K0, theta, theta))))
    norm_p = float(np.sqrt(np.real(_h1_inner(op, K0, p, p))))
    u = theta + epsilon * norm_theta * p / norm_p

    amp0 = float(np.max(np.abs(u)))
    ext_op = operator_extension(cfg.ext)
    series = []
    blow = False
    exceed_t = None

    def record(t, u, phi_seed):
        phi, d = orbit_distance(op, K0, u, theta, phi_seed)
        mass, energy = _dof_quantities(op, u)
        memb = float("nan")
        if membership_every and len(series) % membership_every == 0:
            memb = membership_residual(op.to_graph_function(u), ext_op)
        series.append(OrbitDistance(t, phi, d, d / norm_theta, mass, energy,
                                    float(np.max(np.abs(u))), memb))

    record(0.0, u, 0.0)
    nsteps = cfg.steps
    for n in range(1, nsteps + 1):
        u = prop.step(u)
        if n % cfg.monitor_every == 0 or n == nsteps:
            t = n * cfg.dt
            record(t, u, None)
            if exceed_t is None and series[-1].d_rel >= 50.0 * epsilon:
                exceed_t = t
            if series[-1].max_amplitude > 10.0 * amp0:
                blow = True
                break
    dmax = max(r.d_rel for r in series)
    if blow:
        verdict = BLOW_UP
    elif dmax <= 5.0 * epsilon:
        verdict = STABLE_CONSISTENT
    elif exceed_t is not None:
        verdict = INSTABILITY_CONSISTENT
    else:
        verdict = NO_VERDICT
    m0, e0 = series[0].mass, series[0].energy
    return OrbitalResult(
        series=series, epsilon=epsilon, verdict=verdict,
        heuristic_note="verdict thresholds 5 eps / 50 eps are heuristic, not a proof",
        blow_up=blow, config=cfg.to_dict(), wave=wave.to_dict(), perturbation=perturbation,
        max_d_rel=float(dmax), first_exceed_t=exceed_t,
        mass_drift=float(max(abs(r.mass - m0) for r in series) / m0),
        energy_drift=float(max(abs(r.energy - e0) for r in series) / max(abs(e0), 1e-300)))


# standing-wave tracking

@dataclass
class TrackingResult:
    dt: float
    steps: int
    error_l2: float
    mass_drift: float
    energy_drift: float
    membership_max: float


def track_standing_wave(wave: StandingWave, cfg: EvolutionConfig, refine: bool = True,
                        membership_every: int = 0) -> TrackingResult:
    """Evolve the (refined) stationary profile and compare with e^{i omega t} Theta.

    With refine=True the reference is the discrete stationary state, so the
    tracking error is the time-discretisation error alone.
    """
    graph = _graph_for(cfg, wave.L)
    op = operator_for(cfg, graph)
    theta = refine_profile(op, wave) if refine else \
        op.from_graph_function(wave.sample(graph, cfg.n0, cfg.n1)).real
    prop = Propagator(op, cfg.dt)
    u = theta.astype(complex)
    m0, e0 = _dof_quantities(op, u)
    mdrift = edrift = memb = 0.0
    ext_op = operator_extension(cfg.ext)
    nsteps = cfg.steps
    for n in range(1, nsteps + 1):
        u = prop.step(u)
        if n % cfg.monitor_every == 0 or n == nsteps:
            m, e = _dof_quantities(op, u)
            mdrift = max(mdrift, abs(m - m0) / m0)
            edrift = max(edrift, abs(e - e0) / abs(e0))
            if membership_every and (n // cfg.monitor_every) % membership_every == 0:
                memb = max(memb, membership_residual(op.to_graph_function(u), ext_op))
    t = nsteps * cfg.dt
    diff = u - np.exp(1j * wave.omega * t) * theta
    err = float(np.sqrt(np.real(np.vdot(diff, op.mass * diff))))
    return TrackingResult(cfg.dt, nsteps, err, float(mdrift), float(edrift), float(memb))


def save_state(state: GraphFunction) -> str:
    from .graph_model import to_json
    return to_json(state)


def load_state(text: str) -> GraphFunction:
    from .graph_model import from_json
    return from_json(text)
