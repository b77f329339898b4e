"""Standing waves of the cubic NLS on the looping-edge graph.

On the loop [-L, L] the profile is the dnoidal wave

    Phi_{omega,a}(x) = eta1 dn(eta1 (x - a)/sqrt(2); k),

with eta1^2 + eta2^2 = 2 omega, k^2 = (eta1^2 - eta2^2)/eta1^2 and the
period condition sqrt(2) K(k)/eta1 = L (fundamental period 2L). On each
half-line the profile is the shifted soliton

    Psi(x) = sqrt(2 omega) sech(sqrt(omega)(x - L) + gamma*),
    tanh(gamma*) = -N/(Z sqrt(omega)),

which requires Z < 0 and omega > N^2/Z^2. The shift a is chosen so that
Phi'_{omega,a}(L) = Psi'(L).
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .elliptic import complete_K, complete_K_from_kprime, complete_KE, incomplete_F, jacobi_sn_cn_dn
from .graph_model import GraphFunction, GraphSpec, TraceVector

SQRT2 = np.sqrt(2.0)


class StandingWaveError(ValueError):
    """Parameters outside the range where the requested profile exists."""


class NoRootError(StandingWaveError):
    """The shift equation has no sign change on the bracket."""


@dataclass(frozen=True)
class DnoidalParams:
    omega: float
    L: float
    eta1: float
    eta2: float
    k: float

    @property
    def kprime(self) -> float:
        return self.eta2 / self.eta1

    @property
    def x0(self) -> float:
        """Zero of dn^2(x; k) = 1 - k^2/2 on (0, K(k)), equal to F(pi/4; k)."""
        return incomplete_F(np.pi / 4, self.k)

    @property
    def inflection_offset(self) -> float:
        """sqrt(2) x0 / eta1: distance from the crest to an inflection point."""
        return SQRT2 * self.x0 / self.eta1


def omega_threshold(L: float) -> float:
    """Dnoidal waves of fundamental period 2L exist for omega above pi^2/(2L^2)."""
    return np.pi**2 / (2.0 * L**2)


def modulus_from_eta(eta, omega):
    return np.sqrt(2.0 * (omega - eta**2) / (2.0 * omega - eta**2))


def period_function(eta, omega):
    """sigma(eta, omega) = sqrt(2) K(k)/sqrt(2 omega - eta^2), the half period."""
    eta = np.asarray(eta, dtype=float)
    return SQRT2 * complete_K(modulus_from_eta(eta, omega)) / np.sqrt(2.0 * omega - eta**2)


def _assert_monotone(fn, lo, hi, decreasing=True, samples=100, what="function"):
    t = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    vals = np.array([fn(lo + (hi - lo) * s) for s in t])
    d = np.diff(vals)
    ok = np.all(d < 0) if decreasing else np.all(d > 0)
    if not ok:
        raise RuntimeError(f"{what} is not strictly monotone on its bracket")


def _half_period_from_kprime(kp, omega):
    # eta1^2 = 2 omega/(1 + k'^2), sigma = sqrt(2) K/eta1
    return complete_K_from_kprime(kp) * np.sqrt((1.0 + kp**2) / omega)


def solve_eta(omega: float, L: float) -> DnoidalParams:
    """Find eta2 in (0, sqrt(omega)) with sigma(eta2, omega) = L.

    The root is bracketed in log k' = log(eta2/eta1), on which the period
    function is also strictly monotone; this keeps the solve well
    conditioned when k is close to 1.
    """
    if not (L > 0 and omega > omega_threshold(L)):
        raise StandingWaveError(
            f"dnoidal waves on [-L, L] need omega > pi^2/(2L^2) = {omega_threshold(L):.6g}")
    hi = np.sqrt(omega)
    _assert_monotone(lambda e: period_function(e, omega), 1e-6 * hi, hi, what="period function")
    f = lambda t: _half_period_from_kprime(np.exp(t), omega) - L
    t = brentq(f, -700.0, 0.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    kp = np.exp(t)
    eta1 = np.sqrt(2.0 * omega / (1.0 + kp**2))
    eta2 = eta1 * kp
    k = np.sqrt((1.0 - kp) * (1.0 + kp))
    return DnoidalParams(float(omega), float(L), float(eta1), float(eta2), float(k))


def dnoidal_eval(p: DnoidalParams, a: float, x, order: int = 0):
    """Phi_{omega,a}(x) (order=0), its first (1) or second (2) derivative."""
    u = p.eta1 * (np.asarray(x, dtype=float) - a) / SQRT2
    sn, cn, dn = jacobi_sn_cn_dn(u, p.k, p.kprime)
    if order == 0:
        return p.eta1 * dn
    if order == 1:
        return -(p.eta1**2 * p.k**2 / SQRT2) * sn * cn
    if order == 2:
        # d/du (sn cn) = cn^2 dn - sn^2 dn
        return -(p.eta1**3 * p.k**2 / 2.0) * dn * (cn**2 - sn**2)
    raise ValueError("order must be 0, 1 or 2")


def tail_shift(omega, Z, N) -> float:
    """gamma* = artanh(-N/(Z sqrt(omega)))."""
    if not Z < 0:
        raise StandingWaveError("soliton tails need Z < 0")
    r = -N / (Z * np.sqrt(omega))
    if not r < 1:
        raise StandingWaveError(
            f"soliton tails need omega > N^2/Z^2 = {N**2 / Z**2:.6g}; the bound is sharp")
    return float(np.arctanh(r))


def soliton_tail_eval(omega, Z, N, x, L, order: int = 0):
    """Psi(x) for x >= L (order=0) or its first/second derivative."""
    g = tail_shift(omega, Z, N)
    s = np.sqrt(omega) * (np.asarray(x, dtype=float) - L) + g
    sech = 1.0 / np.cosh(s)
    th = np.tanh(s)
    A = np.sqrt(2.0 * omega)
    if order == 0:
        return A * sech
    if order == 1:
        return -A * np.sqrt(omega) * sech * th
    if order == 2:
        return A * omega * sech * (th**2 - sech**2)
    raise ValueError("order must be 0, 1 or 2")


def tail_vertex_values(omega, Z, N) -> tuple[float, float]:
    """(Psi(L), Psi'(L)) in closed form."""
    root = np.sqrt(omega * Z**2 - N**2)
    return SQRT2 / (-Z) * root, -(N * SQRT2 / Z**2) * root


@dataclass(frozen=True)
class AdmissibleInterval:
    N: int
    Z: float
    L: float
    k0: float
    omega_inf: float
    r1: float
    r2: float
    intervals: tuple

    def contains(self, omega) -> bool:
        return any(lo < omega < hi for lo, hi in self.intervals)

    def to_dict(self) -> dict:
        return {"N": self.N, "Z": self.Z, "L": self.L, "k0": self.k0,
                "omega_inf": self.omega_inf, "r1": self.r1, "r2": self.r2,
                "intervals": [[lo, hi if np.isfinite(hi) else "inf"] for lo, hi in self.intervals]}


def quadratic_roots(N, Z, k0) -> tuple[float, float]:
    """Roots r1 > r2 of (Z^2 k0^4/(16 N^2)) x^2 - x + N^2/Z^2."""
    a = Z**2 * k0**4 / (16.0 * N**2)
    c = N**2 / Z**2
    disc = 1.0 - 4.0 * a * c
    if disc < 0:
        raise StandingWaveError("the admissibility quadratic has no real roots")
    sq = np.sqrt(disc)
    r2 = 2.0 * c / (1.0 + sq)
    r1 = (1.0 + sq) / (2.0 * a) if a > 0 else np.inf
    return float(r1), float(r2)


def admissible_interval(N: int, Z: float, L: float) -> AdmissibleInterval:
    """Frequencies for which the shift equation is guaranteed a root."""
    if not (Z < 0 and N >= 1 and L > 0):
        raise StandingWaveError("need Z < 0, N >= 1, L > 0")
    c = N**2 / Z**2
    omega_inf = max(c, omega_threshold(L)) + 1e-9
    k0 = solve_eta(omega_inf, L).k
    r1, r2 = quadratic_roots(N, Z, k0)
    if not (c < r2 < 2 * c < r1):
        raise RuntimeError("root ordering N^2/Z^2 < r2 < 2N^2/Z^2 < r1 violated")
    lower = omega_threshold(L)
    pieces = []
    for lo, hi in ((c, r2), (r1, np.inf)):
        lo = max(lo, lower)
        if lo < hi:
            pieces.append((float(lo), float(hi)))
    return AdmissibleInterval(N, float(Z), float(L), float(k0), float(omega_inf), r1, r2,
                              tuple(pieces))


def shift_function(p: DnoidalParams, a, N, Z):
    """g(omega, eta, a); zero exactly when Phi'_{omega,a}(L) = Psi'(L)."""
    xi = p.eta1 * (p.L - np.asarray(a, dtype=float)) / SQRT2
    sn, cn, _ = jacobi_sn_cn_dn(xi, p.k, p.kprime)
    const = np.sqrt(p.omega * Z**2 - N**2) * N * SQRT2 / Z**2
    return p.k**2 * p.eta1**2 / SQRT2 * cn * sn - const


@dataclass(frozen=True)
class StandingWave:
    """Dnoidal profile on the loop, optionally with N soliton tails.

    With tails=False the half-line components vanish and a = 0.
    """

    dn: DnoidalParams
    a: float
    N: int
    Z: float | None = None
    tails: bool = True
    branch: str = "inner"

    @property
    def omega(self) -> float:
        return self.dn.omega

    @property
    def L(self) -> float:
        return self.dn.L

    @property
    def gamma_star(self) -> float | None:
        return tail_shift(self.omega, self.Z, self.N) if self.tails else None

    def loop(self, x, order: int = 0):
        return dnoidal_eval(self.dn, self.a, x, order)

    def ray(self, x, order: int = 0):
        if not self.tails:
            return np.zeros_like(np.asarray(x, dtype=float))
        return soliton_tail_eval(self.omega, self.Z, self.N, x, self.L, order)

    def sample(self, graph: GraphSpec, n0: int, n1: int) -> GraphFunction:
        return GraphFunction.from_callables(graph, n0, n1, self.loop,
                                            lambda x: self.ray(x))

    def default_graph(self, R: float | None = None) -> GraphSpec:
        return GraphSpec(L=self.L, N=self.N, R=R if R is not None else 40.0 / np.sqrt(self.omega))

    def to_dict(self) -> dict:
        d = {"omega": self.omega, "L": self.L, "eta1": self.dn.eta1, "eta2": self.dn.eta2,
             "k": self.dn.k, "a": self.a, "N": self.N, "Z": self.Z, "tails": self.tails,
             "branch": self.branch}
        if self.tails:
            d["gamma_star"] = self.gamma_star
            d["Psi_L"], d["dPsi_L"] = tail_vertex_values(self.omega, self.Z, self.N)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StandingWave":
        dn = DnoidalParams(d["omega"], d["L"], d["eta1"], d["eta2"], d["k"])
        return cls(dn, d["a"], int(d["N"]), d.get("Z"), bool(d.get("tails", True)),
                   d.get("branch", "inner"))

    @classmethod
    def from_json(cls, text: str) -> "StandingWave":
        return cls.from_dict(json.loads(text))


def exact_trace(w: StandingWave) -> TraceVector:
    """Vertex trace from the closed-form profile and its derivative."""
    L = w.L
    vals = [w.loop(-L), w.loop(-L, 1)]
    for _ in range(w.N):
        vals += [w.ray(L), w.ray(L, 1)]
    return TraceVector(np.array(vals, dtype=complex),
                       np.array([w.loop(L), w.loop(L, 1)], dtype=complex))


def omega_from_modulus(k: float, L: float) -> float:
    """Frequency whose L-periodic dnoidal wave has modulus k."""
    kp2 = (1.0 - k) * (1.0 + k)
    return float(complete_K(k) ** 2 * (1.0 + kp2) / L**2)


def loop_only_wave(omega: float, L: float, N: int, Z: float | None = None) -> StandingWave:
    """The wave (Phi_omega, 0): even dnoidal on the loop, zero on the half-lines."""
    return StandingWave(solve_eta(omega, L), 0.0, N, Z, tails=False)


def solve_shift(omega: float, N: int, Z: float, L: float, branch: str = "inner") -> StandingWave:
    """Dnoidal plus tails with Phi'_{omega,a}(L) = Psi'(L).

    branch="inner" searches a in (L - sqrt(2) x0/eta1, L), where the crest
    sits within one inflection distance of the vertex; branch="outer"
    searches a in (0, L - sqrt(2) x0/eta1).
    """
    tail_shift(omega, Z, N)
    p = solve_eta(omega, L)
    s = p.inflection_offset
    g = lambda a: float(shift_function(p, a, N, Z))
    if branch == "inner":
        lo, hi, decreasing = L - s, L, True
    elif branch == "outer":
        lo, hi, decreasing = 0.0, L - s, False
    else:
        raise ValueError(f"unknown branch {branch!r}")
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo * g_hi < 0):
        raise NoRootError(
            f"shift equation has no sign change on ({lo:.6g}, {hi:.6g}): "
            f"g = {g_lo:.3g}, {g_hi:.3g}; omega = {omega} lies outside the admissible set")
    _assert_monotone(g, lo, hi, decreasing=decreasing, what="shift function")
    a = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(L - a - s) <= 1e-14 * L:
        raise NoRootError("root falls on the inflection point of the dnoidal profile")
    return StandingWave(p, float(a), N, float(Z), tails=True, branch=branch)


def inflection_points(p: DnoidalParams, a: float, tol: float = 1e-12) -> list[float]:
    """Zeros of Phi''_{omega,a} in [-L, L], sorted.

    The zeros are a +- sqrt(2) x0/eta1 + 2mL; endpoints within `tol` of
    +-L are reported as both -L and L since the loop closes there.
    """
    L = p.L
    s = p.inflection_offset
    pts = []
    for base in (a - s, a + s):
        for m in (-2, -1, 0, 1, 2):
            x = base + 2 * m * L
            if -L - tol * L <= x <= L + tol * L:
                pts.append(float(np.clip(x, -L, L)))
    if any(abs(abs(x) - L) <= tol * L for x in pts):
        pts = [x for x in pts if abs(abs(x) - L) > tol * L] + [-L, L]
    return sorted(set(pts))


def loop_mass(p: DnoidalParams) -> float:
    """int_{-L}^{L} Phi^2 = (4/L) K(k) E(k)."""
    K, E = complete_KE(p.k, p.kprime)
    return 4.0 * K * E / p.L


def tail_mass(omega, Z, N) -> float:
    """int_L^inf Psi^2 for one half-line: 2 sqrt(omega) + 2N/Z."""
    return 2.0 * np.sqrt(omega) + 2.0 * N / Z


def mass(w: StandingWave) -> float:
    m = loop_mass(w.dn)
    if w.tails:
        m += w.N * tail_mass(w.omega, w.Z, w.N)
    return float(m)


def mass_slope(omega: float, L: float, N: int = 1, Z: float | None = None,
               tails: bool = False, rel_step: float = 1e-5, branch: str = "inner") -> float:
    """Centered difference of omega -> mass, re-solving the profile at each point."""
    h = rel_step * omega

    def m(w):
        wave = solve_shift(w, N, Z, L, branch) if tails else loop_only_wave(w, L, N, Z)
        return mass(wave)

    return float((m(omega + h) - m(omega - h)) / (2 * h))
