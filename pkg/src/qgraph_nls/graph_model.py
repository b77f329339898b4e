"""Graph geometry, per-edge uniform grids, graph functions and vertex traces."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

LOOPING_EDGE = "LoopingEdge"
T_SHAPED = "TShaped"


class GridError(ValueError):
    """Raised for grids that are too coarse or do not match."""


@dataclass(frozen=True)
class GraphSpec:
    """Looping-edge graph (circle [-L, L] plus N half-lines at x = L) or
    T-shaped graph (pendant edge [-L, 0] plus N half-lines at x = 0).

    R is the truncation length of each half-line, used only by the
    discretized operators and the time integrator.
    """

    L: float
    N: int
    R: float = 40.0
    kind: str = LOOPING_EDGE

    def __post_init__(self):
        if self.kind not in (LOOPING_EDGE, T_SHAPED):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if not (self.L > 0 and self.R > 0):
            raise ValueError("L and R must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")

    @property
    def vertex(self) -> float:
        return self.L if self.kind == LOOPING_EDGE else 0.0

    @property
    def compact_edge(self) -> tuple[float, float]:
        return (-self.L, self.L) if self.kind == LOOPING_EDGE else (-self.L, 0.0)

    def loop_grid(self, n0: int) -> np.ndarray:
        a, b = self.compact_edge
        return np.linspace(a, b, n0)

    def ray_grid(self, n1: int) -> np.ndarray:
        return self.vertex + np.linspace(0.0, self.R, n1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "L": self.L, "N": self.N, "R": self.R}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSpec":
        return cls(L=float(d["L"]), N=int(d["N"]), R=float(d["R"]),
                   kind=d.get("kind", LOOPING_EDGE))


@dataclass(frozen=True)
class TraceVector:
    """Vertex data of a graph function.

    `values` is ordered (phi(-L), phi'(-L), psi_1(v), psi_1'(v), ...,
    psi_N(v), psi_N'(v)) and `right` holds (phi(v), phi'(v)) where v is the
    vertex end of the compact edge.
    """

    values: np.ndarray
    right: np.ndarray

    @property
    def N(self) -> int:
        return len(self.values) // 2 - 1

    def full(self) -> np.ndarray:
        """The 2(N+1)+2 vector acted on by constraint matrices."""
        return np.concatenate([self.values, self.right])

    def vertex_values(self) -> np.ndarray:
        """(phi(-L), phi(v), psi_1(v), ..., psi_N(v))."""
        return np.concatenate([[self.values[0], self.right[0]], self.values[2::2]])

    def vertex_derivatives(self) -> np.ndarray:
        """(phi'(-L), phi'(v), psi_1'(v), ..., psi_N'(v))."""
        return np.concatenate([[self.values[1], self.right[1]], self.values[3::2]])

    @classmethod
    def from_full(cls, t) -> "TraceVector":
        t = np.asarray(t)
        return cls(values=t[:-2].copy(), right=t[-2:].copy())


@dataclass(frozen=True)
class GraphFunction:
    """Complex samples of U = (phi, psi_1, ..., psi_N) on uniform edge grids."""

    graph: GraphSpec
    loop_values: np.ndarray
    ray_values: tuple = field(default_factory=tuple)

    def __post_init__(self):
        loop = np.asarray(self.loop_values, dtype=complex)
        rays = tuple(np.asarray(r, dtype=complex) for r in self.ray_values)
        if len(rays) != self.graph.N:
            raise GridError(f"expected {self.graph.N} ray arrays, got {len(rays)}")
        if loop.ndim != 1 or loop.size < 8:
            raise GridError("loop grid needs at least 8 points")
        sizes = {r.size for r in rays}
        if len(sizes) > 1 or (rays and rays[0].size < 8):
            raise GridError("ray grids must share a size of at least 8 points")
        if not (np.all(np.isfinite(loop)) and all(np.all(np.isfinite(r)) for r in rays)):
            raise GridError("graph function values must be finite")
        object.__setattr__(self, "loop_values", loop)
        object.__setattr__(self, "ray_values", rays)

    @property
    def n0(self) -> int:
        return self.loop_values.size

    @property
    def n1(self) -> int:
        return self.ray_values[0].size

    @property
    def h_loop(self) -> float:
        a, b = self.graph.compact_edge
        return (b - a) / (self.n0 - 1)

    @property
    def h_ray(self) -> float:
        return self.graph.R / (self.n1 - 1)

    def loop_x(self) -> np.ndarray:
        return self.graph.loop_grid(self.n0)

    def ray_x(self) -> np.ndarray:
        return self.graph.ray_grid(self.n1)

    def edges(self):
        """Yield (edge_id, x, values); edge 0 is the compact edge."""
        yield 0, self.loop_x(), self.loop_values
        for j, r in enumerate(self.ray_values, start=1):
            yield j, self.ray_x(), r

    @classmethod
    def from_callables(cls, graph, n0, n1, loop_fn, ray_fns):
        """Sample loop_fn on the compact edge and each of ray_fns on its ray.

        A single callable in place of ray_fns is used for every ray.
        """
        if callable(ray_fns):
            ray_fns = [ray_fns] * graph.N
        xl = graph.loop_grid(n0)
        xr = graph.ray_grid(n1)
        return cls(graph, loop_fn(xl), tuple(f(xr) for f in ray_fns))

    def map(self, fn) -> "GraphFunction":
        return GraphFunction(self.graph, fn(self.loop_values),
                             tuple(fn(r) for r in self.ray_values))

    def __add__(self, other):
        _check_match(self, other)
        return GraphFunction(self.graph, self.loop_values + other.loop_values,
                             tuple(a + b for a, b in zip(self.ray_values, other.ray_values)))

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c) -> "GraphFunction":
        return self.map(lambda v: c * v)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.loop_values, *self.ray_values])

    @classmethod
    def from_vector(cls, graph, vec, n0, n1) -> "GraphFunction":
        vec = np.asarray(vec)
        rays = tuple(vec[n0 + j * n1:n0 + (j + 1) * n1] for j in range(graph.N))
        return cls(graph, vec[:n0], rays)


def zeros(graph: GraphSpec, n0: int, n1: int) -> GraphFunction:
    return GraphFunction(graph, np.zeros(n0), tuple(np.zeros(n1) for _ in range(graph.N)))


def _check_match(u: GraphFunction, v: GraphFunction):
    if u.graph != v.graph or u.n0 != v.n0 or u.n1 != v.n1:
        raise GridError("graph functions live on different grids")


# one-sided fourth-order first-derivative weights at the left end of a grid
_D1_LEFT = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def _left_derivative(f, h):
    if f.size < 5:
        raise GridError("trace needs at least 5 points per edge")
    return _D1_LEFT @ f[:5] / h


def _right_derivative(f, h):
    if f.size < 5:
        raise GridError("trace needs at least 5 points per edge")
    return -(_D1_LEFT @ f[::-1][:5]) / h


def trace(u: GraphFunction) -> TraceVector:
    """Endpoint values and one-sided O(h^4) derivatives at the vertex."""
    loop = u.loop_values
    vals = [loop[0], _left_derivative(loop, u.h_loop)]
    for r in u.ray_values:
        vals += [r[0], _left_derivative(r, u.h_ray)]
    right = [loop[-1], _right_derivative(loop, u.h_loop)]
    return TraceVector(np.array(vals, dtype=complex), np.array(right, dtype=complex))


def _integrate(y, h):
    return simpson(y, dx=h)


def inner_product(u: GraphFunction, v: GraphFunction) -> complex:
    """Composite Simpson approximation of the sum over edges of int conj(u) v."""
    _check_match(u, v)
    total = _integrate(np.conj(u.loop_values) * v.loop_values, u.h_loop)
    for a, b in zip(u.ray_values, v.ray_values):
        total += _integrate(np.conj(a) * b, u.h_ray)
    return complex(total)


def derivative(u: GraphFunction) -> GraphFunction:
    """Edgewise second-order finite-difference derivative."""
    return GraphFunction(
        u.graph, np.gradient(u.loop_values, u.h_loop, edge_order=2),
        tuple(np.gradient(r, u.h_ray, edge_order=2) for r in u.ray_values))


def l2_norm(u: GraphFunction) -> float:
    return float(np.sqrt(inner_product(u, u).real))


def h1_norm(u: GraphFunction) -> float:
    du = derivative(u)
    return float(np.sqrt(inner_product(u, u).real + inner_product(du, du).real))


def to_csv(u: GraphFunction) -> str:
    """CSV with columns edge_id, x, re, im; floats written with 17 digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge_id", "x", "re", "im"])
    for eid, x, vals in u.edges():
        for xi, vi in zip(x, vals):
            w.writerow([eid, f"{xi:.17g}", f"{vi.real:.17g}", f"{vi.imag:.17g}"])
    return buf.getvalue()


def from_csv(text: str, graph: GraphSpec) -> GraphFunction:
    rows = list(csv.DictReader(io.StringIO(text)))
    by_edge: dict[int, list] = {}
    for r in rows:
        by_edge.setdefault(int(r["edge_id"]), []).append(complex(float(r["re"]), float(r["im"])))
    loop = np.array(by_edge[0])
    rays = tuple(np.array(by_edge[j]) for j in range(1, graph.N + 1))
    return GraphFunction(graph, loop, rays)


def to_json(u: GraphFunction) -> str:
    edges = []
    for eid, x, vals in u.edges():
        edges.append({"edge_id": eid, "x": x.tolist(),
                      "re": vals.real.tolist(), "im": vals.imag.tolist()})
    return json.dumps({"graph": u.graph.to_dict(), "edges": edges})


def from_json(text: str) -> GraphFunction:
    d = json.loads(text)
    graph = GraphSpec.from_dict(d["graph"])
    edges = sorted(d["edges"], key=lambda e: e["edge_id"])
    vals = [np.array(e["re"]) + 1j * np.array(e["im"]) for e in edges]
    return GraphFunction(graph, vals[0], tuple(vals[1:]))
