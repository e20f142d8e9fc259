"""Discrete metric-measure domains.

Three concrete domain kinds are supported:

* ``PeriodicGrid``: a uniform grid on the flat d-torus [0, L)^d with
  spacing h = L/n and vertex measure h^d.
* ``Circle``: the d = 1 special case, kept as its own class so callers
  can dispatch on it.
* ``WeightedGraph``: an arbitrary finite weighted graph with per-edge
  weights and lengths and per-vertex measures.

Every domain carries a curvature lower bound ``K`` and an effective
dimension ``N`` (a float in [2, inf]); these feed the spectral and
verification layers but play no role in the discrete calculus itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import FormatError, ParameterError

__all__ = [
    "Domain",
    "PeriodicGrid",
    "Circle",
    "WeightedGraph",
    "Ball",
    "ball",
    "build_torus",
    "load_graph",
]


def _check_K_N(K: float, N: float) -> tuple[float, float]:
    K = float(K)
    N = float(N)
    if not math.isfinite(K):
        raise ParameterError(f"curvature bound K must be finite, got {K}")
    if not (N >= 2.0):
        raise ParameterError(f"effective dimension N must be >= 2 or inf, got {N}")
    return K, N


class Domain:
    """Common interface of all discrete domains.

    Attributes
    ----------
    nv : int
        Number of vertices.
    measure : ndarray, shape (nv,)
        Vertex measures, all positive.
    K : float
        Curvature lower bound.
    N : float
        Effective dimension, in [2, inf].
    diam : float
        Diameter of the metric.
    kind : str
        One of ``"grid"``, ``"circle"``, ``"graph"``.
    """

    kind: str = "abstract"

    nv: int
    measure: np.ndarray
    K: float
    N: float
    diam: float

    @property
    def K_minus(self) -> float:
        """Negative part max(-K, 0) of the curvature bound."""
        # + 0.0 folds the -0.0 that max() leaks when K == 0
        return max(-self.K, 0.0) + 0.0

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @property
    def is_grid(self) -> bool:
        return isinstance(self, PeriodicGrid)

    def distances_from(self, vertex: int) -> np.ndarray:
        """Geodesic distance from ``vertex`` to every vertex."""
        raise NotImplementedError

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return (
            f"{type(self).__name__}(nv={self.nv}, K={self.K}, N={self.N}, "
            f"diam={self.diam:.6g})"
        )


class PeriodicGrid(Domain):
    """Uniform grid on the flat torus [0, L)^d.

    Vertices are the points h * (i_1, ..., i_d) with 0 <= i_k < n and
    h = L/n, indexed in C order, each carrying measure h^d.  Distances
    combine per-axis wrapped distances Euclideanly, so the diameter is
    (L/2) * sqrt(d).
    """

    kind = "grid"

    def __init__(self, d: int, n: int, L: float, K: float = 0.0, N: float = 2.0):
        if d not in (1, 2, 3):
            raise ParameterError(f"grid dimension must be 1, 2 or 3, got {d}")
        if not (isinstance(n, (int, np.integer)) and n >= 4):
            raise ParameterError(f"grid resolution must be an integer >= 4, got {n}")
        if not (L > 0 and math.isfinite(L)):
            raise ParameterError(f"side length must be positive and finite, got {L}")
        self.K, self.N = _check_K_N(K, N)
        self.d = int(d)
        self.n = int(n)
        self.L = float(L)
        self.h = self.L / self.n
        self.shape = (self.n,) * self.d
        self.nv = self.n**self.d
        self.diam = (self.L / 2.0) * math.sqrt(self.d)
        self.measure = np.full(self.nv, self.h**self.d)
        self.measure.setflags(write=False)

    def coordinates(self) -> np.ndarray:
        """Vertex coordinates as an (nv, d) array."""
        idx = np.indices(self.shape).reshape(self.d, self.nv).T
        return idx * self.h

    def axis_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Wrapped distance |a - b| on a single axis of length L."""
        delta = np.abs(a - b)
        return np.minimum(delta, self.L - delta)

    def distances_from(self, vertex: int) -> np.ndarray:
        coords = self.coordinates()
        center = coords[vertex]
        per_axis = self.axis_distance(coords, center)
        if self.d == 1:
            # sqrt(x**2) can lose the last ulp; keep 1-d distances exact.
            return per_axis[:, 0]
        return np.sqrt((per_axis**2).sum(axis=1))

    def neighbors(self, vertex: int) -> np.ndarray:
        """The 2d grid neighbours of ``vertex`` (wrapping around)."""
        multi = np.array(np.unravel_index(vertex, self.shape))
        out = []
        for axis in range(self.d):
            for step in (-1, 1):
                shifted = multi.copy()
                shifted[axis] = (shifted[axis] + step) % self.n
                out.append(np.ravel_multi_index(tuple(shifted), self.shape))
        return np.array(sorted(set(out)), dtype=np.int64)


class Circle(PeriodicGrid):
    """Uniformly sampled circle of circumference L; the d = 1 grid."""

    kind = "circle"

    def __init__(self, n: int, L: float, K: float = 0.0, N: float = 2.0):
        super().__init__(1, n, L, K=K, N=N)


class WeightedGraph(Domain):
    """Finite weighted graph with edge lengths and vertex measures.

    Parameters
    ----------
    edges : sequence of (tail, head) pairs
        Each undirected edge appears once; self loops are rejected.
    weights, lengths : arrays, shape (ne,)
        Positive conductances and positive edge lengths.
    measure : array, shape (nv,)
        Positive vertex measures.
    K, N : floats
        Curvature bound (default 0) and effective dimension (default 2).
    """

    kind = "graph"

    def __init__(
        self,
        edges,
        weights,
        lengths,
        measure,
        K: float = 0.0,
        N: float = 2.0,
    ):
        self.K, self.N = _check_K_N(K, N)
        edges = np.asarray(edges, dtype=np.int64)
        if edges.ndim != 2 or edges.shape[1] != 2 or edges.shape[0] == 0:
            raise ParameterError("edges must be a nonempty (ne, 2) array of vertex ids")
        self.edge_tail = edges[:, 0].copy()
        self.edge_head = edges[:, 1].copy()
        self.edge_weight = np.asarray(weights, dtype=float).copy()
        self.edge_length = np.asarray(lengths, dtype=float).copy()
        self.measure = np.asarray(measure, dtype=float).copy()
        self.ne = len(self.edge_tail)
        self.nv = len(self.measure)
        if self.nv < 2:
            raise ParameterError("a graph domain needs at least two vertices")
        if len(self.edge_weight) != self.ne or len(self.edge_length) != self.ne:
            raise ParameterError("weights and lengths must match the edge count")
        if np.any(self.edge_tail == self.edge_head):
            raise ParameterError("self loops are not allowed")
        ids = np.concatenate([self.edge_tail, self.edge_head])
        if ids.min() < 0 or ids.max() >= self.nv:
            raise ParameterError("edge endpoint out of vertex range")
        if np.any(self.edge_weight <= 0) or np.any(self.edge_length <= 0):
            raise ParameterError("edge weights and lengths must be positive")
        if np.any(self.measure <= 0):
            raise ParameterError("vertex measures must be positive")
        key = np.stack(
            [
                np.minimum(self.edge_tail, self.edge_head),
                np.maximum(self.edge_tail, self.edge_head),
            ],
            axis=1,
        )
        if len(np.unique(key, axis=0)) != self.ne:
            raise ParameterError("duplicate edges are not allowed")
        self._adjacency = coo_matrix(
            (
                np.concatenate([self.edge_length, self.edge_length]),
                (
                    np.concatenate([self.edge_tail, self.edge_head]),
                    np.concatenate([self.edge_head, self.edge_tail]),
                ),
            ),
            shape=(self.nv, self.nv),
        ).tocsr()
        ncomp, _ = connected_components(self._adjacency, directed=False)
        if ncomp != 1:
            raise ParameterError("graph must be connected")
        dist = dijkstra(self._adjacency, directed=False)
        self.diam = float(dist.max())
        for arr in (
            self.edge_tail,
            self.edge_head,
            self.edge_weight,
            self.edge_length,
            self.measure,
        ):
            arr.setflags(write=False)

    def distances_from(self, vertex: int) -> np.ndarray:
        return dijkstra(self._adjacency, directed=False, indices=vertex)

    def neighbors(self, vertex: int) -> np.ndarray:
        out = np.concatenate(
            [
                self.edge_head[self.edge_tail == vertex],
                self.edge_tail[self.edge_head == vertex],
            ]
        )
        return np.array(sorted(set(out.tolist())), dtype=np.int64)


@dataclass(frozen=True)
class Ball:
    """Metric ball: the vertex set {v : dist(center, v) <= radius}."""

    center: int
    radius: float
    members: np.ndarray
    mask: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.members)


def ball(domain: Domain, center: int, radius: float) -> Ball:
    """Exact metric ball around ``center``.

    Membership is decided by the domain metric itself; no fuzz is added,
    so a vertex exactly at distance ``radius`` is included.
    """
    if not (0 <= center < domain.nv):
        raise ParameterError(f"center {center} out of range for nv={domain.nv}")
    if not (radius >= 0):
        raise ParameterError(f"radius must be nonnegative, got {radius}")
    dist = domain.distances_from(center)
    mask = dist <= radius
    members = np.flatnonzero(mask)
    members.setflags(write=False)
    mask.setflags(write=False)
    return Ball(center=center, radius=float(radius), members=members, mask=mask)


def build_torus(d: int, n: int, L: float, K: float = 0.0, N: float = 2.0) -> PeriodicGrid:
    """Build a periodic grid domain; d = 1 yields a ``Circle``."""
    if d == 1:
        return Circle(n, L, K=K, N=N)
    return PeriodicGrid(d, n, L, K=K, N=N)


def load_graph(path) -> WeightedGraph:
    """Read a weighted graph domain from a text file.

    The format is line based.  Blank lines and ``#`` comments are
    skipped.  Records are:

    * ``vertex <id> <measure>``
    * ``edge <tail> <head> <weight> [<length>]`` (length defaults to 1)
    * ``K <value>`` and ``N <value>`` (optional, default 0 and 2; ``N``
      accepts ``inf``)

    Vertex ids must be exactly 0..nv-1.  Any other record kind is an
    error.
    """
    vertices: dict[int, float] = {}
    edges = []
    weights = []
    lengths = []
    K = 0.0
    N = 2.0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            try:
                if kind == "vertex":
                    vid, m = int(args[0]), float(args[1])
                    if len(args) != 2:
                        raise ValueError("expected: vertex <id> <measure>")
                    if vid in vertices:
                        raise ValueError(f"vertex {vid} defined twice")
                    vertices[vid] = m
                elif kind == "edge":
                    if len(args) not in (3, 4):
                        raise ValueError("expected: edge <tail> <head> <weight> [<length>]")
                    edges.append((int(args[0]), int(args[1])))
                    weights.append(float(args[2]))
                    lengths.append(float(args[3]) if len(args) == 4 else 1.0)
                elif kind == "K":
                    K = float(args[0])
                elif kind == "N":
                    N = float(args[0])
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not vertices:
        raise FormatError(f"{path}: no vertices defined")
    nv = len(vertices)
    if sorted(vertices) != list(range(nv)):
        raise FormatError(f"{path}: vertex ids must be exactly 0..{nv - 1}")
    measure = np.array([vertices[i] for i in range(nv)])
    try:
        return WeightedGraph(edges, weights, lengths, measure, K=K, N=N)
    except ParameterError as exc:
        raise FormatError(f"{path}: {exc}") from exc
