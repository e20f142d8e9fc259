"""First and second order calculus on discrete domains.

The conventions are fixed once and shared by everything downstream:

* ``gradient`` is the forward difference; on a grid component i at
  vertex x is (u(x + h e_i) - u(x)) / h, on a graph the edge value is
  (u(head) - u(tail)) / length.
* ``divergence`` is the exact negative adjoint of ``gradient`` with
  respect to the vertex measure (edge fields on graphs pair with the
  edge weights), so summation by parts holds to rounding.
* ``laplacian`` is ``divergence(gradient(u))`` and on grids reduces to
  the usual 2d+1 point stencil.
* ``hessian`` (grids only) uses the second difference on the diagonal,
  so that its trace equals ``laplacian`` exactly, and the symmetrized
  central mixed difference off the diagonal.

Scalar fields integrate against vertex measures; edge fields on graphs
integrate against edge weights.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError, UnsupportedOperationError
from .mesh import Domain, PeriodicGrid, WeightedGraph

__all__ = [
    "ScalarField",
    "VectorField",
    "HessianField",
    "gradient",
    "divergence",
    "laplacian",
    "hessian",
    "infinity_laplacian",
    "integrate",
    "mean",
    "zero_mean",
    "lp_norm",
    "hs_norm",
    "inner",
    "magnitude",
    "edge_lipschitz",
    "write_field_csv",
    "read_field_csv",
    "write_field_binary",
    "read_field_binary",
]


def _as_values(domain: Domain, values, shape, what: str) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    if out.shape != shape:
        raise ParameterError(f"{what} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ParameterError(f"{what} contains non-finite entries")
    return out


@dataclass
class ScalarField:
    """One float per vertex."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.domain, self.values, (self.domain.nv,), "scalar field")

    def grid_view(self) -> np.ndarray:
        """The values reshaped to the grid shape (grids only)."""
        return self.values.reshape(self.domain.shape)

    def __add__(self, other):
        _same_domain(self, other)
        return ScalarField(self.domain, self.values + other.values)

    def __sub__(self, other):
        _same_domain(self, other)
        return ScalarField(self.domain, self.values - other.values)

    def __mul__(self, c: float):
        return ScalarField(self.domain, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.domain, -self.values)


@dataclass
class VectorField:
    """On grids an (nv, d) array of components; on graphs one value per edge."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        if isinstance(self.domain, WeightedGraph):
            shape = (self.domain.ne,)
        else:
            shape = (self.domain.nv, self.domain.d)
        self.values = _as_values(self.domain, self.values, shape, "vector field")

    def __add__(self, other):
        _same_domain(self, other)
        return VectorField(self.domain, self.values + other.values)

    def __sub__(self, other):
        _same_domain(self, other)
        return VectorField(self.domain, self.values - other.values)

    def __mul__(self, c: float):
        return VectorField(self.domain, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.domain, -self.values)


@dataclass
class HessianField:
    """An (nv, d, d) array of symmetric matrices; grids only."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        if not isinstance(self.domain, PeriodicGrid):
            raise UnsupportedOperationError("hessian fields exist on grids only")
        d = self.domain.d
        self.values = _as_values(
            self.domain, self.values, (self.domain.nv, d, d), "hessian field"
        )


def _same_domain(a, b):
    if a.domain is not b.domain:
        raise ParameterError("fields live on different domains")


# ---------------------------------------------------------------------------
# differential operators


def _gradient_values(dom: Domain, vals: np.ndarray) -> np.ndarray:
    """Raw kernel behind ``gradient``, without field wrapping."""
    if isinstance(dom, WeightedGraph):
        return (vals[dom.edge_head] - vals[dom.edge_tail]) / dom.edge_length
    U = vals.reshape(dom.shape)
    comps = [(np.roll(U, -1, axis=i) - U) / dom.h for i in range(dom.d)]
    return np.stack([c.ravel() for c in comps], axis=1)


def _laplacian_values(dom: Domain, vals: np.ndarray) -> np.ndarray:
    """Raw kernel behind ``laplacian``, without field wrapping."""
    if isinstance(dom, WeightedGraph):
        diff = vals[dom.edge_head] - vals[dom.edge_tail]
        coef = diff * dom.edge_weight / dom.edge_length**2
        out = np.zeros(dom.nv)
        np.add.at(out, dom.edge_tail, coef)
        np.subtract.at(out, dom.edge_head, coef)
        return out / dom.measure
    U = vals.reshape(dom.shape)
    out = np.zeros(dom.shape)
    for i in range(dom.d):
        out += np.roll(U, -1, axis=i) - 2.0 * U + np.roll(U, 1, axis=i)
    return out.ravel() / dom.h**2


def gradient(u: ScalarField) -> VectorField:
    """Forward difference gradient.

    >>> from plaplace.mesh import build_torus
    >>> ring = build_torus(1, 4, 4.0)
    >>> gradient(ScalarField(ring, [0.0, 1.0, 2.0, 1.0])).values.ravel()
    array([ 1.,  1., -1., -1.])
    """
    return VectorField(u.domain, _gradient_values(u.domain, u.values))


def divergence(X: VectorField) -> ScalarField:
    """Negative adjoint of ``gradient``: sum(phi * div X * m) = -sum(<X, grad phi>)."""
    dom = X.domain
    if isinstance(dom, WeightedGraph):
        coef = X.values * dom.edge_weight / dom.edge_length
        out = np.zeros(dom.nv)
        np.add.at(out, dom.edge_tail, coef)
        np.subtract.at(out, dom.edge_head, coef)
        return ScalarField(dom, out / dom.measure)
    out = np.zeros(dom.shape)
    for i in range(dom.d):
        C = X.values[:, i].reshape(dom.shape)
        out += (C - np.roll(C, 1, axis=i)) / dom.h
    return ScalarField(dom, out.ravel())


def laplacian(u: ScalarField) -> ScalarField:
    """Graph or grid Laplacian, equal to divergence(gradient(u))."""
    return ScalarField(u.domain, _laplacian_values(u.domain, u.values))


def hessian(u: ScalarField) -> HessianField:
    """Second difference Hessian on grids; its trace equals the Laplacian."""
    dom = u.domain
    if not isinstance(dom, PeriodicGrid):
        raise UnsupportedOperationError(
            "hessian needs a grid domain; graphs carry first order structure only"
        )
    U = u.grid_view()
    h2 = dom.h**2
    H = np.empty((dom.nv, dom.d, dom.d))
    for i in range(dom.d):
        H[:, i, i] = ((np.roll(U, -1, axis=i) - 2.0 * U + np.roll(U, 1, axis=i)) / h2).ravel()
        for j in range(i + 1, dom.d):
            fwd = np.roll(U, -1, axis=i)
            bwd = np.roll(U, 1, axis=i)
            mixed = (
                np.roll(fwd, -1, axis=j)
                - np.roll(fwd, 1, axis=j)
                - np.roll(bwd, -1, axis=j)
                + np.roll(bwd, 1, axis=j)
            ) / (4.0 * h2)
            H[:, i, j] = mixed.ravel()
            H[:, j, i] = H[:, i, j]
    return HessianField(dom, H)


def infinity_laplacian(u: ScalarField) -> ScalarField:
    """Hu(grad u, grad u), the second difference along the gradient direction."""
    H = hessian(u)  # raises on graphs
    g = gradient(u).values
    vals = np.einsum("vij,vi,vj->v", H.values, g, g)
    return ScalarField(u.domain, vals)


# ---------------------------------------------------------------------------
# integration and norms


def integrate(f: ScalarField) -> float:
    """Integral of a scalar field against the vertex measures."""
    return float(np.dot(f.values, f.domain.measure))


def mean(f: ScalarField) -> float:
    """Measure weighted average of ``f``."""
    return integrate(f) / f.domain.total_measure


def zero_mean(f: ScalarField) -> ScalarField:
    """Subtract the measure weighted average."""
    return ScalarField(f.domain, f.values - mean(f))


def magnitude(X: VectorField) -> ScalarField | np.ndarray:
    """Pointwise Euclidean magnitude.

    On grids this is a ``ScalarField``; on graphs the edge values have
    no vertex home, so a plain per-edge array is returned.
    """
    if isinstance(X.domain, WeightedGraph):
        return np.abs(X.values)
    return ScalarField(X.domain, np.sqrt((X.values**2).sum(axis=1)))


def hs_norm(H: HessianField) -> ScalarField:
    """Pointwise Hilbert-Schmidt (Frobenius) norm of a Hessian field."""
    vals = np.sqrt((H.values**2).sum(axis=(1, 2)))
    return ScalarField(H.domain, vals)


def lp_norm(field, p: float) -> float:
    """Measure weighted L^p norm for p in (0, inf]; p = inf is the max norm.

    Scalar fields use vertex measures and |f|; vector fields use the
    pointwise Euclidean magnitude (edge weights on graphs); Hessian
    fields use the pointwise Hilbert-Schmidt norm.
    """
    if not (p > 0):
        raise ParameterError(f"lp_norm needs p in (0, inf], got {p}")
    if isinstance(field, HessianField):
        return lp_norm(hs_norm(field), p)
    if isinstance(field, VectorField):
        if isinstance(field.domain, WeightedGraph):
            mag = np.abs(field.values)
            w = field.domain.edge_weight
        else:
            mag = np.sqrt((field.values**2).sum(axis=1))
            w = field.domain.measure
    elif isinstance(field, ScalarField):
        mag = np.abs(field.values)
        w = field.domain.measure
    else:
        raise ParameterError(f"lp_norm does not accept {type(field).__name__}")
    if np.isinf(p):
        return float(mag.max()) if len(mag) else 0.0
    return float(np.dot(mag**p, w) ** (1.0 / p))


def inner(a, b) -> float:
    """Duality pairing: scalars and grid vectors against vertex measures,
    graph edge fields against edge weights."""
    _same_domain(a, b)
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        return float(np.dot(a.values * b.values, a.domain.measure))
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        if isinstance(a.domain, WeightedGraph):
            return float(np.dot(a.values * b.values, a.domain.edge_weight))
        return float(np.dot((a.values * b.values).sum(axis=1), a.domain.measure))
    raise ParameterError("inner expects two scalar fields or two vector fields")


def edge_lipschitz(u: ScalarField) -> float:
    """Largest difference quotient |u(x) - u(y)| / dist(x, y) over edges.

    On grids the edges are the 2d axis neighbours at distance h, so this
    is the largest absolute forward difference component.
    """
    dom = u.domain
    if isinstance(dom, WeightedGraph):
        return float(
            np.abs((u.values[dom.edge_head] - u.values[dom.edge_tail]) / dom.edge_length).max()
        )
    return float(np.abs(gradient(u).values).max())


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"PLFD"
_VERSION = 1

_KIND_HEADERS = {"scalar": "vertex", "vector": "vertex", "edge": "edge", "hessian": "vertex"}


def _field_kind(field) -> tuple[str, np.ndarray]:
    if isinstance(field, ScalarField):
        return "scalar", field.values.reshape(-1, 1)
    if isinstance(field, VectorField):
        if isinstance(field.domain, WeightedGraph):
            return "edge", field.values.reshape(-1, 1)
        return "vector", field.values
    if isinstance(field, HessianField):
        return "hessian", field.values.reshape(field.domain.nv, -1)
    raise ParameterError(f"cannot serialize {type(field).__name__}")


def _rebuild(domain: Domain, kind: str, table: np.ndarray):
    if kind == "scalar":
        return ScalarField(domain, table[:, 0])
    if kind == "edge":
        return VectorField(domain, table[:, 0])
    if kind == "vector":
        return VectorField(domain, table)
    if kind == "hessian":
        d = domain.d
        return HessianField(domain, table.reshape(domain.nv, d, d))
    raise FormatError(f"unknown field kind {kind!r}")


def write_field_csv(field, path) -> None:
    """Write a field as CSV: a header row, then one row per vertex (or edge)."""
    kind, table = _field_kind(field)
    idname = _KIND_HEADERS[kind]
    cols = ",".join(f"c{j}" for j in range(table.shape[1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{idname},{cols}\n")
        for i, row in enumerate(table):
            # repr of a python float is the shortest round-trip form
            fh.write(f"{i}," + ",".join(repr(float(x)) for x in row) + "\n")


def read_field_csv(domain: Domain, path):
    """Read a field written by ``write_field_csv`` back onto ``domain``."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        rows = [line.strip() for line in fh if line.strip()]
    idname = header.split(",", 1)[0] if header else ""
    if idname not in ("vertex", "edge"):
        raise FormatError(f"{path}: bad CSV header {header!r}")
    try:
        table = np.array([[float(x) for x in row.split(",")[1:]] for row in rows])
        ids = np.array([int(row.split(",", 1)[0]) for row in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if table.ndim != 2 or np.any(ids != np.arange(len(rows))):
        raise FormatError(f"{path}: rows must be 0..count-1 in order")
    return _rebuild(domain, _infer_kind(domain, idname, table.shape), table)


def write_field_binary(field, path) -> None:
    """Write a field in the flat binary format.

    Layout, all little endian: 4 byte magic ``PLFD``, uint32 version,
    uint64 row count (vertices, or edges for graph vector fields),
    uint64 component count, then count * components float64 values.
    """
    kind, table = _field_kind(field)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQ", table.shape[0], table.shape[1]))
        fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())


def read_field_binary(domain: Domain, path):
    """Read a field written by ``write_field_binary`` back onto ``domain``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:4] != _MAGIC:
        raise FormatError(f"{path}: not a field file (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    count, comps = struct.unpack("<QQ", blob[8:24])
    expected = 24 + 8 * count * comps
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    table = np.frombuffer(blob, dtype="<f8", offset=24).reshape(count, comps).astype(float)
    idname = "edge" if (isinstance(domain, WeightedGraph) and count == domain.ne) else "vertex"
    return _rebuild(domain, _infer_kind(domain, idname, table.shape), table)


def _infer_kind(domain: Domain, idname: str, shape: tuple[int, int]) -> str:
    rows, comps = shape
    if isinstance(domain, WeightedGraph):
        if idname == "edge":
            if rows != domain.ne or comps != 1:
                raise FormatError("edge field size does not match the graph")
            return "edge"
        if rows != domain.nv or comps != 1:
            raise FormatError("vertex field size does not match the graph")
        return "scalar"
    if rows != domain.nv:
        raise FormatError(f"row count {rows} does not match nv={domain.nv}")
    if comps == 1 and domain.d != 1:
        return "scalar"
    if comps == domain.d * domain.d and domain.d != 1:
        return "hessian"
    if comps == domain.d:
        # On 1-d grids one component could be any kind; scalar is the
        # convention, so vectors there must be stored via their values.
        return "scalar" if domain.d == 1 else "vector"
    raise FormatError(f"component count {comps} fits no field kind on this domain")
