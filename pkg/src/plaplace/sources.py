"""Deterministic named source fields for solves, studies and the CLI.

Every builder returns a zero-mean ScalarField so it is directly usable
as right hand side data.  Builders are pure functions of the domain, so
repeated construction is bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

from .calculus import ScalarField, zero_mean
from .errors import ParameterError, UnsupportedOperationError
from .mesh import Domain, PeriodicGrid

__all__ = ["SOURCES", "builtin_source", "cosine", "dipole", "smooth", "spike"]


def _require_grid(domain: Domain, what: str) -> PeriodicGrid:
    if not isinstance(domain, PeriodicGrid):
        raise UnsupportedOperationError(f"{what} needs a periodic grid domain")
    return domain


def cosine(domain: Domain, k: int = 1, axis: int = 0) -> ScalarField:
    """Single harmonic cos(2 pi k x_axis / L)."""
    dom = _require_grid(domain, "cosine source")
    if not (isinstance(k, int) and 1 <= k <= dom.n // 2):
        raise ParameterError(f"mode k must be an integer in [1, n/2], got {k}")
    if not 0 <= axis < dom.d:
        raise ParameterError(f"axis {axis} out of range for d={dom.d}")
    x = dom.coordinates()[:, axis]
    return zero_mean(ScalarField(dom, np.cos(2.0 * math.pi * k * x / dom.L)))


def smooth(domain: Domain) -> ScalarField:
    """Low-frequency multi-mode field: cos on circles, two-mode mix on tori."""
    dom = _require_grid(domain, "smooth source")
    x = dom.coordinates()
    tp = 2.0 * math.pi / dom.L
    vals = np.cos(tp * x[:, 0])
    if dom.d >= 2:
        vals = vals * np.sin(tp * x[:, 1]) + 0.5 * np.sin(tp * (2.0 * x[:, 0] + x[:, 1]))
    return zero_mean(ScalarField(dom, vals))


def spike(domain: Domain, vertex: int = 0, height: float = 64.0) -> ScalarField:
    """Tall bounded bump at one vertex, zero-meaned.

    The default height tops the dyadic truncation ladder 1, 2, ..., 64,
    so every truncation level below 64 perturbs the field and level 64
    recovers it exactly.
    """
    dom = _require_grid(domain, "spike source")
    if not 0 <= vertex < dom.nv:
        raise ParameterError(f"vertex {vertex} out of range for nv={dom.nv}")
    if not height > 0.0:
        raise ParameterError(f"spike height must be positive, got {height}")
    vals = np.zeros(dom.nv)
    vals[vertex] = height
    return zero_mean(ScalarField(dom, vals))


def dipole(domain: Domain, vertex: int = 0) -> ScalarField:
    """Equal and opposite unit masses on two adjacent vertices; exactly zero mean."""
    dom = _require_grid(domain, "dipole source")
    if not 0 <= vertex < dom.nv:
        raise ParameterError(f"vertex {vertex} out of range for nv={dom.nv}")
    multi = list(np.unravel_index(vertex, dom.shape))
    multi[-1] = (multi[-1] + 1) % dom.n
    neighbor = int(np.ravel_multi_index(tuple(multi), dom.shape))
    vals = np.zeros(dom.nv)
    amp = 1.0 / dom.h**dom.d
    vals[vertex] = amp
    vals[neighbor] = -amp
    return ScalarField(dom, vals)


SOURCES = {
    "cosine": cosine,
    "dipole": dipole,
    "smooth": smooth,
    "spike": spike,
}


def builtin_source(domain: Domain, name: str) -> ScalarField:
    """Look up a named builder; the names double as CLI --rhs builtins."""
    try:
        builder = SOURCES[name]
    except KeyError:
        known = ", ".join(sorted(SOURCES))
        raise ParameterError(f"unknown source {name!r}; builtins: {known}") from None
    return builder(domain)
