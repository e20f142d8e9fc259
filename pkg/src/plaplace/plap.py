"""Nonlinear operators: flux, p-Laplacian, developed form, frozen linearization.

All operators share the regularization convention of ``RegParams``: the
flux coefficient is ((|grad u| ^ M)^2 + eps)^((p-2)/2) where ``^`` caps
the magnitude at M, with the bare eps = 0, M = inf case falling back to
|v|^(p-2) v and the convention that this vanishes where v does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calculus import (
    HessianField,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    hessian,
    infinity_laplacian,
    laplacian,
)
from .errors import ParameterError, UnsupportedOperationError
from .mesh import WeightedGraph

__all__ = [
    "RegParams",
    "flux",
    "p_laplacian",
    "developed",
    "frozen_L",
    "theta",
    "theta_lower_bound",
    "monotonicity_pair",
]


@dataclass(frozen=True)
class RegParams:
    """Exponent p in (1, inf), regularization eps >= 0, truncation M in (0, inf]."""

    p: float
    eps: float = 0.0
    M: float = math.inf

    def __post_init__(self):
        if not (1.0 < self.p < math.inf):
            raise ParameterError(f"p must lie in (1, inf), got {self.p}")
        if not (self.eps >= 0.0 and math.isfinite(self.eps)):
            raise ParameterError(f"eps must be a finite nonnegative real, got {self.eps}")
        if not (self.M > 0.0):
            raise ParameterError(f"M must lie in (0, inf], got {self.M}")


def _flux_coefficient(mag: np.ndarray, rp: RegParams) -> np.ndarray:
    """((mag ^ M)^2 + eps)^((p-2)/2), with 0^negative resolved to 0."""
    base = np.minimum(mag, rp.M) ** 2 + rp.eps
    expo = (rp.p - 2.0) / 2.0
    if expo >= 0.0:
        return base**expo
    with np.errstate(divide="ignore"):
        coef = base**expo
    return np.where(base == 0.0, 0.0, coef)


# 16-point Gauss-Legendre rule mapped to [0, 1]; module level so the nodes
# are computed once.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _axis_slope_average(a: np.ndarray, b: np.ndarray, cross: np.ndarray, rp: RegParams) -> np.ndarray:
    """Averaged flux slope along one grid axis, transverse magnitude frozen.

    For the one-dimensional flux psi(s) = ((s^2 + cross ^ M^2) + eps)^((p-2)/2) s
    this returns the divided difference (psi(a) - psi(b)) / (a - b), computed as
    the integral average of psi' over the segment.  The average is a convex
    combination of values W(s) (1 + (p-2) s^2/(s^2 + cross + eps)), so it stays
    inside the coefficient range the contraction argument needs, while matching
    the discrete divergence form exactly in the axis direction.  Endpoint-style
    freezing is off by a factor of up to p-1 at cells where the slope changes
    sign; the average has no such defect.
    """
    q = 0.5 * (rp.p - 2.0)
    lim = rp.M * rp.M

    def slope(s, c):
        r2 = s * s + c
        base = np.minimum(r2, lim) + rp.eps
        if q >= 0.0:
            w = base**q
        else:
            with np.errstate(divide="ignore"):
                w = base**q
            w = np.where(base == 0.0, 0.0, w)
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = 1.0 + (rp.p - 2.0) * (s * s) / (r2 + rp.eps)
        corr = np.where(r2 + rp.eps == 0.0, 1.0, corr)
        # beyond the truncation radius the weight is constant, so the slope
        # loses its quadratic correction
        return np.where(r2 < lim, w * corr, w)

    def panel(lo, hi, c):
        # int_lo^hi slope(s) ds after s = lo + (hi-lo) xi^2, which clusters
        # nodes at the low end where the integrand kinks as eps -> 0
        d = (hi - lo)[..., None]
        s = lo[..., None] + d * (_GL_X**2)[None, :]
        return (d * slope(s, c[..., None]) * (2.0 * _GL_X * _GL_W)[None, :]).sum(axis=-1)

    absa, absb = np.abs(a), np.abs(b)
    span = np.abs(a - b)
    straddle = (a * b) < 0.0
    # the integrand depends on s only through s^2, so a sign-straddling
    # segment folds onto [0,|b|] + [0,|a|]; otherwise integrate [min,max]
    lo1 = np.where(straddle, 0.0, np.minimum(absa, absb))
    hi1 = np.where(straddle, absb, np.maximum(absa, absb))
    hi2 = np.where(straddle, absa, 0.0)
    total = panel(lo1, hi1, cross) + panel(np.zeros_like(hi2), hi2, cross)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = total / span
    return np.where(span == 0.0, slope(absa, cross), rho)


def _frozen_coefficients(dom, vals: np.ndarray, rp: RegParams):
    """Coefficients frozen from a grid iterate: (diag, off, sq).

    ``diag[:, i]`` multiplies the second difference along axis i and equals
    the axis-averaged flux slope divided by the global weight, so that after
    the data is rescaled by the same weight the fixed point solves the
    discrete divergence form.  ``off`` is the symmetrized one-sided product
    tensor with its diagonal zeroed; it carries the mixed Hessian terms with
    denominator ``sq + eps``.  ``sq`` is the vertex gradient magnitude
    surrogate trace(V).
    """
    U = vals.reshape(dom.shape)
    h = dom.h
    fwd = [((np.roll(U, -1, axis=i) - U) / h).ravel() for i in range(dom.d)]
    bwd = [((U - np.roll(U, 1, axis=i)) / h).ravel() for i in range(dom.d)]
    sbar = np.stack([0.5 * (fwd[i] ** 2 + bwd[i] ** 2) for i in range(dom.d)], axis=1)
    sq = sbar.sum(axis=1)
    weight = _flux_coefficient(np.sqrt(sq), rp)
    diag = np.empty((dom.nv, dom.d))
    for i in range(dom.d):
        rho = _axis_slope_average(fwd[i], bwd[i], sq - sbar[:, i], rp)
        with np.errstate(invalid="ignore", divide="ignore"):
            diag[:, i] = rho / weight
        diag[:, i] = np.where(weight == 0.0, 1.0, diag[:, i])
    off = np.zeros((dom.nv, dom.d, dom.d))
    for i in range(dom.d):
        for j in range(i + 1, dom.d):
            off[:, i, j] = 0.5 * (fwd[i] * fwd[j] + bwd[i] * bwd[j])
            off[:, j, i] = off[:, i, j]
    return diag, off, sq


def flux(u: ScalarField, rp: RegParams) -> VectorField:
    """Regularized flux ((|grad u| ^ M)^2 + eps)^((p-2)/2) grad u."""
    g = gradient(u)
    if isinstance(u.domain, WeightedGraph):
        mag = np.abs(g.values)
        return VectorField(u.domain, _flux_coefficient(mag, rp) * g.values)
    mag = np.sqrt((g.values**2).sum(axis=1))
    return VectorField(u.domain, _flux_coefficient(mag, rp)[:, None] * g.values)


def p_laplacian(u: ScalarField, rp: RegParams) -> ScalarField:
    """div(flux(u, rp)); satisfies the discrete weak formulation exactly."""
    return divergence(flux(u, rp))


def _require_second_order(u, what: str):
    if isinstance(u.domain, WeightedGraph):
        raise UnsupportedOperationError(f"{what} needs a grid domain (second order structure)")


def _require_eps(rp: RegParams, what: str):
    if not (rp.eps > 0.0):
        raise ParameterError(f"{what} needs eps > 0, got {rp.eps}")


def developed(u: ScalarField, rp: RegParams) -> ScalarField:
    """Non-divergence form: lap u + (p-2) Hu(grad u, grad u) / (|grad u|^2 + eps).

    Multiplying pointwise by (|grad u|^2 + eps)^((p-2)/2) recovers
    p_laplacian(u, rp) up to a discretization error of order h.
    """
    _require_second_order(u, "developed")
    _require_eps(rp, "developed")
    g = gradient(u)
    denom = (g.values**2).sum(axis=1) + rp.eps
    vals = laplacian(u).values + (rp.p - 2.0) * infinity_laplacian(u).values / denom
    return ScalarField(u.domain, vals)


def frozen_L(u: ScalarField, v: VectorField, rp: RegParams) -> ScalarField:
    """Linearization at a frozen field v: lap u + (p-2) Hu(v, v) / (|v|^2 + eps).

    With v = gradient(u) this reproduces ``developed(u, rp)``.
    """
    _require_second_order(u, "frozen_L")
    _require_eps(rp, "frozen_L")
    if v.domain is not u.domain:
        raise ParameterError("u and v live on different domains")
    H = hessian(u)
    quad = np.einsum("vij,vi,vj->v", H.values, v.values, v.values)
    denom = (v.values**2).sum(axis=1) + rp.eps
    vals = laplacian(u).values + (rp.p - 2.0) * quad / denom
    return ScalarField(u.domain, vals)


def theta(v: VectorField, rp: RegParams, N: float) -> ScalarField:
    """Cordes weight (N + g) / (N + g^2 + 2g) with g = (p-2)|v|^2/(|v|^2 + eps).

    Identically 1 for p in (1, 2] and for N = inf; otherwise a value in
    (0, 1] that pulls the frozen linearization toward the Laplacian.
    """
    _require_eps(rp, "theta")
    if isinstance(v.domain, WeightedGraph):
        raise UnsupportedOperationError("theta needs vertex-supported vector fields")
    N = float(N)
    if not (N >= 2.0):
        raise ParameterError(f"N must be >= 2 or inf, got {N}")
    if rp.p < 2.0 or math.isinf(N):
        return ScalarField(v.domain, np.ones(v.domain.nv))
    sq = (v.values**2).sum(axis=1)
    g = (rp.p - 2.0) * sq / (sq + rp.eps)
    return ScalarField(v.domain, (N + g) / (N + g**2 + 2.0 * g))


def theta_lower_bound(p: float, N: float) -> float:
    """Infimum of theta over all fields: (N+p-2)/(N+(p-2)^2+2(p-2)) for p >= 2."""
    if p < 2.0 or math.isinf(N):
        return 1.0
    t = p - 2.0
    return (N + t) / (N + t * t + 2.0 * t)


def monotonicity_pair(v: VectorField, w: VectorField, rp: RegParams):
    """Pointwise monotonicity pair of the unregularized flux.

    Returns (LHS, RHS) with LHS = <|v|^(p-2) v - |w|^(p-2) w, v - w> and
    RHS = |v-w|^p for p >= 2, |v-w|^2 / (|v|+|w|)^(2-p) for p < 2 (0
    where both vanish).  LHS >= c_p RHS holds with a p-dependent
    constant; LHS is nonnegative and vanishes only where v = w.
    """
    if isinstance(v.domain, WeightedGraph) or isinstance(w.domain, WeightedGraph):
        raise UnsupportedOperationError("monotonicity_pair needs vertex-supported fields")
    if v.domain is not w.domain:
        raise ParameterError("v and w live on different domains")
    p = rp.p
    bare = RegParams(p=p, eps=0.0, M=math.inf)
    vm = np.sqrt((v.values**2).sum(axis=1))
    wm = np.sqrt((w.values**2).sum(axis=1))
    fv = _flux_coefficient(vm, bare)[:, None] * v.values
    fw = _flux_coefficient(wm, bare)[:, None] * w.values
    diff = v.values - w.values
    lhs = ((fv - fw) * diff).sum(axis=1)
    dm = np.sqrt((diff**2).sum(axis=1))
    if p >= 2.0:
        rhs = dm**p
    else:
        denom = (vm + wm) ** (2.0 - p)
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = dm**2 / denom
        rhs = np.where(denom == 0.0, 0.0, rhs)
    return ScalarField(v.domain, lhs), ScalarField(v.domain, rhs)
