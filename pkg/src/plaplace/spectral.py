"""Spectral gap, dimensional constants, and the regularity interval.

The quantities here tie the geometry of a domain (curvature bound K,
effective dimension N, spectral gap lambda1) to the range of exponents p
for which the fixed-point solver is guaranteed to contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergenceError, ParameterError
from .mesh import Domain

__all__ = [
    "lambda1",
    "delta_X",
    "regularity_interval",
    "alpha_p",
    "contraction_bound",
    "GeometryConstants",
    "geometry_constants",
]


def lambda1(domain: Domain, tol: float = 1e-10, max_iter: int = 500, seed: int = 0) -> float:
    """Smallest positive eigenvalue of -laplacian, by inverse iteration.

    Each step solves a Poisson problem on the zero-mean subspace; the
    Rayleigh quotient sum(|grad v|^2 m) of the normalized iterate is the
    eigenvalue estimate, stopped when it is stationary to ``tol``
    relative.
    """
    # Imported here: solve.poisson_solve lives above this module in the
    # dependency order (it reports contraction bounds from here).
    from .calculus import ScalarField, gradient, inner, lp_norm, zero_mean
    from .solve import poisson_solve

    rng = np.random.default_rng(seed)
    v = zero_mean(ScalarField(domain, rng.standard_normal(domain.nv)))
    v = (1.0 / lp_norm(v, 2)) * v
    lam_prev = math.inf
    for _ in range(max_iter):
        w = poisson_solve(-v, tol=min(1e-12, tol * 1e-2))
        v = (1.0 / lp_norm(w, 2)) * w
        g = gradient(v)
        lam = inner(g, g)
        if abs(lam - lam_prev) <= tol * lam:
            return float(lam)
        lam_prev = lam
    raise NonConvergenceError(f"lambda1 did not settle within {max_iter} iterations")


def delta_X(lam: float, K_minus: float) -> float:
    """Curvature-to-gap ratio lambda1 K^- / (1 + lambda1 K^-), in [0, 1)."""
    if not (lam > 0):
        raise ParameterError(f"lambda1 must be positive, got {lam}")
    if not (K_minus >= 0):
        raise ParameterError(f"K_minus must be nonnegative, got {K_minus}")
    return lam * K_minus / (1.0 + lam * K_minus)


def regularity_interval(N: float, delta: float) -> tuple[float, float]:
    """Open interval (p_lo, p_hi) of exponents with a contracting scheme.

    Three cases, by effective dimension N and the ratio delta = delta_X:

    * N = 2 and delta = 0: the whole range (1, inf);
    * N = inf: (2 - sqrt(1 - delta), 2 + sqrt(1 - delta));
    * otherwise: the same left endpoint and
      p_hi = 2 + sqrt(1 - delta) (N - delta) / (N - 2 + delta).
    """
    N = float(N)
    if not (N >= 2.0):
        raise ParameterError(f"N must be >= 2 or inf, got {N}")
    if not (0.0 <= delta < 1.0):
        raise ParameterError(f"delta must lie in [0, 1), got {delta}")
    if N == 2.0 and delta == 0.0:
        return (1.0, math.inf)
    root = math.sqrt(1.0 - delta)
    if math.isinf(N):
        return (2.0 - root, 2.0 + root)
    return (2.0 - root, 2.0 + root * (N - delta) / (N - 2.0 + delta))


def alpha_p(p: float, N: float) -> float:
    """Cordes distance of the p-Laplacian from the Laplacian.

    alpha_p = (p-2)^2 when p < 2 or N = inf, and
    (p-2)^2 (N-1) / (N + 2(p-2) + (p-2)^2) otherwise.  It vanishes at
    p = 2 and reaches 1 exactly at the endpoints of the delta = 0
    regularity interval.
    """
    p = float(p)
    N = float(N)
    if not (p >= 1.0 and math.isfinite(p)):
        raise ParameterError(f"alpha_p needs a finite p >= 1, got {p}")
    if not (N >= 2.0):
        raise ParameterError(f"N must be >= 2 or inf, got {N}")
    t = p - 2.0
    if p < 2.0 or math.isinf(N):
        return t * t
    return t * t * (N - 1.0) / (N + 2.0 * t + t * t)


def contraction_bound(
    p: float,
    N: float,
    lam: float,
    K_minus: float,
    bochner: str = "derived",
) -> float:
    """Theoretical contraction factor sqrt(alpha_p (1 + K^- Gamma)).

    ``Gamma`` couples the curvature term to the spectral gap.  The
    ``"derived"`` choice Gamma = 1/lambda1 follows from chaining the
    improved Bochner inequality with the Poincare inequality for the
    Laplacian; ``"literal"`` uses Gamma = lambda1, matching the product
    form that also defines delta_X.  With K^- = 0 the two agree.
    """
    if not (lam > 0):
        raise ParameterError(f"lambda1 must be positive, got {lam}")
    if not (K_minus >= 0):
        raise ParameterError(f"K_minus must be nonnegative, got {K_minus}")
    if bochner == "derived":
        gamma = 1.0 / lam
    elif bochner == "literal":
        gamma = lam
    else:
        raise ParameterError(f"bochner must be 'derived' or 'literal', got {bochner!r}")
    return math.sqrt(alpha_p(p, N) * (1.0 + K_minus * gamma))


@dataclass(frozen=True)
class GeometryConstants:
    """Spectral and dimensional constants of one domain."""

    lambda1: float
    K_minus: float
    N: float
    delta_X: float
    interval: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.interval
        if not (lo < 2.0 < hi):
            raise ParameterError(f"regularity interval {self.interval} must contain 2")
        if not (0.0 <= self.delta_X < 1.0):
            raise ParameterError(f"delta_X {self.delta_X} out of [0, 1)")


def geometry_constants(domain: Domain, tol: float = 1e-10) -> GeometryConstants:
    """Compute lambda1 and package the constants of ``domain``."""
    lam = lambda1(domain, tol=tol)
    delta = delta_X(lam, domain.K_minus)
    return GeometryConstants(
        lambda1=lam,
        K_minus=domain.K_minus,
        N=domain.N,
        delta_X=delta,
        interval=regularity_interval(domain.N, delta),
    )
