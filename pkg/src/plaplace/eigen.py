"""First nontrivial p-eigenpairs via constrained Rayleigh descent.

The eigen-equation div(|grad u|^(p-2) grad u) = -lambda u|u|^(p-2) is the
Euler-Lagrange equation of the Rayleigh quotient sum |grad u|^p m over
sum |u|^p m restricted to the set where sum u|u|^(p-2) m = 0.  Summing
the equation against the constant test function shows every eigenfunction
satisfies that constraint, which reduces to zero mean at p = 2.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .calculus import ScalarField, edge_lipschitz, gradient, lp_norm
from .errors import LineSearchError, NonConvergenceError, ParameterError
from .mesh import Domain
from .plap import RegParams, p_laplacian
from .solve import poisson_solve, weak_residual

__all__ = ["EigenRecord", "p_eigenpair"]

_ARMIJO = 1e-4
# iterations of Rayleigh-value flatness treated as stationary to rounding
_STALL_WINDOW = 50


@dataclass
class EigenRecord:
    """First nontrivial p-eigenpair and its quality measures.

    u is normalized to unit p-norm, satisfies the nonlinear-mean
    constraint to 1e-10 and is sign-canonical (max-abs vertex positive);
    lam equals the Rayleigh quotient of u.
    """

    u: ScalarField
    lam: float
    residual: float
    lipschitz_estimate: float
    iterations: int


def _constraint_shift(dom: Domain, vals: np.ndarray, p: float) -> np.ndarray:
    """Shift by the constant c solving sum (v-c)|v-c|^(p-2) m = 0.

    The defining function is strictly decreasing in c, so the root is
    unique and bracketed by [min v, max v].
    """

    def balance(c: float) -> float:
        w = vals - c
        return float(np.dot(np.sign(w) * np.abs(w) ** (p - 1.0), dom.measure))

    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        return vals - lo
    c = brentq(balance, lo, hi, xtol=1e-15, rtol=8.9e-16)
    return vals - c


def _project(dom: Domain, vals: np.ndarray, p: float) -> np.ndarray:
    """Constraint shift followed by p-normalization."""
    w = _constraint_shift(dom, vals, p)
    norm = float(np.dot(np.abs(w) ** p, dom.measure)) ** (1.0 / p)
    if norm == 0.0:
        raise ParameterError("cannot normalize the zero field")
    return w / norm


def _rayleigh(dom: Domain, u: ScalarField, p: float) -> float:
    return lp_norm(gradient(u), p) ** p


def _descend(dom: Domain, vals0: np.ndarray, p: float, tol: float, max_iter: int):
    """Projected preconditioned descent from one start; returns (u, lam, iters).

    Polak-Ribiere conjugate directions on top of the poisson_solve
    preconditioner; the direction resets to steepest descent whenever it
    stops being downhill.
    """
    rp = RegParams(p=p)
    u = _project(dom, vals0, p)
    lam = _rayleigh(dom, ScalarField(dom, u), p)
    step_init = 1.0
    d = None
    g_prev = z_prev = None
    history: deque[float] = deque(maxlen=_STALL_WINDOW + 1)
    for it in range(max_iter):
        # gradient of the Rayleigh quotient at unit p-norm, paired with m
        g = -p * (
            p_laplacian(ScalarField(dom, u), rp).values
            + lam * np.sign(u) * np.abs(u) ** (p - 1.0)
        )
        gnorm = math.sqrt(float(np.dot(g**2, dom.measure)))
        if gnorm <= tol * (1.0 + lam):
            return ScalarField(dom, u), lam, it
        # for p < 2 the quotient kinks at zeros of u and gnorm plateaus;
        # Armijo keeps lam monotone, so a flat window means stationarity
        history.append(lam)
        if len(history) > _STALL_WINDOW and history[0] - lam <= 1e-11 * (1.0 + lam):
            return ScalarField(dom, u), lam, it
        rhs = g - np.dot(g, dom.measure) / dom.total_measure
        z = poisson_solve(ScalarField(dom, rhs), tol=1e-12).values
        if d is None:
            d = z
        else:
            beta = max(
                0.0,
                float(np.dot((g - g_prev) * z, dom.measure))
                / float(np.dot(g_prev * z_prev, dom.measure)),
            )
            d = z + beta * d
        slope = float(np.dot(g * d, dom.measure))
        if slope >= 0.0:
            d = z
            slope = float(np.dot(g * d, dom.measure))
        if slope >= 0.0:
            raise LineSearchError("preconditioned direction is not a descent direction")
        g_prev, z_prev = g, z
        s = step_init
        for _ in range(60):
            trial = _project(dom, u + s * d, p)
            lam_trial = _rayleigh(dom, ScalarField(dom, trial), p)
            if lam_trial <= lam + _ARMIJO * s * slope:
                break
            s *= 0.5
        else:
            # every rejected trial competed against lam minus a step far
            # below rounding, so the quotient is stationary to precision
            return ScalarField(dom, u), lam, it
        # one parabolic refinement keeps the step near the 1d minimizer
        curv = lam_trial - lam - slope * s
        if curv > 0.0:
            s_q = -0.5 * slope * s * s / curv
            if 0.0 < s_q < 4.0 * s:
                trial_q = _project(dom, u + s_q * d, p)
                lam_q = _rayleigh(dom, ScalarField(dom, trial_q), p)
                if lam_q < lam_trial:
                    s, trial, lam_trial = s_q, trial_q, lam_q
        u, lam = trial, lam_trial
        step_init = min(max(2.0 * s, 1e-6), 64.0)
    raise NonConvergenceError(f"eigen descent cap max_iter={max_iter} exceeded")


def p_eigenpair(
    domain: Domain,
    p: float,
    tol: float = 1e-8,
    max_iter: int = 5000,
    restarts: int = 4,
    seed: int = 0,
) -> EigenRecord:
    """First nontrivial p-eigenpair by seeded multi-start Rayleigh descent.

    Minimizes the Rayleigh quotient over the constraint manifold
    {sum u|u|^(p-2) m = 0, ||u||_p = 1} with poisson_solve as the
    preconditioner and an Armijo line search; the smallest Rayleigh
    value over the restarts wins.  Deterministic for a given seed.
    """
    if not (1.0 < p < math.inf):
        raise ParameterError(f"p must lie in (1, inf), got {p}")
    if restarts < 1:
        raise ParameterError(f"restarts must be >= 1, got {restarts}")
    rng = np.random.default_rng(seed)
    starts = [rng.standard_normal(domain.nv) for _ in range(restarts)]
    with ThreadPoolExecutor(max_workers=min(restarts, 4)) as pool:
        runs = list(pool.map(lambda v: _descend(domain, v, p, tol, max_iter), starts))
    # smallest Rayleigh value wins; start index breaks exact ties
    u, lam, iters = min(enumerate(runs), key=lambda kv: (kv[1][1], kv[0]))[1]
    # canonical sign: the vertex of largest magnitude is positive
    vals = u.values
    if vals[int(np.argmax(np.abs(vals)))] < 0.0:
        vals = -vals
        u = ScalarField(domain, vals)
    constraint = abs(float(np.dot(np.sign(vals) * np.abs(vals) ** (p - 1.0), domain.measure)))
    if constraint > 1e-10:
        raise NonConvergenceError(f"eigen constraint violated: {constraint:.3e} > 1e-10")
    f_eq = ScalarField(domain, -lam * np.sign(vals) * np.abs(vals) ** (p - 1.0))
    res = weak_residual(u, f_eq, RegParams(p=p))
    return EigenRecord(
        u=u,
        lam=lam,
        residual=res,
        lipschitz_estimate=edge_lipschitz(u),
        iterations=iters,
    )
