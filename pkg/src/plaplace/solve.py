"""Solution scheme for the p-Poisson equation div(flux(u)) = f.

Three layers:

* ``poisson_solve``: conjugate gradients for the linear problem
  lap u = f on the zero-mean subspace.  Everything else reduces to it.
* ``inner_fixed_point`` and ``outer_picard``: the two-level fixed point
  scheme.  The inner level freezes the gradient direction v = grad w and
  contracts in the norm ||lap . ||_2 with the factor reported by
  spectral.contraction_bound; the outer level updates the frozen
  direction with damped Picard steps on the rescaled right hand side
  h = f / ((|grad w| ^ M)^2 + eps)^((p-2)/2).
* ``continuation`` drives eps (and M, when p < 2) along a schedule with
  warm starts; ``variational_solve`` is an independent energy-descent
  route used as an oracle against the fixed-point path.

Right hand sides are normalized to unit L2 size before solving and the
solution is scaled back by t^(1/(p-1)); the record's residual is always
measured on the returned solution against the original data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral
from .calculus import (
    ScalarField,
    VectorField,
    _gradient_values,
    _laplacian_values,
    gradient,
    hessian,
    inner,
    lp_norm,
    zero_mean,
)
from .errors import (
    ContractionError,
    DivergenceError,
    LineSearchError,
    NonConvergenceError,
    ParameterError,
    UnsupportedOperationError,
)
from .mesh import Domain, WeightedGraph
from .plap import RegParams, _flux_coefficient, _frozen_coefficients, flux, p_laplacian

__all__ = [
    "SolverConfig",
    "SolveRecord",
    "poisson_solve",
    "inner_fixed_point",
    "outer_picard",
    "continuation",
    "variational_solve",
    "truncate_rhs",
    "weak_residual",
    "residual_test_functions",
]

_MIN_EPS = 1e-14
_RESIDUAL_SEED = 12345

_DEFAULT_EPS_SCHEDULE = tuple(10.0**-j for j in range(1, 9))
_DEFAULT_M_SCHEDULE = tuple(10.0 ** (j / 2.0) for j in range(1, 9))


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, caps and schedules of one solve."""

    rp: RegParams
    inner_tol: float = 1e-10
    outer_tol: float = 1e-8
    poisson_tol: float = 1e-12
    max_inner: int = 400
    max_outer: int = 400
    damping: float = 0.5
    eps_schedule: tuple = _DEFAULT_EPS_SCHEDULE
    M_schedule: tuple = _DEFAULT_M_SCHEDULE

    def __post_init__(self):
        for name in ("inner_tol", "outer_tol", "poisson_tol"):
            if not (getattr(self, name) > 0):
                raise ParameterError(f"{name} must be positive")
        if not (self.max_inner >= 1 and self.max_outer >= 1):
            raise ParameterError("iteration caps must be at least 1")
        if not (0.0 < self.damping <= 1.0):
            raise ParameterError(f"damping must lie in (0, 1], got {self.damping}")
        eps = tuple(float(e) for e in self.eps_schedule)
        if not eps or any(e < _MIN_EPS for e in eps):
            raise ParameterError(f"eps_schedule entries must be >= {_MIN_EPS}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ParameterError("eps_schedule must be strictly decreasing")
        M = tuple(float(v) for v in self.M_schedule)
        if any(b <= a for a, b in zip(M, M[1:])) or any(v <= 0 for v in M):
            raise ParameterError("M_schedule must be positive and strictly increasing")
        object.__setattr__(self, "eps_schedule", eps)
        object.__setattr__(self, "M_schedule", M)


@dataclass
class SolveRecord:
    """Outcome of a solve: the solution plus convergence diagnostics."""

    u: ScalarField
    residual: float
    inner_ratios: list
    iterations: dict
    eps_final: float
    M_final: float
    energy_trace: list = field(default_factory=list)
    stage_drifts: list = field(default_factory=list)
    tau: float = 1.0
    method: str = "picard"
    stages: list | None = None


def _wmean(dom: Domain, vals: np.ndarray) -> float:
    return float(np.dot(vals, dom.measure)) / dom.total_measure


def _wnorm2(dom: Domain, vals: np.ndarray) -> float:
    return math.sqrt(float(np.dot(vals * vals, dom.measure)))


def _check_mean(f: ScalarField, what: str) -> float:
    norm = _wnorm2(f.domain, f.values)
    if norm > 0 and abs(_wmean(f.domain, f.values)) > 1e-10 * norm:
        raise ParameterError(f"{what} needs a zero-mean right hand side")
    return norm


def poisson_solve(f: ScalarField, tol: float = 1e-12, max_iter: int | None = None) -> ScalarField:
    """Solve lap u = f for the zero-mean u, by conjugate gradients.

    The input must have |mean| <= 1e-10 ||f||_2; the residual contract
    ||lap u - f||_2 <= tol ||f||_2 is enforced against the zero-mean
    part of f (the mean component is not in the range of lap).  The
    iteration runs on the zero-mean subspace, reprojecting every step.
    """
    dom = f.domain
    norm_f = _check_mean(f, "poisson_solve")
    if norm_f == 0.0:
        return ScalarField(dom, np.zeros(dom.nv))
    m = dom.measure
    total = dom.total_measure
    b = f.values - _wmean(dom, f.values)
    if max_iter is None:
        max_iter = 20 * dom.nv + 100
    target = tol * norm_f
    x = np.zeros(dom.nv)
    r = -b  # residual of (-lap) x = -b at x = 0
    d = r.copy()
    rr = float(np.dot(r * r, m))
    for _ in range(max_iter):
        if math.sqrt(rr) <= target:
            break
        Ad = -_laplacian_values(dom, d)
        dAd = float(np.dot(d * Ad, m))
        if dAd <= 0.0:
            raise NonConvergenceError("conjugate gradient broke down (operator not SPD here)")
        step = rr / dAd
        x += step * d
        r -= step * Ad
        r -= np.dot(r, m) / total
        rr_new = float(np.dot(r * r, m))
        d = r + (rr_new / rr) * d
        rr = rr_new
    else:
        raise NonConvergenceError(
            f"conjugate gradient did not reach tol={tol} within {max_iter} iterations"
        )
    return ScalarField(dom, x - _wmean(dom, x))


def _require_grid(dom: Domain, what: str):
    if isinstance(dom, WeightedGraph):
        raise UnsupportedOperationError(
            f"{what} needs a grid domain; use variational_solve on graphs"
        )


def inner_fixed_point(w: ScalarField, f: ScalarField, cfg: SolverConfig):
    """Contractive stage at a frozen direction v = grad w.

    Iterates u -> poisson_solve(lap u + theta (f - L u) - correction),
    where L is the linearization frozen at v and the correction is the
    mean of theta (f - L u), until ||lap(u_next - u)||_2 <= inner_tol.
    Returns the fixed point and the observed step-ratio list; a ratio
    that stays >= 1 for five steps raises ``ContractionError`` citing
    the theoretical bound.
    """
    dom = w.domain
    _require_grid(dom, "inner_fixed_point")
    rp = cfg.rp
    if rp.eps < _MIN_EPS:
        raise ParameterError(f"inner_fixed_point needs eps >= {_MIN_EPS}, got {rp.eps}")
    # Coefficients are frozen from w as axis-averaged flux slopes on the
    # diagonal and the symmetrized one-sided product tensor off it:
    # second-order consistent with the developed operator at grad w, free
    # of the checkerboard null mode a plain centered gradient would have,
    # and exactly matching the divergence-form flux along each axis.
    diag, off, sq = _frozen_coefficients(dom, w.values, rp)
    th = _theta_from_sq(sq, rp, dom.N)
    # With p = 2 or a constant w the map no longer depends on u: one
    # Poisson solve lands exactly on the fixed point.
    if rp.p == 2.0 or not np.any(sq):
        return poisson_solve(zero_mean(f), cfg.poisson_tol), []

    u = zero_mean(w)
    ratios: list[float] = []
    prev_step = None
    # inner_tol is read relative to the data size: the Poisson solves
    # leave noise of order poisson_tol * ||rhs||, so an absolute floor
    # below that is unreachable when the rescaled data is large.
    scale = max(1.0, _wnorm2(dom, f.values))
    denom = sq + rp.eps
    for _ in range(cfg.max_inner):
        H = hessian(u).values
        Lu = np.einsum("vi,vii->v", diag, H) + (rp.p - 2.0) * np.einsum(
            "vij,vij->v", H, off
        ) / denom
        rhs = _laplacian_values(dom, u.values) + th * (f.values - Lu)
        rhs = rhs - _wmean(dom, rhs)
        u_next = poisson_solve(ScalarField(dom, rhs), cfg.poisson_tol)
        step = _wnorm2(dom, _laplacian_values(dom, u_next.values - u.values))
        if prev_step is not None and prev_step > 0:
            ratios.append(step / prev_step)
        u = u_next
        if step <= cfg.inner_tol * scale:
            return u, ratios
        if len(ratios) >= 5 and min(ratios[-5:]) >= 1.0:
            lam = spectral.lambda1(dom)
            bound = spectral.contraction_bound(rp.p, dom.N, lam, dom.K_minus)
            raise ContractionError(
                f"inner iteration is not contracting (last ratios "
                f"{[round(r, 3) for r in ratios[-5:]]}); theoretical bound "
                f"sqrt(alpha_p (1 + K^- Gamma)) = {bound:.6f}"
            )
        prev_step = step
    raise NonConvergenceError(f"inner iteration cap max_inner={cfg.max_inner} exceeded")


def _theta_from_sq(sq: np.ndarray, rp: RegParams, N: float) -> np.ndarray:
    """The Cordes weight evaluated at a precomputed |v|^2 field."""
    if rp.p < 2.0 or math.isinf(N):
        return np.ones_like(sq)
    g = (rp.p - 2.0) * sq / (sq + rp.eps)
    return (N + g) / (N + g**2 + 2.0 * g)


def _rescaled_rhs(fu: ScalarField, w: ScalarField, rp: RegParams) -> ScalarField:
    """Rescaled, defect-corrected data h = (f + kappa(w)) / weight(w).

    The base rescaling is f / ((|grad w| ^ M)^2 + eps)^((p-2)/2) with
    |grad w|^2 the trace of the symmetrized direction tensor, matching
    the frozen linearization inside inner_fixed_point.  In dimension two
    and higher the nondivergence fixed point and the divergence-form
    flux disagree at first order in the mesh width, so the mismatch at
    the frozen iterate, kappa(w) = weight * L_w(w) - div(flux(w)), is
    folded into the data.  At the outer fixed point u = w the correction
    telescopes and u solves the discrete divergence-form equation
    exactly; within an inner stage kappa is constant, so the contraction
    estimate is untouched.
    """
    dom = w.domain
    diag, off, sq = _frozen_coefficients(dom, w.values, rp)
    weight = _flux_coefficient(np.sqrt(sq), rp)
    H = hessian(w).values
    Lw = np.einsum("vi,vii->v", diag, H) + (rp.p - 2.0) * np.einsum(
        "vij,vij->v", H, off
    ) / (sq + rp.eps)
    kappa = weight * Lw - p_laplacian(w, rp).values
    return ScalarField(dom, (fu.values + kappa) / weight)


def _energy(fu_vals: np.ndarray, w_vals: np.ndarray, dom: Domain, rp: RegParams) -> float:
    """Regularized energy (1/p) (|grad w|^2 + eps)^(p/2) + f w, integrated.

    Diagnostic only: with finite M the Picard map is not exactly a
    gradient flow of this, but near the fixed point it decreases.
    """
    g = _gradient_values(dom, w_vals)
    sq = (g * g).sum(axis=-1) if g.ndim == 2 else g * g
    dens = (sq + rp.eps) ** (rp.p / 2.0) / rp.p + fu_vals * w_vals
    if isinstance(dom, WeightedGraph):
        grad_part = float(np.dot((sq + rp.eps) ** (rp.p / 2.0) / rp.p, dom.edge_weight))
        return grad_part + float(np.dot(fu_vals * w_vals, dom.measure))
    return float(np.dot(dens, dom.measure))


def residual_test_functions(domain: Domain, seed: int = _RESIDUAL_SEED) -> list[ScalarField]:
    """Deterministic residual basis: 64 bump fields plus 8 smooth fields.

    Bumps put 1 at a seeded vertex and 0.5 at its neighbours; on grids
    the smooth fields are low-frequency sines of the coordinates, on
    graphs eight further bumps stand in for them.
    """
    rng = np.random.default_rng(seed)
    verts = rng.choice(domain.nv, size=min(64, domain.nv), replace=False)

    def bump(v: int) -> ScalarField:
        vals = np.zeros(domain.nv)
        vals[v] = 1.0
        vals[domain.neighbors(v)] = 0.5
        return ScalarField(domain, vals)

    funcs = [bump(int(v)) for v in verts]
    if isinstance(domain, WeightedGraph):
        extra = rng.choice(domain.nv, size=min(8, domain.nv), replace=False)
        funcs.extend(bump(int(v)) for v in extra)
        return funcs
    x = domain.coordinates()
    freqs = {
        1: [(1,), (2,), (3,), (4,)],
        2: [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (1, 2), (2, 1), (2, 2)],
        3: [
            (1, 0, 0),
            (0, 1, 0),
            (0, 0, 1),
            (1, 1, 0),
            (1, 0, 1),
            (0, 1, 1),
            (1, 1, 1),
            (2, 0, 0),
        ],
    }[domain.d]
    tau = 2.0 * math.pi / domain.L
    for k in freqs:
        phase = x @ (tau * np.asarray(k, dtype=float))
        funcs.append(ScalarField(domain, np.sin(phase)))
        if domain.d == 1:
            funcs.append(ScalarField(domain, np.cos(phase)))
    return funcs


def weak_residual(u: ScalarField, f: ScalarField, rp: RegParams, funcs=None) -> float:
    """sup over test functions of |<flux(u), grad phi> + <f, phi>| / ||grad phi||_p'."""
    if funcs is None:
        funcs = residual_test_functions(u.domain)
    q = rp.p / (rp.p - 1.0)
    X = flux(u, rp)
    worst = 0.0
    for phi in funcs:
        g = gradient(phi)
        denom = lp_norm(g, q)
        if denom == 0.0:
            continue
        worst = max(worst, abs(inner(X, g) + inner(f, phi)) / denom)
    return worst


def _zero_record(dom: Domain, rp: RegParams) -> SolveRecord:
    return SolveRecord(
        u=ScalarField(dom, np.zeros(dom.nv)),
        residual=0.0,
        inner_ratios=[],
        iterations={"outer": 0, "inner": 0},
        eps_final=rp.eps,
        M_final=rp.M,
    )


def outer_picard(f: ScalarField, cfg: SolverConfig, w0: ScalarField | None = None) -> SolveRecord:
    """Damped Picard iteration on the frozen-direction map at fixed eps.

    Each step solves the inner fixed point at the current direction,
    then moves w by the fraction ``damping`` toward it; ten consecutive
    energy increases raise divergence, which is retried with the step
    halved, up to four times.  Stops when the p-norm of the gradient
    increment falls below outer_tol (measured at unit data scale).
    """
    dom = f.domain
    _require_grid(dom, "outer_picard")
    rp = cfg.rp
    if rp.eps < _MIN_EPS:
        raise ParameterError(f"outer_picard needs eps >= {_MIN_EPS}, got {rp.eps}")
    if rp.p < 2.0 and not math.isfinite(rp.M):
        # Allowed: the bare rescaling; continuation supplies finite M.
        pass
    scale = _check_mean(f, "outer_picard")
    if scale == 0.0:
        return _zero_record(dom, rp)
    unscale = scale ** (1.0 / (rp.p - 1.0))
    fu = ScalarField(dom, (f.values - _wmean(dom, f.values)) / scale)
    if w0 is None:
        w_init = poisson_solve(fu, cfg.poisson_tol)
    else:
        w_init = zero_mean(ScalarField(dom, w0.values / unscale))

    last_error: Exception | None = None
    for halving in range(5):
        tau = cfg.damping / 2**halving
        w = ScalarField(dom, w_init.values.copy())
        inner_ratios: list[list[float]] = []
        energies: list[float] = []
        rises = 0
        inner_steps = 0
        converged = False
        prev_step = None
        try:
            for k in range(cfg.max_outer):
                h = _rescaled_rhs(fu, w, rp)
                u_s, ratios = inner_fixed_point(w, h, cfg)
                inner_ratios.append(ratios)
                inner_steps += len(ratios) + 1
                w_next = ScalarField(dom, (1.0 - tau) * w.values + tau * u_s.values)
                e = _energy(fu.values, w_next.values, dom, rp)
                step = lp_norm(VectorField(dom, _gradient_values(dom, w_next.values - w.values)), rp.p)
                # The discrete fixed point can sit a hair above the energy
                # minimum (the divergence and developed forms agree only to
                # O(h)), so a converging run may raise the energy by a
                # vanishing amount per step.  Count a rise as dangerous only
                # while the step norms also fail to contract.
                rising = energies and e > energies[-1] + 1e-12 * (1.0 + abs(energies[-1]))
                stalled = prev_step is not None and step > 0.95 * prev_step
                if rising and stalled:
                    rises += 1
                else:
                    rises = 0
                energies.append(e)
                prev_step = step
                if rises >= 10:
                    raise DivergenceError(
                        f"energy increased for 10 consecutive outer steps at tau={tau}"
                    )
                w = w_next
                if step <= cfg.outer_tol:
                    converged = True
                    break
            if not converged:
                raise NonConvergenceError(
                    f"outer iteration cap max_outer={cfg.max_outer} exceeded at tau={tau}"
                )
        except DivergenceError as exc:
            last_error = exc
            continue
        u_full = ScalarField(dom, w.values * unscale)
        u_full = ScalarField(dom, u_full.values - _wmean(dom, u_full.values))
        return SolveRecord(
            u=u_full,
            residual=weak_residual(u_full, f, rp),
            inner_ratios=inner_ratios,
            iterations={"outer": k + 1, "inner": inner_steps},
            eps_final=rp.eps,
            M_final=rp.M,
            energy_trace=energies,
            tau=tau,
        )
    raise DivergenceError(f"outer iteration diverged even at tau={cfg.damping / 16}") from last_error


def continuation(f: ScalarField, cfg: SolverConfig, keep_stages: bool = False) -> SolveRecord:
    """Run outer_picard along the eps schedule (and M schedule for p < 2).

    Each stage warm-starts from the previous solution; the gradient
    p-norm of the stage-to-stage increments is recorded in
    ``stage_drifts``.  Returns the final stage's record.
    """
    rp = cfg.rp
    p = rp.p
    n_stages = len(cfg.eps_schedule)
    if p < 2.0 and len(cfg.M_schedule) != n_stages:
        raise ParameterError("for p < 2 the M schedule must match the eps schedule in length")
    prev_u: ScalarField | None = None
    rec: SolveRecord | None = None
    drifts: list[float] = []
    stages: list[ScalarField] = []
    for j in range(n_stages):
        M_j = cfg.M_schedule[j] if p < 2.0 else math.inf
        stage_cfg = replace(cfg, rp=replace(rp, eps=cfg.eps_schedule[j], M=M_j))
        rec = outer_picard(f, stage_cfg, w0=prev_u)
        if prev_u is not None:
            drifts.append(lp_norm(gradient(rec.u - prev_u), p))
        prev_u = rec.u
        if keep_stages:
            stages.append(rec.u)
    rec.stage_drifts = drifts
    if keep_stages:
        rec.stages = stages
    return rec


def variational_solve(
    f: ScalarField,
    p: float,
    tol: float = 1e-6,
    max_iter: int = 30000,
) -> ScalarField:
    """Independent route: minimize (1/p)|grad u|^p + f u over zero-mean u.

    Preconditioned gradient descent: the search direction is the Poisson
    solve of the first-order residual, with an Armijo backtracking line
    search.  The minimizer of this strictly convex energy satisfies the
    weak equation div(|grad u|^(p-2) grad u) = f.  At p = 2 the first
    step is the exact solution.
    """
    rp = RegParams(p=p)
    dom = f.domain
    scale = _check_mean(f, "variational_solve")
    if scale == 0.0:
        return ScalarField(dom, np.zeros(dom.nv))
    fu = ScalarField(dom, (f.values - _wmean(dom, f.values)) / scale)
    u = ScalarField(dom, np.zeros(dom.nv))
    energy = _energy_bare(fu.values, u.values, dom, p)
    step_init = 1.0
    for _ in range(max_iter):
        G = fu.values - p_laplacian(u, rp).values
        gnorm = _wnorm2(dom, G)
        if gnorm <= tol:
            break
        d = poisson_solve(ScalarField(dom, G - _wmean(dom, G)), tol=1e-12).values
        slope = float(np.dot(G * d, dom.measure))
        if slope >= 0.0:
            raise LineSearchError("preconditioned direction is not a descent direction")
        s = step_init
        for _ in range(60):
            trial = u.values + s * d
            e_trial = _energy_bare(fu.values, trial, dom, p)
            if e_trial <= energy + 1e-4 * s * slope:
                break
            s *= 0.5
        else:
            raise LineSearchError("Armijo backtracking failed to decrease the energy")
        u = ScalarField(dom, trial - _wmean(dom, trial))
        energy = e_trial
        step_init = min(max(2.0 * s, 1e-6), 64.0)
    else:
        raise NonConvergenceError(f"variational descent cap {max_iter} exceeded (gnorm={gnorm:.3e})")
    return ScalarField(dom, u.values * scale ** (1.0 / (p - 1.0)))


def _energy_bare(fu_vals: np.ndarray, u_vals: np.ndarray, dom: Domain, p: float) -> float:
    g = _gradient_values(dom, u_vals)
    sq = (g * g).sum(axis=-1) if g.ndim == 2 else g * g
    grad_dens = sq ** (p / 2.0) / p
    if isinstance(dom, WeightedGraph):
        return float(np.dot(grad_dens, dom.edge_weight)) + float(
            np.dot(fu_vals * u_vals, dom.measure)
        )
    return float(np.dot(grad_dens + fu_vals * u_vals, dom.measure))


def truncate_rhs(f: ScalarField, n: float) -> ScalarField:
    """Clamp f to [-n, n], then recenter to zero mean."""
    if not (n > 0):
        raise ParameterError(f"truncation level must be positive, got {n}")
    return zero_mean(ScalarField(f.domain, np.clip(f.values, -n, n)))
