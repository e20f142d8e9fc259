"""Flux, p-Laplacian, developed form, Cordes weight, monotonicity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from plaplace.calculus import (
    ScalarField,
    VectorField,
    gradient,
    inner,
    laplacian,
    lp_norm,
)
from plaplace.errors import ParameterError, UnsupportedOperationError
from plaplace.mesh import Circle, WeightedGraph, build_torus
from plaplace.plap import (
    RegParams,
    developed,
    flux,
    frozen_L,
    monotonicity_pair,
    p_laplacian,
    theta,
    theta_lower_bound,
)

RING = Circle(4, 4.0)
TORUS = build_torus(2, 8, 1.0)
GRAPH = WeightedGraph(
    edges=[(0, 1), (1, 2), (0, 2)],
    weights=[1.0, 0.5, 2.0],
    lengths=[1.0, 2.0, 1.0],
    measure=[1.0, 2.0, 0.5],
)

moderate = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, width=64)


def test_regparams_validation():
    RegParams(p=1.5)
    RegParams(p=2.0, eps=0.0, M=math.inf)
    for bad in (
        dict(p=1.0),
        dict(p=0.5),
        dict(p=math.inf),
        dict(p=2.0, eps=-1e-9),
        dict(p=2.0, eps=math.inf),
        dict(p=2.0, M=0.0),
        dict(p=2.0, M=-1.0),
    ):
        with pytest.raises(ParameterError):
            RegParams(**bad)


def test_flux_hand_values():
    u = ScalarField(RING, [0.0, 2.0, 4.0, 2.0])
    # grad = [2, 2, -2, -2]; p = 3 multiplies by |grad| = 2
    f = flux(u, RegParams(p=3.0))
    assert f.values.ravel().tolist() == [4.0, 4.0, -4.0, -4.0]
    pl = p_laplacian(u, RegParams(p=3.0))
    assert pl.values.tolist() == [8.0, 0.0, -8.0, 0.0]


def test_flux_p2_is_gradient():
    rng = np.random.default_rng(0)
    u = ScalarField(TORUS, rng.standard_normal(TORUS.nv))
    for eps in (0.0, 1e-3, 1.0):
        f = flux(u, RegParams(p=2.0, eps=eps))
        assert np.array_equal(f.values, gradient(u).values)
        # div(grad) splits the /h^2 across two passes, the fused stencil
        # does not, so equality here is to rounding rather than bits
        assert np.allclose(
            p_laplacian(u, RegParams(p=2.0, eps=eps)).values,
            laplacian(u).values,
            rtol=1e-12,
            atol=1e-9,
        )


def test_flux_vanishing_gradient_convention():
    # p < 2, eps = 0: the coefficient |g|^(p-2) blows up at g = 0, but the
    # flux of a constant field is zero, not nan
    u = ScalarField(TORUS, np.full(TORUS.nv, 3.0))
    f = flux(u, RegParams(p=1.5))
    assert np.all(f.values == 0.0)
    assert np.all(np.isfinite(f.values))


def test_flux_truncation():
    u = ScalarField(RING, [0.0, 2.0, 4.0, 2.0])  # |grad| = 2 everywhere
    # M = 1 caps the coefficient at (1)^(p-2) = 1
    f = flux(u, RegParams(p=3.0, M=1.0))
    assert np.array_equal(f.values, gradient(u).values)
    # M above the magnitude changes nothing
    f2 = flux(u, RegParams(p=3.0, M=10.0))
    assert np.array_equal(f2.values, flux(u, RegParams(p=3.0)).values)


def test_flux_eps_smoothing():
    u = ScalarField(RING, [0.0, 2.0, 4.0, 2.0])
    f = flux(u, RegParams(p=3.0, eps=5.0))
    want = math.sqrt(4.0 + 5.0) * gradient(u).values
    assert np.allclose(f.values, want, rtol=1e-15)


def test_graph_flux():
    u = ScalarField(GRAPH, [0.0, 1.0, 3.0])
    # edge gradients: (1-0)/1 = 1, (3-1)/2 = 1, (3-0)/1 = 3
    f = flux(u, RegParams(p=3.0))
    assert f.values.tolist() == [1.0, 1.0, 9.0]


@settings(max_examples=40, deadline=None)
@given(
    u=hnp.arrays(float, TORUS.nv, elements=moderate),
    phi=hnp.arrays(float, TORUS.nv, elements=moderate),
    p=st.floats(min_value=1.2, max_value=4.0),
)
def test_weak_form_grid(u, phi, p):
    # sum(phi div(flux) m) = -sum(<flux, grad phi> m) to rounding
    uf = ScalarField(TORUS, u)
    ph = ScalarField(TORUS, phi)
    rp = RegParams(p=p, eps=1e-8)
    lhs = inner(p_laplacian(uf, rp), ph)
    rhs = -inner(flux(uf, rp), gradient(ph))
    scale = 1.0 + lp_norm(flux(uf, rp), 2) * lp_norm(gradient(ph), 2)
    assert abs(lhs - rhs) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(
    u=hnp.arrays(float, GRAPH.nv, elements=moderate),
    phi=hnp.arrays(float, GRAPH.nv, elements=moderate),
)
def test_weak_form_graph(u, phi):
    uf = ScalarField(GRAPH, u)
    ph = ScalarField(GRAPH, phi)
    rp = RegParams(p=2.5)
    lhs = inner(p_laplacian(uf, rp), ph)
    rhs = -inner(flux(uf, rp), gradient(ph))
    scale = 1.0 + lp_norm(flux(uf, rp), 2) * lp_norm(gradient(ph), 2)
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_developed_matches_frozen_at_own_gradient():
    rng = np.random.default_rng(1)
    u = ScalarField(TORUS, rng.standard_normal(TORUS.nv))
    rp = RegParams(p=2.7, eps=1e-4)
    a = developed(u, rp).values
    b = frozen_L(u, gradient(u), rp).values
    assert np.array_equal(a, b)


def test_developed_consistent_with_divergence_form():
    # multiplying the developed operator by the flux coefficient recovers
    # div(flux) to O(h) on smooth data
    errs = []
    for n in (32, 64):
        dom = build_torus(2, n, 1.0)
        xy = dom.coordinates()
        u = ScalarField(
            dom, np.cos(2 * math.pi * xy[:, 0]) * np.sin(2 * math.pi * xy[:, 1])
        )
        rp = RegParams(p=3.0, eps=1e-6)
        a = p_laplacian(u, rp).values
        g = gradient(u).values
        coef = ((g**2).sum(axis=1) + rp.eps) ** ((rp.p - 2.0) / 2.0)
        b = coef * developed(u, rp).values
        errs.append(
            lp_norm(ScalarField(dom, a - b), 2) / lp_norm(ScalarField(dom, a), 2)
        )
    assert errs[1] < 0.06
    assert errs[0] / errs[1] > 1.8  # first order in h


def test_developed_p2_is_laplacian():
    rng = np.random.default_rng(2)
    u = ScalarField(TORUS, rng.standard_normal(TORUS.nv))
    got = developed(u, RegParams(p=2.0, eps=1e-3)).values
    assert np.array_equal(got, laplacian(u).values)


def test_second_order_operators_reject_graphs_and_bare_eps():
    ug = ScalarField(GRAPH, np.zeros(3))
    ut = ScalarField(TORUS, np.zeros(TORUS.nv))
    vt = VectorField(TORUS, np.zeros((TORUS.nv, 2)))
    with pytest.raises(UnsupportedOperationError):
        developed(ug, RegParams(p=2.5, eps=1e-3))
    with pytest.raises(ParameterError):
        developed(ut, RegParams(p=2.5, eps=0.0))
    with pytest.raises(UnsupportedOperationError):
        frozen_L(ug, vt, RegParams(p=2.5, eps=1e-3))
    with pytest.raises(ParameterError):
        frozen_L(ut, vt, RegParams(p=2.5, eps=0.0))
    with pytest.raises(ParameterError):
        frozen_L(ut, VectorField(build_torus(2, 8, 1.0), np.zeros((64, 2))), RegParams(p=2.5, eps=1e-3))


def test_theta_trivial_cases():
    rng = np.random.default_rng(3)
    v = VectorField(TORUS, rng.standard_normal((TORUS.nv, 2)))
    for p, N in ((1.5, 3.0), (2.0, 3.0), (2.5, math.inf)):
        th = theta(v, RegParams(p=p, eps=1e-3), N)
        assert np.all(th.values == 1.0)


def test_theta_values_and_lower_bound():
    rng = np.random.default_rng(4)
    v = VectorField(TORUS, 100.0 * rng.standard_normal((TORUS.nv, 2)))
    p, N = 4.0, 2.0
    th = theta(v, RegParams(p=p, eps=1e-6), N).values
    lb = theta_lower_bound(p, N)
    assert lb == pytest.approx(0.4)
    assert np.all(th > lb - 1e-12)
    assert np.all(th <= 1.0)
    # large gradients saturate g at p-2, pushing theta to the bound
    assert th.min() == pytest.approx(lb, abs=1e-6)
    assert theta_lower_bound(1.5, 5.0) == 1.0
    assert theta_lower_bound(3.0, math.inf) == 1.0


def test_theta_exact_value():
    # one vertex with |v|^2 = eps gives g = (p-2)/2
    v = np.zeros((TORUS.nv, 2))
    v[0, 0] = math.sqrt(1e-3)
    th = theta(VectorField(TORUS, v), RegParams(p=4.0, eps=1e-3), 3.0).values
    assert th[0] == pytest.approx((3.0 + 1.0) / (3.0 + 1.0 + 2.0))
    assert th[1] == 1.0


def test_theta_validation():
    v = VectorField(TORUS, np.zeros((TORUS.nv, 2)))
    with pytest.raises(ParameterError):
        theta(v, RegParams(p=3.0, eps=0.0), 3.0)
    with pytest.raises(ParameterError):
        theta(v, RegParams(p=3.0, eps=1e-3), 1.0)
    e = VectorField(GRAPH, np.zeros(3))
    with pytest.raises(UnsupportedOperationError):
        theta(e, RegParams(p=3.0, eps=1e-3), 3.0)


@settings(max_examples=60, deadline=None)
@given(
    v=hnp.arrays(float, (RING.nv, 1), elements=moderate),
    w=hnp.arrays(float, (RING.nv, 1), elements=moderate),
    p=st.floats(min_value=1.2, max_value=4.5),
)
def test_monotonicity_nonnegative(v, w, p):
    lhs, rhs = monotonicity_pair(
        VectorField(RING, v), VectorField(RING, w), RegParams(p=p)
    )
    assert np.all(lhs.values >= -1e-12)
    assert np.all(rhs.values >= 0.0)
    # classical constants: 2^(2-p) for p >= 2, p-1 for p < 2
    c = 2.0 ** (2.0 - p) if p >= 2.0 else p - 1.0
    gross = np.abs(lhs.values) + c * rhs.values
    assert np.all(lhs.values - c * rhs.values >= -1e-9 * (1.0 + gross))


def test_monotonicity_equality_case():
    # antipodal pair v = -w meets the p >= 2 constant exactly
    v = VectorField(RING, np.full((4, 1), 1.0))
    w = VectorField(RING, np.full((4, 1), -1.0))
    lhs, rhs = monotonicity_pair(v, w, RegParams(p=3.0))
    assert np.allclose(lhs.values, 0.5 * rhs.values, rtol=1e-14)
    assert lhs.values[0] == 4.0


def test_monotonicity_vanishes_only_at_equality():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((TORUS.nv, 2))
    v = VectorField(TORUS, a)
    w = VectorField(TORUS, a.copy())
    lhs, rhs = monotonicity_pair(v, w, RegParams(p=2.5))
    assert np.all(lhs.values == 0.0)
    assert np.all(rhs.values == 0.0)


def test_monotonicity_validation():
    e = VectorField(GRAPH, np.zeros(3))
    v = VectorField(TORUS, np.zeros((TORUS.nv, 2)))
    with pytest.raises(UnsupportedOperationError):
        monotonicity_pair(e, e, RegParams(p=2.5))
    with pytest.raises(ParameterError):
        monotonicity_pair(v, VectorField(build_torus(2, 8, 1.0), np.zeros((64, 2))), RegParams(p=2.5))
