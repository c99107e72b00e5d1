import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from heatsource.errors import DomainError
from heatsource.sources import (
    Constant,
    FunctionAmplitude,
    HannWindow,
    HatBasis,
    PiecewiseConstant,
    PointSource,
    Sampled,
    Sine,
    amplitude_from_dict,
)

AMPS = [
    Constant(2.0),
    PiecewiseConstant.two_level(2.0, 1.0, 0.4),
    HannWindow(2.0, 0.5),
    HatBasis.interpolant(HannWindow(2.0, 0.5), 1.0, 20),
    Sampled((0.0, 0.3, 0.7), (0.0, 1.0, -0.5)),
    Sine(1.0, 1.0, 1.0),
]


@pytest.mark.parametrize("amp", AMPS, ids=lambda a: a.kind)
def test_cell_integrals_match_adaptive_quadrature(amp):
    edges = np.linspace(0.0, 1.0, 13)
    got = amp.cell_integrals(edges)
    pts = list(amp.breakpoints())
    ref = [integrate.quad(lambda t: float(amp(t)), a, b, points=[p for p in pts if a < p < b] or None, epsabs=1e-13)[0]
           for a, b in zip(edges[:-1], edges[1:])]
    assert np.allclose(got, ref, rtol=0, atol=1e-12)


@pytest.mark.parametrize("amp", AMPS, ids=lambda a: a.kind)
def test_dict_round_trip_and_scaling(amp):
    assert amplitude_from_dict(amp.to_dict()) == amp
    t = np.linspace(0, 1, 37)
    assert np.allclose(amp.scaled(-1.5)(t), -1.5 * amp(t), rtol=0, atol=1e-15)


@pytest.mark.parametrize("amp", AMPS, ids=lambda a: a.kind)
def test_pieces_reproduce_amplitude(amp):
    t0, t1, g0, g1 = amp.pieces(1.0)
    assert t0[0] == 0.0 and t1[-1] == 1.0 and np.all(t0[1:] == t1[:-1])
    mid = 0.5 * (t0 + t1)
    tol = 1e-14 if amp.piecewise_linear else 1e-5
    assert np.max(np.abs(0.5 * (g0 + g1) - amp(mid))) < tol


def test_piecewise_constant_right_closed():
    g = PiecewiseConstant.two_level(2.0, 1.0, 0.4)
    assert g(0.4) == 2.0 and g(0.4000001) == 1.0 and g(0.0) == 2.0
    assert g.in_pwc_class() and not PiecewiseConstant.two_level(1.0, 1.0, 0.4).in_pwc_class()
    with pytest.raises(DomainError):
        PiecewiseConstant.two_level(1.0, 2.0, 0.0)
    with pytest.raises(DomainError):
        PiecewiseConstant((0.5, 0.3), (1, 2, 3))


def test_hann_window_closed_form():
    h = HannWindow(2.0, 0.5)
    assert h(0.25) == pytest.approx(2.0) and h(0.0) == 0.0 and h(0.7) == 0.0
    # one 8-point Gauss-Legendre cell over the whole window
    assert h.integral(0.0, 1.0) == pytest.approx(0.5, abs=1e-10)
    assert h.cell_integrals(np.linspace(0, 1, 41)).sum() == pytest.approx(0.5, abs=1e-14)
    assert h.l2_norm_sq() == pytest.approx(integrate.quad(lambda t: h(t) ** 2, 0, 0.5)[0], abs=1e-13)
    assert h.support_end() == 0.5 and h.in_compact_class(1.0)
    assert not Constant(1.0).in_compact_class(1.0)


def test_hat_basis_nodes_and_interpolant():
    hb = HatBasis.unit(1.0, 20, 5)
    assert hb(hb.nodes[5]) == 1.0 and hb(hb.nodes[4]) == 0.0 and hb(hb.nodes[6]) == 0.0
    assert hb.support_end() == pytest.approx(hb.nodes[6])
    interp = HatBasis.interpolant(HannWindow(2.0, 0.5), 1.0, 20)
    assert np.allclose(interp(interp.nodes), HannWindow(2.0, 0.5)(interp.nodes), atol=1e-15)
    # uniform partition of unity
    t = np.linspace(0, 1, 101)
    assert np.allclose(sum(HatBasis.unit(1.0, 20, j)(t) for j in range(20)), 1.0)
    with pytest.raises(DomainError):
        HatBasis(1.0, (1.0,))


def test_sampled_validation():
    with pytest.raises(DomainError):
        Sampled((0.1, 0.2), (1.0, 2.0))
    with pytest.raises(DomainError):
        Sampled((0.0, 0.2), (1.0, math.nan))
    s = Sampled((0.0, 0.5), (1.0, 3.0))
    assert s(0.25) == 2.0 and s(0.5) == 3.0 and s(0.6) == 0.0 and s.max_spacing() == 0.5


def test_function_amplitude_and_unknown_kind():
    f = FunctionAmplitude(lambda t: t**2, label="square")
    assert f.integral(0.0, 1.0) == pytest.approx(1 / 3, abs=1e-14)
    assert f.scaled(2.0)(0.5) == 0.5
    with pytest.raises(DomainError):
        amplitude_from_dict({"kind": "mystery"})


def test_point_source():
    s = PointSource.from_polar(0.4, 2.0, Constant(2.0))
    assert s.polar() == pytest.approx((0.4, 2.0))
    e = PointSource.from_polar(0.4, 2.0, a=1.2, b=0.8)
    assert e.p == pytest.approx((1.2 * 0.4 * math.cos(2.0), 0.8 * 0.4 * math.sin(2.0)))
    assert s.moved((0.1, 0.2)).amplitude == s.amplitude
    with pytest.raises(DomainError):
        PointSource((0.1,))
    with pytest.raises(DomainError):
        PointSource((0.1, math.inf))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-3, 3), st.floats(-3, 3))
def test_two_level_integral_additive(t1, c1, c2):
    g = PiecewiseConstant.two_level(c1, c2, t1)
    assert g.integral(0.0, 1.0) == pytest.approx(c1 * t1 + c2 * (1 - t1), abs=1e-12)
