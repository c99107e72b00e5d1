import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from heatsource.errors import DomainError
from heatsource.specfun import (
    HarmonicIndex,
    bessel_j,
    bessel_j_prime,
    bessel_root,
    bessel_roots,
    coordinate_change_matrix,
    fourier_bessel_coeffs,
    fourier_bessel_series,
    gauss_legendre_panels,
    harmonic_eval,
    harmonic_multiplicity,
    harmonics_2d,
    harmonics_3d,
    parseval_partial_sums,
    root_table,
)

ORDERS = [0.0, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 20.5, 40.0, 60.0]


@pytest.mark.parametrize("beta", ORDERS)
def test_bessel_matches_mpmath(beta):
    xs = np.concatenate([np.linspace(0, 3, 13), np.linspace(3, 90, 120), [150.0, 400.0, 1000.0]])
    got = bessel_j(beta, xs)
    ref = np.array([float(mp.besselj(beta, x)) for x in xs])
    assert np.max(np.abs(got - ref)) < 1e-13


def test_bessel_scalar_and_shape():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(2.5, 0.0) == 0.0
    assert isinstance(bessel_j(1, 2.0), float)
    x = np.linspace(0.1, 5, 12).reshape(3, 4)
    assert bessel_j(1.5, x).shape == (3, 4)


def test_half_order_closed_form():
    x = np.linspace(0.1, 60, 300)
    ref = np.sqrt(2 / (np.pi * x)) * np.sin(x)
    assert np.max(np.abs(bessel_j(0.5, x) - ref)) < 1e-14
    assert abs(bessel_j(0.5, math.pi)) < 1e-15


def test_bessel_domain_errors():
    with pytest.raises(DomainError):
        bessel_j(-1, 1.0)
    with pytest.raises(DomainError):
        bessel_j(1, -0.5)
    with pytest.raises(DomainError):
        bessel_j(1, np.nan)
    with pytest.raises(DomainError):
        bessel_j_prime(1, 0.0)


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0, 2.5, 12.0])
def test_derivative_matches_central_difference(beta):
    x = np.linspace(0.5, 40, 50)
    h = 1e-5
    fd = (bessel_j(beta, x + h) - bessel_j(beta, x - h)) / (2 * h)
    assert np.max(np.abs(bessel_j_prime(beta, x) - fd)) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 40.0), st.floats(0.05, 200.0))
def test_three_term_recurrence(beta, x):
    lhs = bessel_j(beta - 1, x) + bessel_j(beta + 1, x)
    rhs = 2 * beta / x * bessel_j(beta, x)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, 2 * beta / x)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 30.0), st.one_of(st.just(0.0), st.floats(1e-6, 120.0)))
def test_against_scipy(beta, x):
    assert abs(bessel_j(beta, x) - special.jv(beta, x)) < 1e-12


def test_first_zero_of_j0():
    assert abs(bessel_root(0, 1) - 2.404825557695773) < 1e-12


def test_half_order_zeros_are_multiples_of_pi():
    assert abs(bessel_root(0.5, 3) - 3 * math.pi) < 1e-12
    assert np.allclose(bessel_roots(0.5, 20), np.pi * np.arange(1, 21), atol=1e-12, rtol=0)


@pytest.mark.parametrize("beta", [0.0, 0.25, 1.0, 2.5, 7.0, 20.0])
def test_roots_match_mpmath(beta):
    r = bessel_roots(beta, 30)
    for l in (1, 2, 7, 30):
        assert abs(r[l - 1] - float(mp.besseljzero(beta, l))) < 1e-12
    assert np.max(root_table(beta, 30).residuals()) < 1e-12


@pytest.mark.parametrize("beta", [1.0, 3.5, 9.0])
def test_interlacing(beta):
    lower = bessel_roots(beta - 1, 41)
    upper = bessel_roots(beta, 40)
    assert np.all(lower[:-1] < upper) and np.all(upper < lower[1:])


def test_mcmahon_gap_shrinks():
    assert abs(bessel_root(0.5, 10) - 10 * math.pi) < 1e-12
    for beta in (0.0, 1.0, 2.0, 3.5):
        gaps = [abs(bessel_root(beta, l) - (l + beta / 2 - 0.25) * math.pi) for l in (10, 20, 40)]
        assert gaps[0] > gaps[1] > gaps[2]
    assert abs(bessel_root(0.0, 10) - 9.75 * math.pi) < 0.01


def test_roots_read_only_and_validation():
    r = bessel_roots(1.0, 5)
    with pytest.raises(ValueError):
        r[0] = 1.0
    with pytest.raises(DomainError):
        bessel_root(1.0, 0)
    with pytest.raises(DomainError):
        bessel_roots(1.0, 0)


def _fb_matrix(beta, L, n_panels=400):
    x, w = gauss_legendre_panels(0, 1, n_panels)
    s = bessel_roots(beta, L)
    phi = np.sqrt(x)[:, None] * bessel_j(beta, np.outer(x, s))
    return phi.T @ (w[:, None] * phi), s


@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0])
def test_fourier_bessel_orthogonality(beta):
    gram, s = _fb_matrix(beta, 15)
    norms = 0.5 * bessel_j(beta + 1, s) ** 2
    assert np.max(np.abs(gram - np.diag(norms))) < 1e-12


def _smooth(x):
    return np.sqrt(x) * (1 - x**2) * np.exp(x)


def test_fourier_bessel_coefficients_match_quadrature_oracle():
    beta = 1.0
    c = fourier_bessel_coeffs(_smooth, beta, 6)
    for l in range(6):
        s = float(mp.besseljzero(beta, l + 1))
        num = mp.quad(lambda x: mp.sqrt(x) * (1 - x**2) * mp.e**x * mp.sqrt(x) * mp.besselj(beta, s * x), [0, 1])
        den = mp.besselj(beta + 1, s) ** 2 / 2
        assert abs(c[l] - float(num / den)) < 1e-12


def test_fourier_bessel_round_trip_converges():
    beta = 0.0
    pts = np.array([0.1, 0.35, 0.6, 0.85])
    errs = []
    for L in (10, 40, 160):
        c = fourier_bessel_coeffs(_smooth, beta, L)
        errs.append(np.max(np.abs(fourier_bessel_series(c, beta, pts) - _smooth(pts))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_fourier_bessel_from_samples():
    grid = np.linspace(0, 1, 4001)
    c1 = fourier_bessel_coeffs(_smooth, 0.0, 8)
    c2 = fourier_bessel_coeffs(_smooth(grid), 0.0, 8, grid=grid)
    assert np.max(np.abs(c1 - c2)) < 1e-5


def test_parseval_monotone_and_bounded():
    x, w = gauss_legendre_panels(0, 1, 200)
    total = np.sum(w * _smooth(x) ** 2)
    c = fourier_bessel_coeffs(_smooth, 0.0, 120)
    ps = parseval_partial_sums(c, 0.0)
    assert np.all(np.diff(ps) >= 0)
    assert ps[-1] <= total * (1 + 1e-12)
    assert abs(ps[-1] - total) / total < 1e-5


def test_multiplicity():
    assert [harmonic_multiplicity(2, k) for k in range(5)] == [1, 2, 2, 2, 2]
    assert [harmonic_multiplicity(3, k) for k in range(5)] == [1, 3, 5, 7, 9]
    assert harmonic_multiplicity(4, 2) == 9
    with pytest.raises(DomainError):
        HarmonicIndex(2, 3, 3)


def test_circle_harmonics_orthonormal():
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    Y, _ = harmonics_2d(6, th)
    gram = Y.T @ Y * (2 * np.pi / th.size)
    assert np.max(np.abs(gram - np.eye(Y.shape[1]))) < 1e-12


def test_sphere_harmonics_orthonormal():
    ct, wt = np.polynomial.legendre.leggauss(20)
    ph = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    C, P = np.meshgrid(ct, ph, indexing="ij")
    S = np.sqrt(1 - C**2)
    xyz = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1).reshape(-1, 3)
    w = np.repeat(wt, ph.size) * (2 * np.pi / ph.size)
    Y, idx = harmonics_3d(5, xyz)
    assert Y.shape[1] == 36 and len(idx) == 36
    gram = Y.T @ (w[:, None] * Y)
    assert np.max(np.abs(gram - np.eye(36))) < 1e-12


def test_sphere_harmonics_match_scipy():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(10, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    theta = np.arccos(v[:, 2])
    phi = np.arctan2(v[:, 1], v[:, 0])
    for k in range(4):
        ref = special.sph_harm_y(k, 0, theta, phi).real
        assert np.allclose(harmonic_eval(HarmonicIndex(3, k, 1), v), ref, atol=1e-13)
        for mu in range(1, k + 1):
            # complex harmonic carries (-1)^mu; real part scaled by sqrt(2)
            ref = (-1) ** mu * np.sqrt(2) * special.sph_harm_y(k, mu, theta, phi)
            assert np.allclose(harmonic_eval(HarmonicIndex(3, k, 2 * mu), v), ref.real, atol=1e-13)
            assert np.allclose(harmonic_eval(HarmonicIndex(3, k, 2 * mu + 1), v), ref.imag, atol=1e-13)


@pytest.mark.parametrize("d", [2, 3])
def test_coordinate_change_matrix(d):
    M = coordinate_change_matrix(d)
    assert abs(np.linalg.det(M)) > 1e-3
    rng = np.random.default_rng(0)
    v = rng.normal(size=(5, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if d == 2:
        th = np.arctan2(v[:, 1], v[:, 0])
        Y = np.stack([harmonic_eval(HarmonicIndex(2, 1, m), th) for m in (1, 2)], axis=1)
    else:
        Y = np.stack([harmonic_eval(HarmonicIndex(3, 1, m), v) for m in (1, 2, 3)], axis=1)
    assert np.allclose(Y, v @ M.T, atol=1e-14)


def test_unit_vector_check():
    with pytest.raises(DomainError):
        harmonic_eval(HarmonicIndex(3, 1, 1), np.array([1.0, 1.0, 0.0]))


def test_three_halves_closed_form():
    x = np.linspace(0.1, 30, 200)
    ref = np.sqrt(2 / (np.pi * x)) * (np.sin(x) / x - np.cos(x))
    assert np.max(np.abs(bessel_j(1.5, x) - ref)) < 1e-12


def test_derivative_small_argument_and_identity():
    assert abs(bessel_j_prime(1, 1e-8) - 0.5) < 1e-12
    assert bessel_j_prime(0, 1.0) == -bessel_j(1, 1.0)


def test_coefficients_of_a_basis_function_and_zero():
    s1 = bessel_root(0, 1)
    c = fourier_bessel_coeffs(lambda x: np.sqrt(x) * bessel_j(0, s1 * x), 0.0, 5)
    assert abs(c[0] - 1) < 1e-8 and np.max(np.abs(c[1:])) < 1e-8
    assert np.all(fourier_bessel_coeffs(lambda x: 0 * x, 0.0, 5) == 0)


def test_parseval_polynomial_profile():
    f = lambda x: np.sqrt(x) * x * (1 - x)
    exact = 1.0 / 4 - 2.0 / 5 + 1.0 / 6  # integral of x^3 (1-x)^2
    ps = parseval_partial_sums(fourier_bessel_coeffs(f, 0.0, 50), 0.0)
    assert np.all(ps <= exact * (1 + 1e-12))
    assert exact - ps[-1] < 1e-6


def test_round_trip_compact_support_l200():
    def bump(x):
        y = np.zeros_like(x)
        m = np.abs(x - 0.5) < 0.3
        y[m] = np.exp(-1.0 / (1 - ((x[m] - 0.5) / 0.3) ** 2))
        return y

    pts = np.array([0.3, 0.5, 0.62])
    c = fourier_bessel_coeffs(bump, 0.0, 200)
    assert np.max(np.abs(fourier_bessel_series(c, 0.0, pts) - bump(pts))) < 1e-4
