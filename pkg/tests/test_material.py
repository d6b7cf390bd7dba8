"""Tests for the closed-form exponent machinery."""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from signflip.errors import ForbiddenContrastError, NonCriticalContrastError
from signflip.material import (
    ContrastClass,
    MaterialContrast,
    classify_kappa,
    compute_mu,
    delta_n,
    lattice,
    normalize_phi,
    period_lndelta,
    phi,
    singular_data,
)


def contrast(kappa: float) -> MaterialContrast:
    return MaterialContrast(sigma_plus=1.0, sigma_minus=kappa)


def acosh_by_bisection(m: float, tol: float = 1e-13) -> float:
    """Independent acosh oracle: bisection on cosh over [0, 60]."""
    lo, hi = 0.0, 60.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if math.cosh(mid) < m:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestComputeMu:
    def test_half_contrast_against_bisection_oracle(self):
        # kappa = -1/2: mu = (2/pi) acosh(1.5), acosh resolved by bisection on cosh
        mu = compute_mu(contrast(-0.5))
        assert mu.imag == 0.0
        oracle = 2.0 / math.pi * acosh_by_bisection(1.5)
        assert abs(mu.real - oracle) <= 1e-12
        assert abs(mu.real - 0.61269) <= 1e-5

    def test_near_minus_one_period_magnitude(self):
        c = contrast(-1.0 + 1e-4)
        period = period_lndelta(c)
        assert abs(period - 0.4983) <= 5e-4
        assert abs(period - 0.5) <= 0.01

    def test_limit_third_gives_zero(self):
        assert compute_mu(MaterialContrast(3.0, -1.0)) == 0j
        assert compute_mu(contrast(-1.0 / 3.0)) == 0j

    def test_log_form_equals_acosh_form_on_grid(self):
        for kappa in np.linspace(-1.0 + 1e-6, -1.0 / 3.0 - 1e-6, 100):
            mu = compute_mu(contrast(float(kappa)))
            m = (1.0 - kappa) / (2.0 * (1.0 + kappa))
            assert mu.imag == 0.0
            assert abs(mu.real - 2.0 / math.pi * math.acosh(m)) <= 1e-12

    def test_mu_increases_toward_minus_one(self):
        mus = [compute_mu(contrast(-1.0 + 10.0 ** (-k))).real for k in range(2, 7)]
        assert all(b > a for a, b in zip(mus, mus[1:]))

    def test_outside_critical_is_complex_or_imaginary(self):
        mu = compute_mu(contrast(-0.25))
        assert mu.real == 0.0 and mu.imag != 0.0
        mu = compute_mu(contrast(-2.0))
        assert mu.real != 0.0 and abs(mu.imag + 2.0) < 1e-12


class TestClassification:
    @pytest.mark.parametrize("kappa,expected", [
        (-0.5, ContrastClass.CRITICAL_INTERVAL),
        (-0.999999, ContrastClass.CRITICAL_INTERVAL),
        (-1.0 / 3.0, ContrastClass.LIMIT_THIRD),
        (-0.25, ContrastClass.OUTSIDE_CRITICAL),
        (-2.0, ContrastClass.OUTSIDE_CRITICAL),
        (-1.0, ContrastClass.FORBIDDEN),
    ])
    def test_classify(self, kappa, expected):
        assert classify_kappa(kappa) is expected

    def test_forbidden_contrast_rejected_at_construction(self):
        with pytest.raises(ForbiddenContrastError):
            MaterialContrast(1.0, -1.0)
        with pytest.raises(ForbiddenContrastError):
            MaterialContrast(2.0, -2.0)

    def test_sign_constraints(self):
        with pytest.raises(ValueError):
            MaterialContrast(-1.0, -1.0)
        with pytest.raises(ValueError):
            MaterialContrast(1.0, 0.5)
        with pytest.raises(ValueError):
            MaterialContrast(0.0, -1.0)


class TestLattice:
    def test_half_contrast_window_two(self):
        mu = compute_mu(contrast(-0.5)).real
        pts = lattice(contrast(-0.5), 2.0)
        expected = sorted([complex(-2, 0), complex(2, 0), 1j * mu, -1j * mu],
                          key=lambda z: (z.real, z.imag))
        assert len(pts) == 4
        for got, want in zip(pts, expected):
            assert abs(got - want) <= 1e-12

    def test_zero_window_critical(self):
        mu = compute_mu(contrast(-0.5)).real
        pts = lattice(contrast(-0.5), 0.0)
        assert len(pts) == 2
        assert abs(pts[0] + 1j * mu) <= 1e-12 and abs(pts[1] - 1j * mu) <= 1e-12

    def test_zero_window_outside_critical_is_empty(self):
        assert lattice(contrast(-0.25), 0.0) == []

    @pytest.mark.parametrize("kappa", [-0.5, -0.9, -0.25, -0.15, -2.0, -5.0, -3.0])
    def test_negation_and_conjugation_closure(self, kappa):
        pts = lattice(contrast(kappa), 6.0)
        assert pts
        keys = {(round(z.real, 9), round(z.imag, 9)) for z in pts}
        for z in pts:
            assert (round(-z.real, 9), round(-z.imag, 9)) in keys
            assert (round(z.real, 9), round(-z.imag, 9)) in keys

    @pytest.mark.parametrize("kappa", [-0.5, -0.7, -0.99])
    def test_critical_imaginary_axis_points(self, kappa):
        mu = compute_mu(contrast(kappa)).real
        axis = [z for z in lattice(contrast(kappa), 5.0) if abs(z.real) <= 1e-12]
        assert len(axis) == 2
        assert {round(z.imag, 10) for z in axis} == {round(mu, 10), round(-mu, 10)}

    @pytest.mark.parametrize("kappa", [-0.25, -0.15, -2.0, -5.0, -3.0])
    def test_noncritical_has_no_imaginary_axis_points(self, kappa):
        axis = [z for z in lattice(contrast(kappa), 8.0) if abs(z.real) <= 1e-10]
        assert axis == []

    def test_window_boundary_included(self):
        pts = lattice(contrast(-0.5), 4.0)
        assert any(abs(z - 4.0) <= 1e-12 for z in pts)
        assert any(abs(z + 4.0) <= 1e-12 for z in pts)

    def test_negative_window_rejected(self):
        with pytest.raises(ValueError):
            lattice(contrast(-0.5), -1.0)


class TestPhi:
    def test_vanishes_at_endpoints(self):
        mu = compute_mu(contrast(-0.5)).real
        assert phi(0.0, mu, 1.7) == 0.0
        assert phi(math.pi, mu, 1.7) == 0.0

    def test_value_at_interface_is_cphi(self):
        mu = compute_mu(contrast(-0.5)).real
        assert abs(phi(math.pi / 4.0, mu, 2.5) - 2.5) <= 1e-12 * 2.5

    def test_branch_agreement_at_interface(self):
        for kappa in (-0.5, -0.999, -0.4):
            mu = compute_mu(contrast(kappa)).real
            th = math.pi / 4.0
            lower = math.sinh(mu * th) / math.sinh(mu * math.pi / 4.0)
            upper = math.sinh(mu * (math.pi - th)) / math.sinh(mu * 3.0 * math.pi / 4.0)
            assert abs(lower - upper) <= 1e-12

    def test_interior_value_against_mpmath(self):
        mpmath = pytest.importorskip("mpmath")
        mu = 0.61269
        got = phi(math.pi / 8.0, mu, 1.0)
        with mpmath.workdps(50):
            want = mpmath.sinh(mu * mpmath.pi / 8) / mpmath.sinh(mu * mpmath.pi / 4)
        assert abs(got - float(want)) <= 1e-13

    def test_domain_error(self):
        with pytest.raises(ValueError):
            phi(-0.1, 0.6, 1.0)
        with pytest.raises(ValueError):
            phi(math.pi + 0.1, 0.6, 1.0)

    def test_requires_positive_mu(self):
        with pytest.raises(ValueError):
            phi(0.5, 0.0, 1.0)

    def test_array_input(self):
        mu = 0.61269
        th = np.linspace(0.0, math.pi, 7)
        vals = phi(th, mu, 1.0)
        assert vals.shape == th.shape
        assert vals[0] == 0.0 and abs(vals[-1]) <= 1e-15

    def test_large_mu_is_finite(self):
        vals = phi(np.linspace(0, math.pi, 11), 50.0, 1.0)
        assert np.all(np.isfinite(vals))


def sigma_weighted_quadrature(kappa: float, mu: float, c: float, n: int = 1_000_000):
    """Brute-force mu * int sigma0 phi^2 dtheta by trapezoid, split at the kink."""
    total = 0.0
    for (a, b, sig) in ((0.0, math.pi / 4.0, kappa), (math.pi / 4.0, math.pi, 1.0)):
        th = np.linspace(a, b, n // 2)
        total += sig * np.trapezoid(phi(th, mu, c) ** 2, th)
    return mu * total


class TestNormalizePhi:
    def test_against_trapezoid_oracle(self):
        c = contrast(-0.5)
        mu = compute_mu(c).real
        c_phi = normalize_phi(c)
        # oracle: solve mu * J(c)^ = 1 for the constant via brute-force quadrature
        j1 = sigma_weighted_quadrature(-0.5, mu, 1.0)
        assert abs(c_phi - 1.0 / math.sqrt(j1)) <= 1e-8

    def test_guess_invariance(self):
        c = contrast(-0.5)
        mu = compute_mu(c).real
        j1 = sigma_weighted_quadrature(-0.5, mu, 1.0, n=200_000)
        j7 = sigma_weighted_quadrature(-0.5, mu, 7.0, n=200_000)
        assert abs(1.0 / math.sqrt(j1) - 7.0 / math.sqrt(j7)) <= 1e-12

    @pytest.mark.parametrize("kappa", [-0.5, -0.9, -0.4, -0.99])
    def test_normalization_holds(self, kappa):
        c = contrast(kappa)
        mu = compute_mu(c).real
        c_phi = normalize_phi(c, mu)
        assert c_phi > 0.0
        # high-order quadrature of the defining integral, split at the kink
        total = 0.0
        for (a, b, sig) in ((0.0, math.pi / 4.0, kappa), (math.pi / 4.0, math.pi, 1.0)):
            th = np.linspace(a, b, 20001)
            total += sig * simpson(phi(th, mu, c_phi) ** 2, x=th)
        assert abs(mu * total - 1.0) <= 1e-10

    def test_noncritical_rejected(self):
        with pytest.raises(NonCriticalContrastError):
            normalize_phi(contrast(-0.25))
        with pytest.raises(NonCriticalContrastError):
            normalize_phi(contrast(-2.0))


class TestDeltaN:
    def test_near_minus_one_first_value(self):
        assert abs(delta_n(contrast(-1.0 + 1e-4), 1) - 0.6076) <= 1e-4

    def test_monotone_decreasing_to_zero(self):
        c = contrast(-0.5)
        ds = [delta_n(c, n) for n in range(1, 30)]
        assert all(0.0 < b < a < 1.0 for a, b in zip(ds, ds[1:]))
        assert ds[-1] < 1e-6

    def test_ratio_law(self):
        c = contrast(-0.7)
        ratio = math.exp(-period_lndelta(c))
        for n in range(1, 10):
            got = delta_n(c, n + 1) / delta_n(c, n)
            assert abs(got - ratio) <= 1e-14 * ratio

    def test_log_consistency_with_mu(self):
        for kappa in np.linspace(-0.999, -0.34, 25):
            c = contrast(float(kappa))
            mu = compute_mu(c).real
            for n in range(1, 11):
                assert abs(math.log(delta_n(c, n)) + n * math.pi / mu) <= 1e-12

    def test_noncritical_rejected(self):
        with pytest.raises(NonCriticalContrastError):
            delta_n(contrast(-0.25), 1)
        with pytest.raises(NonCriticalContrastError):
            delta_n(contrast(-2.0), 1)

    def test_bad_n_rejected(self):
        with pytest.raises(ValueError):
            delta_n(contrast(-0.5), 0)
        with pytest.raises(ValueError):
            delta_n(contrast(-0.5), 1.5)


class TestSingularData:
    def test_critical_bundle(self):
        sd = singular_data(contrast(-0.5), 2.0)
        assert sd.mu.imag == 0.0 and sd.mu.real > 0.0
        assert len(sd.lattice_window) == 4
        assert sd.phi_cphi > 0.0
        assert abs(sd.period_lndelta - math.pi / sd.mu.real) <= 1e-15

    def test_noncritical_bundle(self):
        sd = singular_data(contrast(-0.25), 2.0)
        assert sd.phi_cphi is None and sd.period_lndelta is None
        assert sd.mu != 0

    def test_period_noncritical_rejected(self):
        with pytest.raises(NonCriticalContrastError):
            period_lndelta(contrast(-0.2))
