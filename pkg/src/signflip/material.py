"""Closed-form corner-exponent quantities for the sign-changing diffusion problem.

The diffusion coefficient takes the constant value sigma_plus > 0 on the wide
sector (aperture 3*pi/4) and sigma_minus < 0 on the narrow sector (aperture
pi/4) of a corner of total opening pi.  Everything in this module is an
explicit function of the contrast kappa = sigma_minus / sigma_plus:

* mu        : principal corner exponent,
              mu = -(2/pi) * Log(m + i*sqrt(1 - m^2)),  m = (1-kappa)/(2(1+kappa)),
              with the principal complex logarithm.  For kappa in the critical
              interval (-1, -1/3) this reduces to the real positive value
              (2/pi)*acosh(m).
* Lambda    : the exponent lattice (2Z \\ {0}) U {i*mu + 4Z} U {-i*mu + 4Z}.
* phi       : the angular profile, piecewise sinh in the two sectors, with the
              normalisation constant c_phi fixed by
              mu * int_0^pi sigma0(theta) phi(theta)^2 dtheta = 1.
* delta_n   : the decreasing sequence exp(-n*pi/mu) of inner radii at which the
              half-annulus operator loses injectivity (critical contrast only).

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ForbiddenContrastError, NonCriticalContrastError

__all__ = [
    "MaterialContrast",
    "ContrastClass",
    "SingularData",
    "classify_kappa",
    "compute_mu",
    "lattice",
    "phi",
    "normalize_phi",
    "delta_n",
    "period_lndelta",
    "singular_data",
]


class ContrastClass(Enum):
    """Position of the contrast relative to the critical interval (-1, -1/3)."""

    CRITICAL_INTERVAL = "critical"
    OUTSIDE_CRITICAL = "outside"
    LIMIT_THIRD = "limit_third"
    FORBIDDEN = "forbidden"


def classify_kappa(kappa: float) -> ContrastClass:
    """Classify a (negative) contrast value.  Pure function of kappa."""
    if kappa == -1.0:
        return ContrastClass.FORBIDDEN
    if kappa == -1.0 / 3.0:
        return ContrastClass.LIMIT_THIRD
    if -1.0 < kappa < -1.0 / 3.0:
        return ContrastClass.CRITICAL_INTERVAL
    return ContrastClass.OUTSIDE_CRITICAL


@dataclass(frozen=True)
class MaterialContrast:
    """Coefficient pair (sigma_plus > 0 on the wide sector, sigma_minus < 0 on the narrow one)."""

    sigma_plus: float
    sigma_minus: float

    def __post_init__(self):
        if not self.sigma_plus > 0.0:
            raise ValueError(f"sigma_plus must be > 0, got {self.sigma_plus}")
        if not self.sigma_minus < 0.0:
            raise ValueError(f"sigma_minus must be < 0, got {self.sigma_minus}")
        if self.sigma_minus / self.sigma_plus == -1.0:
            raise ForbiddenContrastError(
                "contrast kappa = sigma_minus/sigma_plus = -1 is rejected "
                "(the problem loses ellipticity there)"
            )

    @property
    def kappa(self) -> float:
        return self.sigma_minus / self.sigma_plus

    @property
    def contrast_class(self) -> ContrastClass:
        return classify_kappa(self.kappa)

    @property
    def is_critical(self) -> bool:
        return self.contrast_class is ContrastClass.CRITICAL_INTERVAL


def compute_mu(contrast: MaterialContrast) -> complex:
    """Principal corner exponent mu = -(2/pi) Log(m + i sqrt(1-m^2)).

    m = (1-kappa)/(2(1+kappa)).  Critical contrasts give m > 1, where the
    argument of the logarithm is the real number m - sqrt(m^2-1) in (0,1);
    that branch is evaluated through the algebraically equivalent form
    +(2/pi)*log(m + sqrt(m^2-1)) to avoid the catastrophic cancellation of
    m - sqrt(m^2-1) for kappa close to -1.
    """
    kappa = contrast.kappa
    if classify_kappa(kappa) is ContrastClass.LIMIT_THIRD:
        return 0j  # acosh(1) = 0 exactly at the interval edge
    m = (1.0 - kappa) / (2.0 * (1.0 + kappa))
    if m > 1.0:
        # critical interval: real positive exponent
        return complex((2.0 / math.pi) * math.log(m + math.sqrt((m - 1.0) * (m + 1.0))), 0.0)
    z = complex(m, 0.0) + 1j * cmath.sqrt(complex(1.0 - m * m, 0.0))
    return -(2.0 / math.pi) * cmath.log(z)


def lattice(contrast: MaterialContrast, window_halfwidth: float) -> list[complex]:
    """All lattice exponents with |Re| <= window_halfwidth, sorted by (Re, Im).

    The lattice is (2Z \\ {0}) U {i*mu + 4Z} U {-i*mu + 4Z}; coincident points
    (possible for special contrasts such as kappa = -3) are deduplicated.
    """
    if window_halfwidth < 0.0:
        raise ValueError("window_halfwidth must be >= 0")
    mu = compute_mu(contrast)
    w = float(window_halfwidth)
    pts: list[complex] = []

    kmax = int(math.floor(w / 2.0 + 1e-12))
    for k in range(-kmax, kmax + 1):
        if k != 0:
            pts.append(complex(2 * k, 0.0))

    for base in (1j * mu, -1j * mu):
        re0 = base.real
        klo = int(math.ceil((-w - re0) / 4.0 - 1e-12))
        khi = int(math.floor((w - re0) / 4.0 + 1e-12))
        for k in range(klo, khi + 1):
            pts.append(base + 4.0 * k)

    uniq: dict[tuple[float, float], complex] = {}
    for z in pts:
        key = (round(z.real, 12), round(z.imag, 12))
        uniq.setdefault(key, z)
    return sorted(uniq.values(), key=lambda z: (z.real, z.imag))


def _sinh_ratio(a, b):
    """sinh(a)/sinh(b) for a >= 0, b > 0, overflow-safe for large arguments."""
    a = np.asarray(a, dtype=float)
    return np.exp(a - b) * np.expm1(-2.0 * a) / np.expm1(-2.0 * b)


def phi(theta, mu: float, c_phi: float):
    """Angular profile at angle(s) theta in [0, pi].

    phi(theta) = c_phi * sinh(mu*theta)/sinh(mu*pi/4)          on [0, pi/4],
    phi(theta) = c_phi * sinh(mu*(pi-theta))/sinh(mu*3*pi/4)   on [pi/4, pi].

    Both branches agree at theta = pi/4 where the ratio is 1.
    """
    if not mu > 0.0:
        raise ValueError(f"mu must be real positive, got {mu}")
    th = np.asarray(theta, dtype=float)
    if np.any(th < -1e-12) or np.any(th > math.pi + 1e-12):
        raise ValueError("theta outside the domain [0, pi]")
    lower = c_phi * _sinh_ratio(np.clip(th, 0.0, None) * mu, mu * math.pi / 4.0)
    upper = c_phi * _sinh_ratio(np.clip(math.pi - th, 0.0, None) * mu, mu * 3.0 * math.pi / 4.0)
    out = np.where(th <= math.pi / 4.0, lower, upper)
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(out)
    return out


def _sigma_weighted_profile_integral(contrast: MaterialContrast, mu: float) -> float:
    """mu * int_0^pi sigma0(theta) phi(theta)^2 dtheta with c_phi = 1, in closed form.

    With a = mu*pi/4 (narrow sector) and a' = 3*mu*pi/4 (wide sector),
    int_0^L sinh(mu t)^2 dt / sinh(mu L)^2 = (coth(a) - a/sinh(a)^2) / (2 mu),
    so the weighted integral times mu is
    (sigma_minus*g(a) + sigma_plus*g(a')) / 2,  g(a) = coth(a) - a/sinh(a)^2.
    """

    def g(a: float) -> float:
        sh = math.sinh(a)
        return 1.0 / math.tanh(a) - a / (sh * sh)

    a_minus = mu * math.pi / 4.0
    a_plus = mu * 3.0 * math.pi / 4.0
    return 0.5 * (contrast.sigma_minus * g(a_minus) + contrast.sigma_plus * g(a_plus))


def normalize_phi(contrast: MaterialContrast, mu: Optional[float] = None) -> float:
    """Normalisation constant c_phi > 0 so that mu*int sigma0*phi^2 dtheta = 1.

    Only defined for critical contrasts, where the sigma-weighted integral is
    positive.  The integral is evaluated analytically (the integrand is sinh^2,
    with an elementary antiderivative).
    """
    if not contrast.is_critical:
        raise NonCriticalContrastError(
            "phi normalisation requires kappa in (-1, -1/3); the weighted "
            f"integral has no guaranteed sign for kappa = {contrast.kappa}"
        )
    if mu is None:
        mu = compute_mu(contrast).real
    weighted = _sigma_weighted_profile_integral(contrast, mu)
    if not weighted > 0.0:
        raise ArithmeticError(
            f"sigma-weighted profile integral is not positive ({weighted}); "
            "this contradicts the critical-contrast positivity property"
        )
    return 1.0 / math.sqrt(weighted)


def period_lndelta(contrast: MaterialContrast) -> float:
    """Oscillation period pi/mu of the spectrum in ln(delta) scale (critical only)."""
    if not contrast.is_critical:
        raise NonCriticalContrastError(
            f"period pi/mu is only defined for critical contrasts, got kappa = {contrast.kappa}"
        )
    return math.pi / compute_mu(contrast).real


def delta_n(contrast: MaterialContrast, n: int) -> float:
    """n-th injectivity-loss radius, delta^n = exp(-n*pi/mu), strictly decreasing in n.

    Outside the critical interval the operator stays injective for every inner
    radius and no such sequence exists.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not contrast.is_critical:
        raise NonCriticalContrastError(
            "delta^n is only defined for kappa in (-1, -1/3); outside it the "
            "half-annulus operator is injective for every delta in (0, 1)"
        )
    mu = compute_mu(contrast).real
    return math.exp(-n * math.pi / mu)


@dataclass(frozen=True)
class SingularData:
    """Bundle of the exponent data derived from one contrast.

    Outside the critical interval mu is genuinely complex and neither the
    normalisation constant nor the ln-delta period exist; those fields are
    None there.
    """

    mu: complex
    lattice_window: list
    phi_cphi: Optional[float]
    period_lndelta: Optional[float]


def singular_data(contrast: MaterialContrast, window_halfwidth: float) -> SingularData:
    """Compute mu, the lattice window, c_phi and the period for one contrast."""
    mu = compute_mu(contrast)
    window = lattice(contrast, window_halfwidth)
    if contrast.is_critical:
        return SingularData(mu, window, normalize_phi(contrast, mu.real), math.pi / mu.real)
    return SingularData(mu, window, None, None)
