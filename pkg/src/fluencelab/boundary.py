"""Fresnel reflectance, its angular moments, and the extrapolated boundary.

The index-mismatched interface at z = 0 is characterized by the ratio
``n_rel = n_medium / n_outer``.  For the default probe the outer medium is
the solid transducer face (n = 1.49 against water-like 1.33, n_rel < 1, no
total internal reflection); the classical medium-to-air case (n_rel > 1)
is fully supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import NumericError

__all__ = [
    "BoundaryCondition",
    "fresnel_reflectance",
    "fresnel_reflectance_cos",
    "reflection_moments",
    "extrapolated_distance",
]

_HALF_PI = math.pi / 2.0


def fresnel_reflectance(theta_rad, n_rel):
    """Unpolarized Fresnel reflectance for incidence angle ``theta_rad``.

    Parameters
    ----------
    theta_rad : float or ndarray
        Angle of incidence from the interface normal, in [0, pi/2].
    n_rel : float
        Ratio of the refractive index of the scattering medium to that of
        the outer medium.

    Returns
    -------
    float or ndarray
        Reflectance in [0, 1].  Beyond the critical angle (only when
        n_rel > 1) the reflectance is exactly 1.
    """
    theta = np.asarray(theta_rad, dtype=float)
    if np.any((theta < 0.0) | (theta > _HALF_PI)):
        raise ValueError("incidence angle must lie in [0, pi/2]")
    if n_rel <= 0:
        raise ValueError("n_rel must be positive")
    out = fresnel_reflectance_cos(np.cos(theta), n_rel)
    return float(out) if np.ndim(theta_rad) == 0 else out


def fresnel_reflectance_cos(cos_i, n_rel):
    """Vectorized Fresnel reflectance from incidence cosines in [0, 1]."""
    cos_i = np.clip(np.asarray(cos_i, dtype=float), 0.0, 1.0)
    sin_i = np.sqrt(1.0 - cos_i * cos_i)
    sin_t = n_rel * sin_i
    refl = np.ones_like(cos_i)
    below = sin_t < 1.0  # above: total internal reflection
    ct = cos_i[below]
    ctp = np.sqrt(1.0 - sin_t[below] ** 2)
    r_s = (n_rel * ctp - ct) / (n_rel * ctp + ct)
    r_p = (n_rel * ct - ctp) / (n_rel * ct + ctp)
    refl[below] = 0.5 * (r_s * r_s + r_p * r_p)
    return refl


@lru_cache(maxsize=64)
def reflection_moments(n_rel: float, rtol: float = 1e-8) -> tuple[float, float]:
    """Angular moments (R_phi, R_j) of the Fresnel reflectance.

    R_phi = int_0^{pi/2} 2 sin(t) cos(t)   R(t) dt
    R_j   = int_0^{pi/2} 3 sin(t) cos(t)^2 R(t) dt

    Computed by adaptive quadrature; the integrand is only C0 at the
    critical angle, so the integration interval is split there.
    """
    if n_rel <= 0:
        raise ValueError("n_rel must be positive")
    points = [0.0]
    if n_rel > 1.0:
        points.append(math.asin(1.0 / n_rel))
    points.append(_HALF_PI)

    def integrate(weight_fn):
        total, err = 0.0, 0.0
        for a, b in zip(points[:-1], points[1:]):
            val, abserr = quad(
                lambda t: weight_fn(t) * fresnel_reflectance(t, n_rel),
                a,
                b,
                epsabs=1e-12,
                epsrel=rtol,
                limit=200,
            )
            total += val
            err += abserr
        if err > rtol * max(abs(total), 1.0) * 10.0:
            raise NumericError(
                f"reflection moment quadrature did not converge for n_rel={n_rel}: "
                f"value={total}, abserr={err}"
            )
        return total

    r_phi = integrate(lambda t: 2.0 * math.sin(t) * math.cos(t))
    r_j = integrate(lambda t: 3.0 * math.sin(t) * math.cos(t) ** 2)
    return r_phi, r_j


def extrapolated_distance(d_mm: float, n_rel: float) -> float:
    """Extrapolated boundary distance z_b = 2 D (1 + R_j) / (1 - R_phi), mm."""
    if d_mm <= 0:
        raise ValueError("diffusion coefficient must be positive")
    r_phi, r_j = reflection_moments(n_rel)
    if r_phi >= 1.0:
        raise NumericError(f"singular boundary: R_phi={r_phi} >= 1 for n_rel={n_rel}")
    return 2.0 * d_mm * (1.0 + r_j) / (1.0 - r_phi)


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary summary for one index ratio and one diffusion coefficient."""

    n_rel: float
    r_phi: float
    r_j: float
    z_b: float

    def __post_init__(self):
        if not 0.0 <= self.r_phi < 1.0:
            raise ValueError("R_phi must lie in [0, 1)")
        if self.r_j < 0.0:
            raise ValueError("R_j must be nonnegative")
        if self.z_b <= 0.0:
            raise ValueError("z_b must be positive")

    @classmethod
    def for_medium(cls, d_mm: float, n_rel: float) -> "BoundaryCondition":
        r_phi, r_j = reflection_moments(n_rel)
        return cls(n_rel=n_rel, r_phi=r_phi, r_j=r_j, z_b=extrapolated_distance(d_mm, n_rel))
