"""Probe geometry, optical media, and basic transport quantities.

Internal unit convention: lengths in mm, coefficients in mm^-1.  Literature
values (and config files) are quoted in cm^-1 and must be converted at
ingestion with :func:`per_cm_to_per_mm`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProbeGeometry",
    "OpticalMedium",
    "WavelengthGrid",
    "default_probe",
    "default_wavelength_grid",
    "per_cm_to_per_mm",
    "per_mm_to_per_cm",
    "mu_eff",
    "brain_scattering",
    "transport_mfp",
    "diffusion_coefficient",
]

# Fiber layout defaults: elevational offset from Fig-2-style probes, lateral
# span matching a 12.7 mm imaging aperture.
DEFAULT_FIBER_Y_MM = 5.68
DEFAULT_FIBER_X_SPAN_MM = 6.35
DEFAULT_TILT_DEG = 35.0
N_FIBERS = 20


def per_cm_to_per_mm(value):
    """Convert a coefficient from cm^-1 to the internal mm^-1 convention."""
    return np.asarray(value, dtype=float) * 0.1


def per_mm_to_per_cm(value):
    """Convert a coefficient from mm^-1 back to cm^-1."""
    return np.asarray(value, dtype=float) * 10.0


def mu_eff(mu_a, mu_s_reduced):
    """Effective attenuation coefficient sqrt(3 * mu_a * mu_s') in mm^-1.

    Parameters
    ----------
    mu_a : float or ndarray
        Absorption coefficient (mm^-1), >= 0.
    mu_s_reduced : float or ndarray
        Reduced scattering coefficient (mm^-1), > 0.
    """
    mu_a = np.asarray(mu_a, dtype=float)
    mu_s_reduced = np.asarray(mu_s_reduced, dtype=float)
    if np.any(mu_a < 0):
        raise ValueError("mu_a must be nonnegative")
    if np.any(mu_s_reduced <= 0):
        raise ValueError("mu_s_reduced must be positive")
    out = np.sqrt(3.0 * mu_a * mu_s_reduced)
    return float(out) if out.ndim == 0 else out


def brain_scattering(lambda_nm):
    """Brain reduced scattering law, 4.08 * (lambda/500)^-3.089 mm^-1.

    The prefactor corresponds to 40.8 cm^-1 at 500 nm.
    """
    lam = np.asarray(lambda_nm, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    out = 4.08 * (lam / 500.0) ** (-3.089)
    return float(out) if out.ndim == 0 else out


def transport_mfp(mu_s_reduced):
    """Transport mean free path l_t = 1 / mu_s' in mm."""
    mu_s_reduced = np.asarray(mu_s_reduced, dtype=float)
    if np.any(mu_s_reduced <= 0):
        raise ValueError("mu_s_reduced must be positive")
    out = 1.0 / mu_s_reduced
    return float(out) if out.ndim == 0 else out


def diffusion_coefficient(mu_s_reduced):
    """Diffusion coefficient D = 1 / (3 * mu_s') in mm."""
    mu_s_reduced = np.asarray(mu_s_reduced, dtype=float)
    if np.any(mu_s_reduced <= 0):
        raise ValueError("mu_s_reduced must be positive")
    out = 1.0 / (3.0 * mu_s_reduced)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ProbeGeometry:
    """Source fiber layout around the transducer plus boundary indices.

    Attributes
    ----------
    fiber_tips : ndarray, shape (20, 3)
        Tip positions (x', y', z') in mm.  Ten tips sit at y' = +y0 and ten
        at y' = -y0 for a single elevation y0 > 0; all z' = 0.
    tilt_deg : float
        Beam tilt from the z axis, degrees.  Each beam tilts toward the
        image plane y = 0.
    n_medium : float
        Refractive index of the scattering medium (Medium I).
    n_coupling : float
        Refractive index of the solid transducer face used for the
        index-mismatched boundary.
    """

    fiber_tips: np.ndarray
    tilt_deg: float = DEFAULT_TILT_DEG
    n_medium: float = 1.33
    n_coupling: float = 1.49

    def __post_init__(self):
        tips = np.asarray(self.fiber_tips, dtype=float)
        if tips.shape != (N_FIBERS, 3):
            raise ValueError(f"expected {N_FIBERS} fiber tips with 3 coordinates, got {tips.shape}")
        if not np.all(tips[:, 2] == 0.0):
            raise ValueError("all fiber tips must lie on the interface plane z' = 0")
        y = tips[:, 1]
        pos, neg = y[y > 0], y[y < 0]
        if pos.size != N_FIBERS // 2 or neg.size != N_FIBERS // 2:
            raise ValueError("fibers must split 10/10 across the image plane")
        if not (np.allclose(pos, pos[0]) and np.allclose(neg, -pos[0])):
            raise ValueError("fiber elevations must be +/- a single offset")
        if not 0.0 <= self.tilt_deg < 90.0:
            raise ValueError("tilt_deg must satisfy 0 <= tilt < 90")
        if self.n_medium <= 0 or self.n_coupling <= 0:
            raise ValueError("refractive indices must be positive")
        object.__setattr__(self, "fiber_tips", tips)

    @property
    def tilt_rad(self) -> float:
        return float(np.radians(self.tilt_deg))

    @property
    def n_rel(self) -> float:
        """Index ratio n_medium / n_coupling used for the boundary condition."""
        return self.n_medium / self.n_coupling

    @property
    def fiber_y_abs(self) -> float:
        return float(np.max(self.fiber_tips[:, 1]))


def default_probe(
    y_abs_mm: float = DEFAULT_FIBER_Y_MM,
    x_span_mm: float = DEFAULT_FIBER_X_SPAN_MM,
    tilt_deg: float = DEFAULT_TILT_DEG,
    n_medium: float = 1.33,
    n_coupling: float = 1.49,
) -> ProbeGeometry:
    """Build the default 20-fiber probe: 10 per side, uniform over x."""
    xs = np.linspace(-x_span_mm, x_span_mm, N_FIBERS // 2)
    tips = np.zeros((N_FIBERS, 3))
    tips[: N_FIBERS // 2, 0] = xs
    tips[: N_FIBERS // 2, 1] = y_abs_mm
    tips[N_FIBERS // 2 :, 0] = xs
    tips[N_FIBERS // 2 :, 1] = -y_abs_mm
    return ProbeGeometry(tips, tilt_deg=tilt_deg, n_medium=n_medium, n_coupling=n_coupling)


@dataclass(frozen=True)
class OpticalMedium:
    """Homogeneous medium optical properties, per analysis wavelength.

    ``mu_a`` and ``mu_s_reduced`` are arrays over the analysis wavelengths
    (length-1 arrays describe a single-wavelength medium).  Units mm^-1.
    """

    mu_a: np.ndarray
    mu_s_reduced: np.ndarray
    g: float = 0.9
    n: float = 1.33

    def __post_init__(self):
        mu_a = np.atleast_1d(np.asarray(self.mu_a, dtype=float))
        mu_s = np.atleast_1d(np.asarray(self.mu_s_reduced, dtype=float))
        if mu_a.shape != mu_s.shape:
            raise ValueError("mu_a and mu_s_reduced must have matching length")
        if np.any(mu_a < 0):
            raise ValueError("mu_a must be nonnegative")
        if np.any(mu_s <= 0):
            raise ValueError("mu_s_reduced must be positive")
        if not -1.0 < self.g < 1.0:
            raise ValueError("anisotropy g must lie in (-1, 1)")
        if self.n <= 0:
            raise ValueError("refractive index must be positive")
        mu_s_full = mu_s / (1.0 - self.g)
        if not np.all(np.isfinite(mu_s_full)):
            raise ValueError("derived mu_s is not finite")
        object.__setattr__(self, "mu_a", mu_a)
        object.__setattr__(self, "mu_s_reduced", mu_s)

    @property
    def mu_s(self) -> np.ndarray:
        """Unreduced scattering coefficient mu_s' / (1 - g)."""
        return self.mu_s_reduced / (1.0 - self.g)

    @property
    def mu_eff(self) -> np.ndarray:
        return mu_eff(self.mu_a, self.mu_s_reduced)

    @property
    def n_wavelengths(self) -> int:
        return int(self.mu_a.size)


@dataclass(frozen=True)
class WavelengthGrid:
    """Acquisition wavelength sequence including the zero-power control frame."""

    wavelengths_nm: np.ndarray
    control_index: int | None = 0

    def __post_init__(self):
        lam = np.asarray(self.wavelengths_nm, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("wavelengths_nm must be a nonempty 1-D sequence")
        if self.control_index is not None and not 0 <= self.control_index < lam.size:
            raise ValueError("control_index out of range")
        object.__setattr__(self, "wavelengths_nm", lam)

    @property
    def n_total(self) -> int:
        return int(self.wavelengths_nm.size)

    @property
    def analysis_indices(self) -> np.ndarray:
        """Frame indices carrying laser power (control excluded)."""
        idx = np.arange(self.n_total)
        if self.control_index is None:
            return idx
        return idx[idx != self.control_index]

    @property
    def analysis_nm(self) -> np.ndarray:
        return self.wavelengths_nm[self.analysis_indices]

    def drop_control(self) -> "WavelengthGrid":
        return WavelengthGrid(self.analysis_nm, control_index=None)


def default_wavelength_grid() -> WavelengthGrid:
    """700 nm control frame plus 715-875 nm every 20 nm (10 entries)."""
    lam = np.concatenate(([700.0], np.arange(715.0, 876.0, 20.0)))
    return WavelengthGrid(lam, control_index=0)
