"""Synthetic PA measurement generation and fluence correction of spectra.

Forward model: p_{j,k}(r_i) = Gamma * mu_a_bar^{(j)}(r_i) * Phi_{j,k}(r_i)
at target pixels (zero elsewhere) with Gamma fixed at 1, plus white
Gaussian noise whose sigma follows from the requested SNR.  A zero-power
control frame carrying noise only is prepended.  All recovered spectra are
defined up to a global scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ConfigurationError, NumericError
from .estimation import MeasurementTensor, noise_sigma_for_snr
from .fluence import model1_fiber_fluence, model2_fiber_fluence
from .geometry import OpticalMedium, ProbeGeometry, WavelengthGrid

__all__ = [
    "ChromophoreSpectrum",
    "Target",
    "Spectrum",
    "PixelGrid",
    "mixture_absorption",
    "synthesize",
    "uncorrected_spectrum",
    "corrected_spectrum",
    "estimation_fractional_error",
    "spectrum_similarity",
]


@dataclass(frozen=True)
class PixelGrid:
    """Regular (x, z) pixel lattice of the image plane, row-major in (z, x)."""

    x0_mm: float = -6.3
    z0_mm: float = 0.1
    dx_mm: float = 0.2
    dz_mm: float = 0.2
    nx: int = 64
    nz: int = 126

    def __post_init__(self):
        if self.dx_mm <= 0 or self.dz_mm <= 0 or self.nx < 1 or self.nz < 1:
            raise ValueError("pixel grid must have positive spacing and dims")

    @property
    def n_pixels(self) -> int:
        return self.nx * self.nz

    def coords(self) -> np.ndarray:
        """Pixel centers (N, 2) with index i = iz * nx + ix."""
        x = self.x0_mm + np.arange(self.nx) * self.dx_mm
        z = self.z0_mm + np.arange(self.nz) * self.dz_mm
        zz, xx = np.meshgrid(z, x, indexing="ij")
        return np.column_stack([xx.ravel(), zz.ravel()])

    def index_of(self, x_mm: float, z_mm: float) -> int:
        ix = round((x_mm - self.x0_mm) / self.dx_mm)
        iz = round((z_mm - self.z0_mm) / self.dz_mm)
        if not (0 <= ix < self.nx and 0 <= iz < self.nz):
            raise ConfigurationError(f"position ({x_mm}, {z_mm}) mm outside the imaging field")
        return int(iz * self.nx + ix)

    def footprint_indices(self, x_mm: float, z_mm: float, half_width: int) -> np.ndarray:
        """Pixel indices of a (2h+1) x (2h+1) footprint clipped to the field."""
        center = self.index_of(x_mm, z_mm)
        iz0, ix0 = divmod(center, self.nx)
        out = []
        for dz in range(-half_width, half_width + 1):
            for dx in range(-half_width, half_width + 1):
                ix, iz = ix0 + dx, iz0 + dz
                if 0 <= ix < self.nx and 0 <= iz < self.nz:
                    out.append(iz * self.nx + ix)
        return np.asarray(sorted(out), dtype=int)


@dataclass(frozen=True)
class ChromophoreSpectrum:
    """Specific absorption per unit concentration at each analysis wavelength."""

    name: str
    alpha: np.ndarray  # mm^-1 per unit concentration

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if np.any(alpha < 0):
            raise ValueError("absorption spectrum must be nonnegative")
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class Target:
    """Absorbing target: position in the image plane plus chromophore mixture.

    ``footprint_half_width`` of 1 renders the default 3x3 pixel patch;
    0 gives the strict single-pixel mode.
    """

    x_mm: float
    z_mm: float
    concentrations: dict = dataclass_field(default_factory=dict)
    footprint_half_width: int = 1

    def __post_init__(self):
        if any(c < 0 for c in self.concentrations.values()):
            raise ValueError("concentrations must be nonnegative")


@dataclass(frozen=True)
class Spectrum:
    """Absorption spectrum over the analysis wavelengths.

    ``kind`` is 'uncorrected', 'corrected', or 'reference'.
    """

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        object.__setattr__(self, "values", values)


def mixture_absorption(chromophores, concentrations, n_wavelengths: int) -> np.ndarray:
    """Concentration-weighted sum of component spectra (linear mixing)."""
    mu = np.zeros(n_wavelengths)
    by_name = {c.name: c for c in chromophores}
    for name, conc in concentrations.items():
        if name not in by_name:
            raise ConfigurationError(f"unknown chromophore '{name}'")
        alpha = by_name[name].alpha
        if alpha.size != n_wavelengths:
            raise ConfigurationError(
                f"chromophore '{name}' has {alpha.size} wavelengths, expected {n_wavelengths}"
            )
        mu += conc * alpha
    return mu


def _fiber_fluence(pixels, geometry, medium, model, j):
    if model == 1:
        return model1_fiber_fluence(
            pixels, geometry, float(medium.mu_eff[j]), float(medium.mu_s_reduced[j])
        )
    return model2_fiber_fluence(pixels, geometry, float(medium.mu_eff[j]))


def synthesize(
    geometry: ProbeGeometry,
    medium: OpticalMedium,
    targets,
    chromophores,
    pixel_grid: PixelGrid,
    wavelengths: WavelengthGrid,
    model: int = 1,
    snr_db: float | None = 50.0,
    seed: int = 0,
    noise_mean: float = 0.0,
) -> MeasurementTensor:
    """Generate a synthetic measurement tensor with a leading control frame.

    ``snr_db=None`` (or infinity) disables noise.  Noise sigma is set per
    analysis wavelength from the fiber-mean target signal at that
    wavelength; the control frame uses the wavelength-mean sigma.  A
    positive ``noise_mean`` exercises the control-frame bias removal.
    """
    if wavelengths.control_index is None:
        raise ConfigurationError("synthesis requires a wavelength grid with a control frame")
    n_analysis = wavelengths.analysis_indices.size
    if medium.n_wavelengths != n_analysis:
        raise ConfigurationError(
            f"medium has {medium.n_wavelengths} wavelengths, grid expects {n_analysis}"
        )
    pixels = pixel_grid.coords()
    n_pix = pixel_grid.n_pixels

    bad = [
        (t.x_mm, t.z_mm)
        for t in targets
        if not (
            pixel_grid.x0_mm <= t.x_mm <= pixel_grid.x0_mm + (pixel_grid.nx - 1) * pixel_grid.dx_mm
            and pixel_grid.z0_mm <= t.z_mm <= pixel_grid.z0_mm + (pixel_grid.nz - 1) * pixel_grid.dz_mm
        )
    ]
    if bad:
        raise ConfigurationError(f"targets outside imaging field: {bad}")

    signal = np.zeros((n_analysis, geometry.fiber_tips.shape[0], n_pix))
    target_pixels: list[np.ndarray] = []
    for t in targets:
        foot = pixel_grid.footprint_indices(t.x_mm, t.z_mm, t.footprint_half_width)
        target_pixels.append(foot)
        mu_bar = mixture_absorption(chromophores, t.concentrations, n_analysis)
        for j in range(n_analysis):
            phi = _fiber_fluence(pixels[foot], geometry, medium, model, j)
            signal[j][:, foot] += mu_bar[j] * phi  # Gamma = 1

    values = np.zeros((wavelengths.n_total, geometry.fiber_tips.shape[0], n_pix))
    values[wavelengths.analysis_indices] = signal

    noiseless = snr_db is None or math.isinf(snr_db)
    if not noiseless:
        rng = np.random.default_rng(seed)
        all_target = np.unique(np.concatenate(target_pixels)) if target_pixels else None
        if all_target is None or all_target.size == 0:
            raise ConfigurationError("cannot set an SNR with no targets")
        sigmas = np.array(
            [noise_sigma_for_snr(signal[j][:, all_target].mean(axis=1), snr_db)
             for j in range(n_analysis)]
        )
        noise = rng.normal(0.0, 1.0, signal.shape) * sigmas[:, None, None] + noise_mean
        values[wavelengths.analysis_indices] += noise
        # control frame carries noise only, sharing the additive mean
        ctrl_sigma = float(sigmas.mean())
        values[wavelengths.control_index] = rng.normal(
            noise_mean, ctrl_sigma, (values.shape[1], n_pix)
        )
    return MeasurementTensor(values=values, pixel_coords=pixels, wavelengths=wavelengths)


def uncorrected_spectrum(debiased: MeasurementTensor, footprint: np.ndarray) -> Spectrum:
    """Raw PA spectrum d_j: fiber-and-footprint sum of debiased measurements."""
    footprint = np.asarray(footprint, dtype=int)
    if footprint.size == 0:
        raise ValueError("empty target footprint")
    d = debiased.values[:, :, footprint].sum(axis=(1, 2))
    return Spectrum(values=d, kind="uncorrected")


def corrected_spectrum(
    debiased: MeasurementTensor, phi_hat: np.ndarray, footprint: np.ndarray
) -> Spectrum:
    """Fluence-corrected spectrum: least-squares projection onto Phi-hat.

    c_j = sum_{k,i} Phi_hat * y_bar / sum_{k,i} Phi_hat^2 over the target
    footprint; ``phi_hat`` must be (J, K, len(footprint)) and strictly
    positive.
    """
    footprint = np.asarray(footprint, dtype=int)
    y = debiased.values[:, :, footprint]
    phi_hat = np.asarray(phi_hat, dtype=float)
    if phi_hat.shape != y.shape:
        raise ValueError(f"phi_hat shape {phi_hat.shape} does not match footprint data {y.shape}")
    denom = np.sum(phi_hat * phi_hat, axis=(1, 2))
    if np.any(denom == 0.0):
        raise NumericError("fluence estimate vanishes at some wavelength: correction undefined")
    c = np.sum(phi_hat * y, axis=(1, 2)) / denom
    return Spectrum(values=c, kind="corrected")


def estimation_fractional_error(mu_true: float, mu_hat: float) -> float:
    """Percent fractional error (mu - mu_hat) / mu * 100."""
    if mu_true == 0:
        raise ValueError("true value must be nonzero")
    return (mu_true - mu_hat) / mu_true * 100.0


def spectrum_similarity(s1: Spectrum | np.ndarray, s2: Spectrum | np.ndarray):
    """Normalized L2 distance and shape correlation of two spectra.

    Both spectra are scaled to unit norm before the distance, so the
    comparison is invariant to overall amplitude.
    """
    a = np.asarray(s1.values if isinstance(s1, Spectrum) else s1, dtype=float)
    b = np.asarray(s2.values if isinstance(s2, Spectrum) else s2, dtype=float)
    if a.shape != b.shape:
        raise ValueError("spectra must have equal length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm spectrum")
    distance = float(np.linalg.norm(a / na - b / nb))
    am, bm = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(am * am) * np.sum(bm * bm))
    correlation = float(np.sum(am * bm) / denom) if denom > 0 else float("nan")
    return distance, correlation
