"""Optical-parameter estimation from multi-fiber PA measurements.

Pipeline: estimate the per-fiber noise bias from the zero-power control
frame, subtract it, select high-signal support pixels, normalize each
pixel's fiber profile to unit sum, then fit (mu_eff, mu_s') per wavelength
by weighted nonlinear least squares against the fiber-normalized model
fluence.  Model I searches two parameters; Model II searches mu_eff only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, NumericError
from .fluence import model1_fiber_fluence, model2_fiber_fluence
from .geometry import N_FIBERS, ProbeGeometry, WavelengthGrid

__all__ = [
    "MeasurementTensor",
    "SupportSelection",
    "NormalizedMeasurements",
    "SearchConfig",
    "EstimationResult",
    "estimate_noise_bias",
    "debias",
    "select_support",
    "normalize",
    "fit_parameters",
    "smooth_spectra",
    "estimate_parameters",
    "predict_fluence",
    "snr_db",
    "noise_sigma_for_snr",
    "fluence_correlation",
]


@dataclass(frozen=True)
class MeasurementTensor:
    """Enveloped PA magnitudes y[j][k][i]: wavelength x fiber x pixel.

    ``pixel_coords`` holds (x, z) in mm for each pixel of the image plane
    y = 0.  The wavelength axis includes the control frame when
    ``wavelengths.control_index`` is set.
    """

    values: np.ndarray
    pixel_coords: np.ndarray
    wavelengths: WavelengthGrid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        coords = np.asarray(self.pixel_coords, dtype=float)
        if values.ndim != 3:
            raise ValueError("values must be (wavelength, fiber, pixel)")
        if values.shape[1] != N_FIBERS:
            raise ValueError(f"expected {N_FIBERS} fibers, got {values.shape[1]}")
        if values.shape[0] != self.wavelengths.n_total:
            raise ValueError("wavelength axis does not match the wavelength grid")
        if coords.shape != (values.shape[2], 2):
            raise ValueError("pixel_coords must be (n_pixels, 2)")
        if not np.all(np.isfinite(values)):
            raise ValueError("measurement values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pixel_coords", coords)

    @property
    def n_pixels(self) -> int:
        return int(self.values.shape[2])


def estimate_noise_bias(tensor: MeasurementTensor) -> np.ndarray:
    """Per-fiber noise bias b_k: pixel mean of the zero-power control frame."""
    ctrl = tensor.wavelengths.control_index
    if ctrl is None:
        raise ConfigurationError(
            "tensor has no control frame; supply an explicit bias vector to debias()"
        )
    return tensor.values[ctrl].mean(axis=1)


def debias(tensor: MeasurementTensor, bias: np.ndarray) -> MeasurementTensor:
    """Subtract the per-fiber bias from the data frames and drop the control."""
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (N_FIBERS,):
        raise ValueError(f"bias must have length {N_FIBERS}")
    idx = tensor.wavelengths.analysis_indices
    values = tensor.values[idx] - bias[None, :, None]
    return MeasurementTensor(
        values=values,
        pixel_coords=tensor.pixel_coords,
        wavelengths=tensor.wavelengths.drop_control(),
    )


@dataclass(frozen=True)
class SupportSelection:
    """Support pixel indices, their weights, and the threshold that made them."""

    indices: np.ndarray
    weights: np.ndarray
    tau: float


def select_support(
    tensor: MeasurementTensor,
    tau: float | None = None,
    percentile: float = 90.0,
) -> SupportSelection:
    """Select support pixels where the (j, k)-summed signal exceeds tau.

    When ``tau`` is None it is set to the given percentile of the summed
    image.  Pixel weights are the summed signal itself, so positions with
    higher SNR contribute more to the fit.
    """
    summed = tensor.values.sum(axis=(0, 1))
    if tau is None:
        tau = float(np.percentile(summed, percentile))
    indices = np.nonzero(summed > tau)[0]
    if indices.size == 0:
        suggestion = float(np.percentile(summed, 90.0))
        raise ConfigurationError(
            f"support threshold tau={tau} leaves no pixels; try tau <= {suggestion:.6g}"
        )
    return SupportSelection(indices=indices, weights=summed[indices], tau=float(tau))


@dataclass(frozen=True)
class NormalizedMeasurements:
    """Fiber-normalized measurements on the support, ready for fitting."""

    values: np.ndarray  # (J, K, M), each (j, i) fiber profile sums to 1
    pixel_coords: np.ndarray  # (M, 2)
    weights: np.ndarray  # (M,) summed over wavelengths and fibers
    fiber_sums: np.ndarray  # (J, M) per-wavelength fiber sums of the input
    wavelengths: WavelengthGrid


def normalize(tensor: MeasurementTensor, support: SupportSelection) -> NormalizedMeasurements:
    """Normalize each pixel's fiber profile to unit sum (per wavelength).

    Pixels whose fiber sum is not strictly positive at some wavelength are
    dropped with a warning: the normalization is undefined there.
    """
    vals = tensor.values[:, :, support.indices]  # (J, K, M)
    sums = vals.sum(axis=1)  # (J, M)
    good = np.all(sums > 0.0, axis=0)
    if not good.all():
        warnings.warn(
            f"dropping {int((~good).sum())} support pixel(s) with nonpositive fiber sum",
            stacklevel=2,
        )
    if not good.any():
        raise NumericError("all support pixels have nonpositive fiber sums")
    vals = vals[:, :, good]
    sums = sums[:, good]
    return NormalizedMeasurements(
        values=vals / sums[:, None, :],
        pixel_coords=tensor.pixel_coords[support.indices[good]],
        weights=support.weights[good],
        fiber_sums=sums,
        wavelengths=tensor.wavelengths,
    )


@dataclass(frozen=True)
class SearchConfig:
    """Two-stage search: coarse log grid, then Nelder-Mead refinement."""

    mu_eff_bounds: tuple[float, float] = (0.01, 0.5)
    mu_s_bounds: tuple[float, float] = (0.1, 5.0)
    grid_points: int = 40
    rel_tol: float = 1e-6
    max_iter: int = 500
    per_wavelength_weights: bool = False
    bound_flag_rtol: float = 1e-3


@dataclass
class EstimationResult:
    """Per-wavelength parameter estimates with fit diagnostics."""

    model: int
    wavelengths_nm: np.ndarray
    mu_eff: np.ndarray
    mu_s_reduced: np.ndarray | None
    residual: np.ndarray
    at_bound: np.ndarray
    support: SupportSelection | None = None
    beta: np.ndarray | None = None  # (J, M) post-hoc pixel amplitudes
    mu_eff_smooth: np.ndarray | None = None
    mu_s_smooth: np.ndarray | None = None


def _normalized_model(pixels, geometry, model, mu_eff, mu_s):
    if model == 1:
        phi = model1_fiber_fluence(pixels, geometry, mu_eff, mu_s)
    else:
        phi = model2_fiber_fluence(pixels, geometry, mu_eff)
    return phi / phi.sum(axis=0, keepdims=True)


def _near_bound(value, bounds, rtol):
    lo, hi = bounds
    return value <= lo * (1 + rtol) or value >= hi * (1 - rtol)


def fit_parameters(
    norm: NormalizedMeasurements,
    geometry: ProbeGeometry,
    model: int = 1,
    search: SearchConfig | None = None,
) -> EstimationResult:
    """Weighted least-squares fit of the fiber-normalized fluence model.

    For each wavelength j, minimizes sum_i w_i sum_k |y~_{j,k,i} -
    Phi~_{j,k,i}|^2; Model I searches (mu_eff, mu_s'), Model II mu_eff
    only.  Estimates that land on a search bound are flagged.
    """
    if model not in (1, 2):
        raise ValueError("model must be 1 or 2")
    search = search or SearchConfig()
    n_wl = norm.values.shape[0]
    pixels = norm.pixel_coords

    mu_hat = np.zeros(n_wl)
    musp_hat = np.zeros(n_wl) if model == 1 else None
    residual = np.zeros(n_wl)
    at_bound = np.zeros(n_wl, dtype=bool)

    mu_grid = np.geomspace(*search.mu_eff_bounds, search.grid_points)
    musp_grid = np.geomspace(*search.mu_s_bounds, search.grid_points)

    for j in range(n_wl):
        data = norm.values[j]
        w = norm.fiber_sums[j] if search.per_wavelength_weights else norm.weights

        def objective(params):
            mu = params[0]
            if not search.mu_eff_bounds[0] <= mu <= search.mu_eff_bounds[1]:
                return np.inf
            if model == 1:
                musp = params[1]
                if not search.mu_s_bounds[0] <= musp <= search.mu_s_bounds[1]:
                    return np.inf
            else:
                musp = None
            resid = data - _normalized_model(pixels, geometry, model, mu, musp)
            return float(np.sum(w * np.sum(resid * resid, axis=0)))

        if model == 1:
            best_val, best_x = np.inf, None
            for mu in mu_grid:
                for musp in musp_grid:
                    val = objective((mu, musp))
                    if val < best_val:
                        best_val, best_x = val, (mu, musp)
            x0 = np.asarray(best_x)
        else:
            grid_vals = [objective((mu,)) for mu in mu_grid]
            best_val = float(np.min(grid_vals))
            x0 = np.asarray([mu_grid[int(np.argmin(grid_vals))]])

        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "fatol": max(best_val, 1e-300) * search.rel_tol,
                "xatol": 1e-7,
                "maxiter": search.max_iter,
                "maxfev": 4 * search.max_iter,
            },
        )
        x = res.x if res.fun <= best_val else x0
        mu_hat[j] = x[0]
        residual[j] = min(float(res.fun), best_val)
        flagged = _near_bound(x[0], search.mu_eff_bounds, search.bound_flag_rtol)
        if model == 1:
            musp_hat[j] = x[1]
            flagged |= _near_bound(x[1], search.mu_s_bounds, search.bound_flag_rtol)
        if flagged:
            warnings.warn(
                f"wavelength index {j}: estimate at search bound "
                f"(mu_eff={mu_hat[j]:.4g}"
                + (f", mu_s'={musp_hat[j]:.4g})" if model == 1 else ")"),
                stacklevel=2,
            )
        at_bound[j] = flagged

    result = EstimationResult(
        model=model,
        wavelengths_nm=np.asarray(norm.wavelengths.wavelengths_nm, dtype=float),
        mu_eff=mu_hat,
        mu_s_reduced=musp_hat,
        residual=residual,
        at_bound=at_bound,
    )
    result.beta = _post_hoc_beta(result, geometry, norm)
    return result


def _post_hoc_beta(result: EstimationResult, geometry: ProbeGeometry,
                   norm: NormalizedMeasurements) -> np.ndarray:
    """Pixel amplitudes sum_k y / sum_k Phi-hat, reported for diagnostics."""
    phi = predict_fluence(result, geometry, norm.pixel_coords)
    return norm.fiber_sums / phi.sum(axis=1)


def predict_fluence(result: EstimationResult, geometry: ProbeGeometry, pixels_xz) -> np.ndarray:
    """Unit-amplitude model fluence (J, K, M) at the fitted parameters."""
    pixels_xz = np.asarray(pixels_xz, dtype=float)
    out = np.empty((result.mu_eff.size, N_FIBERS, pixels_xz.shape[0]))
    for j in range(result.mu_eff.size):
        if result.model == 1:
            out[j] = model1_fiber_fluence(
                pixels_xz, geometry, result.mu_eff[j], result.mu_s_reduced[j]
            )
        else:
            out[j] = model2_fiber_fluence(pixels_xz, geometry, result.mu_eff[j])
    return out


def smooth_spectra(result: EstimationResult) -> EstimationResult:
    """Quadratic-in-wavelength least-squares smoothing of the estimates."""
    lam = result.wavelengths_nm
    if lam.size < 3:
        raise ValueError("smoothing requires at least 3 wavelengths")
    lam0 = lam - lam.mean()  # center for conditioning
    mu_smooth = np.polyval(np.polyfit(lam0, result.mu_eff, 2), lam0)
    musp_smooth = None
    if result.mu_s_reduced is not None:
        musp_smooth = np.polyval(np.polyfit(lam0, result.mu_s_reduced, 2), lam0)
    return replace(result, mu_eff_smooth=mu_smooth, mu_s_smooth=musp_smooth)


def estimate_parameters(
    tensor: MeasurementTensor,
    geometry: ProbeGeometry,
    model: int = 1,
    search: SearchConfig | None = None,
    tau: float | None = None,
    percentile: float = 90.0,
    bias: np.ndarray | None = None,
    smooth: bool = True,
) -> tuple[EstimationResult, NormalizedMeasurements]:
    """Full pipeline: debias, select support, normalize, fit, smooth."""
    if bias is None:
        bias = estimate_noise_bias(tensor)
    clean = debias(tensor, bias)
    support = select_support(clean, tau=tau, percentile=percentile)
    norm = normalize(clean, support)
    result = fit_parameters(norm, geometry, model=model, search=search)
    result.support = support
    if smooth:
        result = smooth_spectra(result)
    return result, norm


def snr_db(signal, sigma_n: float) -> float:
    """SNR in dB: 10 log10((mean_k p_k)^2 / sigma_n^2)."""
    if sigma_n < 0:
        raise ValueError("noise sigma must be nonnegative")
    if sigma_n == 0:
        raise NumericError("sigma_n = 0 gives infinite SNR")
    mean_p = float(np.mean(np.asarray(signal, dtype=float)))
    return float(10.0 * np.log10((mean_p / sigma_n) ** 2))


def noise_sigma_for_snr(signal, target_snr_db: float) -> float:
    """Noise sigma that makes ``signal`` sit at the requested SNR."""
    mean_p = float(np.mean(np.asarray(signal, dtype=float)))
    if mean_p <= 0:
        raise ValueError("mean signal must be positive to set an SNR")
    return mean_p / 10.0 ** (target_snr_db / 20.0)


def _fiber_profile(arr, fiber_axis):
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        return a
    other = tuple(ax for ax in range(a.ndim) if ax != fiber_axis % a.ndim)
    return a.sum(axis=other)


def fluence_correlation(phi_hat, phi, fiber_axis: int = 1) -> float:
    """Correlation of fiber-summed, mean-removed fluence profiles.

    Inputs are either per-fiber profiles (K,) or arrays with a fiber axis
    (default axis 1, as in (J, K, M) tensors); all other axes are summed
    before mean removal.
    """
    a = _fiber_profile(phi_hat, fiber_axis)
    b = _fiber_profile(phi, fiber_axis)
    if a.shape != b.shape:
        raise ValueError("fiber profiles must have matching length")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denom == 0.0:
        raise NumericError("zero-variance fiber profile: correlation undefined")
    return float(np.sum(a * b) / denom)
