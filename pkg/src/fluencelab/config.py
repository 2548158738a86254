"""Run configuration: JSON schema, validation, and object construction.

Config files use literature units (coefficients in cm^-1, angles in
degrees, positions in mm); conversion to the internal mm^-1 convention
happens here, at ingestion.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigurationError, DataFormatError
from .estimation import SearchConfig
from .geometry import (
    OpticalMedium,
    ProbeGeometry,
    WavelengthGrid,
    brain_scattering,
    default_probe,
    default_wavelength_grid,
    per_cm_to_per_mm,
)
from .montecarlo import McConfig, VoxelGrid
from .synthesis import ChromophoreSpectrum, PixelGrid, Target

__all__ = [
    "CONFIG_SCHEMA",
    "load_config",
    "config_hash",
    "build_geometry",
    "build_wavelengths",
    "build_medium",
    "build_pixel_grid",
    "build_chromophores",
    "read_spectrum_csv",
    "build_targets",
    "build_search",
    "build_mc_config",
]

_NUM = {"type": "number"}
_NUM_ARRAY = {"type": "array", "items": _NUM, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fiber_y_mm": _NUM,
                "fiber_x_span_mm": _NUM,
                "tilt_deg": _NUM,
                "n_medium": _NUM,
                "n_coupling": _NUM,
            },
        },
        "wavelengths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "wavelengths_nm": _NUM_ARRAY,
                "control_index": {"type": ["integer", "null"]},
            },
        },
        "medium": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu_a_cm": {"oneOf": [_NUM, _NUM_ARRAY]},
                "mu_s_cm": _NUM_ARRAY,
                "scattering_law": {"type": "string", "enum": ["brain"]},
                "g": _NUM,
                "n": _NUM,
            },
        },
        "pixel_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x0_mm": _NUM,
                "z0_mm": _NUM,
                "dx_mm": _NUM,
                "dz_mm": _NUM,
                "nx": {"type": "integer"},
                "nz": {"type": "integer"},
            },
        },
        "chromophores": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"type": "string"},
                    "alpha_cm": _NUM_ARRAY,
                    "csv": {"type": "string"},
                },
            },
        },
        "targets": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["x_mm", "z_mm"],
                "properties": {
                    "x_mm": _NUM,
                    "z_mm": _NUM,
                    "concentrations": {
                        "type": "object",
                        "additionalProperties": _NUM,
                    },
                    "footprint_half_width": {"type": "integer", "minimum": 0},
                },
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "snr_db": {"type": ["number", "null"]},
                "seed": {"type": "integer"},
                "noise_mean": _NUM,
            },
        },
        "estimation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"type": "integer", "enum": [1, 2]},
                "mu_eff_bounds_cm": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "mu_s_bounds_cm": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "grid_points": {"type": "integer", "minimum": 2},
                "tau": {"type": ["number", "null"]},
                "tau_percentile": _NUM,
                "smoothing": {"type": "boolean"},
                "per_wavelength_weights": {"type": "boolean"},
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "photons": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "g": _NUM,
                "source_mm": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "tilt_deg": _NUM,
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "origin_mm": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                        "spacing_mm": _NUM,
                        "dims": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
                    },
                },
                "mu_a_cm": _NUM,
                "mu_s_sweep_cm": _NUM_ARRAY,
                "mu_a_sweep_cm": _NUM_ARRAY,
                "mu_s_error_sweep_cm": _NUM_ARRAY,
                "mu_s_zmax_sweep_cm": _NUM_ARRAY,
                "fiber_y_sweep_mm": _NUM_ARRAY,
                "n_ambient": _NUM,
                "n_transducer": _NUM,
                "domain_mm": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
            },
        },
        "fluence_eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "wavelength_index": {"type": "integer", "minimum": 0},
                "fiber_y_mm": _NUM,
                "z_min_mm": _NUM,
                "z_max_mm": _NUM,
                "n_points": {"type": "integer", "minimum": 2},
                "photons": {"type": "integer", "minimum": 0},
            },
        },
        "correct": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "targets": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["x_mm", "z_mm"],
                        "properties": {
                            "x_mm": _NUM,
                            "z_mm": _NUM,
                            "footprint_half_width": {"type": "integer", "minimum": 0},
                        },
                    },
                }
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


def load_config(path) -> dict:
    """Load and schema-validate a JSON config document."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"config schema violation: {exc.message}") from exc
    return doc


def config_hash(doc: dict) -> str:
    """Stable hash of the config document, recorded for provenance."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_geometry(doc: dict) -> ProbeGeometry:
    g = doc.get("geometry", {})
    return default_probe(
        y_abs_mm=g.get("fiber_y_mm", 5.68),
        x_span_mm=g.get("fiber_x_span_mm", 6.35),
        tilt_deg=g.get("tilt_deg", 35.0),
        n_medium=g.get("n_medium", 1.33),
        n_coupling=g.get("n_coupling", 1.49),
    )


def build_wavelengths(doc: dict) -> WavelengthGrid:
    w = doc.get("wavelengths")
    if w is None:
        return default_wavelength_grid()
    if "wavelengths_nm" not in w:
        return default_wavelength_grid()
    return WavelengthGrid(np.asarray(w["wavelengths_nm"], float), w.get("control_index", 0))


def build_medium(doc: dict, wavelengths: WavelengthGrid) -> OpticalMedium:
    m = doc.get("medium", {})
    lam = wavelengths.analysis_nm
    n_wl = lam.size
    mu_a_cm = m.get("mu_a_cm", 0.03)
    mu_a = per_cm_to_per_mm(np.full(n_wl, mu_a_cm) if np.isscalar(mu_a_cm) else mu_a_cm)
    if "mu_s_cm" in m:
        mu_s = per_cm_to_per_mm(m["mu_s_cm"])
    elif m.get("scattering_law") == "brain":
        mu_s = brain_scattering(lam)
    else:
        mu_s = brain_scattering(lam)  # default medium follows the brain law
    mu_s = np.atleast_1d(mu_s)
    if mu_a.size != n_wl or mu_s.size != n_wl:
        raise ConfigurationError(
            f"medium arrays must have {n_wl} entries to match the analysis wavelengths"
        )
    return OpticalMedium(mu_a=mu_a, mu_s_reduced=mu_s, g=m.get("g", 0.9), n=m.get("n", 1.33))


def build_pixel_grid(doc: dict) -> PixelGrid:
    return PixelGrid(**doc.get("pixel_grid", {}))


def read_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise DataFormatError(f"cannot read spectrum CSV {path}: {exc}") from exc
    names = data.dtype.names
    if names is None or len(names) < 2:
        raise DataFormatError(f"spectrum CSV {path} must have two named columns")
    return np.atleast_1d(data[names[0]]), np.atleast_1d(data[names[1]])


def build_chromophores(doc: dict, wavelengths: WavelengthGrid,
                       base_dir: Path | None = None) -> list[ChromophoreSpectrum]:
    lam = wavelengths.analysis_nm
    out = []
    for spec in doc.get("chromophores", []):
        if "alpha_cm" in spec:
            alpha = per_cm_to_per_mm(spec["alpha_cm"])
            if alpha.size != lam.size:
                raise ConfigurationError(
                    f"chromophore '{spec['name']}' needs {lam.size} alpha values"
                )
        elif "csv" in spec:
            csv_path = Path(spec["csv"])
            if base_dir is not None and not csv_path.is_absolute():
                csv_path = base_dir / csv_path
            lam_csv, alpha_csv = read_spectrum_csv(csv_path)
            alpha = per_cm_to_per_mm(np.interp(lam, lam_csv, alpha_csv))
        else:
            raise ConfigurationError(
                f"chromophore '{spec['name']}' needs either alpha_cm or csv"
            )
        out.append(ChromophoreSpectrum(name=spec["name"], alpha=alpha))
    return out


def build_targets(doc: dict) -> list[Target]:
    targets = []
    for t in doc.get("targets", []):
        targets.append(
            Target(
                x_mm=t["x_mm"],
                z_mm=t["z_mm"],
                concentrations=dict(t.get("concentrations", {})),
                footprint_half_width=t.get("footprint_half_width", 1),
            )
        )
    if not targets:
        raise ConfigurationError("config declares no targets")
    return targets


def build_search(doc: dict) -> tuple[SearchConfig, dict]:
    """Search configuration plus pipeline options (model, tau, smoothing)."""
    e = doc.get("estimation", {})
    mu_eff_bounds = tuple(per_cm_to_per_mm(e.get("mu_eff_bounds_cm", [0.1, 5.0])))
    mu_s_bounds = tuple(per_cm_to_per_mm(e.get("mu_s_bounds_cm", [1.0, 50.0])))
    search = SearchConfig(
        mu_eff_bounds=mu_eff_bounds,
        mu_s_bounds=mu_s_bounds,
        grid_points=e.get("grid_points", 40),
        per_wavelength_weights=e.get("per_wavelength_weights", False),
    )
    options = {
        "model": e.get("model", 1),
        "tau": e.get("tau"),
        "percentile": e.get("tau_percentile", 90.0),
        "smooth": e.get("smoothing", True),
    }
    return search, options


def build_mc_config(doc: dict, mu_s_cm: float | None = None, mu_a_cm: float | None = None,
                    source_mm=None, seed: int | None = None) -> McConfig:
    """Monte Carlo config from the ``mc`` section with optional overrides."""
    m = doc.get("mc", {})
    grid_doc = m.get("grid", {})
    grid = VoxelGrid(
        origin=tuple(grid_doc.get("origin_mm", (-25.0, -25.0, 0.0))),
        spacing=grid_doc.get("spacing_mm", 0.2),
        dims=tuple(grid_doc.get("dims", (250, 250, 200))),
    )
    domain = m.get("domain_mm", (25.0, 25.0, 50.0))
    if mu_a_cm is None:
        mu_a_cm = m.get("mu_a_cm", 0.03)
    if mu_s_cm is None:
        sweep = m.get("mu_s_sweep_cm", [10.0])
        mu_s_cm = sweep[0]
    g = m.get("g", 0.9)
    mu_s_reduced = float(per_cm_to_per_mm(mu_s_cm))
    return McConfig(
        photons=m.get("photons", 2_000_000),
        mu_a=float(per_cm_to_per_mm(mu_a_cm)),
        mu_s=mu_s_reduced / (1.0 - g),
        g=g,
        n_medium=doc.get("geometry", {}).get("n_medium", 1.33),
        source_mm=tuple(source_mm if source_mm is not None else m.get("source_mm", (0.0, 5.70, 0.0))),
        tilt_deg=m.get("tilt_deg", doc.get("geometry", {}).get("tilt_deg", 35.0)),
        grid=grid,
        seed=seed if seed is not None else m.get("seed", 0),
        n_ambient=m.get("n_ambient", 1.0),
        n_transducer=m.get("n_transducer", doc.get("geometry", {}).get("n_coupling", 1.49)),
        domain_half_x=domain[0],
        domain_half_y=domain[1],
        domain_depth=domain[2],
    )
