"""On-disk formats: tensor datasets, fluence fields, and CSV tables.

A tensor dataset is a directory holding ``meta.json`` (dims, wavelengths,
pixel grid, control index, endianness tag) and ``data.f32`` (little-endian
32-bit floats, wavelength-major, then fiber, then pixel row-major in
(z, x)).  A fluence field is a single binary file: one JSON header line
followed by little-endian 32-bit floats in x-fastest order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .estimation import EstimationResult, MeasurementTensor
from .geometry import WavelengthGrid
from .montecarlo import FluenceField, VoxelGrid
from .synthesis import PixelGrid

__all__ = [
    "write_tensor",
    "read_tensor",
    "write_fluence_field",
    "read_fluence_field",
    "write_estimation_json",
    "read_estimation_json",
    "write_csv",
]

META_NAME = "meta.json"
DATA_NAME = "data.f32"
FLOAT_FORMAT = "%.9g"


def write_tensor(directory, tensor: MeasurementTensor, grid: PixelGrid) -> Path:
    """Write a tensor dataset (meta.json + data.f32) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    j, k, n = tensor.values.shape
    if n != grid.n_pixels:
        raise ValueError("pixel grid does not match tensor pixel count")
    meta = {
        "dims": [j, k, n],
        "wavelengths_nm": [float(w) for w in tensor.wavelengths.wavelengths_nm],
        "control_index": tensor.wavelengths.control_index,
        "pixel_grid": {
            "x0_mm": grid.x0_mm,
            "z0_mm": grid.z0_mm,
            "dx_mm": grid.dx_mm,
            "dz_mm": grid.dz_mm,
            "nx": grid.nx,
            "nz": grid.nz,
        },
        "endianness": "little",
    }
    (directory / META_NAME).write_text(json.dumps(meta, indent=2) + "\n")
    (directory / DATA_NAME).write_bytes(
        np.ascontiguousarray(tensor.values, dtype="<f4").tobytes()
    )
    return directory


def read_tensor(directory) -> tuple[MeasurementTensor, PixelGrid]:
    """Read a tensor dataset; raises DataFormatError on malformed files."""
    directory = Path(directory)
    meta_path = directory / META_NAME
    data_path = directory / DATA_NAME
    if not meta_path.exists() or not data_path.exists():
        raise DataFormatError(f"tensor dataset incomplete under {directory}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed {META_NAME}: {exc}") from exc
    try:
        j, k, n = (int(v) for v in meta["dims"])
        grid = PixelGrid(**meta["pixel_grid"])
        wavelengths = WavelengthGrid(
            np.asarray(meta["wavelengths_nm"], dtype=float),
            control_index=meta["control_index"],
        )
        if meta.get("endianness") != "little":
            raise DataFormatError(f"unsupported endianness tag: {meta.get('endianness')!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid {META_NAME}: {exc}") from exc
    if grid.n_pixels != n:
        raise DataFormatError("pixel grid inconsistent with dims")
    raw = data_path.read_bytes()
    expected = 4 * j * k * n
    if len(raw) != expected:
        raise DataFormatError(
            f"{DATA_NAME} has {len(raw)} bytes, expected {expected} for dims {j}x{k}x{n}"
        )
    values = np.frombuffer(raw, dtype="<f4").astype(float).reshape(j, k, n)
    tensor = MeasurementTensor(values=values, pixel_coords=grid.coords(), wavelengths=wavelengths)
    return tensor, grid


def write_fluence_field(path, field: FluenceField) -> Path:
    """Write a fluence field: JSON header line + f32 voxels, x fastest."""
    path = Path(path)
    header = {
        "dims": list(field.grid.dims),
        "spacing": field.grid.spacing,
        "origin": list(field.grid.origin),
        "photons": field.photons,
        "seed": field.seed,
    }
    with path.open("wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("ascii"))
        fh.write(np.asarray(field.values, dtype="<f4").ravel(order="F").tobytes())
    return path


def read_fluence_field(path) -> FluenceField:
    """Read a fluence field file written by :func:`write_fluence_field`."""
    path = Path(path)
    with path.open("rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("ascii"))
            dims = tuple(int(v) for v in header["dims"])
            grid = VoxelGrid(
                origin=tuple(float(v) for v in header["origin"]),
                spacing=float(header["spacing"]),
                dims=dims,
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed fluence field header: {exc}") from exc
        raw = fh.read()
    expected = 4 * int(np.prod(dims))
    if len(raw) != expected:
        raise DataFormatError(f"fluence field has {len(raw)} data bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f4").astype(float).reshape(dims, order="F")
    return FluenceField(
        grid=grid,
        values=values,
        photons=int(header.get("photons", 0)),
        seed=int(header.get("seed", 0)),
    )


def write_estimation_json(path, result: EstimationResult) -> Path:
    """Serialize an estimation result (internal mm^-1 units, suffixed keys)."""
    path = Path(path)
    doc = {
        "model": result.model,
        "wavelengths_nm": result.wavelengths_nm.tolist(),
        "mu_eff_mm": result.mu_eff.tolist(),
        "mu_s_reduced_mm": None if result.mu_s_reduced is None else result.mu_s_reduced.tolist(),
        "mu_eff_smooth_mm": None if result.mu_eff_smooth is None else result.mu_eff_smooth.tolist(),
        "mu_s_smooth_mm": None if result.mu_s_smooth is None else result.mu_s_smooth.tolist(),
        "residual": result.residual.tolist(),
        "at_bound": result.at_bound.astype(bool).tolist(),
        "support_indices": None if result.support is None else result.support.indices.tolist(),
        "support_weights": None if result.support is None else result.support.weights.tolist(),
        "tau": None if result.support is None else result.support.tau,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def read_estimation_json(path) -> EstimationResult:
    """Load an estimation result written by :func:`write_estimation_json`."""
    from .estimation import SupportSelection

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        support = None
        if doc.get("support_indices") is not None:
            support = SupportSelection(
                indices=np.asarray(doc["support_indices"], dtype=int),
                weights=np.asarray(doc["support_weights"], dtype=float),
                tau=doc["tau"],
            )
        def _opt(key):
            return None if doc.get(key) is None else np.asarray(doc[key], dtype=float)

        return EstimationResult(
            model=int(doc["model"]),
            wavelengths_nm=np.asarray(doc["wavelengths_nm"], dtype=float),
            mu_eff=np.asarray(doc["mu_eff_mm"], dtype=float),
            mu_s_reduced=_opt("mu_s_reduced_mm"),
            residual=np.asarray(doc["residual"], dtype=float),
            at_bound=np.asarray(doc["at_bound"], dtype=bool),
            support=support,
            mu_eff_smooth=_opt("mu_eff_smooth_mm"),
            mu_s_smooth=_opt("mu_s_smooth_mm"),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid estimation result file {path}: {exc}") from exc


def write_csv(path, columns: dict) -> Path:
    """Write named columns as CSV with 9-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns.keys())
    arrays = [np.atleast_1d(np.asarray(columns[n])) for n in names]
    length = arrays[0].size
    if any(a.size != length for a in arrays):
        raise ValueError("all CSV columns must have equal length")
    lines = [",".join(names)]
    for i in range(length):
        cells = []
        for a in arrays:
            v = a[i]
            if isinstance(v, (np.floating, float)):
                cells.append(FLOAT_FORMAT % v)
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path
