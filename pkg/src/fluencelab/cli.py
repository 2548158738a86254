"""Command-line front end.

Subcommands: ``synth``, ``estimate``, ``validate``, ``correct``,
``fluence eval``, and ``plotdata``.  All numeric outputs are CSV (floats at
9 significant digits) or the binary tensor/field formats; every command is
deterministic given its config and seeds.

Exit codes: 0 ok, 1 configuration error, 2 I/O or data-format error,
3 numeric failure (including estimates flagged at a search bound).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from . import config as cfgmod
from . import io as iomod
from .boundary import BoundaryCondition
from .errors import ConfigurationError, DataFormatError, NumericError
from .estimation import estimate_noise_bias, debias, estimate_parameters, predict_fluence
from .fluence import (
    FluenceParams,
    axial_fluence_peak,
    axial_line_model1,
    axial_line_model2,
    fractional_model_error,
)
from .geometry import diffusion_coefficient, mu_eff as mu_eff_of, per_cm_to_per_mm, per_mm_to_per_cm, transport_mfp
from .montecarlo import AxialLine, compare_to_model, simulate
from .synthesis import corrected_spectrum, synthesize, uncorrected_spectrum

PROG = "fluencelab"


def _resolve_threads(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("FLUENCELAB_THREADS", "1"))
    if value == 0:
        value = os.cpu_count() or 1
    return max(1, value)


def _write_provenance(out_dir: Path, command: str, doc: dict, seeds: dict) -> None:
    record = {"command": command, "config_sha256": cfgmod.config_hash(doc), **seeds}
    (out_dir / f"provenance_{command}.json").write_text(json.dumps(record, indent=2) + "\n")


def _model1_params(mu_s_cm: float, mu_a_cm: float, n_rel: float) -> FluenceParams:
    musp = float(per_cm_to_per_mm(mu_s_cm))
    mua = float(per_cm_to_per_mm(mu_a_cm))
    bc = BoundaryCondition.for_medium(diffusion_coefficient(musp), n_rel)
    return FluenceParams(mu_eff=mu_eff_of(mua, musp), boundary=bc, mu_s_reduced=musp)


def cmd_synth(args) -> int:
    doc = cfgmod.load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    geometry = cfgmod.build_geometry(doc)
    wavelengths = cfgmod.build_wavelengths(doc)
    medium = cfgmod.build_medium(doc, wavelengths)
    pixel_grid = cfgmod.build_pixel_grid(doc)
    chromophores = cfgmod.build_chromophores(doc, wavelengths, base_dir=Path(args.config).parent)
    targets = cfgmod.build_targets(doc)
    noise = doc.get("noise", {})
    seed = args.seed if args.seed is not None else noise.get("seed", 0)
    _, options = cfgmod.build_search(doc)
    model = args.model if args.model is not None else options["model"]

    tensor = synthesize(
        geometry,
        medium,
        targets,
        chromophores,
        pixel_grid,
        wavelengths,
        model=model,
        snr_db=noise.get("snr_db", 50.0),
        seed=seed,
        noise_mean=noise.get("noise_mean", 0.0),
    )
    iomod.write_tensor(out_dir / "tensor", tensor, pixel_grid)
    _write_provenance(out_dir, "synth", doc, {"seed": seed, "model": model})
    print(f"wrote tensor dataset to {out_dir / 'tensor'}")
    return 0


def cmd_estimate(args) -> int:
    doc = cfgmod.load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensor, _ = iomod.read_tensor(args.tensor)
    geometry = cfgmod.build_geometry(doc)
    search, options = cfgmod.build_search(doc)
    model = args.model if args.model is not None else options["model"]

    result, _ = estimate_parameters(
        tensor,
        geometry,
        model=model,
        search=search,
        tau=options["tau"],
        percentile=options["percentile"],
        smooth=options["smooth"],
    )
    iomod.write_estimation_json(out_dir / "estimates.json", result)
    columns = {
        "lambda_nm": result.wavelengths_nm,
        "mu_eff_hat_cm": per_mm_to_per_cm(result.mu_eff),
        "mu_s_hat_cm": (
            np.full_like(result.mu_eff, np.nan)
            if result.mu_s_reduced is None
            else per_mm_to_per_cm(result.mu_s_reduced)
        ),
        "mu_eff_smooth_cm": (
            np.full_like(result.mu_eff, np.nan)
            if result.mu_eff_smooth is None
            else per_mm_to_per_cm(result.mu_eff_smooth)
        ),
        "mu_s_smooth_cm": (
            np.full_like(result.mu_eff, np.nan)
            if result.mu_s_smooth is None
            else per_mm_to_per_cm(result.mu_s_smooth)
        ),
        "residual": result.residual,
        "at_bound": result.at_bound.astype(int),
    }
    iomod.write_csv(out_dir / "spectra.csv", columns)
    _write_provenance(out_dir, "estimate", doc, {"model": model})
    print(f"wrote estimates to {out_dir}")
    if bool(result.at_bound.any()):
        print("warning: at least one wavelength flagged at a search bound", file=sys.stderr)
        return 3
    return 0


def cmd_validate(args) -> int:
    doc = cfgmod.load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = _resolve_threads(args.threads)
    mc_doc = doc.get("mc", {})
    geometry_doc = doc.get("geometry", {})
    n_rel = geometry_doc.get("n_medium", 1.33) / geometry_doc.get("n_coupling", 1.49)
    mu_a_cm = mc_doc.get("mu_a_cm", 0.03)
    base_seed = args.seed if args.seed is not None else mc_doc.get("seed", 0)
    photons_override = args.photons

    # (i) axial profiles: MC vs Model I vs Model II
    def profile_run(mu_s_cm: float, fiber_y: float, seed: int, tag: str):
        mc_cfg = cfgmod.build_mc_config(
            doc, mu_s_cm=mu_s_cm, mu_a_cm=mu_a_cm, source_mm=(0.0, fiber_y, 0.0), seed=seed
        )
        if photons_override:
            mc_cfg = replace(mc_cfg, photons=photons_override)
        field = simulate(mc_cfg, threads=threads)
        params = _model1_params(mu_s_cm, mu_a_cm, n_rel)
        z_hi = mc_cfg.grid.origin[2] + mc_cfg.grid.dims[2] * mc_cfg.grid.spacing
        line = AxialLine(z_min_mm=mc_cfg.grid.spacing, z_max_mm=z_hi, radius_mm=0.5)
        cmp1 = compare_to_model(
            field, lambda z: axial_line_model1(z, params, fiber_y), line
        )
        cmp2 = compare_to_model(
            field, lambda z: axial_line_model2(z, params.mu_eff, fiber_y), line
        )
        iomod.write_csv(
            out_dir / f"profile_{tag}.csv",
            {
                "z_mm": cmp1.z_mm,
                "mc": cmp1.field_values,
                "model1_matched": cmp1.model_values,
                "model2_matched": cmp2.model_values,
            },
        )
        if args.format == "bin":
            iomod.write_fluence_field(out_dir / f"field_{tag}.field", field)

    mu_s_sweep = mc_doc.get("mu_s_sweep_cm", [2.0, 5.0, 10.0])
    for i, mu_s_cm in enumerate(mu_s_sweep):
        profile_run(mu_s_cm, 5.70, base_seed + i, f"musp{mu_s_cm:g}cm")
    y_sweep = mc_doc.get("fiber_y_sweep_mm", [2.85, 5.70, 11.40])
    for i, fiber_y in enumerate(y_sweep):
        profile_run(10.0, fiber_y, base_seed + 100 + i, f"y{fiber_y:g}mm")

    # (ii) fractional error of Model II vs Model I over z / l_t
    err_sweep = mc_doc.get("mu_s_error_sweep_cm", [5.0, 10.0, 20.0, 30.0])
    z_over_lt = np.linspace(1.0, 40.0, 200)
    err_cols = {"z_over_lt": z_over_lt}
    for mu_s_cm in err_sweep:
        params = _model1_params(mu_s_cm, mu_a_cm, n_rel)
        lt = transport_mfp(params.mu_s_reduced)
        err_cols[f"err_pct_musp{mu_s_cm:g}cm"] = fractional_model_error(z_over_lt * lt, params)
    iomod.write_csv(out_dir / "fractional_error_mu_s.csv", err_cols)

    mu_a_sweep = mc_doc.get("mu_a_sweep_cm", [0.01, 0.02, 0.03, 0.04, 0.05])
    err_cols = {"z_over_lt": z_over_lt}
    for a_cm in mu_a_sweep:
        params = _model1_params(10.0, a_cm, n_rel)
        lt = transport_mfp(params.mu_s_reduced)
        err_cols[f"err_pct_mua{a_cm:g}cm"] = fractional_model_error(z_over_lt * lt, params)
    iomod.write_csv(out_dir / "fractional_error_mu_a.csv", err_cols)

    # (iii) z_max versus fiber elevation
    zmax_sweep = mc_doc.get("mu_s_zmax_sweep_cm", [5.0, 10.0, 15.0, 20.0])
    zmax_cols = {"fiber_y_mm": np.asarray(y_sweep, dtype=float)}
    for mu_s_cm in zmax_sweep:
        params = _model1_params(mu_s_cm, mu_a_cm, n_rel)
        zmax_cols[f"zmax_mm_musp{mu_s_cm:g}cm"] = np.array(
            [axial_fluence_peak(y, params) for y in y_sweep]
        )
    iomod.write_csv(out_dir / "zmax_vs_y.csv", zmax_cols)

    _write_provenance(out_dir, "validate", doc, {"seed": base_seed, "threads": threads})
    print(f"wrote validation tables to {out_dir}")
    return 0


def cmd_correct(args) -> int:
    doc = cfgmod.load_config(args.config) if args.config else {}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensor, pixel_grid = iomod.read_tensor(args.tensor)
    result = iomod.read_estimation_json(args.estimates)
    if not Path(args.reference).exists():
        raise DataFormatError(f"reference spectrum not found: {args.reference}")
    lam_ref, alpha_ref = cfgmod.read_spectrum_csv(args.reference)

    geometry = cfgmod.build_geometry(doc)
    clean = debias(tensor, estimate_noise_bias(tensor))
    a_ref = np.interp(result.wavelengths_nm, lam_ref, alpha_ref)

    correct_doc = doc.get("correct", {})
    if correct_doc.get("targets"):
        footprints = [
            pixel_grid.footprint_indices(t["x_mm"], t["z_mm"], t.get("footprint_half_width", 1))
            for t in correct_doc["targets"]
        ]
    elif result.support is not None:
        footprints = [result.support.indices]
    else:
        raise ConfigurationError("no correction footprint: provide correct.targets or estimates with support")

    for idx, foot in enumerate(footprints):
        d = uncorrected_spectrum(clean, foot)
        phi_hat = predict_fluence(result, geometry, clean.pixel_coords[foot])
        c = corrected_spectrum(clean, phi_hat, foot)

        def unit(v):
            n = np.linalg.norm(v)
            return v / n if n > 0 else v

        iomod.write_csv(
            out_dir / f"correct_target{idx}.csv",
            {
                "lambda_nm": result.wavelengths_nm,
                "a_ref": unit(a_ref),
                "d_uncorrected": unit(d.values),
                "c_corrected": unit(c.values),
            },
        )
    _write_provenance(out_dir, "correct", doc, {"targets": len(footprints)})
    print(f"wrote corrected spectra to {out_dir}")
    return 0


def cmd_fluence_eval(args) -> int:
    doc = cfgmod.load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fe = doc.get("fluence_eval", {})
    wavelengths = cfgmod.build_wavelengths(doc)
    medium = cfgmod.build_medium(doc, wavelengths)
    j = fe.get("wavelength_index", 0)
    if j >= medium.n_wavelengths:
        raise ConfigurationError("fluence_eval.wavelength_index out of range")
    geometry_doc = doc.get("geometry", {})
    n_rel = geometry_doc.get("n_medium", 1.33) / geometry_doc.get("n_coupling", 1.49)
    fiber_y = fe.get("fiber_y_mm", 5.70)
    musp_cm = float(per_mm_to_per_cm(medium.mu_s_reduced[j]))
    mua_cm = float(per_mm_to_per_cm(medium.mu_a[j]))
    params = _model1_params(musp_cm, mua_cm, n_rel)
    z = np.linspace(fe.get("z_min_mm", 0.5), fe.get("z_max_mm", 30.0), fe.get("n_points", 200))

    m1 = axial_line_model1(z, params, fiber_y)
    err = fractional_model_error(z, params, fiber_y)
    m2 = m1 * (1.0 - err / 100.0)  # Model II at the tail-matched amplitude
    columns = {"z_mm": z, "model1": m1, "model2": m2}

    photons = args.photons if args.photons else fe.get("photons", 0)
    if photons:
        mc_cfg = cfgmod.build_mc_config(
            doc, mu_s_cm=musp_cm, mu_a_cm=mua_cm, source_mm=(0.0, fiber_y, 0.0), seed=args.seed or 0
        )
        mc_cfg = replace(mc_cfg, photons=photons)
        field = simulate(mc_cfg, threads=_resolve_threads(args.threads))
        line = AxialLine(z_min_mm=float(z[0]), z_max_mm=float(z[-1]), radius_mm=0.5)
        cmp1 = compare_to_model(field, lambda zz: axial_line_model1(zz, params, fiber_y), line)
        columns["mc_reference"] = np.interp(z, cmp1.z_mm, cmp1.field_values / cmp1.scale)
    columns["fractional_error_pct"] = err
    iomod.write_csv(out_dir / "fluence_eval.csv", columns)
    _write_provenance(out_dir, "fluence_eval", doc, {"wavelength_index": j})
    print(f"wrote fluence evaluation to {out_dir / 'fluence_eval.csv'}")
    return 0


def cmd_plotdata(args) -> int:
    path = Path(args.table)
    if not path.exists():
        raise DataFormatError(f"no such table: {path}")
    lines = path.read_text().strip().splitlines()
    if not lines:
        raise DataFormatError(f"empty table: {path}")
    header = lines[0].split(",")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    x_name = header[0]
    out_lines = [f"{x_name},series,value"]
    for row in lines[1:]:
        cells = row.split(",")
        for name, cell in zip(header[1:], cells[1:]):
            out_lines.append(f"{cells[0]},{name},{cell}")
    out_path = out_dir / f"{path.stem}_long.csv"
    out_path.write_text("\n".join(out_lines) + "\n")
    print(f"wrote long-format table to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--model", type=int, choices=(1, 2), default=None, help="fluence model")
        p.add_argument("--photons", type=int, default=None, help="photon count override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (0 = auto; env FLUENCELAB_THREADS)")
        p.add_argument("--format", choices=("csv", "bin"), default="csv",
                       help="csv tables only, or also binary field dumps")

    p = sub.add_parser("synth", help="generate a synthetic measurement tensor")
    add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate optical parameters from a tensor")
    p.add_argument("tensor", help="tensor dataset directory")
    add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("validate", help="Monte Carlo / model validation tables")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("correct", help="fluence-correct an absorption spectrum")
    p.add_argument("tensor", help="tensor dataset directory")
    p.add_argument("estimates", help="estimates.json from the estimate command")
    p.add_argument("reference", help="reference spectrum CSV (wavelength_nm, alpha)")
    add_common(p, config_required=False)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("fluence", help="fluence model evaluation")
    fluence_sub = p.add_subparsers(dest="fluence_command", required=True)
    pe = fluence_sub.add_parser("eval", help="axial model curves and discrepancy")
    add_common(pe)
    pe.set_defaults(func=cmd_fluence_eval)

    p = sub.add_parser("plotdata", help="reshape a wide CSV table to long format")
    p.add_argument("table", help="CSV table produced by another command")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plotdata)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, jsonschema.ValidationError) as exc:
        print(f"{PROG}: configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as exc:
        print(f"{PROG}: I/O error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"{PROG}: numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
