"""Command-line front end: simulate, unmix, fuse, evaluate, pipeline.

Every command resolves its settings from an optional JSON config plus flag
overrides (flags win), writes its outputs atomically into the work
directory, and drops a resolved-config manifest next to them. Exit codes:
0 success, 2 input/IO errors, 3 validation/domain errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ABUNDANCE_CUBE,
    COST_TRACE_CSV,
    FUSED_CUBE,
    HR_CUBE,
    LOWRES_CUBE,
    PAN_IMAGE,
    REPORT_JSON,
    SIGNATURES_CSV,
    SUBPIXEL_MAP_CSV,
    PipelineConfig,
    load_config,
    write_manifest,
)
from .errors import FormatError, HyperfuseError, ValidationError
from .fuse import fuse_scene, reconstruct_hr
from .metrics import evaluate
from .rasters import (
    LabelMap,
    _atomic_write_text,
    read_cube,
    read_labels,
    read_library,
    read_pan,
    write_cube,
    write_labels,
    write_pan,
    write_report,
)
from .report import render_report_outputs
from .simulate import downsample, synthesize_hr_cube, synthesize_pan
from .unmix import (
    canonicalize_scale,
    nmf_unmix,
    normalize_abundances,
    read_endmember_model,
    write_endmember_model,
)

logger = logging.getLogger("hyperfuse")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VALIDATION = 3


def _require_file(path: Path | None, what: str) -> Path:
    if path is None:
        raise FormatError(f"no {what} path configured (set it in the config or flags)")
    if not path.is_file():
        raise FormatError(f"{what} file not found: {path}")
    return path


def _wavelength_grid(cfg: PipelineConfig, library) -> np.ndarray:
    """Target band grid: explicit range or the mapped materials' common support."""
    if cfg.wavelength_range_nm is not None:
        low, high = cfg.wavelength_range_nm
    else:
        materials = [library.material(name) for name in cfg.class_mapping.values()]
        if not materials:
            raise ValidationError("class_mapping is empty; nothing to simulate")
        low = max(float(m.wavelengths_nm[0]) for m in materials)
        high = min(float(m.wavelengths_nm[-1]) for m in materials)
    if not low < high:
        raise ValidationError(
            f"wavelength range [{low}, {high}] nm is empty; the mapped "
            "materials have no common support"
        )
    return np.linspace(low, high, cfg.num_bands)


# ---------------------------------------------------------------------------
# Stage runners (also the library-level entry points used by tests)
# ---------------------------------------------------------------------------


def run_simulate(cfg: PipelineConfig) -> None:
    labels_path = _require_file(cfg.labels_path, "labels")
    library_path = _require_file(cfg.library_path, "library")
    cfg.workdir.mkdir(parents=True, exist_ok=True)

    labels = read_labels(labels_path)
    library = read_library(library_path)
    grid = _wavelength_grid(cfg, library)

    logger.info("simulating %dx%d scene, %d bands", labels.lines, labels.samples, grid.size)
    hr = synthesize_hr_cube(labels, library, cfg.simulation_config(), grid)
    lowres = downsample(hr, cfg.scale)
    pan = synthesize_pan(hr, cfg.pan_range_nm)

    write_cube(hr, cfg.workdir / HR_CUBE)
    write_cube(lowres, cfg.workdir / LOWRES_CUBE)
    write_pan(pan, cfg.workdir / PAN_IMAGE)
    write_manifest(cfg, "simulate", cfg.workdir / "manifest_simulate.json")
    logger.info("wrote %s, %s, %s", HR_CUBE, LOWRES_CUBE, PAN_IMAGE)


def run_unmix(cfg: PipelineConfig) -> None:
    lowres_path = _require_file(cfg.workdir / LOWRES_CUBE, "low-res cube")
    lowres = read_cube(lowres_path)

    logger.info("unmixing %d pixels into %d endmembers", lowres.pixel_count, cfg.endmembers)
    model, trace = nmf_unmix(
        lowres.to_matrix(),
        cfg.nmf_config(),
        n_samples=lowres.samples,
        n_lines=lowres.lines,
        wavelengths_nm=lowres.wavelengths_nm,
    )
    model = normalize_abundances(canonicalize_scale(model))

    write_endmember_model(model, cfg.workdir / SIGNATURES_CSV, cfg.workdir / ABUNDANCE_CUBE)
    trace_rows = ["iteration,cost"] + [
        f"{i},{repr(float(c))}" for i, c in enumerate(trace)
    ]
    _atomic_write_text(cfg.workdir / COST_TRACE_CSV, "\n".join(trace_rows) + "\n")
    write_manifest(cfg, "unmix", cfg.workdir / "manifest_unmix.json")
    logger.info("final cost %.6g after %d iterations", trace[-1], len(trace) - 1)


def run_fuse(cfg: PipelineConfig) -> None:
    lowres = read_cube(_require_file(cfg.workdir / LOWRES_CUBE, "low-res cube"))
    pan = read_pan(_require_file(cfg.workdir / PAN_IMAGE, "PAN image"))
    model = read_endmember_model(
        _require_file(cfg.workdir / SIGNATURES_CSV, "signatures CSV"),
        _require_file(cfg.workdir / ABUNDANCE_CUBE, "abundance cube"),
    )

    logger.info("fusing %dx%d superpixels at scale %d", lowres.lines, lowres.samples, cfg.scale)
    subpixels = fuse_scene(lowres, pan, model, cfg.fusion_config(), cfg.fcm_config())
    fused = reconstruct_hr(subpixels, model)

    write_labels(
        LabelMap(
            samples=subpixels.samples,
            lines=subpixels.lines,
            labels=subpixels.endmember_index,
        ),
        cfg.workdir / SUBPIXEL_MAP_CSV,
    )
    write_cube(fused, cfg.workdir / FUSED_CUBE)
    write_manifest(cfg, "fuse", cfg.workdir / "manifest_fuse.json")
    logger.info("wrote %s and %s", SUBPIXEL_MAP_CSV, FUSED_CUBE)


def run_evaluate(cfg: PipelineConfig) -> None:
    reference = read_cube(_require_file(cfg.reference_cube_path(), "reference cube"))
    estimate = read_cube(_require_file(cfg.estimate_cube_path(), "estimate cube"))
    mask = None
    if cfg.mask_path is not None:
        mask = read_labels(_require_file(cfg.mask_path, "mask labels"))

    report = evaluate(reference, estimate, mask, parameters=cfg.resolved_dict())
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    write_report(report, cfg.workdir / REPORT_JSON)
    if cfg.figures:
        render_report_outputs(report, reference, estimate, cfg.workdir)
    write_manifest(cfg, "evaluate", cfg.workdir / "manifest_evaluate.json")
    logger.info(
        "SAE %.4f deg, mean PSNR %s dB",
        report.sae_degrees,
        "inf" if report.psnr_mean_db is None else f"{report.psnr_mean_db:.2f}",
    )


def run_pipeline(cfg: PipelineConfig) -> None:
    run_simulate(cfg)
    run_unmix(cfg)
    run_fuse(cfg)
    run_evaluate(cfg)
    write_manifest(cfg, "pipeline", cfg.workdir / "manifest_pipeline.json")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="JSON", default=None, help="config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--threads", type=int, default=None, help="worker count (1 = reference mode)")
    parser.add_argument("--scale", type=int, default=None, help="resolution ratio r")
    parser.add_argument("--endmembers", type=int, default=None, help="endmember count P")
    parser.add_argument("--snr-db", type=float, default=None, help="simulation noise SNR (dB)")
    parser.add_argument(
        "--abundance-threshold", type=float, default=None, help="active-endmember threshold"
    )
    parser.add_argument(
        "--distinct-delta", type=float, default=None, help="ambiguity gap for matching"
    )
    parser.add_argument("--out", metavar="DIR", default=None, help="work/output directory")
    parser.add_argument("--labels", metavar="CSV", default=None, help="label map path")
    parser.add_argument("--library", metavar="CSV", default=None, help="spectral library path")
    parser.add_argument("--reference", metavar="CUBE", default=None, help="reference cube path")
    parser.add_argument("--estimate", metavar="CUBE", default=None, help="estimate cube path")
    parser.add_argument("--mask", metavar="CSV", default=None, help="background mask labels")
    parser.add_argument(
        "--no-figures", action="store_true", help="skip figure/CSV rendering in evaluate"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperfuse",
        description=(
            "Fuse a low-resolution hyperspectral cube with a high-resolution "
            "PAN image via NMF unmixing and per-superpixel segmentation."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "generate HR cube, low-res cube and PAN image from a label map",
        "unmix": "NMF spectral unmixing of the low-res cube",
        "fuse": "fuse abundances with PAN segmentation into a HR cube",
        "evaluate": "SAE/PSNR quality report of estimate vs reference",
        "pipeline": "run simulate, unmix, fuse and evaluate in sequence",
    }
    for name, help_text in helps.items():
        sub = subparsers.add_parser(name, help=help_text)
        _add_common_flags(sub)
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    out = {
        "seed": args.seed,
        "threads": args.threads,
        "scale": args.scale,
        "endmembers": args.endmembers,
        "snr_db": args.snr_db,
        "abundance_threshold": args.abundance_threshold,
        "distinct_delta": args.distinct_delta,
        "workdir": None if args.out is None else Path(args.out),
        "labels_path": None if args.labels is None else Path(args.labels),
        "library_path": None if args.library is None else Path(args.library),
        "reference_path": None if args.reference is None else Path(args.reference),
        "estimate_path": None if args.estimate is None else Path(args.estimate),
        "mask_path": None if args.mask is None else Path(args.mask),
    }
    if args.no_figures:
        out["figures"] = False
    return out


def _configure_logging() -> None:
    level_name = os.environ.get("HYPERFUSE_LOG", "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


_COMMANDS = {
    "simulate": run_simulate,
    "unmix": run_unmix,
    "fuse": run_fuse,
    "evaluate": run_evaluate,
    "pipeline": run_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        _COMMANDS[args.command](cfg)
    except FormatError as exc:
        print(f"hyperfuse: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, OSError) as exc:
        print(f"hyperfuse: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationError as exc:
        print(f"hyperfuse: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except HyperfuseError as exc:
        print(f"hyperfuse: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
