"""Pipeline configuration: JSON config file, flag overrides, seed derivation.

A run is fully determined by one JSON config plus the master seed; module
seeds are derived from the master seed with numpy's SeedSequence so every
stage is reproducible independently. Each command writes a resolved-config
manifest next to its outputs for provenance (no timestamps, so reruns are
byte-identical).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .fuse import FusionConfig
from .rasters import _atomic_write_text
from .segment import FcmConfig
from .simulate import SimulationConfig
from .unmix import NmfConfig

# Artifact file names inside the work directory.
HR_CUBE = "hr_cube.bsq"
LOWRES_CUBE = "lowres_cube.bsq"
PAN_IMAGE = "pan.bsq"
SIGNATURES_CSV = "endmembers.csv"
ABUNDANCE_CUBE = "abundances.bsq"
COST_TRACE_CSV = "cost_trace.csv"
SUBPIXEL_MAP_CSV = "subpixel_map.csv"
FUSED_CUBE = "fused_cube.bsq"
REPORT_JSON = "report.json"


@dataclass
class PipelineConfig:
    """Resolved settings for one pipeline run."""

    labels_path: Path | None = None
    library_path: Path | None = None
    workdir: Path = Path("out")
    reference_path: Path | None = None  # defaults to workdir/hr_cube.bsq
    estimate_path: Path | None = None  # defaults to workdir/fused_cube.bsq
    mask_path: Path | None = None
    seed: int = 0
    threads: int = 1
    scale: int = 3
    snr_db: float | None = None
    pan_range_nm: tuple[float, float] = (400.0, 700.0)
    num_bands: int = 50
    wavelength_range_nm: tuple[float, float] | None = None
    class_mapping: dict[int, str] = field(default_factory=dict)
    endmembers: int = 3
    nmf_max_iter: int = 500
    nmf_tol: float = 1e-6
    nmf_epsilon_guard: float = 1e-12
    fcm_fuzzifier_m: float = 2.0
    fcm_max_iter: int = 100
    fcm_tol: float = 1e-6
    fcm_init: str = "quantile"
    distinct_delta: float = 0.1
    abundance_threshold: float = 0.05
    figures: bool = True

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {self.threads}")
        if self.num_bands < 1:
            raise ValidationError(f"num_bands must be >= 1, got {self.num_bands}")
        # delegate the rest to the module config validators
        self.simulation_config()
        self.nmf_config()
        self.fcm_config()
        self.fusion_config()

    # -- derived module seeds -------------------------------------------------

    def derived_seeds(self) -> dict[str, int]:
        """Deterministic per-module seeds spawned from the master seed."""
        children = np.random.SeedSequence(self.seed).spawn(3)
        names = ("simulate", "nmf", "fcm")
        return {
            name: int(child.generate_state(1, dtype=np.uint32)[0])
            for name, child in zip(names, children)
        }

    # -- module config builders -----------------------------------------------

    def simulation_config(self) -> SimulationConfig:
        return SimulationConfig(
            scale=self.scale,
            snr_db=self.snr_db,
            pan_range_nm=self.pan_range_nm,
            class_mapping=dict(self.class_mapping),
            seed=self.derived_seeds()["simulate"],
        )

    def nmf_config(self) -> NmfConfig:
        return NmfConfig(
            P=self.endmembers,
            max_iter=self.nmf_max_iter,
            tol=self.nmf_tol,
            seed=self.derived_seeds()["nmf"],
            epsilon_guard=self.nmf_epsilon_guard,
        )

    def fcm_config(self) -> FcmConfig:
        return FcmConfig(
            fuzzifier_m=self.fcm_fuzzifier_m,
            max_iter=self.fcm_max_iter,
            tol=self.fcm_tol,
            seed=self.derived_seeds()["fcm"],
            init=self.fcm_init,
        )

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            scale=self.scale,
            distinct_delta=self.distinct_delta,
            abundance_threshold=self.abundance_threshold,
        )

    # -- default artifact paths -----------------------------------------------

    def reference_cube_path(self) -> Path:
        return self.reference_path or self.workdir / HR_CUBE

    def estimate_cube_path(self) -> Path:
        return self.estimate_path or self.workdir / FUSED_CUBE

    def resolved_dict(self) -> dict:
        """JSON-serializable echo of every resolved setting."""
        return {
            "paths": {
                "labels": _path_str(self.labels_path),
                "library": _path_str(self.library_path),
                "workdir": str(self.workdir),
                "reference": str(self.reference_cube_path()),
                "estimate": str(self.estimate_cube_path()),
                "mask": _path_str(self.mask_path),
            },
            "seed": self.seed,
            "derived_seeds": self.derived_seeds(),
            "threads": self.threads,
            "simulate": {
                "scale": self.scale,
                "snr_db": self.snr_db,
                "pan_range_nm": list(self.pan_range_nm),
                "num_bands": self.num_bands,
                "wavelength_range_nm": (
                    None
                    if self.wavelength_range_nm is None
                    else list(self.wavelength_range_nm)
                ),
                "class_mapping": {str(k): v for k, v in self.class_mapping.items()},
            },
            "nmf": {
                "endmembers": self.endmembers,
                "max_iter": self.nmf_max_iter,
                "tol": self.nmf_tol,
                "epsilon_guard": self.nmf_epsilon_guard,
            },
            "fcm": {
                "fuzzifier_m": self.fcm_fuzzifier_m,
                "max_iter": self.fcm_max_iter,
                "tol": self.fcm_tol,
                "init": self.fcm_init,
            },
            "fusion": {
                "distinct_delta": self.distinct_delta,
                "abundance_threshold": self.abundance_threshold,
            },
            "figures": self.figures,
        }


def _path_str(p: Path | None) -> str | None:
    return None if p is None else str(p)


def _resolve_path(raw: str | None, base: Path) -> Path | None:
    if raw is None:
        return None
    p = Path(raw)
    return p if p.is_absolute() else base / p


def _expect_section(payload: dict, key: str, config_path: Path) -> dict:
    section = payload.get(key, {})
    if not isinstance(section, dict):
        raise FormatError(f"{config_path}: section {key!r} must be an object")
    return section


def load_config(
    config_path: str | Path | None, overrides: dict | None = None
) -> PipelineConfig:
    """Build a PipelineConfig from a JSON file plus CLI overrides.

    Relative paths in the file are resolved against the file's directory;
    override paths are taken as given. Overrides win over file values.
    """
    payload: dict = {}
    base = Path(".")
    if config_path is not None:
        p = Path(config_path)
        try:
            payload = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise FormatError(f"cannot read config {p}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{p}: invalid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise FormatError(f"{p}: config root must be a JSON object")
        base = p.parent

    paths = _expect_section(payload, "paths", Path(config_path or "."))
    simulate = _expect_section(payload, "simulate", Path(config_path or "."))
    nmf = _expect_section(payload, "nmf", Path(config_path or "."))
    fcm = _expect_section(payload, "fcm", Path(config_path or "."))
    fusion = _expect_section(payload, "fusion", Path(config_path or "."))

    try:
        mapping = {
            int(k): str(v) for k, v in dict(simulate.get("class_mapping", {})).items()
        }
    except (TypeError, ValueError) as exc:
        raise FormatError(
            f"{config_path}: class_mapping keys must be integer class ids"
        ) from exc

    pan_range = simulate.get("pan_range_nm", [400.0, 700.0])
    wl_range = simulate.get("wavelength_range_nm")

    kwargs = {
        "labels_path": _resolve_path(paths.get("labels"), base),
        "library_path": _resolve_path(paths.get("library"), base),
        "workdir": _resolve_path(paths.get("workdir"), base) or Path("out"),
        "reference_path": _resolve_path(paths.get("reference"), base),
        "estimate_path": _resolve_path(paths.get("estimate"), base),
        "mask_path": _resolve_path(paths.get("mask"), base),
        "seed": int(payload.get("seed", 0)),
        "threads": int(payload.get("threads", 1)),
        "scale": int(simulate.get("scale", 3)),
        "snr_db": None if simulate.get("snr_db") is None else float(simulate["snr_db"]),
        "pan_range_nm": (float(pan_range[0]), float(pan_range[1])),
        "num_bands": int(simulate.get("num_bands", 50)),
        "wavelength_range_nm": (
            None if wl_range is None else (float(wl_range[0]), float(wl_range[1]))
        ),
        "class_mapping": mapping,
        "endmembers": int(nmf.get("endmembers", 3)),
        "nmf_max_iter": int(nmf.get("max_iter", 500)),
        "nmf_tol": float(nmf.get("tol", 1e-6)),
        "nmf_epsilon_guard": float(nmf.get("epsilon_guard", 1e-12)),
        "fcm_fuzzifier_m": float(fcm.get("fuzzifier_m", 2.0)),
        "fcm_max_iter": int(fcm.get("max_iter", 100)),
        "fcm_tol": float(fcm.get("tol", 1e-6)),
        "fcm_init": str(fcm.get("init", "quantile")),
        "distinct_delta": float(fusion.get("distinct_delta", 0.1)),
        "abundance_threshold": float(fusion.get("abundance_threshold", 0.05)),
        "figures": bool(payload.get("figures", True)),
    }

    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value

    return PipelineConfig(**kwargs)


def write_manifest(cfg: PipelineConfig, command: str, path: str | Path) -> None:
    """Resolved-config provenance record for one command run."""
    payload = {"command": command, "config": cfg.resolved_dict()}
    _atomic_write_text(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")
