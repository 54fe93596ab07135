#!/usr/bin/env python3
"""Regenerate the demo fixtures under data/demo (deterministic)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "data" / "demo"

# (center_nm, width_nm, peak) lobes per material; distinct dominant lobes keep
# the signatures well separated, like real vegetation/soil/water spectra.
MATERIALS = {
    "conifer": [(540.0, 45.0, 0.30), (770.0, 90.0, 0.80)],
    "grass": [(565.0, 45.0, 0.20), (1120.0, 120.0, 0.85)],
    "soil": [(1560.0, 200.0, 0.75), (950.0, 110.0, 0.15)],
    "gravel": [(2150.0, 180.0, 0.85), (1300.0, 100.0, 0.15)],
    "water": [(445.0, 70.0, 0.60)],
}
BASE_REFLECTANCE = 0.01


def material_curve(lobes: list[tuple[float, float, float]], wl: np.ndarray) -> np.ndarray:
    r = np.full_like(wl, BASE_REFLECTANCE)
    for center, width, peak in lobes:
        r += peak * np.exp(-(((wl - center) / width) ** 2))
    return np.clip(r, 0.0, 1.4)


def write_library(path: Path) -> None:
    wl = np.linspace(400.0, 2400.0, 81)
    names = list(MATERIALS)
    curves = {name: material_curve(MATERIALS[name], wl) for name in names}
    rows = ["wavelength_nm," + ",".join(names)]
    for i, w in enumerate(wl):
        cells = [f"{w:.1f}"] + [f"{curves[name][i]:.6f}" for name in names]
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n")


def write_labels(path: Path) -> None:
    """30x30 map, 5 horizontal bands with heights 7,6,6,6,5 (off-grid edges)."""
    heights = [7, 6, 6, 6, 5]
    labels = np.zeros((30, 30), dtype=int)
    row = 0
    for class_id, h in enumerate(heights, start=1):
        labels[row : row + h, :] = class_id
        row += h
    path.write_text("\n".join(",".join(str(v) for v in r) for r in labels) + "\n")


def write_config(path: Path) -> None:
    config = {
        "seed": 7,
        "paths": {"labels": "labels.csv", "library": "library.csv", "workdir": "out"},
        "simulate": {
            "scale": 3,
            "snr_db": None,
            "pan_range_nm": [400.0, 700.0],
            "num_bands": 50,
            "class_mapping": {str(i): name for i, name in enumerate(MATERIALS, start=1)},
        },
        "nmf": {"endmembers": 5, "max_iter": 3000, "tol": 1e-10},
        "fcm": {"fuzzifier_m": 2.0, "max_iter": 100, "tol": 1e-6},
        "fusion": {"distinct_delta": 0.1, "abundance_threshold": 0.05},
    }
    path.write_text(json.dumps(config, indent=2) + "\n")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    write_library(OUT / "library.csv")
    write_labels(OUT / "labels.csv")
    write_config(OUT / "config.json")
    print(f"wrote demo fixtures to {OUT}")


if __name__ == "__main__":
    main()
