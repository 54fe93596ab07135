"""Shared fixtures: synthetic libraries, label maps, and scene builders."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import hyperfuse as hf

# Five lab-style curves with distinct dominant lobes (well separated angularly).
MATERIAL_LOBES = {
    "conifer": [(540.0, 45.0, 0.30), (770.0, 90.0, 0.80)],
    "grass": [(565.0, 45.0, 0.20), (1120.0, 120.0, 0.85)],
    "soil": [(1560.0, 200.0, 0.75), (950.0, 110.0, 0.15)],
    "gravel": [(2150.0, 180.0, 0.85), (1300.0, 100.0, 0.15)],
    "water": [(445.0, 70.0, 0.60)],
}


def material_curve(lobes, wl: np.ndarray) -> np.ndarray:
    r = np.full_like(wl, 0.01)
    for center, width, peak in lobes:
        r += peak * np.exp(-(((wl - center) / width) ** 2))
    return np.clip(r, 0.0, 1.4)


def make_library(names: list[str] | None = None, n_samples: int = 81) -> hf.SpectralLibrary:
    wl = np.linspace(400.0, 2400.0, n_samples)
    names = names or list(MATERIAL_LOBES)
    return hf.SpectralLibrary(
        [
            hf.LibraryMaterial(n, wl, material_curve(MATERIAL_LOBES[n], wl))
            for n in names
        ]
    )


def library_csv_text(names: list[str] | None = None, n_samples: int = 81) -> str:
    lib = make_library(names, n_samples)
    rows = ["wavelength_nm," + ",".join(lib.names())]
    wl = lib.materials[0].wavelengths_nm
    for i in range(wl.size):
        cells = [f"{wl[i]:.1f}"] + [f"{m.reflectance[i]:.6f}" for m in lib.materials]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def banded_labels(size: int, heights: list[int]) -> hf.LabelMap:
    """Horizontal class bands; heights must sum to ``size``."""
    assert sum(heights) == size
    labels = np.zeros((size, size), dtype=int)
    row = 0
    for class_id, h in enumerate(heights, start=1):
        labels[row : row + h, :] = class_id
        row += h
    return hf.LabelMap(samples=size, lines=size, labels=labels)


def labels_csv_text(label_map: hf.LabelMap) -> str:
    return "\n".join(",".join(str(v) for v in row) for row in label_map.labels) + "\n"


def make_scene(
    heights: list[int],
    names: list[str],
    bands: int = 20,
    scale: int = 3,
    snr_db: float | None = None,
    seed: int = 0,
):
    """Simulated HR cube + low-res cube + PAN for a banded label map."""
    size = sum(heights)
    labels = banded_labels(size, heights)
    library = make_library(names)
    cfg = hf.SimulationConfig(
        scale=scale,
        snr_db=snr_db,
        class_mapping={i + 1: n for i, n in enumerate(names)},
        seed=seed,
    )
    grid = np.linspace(400.0, 2400.0, bands)
    hr = hf.synthesize_hr_cube(labels, library, cfg, grid)
    lowres = hf.downsample(hr, scale)
    pan = hf.synthesize_pan(hr, cfg.pan_range_nm)
    return labels, library, grid, hr, lowres, pan


def true_signatures(library: hf.SpectralLibrary, names: list[str], grid: np.ndarray) -> np.ndarray:
    return np.stack(
        [hf.resample_signature(library.material(n), grid) for n in names], axis=1
    )


def write_desk_fixture(dirpath: Path, seed: int = 7, nmf_max_iter: int = 3000) -> Path:
    """The 30x30, 5-class, 50-band acceptance fixture; returns the config path."""
    dirpath.mkdir(parents=True, exist_ok=True)
    (dirpath / "library.csv").write_text(library_csv_text())
    (dirpath / "labels.csv").write_text(
        labels_csv_text(banded_labels(30, [7, 6, 6, 6, 5]))
    )
    config = {
        "seed": seed,
        "paths": {"labels": "labels.csv", "library": "library.csv", "workdir": "out"},
        "simulate": {
            "scale": 3,
            "snr_db": None,
            "pan_range_nm": [400.0, 700.0],
            "num_bands": 50,
            "class_mapping": {
                str(i): n for i, n in enumerate(MATERIAL_LOBES, start=1)
            },
        },
        "nmf": {"endmembers": 5, "max_iter": nmf_max_iter, "tol": 1e-10},
        "fcm": {"fuzzifier_m": 2.0, "max_iter": 100, "tol": 1e-6},
        "fusion": {"distinct_delta": 0.1, "abundance_threshold": 0.05},
    }
    config_path = dirpath / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")
    return config_path


def write_small_fixture(dirpath: Path, seed: int = 3) -> Path:
    """A fast 12x12, 2-class fixture for CLI-level tests."""
    dirpath.mkdir(parents=True, exist_ok=True)
    names = ["conifer", "water"]
    (dirpath / "library.csv").write_text(library_csv_text(names))
    (dirpath / "labels.csv").write_text(
        labels_csv_text(banded_labels(12, [7, 5]))
    )
    config = {
        "seed": seed,
        "paths": {"labels": "labels.csv", "library": "library.csv", "workdir": "out"},
        "simulate": {
            "scale": 3,
            "num_bands": 12,
            "class_mapping": {"1": "conifer", "2": "water"},
        },
        "nmf": {"endmembers": 2, "max_iter": 400, "tol": 1e-9},
    }
    config_path = dirpath / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")
    return config_path


# ---------------------------------------------------------------------------
# Independently coded reference implementations (oracles)
# ---------------------------------------------------------------------------


def reference_fcm(
    x: np.ndarray, c: int, m: float = 2.0, tol: float = 1e-12, max_iter: int = 10000
) -> tuple[np.ndarray, np.ndarray]:
    """Plain-loop FCM oracle: same quantile init, run to tiny tolerance."""
    x = [float(v) for v in np.asarray(x).ravel()]
    n = len(x)
    unique = sorted(set(x))
    q = [(2 * k + 1) / (2 * c) for k in range(c)]
    centers = [float(np.quantile(np.array(unique), qi)) for qi in q]

    u = [[0.0] * c for _ in range(n)]
    for _ in range(max_iter):
        for i in range(n):
            dists = [abs(x[i] - centers[j]) for j in range(c)]
            if 0.0 in dists:
                for j in range(c):
                    u[i][j] = 0.0
                u[i][dists.index(0.0)] = 1.0
            else:
                for j in range(c):
                    u[i][j] = 1.0 / sum(
                        (dists[j] / dists[k]) ** (2.0 / (m - 1.0)) for k in range(c)
                    )
        movement = 0.0
        for j in range(c):
            num = sum((u[i][j] ** m) * x[i] for i in range(n))
            den = sum(u[i][j] ** m for i in range(n))
            new_center = num / den
            movement = max(movement, abs(new_center - centers[j]))
            centers[j] = new_center
        if movement < tol:
            break
    return np.array(u), np.array(centers)


def reference_nmf_updates(
    x: np.ndarray, u: np.ndarray, v: np.ndarray, iterations: int, eps: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise loop implementation of the multiplicative updates."""
    x = np.asarray(x, dtype=np.float64)
    u = np.array(u, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    length, n = x.shape
    p = u.shape[1]
    for _ in range(iterations):
        xv = x @ v
        uvtv = u @ (v.T @ v)
        for a in range(length):
            for b in range(p):
                u[a, b] = u[a, b] * xv[a, b] / (uvtv[a, b] + eps)
        xtu = x.T @ u
        vutu = v @ (u.T @ u)
        for a in range(n):
            for b in range(p):
                v[a, b] = v[a, b] * xtu[a, b] / (vutu[a, b] + eps)
    return u, v


@pytest.fixture(scope="session")
def desk_fixture_dir(tmp_path_factory) -> Path:
    d = tmp_path_factory.mktemp("desk_fixture")
    write_desk_fixture(d)
    return d


@pytest.fixture(scope="session")
def small_fixture_dir(tmp_path_factory) -> Path:
    d = tmp_path_factory.mktemp("small_fixture")
    write_small_fixture(d)
    return d
