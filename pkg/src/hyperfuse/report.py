"""Render a quality report as delimited per-band metrics plus figures.

The evaluate command writes, next to the JSON report, a per-band CSV and
two PNG figures: the PSNR/MSE curves over wavelength and the per-pixel
spectral-angle map. Rendering uses the matplotlib object API directly (no
pyplot, no global state), so library callers keep their own backends.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .metrics import sad_map
from .rasters import QualityReport, SpectralCube, _atomic_write_text


def write_per_band_csv(
    report: QualityReport, wavelengths_nm: np.ndarray, path: str | Path
) -> None:
    """One row per band: index, wavelength, MSE, PSNR (blank when infinite)."""
    rows = ["band,wavelength_nm,mse,psnr_db"]
    for i, (mse, psnr) in enumerate(zip(report.mse_per_band, report.psnr_per_band_db)):
        psnr_cell = "" if math.isinf(psnr) else repr(float(psnr))
        rows.append(f"{i + 1},{repr(float(wavelengths_nm[i]))},{repr(float(mse))},{psnr_cell}")
    _atomic_write_text(Path(path), "\n".join(rows) + "\n")


def render_band_metrics_figure(
    report: QualityReport, wavelengths_nm: np.ndarray, path: str | Path
) -> None:
    """PSNR and MSE curves over wavelength, mean PSNR as a reference line."""
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    psnr = np.array(
        [v if math.isfinite(v) else np.nan for v in report.psnr_per_band_db]
    )
    mse = np.asarray(report.mse_per_band, dtype=np.float64)

    fig = Figure(figsize=(8.0, 4.5))
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(wl, psnr, color="tab:blue", lw=1.5, label="PSNR")
    if report.psnr_mean_db is not None:
        ax.axhline(
            report.psnr_mean_db,
            color="tab:blue",
            ls="--",
            lw=1.0,
            label=f"mean {report.psnr_mean_db:.2f} dB",
        )
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.3)

    ax2 = ax.twinx()
    ax2.plot(wl, mse, color="tab:red", lw=1.0, alpha=0.7, label="MSE")
    ax2.set_ylabel("MSE")

    handles, labels = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles + handles2, labels + labels2, loc="best", fontsize=9)
    ax.set_title("Per-band reconstruction quality")
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def render_sad_map_figure(
    reference: SpectralCube, estimate: SpectralCube, path: str | Path
) -> None:
    """Per-pixel spectral-angle heatmap; zero-spectrum pixels are blank."""
    angles = sad_map(reference, estimate)
    fig = Figure(figsize=(6.0, 5.0))
    ax = fig.add_subplot(1, 1, 1)
    image = ax.imshow(angles, cmap="magma", interpolation="nearest")
    fig.colorbar(image, ax=ax, label="spectral angle (deg)")
    ax.set_title("Per-pixel spectral angle")
    ax.set_xlabel("sample")
    ax.set_ylabel("line")
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def render_report_outputs(
    report: QualityReport,
    reference: SpectralCube,
    estimate: SpectralCube,
    outdir: str | Path,
) -> list[Path]:
    """Write the per-band CSV and both figures into ``outdir``; returns paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "metrics_per_band.csv"
    psnr_path = outdir / "psnr_per_band.png"
    sad_path = outdir / "sad_map.png"
    write_per_band_csv(report, reference.wavelengths_nm, csv_path)
    render_band_metrics_figure(report, reference.wavelengths_nm, psnr_path)
    render_sad_map_figure(reference, estimate, sad_path)
    return [csv_path, psnr_path, sad_path]
