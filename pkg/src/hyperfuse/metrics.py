"""Reconstruction quality metrics: spectral angle (SAD/SAE) and MSE/PSNR.

SAE is the rms of per-pixel spectral angles in degrees; PSNR is per band,
10*log10(MAX^2/MSE) with MAX taken from the reference band. The aggregate
PSNR is the arithmetic mean of the finite per-band values (per-band values
are always reported so any other aggregation can be recomputed).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .rasters import LabelMap, QualityReport, SpectralCube


def sad(m: np.ndarray, m_hat: np.ndarray) -> float:
    """Spectral angle between two spectra, in degrees.

    The arccos argument is clamped to [-1, 1] against rounding.
    """
    m = np.asarray(m, dtype=np.float64).ravel()
    m_hat = np.asarray(m_hat, dtype=np.float64).ravel()
    if m.size != m_hat.size:
        raise ValidationError(
            f"spectra lengths differ: {m.size} vs {m_hat.size}"
        )
    norm = np.linalg.norm(m)
    norm_hat = np.linalg.norm(m_hat)
    if norm == 0.0 or norm_hat == 0.0:
        raise ValidationError("spectral angle is undefined for a zero spectrum")
    cosine = np.clip(float(m @ m_hat) / (norm * norm_hat), -1.0, 1.0)
    return math.degrees(math.acos(cosine))


def _check_geometry(reference: SpectralCube, estimate: SpectralCube) -> None:
    if (
        reference.samples != estimate.samples
        or reference.lines != estimate.lines
        or reference.bands != estimate.bands
    ):
        raise ValidationError(
            f"cube geometries differ: reference {reference.bands}x"
            f"{reference.lines}x{reference.samples} vs estimate "
            f"{estimate.bands}x{estimate.lines}x{estimate.samples}"
        )


def sad_map(reference: SpectralCube, estimate: SpectralCube) -> np.ndarray:
    """Per-pixel spectral angle in degrees; NaN where either spectrum is zero."""
    _check_geometry(reference, estimate)
    ref = reference.to_matrix()
    est = estimate.to_matrix()
    dots = np.sum(ref * est, axis=0)
    norms = np.linalg.norm(ref, axis=0) * np.linalg.norm(est, axis=0)
    out = np.full(reference.pixel_count, np.nan)
    valid = norms > 0.0
    out[valid] = np.degrees(np.arccos(np.clip(dots[valid] / norms[valid], -1.0, 1.0)))
    return out.reshape(reference.lines, reference.samples)


def sae(
    reference: SpectralCube,
    estimate: SpectralCube,
    mask: LabelMap | None = None,
) -> float:
    """Root-mean-square spectral angle over the scene, in degrees.

    With a mask, background pixels (label 0) are excluded; pixels with a
    zero spectrum on either side are always excluded.
    """
    angle, _, n_evaluated = _sae_detail(reference, estimate, mask)
    if n_evaluated == 0:
        raise ValidationError("no pixels left to evaluate after masking/exclusion")
    return angle


def _sae_detail(
    reference: SpectralCube,
    estimate: SpectralCube,
    mask: LabelMap | None,
) -> tuple[float, int, int]:
    """(rms angle, zero-spectrum pixels excluded, pixels evaluated)."""
    angles = sad_map(reference, estimate).ravel()
    selected = np.ones(angles.size, dtype=bool)
    if mask is not None:
        if mask.lines != reference.lines or mask.samples != reference.samples:
            raise ValidationError(
                f"mask geometry {mask.lines}x{mask.samples} does not match "
                f"cube {reference.lines}x{reference.samples}"
            )
        selected &= mask.labels.ravel() != 0
    zero_excluded = int(np.sum(selected & np.isnan(angles)))
    selected &= ~np.isnan(angles)
    n_evaluated = int(np.sum(selected))
    if n_evaluated == 0:
        return math.nan, zero_excluded, 0
    rms = float(np.sqrt(np.mean(angles[selected] ** 2)))
    return rms, zero_excluded, n_evaluated


def mse_band(reference_band: np.ndarray, estimate_band: np.ndarray) -> float:
    """Mean squared difference over all pixels of one band."""
    ref = np.asarray(reference_band, dtype=np.float64)
    est = np.asarray(estimate_band, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValidationError(f"band shapes differ: {ref.shape} vs {est.shape}")
    return float(np.mean((ref - est) ** 2))


def psnr_band(reference_band: np.ndarray, estimate_band: np.ndarray) -> float:
    """Peak SNR of one band in dB; math.inf when the bands are identical.

    MAX is the maximum pixel value of the reference band (the ground truth).
    """
    ref = np.asarray(reference_band, dtype=np.float64)
    peak = float(np.max(ref))
    if peak == 0.0:
        raise ValidationError("PSNR is undefined: reference band is all zeros")
    mse = mse_band(reference_band, estimate_band)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def evaluate(
    reference: SpectralCube,
    estimate: SpectralCube,
    mask: LabelMap | None = None,
    parameters: dict | None = None,
) -> QualityReport:
    """Full quality report: SAE plus per-band MSE/PSNR and their mean.

    The mask only affects SAE; MSE/PSNR follow their per-band definitions
    over all pixels. ``parameters`` (run settings) is copied into the
    report together with the evaluation counts.
    """
    _check_geometry(reference, estimate)
    angle, zero_excluded, n_evaluated = _sae_detail(reference, estimate, mask)
    if n_evaluated == 0:
        raise ValidationError("no pixels left to evaluate after masking/exclusion")

    mse = [mse_band(reference.values[b], estimate.values[b]) for b in range(reference.bands)]
    psnr = [psnr_band(reference.values[b], estimate.values[b]) for b in range(reference.bands)]
    finite = [v for v in psnr if math.isfinite(v)]
    psnr_mean = float(np.mean(finite)) if finite else None

    params = dict(parameters or {})
    params.update(
        {
            "evaluated_pixels": n_evaluated,
            "excluded_zero_spectrum_pixels": zero_excluded,
            "masked": mask is not None,
        }
    )
    return QualityReport(
        sae_degrees=angle,
        mse_per_band=mse,
        psnr_per_band_db=psnr,
        psnr_mean_db=psnr_mean,
        parameters=params,
    )
