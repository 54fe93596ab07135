"""Simulated-data generation: label map + library -> HR cube, low-res cube, PAN.

The generator substitutes each class in a label map with a library material
signature resampled onto the target wavelength grid, optionally adds white
Gaussian noise at a configured SNR, box-downsamples by the scale factor, and
synthesizes the panchromatic image as the unweighted mean of all bands in
the visible range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rasters import LabelMap, LibraryMaterial, PanImage, SpectralCube, SpectralLibrary


@dataclass
class SimulationConfig:
    """Settings for the simulated-data generator.

    ``snr_db`` of None means noiseless. Noise samples are drawn from a
    counter-based generator (Philox) so a parallel evaluation order could
    never change the output.
    """

    scale: int = 3
    snr_db: float | None = None
    pan_range_nm: tuple[float, float] = (400.0, 700.0)
    class_mapping: dict[int, str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scale < 2:
            raise ValidationError(f"scale must be >= 2, got {self.scale}")
        low, high = self.pan_range_nm
        if not low < high:
            raise ValidationError(
                f"pan_range_nm low must be < high, got ({low}, {high})"
            )
        for class_id in self.class_mapping:
            if int(class_id) <= 0:
                raise ValidationError(
                    f"class_mapping ids must be > 0, got {class_id} "
                    "(0 is reserved for background)"
                )


def resample_signature(
    material: LibraryMaterial, target_wavelengths_nm: np.ndarray
) -> np.ndarray:
    """Piecewise-linear resampling of a material signature onto a target grid.

    Exact at shared wavelengths; raises if the target grid leaves the
    material's sampled support.
    """
    target = np.asarray(target_wavelengths_nm, dtype=np.float64)
    lo = material.wavelengths_nm[0]
    hi = material.wavelengths_nm[-1]
    if np.any(target < lo) or np.any(target > hi):
        raise ValidationError(
            f"target wavelengths must lie within [{lo}, {hi}] nm for material "
            f"{material.name!r}"
        )
    return np.interp(target, material.wavelengths_nm, material.reflectance)


def synthesize_hr_cube(
    labels: LabelMap,
    library: SpectralLibrary,
    cfg: SimulationConfig,
    target_wavelengths_nm: np.ndarray,
) -> SpectralCube:
    """Build the high-resolution cube by signature substitution per class.

    Background pixels (label 0) carry all-zero spectra. With ``snr_db`` set,
    i.i.d. Gaussian noise with variance = mean signal power / 10^(snr/10) is
    added to every sample and the result is clamped at 0.
    """
    target = np.asarray(target_wavelengths_nm, dtype=np.float64)
    bands = target.size

    present = labels.class_ids()
    unmapped = [c for c in present if c not in cfg.class_mapping]
    if unmapped:
        raise ValidationError(
            f"label map contains unmapped class ids {unmapped}; "
            "every nonzero class needs a class_mapping entry"
        )

    signatures = {
        class_id: resample_signature(library.material(name), target)
        for class_id, name in cfg.class_mapping.items()
    }

    values = np.zeros((bands, labels.lines, labels.samples), dtype=np.float64)
    for class_id in present:
        mask = labels.labels == class_id
        values[:, mask] = signatures[class_id][:, np.newaxis]

    if cfg.snr_db is not None:
        signal_power = float(np.mean(values**2))
        variance = signal_power / 10.0 ** (cfg.snr_db / 10.0)
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        values = values + rng.normal(0.0, np.sqrt(variance), size=values.shape)
        values = np.maximum(values, 0.0)

    return SpectralCube(
        samples=labels.samples,
        lines=labels.lines,
        bands=bands,
        wavelengths_nm=target,
        values=values,
    )


def downsample(cube: SpectralCube, scale: int) -> SpectralCube:
    """Non-overlapping box average over scale x scale blocks, per band."""
    if scale < 2:
        raise ValidationError(f"scale must be >= 2, got {scale}")
    if cube.lines % scale != 0 or cube.samples % scale != 0:
        raise ValidationError(
            f"cube dimensions {cube.lines}x{cube.samples} are not divisible "
            f"by scale {scale}"
        )
    out_lines = cube.lines // scale
    out_samples = cube.samples // scale
    blocks = cube.values.astype(np.float64).reshape(
        cube.bands, out_lines, scale, out_samples, scale
    )
    means = blocks.mean(axis=(2, 4))
    return SpectralCube(
        samples=out_samples,
        lines=out_lines,
        bands=cube.bands,
        wavelengths_nm=cube.wavelengths_nm,
        values=means,
    )


def synthesize_pan(cube: SpectralCube, range_nm: tuple[float, float]) -> PanImage:
    """Per pixel, unweighted mean over all bands with low <= wavelength <= high."""
    low, high = range_nm
    in_range = (cube.wavelengths_nm >= low) & (cube.wavelengths_nm <= high)
    if not np.any(in_range):
        raise ValidationError(
            f"no cube band lies within [{low}, {high}] nm; cube covers "
            f"[{cube.wavelengths_nm[0]}, {cube.wavelengths_nm[-1]}] nm"
        )
    pan_values = cube.values[in_range].astype(np.float64).mean(axis=0)
    return PanImage(samples=cube.samples, lines=cube.lines, values=pan_values)
