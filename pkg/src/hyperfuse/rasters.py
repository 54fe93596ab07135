"""Raster and table I/O: cubes, PAN images, label maps, spectral libraries, reports.

All pipeline artifacts cross the filesystem boundary through this module.
Formats:

* Cube / PAN: raw little-endian IEEE-754 float32, band-sequential (BSQ,
  each band row-major), paired text header ``<path>.hdr`` with
  ENVI-compatible keys so third-party viewers open the outputs.
* Label maps: CSV of integers, one text line per raster line.
* Spectral libraries: CSV with header ``wavelength_nm,<name1>,<name2>,...``.
* Quality reports: JSON.

Writes are atomic (temp file + rename) so interrupted runs never leave a
partially written artifact under the final name.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

ENVI_MAGIC = "ENVI"
_FLOAT32_BYTES = 4


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SpectralCube:
    """L-band reflectance raster.

    ``values`` has shape (bands, lines, samples) and dtype float32 — the
    on-disk precision, so write-then-read round-trips are bit-exact.
    """

    samples: int
    lines: int
    bands: int
    wavelengths_nm: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float32)
        self.validate()

    def validate(self) -> None:
        if self.samples < 1 or self.lines < 1 or self.bands < 1:
            raise ValidationError(
                f"cube dimensions must be >= 1, got samples={self.samples} "
                f"lines={self.lines} bands={self.bands}"
            )
        if self.wavelengths_nm.shape != (self.bands,):
            raise ValidationError(
                f"wavelength list has {self.wavelengths_nm.size} entries, "
                f"expected {self.bands}"
            )
        if np.any(self.wavelengths_nm <= 0.0):
            raise ValidationError("wavelengths must all be > 0 nm")
        if np.any(np.diff(self.wavelengths_nm) <= 0.0):
            raise ValidationError("wavelengths must be strictly increasing")
        if self.values.shape != (self.bands, self.lines, self.samples):
            raise ValidationError(
                f"values shape {self.values.shape} does not match "
                f"(bands, lines, samples)=({self.bands}, {self.lines}, {self.samples})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("cube values must all be finite")
        if np.any(self.values < 0.0):
            raise ValidationError("cube values must all be >= 0")

    @property
    def pixel_count(self) -> int:
        return self.samples * self.lines

    def to_matrix(self) -> np.ndarray:
        """Cube as the L x N measurement matrix, pixels in row-major order."""
        return self.values.reshape(self.bands, self.pixel_count).astype(np.float64)

    @classmethod
    def from_matrix(
        cls, x: np.ndarray, samples: int, lines: int, wavelengths_nm: np.ndarray
    ) -> "SpectralCube":
        """Inverse of :meth:`to_matrix`."""
        x = np.asarray(x)
        bands = x.shape[0]
        return cls(
            samples=samples,
            lines=lines,
            bands=bands,
            wavelengths_nm=wavelengths_nm,
            values=x.reshape(bands, lines, samples),
        )


@dataclass(eq=False)
class PanImage:
    """Single-band broadband intensity raster, shape (lines, samples), float32."""

    samples: int
    lines: int
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        self.validate()

    def validate(self) -> None:
        if self.samples < 1 or self.lines < 1:
            raise ValidationError(
                f"PAN dimensions must be >= 1, got samples={self.samples} lines={self.lines}"
            )
        if self.values.shape != (self.lines, self.samples):
            raise ValidationError(
                f"PAN values shape {self.values.shape} does not match "
                f"(lines, samples)=({self.lines}, {self.samples})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("PAN values must all be finite")
        if np.any(self.values < 0.0):
            raise ValidationError("PAN values must all be >= 0")


@dataclass(eq=False)
class LabelMap:
    """Integer class-id raster, shape (lines, samples); 0 means background."""

    samples: int
    lines: int
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        if self.samples < 1 or self.lines < 1:
            raise ValidationError(
                f"label map dimensions must be >= 1, got samples={self.samples} "
                f"lines={self.lines}"
            )
        if self.labels.shape != (self.lines, self.samples):
            raise ValidationError(
                f"labels shape {self.labels.shape} does not match "
                f"(lines, samples)=({self.lines}, {self.samples})"
            )
        if np.any(self.labels < 0):
            raise ValidationError("labels must all be >= 0")

    def class_ids(self) -> list[int]:
        """Distinct nonzero class ids, ascending."""
        ids = np.unique(self.labels)
        return [int(c) for c in ids if c != 0]


@dataclass(eq=False)
class LibraryMaterial:
    """One named material signature sampled on its own wavelength grid."""

    name: str
    wavelengths_nm: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self) -> None:
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64)
        self.reflectance = np.asarray(self.reflectance, dtype=np.float64)
        if not self.name:
            raise ValidationError("material name must be non-empty")
        if self.wavelengths_nm.size != self.reflectance.size:
            raise ValidationError(
                f"material {self.name!r}: wavelength and reflectance lengths differ"
            )
        if self.wavelengths_nm.size < 1:
            raise ValidationError(f"material {self.name!r}: empty signature")
        if np.any(np.diff(self.wavelengths_nm) <= 0.0):
            raise ValidationError(
                f"material {self.name!r}: wavelengths must be strictly increasing"
            )
        if np.any(self.reflectance < 0.0) or np.any(self.reflectance > 1.5):
            raise ValidationError(
                f"material {self.name!r}: reflectance must lie in [0, 1.5]"
            )


@dataclass(eq=False)
class SpectralLibrary:
    """Collection of uniquely named material signatures."""

    materials: list[LibraryMaterial]

    def __post_init__(self) -> None:
        names = [m.name for m in self.materials]
        if len(set(names)) != len(names):
            raise ValidationError("material names must be unique")

    def names(self) -> list[str]:
        return [m.name for m in self.materials]

    def material(self, name: str) -> LibraryMaterial:
        for m in self.materials:
            if m.name == name:
                return m
        raise ValidationError(f"unknown material name {name!r}")


@dataclass
class QualityReport:
    """SAE plus per-band MSE/PSNR, with the run settings that produced them.

    ``psnr_per_band_db`` uses ``math.inf`` as the zero-MSE sentinel; it is
    serialized as JSON null and excluded from ``psnr_mean_db``, which is
    ``None`` when no band has a finite PSNR.
    """

    sae_degrees: float
    mse_per_band: list[float]
    psnr_per_band_db: list[float]
    psnr_mean_db: float | None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.mse_per_band) != len(self.psnr_per_band_db):
            raise ValidationError("per-band metric lists must have equal length")
        if not 0.0 <= self.sae_degrees <= 180.0:
            raise ValidationError(
                f"sae_degrees must lie in [0, 180], got {self.sae_degrees}"
            )
        if any(m < 0.0 for m in self.mse_per_band):
            raise ValidationError("mse_per_band entries must be >= 0")


# ---------------------------------------------------------------------------
# Atomic file writing
# ---------------------------------------------------------------------------


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise FormatError(f"cannot write {path}: {exc}") from exc


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Header handling (cube / PAN)
# ---------------------------------------------------------------------------


def _header_path(data_path: Path) -> Path:
    return data_path.with_name(data_path.name + ".hdr")


def _find_header(data_path: Path) -> Path:
    """Accept both ``file.bsq.hdr`` (ours) and ``file.hdr`` (ENVI replace-ext)."""
    appended = _header_path(data_path)
    if appended.exists():
        return appended
    if data_path.suffix:
        replaced = data_path.with_suffix(".hdr")
        if replaced.exists():
            return replaced
    raise FormatError(f"header file not found for {data_path} (looked for {appended})")


def _format_header(
    samples: int, lines: int, bands: int, wavelengths_nm: np.ndarray | None
) -> str:
    out = [
        ENVI_MAGIC,
        f"samples = {samples}",
        f"lines = {lines}",
        f"bands = {bands}",
        "data type = 4",
        "interleave = bsq",
        "byte order = 0",
    ]
    if wavelengths_nm is not None:
        wl = ", ".join(repr(float(w)) for w in wavelengths_nm)
        out.append(f"wavelength = {{ {wl} }}")
    return "\n".join(out) + "\n"


def _parse_header(path: Path) -> dict[str, str]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read header {path}: {exc}") from exc

    fields: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line == ENVI_MAGIC:
            continue
        if "=" not in line:
            raise FormatError(f"{path}: garbled header line {i}: {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        # brace-delimited values may span several physical lines
        if value.startswith("{") and "}" not in value:
            while i < len(lines):
                value += " " + lines[i].strip()
                i += 1
                if "}" in value:
                    break
            else:
                raise FormatError(f"{path}: unterminated '{{' in header key {key!r}")
        if not key:
            raise FormatError(f"{path}: empty header key on line {i}")
        fields[key] = value
    return fields


def _header_int(fields: dict[str, str], key: str, path: Path) -> int:
    if key not in fields:
        raise FormatError(f"{path}: missing header key {key!r}")
    try:
        return int(fields[key])
    except ValueError as exc:
        raise FormatError(f"{path}: header key {key!r} is not an integer") from exc


def _header_wavelengths(fields: dict[str, str], path: Path) -> np.ndarray:
    if "wavelength" not in fields:
        raise FormatError(f"{path}: missing header key 'wavelength'")
    raw = fields["wavelength"].strip()
    if not (raw.startswith("{") and raw.endswith("}")):
        raise FormatError(f"{path}: wavelength list must be brace-delimited")
    body = raw[1:-1].strip()
    if not body:
        raise FormatError(f"{path}: empty wavelength list")
    try:
        return np.array([float(tok) for tok in body.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric wavelength entry") from exc


def _check_raster_header(fields: dict[str, str], path: Path) -> None:
    if _header_int(fields, "data type", path) != 4:
        raise FormatError(f"{path}: unsupported data type (only 4 = float32)")
    interleave = fields.get("interleave", "")
    if interleave.lower() != "bsq":
        raise FormatError(f"{path}: unsupported interleave {interleave!r} (only bsq)")
    if _header_int(fields, "byte order", path) != 0:
        raise FormatError(f"{path}: unsupported byte order (only 0 = little-endian)")


def _read_raster_values(
    data_path: Path, samples: int, lines: int, bands: int
) -> np.ndarray:
    expected = samples * lines * bands * _FLOAT32_BYTES
    try:
        raw = data_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {data_path}: {exc}") from exc
    if len(raw) != expected:
        raise FormatError(
            f"{data_path}: data file is {len(raw)} bytes, expected {expected} "
            f"({samples}x{lines}x{bands} float32)"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(bands, lines, samples)
    return values.copy()  # frombuffer views are read-only


# ---------------------------------------------------------------------------
# Cube / PAN operations
# ---------------------------------------------------------------------------


def write_cube(cube: SpectralCube, path: str | Path) -> None:
    """Write ``cube`` as BSQ float32 data plus a paired text header."""
    cube.validate()
    data_path = Path(path)
    payload = np.ascontiguousarray(cube.values, dtype="<f4").tobytes()
    _atomic_write_bytes(data_path, payload)
    _atomic_write_text(
        _header_path(data_path),
        _format_header(cube.samples, cube.lines, cube.bands, cube.wavelengths_nm),
    )


def read_cube(path: str | Path) -> SpectralCube:
    """Read a BSQ float32 cube written by :func:`write_cube` (bit-exact)."""
    data_path = Path(path)
    header_path = _find_header(data_path)
    fields = _parse_header(header_path)
    _check_raster_header(fields, header_path)
    samples = _header_int(fields, "samples", header_path)
    lines = _header_int(fields, "lines", header_path)
    bands = _header_int(fields, "bands", header_path)
    wavelengths = _header_wavelengths(fields, header_path)
    if wavelengths.size != bands:
        raise FormatError(
            f"{header_path}: header says bands={bands} but wavelength list "
            f"has {wavelengths.size} entries"
        )
    values = _read_raster_values(data_path, samples, lines, bands)
    try:
        return SpectralCube(
            samples=samples,
            lines=lines,
            bands=bands,
            wavelengths_nm=wavelengths,
            values=values,
        )
    except ValidationError as exc:
        raise FormatError(f"{data_path}: {exc}") from exc


def write_pan(pan: PanImage, path: str | Path) -> None:
    """Write a PAN image in the cube format with bands=1 and no wavelength list."""
    pan.validate()
    data_path = Path(path)
    payload = np.ascontiguousarray(pan.values, dtype="<f4").tobytes()
    _atomic_write_bytes(data_path, payload)
    _atomic_write_text(
        _header_path(data_path),
        _format_header(pan.samples, pan.lines, 1, None),
    )


def read_pan(path: str | Path) -> PanImage:
    data_path = Path(path)
    header_path = _find_header(data_path)
    fields = _parse_header(header_path)
    _check_raster_header(fields, header_path)
    samples = _header_int(fields, "samples", header_path)
    lines = _header_int(fields, "lines", header_path)
    bands = _header_int(fields, "bands", header_path)
    if bands != 1:
        raise FormatError(f"{header_path}: PAN image must have bands=1, got {bands}")
    values = _read_raster_values(data_path, samples, lines, 1)
    try:
        return PanImage(samples=samples, lines=lines, values=values[0])
    except ValidationError as exc:
        raise FormatError(f"{data_path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Label map CSV
# ---------------------------------------------------------------------------


def read_labels(path: str | Path) -> LabelMap:
    """Read a rectangular CSV of nonnegative integer class ids."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {p}: {exc}") from exc

    rows: list[list[int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        row: list[int] = []
        for cell in cells:
            token = cell.strip()
            try:
                value = int(token)
            except ValueError as exc:
                raise FormatError(
                    f"{p}: line {lineno}: non-integer label cell {token!r}"
                ) from exc
            if value < 0:
                raise FormatError(f"{p}: line {lineno}: negative label {value}")
            row.append(value)
        if rows and len(row) != len(rows[0]):
            raise FormatError(
                f"{p}: line {lineno}: ragged row ({len(row)} cells, "
                f"expected {len(rows[0])})"
            )
        rows.append(row)
    if not rows:
        raise FormatError(f"{p}: empty label file")
    labels = np.array(rows, dtype=np.int64)
    return LabelMap(samples=labels.shape[1], lines=labels.shape[0], labels=labels)


def write_labels(label_map: LabelMap, path: str | Path) -> None:
    label_map.validate()
    lines = "\n".join(
        ",".join(str(int(v)) for v in row) for row in label_map.labels
    )
    _atomic_write_text(Path(path), lines + "\n")


# ---------------------------------------------------------------------------
# Spectral library CSV
# ---------------------------------------------------------------------------


def read_library(path: str | Path) -> SpectralLibrary:
    """Read a library CSV: header ``wavelength_nm,<name1>,...``, one row per sample."""
    p = Path(path)
    try:
        fh = open(p, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {p}: {exc}") from exc

    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{p}: empty library file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "wavelength_nm":
            raise FormatError(
                f"{p}: first header column must be 'wavelength_nm', got "
                f"{header[0] if header else '<none>'!r}"
            )
        names = header[1:]
        if not names:
            raise FormatError(f"{p}: library has no material columns")
        if any(not n for n in names):
            raise FormatError(f"{p}: empty material name in header")
        if len(set(names)) != len(names):
            raise FormatError(f"{p}: duplicate material names in header")

        wavelengths: list[float] = []
        columns: list[list[float]] = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{p}: line {lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                parsed = [float(c) for c in row]
            except ValueError as exc:
                raise FormatError(f"{p}: line {lineno}: non-numeric cell") from exc
            if wavelengths and parsed[0] <= wavelengths[-1]:
                raise FormatError(
                    f"{p}: line {lineno}: wavelengths not strictly increasing"
                )
            wavelengths.append(parsed[0])
            for j, value in enumerate(parsed[1:]):
                columns[j].append(value)

    if not wavelengths:
        raise FormatError(f"{p}: library has no wavelength rows")
    wl = np.array(wavelengths, dtype=np.float64)
    try:
        materials = [
            LibraryMaterial(name=n, wavelengths_nm=wl, reflectance=np.array(col))
            for n, col in zip(names, columns)
        ]
        return SpectralLibrary(materials=materials)
    except ValidationError as exc:
        raise FormatError(f"{p}: {exc}") from exc


# ---------------------------------------------------------------------------
# Quality report JSON
# ---------------------------------------------------------------------------


def _psnr_to_json(value: float) -> float | None:
    return None if math.isinf(value) else value


def write_report(report: QualityReport, path: str | Path) -> None:
    """Serialize a report as JSON; infinite PSNR values become null."""
    payload = {
        "sae_degrees": report.sae_degrees,
        "mse_per_band": list(report.mse_per_band),
        "psnr_per_band_db": [_psnr_to_json(v) for v in report.psnr_per_band_db],
        "psnr_mean_db": report.psnr_mean_db,
        "parameters": report.parameters,
    }
    _atomic_write_text(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_report(path: str | Path) -> QualityReport:
    p = Path(path)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON: {exc}") from exc
    try:
        psnr = [
            math.inf if v is None else float(v) for v in payload["psnr_per_band_db"]
        ]
        mean = payload["psnr_mean_db"]
        return QualityReport(
            sae_degrees=float(payload["sae_degrees"]),
            mse_per_band=[float(v) for v in payload["mse_per_band"]],
            psnr_per_band_db=psnr,
            psnr_mean_db=None if mean is None else float(mean),
            parameters=dict(payload.get("parameters", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{p}: malformed report: {exc}") from exc
    except ValidationError as exc:
        raise FormatError(f"{p}: {exc}") from exc
