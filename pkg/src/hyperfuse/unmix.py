"""NMF-based linear spectral unmixing of the low-resolution cube.

The measured spectra X (bands x pixels) are factored as X ~ U V^T with
nonnegative U (endmember signatures, one per column) and V (per-pixel
weights) by minimizing the squared-Frobenius cost with multiplicative
updates. Abundances are turned into sum-to-one fractions post hoc; the
signature columns are left unscaled because fusion stamps whole signatures
onto subpixels.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .rasters import SpectralCube, _atomic_write_text, read_cube, write_cube


@dataclass(eq=False)
class EndmemberModel:
    """Endmember signatures S (L x P) and abundance columns A (P x N).

    Abundance column n corresponds to low-res pixel (n // n_samples,
    n % n_samples), i.e. row-major order. ``wavelengths_nm`` carries the
    band grid of the cube the model was fitted to, so reconstructed cubes
    inherit it.
    """

    P: int
    signatures: np.ndarray
    abundances: np.ndarray
    n_samples: int
    n_lines: int
    wavelengths_nm: np.ndarray

    def __post_init__(self) -> None:
        self.signatures = np.asarray(self.signatures, dtype=np.float64)
        self.abundances = np.asarray(self.abundances, dtype=np.float64)
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.P < 1:
            raise ValidationError(f"endmember count must be >= 1, got {self.P}")
        if self.signatures.ndim != 2 or self.abundances.ndim != 2:
            raise ValidationError("signatures and abundances must be 2-D matrices")
        bands = self.signatures.shape[0]
        if self.signatures.shape != (bands, self.P):
            raise ValidationError(
                f"signatures shape {self.signatures.shape} does not match (L, P)"
            )
        if self.wavelengths_nm.shape != (bands,):
            raise ValidationError(
                f"wavelength list has {self.wavelengths_nm.size} entries, "
                f"expected {bands}"
            )
        n = self.n_samples * self.n_lines
        if self.abundances.shape != (self.P, n):
            raise ValidationError(
                f"abundances shape {self.abundances.shape} does not match "
                f"(P, N)=({self.P}, {n})"
            )
        for name, arr in (("signatures", self.signatures), ("abundances", self.abundances)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite")
            if np.any(arr < 0.0):
                raise ValidationError(f"{name} must be nonnegative")
        if bands < self.P:
            warnings.warn(
                f"endmember count P={self.P} exceeds band count L={bands}; "
                "the factorization is underdetermined",
                stacklevel=3,
            )

    def abundance_at(self, line: int, sample: int) -> np.ndarray:
        """Abundance column of the low-res pixel at (line, sample)."""
        return self.abundances[:, line * self.n_samples + sample]


@dataclass
class NmfConfig:
    """Iteration control for :func:`nmf_unmix`.

    ``init`` selects random nonnegative initialization (seeded) or, when
    ``init_u``/``init_v`` are given, the provided factor matrices.
    """

    P: int
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    init: str = "random"
    init_u: np.ndarray | None = None
    init_v: np.ndarray | None = None
    epsilon_guard: float = 1e-12

    def __post_init__(self) -> None:
        if self.P < 1:
            raise ValidationError(f"endmember count must be >= 1, got {self.P}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol <= 0.0:
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.epsilon_guard <= 0.0:
            raise ValidationError(
                f"epsilon_guard must be > 0, got {self.epsilon_guard}"
            )
        if self.init not in ("random", "provided"):
            raise ValidationError(f"unknown init mode {self.init!r}")
        if self.init == "provided" and (self.init_u is None or self.init_v is None):
            raise ValidationError("init='provided' requires init_u and init_v")


def nmf_cost(x: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Squared Frobenius norm of the factorization residual, ||X - U V^T||^2."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.ndim != 2 or u.ndim != 2 or v.ndim != 2:
        raise ValidationError("nmf_cost expects 2-D matrices")
    if u.shape[0] != x.shape[0] or v.shape[0] != x.shape[1] or u.shape[1] != v.shape[1]:
        raise ValidationError(
            f"shape mismatch: X {x.shape}, U {u.shape}, V {v.shape}"
        )
    residual = x - u @ v.T
    return float(np.sum(residual * residual))


def _init_factors(
    x: np.ndarray, cfg: NmfConfig
) -> tuple[np.ndarray, np.ndarray]:
    length, n = x.shape
    if cfg.init == "provided" or (cfg.init_u is not None and cfg.init_v is not None):
        u = np.asarray(cfg.init_u, dtype=np.float64).copy()
        v = np.asarray(cfg.init_v, dtype=np.float64).copy()
        if u.shape != (length, cfg.P) or v.shape != (n, cfg.P):
            raise ValidationError(
                f"provided init shapes U {u.shape} / V {v.shape} do not match "
                f"(L, P)=({length}, {cfg.P}) and (N, P)=({n}, {cfg.P})"
            )
        if np.any(u < 0.0) or np.any(v < 0.0):
            raise ValidationError("provided init factors must be nonnegative")
        return u, v

    # uniform in (0, 1], rescaled so the initial product matches X's mean
    rng = np.random.default_rng(cfg.seed)
    u = 1.0 - rng.random((length, cfg.P))
    v = 1.0 - rng.random((n, cfg.P))
    product_mean = float(np.mean(u @ v.T))
    scale = np.sqrt(float(np.mean(x)) / product_mean)
    return u * scale, v * scale


def nmf_unmix(
    x: np.ndarray,
    cfg: NmfConfig,
    n_samples: int | None = None,
    n_lines: int | None = None,
    wavelengths_nm: np.ndarray | None = None,
) -> tuple[EndmemberModel, list[float]]:
    """Factor X ~ U V^T with multiplicative updates; returns model + cost trace.

    Updates per iteration (epsilon-guarded denominators):

        U <- U * (X V) / (U V^T V + eps)
        V <- V * (X^T U) / (V U^T U + eps)

    Stops when the relative cost decrease drops below ``cfg.tol`` or after
    ``cfg.max_iter`` iterations. The trace holds the cost at initialization
    and after every completed iteration; it is nonincreasing up to rounding.
    The returned abundances are raw V^T columns (not yet sum-to-one); apply
    :func:`normalize_abundances` before fusion.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("nmf_unmix expects a 2-D L x N matrix")
    if not np.all(np.isfinite(x)):
        raise ValidationError("X must be finite")
    if np.any(x < 0.0):
        raise ValidationError("X must be nonnegative")
    if not np.any(x > 0.0):
        raise ValidationError("X is all zero; unmixing is degenerate")
    length, n = x.shape
    if cfg.P > min(length, n):
        raise ValidationError(
            f"endmember count P={cfg.P} exceeds min(L, N)=min({length}, {n})"
        )
    if n_samples is None:
        n_samples, n_lines = n, 1
    elif n_lines is None or n_samples * n_lines != n:
        raise ValidationError(
            f"geometry {n_lines}x{n_samples} does not match N={n} pixels"
        )
    if wavelengths_nm is None:
        wavelengths_nm = np.arange(1, length + 1, dtype=np.float64)

    eps = cfg.epsilon_guard
    u, v = _init_factors(x, cfg)
    trace = [nmf_cost(x, u, v)]
    for _ in range(cfg.max_iter):
        u *= (x @ v) / (u @ (v.T @ v) + eps)
        v *= (x.T @ u) / (v @ (u.T @ u) + eps)
        cost = nmf_cost(x, u, v)
        trace.append(cost)
        previous = trace[-2]
        if previous <= 0.0 or (previous - cost) / previous < cfg.tol:
            break

    model = EndmemberModel(
        P=cfg.P,
        signatures=u,
        abundances=v.T,
        n_samples=n_samples,
        n_lines=n_lines,
        wavelengths_nm=wavelengths_nm,
    )
    return model, trace


def canonicalize_scale(model: EndmemberModel) -> EndmemberModel:
    """Fix NMF's per-endmember scale with the pure-pixel convention.

    The factorization only constrains the product U V^T, so each signature
    column carries an arbitrary scalar. This moves that scalar so the
    largest raw weight of every endmember becomes 1: its purest pixel is
    treated as fully pure and the signature takes pure-pixel reflectance
    scale, which is what stamping whole signatures onto subpixels assumes.
    The product (and the cost) is unchanged. Idempotent after one pass only
    if abundances are untouched; apply before normalization.
    """
    scale = model.abundances.max(axis=1)
    scale = np.where(scale > 0.0, scale, 1.0)
    return EndmemberModel(
        P=model.P,
        signatures=model.signatures * scale[np.newaxis, :],
        abundances=model.abundances / scale[:, np.newaxis],
        n_samples=model.n_samples,
        n_lines=model.n_lines,
        wavelengths_nm=model.wavelengths_nm,
    )


def normalize_abundances(
    model: EndmemberModel, epsilon_guard: float = 1e-12
) -> EndmemberModel:
    """Divide each abundance column by its sum (degenerate columns -> uniform).

    Columns whose sum falls below ``epsilon_guard`` become uniform 1/P.
    Signatures are not rescaled. Idempotent.
    """
    sums = model.abundances.sum(axis=0)
    degenerate = sums < epsilon_guard
    safe_sums = np.where(degenerate, 1.0, sums)
    normalized = model.abundances / safe_sums
    if np.any(degenerate):
        normalized[:, degenerate] = 1.0 / model.P
    return EndmemberModel(
        P=model.P,
        signatures=model.signatures,
        abundances=normalized,
        n_samples=model.n_samples,
        n_lines=model.n_lines,
        wavelengths_nm=model.wavelengths_nm,
    )


def active_endmembers(a: np.ndarray, threshold: float) -> list[int]:
    """Endmember indices with abundance >= threshold, descending by abundance.

    Ties break toward the lower index. If no abundance reaches the
    threshold, the single argmax index is returned.
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(-a, kind="stable")
    selected = [int(i) for i in order if a[i] >= threshold]
    if not selected:
        return [int(np.argmax(a))]
    return selected


# ---------------------------------------------------------------------------
# Persistence: signatures CSV + abundance cube
# ---------------------------------------------------------------------------


def write_endmember_model(
    model: EndmemberModel, signatures_path: str | Path, abundance_path: str | Path
) -> None:
    """Persist signatures as CSV and abundances as a bands=P raster cube.

    The abundance cube's header wavelength list holds the endmember indices
    1..P instead of wavelengths.
    """
    header = ["wavelength_nm"] + [f"e{i + 1}" for i in range(model.P)]
    rows = [",".join(header)]
    for band in range(model.signatures.shape[0]):
        cells = [repr(float(model.wavelengths_nm[band]))]
        cells += [repr(float(s)) for s in model.signatures[band]]
        rows.append(",".join(cells))
    _atomic_write_text(Path(signatures_path), "\n".join(rows) + "\n")

    abundance_cube = SpectralCube(
        samples=model.n_samples,
        lines=model.n_lines,
        bands=model.P,
        wavelengths_nm=np.arange(1, model.P + 1, dtype=np.float64),
        values=model.abundances.reshape(model.P, model.n_lines, model.n_samples),
    )
    write_cube(abundance_cube, abundance_path)


def read_endmember_model(
    signatures_path: str | Path, abundance_path: str | Path
) -> EndmemberModel:
    """Load a persisted model; abundance columns are renormalized to sum 1.

    Renormalization undoes the float32 storage rounding of the abundance
    cube (column sums drift by ~1e-7 otherwise).
    """
    p = Path(signatures_path)
    try:
        fh = open(p, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {p}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{p}: empty signatures file") from None
        if not header or header[0].strip() != "wavelength_nm":
            raise FormatError(f"{p}: first column must be 'wavelength_nm'")
        endmembers = len(header) - 1
        if endmembers < 1:
            raise FormatError(f"{p}: signatures file has no endmember columns")
        wavelengths: list[float] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != endmembers + 1:
                raise FormatError(
                    f"{p}: line {lineno}: expected {endmembers + 1} cells, got {len(row)}"
                )
            try:
                parsed = [float(c) for c in row]
            except ValueError as exc:
                raise FormatError(f"{p}: line {lineno}: non-numeric cell") from exc
            wavelengths.append(parsed[0])
            rows.append(parsed[1:])
    if not rows:
        raise FormatError(f"{p}: signatures file has no band rows")

    cube = read_cube(abundance_path)
    if cube.bands != endmembers:
        raise FormatError(
            f"{abundance_path}: abundance cube has {cube.bands} bands but "
            f"signatures file has {endmembers} endmembers"
        )
    model = EndmemberModel(
        P=endmembers,
        signatures=np.array(rows, dtype=np.float64),
        abundances=cube.values.reshape(endmembers, cube.pixel_count).astype(np.float64),
        n_samples=cube.samples,
        n_lines=cube.lines,
        wavelengths_nm=np.array(wavelengths, dtype=np.float64),
    )
    return normalize_abundances(model)
