"""Fuzzy C-means clustering of PAN intensities inside one superpixel.

A superpixel is the r x r block of PAN pixels covered by one low-resolution
cube pixel. The class count comes from the unmixing stage (number of active
endmembers) and is clamped to the number of distinct intensities in the
block. Classes are canonically ordered brightest-first so downstream
matching is independent of iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rasters import PanImage


@dataclass
class FcmConfig:
    """Fuzzy C-means parameters; defaults follow common FCM practice."""

    fuzzifier_m: float = 2.0
    max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0
    init: str = "quantile"

    def __post_init__(self) -> None:
        if self.fuzzifier_m <= 1.0:
            raise ValidationError(
                f"fuzzifier_m must be > 1, got {self.fuzzifier_m}"
            )
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol <= 0.0:
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.init not in ("quantile", "random"):
            raise ValidationError(f"unknown init mode {self.init!r}")


@dataclass(eq=False)
class SuperpixelSegmentation:
    """Fuzzy memberships and hard labels for one r x r PAN block.

    Classes are sorted by descending center intensity (class 0 is the
    brightest); ``labels`` is the argmax defuzzification of ``memberships``.
    """

    block_origin: tuple[int, int]
    r: int
    c: int
    memberships: np.ndarray
    labels: np.ndarray
    centers: np.ndarray

    def __post_init__(self) -> None:
        self.memberships = np.asarray(self.memberships, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        n = self.r * self.r
        if not 1 <= self.c <= n:
            raise ValidationError(f"class count {self.c} outside [1, {n}]")
        if self.memberships.shape != (n, self.c):
            raise ValidationError(
                f"memberships shape {self.memberships.shape} does not match "
                f"(r*r, c)=({n}, {self.c})"
            )
        if self.labels.shape != (n,):
            raise ValidationError("labels must have one entry per block pixel")
        if self.centers.shape != (self.c,):
            raise ValidationError("centers must have one entry per class")
        row_sums = self.memberships.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ValidationError("membership rows must sum to 1 within 1e-9")
        if np.any(self.labels != np.argmax(self.memberships, axis=1)):
            raise ValidationError("labels must be the argmax of membership rows")

    def label_grid(self) -> np.ndarray:
        """Hard labels reshaped to the r x r block."""
        return self.labels.reshape(self.r, self.r)

    def area_fractions(self) -> np.ndarray:
        """Fraction of block pixels assigned to each class."""
        counts = np.bincount(self.labels, minlength=self.c)
        return counts / float(self.labels.size)


def _initial_centers(x: np.ndarray, c: int, cfg: FcmConfig) -> np.ndarray:
    """Deterministic default: c midpoint quantiles of the distinct intensities.

    Quantiles of the distinct values (not the raw block) keep the initial
    centers pairwise distinct even for heavily repeated intensities.
    """
    unique = np.unique(x)
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        take = min(c, unique.size)
        centers = rng.choice(unique, size=take, replace=False)
        if take < c:  # pad with quantiles when distinct values run short
            q = (2.0 * np.arange(c - take) + 1.0) / (2.0 * (c - take))
            centers = np.concatenate([centers, np.quantile(unique, q)])
        return np.sort(centers)
    q = (2.0 * np.arange(c) + 1.0) / (2.0 * c)
    return np.quantile(unique, q)


def _memberships(x: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """Standard FCM membership update with the exact-hit singularity rule."""
    dist = np.abs(x[:, None] - centers[None, :])
    exact = dist == 0.0
    u = np.zeros((x.size, centers.size), dtype=np.float64)

    hit_rows = exact.any(axis=1)
    if np.any(hit_rows):
        # a point sitting on a center is crisply that center's
        first_hit = np.argmax(exact[hit_rows], axis=1)
        u[np.flatnonzero(hit_rows), first_hit] = 1.0

    free = ~hit_rows
    if np.any(free):
        power = 2.0 / (m - 1.0)
        inv = dist[free] ** -power
        u[free] = inv / inv.sum(axis=1, keepdims=True)
    return u


def fcm_objective(
    x: np.ndarray, memberships: np.ndarray, centers: np.ndarray, m: float
) -> float:
    """Weighted within-cluster scatter J_m = sum_ij u_ij^m d_ij^2."""
    dist2 = (np.asarray(x, dtype=np.float64)[:, None] - centers[None, :]) ** 2
    return float(np.sum(memberships**m * dist2))


def fcm(
    intensities: np.ndarray,
    c: int,
    cfg: FcmConfig,
    return_objective: bool = False,
) -> tuple[np.ndarray, np.ndarray] | tuple[np.ndarray, np.ndarray, list[float]]:
    """Cluster scalar intensities into c fuzzy classes.

    Alternates the membership update
    u_ij = 1 / sum_k (d_ij / d_ik)^(2/(m-1)) with the center update
    v_j = sum_i u_ij^m x_i / sum_i u_ij^m, stopping when the largest center
    movement falls below ``cfg.tol`` or after ``cfg.max_iter`` iterations.

    Returns (memberships, centers), plus the per-iteration objective trace
    when ``return_objective`` is set.
    """
    x = np.asarray(intensities, dtype=np.float64).ravel()
    if c < 1:
        raise ValidationError(f"class count must be >= 1, got {c}")
    if c > x.size:
        raise ValidationError(
            f"class count {c} exceeds the {x.size} available points"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("intensities must be finite")
    if c >= 2 and np.unique(x).size == 1:
        raise ValidationError(
            f"all {x.size} intensities are identical; cannot form {c} classes "
            "(reduce the class count)"
        )

    m = cfg.fuzzifier_m
    centers = _initial_centers(x, c, cfg)
    u = np.full((x.size, c), 1.0 / c)
    trace: list[float] = []
    for _ in range(cfg.max_iter):
        u = _memberships(x, centers, m)
        weights = u**m
        new_centers = (weights * x[:, None]).sum(axis=0) / weights.sum(axis=0)
        movement = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if return_objective:
            trace.append(fcm_objective(x, u, centers, m))
        if movement < cfg.tol:
            break

    if return_objective:
        return u, centers, trace
    return u, centers


def segment_superpixel(
    pan: PanImage,
    block_origin: tuple[int, int],
    r: int,
    c: int,
    cfg: FcmConfig,
) -> SuperpixelSegmentation:
    """Run FCM on one r x r PAN block and canonicalize the class order.

    The requested class count is clamped to the number of distinct
    intensities in the block. Output classes are sorted by descending
    center intensity and labels are argmax-defuzzified.
    """
    line, sample = block_origin
    if line < 0 or sample < 0 or line + r > pan.lines or sample + r > pan.samples:
        raise ValidationError(
            f"block origin {block_origin} with r={r} falls outside the "
            f"{pan.lines}x{pan.samples} PAN image"
        )
    if c < 1:
        raise ValidationError(f"requested class count must be >= 1, got {c}")

    block = pan.values[line : line + r, sample : sample + r]
    x = block.astype(np.float64).ravel()
    c_eff = min(c, int(np.unique(x).size))

    memberships, centers = fcm(x, c_eff, cfg)

    order = np.argsort(-centers, kind="stable")
    memberships = memberships[:, order]
    centers = centers[order]
    labels = np.argmax(memberships, axis=1)

    return SuperpixelSegmentation(
        block_origin=(line, sample),
        r=r,
        c=c_eff,
        memberships=memberships,
        labels=labels,
        centers=centers,
    )
