"""Fuse unmixing abundances with per-superpixel PAN segmentation.

For every low-resolution pixel the r x r PAN block is segmented into as many
classes as the pixel has active endmembers, segment area fractions are
matched against abundance fractions (minimum-L1 injective assignment,
enumerated exhaustively), ambiguous matches are resolved by spatial
correlation with already-fused north/west neighbors, and each subpixel is
stamped with exactly one endmember signature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rasters import PanImage, SpectralCube
from .segment import FcmConfig, SuperpixelSegmentation, segment_superpixel
from .unmix import EndmemberModel, active_endmembers, normalize_abundances

_COST_TIE_EPS = 1e-9


@dataclass
class FusionConfig:
    """Fusion knobs: scale, activity threshold, and the ambiguity gap."""

    scale: int = 3
    distinct_delta: float = 0.1
    abundance_threshold: float = 0.05

    def __post_init__(self) -> None:
        if self.scale < 2:
            raise ValidationError(f"scale must be >= 2, got {self.scale}")
        if not 0.0 < self.distinct_delta < 1.0:
            raise ValidationError(
                f"distinct_delta must lie in (0, 1), got {self.distinct_delta}"
            )
        if not 0.0 < self.abundance_threshold < 1.0:
            raise ValidationError(
                f"abundance_threshold must lie in (0, 1), got {self.abundance_threshold}"
            )


@dataclass
class Assignment:
    """Injective mapping from segmentation classes to endmember indices."""

    class_to_endmember: dict[int, int]
    ambiguous: bool
    cost: float
    superpixel: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        mapped = list(self.class_to_endmember.values())
        if len(set(mapped)) != len(mapped):
            raise ValidationError("class-to-endmember mapping must be injective")
        c = len(self.class_to_endmember)
        if sorted(self.class_to_endmember.keys()) != list(range(c)):
            raise ValidationError("every class 0..c-1 must be mapped exactly once")
        if not np.isfinite(self.cost) or self.cost < 0.0:
            raise ValidationError(f"assignment cost must be finite and >= 0, got {self.cost}")

    def mapping_key(self) -> tuple[int, ...]:
        """Lexicographic tie-break key: mapped endmember per class, in class order."""
        c = len(self.class_to_endmember)
        return tuple(self.class_to_endmember[k] for k in range(c))


@dataclass(eq=False)
class SubpixelMap:
    """Per-subpixel endmember index over the high-resolution grid."""

    samples: int
    lines: int
    endmember_index: np.ndarray

    def __post_init__(self) -> None:
        self.endmember_index = np.asarray(self.endmember_index, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        if self.endmember_index.shape != (self.lines, self.samples):
            raise ValidationError(
                f"endmember_index shape {self.endmember_index.shape} does not "
                f"match (lines, samples)=({self.lines}, {self.samples})"
            )
        if np.any(self.endmember_index < 0):
            raise ValidationError("every subpixel must be assigned an endmember")


@dataclass
class NeighborContext:
    """Already-fused endmember ids bordering a block (raster-scan order).

    ``north`` holds the HR row directly above the block, ``west`` the HR
    column directly left of it; None at scene borders.
    """

    north: np.ndarray | None = None
    west: np.ndarray | None = None

    def is_empty(self) -> bool:
        return self.north is None and self.west is None


# ---------------------------------------------------------------------------
# Segment-to-endmember matching
# ---------------------------------------------------------------------------


def _enumerate_costs(
    areas: np.ndarray, abundances: np.ndarray
) -> list[tuple[float, tuple[int, ...]]]:
    """Cost of every injective class->position assignment, in permutation order."""
    c = areas.size
    out = []
    for perm in itertools.permutations(range(c)):
        cost = float(sum(abs(areas[k] - abundances[perm[k]]) for k in range(c)))
        out.append((cost, perm))
    return out


def match_segments(
    area_fractions: np.ndarray,
    abundances_active: np.ndarray,
    distinct_delta: float = 0.1,
    endmember_ids: list[int] | None = None,
) -> Assignment:
    """Minimum-L1 injective matching of segment areas to abundance fractions.

    The mapping minimizing sum_k |area(k) - abundance(match(k))| is found by
    exhaustive enumeration (c <= r^2, so this is exact and cheap). The
    result is flagged ambiguous when the best and second-best total costs
    differ by less than 1e-9, or when any two active abundances differ by
    less than ``distinct_delta``.

    ``endmember_ids`` translates vector positions to endmember indices
    (defaults to 0..c-1).
    """
    areas = np.asarray(area_fractions, dtype=np.float64).ravel()
    abundances = np.asarray(abundances_active, dtype=np.float64).ravel()
    if areas.size == 0 or abundances.size == 0:
        raise ValidationError("match_segments requires nonempty inputs")
    if areas.size != abundances.size:
        raise ValidationError(
            f"cardinality mismatch: {areas.size} area fractions vs "
            f"{abundances.size} abundances"
        )
    c = areas.size
    if endmember_ids is None:
        endmember_ids = list(range(c))
    if len(endmember_ids) != c:
        raise ValidationError("endmember_ids must have one entry per class")

    costs = _enumerate_costs(areas, abundances)
    best_cost, best_perm = min(costs, key=lambda t: t[0])

    ambiguous = False
    if c > 1:
        runner_up = min(cost for cost, perm in costs if perm != best_perm)
        if runner_up - best_cost < _COST_TIE_EPS:
            ambiguous = True
        gaps = np.abs(abundances[:, None] - abundances[None, :])
        min_gap = float(np.min(gaps[np.triu_indices(c, k=1)]))
        if min_gap < distinct_delta:
            ambiguous = True

    mapping = {k: int(endmember_ids[best_perm[k]]) for k in range(c)}
    return Assignment(class_to_endmember=mapping, ambiguous=ambiguous, cost=best_cost)


def candidate_assignments(
    area_fractions: np.ndarray,
    abundances_active: np.ndarray,
    distinct_delta: float = 0.1,
    endmember_ids: list[int] | None = None,
) -> list[Assignment]:
    """All assignments an ambiguous match could plausibly stand for.

    Starts from the minimum-cost ties and, when two abundances are closer
    than ``distinct_delta`` (so area matching cannot distinguish those
    endmembers), closes the set under swapping such close pairs. Candidates
    are sorted by cost, then lexicographically by mapping.
    """
    areas = np.asarray(area_fractions, dtype=np.float64).ravel()
    abundances = np.asarray(abundances_active, dtype=np.float64).ravel()
    if areas.size == 0 or areas.size != abundances.size:
        raise ValidationError("candidate_assignments requires matching nonempty inputs")
    c = areas.size
    if endmember_ids is None:
        endmember_ids = list(range(c))

    costs = _enumerate_costs(areas, abundances)
    cost_of = dict((perm, cost) for cost, perm in costs)
    best_cost = min(cost for cost, _ in costs)
    seed = {perm for cost, perm in costs if cost - best_cost <= _COST_TIE_EPS}

    close_pairs = [
        (i, j)
        for i in range(c)
        for j in range(i + 1, c)
        if abs(abundances[i] - abundances[j]) < distinct_delta
    ]
    selected = set(seed)
    frontier = list(seed)
    while frontier:
        perm = frontier.pop()
        for i, j in close_pairs:
            swapped = tuple(j if p == i else i if p == j else p for p in perm)
            if swapped not in selected:
                selected.add(swapped)
                frontier.append(swapped)

    out = [
        Assignment(
            class_to_endmember={k: int(endmember_ids[perm[k]]) for k in range(c)},
            ambiguous=True,
            cost=cost_of[perm],
        )
        for perm in selected
    ]
    out.sort(key=lambda a: (a.cost, a.mapping_key()))
    return out


def resolve_ambiguity(
    candidates: list[Assignment],
    context: NeighborContext,
    segmentation: SuperpixelSegmentation,
) -> Assignment:
    """Pick the candidate that agrees most with already-fused neighbors.

    Agreement counts 4-adjacent HR pairs in which a border subpixel of this
    block would receive the same endmember its fused neighbor already has.
    Ties (and an empty context) fall back to the ascending lexicographic
    class-to-endmember mapping.
    """
    if not candidates:
        raise ValidationError("resolve_ambiguity requires at least one candidate")
    if len(candidates) == 1:
        return candidates[0]

    grid = segmentation.label_grid()
    top_classes = grid[0, :]
    left_classes = grid[:, 0]

    def agreement(candidate: Assignment) -> int:
        score = 0
        if context.north is not None:
            for k in range(segmentation.r):
                if candidate.class_to_endmember[int(top_classes[k])] == context.north[k]:
                    score += 1
        if context.west is not None:
            for k in range(segmentation.r):
                if candidate.class_to_endmember[int(left_classes[k])] == context.west[k]:
                    score += 1
        return score

    return min(candidates, key=lambda a: (-agreement(a), a.mapping_key()))


# ---------------------------------------------------------------------------
# Per-superpixel fusion and whole-scene scan
# ---------------------------------------------------------------------------


def fuse_superpixel(
    a: np.ndarray,
    block_origin: tuple[int, int],
    pan: PanImage,
    model: EndmemberModel,
    cfg: FusionConfig,
    fcm_cfg: FcmConfig | None = None,
    context: NeighborContext | None = None,
) -> tuple[np.ndarray, Assignment]:
    """Fuse one superpixel: segment, match, resolve, stamp.

    ``a`` is the pixel's normalized abundance column. Returns the r x r
    block of endmember indices plus the chosen assignment. When the block
    has fewer distinct intensities than active endmembers, the largest
    abundances are kept and renormalized.
    """
    if fcm_cfg is None:
        fcm_cfg = FcmConfig()
    if context is None:
        context = NeighborContext()
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size != model.P:
        raise ValidationError(
            f"abundance column has {a.size} entries, expected P={model.P}"
        )

    active = active_endmembers(a, cfg.abundance_threshold)
    seg = segment_superpixel(pan, block_origin, cfg.scale, len(active), fcm_cfg)

    kept = active[: seg.c]
    kept_abundances = a[kept]
    kept_abundances = kept_abundances / kept_abundances.sum()
    areas = seg.area_fractions()

    assignment = match_segments(
        areas, kept_abundances, cfg.distinct_delta, endmember_ids=kept
    )
    if assignment.ambiguous:
        candidates = candidate_assignments(
            areas, kept_abundances, cfg.distinct_delta, endmember_ids=kept
        )
        assignment = resolve_ambiguity(candidates, context, seg)
    assignment.superpixel = (block_origin[0] // cfg.scale, block_origin[1] // cfg.scale)

    lookup = np.array([assignment.class_to_endmember[k] for k in range(seg.c)])
    block = lookup[seg.label_grid()]
    return block, assignment


def fuse_scene(
    lowres: SpectralCube,
    pan: PanImage,
    model: EndmemberModel,
    cfg: FusionConfig,
    fcm_cfg: FcmConfig | None = None,
) -> SubpixelMap:
    """Fuse every superpixel in raster-scan (row-major) order.

    The scan order makes "already fused" well defined: each block sees its
    north and west HR neighbors as context for ambiguity resolution, so the
    output is a pure function of the inputs.
    """
    r = cfg.scale
    if pan.lines != lowres.lines * r or pan.samples != lowres.samples * r:
        raise ValidationError(
            f"PAN is {pan.lines}x{pan.samples} but low-res {lowres.lines}x"
            f"{lowres.samples} at scale {r} requires "
            f"{lowres.lines * r}x{lowres.samples * r}"
        )
    if model.n_lines != lowres.lines or model.n_samples != lowres.samples:
        raise ValidationError(
            f"model geometry {model.n_lines}x{model.n_samples} does not match "
            f"low-res cube {lowres.lines}x{lowres.samples}"
        )

    normalized = normalize_abundances(model)
    full = np.full((pan.lines, pan.samples), -1, dtype=np.int64)
    for i in range(lowres.lines):
        for j in range(lowres.samples):
            origin = (i * r, j * r)
            context = NeighborContext(
                north=full[origin[0] - 1, origin[1] : origin[1] + r] if i > 0 else None,
                west=full[origin[0] : origin[0] + r, origin[1] - 1] if j > 0 else None,
            )
            block, _ = fuse_superpixel(
                normalized.abundance_at(i, j),
                origin,
                pan,
                normalized,
                cfg,
                fcm_cfg,
                context,
            )
            full[origin[0] : origin[0] + r, origin[1] : origin[1] + r] = block

    return SubpixelMap(samples=pan.samples, lines=pan.lines, endmember_index=full)


def reconstruct_hr(subpixel_map: SubpixelMap, model: EndmemberModel) -> SpectralCube:
    """Stamp each subpixel with its endmember's signature spectrum."""
    idx = subpixel_map.endmember_index
    if np.any(idx >= model.P):
        raise ValidationError(
            f"subpixel map references endmember {int(idx.max())} but the "
            f"model has only P={model.P}"
        )
    values = model.signatures[:, idx]  # (L, lines, samples)
    return SpectralCube(
        samples=subpixel_map.samples,
        lines=subpixel_map.lines,
        bands=model.signatures.shape[0],
        wavelengths_nm=model.wavelengths_nm,
        values=values,
    )
