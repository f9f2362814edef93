"""Stroke budget allocation and seed-point sampling.

Budgets are split across regions proportionally to their edge-point counts
and rounded with the largest-remainder method so they always sum exactly to
the requested total. Seed points are picked by greedy farthest point
sampling over the region's edge pixels, then turned into short random
Bezier curves anchored at each seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from strokeforge.errors import DomainError, NoDrawableContent
from strokeforge.geometry import DEFAULT_STROKE_WIDTH, Stroke

log = logging.getLogger(__name__)

DEFAULT_INIT_RADIUS = 0.05


@dataclass(frozen=True)
class AllocationEntry:
    region_id: int
    edge_count: int
    ratio: float
    budget: int


@dataclass(frozen=True)
class AllocationPlan:
    total_strokes: int
    entries: tuple[AllocationEntry, ...]

    def budget_for(self, region_id: int) -> int:
        for e in self.entries:
            if e.region_id == region_id:
                return e.budget
        raise KeyError(f"region {region_id} not in plan")


def allocate_strokes(edge_counts, total_strokes: int) -> AllocationPlan:
    """Split total_strokes across regions proportionally to edge counts.

    Largest-remainder rounding keeps the budgets summing exactly to the
    total; remainder ties break toward the larger edge count, then the
    lower region_id. When the total allows (>= number of populated
    regions), every region with edges gets at least one stroke.
    """
    counts = list(edge_counts)
    if total_strokes < 1:
        raise DomainError(f"total stroke count must be >= 1, got {total_strokes}")
    if not counts:
        raise DomainError("at least one region is required")
    if any(c < 0 for _, c in counts):
        raise DomainError("edge counts must be >= 0")
    total_edges = sum(c for _, c in counts)
    if total_edges == 0:
        raise NoDrawableContent("no drawable content: every region has zero edge points")

    n_nonzero = sum(1 for _, c in counts if c > 0)
    if total_strokes < n_nonzero:
        log.warning("stroke budget %d is below the %d populated regions; "
                    "some regions will receive zero strokes", total_strokes, n_nonzero)

    ratios = [c / total_edges for _, c in counts]
    exact = [r * total_strokes for r in ratios]
    budgets = [int(np.floor(e)) for e in exact]
    leftover = total_strokes - sum(budgets)
    # Hand out the leftover strokes by largest fractional remainder.
    order = sorted(range(len(counts)),
                   key=lambda i: (-(exact[i] - budgets[i]), -counts[i][1], counts[i][0]))
    for i in order[:leftover]:
        budgets[i] += 1

    if total_strokes >= n_nonzero:
        _ensure_populated_minimum(counts, budgets)

    entries = tuple(
        AllocationEntry(region_id=rid, edge_count=c, ratio=ratios[i], budget=budgets[i])
        for i, (rid, c) in enumerate(counts)
    )
    return AllocationPlan(total_strokes=total_strokes, entries=entries)


def _ensure_populated_minimum(counts, budgets) -> None:
    """Move strokes from the largest budgets so no populated region gets zero."""
    while True:
        starved = [i for i, (_, c) in enumerate(counts) if c > 0 and budgets[i] == 0]
        if not starved:
            return
        donor = max(range(len(budgets)), key=lambda i: budgets[i])
        if budgets[donor] <= 1:
            return
        budgets[donor] -= 1
        budgets[starved[0]] += 1


def fps(points, k: int, start: int | None = None) -> NDArray[np.float64]:
    """Greedy farthest point sampling under Euclidean distance.

    Starts from the point nearest the centroid (or the given index) and
    repeatedly adds the point whose minimum distance to the selected set
    is largest; all ties resolve to the earliest point in scan order.
    Returns the k selected points in selection order.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise DomainError("points must be a non-empty list of (x, y) pairs")
    n = len(pts)
    if not (1 <= k <= n):
        raise DomainError(f"k must be in [1, {n}], got {k}")

    if start is None:
        centroid = pts.mean(axis=0)
        start = int(np.argmin(((pts - centroid) ** 2).sum(axis=1)))
    elif not (0 <= start < n):
        raise DomainError(f"start index {start} out of range")

    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    min_d2 = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))
        chosen[i] = nxt
        np.minimum(min_d2, ((pts - pts[nxt]) ** 2).sum(axis=1), out=min_d2)
    return pts[chosen]


def sample_random(points, k: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Uniform baseline sampler (no replacement), for the FPS comparison."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise DomainError("points must be a non-empty list of (x, y) pairs")
    if not (1 <= k <= len(pts)):
        raise DomainError(f"k must be in [1, {len(pts)}], got {k}")
    idx = rng.choice(len(pts), size=k, replace=False)
    return pts[idx]


def min_pairwise_distance(points) -> float:
    """Smallest Euclidean distance between any two points of the set."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return float("inf")
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    d2[np.diag_indices(len(pts))] = np.inf
    return float(np.sqrt(d2.min()))


def sampling_spread_report(points, k: int, trials: int = 100,
                           rng_seed: int = 0) -> dict:
    """Compare FPS against uniform random sampling by minimum pairwise spread.

    Runs one deterministic FPS selection and `trials` random selections of
    the same size, reporting how often the FPS subset is at least as spread
    out as the random one.
    """
    pts = np.asarray(points, dtype=np.float64)
    fps_min = min_pairwise_distance(fps(pts, k))
    random_mins = []
    for trial in range(trials):
        rng = np.random.default_rng((rng_seed, trial))
        random_mins.append(min_pairwise_distance(sample_random(pts, k, rng)))
    wins = sum(1 for m in random_mins if fps_min >= m)
    return {
        "k": k,
        "n_points": int(len(pts)),
        "trials": trials,
        "fps_min_distance": fps_min,
        "random_min_distances": random_mins,
        "random_mean_min_distance": float(np.mean(random_mins)),
        "fps_wins": wins,
        "fps_win_fraction": wins / trials,
    }


@dataclass(frozen=True)
class SeedSet:
    """Normalized seed points for one region, one per budgeted stroke."""

    region_id: int
    seeds: NDArray[np.float64]

    def __post_init__(self) -> None:
        seeds = np.asarray(self.seeds, dtype=np.float64).reshape(-1, 2)
        seeds.setflags(write=False)
        object.__setattr__(self, "seeds", seeds)

    def __len__(self) -> int:
        return len(self.seeds)


def init_strokes(seed_set: SeedSet, radius: float = DEFAULT_INIT_RADIUS,
                 rng_seed: int = 0, round_id: int = 0,
                 width: float = DEFAULT_STROKE_WIDTH) -> list[Stroke]:
    """One stroke per seed: anchor at the seed, then three control points
    drawn uniformly from the disc of the given radius around it.

    The generator is keyed by (rng_seed, region_id, seed index), so a seed
    set re-initializes bit-identically regardless of batch context.
    """
    if radius <= 0:
        raise DomainError(f"init radius must be positive, got {radius}")
    strokes = []
    for i, seed in enumerate(seed_set.seeds):
        rng = np.random.default_rng((rng_seed, seed_set.region_id, i))
        r = radius * np.sqrt(rng.uniform(size=3))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=3)
        offsets = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        cps = np.vstack([seed, seed + offsets])
        strokes.append(Stroke(cps, width=width, round_id=round_id))
    return strokes
