"""
Tile bit allocation.

The proposed method solves the priority-weighted distortion problem in two
stages: a continuous Lagrangian (KKT) split of the requested bitrate, floored
onto the ladder with the leftover spent greedily, then a constrained search
over the FoV tile levels that minimises a mix of FoV average distortion,
spatial spread and temporal drift.
AA, AdapA and PD are the comparison allocators.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

import config
from .catalog import SegmentView
from .errors import DomainError
from .viewport import COLORS, FovPattern, PriorityMap

logger = logging.getLogger(__name__)

# slack on the refinement constraints (the start vector always passes) and on F comparisons
_TOL = 1e-9


@dataclass(frozen=True)
class AllocationResult:
    """Per-tile outcome for one segment; level 0 means the tile is not downloaded."""

    levels: np.ndarray
    bitrates: np.ndarray
    distortions: np.ndarray  # NaN where not downloaded
    fov_tiles: tuple = ()

    @classmethod
    def from_levels(cls, levels, segment, fov_tiles=()):
        levels = np.asarray(levels, dtype=int)
        if levels.shape != (segment.tiles,):
            raise ValueError(f"Expected {segment.tiles} tile levels, got shape {levels.shape}")
        if levels.min() < 0 or levels.max() > segment.ladder.levels:
            raise ValueError(f"Levels must lie in [0, {segment.ladder.levels}]")
        rates = np.concatenate(([0.0], segment.ladder.as_array()))
        bitrates = rates[levels]
        idx = np.arange(segment.tiles)
        distortions = np.where(levels > 0, segment.distortions[idx, np.maximum(levels, 1) - 1], np.nan)
        for arr in (levels, bitrates, distortions):
            arr.setflags(write=False)
        return cls(levels=levels, bitrates=bitrates, distortions=distortions, fov_tiles=tuple(fov_tiles))

    @property
    def downloaded(self):
        return self.levels >= 1

    @property
    def total_bitrate(self):
        return float(self.bitrates.sum())

    @property
    def fov_bitrate(self):
        return float(self.bitrates[list(self.fov_tiles)].sum()) if self.fov_tiles else 0.0


@dataclass(frozen=True)
class FineParams:
    """Weights and thresholds of the FoV refinement stage."""

    theta: tuple = config.FINE_THETA
    d_th: float = config.FINE_D_TH
    r_th: float = config.FINE_R_TH_KBPS
    candidate_cap: int = config.FINE_CANDIDATE_CAP
    lattice_limit: int = config.FINE_LATTICE_LIMIT

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != 3:
            raise ValueError(f"theta needs 3 weights, got {len(theta)}")
        if any(t < 0 for t in theta) or not math.isclose(sum(theta), 1.0, abs_tol=1e-9):
            raise ValueError(f"theta weights must be non-negative and sum to 1, got {theta}")
        if self.d_th < 0 or self.r_th < 0:
            raise ValueError("Refinement thresholds must be non-negative")
        if self.candidate_cap < 1:
            raise ValueError("candidate_cap must be >= 1")
        object.__setattr__(self, "theta", theta)


def coarse_allocate(alpha, beta, priorities, r_request):
    """Continuous rates minimising sum(p_n * alpha_n * R_n^-beta_n) s.t. sum(R_n) = r_request.

    Stationarity gives R_n = (p_n alpha_n beta_n / lambda)^(1 / (1 + beta_n));
    lambda is found by bisection in log space, each R_n being decreasing in it.
    """
    if not r_request > 0:
        raise DomainError(f"Requested bitrate must be positive, got {r_request}")
    alpha, beta, p = (np.asarray(x, dtype=float) for x in (alpha, beta, priorities))
    if np.any(alpha <= 0) or np.any(beta <= 0) or np.any(p <= 0):
        raise DomainError("alpha, beta and priorities must all be positive")

    log_w = np.log(p * alpha * beta)
    expo = 1.0 / (1.0 + beta)
    n = alpha.size

    def rates(log_lam):
        return np.exp((log_w - log_lam) * expo)

    # at lo every R_n >= r_request, at hi every R_n <= r_request / n
    lo = float(np.min(log_w - (1.0 + beta) * math.log(r_request)))
    hi = float(np.max(log_w - (1.0 + beta) * math.log(r_request / n)))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = rates(mid).sum()
        if abs(total - r_request) <= 1e-12 * r_request or hi - lo < 1e-14:
            break
        if total > r_request:
            lo = mid
        else:
            hi = mid
    return rates(0.5 * (lo + hi))


def quantize_allocation(rates, segment, fov_tiles=()):
    """Floor every continuous rate onto the ladder (level 1 at minimum)."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise DomainError("Continuous rates must be positive")
    counts = np.searchsorted(segment.ladder.as_array(), rates, side="right")
    return AllocationResult.from_levels(np.maximum(counts, 1), segment, fov_tiles)


def _objective_batch(distortions, prev_avg, theta):
    """F for every row of a (K, M) distortion matrix."""
    avg = distortions.mean(axis=1)
    spread = distortions.std(axis=1)
    drift = 0.5 * np.abs(prev_avg - avg)
    return theta[0] * avg + theta[1] * spread + theta[2] * drift


def objective_f(fov_distortions, prev_fov_avg_distortion, theta):
    """F = theta1 * D_avg + theta2 * D_ss + theta3 * D_ts over the FoV tiles (MSE)."""
    d = np.asarray(fov_distortions, dtype=float)
    if d.size == 0:
        raise ValueError("F needs at least one FoV tile")
    if prev_fov_avg_distortion < 0:
        raise ValueError("Previous FoV average distortion must be non-negative")
    return float(_objective_batch(d[None, :], prev_fov_avg_distortion, theta)[0])


@lru_cache(maxsize=32)
def _lattice(m, u):
    """All level vectors (zero-based) of m tiles with u levels, lexicographic order."""
    grid = np.indices((u,) * m).reshape(m, -1).T
    grid.setflags(write=False)
    return grid


def _search_lattice(table, rates, start, d0, r0, r_budget, prev_avg, params):
    """Exhaustive pass over every FoV level vector; ties go to the lexicographically first."""
    m = len(start)
    grid = _lattice(m, rates.size)
    d = table[np.arange(m)[None, :], grid]
    sum_d = d.sum(axis=1)
    sum_r = rates[grid].sum(axis=1)
    mask = (
        (np.abs(sum_d - d0) <= params.d_th + _TOL)
        & (np.abs(sum_r - r0) <= params.r_th + _TOL)
        & (sum_r <= r_budget + _TOL)
    )
    candidates = grid[mask]
    f = _objective_batch(d[mask], prev_avg, params.theta)
    best = int(np.argmin(f))
    logger.debug(f"Lattice search: {len(candidates)} feasible of {len(grid)} FoV level vectors")
    return candidates[best], float(f[best])


def _search_expansion(table, rates, start, d0, r0, r_budget, prev_avg, params):
    """Breadth-first growth of the candidate set from the start vector."""
    m, u = table.shape
    start = tuple(int(x) for x in start)
    found = [start]
    sums = [(d0, r0)]
    seen = {start}
    j = 0
    capped = False
    while j < len(found) and not capped:
        a = found[j]
        sd, sr = sums[j]
        for tile in range(m):
            for k in range(u):
                if k == a[tile]:
                    continue
                cand = a[:tile] + (k,) + a[tile + 1:]
                if cand in seen:
                    continue
                seen.add(cand)
                nd = sd - table[tile, a[tile]] + table[tile, k]
                nr = sr - rates[a[tile]] + rates[k]
                if abs(nd - d0) <= params.d_th + _TOL and abs(nr - r0) <= params.r_th + _TOL and nr <= r_budget + _TOL:
                    found.append(cand)
                    sums.append((nd, nr))
                    if len(found) >= params.candidate_cap:
                        capped = True
                        break
            if capped:
                break
        j += 1
    if capped:
        logger.warning(f"Refinement candidate set reached the cap of {params.candidate_cap}")

    grid = np.array(found)
    f = _objective_batch(table[np.arange(m)[None, :], grid], prev_avg, params.theta)
    best = int(np.argmin(f))
    return grid[best], float(f[best])


def fine_allocate(start, segment, prev_fov_avg_distortion, params, r_request):
    """Refine the FoV tile levels of `start` under the three refinement constraints.

    Args:
        start: quantized coarse allocation; its fov_tiles are the tiles refined
        segment: SegmentView of the segment being allocated
        prev_fov_avg_distortion: FoV average MSE of the previous segment
        params: FineParams
        r_request: requested segment bitrate (kbps)

    Returns:
        AllocationResult with non-FoV tiles unchanged
    """
    fov = np.array(start.fov_tiles, dtype=int)
    if fov.size == 0:
        return start
    start_levels = start.levels[fov] - 1
    if np.any(start_levels < 0):
        raise ValueError("Every FoV tile of the starting point must be downloaded")
    if start.total_bitrate > r_request + _TOL:
        logger.warning(f"Starting point ({start.total_bitrate:.0f} kbps) exceeds the request "
                       f"({r_request:.0f} kbps); skipping refinement")
        return start

    rates = segment.ladder.as_array()
    table = segment.distortions[fov]
    d0 = float(table[np.arange(fov.size), start_levels].sum())
    r0 = float(rates[start_levels].sum())
    r_budget = r_request - (start.total_bitrate - r0)

    args = (table, rates, start_levels, d0, r0, r_budget, prev_fov_avg_distortion, params)
    # ties keep the first vector found in generation order
    best, f_best = _search_expansion(*args)
    if rates.size ** fov.size <= params.lattice_limit:
        # the lattice also reaches optima cut off from the start by infeasible vectors
        vector, f = _search_lattice(*args)
        if f < f_best - _TOL * abs(f_best):
            best = vector

    levels = start.levels.copy()
    levels[fov] = best + 1
    return AllocationResult.from_levels(levels, segment, start.fov_tiles)


def aa_allocate(r_request, segment, fov_tiles=()):
    """Equal split: every tile at the level matching r_request / N."""
    share = r_request / segment.tiles
    if share < segment.ladder.lowest:
        logger.warning(f"AA share {share:.0f} kbps is below the lowest level; using level 1")
    count = int(np.searchsorted(segment.ladder.as_array(), share, side="right"))
    return AllocationResult.from_levels(np.full(segment.tiles, max(count, 1)), segment, fov_tiles)


def adapa_allocate(r_request, segment, pattern):
    """Priority-greedy: raise each colour tier in lockstep before the next tier starts."""
    rates = segment.ladder.as_array()
    levels = np.zeros(segment.tiles, dtype=int)
    budget = float(r_request)
    for color in COLORS:
        tier = list(pattern.tiles_of(color))
        if not tier:
            continue
        level = 0
        while level < rates.size:
            step = len(tier) * (rates[level] - (rates[level - 1] if level else 0.0))
            if step > budget + _TOL:
                break
            budget -= step
            level += 1
        levels[tier] = level
    fov = list(pattern.fov_tiles)
    if levels[fov].min() == 0:
        logger.warning(f"AdapA budget {r_request:.0f} kbps cannot cover the FoV; requesting level 1")
        levels[fov] = 1
    return AllocationResult.from_levels(levels, segment, pattern.fov_tiles)


def pd_allocate(r_request, segment, pattern):
    """FoV tiles only, all at the highest uniform level the request affords."""
    fov = list(pattern.fov_tiles)
    share = r_request / len(fov)
    if share < segment.ladder.lowest:
        logger.warning(f"PD share {share:.0f} kbps is below the lowest level; using level 1")
    count = int(np.searchsorted(segment.ladder.as_array(), share, side="right"))
    levels = np.zeros(segment.tiles, dtype=int)
    levels[fov] = max(count, 1)
    return AllocationResult.from_levels(levels, segment, pattern.fov_tiles)


@dataclass(frozen=True)
class AllocationRequest:
    """Everything an allocator may consult for one segment."""

    r_request: float
    segment: SegmentView
    pattern: FovPattern
    priorities: PriorityMap
    prev_fov_avg_distortion: Optional[float] = None
    fine: FineParams = field(default_factory=FineParams)


class BaseAllocator(ABC):
    """Base class for all tile bit allocators."""

    name = ""
    description = ""

    @abstractmethod
    def allocate(self, request):
        """Return the AllocationResult for one segment."""


class AverageAllocator(BaseAllocator):
    name = "aa"
    description = "Equal bitrate for every tile"

    def allocate(self, request):
        return aa_allocate(request.r_request, request.segment, request.pattern.fov_tiles)


class AdaptiveAllocator(BaseAllocator):
    name = "adapa"
    description = "Priority tiers filled in order; low-priority tiles may be skipped"

    def allocate(self, request):
        return adapa_allocate(request.r_request, request.segment, request.pattern)


class PartialDeliveryAllocator(BaseAllocator):
    name = "pd"
    description = "Only FoV tiles, at the highest affordable uniform level"

    def allocate(self, request):
        return pd_allocate(request.r_request, request.segment, request.pattern)


class CoarseAllocator(BaseAllocator):
    name = "proposed_wo_st"
    description = "Lagrangian split of the request floored onto the ladder, any remainder spent greedily"

    def allocate(self, request):
        segment = request.segment
        floor = segment.tiles * segment.ladder.lowest
        if request.r_request < floor:
            logger.warning(f"Request {request.r_request:.0f} kbps below {floor:.0f} kbps; every tile at level 1")
            return AllocationResult.from_levels(np.ones(segment.tiles, dtype=int), segment, request.pattern.fov_tiles)
        rates = coarse_allocate(segment.alpha, segment.beta, request.priorities.tiles, request.r_request)
        result = quantize_allocation(rates, segment, request.pattern.fov_tiles)
        if result.total_bitrate > request.r_request + _TOL:
            return _repair_budget(result, segment, request.priorities.tiles, request.r_request)
        return _spend_remainder(result, segment, request.priorities.tiles, request.r_request)


def _spend_remainder(result, segment, priorities, r_request):
    """Raise tiles one level at a time while a step still fits under the request.

    Flooring leaves up to one step per tile unspent. Among the steps that fit,
    the largest weighted-distortion drop per kbps goes first.
    """
    levels = result.levels.copy()
    rates = segment.ladder.as_array()
    top = segment.ladder.levels
    idx = np.arange(segment.tiles)
    total = rates[levels - 1].sum()
    while True:
        movable = levels < top
        nxt = np.minimum(levels, top - 1)  # zero-based index of the next level up
        step = np.where(movable, rates[nxt] - rates[levels - 1], np.inf)
        fits = movable & (total + step <= r_request + _TOL)
        if not fits.any():
            break
        gain = priorities * (segment.distortions[idx, levels - 1] - segment.distortions[idx, nxt]) / step
        tile = int(np.argmax(np.where(fits, gain, -np.inf)))
        total += step[tile]
        levels[tile] += 1
    logger.debug(f"Spent the remainder with {int((levels - result.levels).sum())} level steps; "
                 f"{r_request - total:.0f} kbps left")
    return AllocationResult.from_levels(levels, segment, result.fov_tiles)


def _repair_budget(result, segment, priorities, r_request):
    """Step tiles down until the total fits, cheapest weighted-distortion increase first.

    Only needed when tiles below the lowest rung were lifted to level 1.
    """
    levels = result.levels.copy()
    rates = segment.ladder.as_array()
    idx = np.arange(segment.tiles)
    total = rates[levels - 1].sum()
    while total > r_request + _TOL:
        movable = levels > 1
        cur = segment.distortions[idx, levels - 1]
        lower = segment.distortions[idx, np.maximum(levels - 2, 0)]
        cost = np.where(movable, priorities * (lower - cur), np.inf)
        tile = int(np.argmin(cost))
        total -= rates[levels[tile] - 1] - rates[levels[tile] - 2]
        levels[tile] -= 1
    logger.debug(f"Lowered {int((result.levels - levels).sum())} level steps to fit {r_request:.0f} kbps")
    return AllocationResult.from_levels(levels, segment, result.fov_tiles)


class CoarseToFineAllocator(CoarseAllocator):
    name = "proposed"
    description = "Coarse Lagrangian split refined for FoV quality, spatial and temporal smoothness"

    def allocate(self, request):
        start = super().allocate(request)
        prev = request.prev_fov_avg_distortion
        if prev is None:
            prev = float(np.mean(start.distortions[list(start.fov_tiles)]))
        return fine_allocate(start, request.segment, prev, request.fine, request.r_request)


ALLOCATORS = {
    cls.name: cls
    for cls in (AverageAllocator, AdaptiveAllocator, PartialDeliveryAllocator, CoarseAllocator, CoarseToFineAllocator)
}


def get_allocator(name):
    try:
        return ALLOCATORS[name.lower()]()
    except KeyError:
        raise ValueError(f"Unknown allocation method '{name}'; expected one of {', '.join(ALLOCATORS)}") from None
