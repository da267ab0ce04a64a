"""
FoV patterns, Gaussian viewport prediction and Zipf tile priorities.

Each pattern colours every tile of the grid: red is the FoV, orange borders it,
green borders orange and blue is everything else. Tiles are numbered row-major
(tile = row * cols + col).
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

import config

logger = logging.getLogger(__name__)

MAX_SWITCH_RESAMPLES = 1000


class Color(Enum):
    RED = "red"
    ORANGE = "orange"
    GREEN = "green"
    BLUE = "blue"

    @property
    def distance(self):
        """Distance multiplier relative to the red region."""
        return _DISTANCE[self]


_DISTANCE = {Color.RED: 1, Color.ORANGE: 2, Color.GREEN: 3, Color.BLUE: 4}
COLORS = tuple(Color)


@dataclass(frozen=True)
class FovPattern:
    id: int
    rows: int
    cols: int
    colors: tuple  # per tile Color

    def __post_init__(self):
        if len(self.colors) != self.rows * self.cols:
            raise ValueError(f"Pattern {self.id} colours {len(self.colors)} tiles, grid has {self.rows * self.cols}")
        if Color.RED not in self.colors:
            raise ValueError(f"Pattern {self.id} has an empty FoV")

    @property
    def counts(self):
        """pi_c: number of tiles per colour."""
        return {c: sum(1 for t in self.colors if t is c) for c in COLORS}

    def tiles_of(self, color):
        return tuple(i for i, c in enumerate(self.colors) if c is color)

    @property
    def fov_tiles(self):
        return self.tiles_of(Color.RED)

    def to_dict(self):
        doc = {"id": self.id}
        doc.update({c.value: list(self.tiles_of(c)) for c in COLORS})
        return doc


def _neighbours(tile, rows, cols):
    """8-neighbourhood; columns wrap around, rows do not."""
    r, c = divmod(tile, cols)
    result = set()
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            rr = r + dr
            if 0 <= rr < rows:
                result.add(rr * cols + (c + dc) % cols)
    result.discard(tile)
    return result


def pattern_from_fov(pattern_id, red, rows, cols):
    """Colour the grid around a given set of FoV tiles."""
    red = set(red)
    orange = set().union(*(_neighbours(t, rows, cols) for t in red)) - red
    green = set().union(*(_neighbours(t, rows, cols) for t in orange)) - red - orange if orange else set()
    colors = []
    for tile in range(rows * cols):
        if tile in red:
            colors.append(Color.RED)
        elif tile in orange:
            colors.append(Color.ORANGE)
        elif tile in green:
            colors.append(Color.GREEN)
        else:
            colors.append(Color.BLUE)
    return FovPattern(id=pattern_id, rows=rows, cols=cols, colors=tuple(colors))


@lru_cache(maxsize=None)
def default_patterns(rows=config.GRID_ROWS, cols=config.GRID_COLS):
    """The 20 patterns: a pole row, 18 wrapped 2x2 blocks, the other pole row.

    Id 1 is the top row, ids 2-19 are 2x2 blocks anchored row-major at
    (row 0..2, col 0..5), id 20 is the bottom row. Id 11 is the block at
    rows 1-2, cols 3-4.
    """
    if (rows, cols) != (4, 6):
        raise ValueError(f"Default patterns are defined for a 4x6 grid, got {rows}x{cols}")
    patterns = [pattern_from_fov(1, range(cols), rows, cols)]
    for r in range(rows - 1):
        for c in range(cols):
            block = {r * cols + c, r * cols + (c + 1) % cols, (r + 1) * cols + c, (r + 1) * cols + (c + 1) % cols}
            patterns.append(pattern_from_fov(len(patterns) + 1, block, rows, cols))
    patterns.append(pattern_from_fov(len(patterns) + 1, range((rows - 1) * cols, rows * cols), rows, cols))
    return tuple(patterns)


def load_patterns(path, rows=config.GRID_ROWS, cols=config.GRID_COLS):
    """Read a pattern override file: a JSON list of {id, red, orange, green, blue}."""
    with open(path, "r", encoding="utf-8") as f:
        docs = json.load(f)
    patterns = []
    for doc in sorted(docs, key=lambda d: d["id"]):
        colors = [None] * (rows * cols)
        for color in COLORS:
            for tile in doc.get(color.value, []):
                if colors[tile] is not None:
                    raise ValueError(f"Pattern {doc['id']}: tile {tile} has two colours")
                colors[tile] = color
        if any(c is None for c in colors):
            raise ValueError(f"Pattern {doc['id']} leaves tiles uncoloured")
        patterns.append(FovPattern(id=int(doc["id"]), rows=rows, cols=cols, colors=tuple(colors)))
    if [p.id for p in patterns] != list(range(1, len(patterns) + 1)):
        raise ValueError("Pattern ids must run from 1 without gaps")
    logger.info(f"Loaded {len(patterns)} FoV patterns from {path}")
    return tuple(patterns)


@dataclass(frozen=True)
class PriorityMap:
    tiles: np.ndarray  # per-tile priority, sums to 1
    colors: dict  # Color -> priority of one tile of that colour

    def __getitem__(self, tile):
        return float(self.tiles[tile])


@lru_cache(maxsize=256)
def zipf_priorities(pattern):
    """Per-tile priorities p_c = 1 / (k_c * d_red), normalised over the grid."""
    counts = pattern.counts
    d_red = sum(counts[c] / c.distance for c in COLORS)
    per_color = {c: 1.0 / (c.distance * d_red) for c in COLORS}
    tiles = np.array([per_color[c] for c in pattern.colors])
    tiles.setflags(write=False)
    return PriorityMap(tiles=tiles, colors=per_color)


def sample_fov(rng, mu=config.FOV_MU, sigma2=config.FOV_SIGMA2, count=config.FOV_PATTERN_COUNT):
    """Draw a pattern id from N(mu, sigma2), rounded and clamped to [1, count]."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    x = float(rng.normal(mu, math.sqrt(sigma2)))
    return int(min(max(round(x), 1), count))


def sample_sudden_switch(rng, p_switch, current_id, mu=config.FOV_MU, sigma2=config.FOV_SIGMA2,
                         count=config.FOV_PATTERN_COUNT):
    """With probability p_switch, a new pattern id different from current_id."""
    if not 0 <= p_switch <= 1:
        raise ValueError(f"Switch probability must lie in [0, 1], got {p_switch}")
    if rng.random() >= p_switch:
        return None
    for _ in range(MAX_SWITCH_RESAMPLES):
        candidate = sample_fov(rng, mu, sigma2, count)
        if candidate != current_id:
            return candidate
    logger.warning(f"Gaussian kept returning pattern {current_id}; drawing the switch target uniformly")
    others = [i for i in range(1, count + 1) if i != current_id]
    return int(rng.choice(others))
