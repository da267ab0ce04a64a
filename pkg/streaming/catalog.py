"""
Tiled content model.

A catalog holds L segments x N tiles x U quality levels. Each (segment, tile)
pair carries Cauchy rate-distortion parameters (alpha, beta) so that the MSE of
a tile coded at rate R is alpha * R ** -beta. Quality levels are 1-based
throughout the package; level 0 means "not downloaded".
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import config
from .errors import DomainError, InvalidSampleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QualityLadder:
    """Ordered bitrates (kbps) of the U encoded versions of every tile."""

    bitrates: tuple

    def __post_init__(self):
        rates = tuple(float(r) for r in self.bitrates)
        if len(rates) < 2:
            raise ValueError(f"A quality ladder needs at least 2 levels, got {len(rates)}")
        if any(r <= 0 for r in rates):
            raise ValueError("Ladder bitrates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("Ladder bitrates must be strictly increasing")
        object.__setattr__(self, "bitrates", rates)

    @property
    def levels(self):
        return len(self.bitrates)

    @property
    def lowest(self):
        return self.bitrates[0]

    def bitrate(self, level):
        """Bitrate of a 1-based level."""
        if not 1 <= level <= self.levels:
            raise IndexError(f"Level {level} outside [1, {self.levels}]")
        return self.bitrates[level - 1]

    def as_array(self):
        return np.asarray(self.bitrates, dtype=float)

    def scaled(self, factor):
        return QualityLadder(tuple(r * factor for r in self.bitrates))


DEFAULT_LADDER = QualityLadder(config.DEFAULT_BITRATES_KBPS)


@dataclass(frozen=True)
class RdParams:
    """Cauchy R-D model D = alpha * R ** -beta (MSE, kbps)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"R-D parameters must be positive, got alpha={self.alpha}, beta={self.beta}")


def distortion_at(params, rate):
    """MSE of a tile coded at `rate` kbps."""
    if not rate > 0:
        raise DomainError(f"Rate must be positive, got {rate}")
    return params.alpha * rate ** (-params.beta)


def fit_rd(samples):
    """Least-squares fit of log(D) = log(alpha) - beta * log(R).

    Args:
        samples: iterable of (bitrate kbps, distortion MSE) pairs

    Returns:
        RdParams recovered from the log-log regression line
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise InvalidSampleError("fit_rd needs at least 2 (bitrate, distortion) samples")
    rates, distortions = data[:, 0], data[:, 1]
    if np.any(rates <= 0) or np.any(distortions <= 0):
        raise InvalidSampleError("Bitrates and distortions must be positive")
    if np.unique(rates).size < 2:
        raise InvalidSampleError("Bitrates must not all be equal")

    slope, intercept = np.polyfit(np.log(rates), np.log(distortions), 1)
    beta = -slope
    if beta <= 0:
        raise InvalidSampleError(f"Samples do not decrease with rate (beta={beta:.4g})")
    return RdParams(alpha=float(np.exp(intercept)), beta=float(beta))


def quantize_down(ladder, rate):
    """Largest level whose bitrate does not exceed `rate`, clamped to level 1."""
    count = int(np.searchsorted(ladder.as_array(), rate, side="right"))
    return max(1, count)


@dataclass(frozen=True)
class SegmentView:
    """R-D data of one segment, as seen by the allocators."""

    index: int
    ladder: QualityLadder
    alpha: np.ndarray
    beta: np.ndarray
    distortions: np.ndarray  # shape (N, U), column u-1 holds level u

    @property
    def tiles(self):
        return self.alpha.shape[0]


@dataclass(frozen=True)
class TileCatalog:
    """Server-side content model: segments x tiles x quality levels."""

    rows: int
    cols: int
    segment_duration: float
    ladder: QualityLadder
    rd: tuple  # rd[l][n] -> RdParams
    distortion_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"Invalid grid {self.rows}x{self.cols}")
        if self.segment_duration <= 0:
            raise ValueError("Segment duration must be positive")
        rd = tuple(tuple(row) for row in self.rd)
        if not rd:
            raise ValueError("A catalog needs at least one segment")
        if any(len(row) != self.rows * self.cols for row in rd):
            raise ValueError(f"Every segment must list {self.rows * self.cols} tiles")
        object.__setattr__(self, "rd", rd)

        alpha = np.array([[p.alpha for p in row] for row in rd])
        beta = np.array([[p.beta for p in row] for row in rd])
        rates = self.ladder.as_array()
        table = alpha[:, :, None] * rates[None, None, :] ** (-beta[:, :, None])
        table.setflags(write=False)
        object.__setattr__(self, "distortion_table", table)

    @property
    def segments(self):
        return len(self.rd)

    @property
    def tiles(self):
        return self.rows * self.cols

    def segment(self, index):
        """R-D view of segment `index`; indices past L loop over the catalog."""
        l = index % self.segments
        return SegmentView(
            index=l,
            ladder=self.ladder,
            alpha=np.array([p.alpha for p in self.rd[l]]),
            beta=np.array([p.beta for p in self.rd[l]]),
            distortions=self.distortion_table[l],
        )

    def to_dict(self):
        """JSON document form; the distortion table is derived and never stored."""
        return {
            "L": self.segments,
            "rows": self.rows,
            "cols": self.cols,
            "U": self.ladder.levels,
            "segment_duration_s": self.segment_duration,
            "bitrates_kbps": list(self.ladder.bitrates),
            "tiles": [[{"alpha": p.alpha, "beta": p.beta} for p in row] for row in self.rd],
        }

    @classmethod
    def from_dict(cls, doc):
        ladder = QualityLadder(tuple(doc["bitrates_kbps"]))
        if "U" in doc and int(doc["U"]) != ladder.levels:
            raise ValueError(f"U={doc['U']} does not match {ladder.levels} ladder entries")
        rd = [[RdParams(float(t["alpha"]), float(t["beta"])) for t in row] for row in doc["tiles"]]
        if "L" in doc and int(doc["L"]) != len(rd):
            raise ValueError(f"L={doc['L']} does not match {len(rd)} segments")
        return cls(
            rows=int(doc["rows"]),
            cols=int(doc["cols"]),
            segment_duration=float(doc.get("segment_duration_s", config.SEGMENT_DURATION_S)),
            ladder=ladder,
            rd=rd,
        )

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        logger.info(f"Saved catalog with {self.segments} segments x {self.tiles} tiles to {path}")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            catalog = cls.from_dict(json.load(f))
        logger.info(f"Loaded catalog {path}: L={catalog.segments}, N={catalog.tiles}, U={catalog.ladder.levels}")
        return catalog


@dataclass(frozen=True)
class CatalogSpec:
    """Parameters for synthesizing a catalog."""

    segments: int = 5
    rows: int = config.GRID_ROWS
    cols: int = config.GRID_COLS
    bitrates: tuple = config.DEFAULT_BITRATES_KBPS
    segment_duration: float = config.SEGMENT_DURATION_S
    alpha_range: tuple = config.ALPHA_RANGE
    beta_range: tuple = config.BETA_RANGE

    def __post_init__(self):
        if self.segments < 1:
            raise ValueError("Catalog spec needs at least one segment")
        for name in ("alpha_range", "beta_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")

    @classmethod
    def from_dict(cls, doc):
        defaults = cls()
        return cls(
            segments=int(doc.get("L", defaults.segments)),
            rows=int(doc.get("rows", defaults.rows)),
            cols=int(doc.get("cols", defaults.cols)),
            bitrates=tuple(doc.get("bitrates_kbps", defaults.bitrates)),
            segment_duration=float(doc.get("segment_duration_s", defaults.segment_duration)),
            alpha_range=tuple(doc.get("alpha_range", defaults.alpha_range)),
            beta_range=tuple(doc.get("beta_range", defaults.beta_range)),
        )


def synthesize_catalog(spec, seed):
    """Draw per-tile (alpha, beta) uniformly from the spec's ranges.

    Args:
        spec: CatalogSpec describing the grid, ladder and parameter ranges
        seed: integer seed; the same seed always yields the same catalog

    Returns:
        TileCatalog
    """
    ladder = QualityLadder(tuple(spec.bitrates))
    rng = np.random.default_rng(seed)
    shape = (spec.segments, spec.rows * spec.cols)
    alpha = rng.uniform(*spec.alpha_range, size=shape)
    beta = rng.uniform(*spec.beta_range, size=shape)
    rd = [[RdParams(float(a), float(b)) for a, b in zip(arow, brow)] for arow, brow in zip(alpha, beta)]
    logger.debug(f"Synthesized catalog seed={seed} shape={shape}")
    return TileCatalog(
        rows=spec.rows,
        cols=spec.cols,
        segment_duration=spec.segment_duration,
        ladder=ladder,
        rd=rd,
    )
