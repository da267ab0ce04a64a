from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import config
from streaming.allocation import ALLOCATORS, FineParams
from streaming.catalog import TileCatalog
from streaming.channel import ChannelModel
from streaming.metrics import QoeParams
from streaming.rate_control import RATE_POLICIES, BufferPolicy
from streaming.viewport import default_patterns


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluated segment of a tiled session."""

    segment: int
    catalog_segment: int
    predicted_pattern: int
    display_pattern: int
    switched: bool
    startup: bool
    request_kbps: float
    actual_bitrate_kbps: float
    fov_actual_bitrate_kbps: float
    weighted_psnr: float
    fov_avg_psnr: float
    fov_psnr_std: float
    fov_psnr_temporal_diff: float
    f_value: float
    buffer_s: float
    stall_s: float
    download_s: float
    clock_s: float

    def to_dict(self):
        return asdict(self)


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRecord))


@dataclass(frozen=True)
class RateAdaptationRecord:
    """One segment of the untiled rate-adaptation loop."""

    segment: int
    level: int
    bitrate_kbps: float
    buffer_s: float
    stall_s: float
    download_s: float
    clock_s: float

    def to_dict(self):
        return asdict(self)


RATE_ADAPTATION_COLUMNS = tuple(f.name for f in fields(RateAdaptationRecord))


@dataclass(frozen=True)
class SessionConfig:
    """Everything one simulated tiled session needs."""

    catalog: TileCatalog
    channel: ChannelModel
    method: str = "proposed"
    buffer_policy: BufferPolicy = field(default_factory=BufferPolicy)
    throughput_window: int = config.THROUGHPUT_WINDOW
    fov_mu: float = config.FOV_MU
    fov_sigma2: float = config.FOV_SIGMA2
    p_switch: float = 0.0
    fine: FineParams = field(default_factory=FineParams)
    qoe: QoeParams = field(default_factory=QoeParams)
    d_missing: float = config.D_MISSING
    seed: int = config.DEFAULT_SEED
    segments: Optional[int] = None
    patterns: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in ALLOCATORS:
            raise ValueError(f"Unknown allocation method '{self.method}'")
        if not 0 <= self.p_switch <= 1:
            raise ValueError(f"Switch probability must lie in [0, 1], got {self.p_switch}")
        if self.segments is None:
            object.__setattr__(self, "segments", self.catalog.segments)
        if self.segments < 1:
            raise ValueError("A session needs at least one segment")
        if self.patterns is None:
            object.__setattr__(self, "patterns", default_patterns(self.catalog.rows, self.catalog.cols))
        if any(p.rows * p.cols != self.catalog.tiles for p in self.patterns):
            raise ValueError("FoV patterns do not match the catalog grid")
        if not self.d_missing > 0:
            raise ValueError("d_missing must be positive")

    def to_dict(self):
        return {
            "method": self.method,
            "p_switch": self.p_switch,
            "seed": self.seed,
            "segments": self.segments,
            "throughput_window": self.throughput_window,
            "buffer": asdict(self.buffer_policy),
            "fov": {"mu": self.fov_mu, "sigma2": self.fov_sigma2},
            "fine": asdict(self.fine),
            "qoe": asdict(self.qoe),
            "d_missing": self.d_missing,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Normalized experiment document; every default already filled in."""

    catalog: dict
    channel: dict
    methods: tuple
    switch_probabilities: tuple = config.DEFAULT_SWITCH_PROBABILITIES
    replicates: int = config.DEFAULT_REPLICATES
    seed: int = config.DEFAULT_SEED
    segments: Optional[int] = None
    buffer: dict = field(default_factory=lambda: asdict(BufferPolicy()))
    throughput_window: int = config.THROUGHPUT_WINDOW
    fov: dict = field(default_factory=lambda: {"mu": config.FOV_MU, "sigma2": config.FOV_SIGMA2})
    fine: dict = field(default_factory=lambda: asdict(FineParams()))
    qoe: dict = field(default_factory=lambda: asdict(QoeParams()))
    d_missing: float = config.D_MISSING
    patterns: Optional[str] = None
    output_dir: str = config.DEFAULT_OUTPUT_DIR
    jobs: int = config.DEFAULT_JOBS
    base_dir: str = field(default=".", compare=False)  # relative paths resolve against it

    def buffer_policy(self):
        return BufferPolicy(**self.buffer)

    def fine_params(self):
        return FineParams(**{**self.fine, "theta": tuple(self.fine["theta"])})

    def qoe_params(self):
        return QoeParams(**self.qoe)

    def to_dict(self):
        doc = asdict(self)
        doc.pop("base_dir")
        doc["methods"] = list(self.methods)
        doc["switch_probabilities"] = list(self.switch_probabilities)
        doc["fine"] = {**self.fine, "theta": list(self.fine["theta"])}
        return doc


@dataclass(frozen=True)
class RateAdaptationConfig:
    """Untiled rate-adaptation comparison: one channel, several policies."""

    channel: dict = field(default_factory=lambda: {"type": "fixed"})
    policies: tuple = tuple(RATE_POLICIES)
    bitrates: tuple = config.DEFAULT_BITRATES_KBPS
    tiles: int = config.GRID_ROWS * config.GRID_COLS
    buffer: dict = field(default_factory=lambda: {
        "b_0": config.STARTUP_BUFFER_S, "b_min": config.BUFFER_MIN_S, "b_max": config.RATE_DEMO_BUFFER_MAX_S,
    })
    segment_duration: float = config.SEGMENT_DURATION_S
    throughput_window: int = config.THROUGHPUT_WINDOW
    segments: int = config.RATE_DEMO_SEGMENTS
    seed: int = config.DEFAULT_SEED
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        unknown = [p for p in self.policies if p not in RATE_POLICIES]
        if unknown:
            raise ValueError(f"Unknown rate policies: {', '.join(unknown)}")
        if self.tiles < 1 or self.segments < 1:
            raise ValueError("tiles and segments must be >= 1")

    def buffer_policy(self):
        return BufferPolicy(**self.buffer)

    def to_dict(self):
        doc = asdict(self)
        doc.pop("base_dir")
        doc["policies"] = list(self.policies)
        doc["bitrates"] = list(self.bitrates)
        return doc
