"""
Segment-level rate adaptation.

Throughput is predicted from the last L_0 downloads. The buffer-quality-based
policy (BQA) scales the prediction by a buffer-dependent coefficient; QFA and
BFA are the quality-first and buffer-first baselines it is compared with.
"""

import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field

import config
from .catalog import quantize_down
from .errors import NoEstimateError

logger = logging.getLogger(__name__)


@dataclass
class ThroughputWindow:
    """Recent (segment bitrate kbps, download time s) pairs."""

    size: int = config.THROUGHPUT_WINDOW
    segment_duration: float = config.SEGMENT_DURATION_S
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"Throughput window size must be >= 1, got {self.size}")
        self.history = deque(self.history, maxlen=self.size)

    def push(self, bitrate, download_time):
        self.history.append((float(bitrate), float(download_time)))

    def __len__(self):
        return len(self.history)


@dataclass(frozen=True)
class BufferPolicy:
    """Startup target b_0 and the [b_min, b_max] band, in seconds."""

    b_0: float = config.STARTUP_BUFFER_S
    b_min: float = config.BUFFER_MIN_S
    b_max: float = config.BUFFER_MAX_S

    def __post_init__(self):
        if not self.b_0 > 0:
            raise ValueError(f"b_0 must be positive, got {self.b_0}")
        if not 0 < self.b_min < self.b_max:
            raise ValueError(f"Need 0 < b_min < b_max, got {self.b_min}, {self.b_max}")


def estimate_throughput(window):
    """Mean of r_l * t_0 / t_download,l over the available history (kbps)."""
    if not window.history:
        raise NoEstimateError("No completed download to estimate throughput from")
    t0 = window.segment_duration
    samples = [r * t0 / d for r, d in window.history]
    return sum(samples) / len(samples)


def bqa_epsilon(b_cur, policy):
    if b_cur < policy.b_min:
        return b_cur / policy.b_min
    if b_cur > policy.b_max:
        return b_cur / policy.b_max
    return 1.0


def bqa_request_bitrate(t_cur, b_cur, policy):
    """Requested segment bitrate R_request = epsilon * T_cur."""
    return bqa_epsilon(b_cur, policy) * t_cur


def _clamp(level, ladder):
    return min(max(level, 1), ladder.levels)


def bqa_level(t_cur, b_cur, policy, ladder):
    u_cur = quantize_down(ladder, t_cur)
    if b_cur < policy.b_min:
        return _clamp(u_cur - 1, ladder)
    if b_cur > policy.b_max:
        return _clamp(u_cur + 1, ladder)
    return _clamp(u_cur, ladder)


def qfa_level(t_cur, ladder):
    """Match the predicted bandwidth regardless of the buffer."""
    return quantize_down(ladder, t_cur)


def bfa_level(b_cur, b_pre, prev_level, ladder):
    """Fill b_pre at the lowest level, then step up one level per segment."""
    if not 1 <= prev_level <= ladder.levels:
        raise ValueError(f"Previous level {prev_level} outside [1, {ladder.levels}]")
    if b_cur < b_pre:
        return 1
    return min(prev_level + 1, ladder.levels)


class RatePolicy(ABC):
    """Base class for segment-level quality selection policies."""

    name = ""
    description = ""

    def __init__(self, ladder, buffer_policy):
        self.ladder = ladder
        self.buffer_policy = buffer_policy
        self.prev_level = 1

    def select(self, t_cur, b_cur):
        """Pick the level of the next segment and remember it."""
        level = self._select(t_cur, b_cur)
        self.prev_level = level
        return level

    @abstractmethod
    def _select(self, t_cur, b_cur):
        """Policy-specific choice."""


class BufferQualityPolicy(RatePolicy):
    name = "bqa"
    description = "Buffer-quality-based adaptation: one step below/above the throughput level outside [b_min, b_max]"

    def _select(self, t_cur, b_cur):
        return bqa_level(t_cur, b_cur, self.buffer_policy, self.ladder)


class QualityFirstPolicy(RatePolicy):
    name = "qfa"
    description = "Quality-first adaptation: highest level not above the predicted throughput"

    def _select(self, t_cur, b_cur):
        return qfa_level(t_cur, self.ladder)


class BufferFirstPolicy(RatePolicy):
    name = "bfa"
    description = "Buffer-first adaptation: lowest level until b_pre is filled, then ramp up"

    def __init__(self, ladder, buffer_policy, b_pre=None):
        super().__init__(ladder, buffer_policy)
        self.b_pre = buffer_policy.b_min if b_pre is None else b_pre

    def _select(self, t_cur, b_cur):
        return bfa_level(b_cur, self.b_pre, self.prev_level, self.ladder)


RATE_POLICIES = {
    policy.name: policy for policy in (BufferQualityPolicy, QualityFirstPolicy, BufferFirstPolicy)
}


def get_rate_policy(name, ladder, buffer_policy):
    try:
        policy_cls = RATE_POLICIES[name.lower()]
    except KeyError:
        raise ValueError(f"Unknown rate policy '{name}'; expected one of {', '.join(RATE_POLICIES)}") from None
    return policy_cls(ladder, buffer_policy)
