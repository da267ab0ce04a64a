"""
Bandwidth processes and segment download timing.

Three piecewise-constant channels are provided: a fixed link, a two-state
Markov link whose state may flip at every segment request, and a staged trace.
Download durations come from integrating the bandwidth over time.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

import config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelState:
    """Mutable-by-replacement state of one simulated link."""

    current_state: int = 0
    requests: int = 0
    jitter_factor: float = 1.0


class ChannelModel(ABC):
    """Base class for all bandwidth processes."""

    jitter: float

    def initial_state(self):
        return ChannelState()

    @abstractmethod
    def bandwidth_at(self, state, t):
        """Bandwidth (kbps) at time t, before jitter."""

    @abstractmethod
    def _next_change(self, state, t):
        """Time of the next bandwidth breakpoint after t (inf if none)."""

    def _on_request(self, state, rng):
        """Hook run once as a segment request is issued."""
        return replace(state, requests=state.requests + 1)

    def _check_jitter(self):
        if not 0 <= self.jitter < 1:
            raise ValueError(f"Jitter must lie in [0, 1), got {self.jitter}")

    def download(self, state, bits, start, rng):
        """Time needed to receive `bits` starting at `start`.

        Args:
            state: ChannelState at `start`
            bits: payload size in bits
            start: clock time (s) at which the request is issued
            rng: numpy Generator for Markov transitions and jitter

        Returns:
            (duration seconds, new ChannelState)
        """
        if not bits > 0:
            raise ValueError(f"Download size must be positive, got {bits}")
        if self.jitter > 0:
            state = replace(state, jitter_factor=float(rng.uniform(1 - self.jitter, 1 + self.jitter)))

        remaining = bits / 1000.0
        t = start
        state = self._on_request(state, rng)
        while True:
            bw = self.bandwidth_at(state, t) * state.jitter_factor
            boundary = self._next_change(state, t)
            capacity = bw * (boundary - t)
            if capacity >= remaining:
                t += remaining / bw
                break
            remaining -= capacity
            t = boundary
        return t - start, state


@dataclass(frozen=True)
class FixedChannel(ChannelModel):
    bandwidth: float = config.FIXED_BANDWIDTH_KBPS
    jitter: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"Bandwidth must be positive, got {self.bandwidth}")
        self._check_jitter()

    def bandwidth_at(self, state, t):
        return self.bandwidth

    def _next_change(self, state, t):
        return float("inf")


@dataclass(frozen=True)
class MarkovChannel(ChannelModel):
    """Two-or-more-state chain; before every request after the first the state moves with probability p_t.

    The bandwidth stays constant for the whole of one download.
    """

    states: tuple = config.MARKOV_STATES_KBPS
    p_t: float = config.MARKOV_TRANSITION_PROBABILITY
    jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(float(s) for s in self.states))
        if len(self.states) < 2:
            raise ValueError("A Markov channel needs at least 2 states")
        if any(s <= 0 for s in self.states):
            raise ValueError("Markov state bandwidths must be positive")
        if not 0 <= self.p_t <= 1:
            raise ValueError(f"Transition probability must lie in [0, 1], got {self.p_t}")
        self._check_jitter()

    def bandwidth_at(self, state, t):
        return self.states[state.current_state]

    def _next_change(self, state, t):
        return float("inf")

    def _on_request(self, state, rng):
        current = state.current_state
        # the first request is served in the initial state
        if state.requests > 0 and rng.random() < self.p_t:
            # move to one of the other states, uniformly
            others = [i for i in range(len(self.states)) if i != current]
            current = others[0] if len(others) == 1 else int(rng.choice(others))
            logger.debug(f"Markov channel switched to state {current} at request {state.requests}")
        return replace(state, current_state=current, requests=state.requests + 1)

    def force_transition(self, state):
        """Move to the next state regardless of p_t."""
        return replace(state, current_state=(state.current_state + 1) % len(self.states))


@dataclass(frozen=True)
class TraceChannel(ChannelModel):
    """Staged bandwidth: steps of (start s, kbps); left-closed, last step unbounded."""

    steps: tuple
    jitter: float = 0.0

    def __post_init__(self):
        steps = tuple((float(s), float(bw)) for s, bw in self.steps)
        if not steps:
            raise ValueError("A trace needs at least one step")
        if steps[0][0] != 0:
            raise ValueError("Trace must start at t=0")
        if any(b[0] <= a[0] for a, b in zip(steps, steps[1:])):
            raise ValueError("Trace start times must be strictly increasing")
        if any(bw <= 0 for _, bw in steps):
            raise ValueError("Trace bandwidths must be positive")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "_starts", np.array([s for s, _ in steps]))
        self._check_jitter()

    def _index(self, t):
        return int(np.searchsorted(self._starts, t, side="right")) - 1

    def bandwidth_at(self, state, t):
        return self.steps[max(self._index(t), 0)][1]

    def _next_change(self, state, t):
        i = self._index(t)
        return self.steps[i + 1][0] if i + 1 < len(self.steps) else float("inf")


def bandwidth_at(model, state, t):
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}")
    return model.bandwidth_at(state, t)


def download(model, state, bits, start, rng):
    return model.download(state, bits, start, rng)


def load_trace(path, jitter=0.0):
    """Read a `start_s,bandwidth_kbps` CSV into a TraceChannel."""
    df = pd.read_csv(path)
    missing = {"start_s", "bandwidth_kbps"} - set(df.columns)
    if missing:
        raise ValueError(f"Trace {path} lacks columns: {', '.join(sorted(missing))}")
    steps = tuple(zip(df["start_s"].tolist(), df["bandwidth_kbps"].tolist()))
    logger.info(f"Loaded trace {path} with {len(steps)} steps")
    return TraceChannel(steps=steps, jitter=jitter)


def build_channel(spec, base_dir="."):
    """Build a channel from its config document form.

    Args:
        spec: {"type": "fixed"|"markov"|"trace", ...}
        base_dir: directory that relative trace paths are resolved against
    """
    kind = spec.get("type", "fixed")
    jitter = float(spec.get("jitter", config.CHANNEL_JITTER))
    if kind == "fixed":
        return FixedChannel(bandwidth=float(spec.get("bandwidth_kbps", config.FIXED_BANDWIDTH_KBPS)), jitter=jitter)
    if kind == "markov":
        return MarkovChannel(
            states=tuple(spec.get("states_kbps", config.MARKOV_STATES_KBPS)),
            p_t=float(spec.get("p_t", config.MARKOV_TRANSITION_PROBABILITY)),
            jitter=jitter,
        )
    if kind == "trace":
        if "steps" in spec:
            return TraceChannel(steps=tuple(tuple(s) for s in spec["steps"]), jitter=jitter)
        path = Path(spec["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        return load_trace(path, jitter=jitter)
    raise ValueError(f"Unknown channel type: {kind}")
