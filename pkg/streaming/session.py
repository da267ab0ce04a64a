"""
The per-segment simulation loop.

For every segment the client estimates throughput, predicts the FoV, requests
a bitrate, allocates it over the tiles, downloads over the channel, updates the
buffer and finally scores what the viewer sees, which differs from the plan
when a sudden view switch fires.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from models import MetricsRecord, RateAdaptationRecord
from utils import spawn_generators
from .allocation import AllocationRequest, AllocationResult, get_allocator
from .metrics import evaluate_segment, qoe, qoe_terms
from .rate_control import (
    ThroughputWindow,
    bqa_request_bitrate,
    estimate_throughput,
    get_rate_policy,
)
from .viewport import sample_fov, sample_sudden_switch, zipf_priorities

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SessionState:
    clock: float = 0.0
    buffer: float = 0.0
    window: ThroughputWindow = field(default_factory=ThroughputWindow)
    playing: bool = False  # startup finished (buffer reached b_0 once)
    prev_planned_fov_distortion: Optional[float] = None
    prev_display_fov_distortion: Optional[float] = None
    prev_display_fov_psnr: Optional[float] = None
    segment: int = 0
    last_stall: float = 0.0
    total_stall: float = 0.0

    def __post_init__(self):
        if self.buffer < 0:
            raise ValueError(f"Buffer cannot be negative, got {self.buffer}")


def update_buffer(state, t_download, t_0):
    """Account for one blocking download of a t_0-second segment.

    The buffer drains while downloading; any shortfall is a stall. The new
    segment is then appended.
    """
    if t_download < 0:
        raise ValueError(f"Download time must be non-negative, got {t_download}")
    stall = max(0.0, t_download - state.buffer)
    return replace(
        state,
        clock=state.clock + t_download,
        buffer=max(0.0, state.buffer - t_download) + t_0,
        last_stall=stall,
        total_stall=state.total_stall + stall,
    )


@dataclass(frozen=True)
class SessionResult:
    records: list
    qoe: float
    qoe_terms: dict
    config: dict


def run_session(cfg):
    """Simulate one tiled session.

    Args:
        cfg: SessionConfig

    Returns:
        SessionResult with one MetricsRecord per segment
    """
    catalog = cfg.catalog
    t_0 = catalog.segment_duration
    policy = cfg.buffer_policy
    allocator = get_allocator(cfg.method)
    patterns = {p.id: p for p in cfg.patterns}
    count = len(patterns)
    rng_channel, rng_fov, rng_switch = spawn_generators(cfg.seed, 3)

    logger.info(f"Session start: method={cfg.method} p_switch={cfg.p_switch} seed={cfg.seed} "
                f"segments={cfg.segments}")
    state = SessionState(window=ThroughputWindow(size=cfg.throughput_window, segment_duration=t_0))
    channel_state = cfg.channel.initial_state()
    records = []

    for l in range(cfg.segments):
        segment = catalog.segment(l)
        startup = not state.playing
        if startup:
            r_request = catalog.tiles * catalog.ladder.lowest
        else:
            t_cur = estimate_throughput(state.window)
            r_request = bqa_request_bitrate(t_cur, state.buffer, policy)

        pattern = patterns[sample_fov(rng_fov, cfg.fov_mu, cfg.fov_sigma2, count)]
        switch_to = sample_sudden_switch(rng_switch, cfg.p_switch, pattern.id, cfg.fov_mu, cfg.fov_sigma2, count)
        display = patterns[switch_to] if switch_to is not None else pattern

        if startup:
            # every method fetches the whole frame at level 1 until playback starts
            allocation = AllocationResult.from_levels(np.ones(catalog.tiles, dtype=int), segment, pattern.fov_tiles)
        else:
            allocation = allocator.allocate(AllocationRequest(
                r_request=r_request,
                segment=segment,
                pattern=pattern,
                priorities=zipf_priorities(pattern),
                prev_fov_avg_distortion=state.prev_planned_fov_distortion,
                fine=cfg.fine,
            ))
        planned = float(allocation.distortions[list(pattern.fov_tiles)].mean())

        bits = allocation.total_bitrate * t_0 * 1000.0
        t_download, channel_state = cfg.channel.download(channel_state, bits, state.clock, rng_channel)
        state.window.push(allocation.total_bitrate, t_download)
        state = update_buffer(state, t_download, t_0)

        evaluation = evaluate_segment(
            allocation,
            display,
            zipf_priorities(display),
            cfg.fine.theta,
            prev_fov_avg_psnr=state.prev_display_fov_psnr,
            prev_fov_avg_distortion=state.prev_display_fov_distortion,
            d_missing=cfg.d_missing,
        )
        records.append(MetricsRecord(
            segment=l,
            catalog_segment=segment.index,
            predicted_pattern=pattern.id,
            display_pattern=display.id,
            switched=switch_to is not None,
            startup=startup,
            request_kbps=float(r_request),
            actual_bitrate_kbps=allocation.total_bitrate,
            fov_actual_bitrate_kbps=evaluation.fov_actual_bitrate,
            weighted_psnr=evaluation.weighted_psnr,
            fov_avg_psnr=evaluation.fov_avg_psnr,
            fov_psnr_std=evaluation.fov_psnr_std,
            fov_psnr_temporal_diff=evaluation.fov_psnr_temporal_diff,
            f_value=evaluation.f_value,
            buffer_s=state.buffer,
            stall_s=state.last_stall,
            download_s=t_download,
            clock_s=state.clock,
        ))
        logger.debug(f"Segment {l}: request={r_request:.0f} kbps levels={allocation.levels.tolist()} "
                     f"download={t_download:.3f}s buffer={state.buffer:.2f}s")

        state = replace(
            state,
            playing=state.playing or state.buffer >= policy.b_0,
            prev_planned_fov_distortion=planned,
            prev_display_fov_distortion=evaluation.fov_avg_distortion,
            prev_display_fov_psnr=evaluation.fov_avg_psnr,
            segment=l + 1,
        )

    score = qoe(records, cfg.qoe)
    logger.info(f"Session done: method={cfg.method} p_switch={cfg.p_switch} seed={cfg.seed} "
                f"QoE={score:.3f} stall={state.total_stall:.3f}s")
    return SessionResult(records=records, qoe=score, qoe_terms=qoe_terms(records, cfg.qoe), config=cfg.to_dict())


@dataclass(frozen=True)
class RateAdaptationResult:
    policy: str
    records: list
    switches: int


def run_rate_adaptation(channel, ladder, policy_name, buffer_policy, segments,
                        segment_duration, throughput_window=1, seed=0):
    """Untiled loop: one stream whose ladder is the whole-frame bitrate per level.

    Startup requests the lowest level until the buffer reaches b_0; afterwards
    the named policy picks the level from the throughput estimate and buffer.
    """
    policy = get_rate_policy(policy_name, ladder, buffer_policy)
    (rng,) = spawn_generators(seed, 1)
    state = SessionState(window=ThroughputWindow(size=throughput_window, segment_duration=segment_duration))
    channel_state = channel.initial_state()
    records = []
    for l in range(segments):
        if state.playing:
            level = policy.select(estimate_throughput(state.window), state.buffer)
        else:
            level = policy.prev_level = 1
        bitrate = ladder.bitrate(level)
        t_download, channel_state = channel.download(
            channel_state, bitrate * segment_duration * 1000.0, state.clock, rng)
        state.window.push(bitrate, t_download)
        state = update_buffer(state, t_download, segment_duration)
        state = replace(state, playing=state.playing or state.buffer >= buffer_policy.b_0, segment=l + 1)
        records.append(RateAdaptationRecord(
            segment=l,
            level=level,
            bitrate_kbps=bitrate,
            buffer_s=state.buffer,
            stall_s=state.last_stall,
            download_s=t_download,
            clock_s=state.clock,
        ))
    switches = sum(1 for a, b in zip(records, records[1:]) if a.level != b.level)
    logger.info(f"Rate adaptation {policy.name}: {segments} segments, {switches} level switches, "
                f"total stall {state.total_stall:.3f}s")
    return RateAdaptationResult(policy=policy.name, records=records, switches=switches)
