"""
Evaluation quantities: PSNR conversions, weighted PSNR, FoV statistics and QoE.
"""

import logging
from dataclasses import dataclass

import numpy as np

import config
from .allocation import objective_f
from .errors import DomainError

logger = logging.getLogger(__name__)

PEAK_SQUARED = 255.0 ** 2


@dataclass(frozen=True)
class QoeParams:
    gamma: float = config.QOE_GAMMA
    delta: float = config.QOE_DELTA
    eta: float = config.QOE_ETA
    b_ref: float = config.QOE_B_REF_S

    def __post_init__(self):
        for name in ("gamma", "delta", "eta", "b_ref"):
            if getattr(self, name) < 0:
                raise ValueError(f"QoE parameter {name} must be non-negative, got {getattr(self, name)}")


def mse_to_psnr(d):
    """10 * log10(255^2 / d); accepts scalars or arrays."""
    arr = np.asarray(d, dtype=float)
    if np.any(arr <= 0):
        raise DomainError(f"MSE must be positive, got {d}")
    psnr = 10.0 * np.log10(PEAK_SQUARED / arr)
    return float(psnr) if psnr.ndim == 0 else psnr


def weighted_psnr(distortions, priorities):
    """Priority-weighted sum of per-tile PSNR."""
    p = np.asarray(priorities, dtype=float)
    d = np.asarray(distortions, dtype=float)
    if p.shape != d.shape:
        raise ValueError(f"{d.size} distortions but {p.size} priorities")
    return float(np.dot(p, mse_to_psnr(d)))


def fov_stats(fov_distortions, prev_fov_avg_psnr=None):
    """(mean PSNR, population std of PSNR, |prev mean - mean|) over the FoV tiles.

    With no previous segment the temporal difference is 0.
    """
    psnr = np.atleast_1d(mse_to_psnr(np.asarray(fov_distortions, dtype=float)))
    if psnr.size == 0:
        raise ValueError("fov_stats needs at least one FoV tile")
    avg = float(psnr.mean())
    std = float(psnr.std())
    diff = 0.0 if prev_fov_avg_psnr is None else abs(prev_fov_avg_psnr - avg)
    return avg, std, diff


def charged_distortions(allocation, d_missing=config.D_MISSING):
    """Per-tile MSE for display, undownloaded tiles charged d_missing."""
    if not d_missing > 0:
        raise DomainError(f"D_missing must be positive, got {d_missing}")
    return np.where(allocation.downloaded, allocation.distortions, d_missing)


@dataclass(frozen=True)
class SegmentEvaluation:
    weighted_psnr: float
    fov_avg_psnr: float
    fov_psnr_std: float
    fov_psnr_temporal_diff: float
    fov_avg_distortion: float
    f_value: float
    fov_actual_bitrate: float


def evaluate_segment(allocation, display_pattern, display_priorities, theta,
                     prev_fov_avg_psnr=None, prev_fov_avg_distortion=None, d_missing=config.D_MISSING):
    """Score what the viewer actually sees: the display FoV against the downloaded tiles.

    The temporal references are those of the previous displayed segment; at the
    first segment they default to the current values.
    """
    distortions = charged_distortions(allocation, d_missing)
    fov = list(display_pattern.fov_tiles)
    fov_d = distortions[fov]
    avg_d = float(fov_d.mean())
    avg_psnr, std_psnr, diff_psnr = fov_stats(fov_d, prev_fov_avg_psnr)
    prev_d = avg_d if prev_fov_avg_distortion is None else prev_fov_avg_distortion
    return SegmentEvaluation(
        weighted_psnr=weighted_psnr(distortions, display_priorities.tiles),
        fov_avg_psnr=avg_psnr,
        fov_psnr_std=std_psnr,
        fov_psnr_temporal_diff=diff_psnr,
        fov_avg_distortion=avg_d,
        f_value=objective_f(fov_d, prev_d, theta),
        fov_actual_bitrate=float(allocation.bitrates[fov].sum()),
    )


def qoe_terms(records, params):
    """The four QoE sums: quality, switching, stalls and low-buffer.

    Args:
        records: sequence with fov_avg_psnr, stall_s and buffer_s attributes
        params: QoeParams

    Returns:
        dict with keys quality, switching, stall, low_buffer (unweighted sums)
    """
    if not records:
        raise ValueError("QoE needs at least one segment")
    q = np.array([r.fov_avg_psnr for r in records], dtype=float)
    stalls = np.array([r.stall_s for r in records], dtype=float)
    buffers = np.array([r.buffer_s for r in records], dtype=float)
    return {
        "quality": float(q.sum()),
        "switching": float(np.abs(np.diff(q)).sum()),
        "stall": float(stalls.sum()),
        "low_buffer": float((np.maximum(0.0, params.b_ref - buffers[1:]) ** 2).sum()),
    }


def qoe(records, params=None):
    """Session QoE: quality minus weighted switching, stall and low-buffer penalties."""
    params = params or QoeParams()
    terms = qoe_terms(records, params)
    return (terms["quality"] - params.gamma * terms["switching"] - params.delta * terms["stall"]
            - params.eta * terms["low_buffer"])
