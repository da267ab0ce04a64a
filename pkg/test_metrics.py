import math
from types import SimpleNamespace

import numpy as np
import pytest

from streaming.allocation import AllocationResult
from streaming.catalog import CatalogSpec, synthesize_catalog
from streaming.errors import DomainError
from streaming.metrics import (
    QoeParams,
    evaluate_segment,
    fov_stats,
    mse_to_psnr,
    qoe,
    qoe_terms,
    weighted_psnr,
)
from streaming.viewport import Color, FovPattern, default_patterns, zipf_priorities


def psnr_to_mse(psnr):
    return 255.0 ** 2 / 10 ** (psnr / 10)


def record(q, stall=0.0, buffer=10.0):
    return SimpleNamespace(fov_avg_psnr=q, stall_s=stall, buffer_s=buffer)


@pytest.mark.parametrize("d,expected", [(650.25, 20.0), (65025, 0.0), (6.5025, 40.0)])
def test_mse_to_psnr(d, expected):
    assert mse_to_psnr(d) == pytest.approx(expected, abs=1e-12)


def test_mse_to_psnr_rejects_non_positive():
    with pytest.raises(DomainError):
        mse_to_psnr(0)
    with pytest.raises(DomainError):
        mse_to_psnr([10, -1])


def test_weighted_psnr_examples():
    assert weighted_psnr([650.25, 650.25], [0.5, 0.5]) == pytest.approx(20.0)
    assert weighted_psnr([6.5025, 1e9], [1.0, 0.0]) == pytest.approx(40.0)


def test_weighted_psnr_with_zipf_priorities():
    colors = [Color.RED] * 6 + [Color.ORANGE] * 8 + [Color.GREEN] * 6 + [Color.BLUE] * 4
    pattern = FovPattern(id=1, rows=4, cols=6, colors=tuple(colors))
    distortions = [6.5025 if c is Color.RED else 650.25 for c in colors]
    expected = 6 / 13 * 40 + 7 / 13 * 20
    assert weighted_psnr(distortions, zipf_priorities(pattern).tiles) == pytest.approx(expected)
    assert expected == pytest.approx(29.23, abs=0.005)


def test_uniform_weights_give_the_mean():
    rng = np.random.default_rng(0)
    d = rng.uniform(1, 500, 24)
    assert weighted_psnr(d, np.full(24, 1 / 24)) == pytest.approx(np.mean(mse_to_psnr(d)))


def test_fov_stats_examples():
    avg, std, diff = fov_stats([psnr_to_mse(20), psnr_to_mse(40)], 30)
    assert (avg, std, diff) == pytest.approx((30, 10, 0))
    avg, std, diff = fov_stats([psnr_to_mse(p) for p in (30, 34, 38, 38)], 33)
    assert avg == pytest.approx(35)
    assert std == pytest.approx(math.sqrt(11))
    assert diff == pytest.approx(2)
    assert fov_stats([42.0] * 4)[1] == pytest.approx(0)
    assert fov_stats([42.0])[2] == 0


def test_qoe_single_segment():
    assert qoe([record(40, buffer=10)]) == 40


def test_qoe_two_segments():
    records = [record(40, buffer=10), record(38, buffer=12)]
    assert qoe(records, QoeParams()) == pytest.approx(65.1, abs=1e-12)
    assert qoe_terms(records, QoeParams()) == pytest.approx(
        {"quality": 78, "switching": 2, "stall": 0, "low_buffer": 9})


def test_one_second_stall_costs_delta():
    base = [record(40, buffer=20), record(40, buffer=20)]
    stalled = [record(40, buffer=20), record(40, stall=1.0, buffer=20)]
    assert qoe(base) - qoe(stalled) == pytest.approx(500)


def test_qoe_monotone_in_stalls_and_switches():
    for stall in (0.0, 0.5, 2.0, 5.0):
        a = qoe([record(40), record(40, stall=stall)])
        b = qoe([record(40), record(40, stall=stall + 0.1)])
        assert b < a
    # same quality sum, larger total switch magnitude
    assert qoe([record(40), record(38), record(40)]) < qoe([record(40), record(40), record(38)])


def test_qoe_params_invariants():
    with pytest.raises(ValueError):
        QoeParams(gamma=-1)
    with pytest.raises(ValueError):
        qoe([])


def test_missing_tiles_are_charged_and_stay_finite():
    catalog = synthesize_catalog(CatalogSpec(segments=1), seed=1)
    segment = catalog.segment(0)
    planned, shown = default_patterns()[10], default_patterns()[0]
    levels = np.zeros(24, dtype=int)
    levels[list(planned.fov_tiles)] = 16
    allocation = AllocationResult.from_levels(levels, segment, planned.fov_tiles)

    evaluation = evaluate_segment(allocation, shown, zipf_priorities(shown), (0.2, 0.3, 0.5),
                                  prev_fov_avg_psnr=40.0, prev_fov_avg_distortion=5.0, d_missing=3000)
    for value in (evaluation.weighted_psnr, evaluation.fov_avg_psnr, evaluation.f_value):
        assert math.isfinite(value)
    # the top row shares no tile with the planned block
    assert evaluation.fov_avg_distortion == pytest.approx(3000)
    assert evaluation.fov_avg_psnr == pytest.approx(mse_to_psnr(3000))
    assert evaluation.fov_actual_bitrate == 0
    assert evaluation.f_value == pytest.approx(0.2 * 3000 + 0.5 * 0.5 * (3000 - 5.0))


def test_first_segment_has_no_temporal_terms():
    catalog = synthesize_catalog(CatalogSpec(segments=1), seed=2)
    pattern = default_patterns()[10]
    allocation = AllocationResult.from_levels(np.full(24, 5), catalog.segment(0), pattern.fov_tiles)
    evaluation = evaluate_segment(allocation, pattern, zipf_priorities(pattern), (0.0, 0.0, 1.0))
    assert evaluation.fov_psnr_temporal_diff == 0
    assert evaluation.f_value == 0
    assert evaluation.fov_actual_bitrate == 4 * 750
