import numpy as np
import pytest

from mosynth.metrics import (
    MetricReport,
    coverage,
    coverage_detail,
    distance_rows,
    evaluate,
    linear_fit,
    patch_distance,
    scaling_probe,
    set_diversity,
)
from mosynth.pyramid import plan_stages
from mosynth.representation import MotionFeatures
from mosynth.synthesizer import SynthesisConfig


def _wave(H, d=4, offset=0.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(H)[:, None]
    return np.sin(0.2 * t * rng.uniform(0.5, 1.5, d) + rng.uniform(0, 6, d)) + offset


def test_coverage_self_is_full():
    x = _wave(80)
    assert coverage([x], x, 11) == 100.0


def test_coverage_constant_pose_is_zero():
    x = _wave(80)
    assert coverage([x], np.full((80, 4), 5.0), 11, tau=0.01) == 0.0


def test_coverage_disjoint_halves():
    a, b = _wave(100), _wave(100, offset=10.0, seed=1)
    example = np.vstack([a, b])
    # 190 windows: starts 0..89 lie in the first half, the other 100 touch the second
    assert coverage([example], a, 11) == pytest.approx(100 * 90 / 190)
    rows = coverage_detail([example], a, 11)
    assert [r[3] for r in rows] == [True] * 90 + [False] * 100


def test_coverage_pools_examples():
    a, b = _wave(50), _wave(50, offset=10.0, seed=1)
    assert coverage([a, b], a, 11) == pytest.approx(50.0)


def _feats(data, J):
    return MotionFeatures(np.asarray(data, dtype=float), 1 / 30, J)


def test_set_diversity_identical_is_zero():
    x = _feats(_wave(30, d=12 + 3), 2)
    assert set_diversity([x, x, x], x) == 0.0


def test_set_diversity_two_point_closed_form():
    J, c = 2, 0.3
    ex = _wave(30, d=J * 6 + 3, seed=4)
    up, down = ex.copy(), ex.copy()
    up[:, 5] += c
    down[:, 5] -= c
    # across-output std is c on one of 6J channels, 0 elsewhere
    expected = (c / (6 * J)) / np.std(ex[:, : 6 * J])
    got = set_diversity([_feats(up, J), _feats(down, J)], _feats(ex, J))
    assert got == pytest.approx(expected, rel=1e-12)


def test_set_diversity_shift_invariant():
    J = 2
    outs = [_wave(30, d=15, seed=s) for s in range(4)]
    ex = _feats(_wave(30, d=15, seed=9), J)
    a = set_diversity([_feats(o, J) for o in outs], ex)
    b = set_diversity([_feats(o + 3.0, J) for o in outs], ex)
    assert a == pytest.approx(b, rel=1e-12)
    assert a > 0


def test_set_diversity_needs_two():
    x = _feats(_wave(30, d=15), 2)
    with pytest.raises(ValueError):
        set_diversity([x], x)


def test_patch_distance_verbatim_and_offset():
    x = _wave(60)
    assert patch_distance([x], x, 11) == pytest.approx(0.0, abs=1e-7)
    # white noise keeps the aligned window nearest, so the RMS is exactly the offset
    n = np.random.default_rng(2).normal(size=(60, 4))
    assert patch_distance([n], n + 0.05, 11) == pytest.approx(0.05, rel=1e-6)
    # otherwise the offset is only an upper bound
    assert patch_distance([x], x + 0.25, 11) <= 0.25 + 1e-9


def test_patch_distance_monotone_in_p_for_recombination():
    rng = np.random.default_rng(3)
    x = _wave(120, seed=3)
    pieces = [x[s:s + 15] for s in rng.integers(0, 100, size=8)]
    recombined = np.vstack(pieces)
    assert patch_distance([x], recombined, 1) == pytest.approx(0.0, abs=1e-7)
    values = [patch_distance([x], recombined, p) for p in (1, 5, 11, 23)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] > 0


def test_evaluate_report(lite_clip):
    _, _, feats, _ = lite_clip
    rep = evaluate([feats], [feats, feats])
    assert rep.coverage == 100.0
    assert rep.set_diversity == 0.0
    assert rep.local_patch_distance == pytest.approx(0.0, abs=1e-7)
    text = rep.to_text()
    assert "coverage: 100" in text and "global_patch_distance:" in text
    single = evaluate([feats], [feats])
    assert single.set_diversity is None and "set_diversity: n/a" in single.to_text()


def test_report_text_one_line_per_field():
    text = MetricReport(99.5, 0.25, 0.1, 0.05, 1.5, 1024).to_text()
    keys = [line.split(":")[0] for line in text.strip().split("\n")]
    assert keys == ["coverage", "set_diversity", "global_patch_distance", "local_patch_distance",
                    "wall_time", "peak_memory"]


def test_probe_single_measurement(lite_clip, lite_skeleton):
    _, _, feats, _ = lite_clip
    (row,) = scaling_probe(feats, SynthesisConfig(), [100], lite_skeleton)
    F, secs, peak = row
    assert F == 100 and secs > 0 and peak > 0


def test_distance_rows_double():
    p = 11
    a = plan_stages([500], 1000, p, 4, 4 / 3)
    b = plan_stages([500], 2000, p, 4, 4 / 3)
    rows_a, rows_b = distance_rows(a, p), distance_rows(b, p)
    assert rows_a == [n - p + 1 for n in a.synthesis_lengths]
    assert rows_a[-1] == 990 and rows_b[-1] == 1990
    for ra, rb in zip(rows_a, rows_b):
        assert abs((rb + p - 1) - 2 * (ra + p - 1)) <= 1


def test_linear_fit_exact():
    slope, intercept, r2 = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert slope == pytest.approx(2) and intercept == pytest.approx(1) and r2 == pytest.approx(1)
