import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mersem.metrics import (
    MixedScenario, PointBeyondReference, RunResult, TooFewSamples, aggregate_runs, confidence_interval,
    hypervolume, pareto_filter,
)


def mc_hypervolume(points, ref, n, rng):
    """Monte Carlo estimate: fraction of the ref box dominated by some point."""
    pts = np.asarray(points)
    samples = rng.random((n, 2)) * np.asarray(ref)
    dominated = np.zeros(n, dtype=bool)
    for p in pts:
        dominated |= (samples[:, 0] >= p[0]) & (samples[:, 1] >= p[1])
    return dominated.mean() * ref[0] * ref[1]


def test_hand_cases():
    assert hypervolume([], (1, 1)) == 0.0
    assert hypervolume([(0.5, 0.5)], (1, 1)) == pytest.approx(0.25, abs=1e-12)
    assert hypervolume([(0.2, 0.8), (0.8, 0.2)], (1, 1)) == pytest.approx(0.28, abs=1e-12)


def test_clipping_and_rejection():
    assert hypervolume([(0.5, 0.5), (1.5, 0.1)], (1, 1)) == pytest.approx(0.25)
    with pytest.raises(PointBeyondReference):
        hypervolume([(1.5, 0.1)], (1, 1), clip=False)


def test_matches_monte_carlo():
    rng = np.random.default_rng(0)
    for _ in range(5):
        pts = rng.random((20, 2))
        exact = hypervolume(pts, (1, 1))
        est = mc_hypervolume(pts, (1, 1), 200_000, rng)
        assert abs(est - exact) / exact < 0.02


pt = st.tuples(st.floats(0, 1), st.floats(0, 1))


@given(st.lists(pt, max_size=15), pt)
def test_monotone_and_permutation_invariant(points, extra):
    hv = hypervolume(points, (1, 1))
    assert hypervolume(points + [extra], (1, 1)) >= hv - 1e-12
    assert hypervolume(list(reversed(points)), (1, 1)) == pytest.approx(hv, abs=1e-12)
    if points:
        p = points[0]
        dominated = (min(1.0, p[0] + 0.1), min(1.0, p[1] + 0.1))
        assert hypervolume(points + [dominated], (1, 1)) == pytest.approx(hv, abs=1e-12)


def test_pareto_filter():
    assert pareto_filter([(0.5, 0.5), (0.6, 0.6), (0.2, 0.9), (0.5, 0.5)]) == [(0.2, 0.9), (0.5, 0.5)]


def test_confidence_interval_examples():
    m, h = confidence_interval([1, 2, 3])
    assert m == 2.0 and h == pytest.approx(4.302652729911275 / math.sqrt(3), rel=1e-9)
    assert h == pytest.approx(2.4843, abs=5e-4)  # 4.3027 / sqrt(3), table-rounded
    m, h = confidence_interval([0, 1])
    assert m == 0.5 and h == pytest.approx(6.353, abs=1e-3)
    assert confidence_interval([4.0, 4.0, 4.0]) == (4.0, 0.0)
    with pytest.raises(TooFewSamples):
        confidence_interval([1.0])


def _rr(variant, seed, sla, co2, scenario="s"):
    return RunResult(scenario, variant, seed, sla, co2, {"edge": co2 * 0.2, "fog": co2 * 0.3, "cloud": co2 * 0.5}, 0.5)


def test_aggregate_runs():
    rows = aggregate_runs([_rr("sla", s, 0.1 * s, 10.0 + s) for s in range(10)] + [_rr("carbon", 0, 0.5, 9.0)])
    by = {r["variant"]: r for r in rows}
    assert by["sla"]["n_runs"] == 10 and by["sla"]["ci_defined"] == 1
    assert by["sla"]["sla_rate_ci"] > 0
    assert by["carbon"]["ci_defined"] == 0 and by["carbon"]["co2_g_ci"] == 0.0
    assert by["carbon"]["co2_g_mean"] == 9.0
    r = by["sla"]
    assert r["co2_edge_g_mean"] + r["co2_fog_g_mean"] + r["co2_cloud_g_mean"] == pytest.approx(r["co2_g_mean"], abs=1e-9)
    with pytest.raises(MixedScenario):
        aggregate_runs([_rr("sla", 0, 0.1, 1.0, "a"), _rr("sla", 0, 0.1, 1.0, "b")])
