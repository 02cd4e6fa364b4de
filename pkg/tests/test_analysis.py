import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from vvo.analysis import (
    AnalysisError,
    BiasWorld,
    ClusterWorld,
    bias_experiment,
    boundary_check,
    compare_objectness,
    estimate_p2,
    p2_experiment,
    p2_sweep,
    residual_bias_experiment,
)
from vvo.tensorio import RandomStream


def phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ---------------------------------------------------------------------- p2


@pytest.mark.parametrize("b", [0.0, 0.5, 1.0])
def test_p2_boundary_matches_gaussian_cdf(b):
    est = estimate_p2(ClusterWorld.with_boundary(b), 100_000, RandomStream(11))
    assert abs(est.value - phi(b)) <= 3 * est.se
    assert est.se == pytest.approx(math.sqrt(est.value * (1 - est.value) / 100_000))


def test_p2_boundary_with_sigma():
    est = estimate_p2(ClusterWorld.with_boundary(1.0, sigma=2.0), 100_000, RandomStream(3))
    assert abs(est.value - phi(0.5)) <= 3 * est.se


def test_boundary_check_report():
    rows = boundary_check(n_trials=100_000)
    assert rows["b"] == [0.0, 0.5, 1.0]
    for p, se, f in zip(rows["p2"], rows["se"], rows["phi"]):
        assert abs(p - f) <= 3 * se
    assert rows["phi"][2] == pytest.approx(0.8413, abs=1e-4)


def test_p2_monotone_in_separation():
    vals = p2_sweep([0.5, 1.0, 2.0, 3.0, 4.0], 20_000, seeds=(0, 1, 2))
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > vals[0] + 0.2


def test_p2_rotation_invariance():
    world = ClusterWorld.along_axis(1.5, dimension=3, sigma=1.0, spread=0.5)
    rot = special_ortho_group.rvs(3, random_state=0)
    a = estimate_p2(world, 100_000, RandomStream(0))
    b = estimate_p2(world.rotated(rot), 100_000, RandomStream(1))
    assert abs(a.value - b.value) <= 3 * math.hypot(a.se, b.se)


@settings(max_examples=10)
@given(seed=st.integers(0, 100))
def test_p2_rotation_same_draws_property(seed):
    # with isotropic noise the rotated world under identical draws is the
    # same experiment up to an orthogonal change of coordinates
    world = ClusterWorld.along_axis(1.0, dimension=2, sigma=1.0, spread=0.3)
    rot = special_ortho_group.rvs(2, random_state=seed)
    a = estimate_p2(world, 20_000, RandomStream(seed)).value
    b = estimate_p2(world.rotated(rot), 20_000, RandomStream(seed)).value
    assert abs(a - b) < 0.03


def test_p2_neg_inner_metric_available():
    est = estimate_p2(ClusterWorld.along_axis(2.0, 2), 1000, RandomStream(0), metric="neg_inner")
    assert 0.0 <= est.value <= 1.0
    with pytest.raises(AnalysisError):
        estimate_p2(ClusterWorld.along_axis(2.0, 2), 1000, RandomStream(0), metric="l1")


def test_p2_errors():
    with pytest.raises(AnalysisError):
        estimate_p2(ClusterWorld.with_boundary(0.0), 999, RandomStream(0))
    with pytest.raises(AnalysisError):
        ClusterWorld([0.0], [0.0])
    with pytest.raises(AnalysisError):
        ClusterWorld([0.0], [1.0], sigma=0.0)


# -------------------------------------------------------------- objectness


def clusters(spread, distance, dim=16, n=300, k=3, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k, dim))
    centers *= distance / np.linalg.norm(centers[0] - centers[1])
    labels = np.repeat(np.arange(k), n // k)
    return centers[labels] + spread * rng.normal(size=(len(labels), dim)), labels


def test_objectness_identical_sets():
    x, y = clusters(0.1, 1.0)
    r = compare_objectness(x, x, y)
    assert r["shift"] == pytest.approx(0.0, abs=1e-12)
    assert r["intra_a"] == r["intra_b"] and r["inter_a"] == r["inter_b"]


def test_objectness_constructed_clusters():
    a, y = clusters(0.1, 1.0)
    # same centres on a single pair, more spread: intra and inter comparable
    rng = np.random.default_rng(1)
    centers = rng.normal(size=(3, 16))
    centers *= 0.5 / np.linalg.norm(centers[0] - centers[1])
    b = centers[y] + 0.5 * rng.normal(size=a.shape)
    r = compare_objectness(a, b, y)
    assert r["intra_a"] < 0.5 * r["inter_a"]
    assert r["intra_b"] == pytest.approx(r["inter_b"], rel=0.1)


def test_objectness_translation():
    a, y = clusters(0.2, 1.0)
    base = compare_objectness(a, a + 0.1, y)
    moved = compare_objectness(a, a + 3.0, y)
    assert moved["intra_b"] == pytest.approx(base["intra_b"], rel=1e-9)
    assert moved["inter_b"] == pytest.approx(base["inter_b"], rel=1e-9)
    assert moved["shift"] > base["shift"]
    # the centroid offset lies in the union's leading direction
    assert moved["shift"] == pytest.approx(3.0 * 4.0, rel=1e-6)


def test_objectness_subsample_and_errors():
    a, y = clusters(0.2, 1.0, n=3000)
    r = compare_objectness(a, a, y, max_points=512, rng=RandomStream(0))
    assert r["intra_a"] < r["inter_a"]
    with pytest.raises(AnalysisError):
        compare_objectness(a, a, np.zeros(len(a)))
    with pytest.raises(AnalysisError):
        compare_objectness(a, a[:-1], y)


# -------------------------------------------------------------------- bias


def test_bias_zero_shift():
    r = residual_bias_experiment(BiasWorld.with_shift(0.0, 1, 0.1), 10_000, RandomStream(0))
    assert r["mean_residual_shared"] < 3 * r["se"]
    assert r["mean_residual_separate"] < 3 * r["se"]


def test_bias_clt_example():
    r = residual_bias_experiment(BiasWorld.with_shift(0.5, 1, 0.1), 10_000, RandomStream(1))
    assert r["mean_residual_separate"] == pytest.approx(0.5, abs=0.003)
    assert r["mean_residual_shared"] < 0.003


def test_bias_noise_scale_independent():
    r = residual_bias_experiment(BiasWorld.with_shift(0.5, 1, 1.0), 10_000, RandomStream(2))
    assert r["mean_residual_shared"] < 3 * r["se"]


def test_bias_root_n_rate():
    world = BiasWorld.with_shift(0.0, 64, 1.0)
    norms = [residual_bias_experiment(world, n, RandomStream(5)).get("mean_residual_shared") for n in (10**3, 10**4, 10**5)]
    for hi, lo in zip(norms, norms[1:]):
        assert 2.0 <= hi / lo <= 5.0


def test_bias_experiment_rows():
    rows = bias_experiment(n_samples=20_000)["rows"]
    for r in rows:
        assert r["mean_residual_shared"] < 3 * r["se_norm"]
        assert abs(r["mean_residual_separate"] - r["shift_norm"]) < 3 * r["se_norm"]


def test_bias_errors():
    with pytest.raises(AnalysisError):
        residual_bias_experiment(BiasWorld(np.zeros(2)), 999, RandomStream(0))
    with pytest.raises(AnalysisError):
        BiasWorld(np.zeros(2), noise_std=-1)


def test_p2_experiment_metric_flag():
    r = p2_experiment(separations=(1.0, 3.0), n_trials=2000, seeds=(0,), metric="neg_inner")
    assert r["metric"] == "neg_inner" and len(r["p2"]) == 2
