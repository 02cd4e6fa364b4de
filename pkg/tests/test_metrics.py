from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import adjusted_rand_score

from helpers import brute_force_ari
from vvo.metrics import MetricError, ari, ari_fg, code_usage_stats, mbo, miou, segmentation_scores


def random_grids(n, size=6, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.integers(0, rng.integers(2, 6), (size, size)), rng.integers(0, rng.integers(2, 6), (size, size))


def counting_iou(pred_mask, truth_mask):
    inter = sum(1 for a, b in zip(pred_mask.ravel(), truth_mask.ravel()) if a and b)
    union = sum(1 for a, b in zip(pred_mask.ravel(), truth_mask.ravel()) if a or b)
    return Fraction(inter, union)


# ---------------------------------------------------------------------- ARI


def test_ari_matches_brute_force_on_random_grids():
    for pred, truth in random_grids(100):
        assert ari(pred, truth) == brute_force_ari(pred, truth)
        keep = truth > 0
        assert ari_fg(pred, truth) == brute_force_ari(pred[keep], truth[keep])


def test_ari_agrees_with_sklearn():
    for pred, truth in random_grids(20, seed=1):
        assert ari(pred, truth) == pytest.approx(adjusted_rand_score(truth.ravel(), pred.ravel()), abs=1e-12)


def test_ari_examples():
    truth = np.array([[1, 1], [2, 2]])
    assert ari(truth, truth) == 1.0
    assert ari(np.zeros((2, 2), int), truth) == 0.0
    pred = np.array([[1, 2], [1, 2]])
    assert ari(pred, truth) == brute_force_ari(pred, truth)
    # 6 pairs: same-truth 2, same-pred 2, agreeing on same 0
    assert ari(pred, truth) == pytest.approx(float((0 - Fraction(4, 6)) / (2 - Fraction(4, 6))))


def test_ari_fg_ignores_background_predictions():
    truth = np.array([[0, 0, 1, 1], [0, 0, 2, 2]])
    a = np.array([[5, 6, 1, 1], [7, 8, 2, 2]])
    b = np.array([[1, 1, 1, 1], [1, 1, 2, 2]])
    assert ari_fg(a, truth) == ari_fg(b, truth) == 1.0


def test_ari_errors():
    with pytest.raises(MetricError):
        ari(np.zeros((2, 2), int), np.zeros((2, 2), int), foreground_only=True)
    with pytest.raises(MetricError):
        ari(np.zeros((2, 2), int), np.zeros((2, 3), int))
    with pytest.raises(MetricError):
        ari(-np.ones((2, 2), int), np.zeros((2, 2), int))


labels = arrays(np.int64, (5, 5), elements=st.integers(0, 4))


@given(pred=labels, truth=labels, seed=st.integers(0, 1000))
def test_ari_permutation_invariant(pred, truth, seed):
    rng = np.random.default_rng(seed)
    pp, tp = rng.permutation(5), rng.permutation(5)
    assert ari(pp[pred], tp[truth]) == ari(pred, truth)
    assert ari(truth, pred) == ari(pred, truth)


# -------------------------------------------------------------- mIoU / mBO


def test_perfect_prediction_all_ones():
    for pred, truth in random_grids(10, seed=2):
        truth[0, 0] = 1
        assert segmentation_scores(truth, truth) == {"ari": 1.0, "ari_fg": 1.0, "miou": 1.0, "mbo": 1.0}
        relabeled = (truth + 3) * 2
        assert segmentation_scores(relabeled, truth)["miou"] == 1.0


def test_mbo_at_least_miou_on_random_grids():
    for pred, truth in random_grids(100, seed=3):
        truth[0, 0] = 1
        assert mbo(pred, truth) >= miou(pred, truth)


def test_miou_swapped_regions():
    truth = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [0, 0, 0, 1]])
    pred = (truth == 0).astype(int)
    expected = max(counting_iou(pred == v, truth == 1) for v in (0, 1))
    assert miou(pred, truth) == pytest.approx(float(expected))
    # swapping ids is a relabeling, so the object is still matched exactly
    assert expected == 1


def test_miou_half_object():
    truth = np.zeros((4, 4), int)
    truth[:2] = 1
    pred = np.zeros((4, 4), int)
    pred[0] = 1
    # only the predicted-half mask and the rest; best match is the half
    oracle = max(counting_iou(pred == v, truth == 1) for v in (0, 1))
    assert miou(pred, truth) == pytest.approx(float(oracle))
    assert oracle == Fraction(1, 2)


def test_miou_unmatched_objects_score_zero():
    truth = np.array([[1, 2], [3, 0]])
    pred = np.zeros((2, 2), int)
    assert miou(pred, truth) == pytest.approx(1 / 4 / 3)
    assert mbo(pred, truth) == pytest.approx(1 / 4)


def test_mbo_covering_mask_equals_fraction():
    truth = np.zeros((5, 5), int)
    truth[1:3, 1:4] = 1
    assert mbo(np.zeros_like(truth), truth) == pytest.approx(6 / 25)


def test_miou_hungarian_matches_exhaustive():
    rng = np.random.default_rng(4)
    for _ in range(5):
        truth = rng.integers(0, 11, (12, 12))
        pred = rng.integers(0, 11, (12, 12))
        from vvo import metrics

        iou = metrics._iou_matrix(pred, truth)
        from scipy.optimize import linear_sum_assignment

        r, c = linear_sum_assignment(iou, maximize=True)
        assert miou(pred, truth) == pytest.approx(iou[r, c].sum() / iou.shape[0])


def test_miou_small_exhaustive_vs_hungarian():
    from scipy.optimize import linear_sum_assignment

    from vvo import metrics

    for pred, truth in random_grids(30, seed=5):
        truth[0, 0] = 1
        iou = metrics._iou_matrix(pred, truth)
        r, c = linear_sum_assignment(iou, maximize=True)
        assert miou(pred, truth) == pytest.approx(iou[r, c].sum() / iou.shape[0])


@given(pred=labels, truth=labels, seed=st.integers(0, 1000))
def test_miou_mbo_permutation_invariant(pred, truth, seed):
    truth = truth.copy()
    truth[0, 0] = 1
    perm = np.random.default_rng(seed).permutation(5)
    assert miou(perm[pred], truth) == pytest.approx(miou(pred, truth))
    assert mbo(perm[pred], truth) == mbo(pred, truth)
    assert mbo(pred, truth) >= miou(pred, truth) - 1e-12


def test_empty_truth_errors():
    z = np.zeros((3, 3), int)
    with pytest.raises(MetricError):
        miou(z, z)
    with pytest.raises(MetricError):
        mbo(z, z)


# ------------------------------------------------------------- code usage


def test_code_usage_examples():
    assert code_usage_stats([np.zeros((4, 4), int)], 8) == {"unique_codes": 1, "usage_cv": 0.0}
    assert code_usage_stats([np.arange(8).reshape(2, 4)], 8) == {"unique_codes": 8, "usage_cv": 0.0}
    s = code_usage_stats([np.array([0]), np.array([2, 2, 2])], 4)
    assert s == {"unique_codes": 2, "usage_cv": 0.5}


def test_code_usage_errors():
    with pytest.raises(MetricError):
        code_usage_stats([], 4)
    with pytest.raises(MetricError):
        code_usage_stats([np.array([4])], 4)
