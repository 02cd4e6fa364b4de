"""Shared oracles and fixtures for tests and the acceptance run."""

import numpy as np
import torch
from sklearn.cluster import KMeans

from vvo.aggregator import SlotAttention


def clustering_weights(sa: SlotAttention) -> SlotAttention:
    """Configure slot attention as soft k-means: identity projections, a GRU
    whose update gate is shut (slot replaced by its update), no residual MLP."""
    d = sa.dim
    with torch.no_grad():
        for lin in (sa.to_q, sa.to_k, sa.to_v):
            lin.weight.copy_(torch.eye(d))
        for p in (sa.gru.weight_ih, sa.gru.weight_hh, sa.gru.bias_ih, sa.gru.bias_hh):
            p.zero_()
        # torch GRU gate order is reset, update, new
        sa.gru.weight_ih[2 * d:].copy_(torch.eye(d))
        sa.gru.bias_ih[d:2 * d].fill_(-30.0)
        for p in sa.mlp.parameters():
            p.zero_()
    return sa


def two_cluster_features(seed: int, h: int = 8, w: int = 8, d: int = 16, sep: float = 3.0, noise: float = 0.3):
    g = np.random.default_rng(seed)
    labels = (g.random((h, w)) < 0.5).astype(int)
    centers = g.normal(size=(2, d)) * sep
    z = centers[labels] + g.normal(size=(h, w, d)) * noise
    return torch.tensor(z, dtype=torch.float32), labels


def kmeans_agreement(seed: int) -> float:
    """Fraction of pixels where a clustering-configured aggregator agrees
    with k-means(2), maximized over the label swap."""
    torch.manual_seed(seed)
    z, _ = two_cluster_features(seed)
    sa = clustering_weights(SlotAttention(2, z.shape[-1], 3, "learned", "gru"))
    with torch.no_grad():
        masks = sa(z[None]).masks[0].numpy()
    km = KMeans(2, n_init=10, random_state=seed).fit_predict(z.reshape(-1, z.shape[-1]).numpy())
    agree = (masks.ravel() == km).mean()
    return float(max(agree, 1 - agree))


def brute_force_ari(pred, truth) -> float:
    """Rand index over all unordered pixel pairs, adjusted by the
    permutation-model expectation, with exact rational arithmetic."""
    from fractions import Fraction
    from itertools import combinations

    p = np.asarray(pred).ravel()
    t = np.asarray(truth).ravel()
    n = len(p)
    pairs = n * (n - 1) // 2
    both = same_p = same_t = 0
    for i, j in combinations(range(n), 2):
        sp, st = p[i] == p[j], t[i] == t[j]
        same_p += sp
        same_t += st
        both += sp and st
    expected = Fraction(same_p * same_t, pairs)
    maximum = Fraction(same_p + same_t, 2)
    if maximum == expected:
        return 1.0
    return float((both - expected) / (maximum - expected))
