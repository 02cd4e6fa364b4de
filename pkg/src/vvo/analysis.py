"""Monte Carlo checks of why VFM features and shared quantized targets help.

* :func:`estimate_p2` - probability that a noisy query lands on the right
  side of the separation between two objects.
* :func:`compare_objectness` - intra/inter object distances of two feature
  sets and the shift between them.
* :func:`residual_bias_experiment` - mean reconstruction residual against a
  shared target versus a shifted (separately encoded) one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .tensorio import RandomStream


class AnalysisError(ValueError):
    pass


@dataclass
class ClusterWorld:
    """Two Gaussian objects; the query for object 2 is ``N(s_star, sigma^2 I)``.

    ``spread`` is the per-axis std of points inside an object; 0 makes the
    object a single point.
    """

    centroid_1: np.ndarray
    centroid_2: np.ndarray
    sigma: float = 1.0
    spread_1: float = 0.0
    spread_2: float = 0.0
    s_star: np.ndarray | None = None

    def __post_init__(self):
        self.centroid_1 = np.atleast_1d(np.asarray(self.centroid_1, dtype=np.float64))
        self.centroid_2 = np.atleast_1d(np.asarray(self.centroid_2, dtype=np.float64))
        if self.centroid_1.shape != self.centroid_2.shape:
            raise AnalysisError("centroids differ in dimension")
        if np.linalg.norm(self.centroid_1 - self.centroid_2) <= 0:
            raise AnalysisError("inter-centroid distance must be positive")
        if self.sigma <= 0 or self.spread_1 < 0 or self.spread_2 < 0:
            raise AnalysisError("sigma must be positive and spreads nonnegative")
        self.s_star = self.centroid_2.copy() if self.s_star is None else np.atleast_1d(np.asarray(self.s_star, dtype=np.float64))

    @property
    def dimension(self) -> int:
        return self.centroid_1.size

    @classmethod
    def along_axis(cls, separation: float, dimension: int = 1, sigma: float = 1.0, spread: float = 0.0):
        """Object 2 centred at the origin, object 1 at distance ``separation`` along -x."""
        c1 = np.zeros(dimension)
        c1[0] = -separation
        return cls(c1, np.zeros(dimension), sigma, spread, spread)

    @classmethod
    def with_boundary(cls, b: float, sigma: float = 1.0):
        """1-D world with point objects, query centre 0 and separation boundary at ``-b``.

        Correct aggregation then has probability ``Phi(b / sigma)``.
        """
        return cls([-2.0 * b - 1.0], [1.0], sigma, 0.0, 0.0, s_star=[0.0])

    def rotated(self, rotation: np.ndarray) -> "ClusterWorld":
        return ClusterWorld(
            rotation @ self.centroid_1, rotation @ self.centroid_2, self.sigma,
            self.spread_1, self.spread_2, rotation @ self.s_star,
        )


def _distance(a, b, metric: str):
    if metric == "sqeuclid":
        return ((a - b) ** 2).sum(-1)
    if metric == "neg_inner":
        return -(a * b).sum(-1)
    raise AnalysisError(f"unknown distance {metric!r}")


@dataclass
class Estimate:
    value: float
    se: float

    def __iter__(self):
        return iter((self.value, self.se))


def estimate_p2(world: ClusterWorld, n_trials: int, rng: RandomStream, metric: str = "sqeuclid") -> Estimate:
    """Fraction of trials with ``d(s, v1) > d(s, v2)`` and its binomial standard error."""
    if n_trials < 1000:
        raise AnalysisError("n_trials must be >= 1000")
    dim = world.dimension
    s = world.s_star + world.sigma * rng.normal(size=(n_trials, dim))
    v1 = world.centroid_1 + world.spread_1 * rng.normal(size=(n_trials, dim))
    v2 = world.centroid_2 + world.spread_2 * rng.normal(size=(n_trials, dim))
    hits = _distance(s, v1, metric) > _distance(s, v2, metric)
    p = float(hits.mean())
    return Estimate(p, float(np.sqrt(max(p * (1 - p), 1e-12) / n_trials)))


def p2_sweep(separations, n_trials: int, seeds, sigma: float = 1.0, spread: float = 0.5, dimension: int = 2,
             metric: str = "sqeuclid"):
    """Median p2 over ``seeds`` for each separation; same seeds at every grid point."""
    out = []
    for sep in separations:
        world = ClusterWorld.along_axis(sep, dimension, sigma, spread)
        vals = [estimate_p2(world, n_trials, RandomStream(seed), metric).value for seed in seeds]
        out.append(float(np.median(vals)))
    return out


def _normalized_pairwise(x: np.ndarray, labels: np.ndarray):
    # distances scaled by sqrt(2 * total variance), the RMS distance between
    # independent draws; invariant to translation and global scale
    centered = x - x.mean(0)
    scale = np.sqrt(2.0 * (centered ** 2).sum(1).mean())
    if scale == 0:
        scale = 1.0
    sq = (x ** 2).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    d = np.sqrt(d2) / scale
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(x), dtype=bool)
    return float(d[same & off].mean()), float(d[~same].mean())


def compare_objectness(features_a, features_b, labels, max_points: int = 2048, rng: RandomStream | None = None) -> dict:
    """Mean normalized intra- and inter-object distances per feature set, and the
    centroid distance between the sets in the top-2 PCA space of their union."""
    a = np.asarray(features_a, dtype=np.float64).reshape(-1, np.shape(features_a)[-1])
    b = np.asarray(features_b, dtype=np.float64).reshape(-1, np.shape(features_b)[-1])
    labels = np.asarray(labels).ravel()
    if not (len(a) == len(b) == len(labels)):
        raise AnalysisError("feature sets and labels must cover the same pixels")
    if np.unique(labels).size < 2:
        raise AnalysisError("need at least 2 objects")
    if len(labels) > max_points:
        pick = (rng or RandomStream(0)).choice(len(labels), size=max_points, replace=False)
        a, b, labels = a[pick], b[pick], labels[pick]
    intra_a, inter_a = _normalized_pairwise(a, labels)
    intra_b, inter_b = _normalized_pairwise(b, labels)
    if a.shape[1] != b.shape[1]:
        raise AnalysisError("shift needs feature sets of equal width")
    union = np.concatenate([a, b])
    centered = union - union.mean(0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    shift = float(np.linalg.norm((a.mean(0) - b.mean(0)) @ comps.T))
    return {"intra_a": intra_a, "inter_a": inter_a, "intra_b": intra_b, "inter_b": inter_b, "shift": shift}


@dataclass
class BiasWorld:
    """Target ``q``, reconstructions ``q + N(0, noise_std^2)``, shifted target ``q + delta``."""

    q: np.ndarray
    noise_std: float = 0.1
    delta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=np.float64))
        if self.delta is None:
            self.delta = np.zeros_like(self.q)
        self.delta = np.broadcast_to(np.asarray(self.delta, dtype=np.float64), self.q.shape).copy()
        if self.noise_std < 0:
            raise AnalysisError("noise_std must be nonnegative")

    @property
    def q2(self) -> np.ndarray:
        return self.q + self.delta

    @classmethod
    def with_shift(cls, shift_norm: float, dimension: int = 1, noise_std: float = 0.1, rng: RandomStream | None = None):
        q = np.zeros(dimension) if rng is None else rng.normal(size=dimension)
        direction = np.zeros(dimension)
        direction[0] = 1.0
        return cls(q, noise_std, shift_norm * direction)


def residual_bias_experiment(world: BiasWorld, n_samples: int, rng: RandomStream) -> dict:
    """Norm of the mean residual against the shared and the shifted target.

    ``se`` is the per-component standard error of the mean; ``se_norm`` the RMS
    norm of a zero-mean mean vector.
    """
    if n_samples < 1000:
        raise AnalysisError("n_samples must be >= 1000")
    recon = world.q + world.noise_std * rng.normal(size=(n_samples, world.q.size))
    shared = np.linalg.norm((recon - world.q).mean(0))
    separate = np.linalg.norm((recon - world.q2).mean(0))
    se = world.noise_std / np.sqrt(n_samples)
    return {
        "mean_residual_shared": float(shared),
        "mean_residual_separate": float(separate),
        "shift_norm": float(np.linalg.norm(world.delta)),
        "se": float(se),
        "se_norm": float(se * np.sqrt(world.q.size)),
        "n_samples": int(n_samples),
    }


def boundary_check(bs=(0.0, 0.5, 1.0), n_trials: int = 100_000, seed: int = 0) -> dict:
    """Estimated p2 next to ``Phi(b)`` for point objects with boundary ``-b``."""
    rows = {"b": [], "p2": [], "se": [], "phi": []}
    for i, b in enumerate(bs):
        est = estimate_p2(ClusterWorld.with_boundary(b), n_trials, RandomStream(seed).spawn(i))
        rows["b"].append(float(b))
        rows["p2"].append(est.value)
        rows["se"].append(est.se)
        rows["phi"].append(float(norm.cdf(b)))
    return rows


def p2_experiment(separations=(0.5, 1.0, 2.0, 3.0, 4.0), n_trials: int = 20_000, seeds=(0, 1, 2),
                  metric: str = "sqeuclid") -> dict:
    return {
        "separations": [float(s) for s in separations],
        "metric": metric,
        "p2": p2_sweep(separations, n_trials, seeds, metric=metric),
        "boundary": boundary_check(seed=seeds[0]),
    }


def bias_experiment(shifts=(0.0, 0.1, 0.25, 0.5, 1.0), dimension: int = 4, noise_std: float = 0.5,
                    n_samples: int = 100_000, seed: int = 0) -> dict:
    rows = []
    for i, shift in enumerate(shifts):
        world = BiasWorld.with_shift(shift, dimension, noise_std)
        rows.append(residual_bias_experiment(world, n_samples, RandomStream(seed).spawn(i)))
    return {"rows": rows}
