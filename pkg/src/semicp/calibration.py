"""Thresholds and prediction sets.

The conformal quantile of a pool of m scores at miscoverage alpha is the
l-th smallest score with l = ceil((m+1)(1-alpha)).  When l exceeds m no
finite threshold exists and an include-all sentinel is produced instead of
a float infinity (explicit and serializable).

Semi-supervised calibration concatenates labeled true scores with estimated
unlabeled scores and applies the same rule to the merged pool.  Group
conditional and per-class clustered variants compute one threshold per
group/cluster; interpolation refines the plain quantile between adjacent
order statistics.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import CalibrationError, ConfigurationError, InputError
from .scores import ScoreSpec, score_all_labels, score_all_labels_batch

GROUP_RULES = ("external_column", "pseudo_label", "true_label")

_KMEANS_TAG = 0x6B6D65616E73  # "kmeans"


@dataclass(frozen=True)
class Threshold:
    """A calibrated cutoff with its quantile-level record.

    ``include_all`` marks the case l > m where every label must be admitted;
    ``value`` is meaningless then and stored as nan.
    """

    value: float
    include_all: bool
    level_index: int
    pool_size: int
    alpha: float

    def admits(self, score: float) -> bool:
        return self.include_all or score <= self.value

    def to_dict(self) -> dict:
        return {
            "value": None if self.include_all else self.value,
            "include_all": self.include_all,
            "level_index": self.level_index,
            "pool_size": self.pool_size,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Threshold":
        include_all = bool(d["include_all"])
        value = math.nan if include_all else float(d["value"])
        return cls(value, include_all, int(d["level_index"]),
                   int(d["pool_size"]), float(d["alpha"]))


@dataclass(frozen=True)
class ScoredPool:
    """Labeled true scores plus estimated unlabeled scores."""

    labeled_scores: np.ndarray
    unlabeled_scores: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "labeled_scores",
                           np.asarray(self.labeled_scores, dtype=np.float64))
        object.__setattr__(self, "unlabeled_scores",
                           np.asarray(self.unlabeled_scores, dtype=np.float64))
        if self.labeled_scores.size < 1:
            raise CalibrationError("scored pool needs at least one labeled score")
        for arr in (self.labeled_scores, self.unlabeled_scores):
            if not np.all(np.isfinite(arr)):
                raise InputError("scores must be finite")

    def merged(self) -> np.ndarray:
        return np.concatenate([self.labeled_scores, self.unlabeled_scores])


def quantile_level(pool_size: int, alpha: float) -> int:
    """l = ceil((m+1)(1-alpha)), evaluated float-robustly.

    Uses the identity ceil((m+1)(1-a)) = (m+1) - floor((m+1)a), which avoids
    ceil() landing one step too high when (m+1)(1-alpha) is an integer that
    the float product slightly overshoots.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    return (pool_size + 1) - math.floor((pool_size + 1) * alpha)


def conformal_quantile(scores, alpha: float) -> Threshold:
    """Split-conformal threshold of a score pool at miscoverage alpha."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise CalibrationError("cannot calibrate on an empty score pool")
    if not np.all(np.isfinite(scores)):
        raise InputError("score pool contains non-finite values")
    m = scores.size
    level = quantile_level(m, alpha)
    if level > m:
        return Threshold(math.nan, True, level, m, alpha)
    value = float(np.sort(scores, kind="stable")[level - 1])
    return Threshold(value, False, level, m, alpha)


def semicp_threshold(pool: ScoredPool, alpha: float) -> Threshold:
    """Threshold over the merged labeled + estimated-unlabeled pool."""
    return conformal_quantile(pool.merged(), alpha)


def interpolated_quantile(scores, alpha: float) -> Threshold:
    """Linearly interpolated quantile between adjacent order statistics.

    With h = (m+1)(1-alpha), k = floor(h) and gamma = h - k, the threshold
    is s_(k) + gamma * (s_(k+1) - s_(k)), clamped to the extreme order
    statistics when k falls outside 1..m-1.  Never produces include-all.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise CalibrationError("cannot calibrate on an empty score pool")
    if not np.all(np.isfinite(scores)):
        raise InputError("score pool contains non-finite values")
    m = scores.size
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    h = (m + 1) * (1.0 - alpha)
    k = math.floor(h)
    s = np.sort(scores, kind="stable")
    if k >= m:
        value, k = float(s[-1]), m
    elif k < 1:
        value, k = float(s[0]), 1
    else:
        gamma = h - k
        value = float(s[k - 1] + gamma * (s[k] - s[k - 1]))
    return Threshold(value, False, k, m, alpha)


def predict_set(p, spec: ScoreSpec, threshold: Threshold, u=None) -> np.ndarray:
    """Sorted class indices whose score falls at or below the threshold."""
    scores = score_all_labels(p, spec, u)
    if threshold.include_all:
        return np.arange(scores.shape[0], dtype=np.int64)
    return np.nonzero(scores <= threshold.value)[0].astype(np.int64)


def prediction_mask(probs, spec: ScoreSpec, threshold: Threshold, u=None) -> np.ndarray:
    """Boolean (m, K) membership mask of the prediction sets of a batch."""
    scores = score_all_labels_batch(probs, spec, u)
    if threshold.include_all:
        return np.ones(scores.shape, dtype=bool)
    return scores <= threshold.value


@dataclass(frozen=True)
class GroupAssignment:
    """Group memberships of the calibration pools plus the test-time rule.

    ``test_rule`` says how a test sample's group is determined: from an
    external per-sample column, from its pseudo-label, or from its true
    label.  Class-conditional calibration uses the candidate label being
    scored as the group of a test evaluation.
    """

    group_of_labeled: np.ndarray
    group_of_unlabeled: np.ndarray
    n_groups: int
    test_rule: str = "pseudo_label"

    def __post_init__(self):
        object.__setattr__(self, "group_of_labeled",
                           np.asarray(self.group_of_labeled, dtype=np.int64))
        object.__setattr__(self, "group_of_unlabeled",
                           np.asarray(self.group_of_unlabeled, dtype=np.int64))
        if self.test_rule not in GROUP_RULES:
            raise ConfigurationError(f"unknown group rule {self.test_rule!r}")
        for arr in (self.group_of_labeled, self.group_of_unlabeled):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_groups):
                raise InputError("group id outside 0..G-1")


@dataclass(frozen=True)
class ConditionalThresholds:
    """Per-group thresholds; groups with an empty pool fall back to the
    marginal threshold and are flagged."""

    per_group: tuple
    fallback: tuple
    marginal: Threshold

    def threshold_for(self, group: int) -> Threshold:
        return self.per_group[group]


def conditional_thresholds(pool: ScoredPool, assignment: GroupAssignment,
                           alpha: float) -> ConditionalThresholds:
    """One semi-supervised threshold per group (Mondrian-style)."""
    marginal = semicp_threshold(pool, alpha)
    per_group, fallback = [], []
    for g in range(assignment.n_groups):
        lab = pool.labeled_scores[assignment.group_of_labeled == g]
        unlab = pool.unlabeled_scores[assignment.group_of_unlabeled == g]
        if lab.size + unlab.size == 0:
            per_group.append(marginal)
            fallback.append(True)
        else:
            per_group.append(conformal_quantile(
                np.concatenate([lab, unlab]), alpha))
            fallback.append(False)
    return ConditionalThresholds(tuple(per_group), tuple(fallback), marginal)


def _decile_embedding(scores: np.ndarray) -> np.ndarray:
    return np.percentile(scores, np.arange(10, 100, 10))


def _kmeans(points: np.ndarray, k: int, seed: int = 0, iters: int = 50) -> np.ndarray:
    """Plain Lloyd k-means with farthest-point init, deterministic given seed."""
    n = points.shape[0]
    key = rng.stream(seed, _KMEANS_TAG)
    first = int(rng.integers(key, np.asarray([0]), n)[0])
    center_idx = [first]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        center_idx.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    centers = points[center_idx].copy()
    assign = None
    for _ in range(iters):
        dist2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(dist2, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = points[assign == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
    return assign


@dataclass(frozen=True)
class ClusterThresholds:
    """Per-class thresholds from clustering class score distributions."""

    per_class: tuple
    cluster_of_class: tuple  # -1 for classes handled by the marginal fallback
    marginal: Threshold
    n_clusters_used: int
    warnings: tuple = ()

    def threshold_for(self, label: int) -> Threshold:
        return self.per_class[label]


def clustercp_thresholds(labeled_by_class, unlabeled_by_class, alpha: float,
                         n_clusters: int, min_class_count: int = 2,
                         seed: int = 0) -> ClusterThresholds:
    """Cluster classes with similar score distributions, then calibrate per
    cluster over the union of member-class scores.

    Classes are embedded as their 9 empirical score deciles.  Classes with
    fewer than ``min_class_count`` labeled scores are not embedded and get
    the marginal threshold.
    """
    if n_clusters < 1:
        raise ConfigurationError("n_clusters must be >= 1")
    k_classes = len(labeled_by_class)
    labeled_by_class = [np.asarray(a, dtype=np.float64) for a in labeled_by_class]
    unlabeled_by_class = [np.asarray(a, dtype=np.float64) for a in unlabeled_by_class]
    if len(unlabeled_by_class) != k_classes:
        raise InputError("per-class labeled/unlabeled lists differ in length")

    all_labeled = np.concatenate([a for a in labeled_by_class]) \
        if k_classes else np.empty(0)
    all_unlabeled = np.concatenate([a for a in unlabeled_by_class]) \
        if k_classes else np.empty(0)
    marginal = semicp_threshold(ScoredPool(all_labeled, all_unlabeled), alpha)

    embeddable = [c for c in range(k_classes)
                  if labeled_by_class[c].size >= min_class_count]
    warnings = []
    cluster_of_class = [-1] * k_classes
    per_class = [marginal] * k_classes
    if embeddable:
        k_eff = n_clusters
        if k_eff > len(embeddable):
            k_eff = len(embeddable)
            warnings.append(
                f"n_clusters reduced to {k_eff}: only {len(embeddable)} "
                f"classes have >= {min_class_count} labeled scores")
        emb = np.stack([_decile_embedding(labeled_by_class[c]) for c in embeddable])
        assign = _kmeans(emb, k_eff, seed=seed)
        for cluster in range(k_eff):
            members = [embeddable[i] for i in np.nonzero(assign == cluster)[0]]
            if not members:
                continue
            lab = np.concatenate([labeled_by_class[c] for c in members])
            unlab_parts = [unlabeled_by_class[c] for c in members
                           if unlabeled_by_class[c].size]
            unlab = np.concatenate(unlab_parts) if unlab_parts else np.empty(0)
            thr = semicp_threshold(ScoredPool(lab, unlab), alpha)
            for c in members:
                per_class[c] = thr
                cluster_of_class[c] = cluster
    else:
        k_eff = 0
        warnings.append("no class reaches min_class_count; all thresholds marginal")

    return ClusterThresholds(tuple(per_class), tuple(cluster_of_class),
                             marginal, k_eff, tuple(warnings))


def epsilon_bias(true_scores_sample, estimated_scores_sample,
                 threshold: Threshold, n: int, N: int) -> float:
    """Coverage-bias diagnostic N/(N+n) * (F_true(t) - F_est(t)).

    Empirical CDFs use the <= convention.  An include-all threshold puts
    both CDFs at 1, so the diagnostic is 0 by convention.
    """
    true_scores_sample = np.asarray(true_scores_sample, dtype=np.float64)
    estimated_scores_sample = np.asarray(estimated_scores_sample, dtype=np.float64)
    if true_scores_sample.size == 0 or estimated_scores_sample.size == 0:
        raise InputError("epsilon_bias requires nonempty score samples")
    if N == 0:
        return 0.0
    if threshold.include_all:
        return 0.0
    t = threshold.value
    f_true = np.count_nonzero(true_scores_sample <= t) / true_scores_sample.size
    f_est = np.count_nonzero(estimated_scores_sample <= t) / estimated_scores_sample.size
    return N / (N + n) * (f_true - f_est)
