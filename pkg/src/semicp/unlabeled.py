"""Nonconformity score estimation for unlabeled samples.

An unlabeled sample only has a pseudo score: the score of its pseudo-label
(the argmax class).  That underestimates the true score, because the
pseudo-label is the model's most confident class.  The estimators here
correct the pseudo score with a bias learned from labeled data, where the
gap between true and pseudo score is observable:

* ``naive``        : no correction
* ``debias``       : add the mean labeled bias
* ``random_match`` : add the bias of a uniformly drawn labeled record
* ``nnm``          : add the bias of the labeled record whose pseudo score
  is nearest (nearest-neighbor matching); with k > 1 the mean bias of the
  k nearest records is added
* ``nnm_r``        : randomized-score variant of nnm; the neighbor is still
  matched on deterministic pseudo scores, but all three score terms are
  re-evaluated at the unlabeled sample's own random factor u

Nearest-neighbor matching on pseudo scores uses binary search over a sorted
copy, so estimating N samples against n records costs O((n+N) log n).
Distance ties are broken by the smaller original record index.  Alternative
neighbor criteria (confidence, full score vector, logits, features) use
Euclidean distance and are intended for desk-scale ablations.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .dataset import ProbabilityDataset
from .errors import ConfigurationError, EstimationError, InputError
from .scores import ScoreSpec, score_components_batch

ESTIMATOR_KINDS = ("nnm", "nnm_r", "naive", "debias", "random_match")
CRITERION_KINDS = ("pseudo_score", "confidence", "score_vector", "logit", "feature")

_CHUNK_CELLS = 1 << 25  # cap on brute-force distance-matrix cells per chunk


@dataclass(frozen=True)
class NeighborCriterion:
    """How the matched labeled record is selected, and how many."""

    kind: str = "pseudo_score"
    k: int = 1

    def __post_init__(self):
        if self.kind not in CRITERION_KINDS:
            raise ConfigurationError(f"unknown neighbor criterion {self.kind!r}")
        if self.k < 1:
            raise ConfigurationError("neighbor count k must be >= 1")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which unlabeled-score estimator to run."""

    kind: str = "nnm"
    k: int = 1
    criterion: str = "pseudo_score"

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigurationError(f"unknown estimator {self.kind!r}")
        if self.criterion not in CRITERION_KINDS:
            raise ConfigurationError(f"unknown neighbor criterion {self.criterion!r}")
        if self.k < 1:
            raise ConfigurationError("neighbor count k must be >= 1")


def pseudo_labels(probs) -> np.ndarray:
    """Argmax class per row, ties broken by lowest class index."""
    return np.argmax(np.asarray(probs, dtype=np.float64), axis=1).astype(np.int64)


def pseudo_label(p) -> int:
    """Pseudo-label of a single probability row."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise InputError("expected a single probability row")
    return int(np.argmax(p))


@dataclass
class LabeledRecords:
    """Scored labeled calibration samples, indexed for neighbor matching.

    Scores are stored in affine form (value = a + b * u) at both the true
    and the pseudo label, so randomized estimators can re-evaluate them at
    an arbitrary random factor.  ``pseudo_scores``/``true_scores``/``biases``
    are the deterministic (u = 1) values; matching always uses these.
    ``sort_order`` sorts records by (pseudo score, original index).
    """

    pseudo_scores: np.ndarray
    true_scores: np.ndarray
    biases: np.ndarray
    pseudo_labels: np.ndarray
    confidences: np.ndarray
    true_a: np.ndarray
    true_b: np.ndarray
    pseudo_a: np.ndarray
    pseudo_b: np.ndarray
    score_vectors: np.ndarray
    logit_vectors: np.ndarray = None
    feature_vectors: np.ndarray = None
    sort_order: np.ndarray = field(init=False)
    sorted_pseudo: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sort_order = np.argsort(self.pseudo_scores, kind="stable")
        self.sorted_pseudo = self.pseudo_scores[self.sort_order]

    def __len__(self):
        return self.pseudo_scores.shape[0]

    def mean_bias(self) -> float:
        return float(self.biases.mean())


def build_labeled_records(labeled: ProbabilityDataset, spec: ScoreSpec) -> LabeledRecords:
    """Score a fully labeled dataset and index it for matching."""
    if len(labeled) == 0:
        raise EstimationError("labeled calibration set is empty")
    if not labeled.fully_labeled:
        raise InputError("labeled dataset has rows without labels")
    a, b = score_components_batch(labeled.probs, spec)
    det = a + b
    rows = np.arange(len(labeled))
    hats = pseudo_labels(labeled.probs)
    ys = labeled.labels
    return LabeledRecords(
        pseudo_scores=det[rows, hats],
        true_scores=det[rows, ys],
        biases=det[rows, ys] - det[rows, hats],
        pseudo_labels=hats,
        confidences=labeled.probs.max(axis=1),
        true_a=a[rows, ys], true_b=b[rows, ys],
        pseudo_a=a[rows, hats], pseudo_b=b[rows, hats],
        score_vectors=det,
        logit_vectors=labeled.logits,
        feature_vectors=labeled.features,
    )


def _match_sorted_1d(sorted_vals, sort_order, queries):
    """Nearest record per query over values pre-sorted ascending.

    ``sort_order`` maps sorted positions back to original record indices;
    because the sort is stable, the first element of an equal-value run has
    the smallest original index, which implements the tie rule.
    """
    n = sorted_vals.shape[0]
    q = np.asarray(queries, dtype=np.float64)
    pos = np.searchsorted(sorted_vals, q, side="left")
    run_start = np.searchsorted(sorted_vals, sorted_vals, side="left")

    left = np.clip(pos - 1, 0, n - 1)
    right = np.clip(pos, 0, n - 1)
    d_left = np.where(pos > 0, np.abs(q - sorted_vals[left]), np.inf)
    d_right = np.where(pos < n, np.abs(q - sorted_vals[right]), np.inf)
    # Any candidate shares its distance with its whole equal-value run, so
    # compare run representatives (run starts hold the smallest indices).
    left_c = run_start[left]
    take_left = (d_left < d_right) | (
        (d_left == d_right) & (sort_order[left_c] < sort_order[right])
    )
    return sort_order[np.where(take_left, left_c, right)]


def _knn_bruteforce(dist2_fn, n_records, queries_count, k):
    """Rowwise k smallest by (distance, original index), chunked over queries."""
    out = np.empty((queries_count, k), dtype=np.int64)
    chunk = max(1, _CHUNK_CELLS // max(n_records, 1))
    orig = np.arange(n_records)
    for start in range(0, queries_count, chunk):
        stop = min(start + chunk, queries_count)
        d2 = dist2_fn(start, stop)
        order = np.lexsort((np.broadcast_to(orig, d2.shape), d2), axis=-1)
        out[start:stop] = order[:, :k]
    return out


def _query_channel(unlabeled: ProbabilityDataset, records: LabeledRecords,
                   spec: ScoreSpec, kind: str):
    """Per-query and per-record vectors for a neighbor criterion."""
    if kind == "confidence":
        return unlabeled.probs.max(axis=1)[:, None], records.confidences[:, None]
    if kind == "score_vector":
        a, b = score_components_batch(unlabeled.probs, spec)
        return a + b, records.score_vectors
    if kind == "logit":
        if unlabeled.logits is None or records.logit_vectors is None:
            raise InputError("neighbor criterion 'logit' needs the logits channel")
        return unlabeled.logits, records.logit_vectors
    if kind == "feature":
        if unlabeled.features is None or records.feature_vectors is None:
            raise InputError("neighbor criterion 'feature' needs the features channel")
        return unlabeled.features, records.feature_vectors
    raise ConfigurationError(f"unknown neighbor criterion {kind!r}")


def neighbor_match(unlabeled: ProbabilityDataset, records: LabeledRecords,
                   spec: ScoreSpec,
                   criterion: NeighborCriterion = NeighborCriterion()) -> np.ndarray:
    """Matched record indices per unlabeled sample.

    Returns shape (N,) for k = 1 and (N, k) otherwise, ordered nearest
    first.  Ties are broken by the smaller original record index.
    """
    if len(records) == 0:
        raise EstimationError("cannot match against an empty labeled set")
    if criterion.k > len(records):
        raise ConfigurationError(
            f"k={criterion.k} exceeds the {len(records)} labeled records")
    if criterion.kind == "pseudo_score" and criterion.k == 1:
        queries = deterministic_pseudo_scores(unlabeled, spec)
        return _match_sorted_1d(records.sorted_pseudo, records.sort_order, queries)

    if criterion.kind == "pseudo_score":
        q = deterministic_pseudo_scores(unlabeled, spec)[:, None]
        r = records.pseudo_scores[:, None]
    else:
        q, r = _query_channel(unlabeled, records, spec, criterion.kind)
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if q.shape[1] != r.shape[1]:
        raise InputError("query and record vectors differ in dimension")

    def dist2(start, stop):
        diff = q[start:stop, None, :] - r[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    matched = _knn_bruteforce(dist2, len(records), q.shape[0], criterion.k)
    return matched[:, 0] if criterion.k == 1 else matched


def deterministic_pseudo_scores(unlabeled: ProbabilityDataset,
                                spec: ScoreSpec) -> np.ndarray:
    """Deterministic (u = 1) score of each sample at its pseudo-label."""
    a, b = score_components_batch(unlabeled.probs, spec)
    det = a + b
    return det[np.arange(len(unlabeled)), pseudo_labels(unlabeled.probs)]


def naive_scores(unlabeled: ProbabilityDataset, spec: ScoreSpec, u=None) -> np.ndarray:
    """Pseudo score of each unlabeled sample, uncorrected."""
    a, b = score_components_batch(unlabeled.probs, spec)
    hats = pseudo_labels(unlabeled.probs)
    rows = np.arange(len(unlabeled))
    if spec.randomized:
        if u is None:
            raise ConfigurationError("randomized spec requires u factors")
        return a[rows, hats] + b[rows, hats] * np.asarray(u, dtype=np.float64)
    if u is not None:
        raise ConfigurationError("u factors supplied for a deterministic spec")
    return a[rows, hats] + b[rows, hats]


def _require_deterministic(spec: ScoreSpec, name: str):
    if spec.randomized:
        raise ConfigurationError(
            f"{name} is defined for deterministic scores; use nnm_r for "
            "randomized specs")


def nnm_scores(unlabeled: ProbabilityDataset, records: LabeledRecords,
               spec: ScoreSpec,
               criterion: NeighborCriterion = NeighborCriterion()) -> np.ndarray:
    """Nearest-neighbor-matched scores: pseudo score + matched record bias.

    With ``criterion.k > 1`` the arithmetic mean of the k nearest records'
    biases is added instead.
    """
    _require_deterministic(spec, "nnm")
    matched = neighbor_match(unlabeled, records, spec, criterion)
    if criterion.k == 1:
        bias = records.biases[matched]
    else:
        bias = records.biases[matched].mean(axis=1)
    return deterministic_pseudo_scores(unlabeled, spec) + bias


def debias_scores(unlabeled: ProbabilityDataset, records: LabeledRecords,
                  spec: ScoreSpec) -> np.ndarray:
    """Pseudo scores shifted by the global mean labeled bias."""
    _require_deterministic(spec, "debias")
    if len(records) == 0:
        raise EstimationError("cannot debias against an empty labeled set")
    return deterministic_pseudo_scores(unlabeled, spec) + records.mean_bias()


def random_match_scores(unlabeled: ProbabilityDataset, records: LabeledRecords,
                        spec: ScoreSpec, stream_key) -> np.ndarray:
    """Pseudo scores corrected by a uniformly drawn record's bias.

    Draws are independent per unlabeled sample, with replacement, indexed by
    sample position on the given stream.
    """
    _require_deterministic(spec, "random_match")
    if len(records) == 0:
        raise EstimationError("cannot match against an empty labeled set")
    draws = rng.integers(stream_key, np.arange(len(unlabeled)), len(records))
    return deterministic_pseudo_scores(unlabeled, spec) + records.biases[draws]


def nnm_r_scores(unlabeled: ProbabilityDataset, records: LabeledRecords,
                 spec: ScoreSpec, u,
                 criterion: NeighborCriterion = NeighborCriterion()) -> np.ndarray:
    """Randomized nearest-neighbor-matched scores.

    The neighbor is matched on deterministic pseudo scores; the sample's own
    random factor u is then applied to all three score terms:
    S(x, y_hat, u) + S(x_j, y_j, u) - S(x_j, y_hat_j, u).
    """
    if not spec.randomized:
        raise ConfigurationError("nnm_r requires a randomized score spec")
    if criterion.k != 1:
        raise ConfigurationError("nnm_r uses a single matched neighbor")
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != len(unlabeled):
        raise InputError("one random factor per unlabeled sample is required")
    matched = neighbor_match(unlabeled, records, spec, criterion)
    a, b = score_components_batch(unlabeled.probs, spec)
    rows = np.arange(len(unlabeled))
    hats = pseudo_labels(unlabeled.probs)
    own = a[rows, hats] + b[rows, hats] * u
    # evaluated as S(xj, yj, u) - S(xj, yhat_j, u) so that u = 1 reproduces
    # the deterministic biases bit for bit
    correction = (records.true_a[matched] + records.true_b[matched] * u) - \
        (records.pseudo_a[matched] + records.pseudo_b[matched] * u)
    return own + correction


def estimate_scores(unlabeled: ProbabilityDataset, records: LabeledRecords,
                    spec: ScoreSpec, estimator: EstimatorSpec,
                    stream_key=None, u=None) -> np.ndarray:
    """Dispatch to the requested estimator (runner entry point)."""
    if len(unlabeled) == 0:
        return np.empty(0, dtype=np.float64)
    if estimator.kind == "naive":
        return naive_scores(unlabeled, spec, u if spec.randomized else None)
    if estimator.kind == "debias":
        return debias_scores(unlabeled, records, spec)
    if estimator.kind == "random_match":
        if stream_key is None:
            raise ConfigurationError("random_match needs an rng stream")
        return random_match_scores(unlabeled, records, spec, stream_key)
    criterion = NeighborCriterion(kind=estimator.criterion, k=estimator.k)
    if estimator.kind == "nnm_r":
        if u is None:
            raise ConfigurationError("nnm_r needs per-sample u factors")
        return nnm_r_scores(unlabeled, records, spec, u, criterion)
    return nnm_scores(unlabeled, records, spec, criterion)
