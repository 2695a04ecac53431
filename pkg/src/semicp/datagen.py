"""Synthetic classifier outputs with known ground truth.

Each sample draws a label from the prior, boosts the true-class logit by
``signal``, adds independent Gaussian noise per class, and softmaxes at the
configured temperature.  Labels are sampled first and logits conditioned on
them, so pseudo-label accuracy is tunable through ``signal`` while the
model stays (deliberately) miscalibrated in general.

Sample i is generated from its own counter-based stream mix64(seed, i), so
output is independent of generation order and chunking.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .dataset import ProbabilityDataset
from .errors import ConfigurationError, ConvergenceError, InputError
from .unlabeled import pseudo_labels

_CHUNK_ROWS = 1 << 18


@dataclass(frozen=True)
class SyntheticConfig:
    n_classes: int
    n_samples: int
    signal: float = 2.0
    noise_sigma: float = 1.0
    temperature: float = 1.0
    prior: tuple = None  # None = uniform
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise InputError("need at least 2 classes")
        if self.n_samples < 0:
            raise InputError("n_samples must be nonnegative")
        if self.signal < 0:
            raise InputError("signal must be nonnegative")
        if self.noise_sigma <= 0:
            raise InputError("noise_sigma must be positive")
        if self.temperature <= 0:
            raise InputError("temperature must be positive")
        if self.prior is not None:
            p = np.asarray(self.prior, dtype=np.float64)
            if p.shape != (self.n_classes,) or np.any(p < 0) \
                    or abs(float(p.sum()) - 1.0) > 1e-6:
                raise InputError("prior must be K nonnegative reals summing to 1")
            object.__setattr__(self, "prior", tuple(float(x) for x in p))


def _generate_rows(cfg: SyntheticConfig, start: int, stop: int):
    """Rows [start, stop) of the dataset; pure function of (cfg, range)."""
    k = cfg.n_classes
    idx = np.arange(start, stop, dtype=np.uint64)
    keys = rng.mix64(np.uint64(int(cfg.seed) & 0xFFFFFFFFFFFFFFFF), idx)

    label_u = rng.uniforms(keys, np.zeros(stop - start, dtype=np.uint64))
    prior = np.full(k, 1.0 / k) if cfg.prior is None else np.asarray(cfg.prior)
    cum = np.cumsum(prior)
    labels = np.minimum(np.searchsorted(cum, label_u, side="right"), k - 1)

    noise = rng.normals(keys[:, None], np.arange(1, k + 1, dtype=np.uint64)[None, :])
    logits = cfg.noise_sigma * noise
    logits[np.arange(stop - start), labels] += cfg.signal

    z = logits / cfg.temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    return labels.astype(np.int64), logits, probs


def generate_synthetic(cfg: SyntheticConfig) -> ProbabilityDataset:
    """Generate the configured dataset (labels, logits, probs, features).

    The features channel carries the logits, for neighbor-criterion
    experiments.
    """
    labels = np.empty(cfg.n_samples, dtype=np.int64)
    logits = np.empty((cfg.n_samples, cfg.n_classes))
    probs = np.empty((cfg.n_samples, cfg.n_classes))
    for start in range(0, cfg.n_samples, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, cfg.n_samples)
        labels[start:stop], logits[start:stop], probs[start:stop] = \
            _generate_rows(cfg, start, stop)
    return ProbabilityDataset(probs=probs, labels=labels, logits=logits,
                              features=logits.copy())


def measure_top1_accuracy(dataset: ProbabilityDataset) -> float:
    """Fraction of samples whose pseudo-label equals the true label."""
    if not dataset.fully_labeled:
        raise InputError("accuracy needs labels on every sample")
    return float(np.mean(pseudo_labels(dataset.probs) == dataset.labels))


def calibrate_signal_for_accuracy(target_acc: float, template: SyntheticConfig,
                                  tolerance: float = 0.01,
                                  probe_samples: int = 50_000,
                                  max_iters: int = 60):
    """Bisect the signal strength until pseudo-label accuracy hits a target.

    Probes use a fixed ``probe_samples``-sample dataset drawn from the
    template's seed; with common noise draws, accuracy is monotone in the
    signal, so bisection on [0, 50] is exact.  Returns (signal, achieved).
    """
    k = template.n_classes
    if not 1.0 / k < target_acc < 1.0:
        raise ConfigurationError(
            f"target accuracy must lie strictly between 1/K={1.0 / k:.4f} and 1")

    def probe(signal):
        cfg = replace(template, n_samples=probe_samples, signal=signal)
        return measure_top1_accuracy(generate_synthetic(cfg))

    lo, hi = 0.0, 50.0
    best_signal, best_acc = None, None
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        acc = probe(mid)
        if best_acc is None or abs(acc - target_acc) < abs(best_acc - target_acc):
            best_signal, best_acc = mid, acc
        if abs(acc - target_acc) <= tolerance:
            return mid, acc
        if acc < target_acc:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        f"could not reach accuracy {target_acc} within {max_iters} iterations; "
        f"best achieved {best_acc:.4f} at signal {best_signal:.4f}",
        best=(best_signal, best_acc))
