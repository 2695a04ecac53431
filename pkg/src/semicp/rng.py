"""Deterministic counter-based randomness.

All randomness in the toolkit is derived from one documented 64-bit
construction: the splitmix64 finalizer applied to ``stream_key + (counter+1)
* GAMMA``.  A draw is therefore a pure function of ``(stream_key, counter)``,
which makes every consumer order-independent: the i-th value of a stream is
the same whether values are produced one at a time, in vectorized blocks, or
from parallel workers.

Stream keys are built by folding tags into a seed with :func:`mix64`
(e.g. ``stream(base_seed, trial_index, TAG)``), so distinct purposes never
share a stream.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0x6A09E667F3BCC909)

_U53 = np.float64(1.0 / (1 << 53))


def _as_u64(x):
    if isinstance(x, np.ndarray):
        return x.astype(np.uint64, copy=False)
    return np.uint64(int(x) & 0xFFFFFFFFFFFFFFFF)


def _finalize(z):
    """splitmix64 output function (vectorized over uint64 arrays)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def mix64(a, b):
    """Hash two 64-bit words into one (asymmetric in its arguments)."""
    a = _as_u64(a)
    b = _as_u64(b)
    with np.errstate(over="ignore"):
        return _finalize(_finalize(a) ^ _finalize(b ^ _SALT))


def stream(seed, *tags):
    """Derive a stream key by folding ``tags`` into ``seed`` left to right."""
    key = _as_u64(seed)
    for tag in tags:
        key = mix64(key, tag)
    return key


def raw(key, counters):
    """Raw 64-bit values of a stream at the given counters."""
    counters = _as_u64(np.asarray(counters))
    with np.errstate(over="ignore"):
        return _finalize(_as_u64(key) + (counters + np.uint64(1)) * _GAMMA)


def uniforms(key, counters):
    """Uniform [0, 1) doubles at the given counters (53-bit mantissa)."""
    return (raw(key, counters) >> np.uint64(11)).astype(np.float64) * _U53


def _uniforms_open_zero(key, counters):
    # (0, 1]: safe as a log() argument.
    w = (raw(key, counters) >> np.uint64(11)) + np.uint64(1)
    return w.astype(np.float64) * _U53


def normals(key, counters):
    """Standard normals at the given counters (Box-Muller, 2 draws each)."""
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u1 = _uniforms_open_zero(key, counters * np.uint64(2))
        u2 = uniforms(key, counters * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def integers(key, counters, upper):
    """Integers uniform on [0, upper) at the given counters."""
    idx = np.floor(uniforms(key, counters) * upper).astype(np.int64)
    # floor(u * upper) == upper only through float rounding; clamp it away.
    return np.minimum(idx, upper - 1)


def permutation(key, n):
    """Deterministic permutation of range(n): argsort of raw stream values."""
    return np.argsort(raw(key, np.arange(n)), kind="stable")
