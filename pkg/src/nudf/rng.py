"""Counter-based random numbers.

Streams are addressed by (seed, stream, counter) instead of a mutable
generator state, so any element of a batched computation can be recomputed
on its own and results do not depend on chunking or thread count.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(x):
    # splitmix64 finaliser; uint64 arithmetic wraps.
    with np.errstate(over="ignore"):
        x = x ^ (x >> np.uint64(30))
        x = x * _M1
        x = x ^ (x >> np.uint64(27))
        x = x * _M2
        x = x ^ (x >> np.uint64(31))
    return x


def derive_seed(seed, *keys):
    """Derive a child seed from a parent seed and integer keys.

    Scalars give a Python int; any array argument gives a uint64 array.
    """
    arrays = any(np.ndim(k) for k in (seed,) + keys)
    x = np.asarray(seed).astype(np.uint64) if np.ndim(seed) else np.uint64(int(seed) & _MASK)
    for k in keys:
        k = np.asarray(k).astype(np.uint64) if np.ndim(k) else np.uint64(int(k) & _MASK)
        with np.errstate(over="ignore"):
            x = _mix(x ^ (k * _GOLDEN + _GOLDEN))
    return x if arrays else int(x)


def hash_uniform(seed, stream, counter):
    """Uniform [0, 1) doubles for the given counters.

    `seed` and `stream` are scalars or broadcastable uint64 arrays; `counter`
    is an integer array. Same inputs always give the same outputs.
    """
    seed = np.asarray(seed, dtype=np.uint64)
    stream = np.asarray(stream, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = _mix(seed * _GOLDEN + stream)
        x = _mix(x ^ (counter * _GOLDEN + _GOLDEN))
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
