"""Array primitives and a portable seeded random generator.

Tensors are plain ``float64`` numpy arrays in C (row-major) order. The helpers
here add the shape checks and conventions the rest of the package relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import RangeError, ShapeError

DTYPE = np.float64

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def as_tensor(values, shape=None) -> np.ndarray:
    t = np.ascontiguousarray(values, dtype=DTYPE)
    if shape is not None:
        t = t.reshape(shape)
    return t


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def sign(t):
    """Elementwise sign with sign(0) == 0."""
    return np.sign(as_tensor(t))


def clamp(t, lo, hi):
    if lo > hi:
        raise RangeError(f"invalid clamp range [{lo}, {hi}]")
    return np.minimum(np.maximum(as_tensor(t), lo), hi)


def linf_distance(a, b) -> float:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    return a + b


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    return a - b


def scale(t, k):
    return as_tensor(t) * float(k)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# --- random numbers -------------------------------------------------------
#
# SplitMix64 used in counter mode: draw i of a stream seeded with s is
# mix(s + (i + 1) * GOLDEN). Being a pure function of (seed, index), a stream
# can be produced in one vectorised numpy call and is reproducible anywhere
# 64-bit wrapping arithmetic is available.


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed. Order matters."""
    h = 0
    for p in parts:
        h = _mix64((h + _GOLDEN + (int(p) & _MASK64)) & _MASK64)
    return h


class Rng:
    """Counter-based SplitMix64 stream.

    ``Rng(seed)`` always produces the same sequence; each draw advances
    ``counter`` by the number of 64-bit words consumed.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self, shape=(), lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Uniform draws in [lo, hi) built from the top 53 bits of each word."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(DTYPE) * 2.0**-53
        return (lo + (hi - lo) * u).reshape(shape)

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Box-Muller, one output per pair of uniforms (the sine half is dropped)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniform((2, n))
        r = np.sqrt(-2.0 * np.log(1.0 - u[0]))
        z = r * np.cos(2.0 * np.pi * u[1])
        return (mean + std * z).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")
