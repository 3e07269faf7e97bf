"""Dense float64 arrays and a seedable, counter-based random number stream.

Everything downstream works on plain numpy float64 arrays in row-major
(C) order. This module adds the few pieces numpy does not hand us
directly: shape-checked matrix multiplication with informative errors,
and a reproducible RNG whose streams depend only on an integer seed and
a chain of substream labels, never on process or platform state.
"""

from __future__ import annotations

import hashlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class FormatError(ValueError):
    """A file or document does not match its declared format."""


def as_matrix(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def as_vector(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _label_key(label: str) -> int:
    # hash() is salted per process; sha256 keeps substream derivation stable.
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Rng:
    """Deterministic random stream backed by the counter-based Philox generator.

    The same seed always replays the same stream, and ``substream(label)``
    derives streams that are independent across labels but fully
    determined by (seed, label path). The process-global numpy RNG is
    never touched.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, label: str) -> "Rng":
        """Fresh independent stream; stable for a given (seed, label) pair."""
        return Rng(self.seed, self._path + (_label_key(label),))

    def random(self, n: int | None = None):
        """Uniform draws in [0, 1)."""
        return self._gen.random(n)

    def uniform(self, lo: float, hi: float, n: int | None = None):
        """Uniform draws in [lo, hi); degenerates to the constant lo when lo == hi."""
        if lo > hi:
            raise ValueError(f"uniform bounds out of order: lo={lo} > hi={hi}")
        return lo + (hi - lo) * self._gen.random(n)

    def integers(self, low: int, high: int, n: int | None = None):
        """Integer draws in [low, high)."""
        return self._gen.integers(low, high, size=n)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, n: int) -> np.ndarray:
        """Standard normal draws via the Box-Muller transform on uniforms."""
        m = (n + 1) // 2
        # 1 - U keeps the argument of log() in (0, 1].
        u1 = 1.0 - self._gen.random(m)
        u2 = self._gen.random(m)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([radius * np.cos(2.0 * np.pi * u2),
                            radius * np.sin(2.0 * np.pi * u2)])
        return z[:n]


def derive_substream(seed: int, label: str) -> Rng:
    """Stream for (seed, label); independent across labels, reproducible per pair."""
    return Rng(seed).substream(label)
