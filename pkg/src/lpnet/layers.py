"""Comparison activations and output machinery.

Elementwise units (sigmoid, tanh, rectifier, absolute value), grouped
max pooling, softmax cross-entropy with stable log-sum-exp, and
inverted dropout. All functions are pure; dropout takes an explicit
Rng so parallel runs stay deterministic per seed.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .core import Rng, ShapeError

ELEMENTWISE_KINDS = ("sigmoid", "tanh", "rectifier", "abs")


def elementwise_forward(kind: str, z):
    z = np.asarray(z, dtype=np.float64)
    if kind == "sigmoid":
        return expit(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "rectifier":
        return np.maximum(0.0, z)
    if kind == "abs":
        return np.abs(z)
    raise ValueError(f"unknown activation kind {kind!r}; known: {ELEMENTWISE_KINDS}")


def elementwise_grad(kind: str, z):
    """d(activation)/dz evaluated at z; kinks (rectifier, abs at 0) give 0."""
    z = np.asarray(z, dtype=np.float64)
    if kind == "sigmoid":
        s = expit(z)
        return s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "rectifier":
        return (z > 0.0).astype(np.float64)
    if kind == "abs":
        return np.sign(z)
    raise ValueError(f"unknown activation kind {kind!r}; known: {ELEMENTWISE_KINDS}")


def maxout_forward(z, group: int):
    """Max over equal-sized, non-overlapping groups along the last axis.

    Returns (u, argmax); ties resolve to the first index, so the
    backward routing is deterministic.
    """
    z = np.asarray(z, dtype=np.float64)
    if group < 1 or z.shape[-1] % group != 0:
        raise ShapeError(f"length {z.shape[-1]} not divisible into groups of {group}")
    grouped = z.reshape(z.shape[:-1] + (z.shape[-1] // group, group))
    idx = grouped.argmax(axis=-1)
    u = np.take_along_axis(grouped, idx[..., None], axis=-1)[..., 0]
    return u, idx


def maxout_backward(upstream, argmax, group: int):
    """Route upstream gradient to each group's winning entry."""
    upstream = np.asarray(upstream, dtype=np.float64)
    d_grouped = np.zeros(upstream.shape + (group,))
    np.put_along_axis(d_grouped, argmax[..., None], upstream[..., None], axis=-1)
    return d_grouped.reshape(upstream.shape[:-1] + (upstream.shape[-1] * group,))


def softmax_xent(logits, label: int):
    """Cross-entropy of softmax(logits) against an integer label.

    Returns (loss, d_logits); computed with a max shift so arbitrarily
    large logits stay finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[-1]
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    loss = log_z - shifted[label]
    d_logits = np.exp(shifted - log_z)
    d_logits[label] -= 1.0
    return float(loss), d_logits


def softmax_xent_batch(logits, labels):
    """Mean cross-entropy over a batch; d_logits carries the 1/n factor."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = logits.shape
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must be {n} ints in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float((log_z - shifted[rows, labels]).mean())
    d_logits = np.exp(shifted - log_z[:, None])
    d_logits[rows, labels] -= 1.0
    return loss, d_logits / n


def dropout_mask(rng: Rng, rate: float, n: int) -> np.ndarray:
    """Inverted-dropout mask: entries 0 with probability rate, else 1/(1-rate).

    The mask has unit expectation, so evaluation needs no rescaling.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(n)
    keep = rng.random(n) >= rate
    return keep.astype(np.float64) / (1.0 - rate)
