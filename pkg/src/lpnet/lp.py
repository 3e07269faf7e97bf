"""Pooling units with a learnable norm order.

A unit pools a group of N filter signals a_1..a_N against centers
c_1..c_N through a normalized p-norm,

    u = ((1/N) * sum_i |a_i - c_i|^p) ** (1/p),

where the order p is itself trainable through p = 1 + softplus(rho).
The reparametrization keeps p > 1, so the unit is always a proper norm
of the centered signals: p = 1 recovers the mean absolute deviation,
p = 2 the root mean square, and large p approaches the max, letting one
unit interpolate between the classic pooling operators.

Evaluation is max-factored: with m = max_i |a_i - c_i| the ratios
r_i = |a_i - c_i| / m lie in [0, 1], so arbitrarily large orders
underflow harmlessly instead of overflowing. The order gradient is
taken in the log domain of those ratios, with r_i = 0 terms dropped
(the limit r^p * log r -> 0).

Conventions at the non-smooth points: a signal exactly at its center
contributes zero to every partial, and a unit whose signals all sit at
their centers (u = 0) has all partials zero.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import Rng, ShapeError, as_vector

# Fault injection for exercising the gradient checker; see inject_fault().
_FAULT: str | None = None

_KNOWN_FAULTS = ("rho-grad",)


@contextlib.contextmanager
def inject_fault(name: str):
    """Deliberately corrupt one gradient path while the context is active.

    "rho-grad" doubles the order gradient. Only used to prove that the
    finite-difference checker catches a wrong derivative.
    """
    global _FAULT
    if name not in _KNOWN_FAULTS:
        raise ValueError(f"unknown fault {name!r}; known: {_KNOWN_FAULTS}")
    _FAULT = name
    try:
        yield
    finally:
        _FAULT = None


def reparam_order(rho):
    """Norm order p = 1 + softplus(rho), always > 1 for finite rho."""
    # logaddexp(0, rho) is the overflow-safe softplus.
    return 1.0 + np.logaddexp(0.0, rho)


def inverse_reparam(p):
    """The rho with reparam_order(rho) == p; defined for p > 1 only."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 1.0):
        raise ValueError(f"order must be > 1, got {p}")
    x = p - 1.0
    # log(e^x - 1): exact form x + log1p(-e^-x) avoids overflow for large x,
    # log(expm1(x)) is the accurate branch for small x.
    out = np.where(x > 0.6931471805599453,
                   x + np.log1p(-np.exp(-np.minimum(x, 745.0))),
                   np.log(np.expm1(np.minimum(x, 0.6931471805599453))))
    return out if out.ndim else float(out)


def order_rate(rho):
    """dp/drho of the reparametrization: the logistic sigmoid."""
    return expit(rho)


def _pool_forward(diffs: np.ndarray, rho: np.ndarray):
    """Normalized p-norm over the last axis of centered signals.

    diffs: (n, U, N) signal-minus-center values; rho: (U,) raw orders.
    Returns (u, cache) with u of shape (n, U).
    """
    p = reparam_order(rho)
    absd = np.abs(diffs)
    m = absd.max(axis=2)
    safe_m = np.where(m > 0.0, m, 1.0)
    r = absd / safe_m[:, :, None]
    rp = r ** p[None, :, None]
    pow_sum = rp.sum(axis=2)
    u = m * (pow_sum / diffs.shape[2]) ** (1.0 / p)[None, :]
    cache = (diffs, absd, m, r, rp, pow_sum, u, p)
    return u, cache


def _pool_backward(upstream: np.ndarray, cache, rho: np.ndarray):
    """Partials of the pooled values, chained with upstream (n, U).

    Returns (d_diffs, d_rho_per_sample) with shapes (n, U, N) and (n, U).
    """
    diffs, absd, m, r, rp, pow_sum, u, p = cache
    group = diffs.shape[2]
    live = m > 0.0

    # du/d(diff_i) = (1/N) * (|d_i|/u)^(p-1) * sign(d_i).
    # The ratio is bounded by N^(1/p), so the power cannot overflow.
    safe_u = np.where(live, u, 1.0)
    ratio = absd / safe_u[:, :, None]
    d_diffs = (upstream[:, :, None]
               * ratio ** (p - 1.0)[None, :, None]
               * np.sign(diffs) / group)
    d_diffs[~live] = 0.0

    # du/dp = (u/p) * (sum r^p log r / sum r^p - log(sum r^p / N) / p),
    # all in terms of ratios in (0, 1]; r = 0 terms drop out.
    log_r = np.log(np.where(r > 0.0, r, 1.0))
    weighted = (rp * log_r).sum(axis=2)
    safe_sum = np.where(live, pow_sum, 1.0)
    du_dp = (u / p[None, :]) * (weighted / safe_sum
                                - np.log(safe_sum / group) / p[None, :])
    d_rho = upstream * du_dp * order_rate(rho)[None, :]
    d_rho[~live] = 0.0
    if _FAULT == "rho-grad":
        d_rho = 2.0 * d_rho
    return d_diffs, d_rho


def lp_forward(a, c, rho: float) -> float:
    """Normalized p-norm of one group of signals a against centers c."""
    a = as_vector(a)
    c = as_vector(c)
    if a.shape != c.shape or a.size < 1:
        raise ShapeError(f"signals {a.shape} and centers {c.shape} must match, N >= 1")
    u, _ = _pool_forward((a - c).reshape(1, 1, -1), np.atleast_1d(float(rho)))
    return float(u[0, 0])


def lp_backward(a, c, rho: float, upstream: float = 1.0):
    """Partials of lp_forward times upstream: (d_a, d_c, d_rho)."""
    a = as_vector(a)
    c = as_vector(c)
    if a.shape != c.shape or a.size < 1:
        raise ShapeError(f"signals {a.shape} and centers {c.shape} must match, N >= 1")
    rho_v = np.atleast_1d(float(rho))
    _, cache = _pool_forward((a - c).reshape(1, 1, -1), rho_v)
    d_diffs, d_rho = _pool_backward(np.array([[float(upstream)]]), cache, rho_v)
    d_a = d_diffs[0, 0]
    return d_a, -d_a, float(d_rho[0, 0])


@dataclass
class LpLayerParams:
    """Parameters of one layer of learned-order pooling units.

    weights: (in_dim, units * group) filter matrix; column j*group + k is
    the k-th filter of unit j. centers: (units * group,). rho: (units,)
    raw orders. Groups are equal-sized and non-overlapping.
    """

    weights: np.ndarray
    centers: np.ndarray
    rho: np.ndarray
    group: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.group < 1:
            raise ValueError(f"group size must be >= 1, got {self.group}")
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got {self.weights.shape}")
        total = self.weights.shape[1]
        if total != self.units * self.group:
            raise ShapeError(
                f"weights have {total} columns, not divisible into "
                f"groups of {self.group}")
        if self.centers.shape != (total,):
            raise ShapeError(f"centers shape {self.centers.shape} != ({total},)")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def units(self) -> int:
        return self.weights.shape[1] // self.group

    @property
    def orders(self) -> np.ndarray:
        """Effective norm orders p of every unit."""
        return reparam_order(self.rho)

    @classmethod
    def init(cls, in_dim: int, units: int, group: int, rng: Rng,
             init_order: float = 3.0, order_noise: float = 0.1) -> "LpLayerParams":
        """Glorot-uniform filters, zero centers, orders near init_order."""
        total = units * group
        bound = np.sqrt(6.0 / (in_dim + total))
        weights = rng.uniform(-bound, bound, in_dim * total).reshape(in_dim, total)
        rho = inverse_reparam(init_order) + rng.uniform(-order_noise, order_noise, units)
        return cls(weights=weights, centers=np.zeros(total), rho=rho, group=group)


@dataclass
class LpGradients:
    """Gradients mirroring LpLayerParams, plus the per-signal d_a."""

    d_weights: np.ndarray
    d_centers: np.ndarray
    d_rho: np.ndarray
    d_a: np.ndarray


def lp_layer_forward(x, params: LpLayerParams):
    """Pooled outputs of a whole layer for one input vector.

    Signals are a = W^T x; unit j pools signals j*group .. j*group+group-1.
    Returns (u, cache) with u of length params.units.
    """
    x = as_vector(x)
    if x.size != params.in_dim:
        raise ShapeError(f"input length {x.size} != layer input dim {params.in_dim}")
    a = params.weights.T @ x
    diffs = (a - params.centers).reshape(1, params.units, params.group)
    u, pool_cache = _pool_forward(diffs, params.rho)
    return u[0], (x, a, pool_cache)


def lp_layer_backward(upstream, cache, params: LpLayerParams):
    """Chain lp partials through a = W^T x; returns (d_x, LpGradients)."""
    upstream = as_vector(upstream)
    if upstream.size != params.units:
        raise ValueError(
            f"upstream length {upstream.size} != unit count {params.units}; "
            "cache does not match this layer")
    x, a, pool_cache = cache
    if a.size != params.units * params.group or x.size != params.in_dim:
        raise ValueError("cache does not match this layer's shapes")
    d_diffs, d_rho = _pool_backward(upstream[None, :], pool_cache, params.rho)
    d_a = d_diffs.reshape(-1)
    d_weights = np.outer(x, d_a)
    d_x = params.weights @ d_a
    return d_x, LpGradients(d_weights=d_weights, d_centers=-d_a,
                            d_rho=d_rho[0], d_a=d_a)
