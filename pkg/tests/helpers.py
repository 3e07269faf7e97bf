"""Shared finite-difference oracles and kink-safe samplers."""

import numpy as np

from lpnet.core import Rng


def numeric_grad(f, v, eps=1e-5):
    """Central differences of scalar f over a flat float64 vector."""
    v = np.asarray(v, dtype=np.float64)
    g = np.zeros_like(v)
    for i in range(v.size):
        up = v.copy()
        dn = v.copy()
        up[i] += eps
        dn[i] -= eps
        g[i] = (f(up) - f(dn)) / (2 * eps)
    return g


def rel_err(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def kink_safe_diffs(rs, n, margin=1e-2):
    """Difference vector with every |d_i| above margin.

    Finite differences straddle the |.| kink when any signal sits within
    the probe step of its center, so those draws are rejected.
    """
    while True:
        d = rs.standard_normal(n)
        if np.min(np.abs(d)) > margin:
            return d


def seeded_rs(seed):
    return np.random.RandomState(seed)


def fresh_rng(seed):
    return Rng(seed)
