"""Deep-transition recurrent network with a deep (maxout) output stack.

The state transition routes the previous state and the current input
through an intermediate layer before the tanh state update:

    h_t = tanh(W' f(U' h_{t-1} + V' x_t) + b_h)

where f is either a learned-order pooling layer (grouped signals,
centers, trainable orders) or an elementwise tanh with bias. The output
stack is a maxout layer over h_t followed by a linear readout producing
one Bernoulli logit per target dimension; the per-step loss is the
summed binary cross-entropy. Training is full backpropagation through
time with optional truncation and gradient-norm clipping.

tanh keeps every state coordinate strictly inside (-1, 1) no matter how
large the intermediate activations get, so unbounded pooling outputs
cannot destabilize the state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import Rng, ShapeError
from .lp import LpLayerParams, _pool_forward, _pool_backward, inverse_reparam
from .layers import dropout_mask, maxout_backward, maxout_forward

# tanh saturates to exactly 1.0 in float64 once |z| > ~19; the state
# contract is the open interval (-1, 1), so clamp one ulp inside.
_STATE_LIM = float(np.nextafter(1.0, 0.0))


@dataclass
class SequenceBatch:
    """Binary vector sequences for next-step prediction.

    inputs[i] and targets[i] are (T_i, dim) arrays with inputs shifted
    one step back: x_t = y_{t-1}, x_0 = 0.
    """

    inputs: list
    targets: list
    dim: int

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ShapeError(f"{len(self.inputs)} input sequences vs "
                             f"{len(self.targets)} target sequences")
        self.inputs = [np.asarray(x, dtype=np.float64) for x in self.inputs]
        self.targets = [np.asarray(y, dtype=np.float64) for y in self.targets]
        for i, (x, y) in enumerate(zip(self.inputs, self.targets)):
            if x.shape != y.shape or x.ndim != 2 or x.shape[1] != self.dim:
                raise ShapeError(f"sequence {i}: input {x.shape} target {y.shape} "
                                 f"incompatible with dim {self.dim}")
            bad = (y != 0.0) & (y != 1.0)
            if bad.any():
                raise ValueError(f"sequence {i}: targets must be binary")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def lengths(self) -> list:
        return [x.shape[0] for x in self.inputs]

    @property
    def n_steps(self) -> int:
        return sum(self.lengths)

    def buckets(self) -> dict:
        """Indices grouped by sequence length, keys sorted ascending."""
        by_len: dict = {}
        for i, t in enumerate(self.lengths):
            by_len.setdefault(t, []).append(i)
        return {t: by_len[t] for t in sorted(by_len)}

    def subset(self, indices) -> "SequenceBatch":
        return SequenceBatch([self.inputs[i] for i in indices],
                             [self.targets[i] for i in indices], self.dim)


INTERMEDIATE_KINDS = ("lp", "tanh")


@dataclass
class DtRnnParams:
    """Parameters of the deep-transition network plus its output stack.

    For kind "lp" the intermediate signals are grouped `group` at a time
    into `units` pooling outputs with centers and orders; kind "tanh"
    uses one bias per signal and no grouping (units == n_signals).
    """

    kind: str
    group: int
    learn_order: bool
    out_group: int
    v: np.ndarray            # input -> intermediate signals
    u: np.ndarray            # state -> intermediate signals
    centers: np.ndarray      # (n_signals,), lp only
    rho: np.ndarray          # (units,), lp only
    f_bias: np.ndarray       # (n_signals,), tanh only
    w: np.ndarray            # intermediate units -> state
    h_bias: np.ndarray
    out_weights: np.ndarray  # state -> maxout signals
    out_bias: np.ndarray
    readout_weights: np.ndarray  # maxout units -> target dim
    readout_bias: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in INTERMEDIATE_KINDS:
            raise ValueError(f"unknown intermediate kind {self.kind!r}")
        arrays = {n: np.asarray(getattr(self, n), dtype=np.float64)
                  for n in ("v", "u", "centers", "rho", "f_bias", "w", "h_bias",
                            "out_weights", "out_bias", "readout_weights",
                            "readout_bias")}
        for n, a in arrays.items():
            setattr(self, n, a)
        n_signals = self.v.shape[1]
        if self.u.shape != (self.state_dim, n_signals):
            raise ShapeError(f"u shape {self.u.shape}, expected "
                             f"({self.state_dim}, {n_signals})")
        if self.kind == "lp":
            if n_signals % self.group:
                raise ShapeError(f"{n_signals} signals not divisible by "
                                 f"group {self.group}")
            if self.centers.shape != (n_signals,) or self.rho.shape != (self.units,):
                raise ShapeError("centers/rho shapes inconsistent with signals")
        if self.w.shape != (self.units, self.state_dim):
            raise ShapeError(f"w shape {self.w.shape}, expected "
                             f"({self.units}, {self.state_dim})")
        if self.out_weights.shape[1] % self.out_group:
            raise ShapeError("output maxout signals not divisible by group")

    @property
    def input_dim(self) -> int:
        return self.v.shape[0]

    @property
    def state_dim(self) -> int:
        return self.h_bias.shape[0]

    @property
    def units(self) -> int:
        n_signals = self.v.shape[1]
        return n_signals // self.group if self.kind == "lp" else n_signals

    @property
    def out_dim(self) -> int:
        return self.readout_bias.shape[0]

    @classmethod
    def build(cls, input_dim: int, state_dim: int, units: int, out_dim: int,
              rng: Rng, kind: str = "lp", group: int = 2,
              learn_order: bool = True, init_order: float = 3.0,
              out_units: int | None = None, out_group: int = 2) -> "DtRnnParams":
        if kind not in INTERMEDIATE_KINDS:
            raise ValueError(f"unknown intermediate kind {kind!r}")
        if out_units is None:
            out_units = state_dim
        n_signals = units * group if kind == "lp" else units

        def glorot(sub, fan_in, fan_out):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return sub.uniform(-bound, bound, fan_in * fan_out).reshape(fan_in, fan_out)

        if kind == "lp":
            noise = 0.1 if learn_order else 0.0
            base = inverse_reparam(init_order)
            sub = rng.substream("rho")
            rho = base + sub.uniform(-noise, noise, units) if noise else \
                np.full(units, base)
        else:
            rho = np.zeros(0)
        return cls(
            kind=kind, group=group if kind == "lp" else 1,
            learn_order=learn_order and kind == "lp", out_group=out_group,
            v=glorot(rng.substream("v"), input_dim, n_signals),
            u=glorot(rng.substream("u"), state_dim, n_signals),
            centers=np.zeros(n_signals if kind == "lp" else 0),
            rho=rho,
            f_bias=np.zeros(n_signals if kind == "tanh" else 0),
            w=glorot(rng.substream("w"), units, state_dim),
            h_bias=np.zeros(state_dim),
            out_weights=glorot(rng.substream("out"), state_dim,
                               out_units * out_group),
            out_bias=np.zeros(out_units * out_group),
            readout_weights=glorot(rng.substream("readout"), out_units, out_dim),
            readout_bias=np.zeros(out_dim),
            seed=rng.seed,
        )

    def trainable_names(self) -> tuple:
        if self.kind == "lp":
            names = ["v", "u", "centers"]
            if self.learn_order:
                names.append("rho")
        else:
            names = ["v", "u", "f_bias"]
        names += ["w", "h_bias", "out_weights", "out_bias",
                  "readout_weights", "readout_bias"]
        return tuple(names)

    def flatten(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel()
                               for n in self.trainable_names()])

    def unflatten(self, vec: np.ndarray) -> "DtRnnParams":
        vec = np.asarray(vec, dtype=np.float64)
        offset = 0
        for n in self.trainable_names():
            a = getattr(self, n)
            setattr(self, n, vec[offset:offset + a.size].reshape(a.shape).copy())
            offset += a.size
        if offset != vec.size:
            raise ShapeError(f"vector length {vec.size} != parameter count {offset}")
        return self

    def n_params(self) -> int:
        return sum(getattr(self, n).size for n in self.trainable_names())

    def copy(self) -> "DtRnnParams":
        return DtRnnParams(
            kind=self.kind, group=self.group, learn_order=self.learn_order,
            out_group=self.out_group,
            **{n: getattr(self, n).copy()
               for n in ("v", "u", "centers", "rho", "f_bias", "w", "h_bias",
                         "out_weights", "out_bias", "readout_weights",
                         "readout_bias")},
            seed=self.seed)

    def lp_orders(self) -> np.ndarray:
        from .lp import reparam_order
        return reparam_order(self.rho) if self.kind == "lp" else np.zeros(0)


def _step_batch(params: DtRnnParams, h_prev, x_t, drop_mask=None):
    """One transition over a batch of states. Returns (h_t, cache)."""
    z = h_prev @ params.u + x_t @ params.v
    if params.kind == "lp":
        diffs = (z - params.centers).reshape(z.shape[0], params.units, params.group)
        f, pool_cache = _pool_forward(diffs, params.rho)
        f_cache = pool_cache
    else:
        f = np.tanh(z + params.f_bias)
        f_cache = f
    if drop_mask is not None:
        f = f * drop_mask
    h_pre = f @ params.w + params.h_bias
    h = np.clip(np.tanh(h_pre), -_STATE_LIM, _STATE_LIM)
    return h, (h_prev, x_t, f_cache, f, h, drop_mask)


def dtrnn_step(params: DtRnnParams, h_prev, x_t) -> np.ndarray:
    """Single-vector state transition; output entries lie in (-1, 1)."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if h_prev.shape != (params.state_dim,) or x_t.shape != (params.input_dim,):
        raise ShapeError(f"state {h_prev.shape} / input {x_t.shape} incompatible "
                         f"with ({params.state_dim},) / ({params.input_dim},)")
    h, _ = _step_batch(params, h_prev[None, :], x_t[None, :])
    return h[0]


def _output_batch(params: DtRnnParams, h):
    zo = h @ params.out_weights + params.out_bias
    mo, idx = maxout_forward(zo, params.out_group)
    logits = mo @ params.readout_weights + params.readout_bias
    return logits, (mo, idx)


def dotrnn_output(params: DtRnnParams, h_t) -> np.ndarray:
    """Per-dimension Bernoulli logits from one state vector."""
    h_t = np.asarray(h_t, dtype=np.float64)
    if h_t.shape != (params.state_dim,):
        raise ShapeError(f"state shape {h_t.shape}, expected ({params.state_dim},)")
    logits, _ = _output_batch(params, h_t[None, :])
    return logits[0]


def bernoulli_nll(logits, targets):
    """Summed binary cross-entropy and its logit gradient.

    loss = sum over entries of log(1 + e^z) - y z, gradient sigmoid(z) - y.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    loss = float(np.sum(np.logaddexp(0.0, logits) - targets * logits))
    return loss, expit(logits) - targets


def bptt(params: DtRnnParams, batch: SequenceBatch, truncate: int = 0,
         dropout_rate: float = 0.0, rng: Rng | None = None):
    """Loss and flat gradient over a batch of sequences.

    Loss is the mean over sequences of the per-sequence summed Bernoulli
    cross-entropy. Equal-length sequences are processed together; when
    truncate = k > 0, gradients stop flowing backward across step
    indices that are multiples of k (a sequence no longer than k is
    unaffected). Dropout, when active, masks the intermediate layer
    outputs only, so state dynamics stay deterministic given the masks.
    """
    if batch.dim != params.input_dim or batch.dim != params.out_dim:
        raise ShapeError(f"batch dim {batch.dim} incompatible with model "
                         f"({params.input_dim} in, {params.out_dim} out)")
    if dropout_rate and rng is None:
        raise ValueError("dropout needs an explicit Rng")
    n_total = len(batch)
    if n_total == 0:
        raise ValueError("empty sequence batch")
    total_loss = 0.0
    total_grad = np.zeros(params.n_params())
    total_steps = 0
    for length, indices in batch.buckets().items():
        sub = batch.subset(indices)
        loss, grad, steps = _bptt_bucket(params, sub, truncate, dropout_rate, rng)
        total_loss += loss * len(sub)
        total_grad += grad * len(sub)
        total_steps += steps
    return total_loss / n_total, total_grad / n_total, total_steps


def _bptt_bucket(params, batch, truncate, dropout_rate, rng):
    n = len(batch)
    length = batch.inputs[0].shape[0]
    xs = np.stack(batch.inputs)    # (n, T, d)
    ys = np.stack(batch.targets)
    h = np.zeros((n, params.state_dim))
    caches = []
    out_caches = []
    loss = 0.0
    d_logits_steps = []
    for t in range(length):
        mask = None
        if dropout_rate:
            mask = dropout_mask(rng, dropout_rate, n * params.units) \
                .reshape(n, params.units)
        h, cache = _step_batch(params, h, xs[:, t, :], drop_mask=mask)
        logits, out_cache = _output_batch(params, h)
        step_loss, d_logits = bernoulli_nll(logits, ys[:, t, :])
        loss += step_loss
        caches.append(cache)
        out_caches.append(out_cache)
        d_logits_steps.append(d_logits)

    grads = {name: np.zeros_like(getattr(params, name))
             for name in params.trainable_names()}
    d_h_carry = np.zeros((n, params.state_dim))
    for t in range(length - 1, -1, -1):
        h_prev, x_t, f_cache, f, h_t, mask = caches[t]
        mo, idx = out_caches[t]
        dl = d_logits_steps[t]
        grads["readout_weights"] += mo.T @ dl
        grads["readout_bias"] += dl.sum(axis=0)
        d_mo = dl @ params.readout_weights.T
        dzo = maxout_backward(d_mo, idx, params.out_group)
        grads["out_weights"] += h_t.T @ dzo
        grads["out_bias"] += dzo.sum(axis=0)
        d_h = dzo @ params.out_weights.T + d_h_carry
        d_hpre = d_h * (1.0 - h_t * h_t)
        grads["w"] += f.T @ d_hpre
        grads["h_bias"] += d_hpre.sum(axis=0)
        d_f = d_hpre @ params.w.T
        if mask is not None:
            d_f = d_f * mask
        if params.kind == "lp":
            d_diffs, d_rho = _pool_backward(d_f, f_cache, params.rho)
            dz = d_diffs.reshape(n, -1)
            grads["centers"] += -dz.sum(axis=0)
            if params.learn_order:
                grads["rho"] += d_rho.sum(axis=0)
        else:
            dz = d_f * (1.0 - f_cache * f_cache)
            grads["f_bias"] += dz.sum(axis=0)
        grads["v"] += x_t.T @ dz
        grads["u"] += h_prev.T @ dz
        d_h_carry = dz @ params.u.T
        if truncate and t % truncate == 0:
            d_h_carry = np.zeros_like(d_h_carry)

    flat = np.concatenate([grads[name].ravel()
                           for name in params.trainable_names()]) / n
    return loss / n, flat, n * length


def rnn_loss(params: DtRnnParams, batch: SequenceBatch):
    """Mean per-sequence loss and per-step negative log-likelihood,
    evaluated without dropout."""
    loss, _, _ = bptt(params, batch)
    per_step = loss * len(batch) / batch.n_steps
    return loss, per_step


def rnn_states(params: DtRnnParams, batch: SequenceBatch):
    """All hidden states visited on a batch, one (T, state_dim) array per
    sequence. Used to check max|h| < 1."""
    out = []
    for x in batch.inputs:
        h = np.zeros((1, params.state_dim))
        states = np.empty((x.shape[0], params.state_dim))
        for t in range(x.shape[0]):
            h, _ = _step_batch(params, h, x[None, t, :])
            states[t] = h[0]
        out.append(states)
    return out


def clip_gradient_norm(grads: np.ndarray, threshold: float) -> np.ndarray:
    """Rescale to norm = threshold when the L2 norm exceeds it."""
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    grads = np.asarray(grads, dtype=np.float64)
    norm = float(np.linalg.norm(grads))
    if norm <= threshold:
        return grads
    return grads * (threshold / norm)


def rnn_grad_check(params: DtRnnParams, batch: SequenceBatch,
                   epsilon: float = 1e-5, truncate: int = 0) -> float:
    """Central finite differences over every trainable parameter of the
    unrolled network; returns the max relative error."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    params = params.copy()
    _, analytic, _ = bptt(params, batch, truncate=truncate)
    theta = params.flatten()
    worst = 0.0
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + epsilon
        params.unflatten(bumped)
        hi, _, _ = bptt(params, batch, truncate=truncate)
        bumped[i] = theta[i] - epsilon
        params.unflatten(bumped)
        lo, _, _ = bptt(params, batch, truncate=truncate)
        numeric = (hi - lo) / (2.0 * epsilon)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    params.unflatten(theta)
    return worst


def rnn_kink_margin(params: DtRnnParams, batch: SequenceBatch) -> float:
    """Smallest distance to a pooling or maxout kink over a batch rollout.

    Finite-difference checks resample until this clears the probe step.
    Truncated BPTT additionally kinks at zero pooling diffs only, which
    this covers.
    """
    margin = np.inf
    for x in batch.inputs:
        h = np.zeros((1, params.state_dim))
        for t in range(x.shape[0]):
            h, cache = _step_batch(params, h, x[None, t, :])
            if params.kind == "lp":
                absd = cache[2][1]
                margin = min(margin, float(absd.min()))
            zo = cache[4] @ params.out_weights + params.out_bias
            grouped = np.sort(zo.reshape(1, -1, params.out_group), axis=-1)
            if params.out_group > 1:
                gap = grouped[..., -1] - grouped[..., -2]
                margin = min(margin, float(gap.min()))
    return margin
