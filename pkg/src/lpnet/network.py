"""Sequential networks: specs, batched forward/backward, gradient checking.

A network is an ordered list of layer specs (linear+activation, learned
order pooling, maxout, dropout) with materialized float64 parameters.
Losses over a minibatch are means of per-sample losses, so learning
rates transfer across batch sizes. Parameters flatten to a single
vector in a fixed order, which is what the optimizer, the serializer
and the finite-difference checker all operate on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .core import Rng, ShapeError, FormatError
from .lp import LpLayerParams, _pool_forward, _pool_backward, inverse_reparam
from .layers import (ELEMENTWISE_KINDS, dropout_mask, elementwise_forward,
                     elementwise_grad, maxout_backward, maxout_forward,
                     softmax_xent_batch)

NETWORK_SCHEMA = "lpnet-network/1"

LAYER_KINDS = ("linear", "lp", "maxout", "dropout")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential network.

    kind "linear": out_dim and optional elementwise activation.
    kind "lp": units pooling groups of `group` filter signals; learn_order
    False freezes the order at exactly init_order.
    kind "maxout": units taking the max over groups of `group` signals.
    kind "dropout": inverted dropout with the given rate, train mode only.
    """

    kind: str
    out_dim: int = 0
    activation: str | None = None
    units: int = 0
    group: int = 0
    rate: float = 0.0
    learn_order: bool = True
    init_order: float = 3.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; known: {LAYER_KINDS}")
        if self.kind == "linear":
            if self.out_dim < 1:
                raise ValueError("linear layer needs out_dim >= 1")
            if self.activation is not None and self.activation not in ELEMENTWISE_KINDS:
                raise ValueError(f"unknown activation {self.activation!r}")
        elif self.kind in ("lp", "maxout"):
            if self.units < 1 or self.group < 1:
                raise ValueError(f"{self.kind} layer needs units >= 1 and group >= 1")
        elif self.kind == "dropout":
            if not 0.0 <= self.rate < 1.0:
                raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def width_out(self, width_in: int) -> int:
        if self.kind == "linear":
            return self.out_dim
        if self.kind in ("lp", "maxout"):
            return self.units
        return width_in


def linear(out_dim: int, activation: str | None = None) -> LayerSpec:
    return LayerSpec(kind="linear", out_dim=out_dim, activation=activation)


def lp_layer(units: int, group: int, learn_order: bool = True,
             init_order: float = 3.0) -> LayerSpec:
    return LayerSpec(kind="lp", units=units, group=group,
                     learn_order=learn_order, init_order=init_order)


def maxout_layer(units: int, group: int) -> LayerSpec:
    return LayerSpec(kind="maxout", units=units, group=group)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec(kind="dropout", rate=rate)


def _trainable_names(spec: LayerSpec) -> tuple[str, ...]:
    if spec.kind == "linear" or spec.kind == "maxout":
        return ("weights", "bias")
    if spec.kind == "lp":
        return ("weights", "centers", "rho") if spec.learn_order else ("weights", "centers")
    return ()


def _param_names(spec: LayerSpec) -> tuple[str, ...]:
    if spec.kind == "lp":
        return ("weights", "centers", "rho")
    return _trainable_names(spec)


def _glorot(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, fan_in * fan_out).reshape(fan_in, fan_out)


class Network:
    """Sequential stack of layers ending in K logits.

    Parameters live in one dict of float64 arrays per layer. mode is
    "train" or "eval"; dropout only acts in train mode, and train-mode
    forward passes through dropout layers need an explicit Rng.
    """

    def __init__(self, input_dim: int, specs: list[LayerSpec],
                 params: list[dict] | None = None, mode: str = "train",
                 seed: int | None = None):
        self.input_dim = int(input_dim)
        self.specs = list(specs)
        self.mode = mode
        self.seed = seed
        widths = [self.input_dim]
        for spec in self.specs:
            widths.append(spec.width_out(widths[-1]))
        self.widths = widths
        self.params = params if params is not None else []
        if params is not None and len(params) != len(self.specs):
            raise ShapeError(f"{len(params)} param blocks for {len(self.specs)} layers")

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @classmethod
    def build(cls, input_dim: int, specs: list[LayerSpec], rng: Rng,
              mode: str = "train") -> "Network":
        """Materialize parameters: Glorot-uniform weights, zero biases and
        centers, pooling orders at init_order (plus symmetry-breaking noise
        when the order is trainable)."""
        net = cls(input_dim, specs, params=None, mode=mode, seed=rng.seed)
        for i, spec in enumerate(net.specs):
            sub = rng.substream(f"layer{i}")
            width_in = net.widths[i]
            if spec.kind == "linear":
                net.params.append({
                    "weights": _glorot(sub, width_in, spec.out_dim),
                    "bias": np.zeros(spec.out_dim),
                })
            elif spec.kind == "maxout":
                total = spec.units * spec.group
                net.params.append({
                    "weights": _glorot(sub, width_in, total),
                    "bias": np.zeros(total),
                })
            elif spec.kind == "lp":
                noise = 0.1 if spec.learn_order else 0.0
                lpp = LpLayerParams.init(width_in, spec.units, spec.group, sub,
                                         init_order=spec.init_order,
                                         order_noise=noise)
                net.params.append({
                    "weights": lpp.weights, "centers": lpp.centers, "rho": lpp.rho,
                })
            else:
                net.params.append({})
        return net

    def set_mode(self, mode: str) -> "Network":
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        self.mode = mode
        return self

    def lp_orders(self) -> np.ndarray:
        """Effective pooling orders of every lp unit, in layer order."""
        from .lp import reparam_order
        chunks = [reparam_order(p["rho"]) for spec, p in zip(self.specs, self.params)
                  if spec.kind == "lp"]
        return np.concatenate(chunks) if chunks else np.zeros(0)

    # -- forward / backward over a minibatch ---------------------------------

    def forward(self, x, rng: Rng | None = None):
        """Logits and layer caches for a batch (n, d) or one vector (d,)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"input shape {x.shape} incompatible with "
                             f"(n, {self.input_dim})")
        caches = []
        out = x
        for spec, p in zip(self.specs, self.params):
            if spec.kind == "linear":
                z = out @ p["weights"] + p["bias"]
                y = elementwise_forward(spec.activation, z) if spec.activation else z
                caches.append((out, z))
                out = y
            elif spec.kind == "lp":
                a = out @ p["weights"]
                diffs = (a - p["centers"]).reshape(out.shape[0], spec.units, spec.group)
                u, pool_cache = _pool_forward(diffs, p["rho"])
                caches.append((out, pool_cache))
                out = u
            elif spec.kind == "maxout":
                z = out @ p["weights"] + p["bias"]
                u, idx = maxout_forward(z, spec.group)
                caches.append((out, z, idx))
                out = u
            else:  # dropout
                if self.mode == "train":
                    if rng is None:
                        raise ValueError("train-mode forward through dropout "
                                         "needs an explicit Rng")
                    mask = dropout_mask(rng, spec.rate, out.size).reshape(out.shape)
                    caches.append(mask)
                    out = out * mask
                else:
                    caches.append(None)
        logits = out[0] if single else out
        return logits, caches

    def backward(self, caches, d_logits) -> np.ndarray:
        """Flat gradient vector for upstream d_logits (chained, summed over
        the batch; pair with softmax_xent_batch for mean-loss semantics)."""
        d_out = np.asarray(d_logits, dtype=np.float64)
        if d_out.ndim == 1:
            d_out = d_out[None, :]
        if len(caches) != len(self.specs):
            raise ValueError(f"{len(caches)} caches for {len(self.specs)} layers")
        grads: list[dict] = [None] * len(self.specs)
        for i in range(len(self.specs) - 1, -1, -1):
            spec, p, cache = self.specs[i], self.params[i], caches[i]
            if spec.kind == "linear":
                x, z = cache
                dz = d_out * elementwise_grad(spec.activation, z) \
                    if spec.activation else d_out
                grads[i] = {"weights": x.T @ dz, "bias": dz.sum(axis=0)}
                d_out = dz @ p["weights"].T
            elif spec.kind == "lp":
                x, pool_cache = cache
                d_diffs, d_rho = _pool_backward(d_out, pool_cache, p["rho"])
                da = d_diffs.reshape(x.shape[0], -1)
                grads[i] = {"weights": x.T @ da, "centers": -da.sum(axis=0),
                            "rho": d_rho.sum(axis=0)}
                d_out = da @ p["weights"].T
            elif spec.kind == "maxout":
                x, z, idx = cache
                dz = maxout_backward(d_out, idx, spec.group)
                grads[i] = {"weights": x.T @ dz, "bias": dz.sum(axis=0)}
                d_out = dz @ p["weights"].T
            else:
                grads[i] = {}
                if self.mode == "train" and cache is not None:
                    d_out = d_out * cache
        return self._flatten_blocks(grads)

    def loss_and_grad(self, x, labels, rng: Rng | None = None):
        """Mean cross-entropy loss, flat gradient, and logits for a batch."""
        logits, caches = self.forward(x, rng=rng)
        loss, d_logits = softmax_xent_batch(np.atleast_2d(logits), np.atleast_1d(labels))
        return loss, self.backward(caches, d_logits), logits

    def predict(self, x) -> np.ndarray:
        """Argmax class labels, computed in eval mode."""
        mode = self.mode
        self.mode = "eval"
        try:
            logits, _ = self.forward(x)
        finally:
            self.mode = mode
        return np.atleast_2d(logits).argmax(axis=1)

    # -- flat parameter vector ----------------------------------------------

    def _flatten_blocks(self, blocks: list[dict]) -> np.ndarray:
        chunks = []
        for spec, block in zip(self.specs, blocks):
            for name in _trainable_names(spec):
                chunks.append(np.asarray(block[name], dtype=np.float64).ravel())
        return np.concatenate(chunks) if chunks else np.zeros(0)

    def flatten(self) -> np.ndarray:
        """All trainable parameters as one vector (fixed layer/name order)."""
        return self._flatten_blocks(self.params)

    def unflatten(self, vec: np.ndarray) -> "Network":
        """Write a flat vector back into the parameter arrays."""
        vec = np.asarray(vec, dtype=np.float64)
        offset = 0
        for spec, p in zip(self.specs, self.params):
            for name in _trainable_names(spec):
                size = p[name].size
                p[name] = vec[offset:offset + size].reshape(p[name].shape).copy()
                offset += size
        if offset != vec.size:
            raise ShapeError(f"vector length {vec.size} != parameter count {offset}")
        return self

    def n_params(self) -> int:
        return sum(p[name].size for spec, p in zip(self.specs, self.params)
                   for name in _trainable_names(spec))

    def param_block_names(self) -> list[str]:
        return [f"layer{i}.{name}" for i, spec in enumerate(self.specs)
                for name in _trainable_names(spec)]

    def copy(self) -> "Network":
        params = [{k: v.copy() for k, v in p.items()} for p in self.params]
        return Network(self.input_dim, self.specs, params=params,
                       mode=self.mode, seed=self.seed)

    # -- serialization -------------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "schema": NETWORK_SCHEMA,
            "seed": self.seed,
            "input_dim": self.input_dim,
            "specs": [asdict(s) for s in self.specs],
            "params": [{k: v.tolist() for k, v in p.items()} for p in self.params],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Network":
        if doc.get("schema") != NETWORK_SCHEMA:
            raise FormatError(f"unsupported network schema {doc.get('schema')!r}")
        specs = [LayerSpec(**s) for s in doc["specs"]]
        params = [{k: np.asarray(v, dtype=np.float64) for k, v in p.items()}
                  for p in doc["params"]]
        return cls(doc["input_dim"], specs, params=params, mode="eval",
                   seed=doc.get("seed"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_doc(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"not a JSON document: {path}: {exc}") from exc
        return cls.from_doc(doc)


def grad_check(net: Network, x, labels, epsilon: float = 1e-5) -> float:
    """Max relative error of the analytic gradient against central
    finite differences, parameter by parameter, in eval mode.

    Relative error uses max(|analytic|, |numeric|, 1e-8) in the
    denominator so vanishing gradients are compared absolutely.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    net = net.copy().set_mode("eval")
    _, analytic, _ = net.loss_and_grad(x, labels)
    theta = net.flatten()
    if theta.size == 0:
        return 0.0
    worst = 0.0
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + epsilon
        net.unflatten(bumped)
        loss_hi, _, _ = _loss_only(net, x, labels)
        bumped[i] = theta[i] - epsilon
        net.unflatten(bumped)
        loss_lo, _, _ = _loss_only(net, x, labels)
        numeric = (loss_hi - loss_lo) / (2.0 * epsilon)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    net.unflatten(theta)
    return worst


def _loss_only(net: Network, x, labels):
    logits, _ = net.forward(x)
    return softmax_xent_batch(np.atleast_2d(logits), np.atleast_1d(labels))[0], None, None


def lp_activations(net: Network, x) -> np.ndarray:
    """Outputs of every pooling unit in the network for a batch, gathered
    in layer order into an (n, total_units) matrix. Eval mode."""
    net_eval = net.copy().set_mode("eval")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, caches = net_eval.forward(x)
    blocks = [cache[1][6] for spec, cache in zip(net_eval.specs, caches)
              if spec.kind == "lp"]
    return np.hstack(blocks) if blocks else np.zeros((x.shape[0], 0))


def kink_margin(net: Network, x) -> float:
    """Distance of a batch to the nearest non-smooth point of the network.

    Finite differences are only valid away from the kinks of abs,
    rectifier and max; callers resample inputs until this margin is
    comfortably larger than the probe step.
    """
    net = net.copy().set_mode("eval")
    _, caches = net.forward(x)
    margin = np.inf
    for spec, p, cache in zip(net.specs, net.params, caches):
        if spec.kind == "linear" and spec.activation in ("rectifier", "abs"):
            _, z = cache
            margin = min(margin, float(np.abs(z).min()))
        elif spec.kind == "lp":
            _, pool_cache = cache
            absd = pool_cache[1]
            margin = min(margin, float(absd.min()))
        elif spec.kind == "maxout":
            _, z, _ = cache
            grouped = np.sort(z.reshape(z.shape[0], -1, spec.group), axis=-1)
            if spec.group > 1:
                gap = grouped[..., -1] - grouped[..., -2]
                margin = min(margin, float(gap.min()))
    return margin
