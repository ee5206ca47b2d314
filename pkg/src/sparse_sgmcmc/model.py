"""Dense networks with hand-written backpropagation.

Every model is a stack of fully connected layers whose weights and biases are
flattened into a single parameter vector ``beta``.  Linear regression is the
one-layer case (identity activation, no bias).  Layers tagged ``sparse`` get the
spike-and-slab prior on their weights; everything else gets an isotropic
Gaussian prior with standard deviation ``sigma0``.

Layout of ``beta``: for each layer in order, the ``fan_out x fan_in`` weight
matrix in row-major order followed by the bias vector (if any).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .hyper import HyperState, PriorConfig

ACTIVATIONS = ("identity", "tanh", "relu")


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    activation: str = "tanh"
    sparse: bool = False
    bias: bool = True

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError("fan_in and fan_out must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_weights(self) -> int:
        return self.fan_in * self.fan_out

    @property
    def size(self) -> int:
        return self.n_weights + (self.fan_out if self.bias else 0)


class Network:
    """Index bookkeeping for a layer stack.

    Attributes
    ----------
    offsets : list of int
        Start of each layer's block in ``beta``.
    sparse_index : ndarray of int
        Flat indices of all sparse-layer weights, layer by layer.
    sparse_groups : list of ndarray
        Positions *within* ``sparse_index`` belonging to each sparse layer.
    """

    def __init__(self, layers: Sequence[LayerSpec]):
        layers = tuple(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}")
        if layers[-1].activation != "identity":
            raise ValueError("output layer activation must be identity")
        self.layers = layers
        self.offsets = []
        off = 0
        for layer in layers:
            self.offsets.append(off)
            off += layer.size
        self.size = off

        sparse_idx, groups, dense = [], [], np.ones(self.size, dtype=bool)
        pos = 0
        for layer, start in zip(layers, self.offsets):
            if layer.sparse:
                idx = np.arange(start, start + layer.n_weights)
                sparse_idx.append(idx)
                groups.append(np.arange(pos, pos + layer.n_weights))
                dense[idx] = False
                pos += layer.n_weights
        self.sparse_index = np.concatenate(sparse_idx) if sparse_idx else np.zeros(0, dtype=int)
        self.sparse_groups = groups
        self.dense_index = np.flatnonzero(dense)

    @classmethod
    def linear(cls, p: int) -> Network:
        return cls([LayerSpec(p, 1, "identity", sparse=True, bias=False)])

    @classmethod
    def mlp(cls, widths: Sequence[int], activation: str = "tanh", sparse_from: int = -1) -> Network:
        """Fully connected stack ``widths[0] -> ... -> widths[-1]``.

        Layers with index ``>= sparse_from`` (negative counts from the end) are
        tagged sparse; the default tags only the output layer.
        """
        n = len(widths) - 1
        first_sparse = sparse_from % n
        layers = [
            LayerSpec(
                widths[i],
                widths[i + 1],
                "identity" if i == n - 1 else activation,
                sparse=i >= first_sparse,
            )
            for i in range(n)
        ]
        return cls(layers)

    @property
    def n_sparse(self) -> int:
        return int(self.sparse_index.size)

    @property
    def sparse_layer_sizes(self) -> list[int]:
        return [int(g.size) for g in self.sparse_groups]

    def unpack(self, beta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray | None]]:
        out = []
        for layer, start in zip(self.layers, self.offsets):
            w = beta[start : start + layer.n_weights].reshape(layer.fan_out, layer.fan_in)
            b = beta[start + layer.n_weights : start + layer.size] if layer.bias else None
            out.append((w, b))
        return out

    def to_dict(self) -> list[dict]:
        return [
            dict(fan_in=s.fan_in, fan_out=s.fan_out, activation=s.activation, sparse=s.sparse, bias=s.bias)
            for s in self.layers
        ]

    @classmethod
    def from_dict(cls, layers: list[dict]) -> Network:
        return cls([LayerSpec(**d) for d in layers])


@dataclass
class ParamState:
    """Flat parameter vector with a monotone prune mask (``True`` = pruned)."""

    beta: np.ndarray
    pruned: np.ndarray = field(default=None)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.pruned is None:
            self.pruned = np.zeros(self.beta.shape, dtype=bool)
        self.pruned = np.asarray(self.pruned, dtype=bool)
        if self.pruned.shape != self.beta.shape:
            raise ValueError("mask and beta shapes differ")

    def apply_mask(self) -> ParamState:
        self.beta[self.pruned] = 0.0
        return self

    def copy(self) -> ParamState:
        return ParamState(self.beta.copy(), self.pruned.copy())


def init_params(net: Network, rng: np.random.Generator) -> ParamState:
    """Weights ~ N(0, 2/(fan_in+fan_out)), biases zero."""
    beta = np.zeros(net.size)
    for layer, start in zip(net.layers, net.offsets):
        std = np.sqrt(2.0 / (layer.fan_in + layer.fan_out))
        beta[start : start + layer.n_weights] = std * rng.standard_normal(layer.n_weights)
    return ParamState(beta)


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    n_total: int

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        t = np.asarray(self.targets, dtype=np.float64)
        self.targets = t.reshape(len(t), -1)
        n = self.inputs.shape[0]
        if n < 1 or self.targets.shape[0] != n:
            raise ValueError("batch inputs and targets must have the same (>=1) number of rows")
        if n > self.n_total:
            raise ValueError("batch is larger than the full dataset")

    @property
    def scale(self) -> float:
        return self.n_total / self.inputs.shape[0]


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return None


def _forward_cache(params: ParamState, net: Network, inputs):
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != net.layers[0].fan_in:
        raise ValueError(f"input width {x.shape[1]} does not match fan_in {net.layers[0].fan_in}")
    cache = []
    a = x
    for layer, (w, b) in zip(net.layers, net.unpack(params.beta)):
        z = a @ w.T
        if b is not None:
            z = z + b
        out = _act(layer.activation, z)
        cache.append((a, z, out))
        a = out
    return a, cache


def forward(params: ParamState, net: Network, inputs) -> np.ndarray:
    return _forward_cache(params, net, inputs)[0]


def _backward(params: ParamState, net: Network, cache, d_out: np.ndarray) -> np.ndarray:
    """Pull ``d_out`` (dL/d output, one row per datum) back to dL/d beta."""
    grad = np.empty(net.size)
    delta = d_out
    unpacked = net.unpack(params.beta)
    for li in range(len(net.layers) - 1, -1, -1):
        layer, start = net.layers[li], net.offsets[li]
        a_in, z, out = cache[li]
        dz = _act_grad(layer.activation, z, out)
        if dz is not None:
            delta = delta * dz
        grad[start : start + layer.n_weights] = (delta.T @ a_in).ravel()
        if layer.bias:
            grad[start + layer.n_weights : start + layer.size] = delta.sum(axis=0)
        if not np.all(np.isfinite(grad[start : start + layer.size])):
            raise FloatingPointError(f"non-finite gradient in layer {li}")
        if li:
            delta = delta @ unpacked[li][0]
    return grad


def loglik_grad_and_sse(params: ParamState, net: Network, batch: Batch, sigma: float):
    """Gradient of ``(N/n) log p(batch | beta, sigma)`` and the raw batch SSE."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    pred, cache = _forward_cache(params, net, batch.inputs)
    resid = pred - batch.targets
    if not np.all(np.isfinite(resid)):
        bad = next(i for i, c in enumerate(cache) if not np.all(np.isfinite(c[2])))
        raise FloatingPointError(f"non-finite activation in layer {bad}")
    grad = _backward(params, net, cache, resid)
    grad *= -batch.scale / sigma**2
    grad[params.pruned] = 0.0
    return grad, float(np.sum(resid * resid))


def grad_loglik(params: ParamState, net: Network, batch: Batch, sigma: float) -> np.ndarray:
    return loglik_grad_and_sse(params, net, batch, sigma)[0]


def prior_grad(params: ParamState, net: Network, hyper: HyperState, prior: PriorConfig) -> np.ndarray:
    """Gradient of the log prior (data independent)."""
    beta = params.beta
    g = np.zeros_like(beta)
    g[net.dense_index] = -beta[net.dense_index] / prior.sigma0**2
    bs = beta[net.sparse_index]
    g[net.sparse_index] = -np.sign(bs) * hyper.kappa0 / hyper.sigma - bs * hyper.kappa1 / hyper.sigma**2
    g[params.pruned] = 0.0
    return g


def grad_q_and_sse(params, net, batch, hyper, prior):
    g, sse = loglik_grad_and_sse(params, net, batch, hyper.sigma)
    return g + prior_grad(params, net, hyper, prior), sse


def grad_Q(params: ParamState, net: Network, batch: Batch, hyper: HyperState, prior: PriorConfig) -> np.ndarray:
    """Stochastic gradient of the log posterior: minibatch log-likelihood plus prior terms."""
    return grad_q_and_sse(params, net, batch, hyper, prior)[0]
