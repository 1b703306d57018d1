"""Minimal float64 MLPs with hand-written backprop, a diagonal Gaussian policy
head, Adam with global-norm clipping, and flat-binary checkpoints.

Every ``Mlp`` has ReLU hidden layers and one of two heads:

* ``"identity"``: linear output (the critic).
* ``"gaussian"``: output width 2d, split into means tanh(z[:d]) and standard
  deviations softplus(z[d:]) + STD_FLOOR (the actor).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import MissingCache, NonFiniteGradient, NonPositiveStd, ShapeMismatch

STD_FLOOR = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


class Mlp:
    def __init__(self, sizes, head: str = "identity", rng: np.random.Generator | None = None,
                 out_scale: float = 1.0):
        if head not in ("identity", "gaussian"):
            raise ValueError(f"unknown head {head!r}")
        if head == "gaussian" and sizes[-1] % 2:
            raise ValueError("gaussian head needs an even output width")
        self.sizes = [int(s) for s in sizes]
        self.head = head
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if i < n_layers - 1:
                limit = np.sqrt(6.0 / fan_in)  # He-uniform, ReLU follows
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out)) * out_scale  # Xavier-uniform head
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def out_dim(self) -> int:
        return self.sizes[-1] // 2 if self.head == "gaussian" else self.sizes[-1]

    def forward(self, x) -> np.ndarray:
        """Evaluate on one input vector or a (batch, in) array; caches for backward."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.sizes[0]:
            raise ShapeMismatch(f"expected input width {self.sizes[0]}, got {h.shape[1]}")
        inputs, pre = [], []
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
        out = self._apply_head(h)
        self._cache = (inputs, pre, out)
        return out[0] if single else out

    def _apply_head(self, z):
        if self.head == "identity":
            return z
        d = z.shape[1] // 2
        return np.concatenate([np.tanh(z[:, :d]), np.logaddexp(0.0, z[:, d:]) + STD_FLOOR], axis=1)

    def backward(self, grad_out) -> tuple[list, np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. params (same order as ``params``) and input."""
        if self._cache is None:
            raise MissingCache("backward called without a preceding forward")
        inputs, pre, out = self._cache
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if g.shape != out.shape:
            raise ShapeMismatch(f"upstream gradient shape {g.shape} does not match output {out.shape}")
        if self.head == "gaussian":
            d = g.shape[1] // 2
            z = pre[-1]
            g = np.concatenate([g[:, :d] * (1.0 - out[:, :d] ** 2), g[:, d:] * expit(z[:, d:])], axis=1)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (pre[i - 1] > 0)  # ReLU subgradient is 0 at 0
        return grads, g

    def copy(self) -> "Mlp":
        new = Mlp.__new__(Mlp)
        new.sizes, new.head = list(self.sizes), self.head
        new.weights = [W.copy() for W in self.weights]
        new.biases = [b.copy() for b in self.biases]
        new._cache = None
        return new


@dataclass
class AdamState:
    params_like: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    last_grad_norm: float = 0.0

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.params_like]
            self.v = [np.zeros_like(p) for p in self.params_like]
        self.params_like = None


def adam_step(state: AdamState, params: list, grads: list, clip_norm: float | None = 1.0) -> list:
    """Clip the global gradient norm to ``clip_norm`` then apply one Adam update in place."""
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ShapeMismatch("gradients do not match parameters")
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
    if not np.isfinite(norm):
        raise NonFiniteGradient("gradient contains NaN or inf")
    state.last_grad_norm = norm
    scale = clip_norm / norm if clip_norm is not None and norm > clip_norm else 1.0
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**state.step, 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g * scale
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def gaussian_head(mean, std, rng: np.random.Generator | None = None):
    """Sample (or take the mode of) a diagonal Gaussian.

    Returns (action, log-density of action, entropy); works on the last axis.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise NonPositiveStd("standard deviations must be positive")
    action = mean if rng is None else mean + std * rng.standard_normal(mean.shape)
    return action, gaussian_log_prob(action, mean, std), gaussian_entropy(std)


def gaussian_log_prob(action, mean, std):
    z = (action - mean) / std
    return np.sum(-0.5 * z * z - np.log(std) - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(std):
    return np.sum(0.5 * (LOG_2PI + 1.0) + np.log(std), axis=-1)


def save_checkpoint(path, nets: dict, meta: dict | None = None) -> None:
    """Write ``<path>.bin`` (float64 little-endian, layer order, row-major) and ``<path>.json``."""
    path = Path(path)
    manifest = {"dtype": "<f8", "order": "C", "nets": {}, "meta": meta or {}}
    chunks, offset = [], 0
    for name, net in nets.items():
        arrays = []
        for i, p in enumerate(net.params):
            kind = "weight" if i % 2 == 0 else "bias"
            arrays.append({"layer": i // 2, "kind": kind, "shape": list(p.shape), "offset": offset})
            chunks.append(np.ascontiguousarray(p, dtype="<f8").ravel())
            offset += p.size
        manifest["nets"][name] = {"sizes": net.sizes, "head": net.head, "arrays": arrays}
    path.with_suffix(".bin").write_bytes(np.concatenate(chunks).tobytes() if chunks else b"")
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    nets = {}
    for name, entry in manifest["nets"].items():
        net = Mlp(entry["sizes"], head=entry["head"])
        for p, a in zip(net.params, entry["arrays"]):
            n = int(np.prod(a["shape"]))
            p[...] = flat[a["offset"]: a["offset"] + n].reshape(a["shape"])
        nets[name] = net
    return nets, manifest.get("meta", {})
