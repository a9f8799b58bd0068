"""A small fully connected index network with hand-written backprop and Adam.

Parameters live in one flat float64 vector; weight matrices and bias
vectors are views into it. That keeps the Adam step, checkpoints and
gradient accumulation as plain vector arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CKPT_MAGIC = "NEURWIN-CKPT v1"


def n_params(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


class MlpParams:
    """Weights of an MLP with rectifier hidden layers and a scalar linear output."""

    def __init__(self, layer_sizes, flat=None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ValueError(f"invalid layer sizes {layer_sizes!r}")
        if sizes[-1] != 1:
            raise ValueError("the index network must have a single output")
        self.layer_sizes = tuple(sizes)
        total = n_params(sizes)
        if flat is None:
            flat = np.zeros(total)
        flat = np.array(flat, dtype=np.float64)
        if flat.shape != (total,):
            raise ValueError(f"expected {total} parameters for {sizes}, got shape {flat.shape}")
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        i = 0
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.weights.append(flat[i:i + a * b].reshape(a, b))
            i += a * b
            self.biases.append(flat[i:i + b])
            i += b

    @property
    def size(self) -> int:
        return self.flat.size

    def copy(self) -> MlpParams:
        return MlpParams(self.layer_sizes, self.flat.copy())

    def __eq__(self, other):
        return (isinstance(other, MlpParams) and self.layer_sizes == other.layer_sizes
                and np.array_equal(self.flat, other.flat))

    def __repr__(self):
        return f"MlpParams(layer_sizes={self.layer_sizes}, n={self.size})"


def init_params(layer_sizes, rng: np.random.Generator) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    p = MlpParams(layer_sizes)
    for w in p.weights:
        bound = 1.0 / math.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return p


def forward(params: MlpParams, x) -> float:
    """Index estimate for one state feature vector."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape != (params.layer_sizes[0],):
        raise ValueError(f"expected input of length {params.layer_sizes[0]}, got shape {h.shape}")
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
    return float(h[0])


def forward_batch(params: MlpParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"expected inputs of shape (n, {params.layer_sizes[0]}), got {X.shape}")
    h = X
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def grad_weighted_sum(params: MlpParams, X, coef) -> np.ndarray:
    """Gradient of ``sum_i coef[i] * f(X[i])`` with respect to the flat parameters."""
    X = np.asarray(X, dtype=np.float64)
    coef = np.asarray(coef, dtype=np.float64)
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    grad = np.empty(params.size)
    g_out = coef[:, None]
    i = params.size
    for k in range(last, -1, -1):
        w = params.weights[k]
        a_in = acts[k]
        gw = a_in.T @ g_out
        gb = g_out.sum(axis=0)
        i -= gb.size
        grad[i:i + gb.size] = gb
        i -= gw.size
        grad[i:i + gw.size] = gw.ravel()
        if k > 0:
            # rectifier subgradient is 0 at exactly 0
            g_out = (g_out @ w.T) * (acts[k] > 0.0)
    return grad


def log_prob_coef(f: float, lam: float, m: float, action: int) -> float:
    """d/df of ln P(action) under the gate sigmoid(m (f - lam))."""
    z = m * (f - lam)
    if z >= 0.0:
        e = math.exp(-z)
        sig, one_minus = 1.0 / (1.0 + e), e / (1.0 + e)
    else:
        e = math.exp(z)
        sig, one_minus = e / (1.0 + e), 1.0 / (1.0 + e)
    return m * one_minus if action == 1 else -m * sig


def grad_log_prob(params: MlpParams, x, lam: float, m: float, action: int) -> np.ndarray:
    """Gradient of the log-probability of ``action`` in the sigmoid-gated environment."""
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action!r}")
    if not (m > 0.0):
        raise ValueError(f"sensitivity m must be positive, got {m!r}")
    x = np.asarray(x, dtype=np.float64)
    c = log_prob_coef(forward(params, x), lam, m, action)
    return grad_weighted_sum(params, x[None, :], [c])


def log_prob(params: MlpParams, x, lam: float, m: float, action: int) -> float:
    """Numerically stable ``ln sigmoid(m (f - lam))`` (or its complement for action 0)."""
    z = m * (forward(params, x) - lam)
    if action == 0:
        z = -z
    # ln sigmoid(z) = -softplus(-z)
    return -(max(-z, 0.0) + math.log1p(math.exp(-abs(z))))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def copy(self) -> AdamState:
        return AdamState(self.lr, self.beta1, self.beta2, self.eps,
                         None if self.m is None else self.m.copy(),
                         None if self.v is None else self.v.copy(), self.t)


def adam_ascent(params: MlpParams, adam: AdamState, g, lr: float | None = None) -> MlpParams:
    """One Adam step in the ascent direction of ``g``; returns new params.

    ``adam`` is updated in place. A non-finite gradient raises before
    anything is modified.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != params.flat.shape:
        raise ValueError(f"gradient shape {g.shape} does not match {params.flat.shape}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient; parameters left unchanged")
    if adam.m is None:
        adam.m = np.zeros_like(params.flat)
        adam.v = np.zeros_like(params.flat)
    lr = adam.lr if lr is None else lr
    adam.t += 1
    adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * g
    adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * g * g
    m_hat = adam.m / (1.0 - adam.beta1 ** adam.t)
    v_hat = adam.v / (1.0 - adam.beta2 ** adam.t)
    return MlpParams(params.layer_sizes, params.flat + lr * m_hat / (np.sqrt(v_hat) + adam.eps))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    params: MlpParams
    episodes: int
    config_hash: str = field(default="", compare=False)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    lines = [CKPT_MAGIC, " ".join(str(n) for n in ckpt.params.layer_sizes), str(int(ckpt.episodes))]
    lines.extend(format(float(x), ".17g") for x in ckpt.params.flat)
    path.write_text("\n".join(lines) + "\n")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    lines = path.read_text().split("\n")
    if lines[0].strip() != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad header {lines[0]!r})")
    sizes = [int(s) for s in lines[1].split()]
    episodes = int(lines[2])
    flat = [float(s) for s in lines[3:] if s.strip()]
    return Checkpoint(MlpParams(sizes, flat), episodes)
