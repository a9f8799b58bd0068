"""Mini-batch REINFORCE training of an index network against its own activation cost.

Each mini-batch draws two states ``s0`` and ``s1``, freezes the activation
cost at ``lam = f(s0)`` and runs ``R`` episodes from ``s1`` in the
sigmoid-gated environment. Episodes share one exogenous-event stream
(arrivals, channel states) and differ only in their action draws. The
update is one Adam ascent step on ``sum_e (G_e - mean(G)) h_e``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Arm
from .nn import (AdamState, Checkpoint, MlpParams, adam_ascent, forward, grad_weighted_sum,
                 init_params, save_checkpoint)
from .rng import make_rng

log = logging.getLogger(__name__)

DEFAULT_M = {"deadline": 1.0, "recovering": 5.0, "wireless": 0.75}
DEFAULT_INTERVAL = {"deadline": 10, "recovering": 100, "wireless": 1000}
DEFAULT_EPISODES = {"deadline": 2000, "recovering": 30000, "wireless": 30000}


@dataclass
class TrainingConfig:
    discount: float = 0.99
    lr: float = 1e-3
    sigmoid_m: float = 1.0
    batch_size: int = 5
    horizon: int = 300
    episodes: int = 2000
    checkpoint_interval: int = 10
    hidden: tuple = (16, 32)
    seed: int = 0
    lr_decay: float = 0.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if self.episodes < 0:
            raise ValueError(f"episodes must be non-negative, got {self.episodes}")
        if self.checkpoint_interval < 1:
            raise ValueError(f"checkpoint_interval must be positive, got {self.checkpoint_interval}")
        if not self.sigmoid_m > 0.0:
            raise ValueError(f"sigmoid_m must be positive, got {self.sigmoid_m}")
        if self.lr <= 0.0 or self.lr_decay < 0.0:
            raise ValueError("lr must be positive and lr_decay non-negative")

    @classmethod
    def for_env(cls, kind: str, **overrides) -> TrainingConfig:
        kw = dict(sigmoid_m=DEFAULT_M[kind], checkpoint_interval=DEFAULT_INTERVAL[kind],
                  episodes=DEFAULT_EPISODES[kind])
        kw.update(overrides)
        return cls(**kw)

    def layer_sizes(self, state_dim: int) -> tuple:
        return (state_dim, *self.hidden, 1)

    def hash(self) -> str:
        return hashlib.sha256(repr(sorted(asdict(self).items())).encode()).hexdigest()[:12]


@dataclass
class EpisodeResult:
    G: float
    h: np.ndarray
    actions: list = field(default_factory=list)
    states: list = field(default_factory=list)
    rewards: list = field(default_factory=list)


class _IndexCache:
    """Memoized (features, f) per state for one fixed parameter vector."""

    def __init__(self, params: MlpParams, arm: Arm):
        self.params = params
        self.arm = arm
        self.memo: dict | None = {} if arm.finite else None

    def __call__(self, state):
        if self.memo is not None:
            hit = self.memo.get(state)
            if hit is not None:
                return hit
        x = self.arm.features(state)
        val = (x, forward(self.params, x))
        if self.memo is not None:
            self.memo[state] = val
        return val


def run_episode(params: MlpParams, arm: Arm, lam: float, s1, config: TrainingConfig,
                rng: np.random.Generator, cache: _IndexCache | None = None,
                trace: bool = False) -> EpisodeResult:
    """Run one sigmoid-gated episode from ``s1`` and return ``(G_e, h_e)``.

    ``h_e`` is the sum over rounds of the gradient of the log-probability
    of the sampled action. It is assembled with a single backward pass
    over the visited states, weighting each by ``d ln P(a) / d f``.
    """
    if not math.isfinite(lam):
        raise ValueError(f"activation cost must be finite, got {lam!r}")
    if cache is None:
        cache = _IndexCache(params, arm)
    m, beta, T = config.sigmoid_m, config.discount, config.horizon
    state = arm.reset(s1)
    draws = rng.random(T)
    xs, coefs = [], []
    actions, states, rewards = [], [], []
    G, disc = 0.0, 1.0
    for t in range(T):
        if arm.is_terminal(state):
            break
        x, f = cache(state)
        z = m * (f - lam)
        if z >= 0.0:
            e = math.exp(-z)
            p, q = 1.0 / (1.0 + e), e / (1.0 + e)
        else:
            e = math.exp(z)
            p, q = e / (1.0 + e), 1.0 / (1.0 + e)
        if draws[t] < p:
            a, c = 1, m * q
        else:
            a, c = 0, -m * p
        out = arm.step(a)
        G += disc * (out.reward - lam * a)
        disc *= beta
        xs.append(x)
        coefs.append(c)
        if trace:
            actions.append(a)
            states.append(state)
            rewards.append(out.reward)
        state = out.next_state
    if not math.isfinite(G):
        raise FloatingPointError(f"non-finite episode return (lam={lam}, s1={s1})")
    h = grad_weighted_sum(params, np.array(xs), coefs) if xs else np.zeros(params.size)
    return EpisodeResult(G, h, actions, states, rewards)


@dataclass
class MinibatchInfo:
    index: int
    lam: float
    s0: tuple
    s1: tuple
    returns: list
    G_bar: float
    gradient: np.ndarray


def run_minibatch(params: MlpParams, adam: AdamState, arm: Arm, config: TrainingConfig,
                  b: int = 0, trace: bool = False) -> tuple[MlpParams, MinibatchInfo]:
    """One mini-batch of training; ``b`` indexes the seeded streams."""
    pick = make_rng(config.seed, "minibatch", b)
    s0 = arm.sample_initial_state(pick)
    s1 = arm.sample_initial_state(pick)
    cache = _IndexCache(params, arm)
    lam = cache(s0)[1]
    results = []
    for e in range(config.batch_size):
        # same exogenous events for every episode of the batch
        arm.seed_exogenous(make_rng(config.seed, "exo", b))
        results.append(run_episode(params, arm, lam, s1, config,
                                   make_rng(config.seed, "action", b, e), cache, trace))
    returns = [r.G for r in results]
    g_bar = sum(returns) / len(returns)
    grad = np.zeros(params.size)
    for r in results:
        grad += (r.G - g_bar) * r.h
    lr = config.lr / (1.0 + config.lr_decay * b)
    new = adam_ascent(params, adam, grad, lr=lr)
    info = MinibatchInfo(b, lam, s0, s1, returns, g_bar, grad)
    if trace:
        info.results = results
    return new, info


def train(arm: Arm, config: TrainingConfig, out_dir=None, params: MlpParams | None = None):
    """Train an index network for ``arm``; returns the list of checkpoints.

    With ``out_dir`` set, checkpoints are written as ``ckpt_<episodes>.txt``
    and the per-mini-batch log as ``train_log.csv``.
    """
    if params is None:
        params = init_params(config.layer_sizes(arm.state_dim), make_rng(config.seed, "init"))
    adam = AdamState(lr=config.lr)
    chash = config.hash()
    checkpoints: list[Checkpoint] = []
    log_rows = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    def emit(episodes):
        ck = Checkpoint(params.copy(), episodes, chash)
        checkpoints.append(ck)
        if out_dir is not None:
            save_checkpoint(ck, out_dir / f"ckpt_{episodes}.txt")

    total, R, interval = config.episodes, config.batch_size, config.checkpoint_interval
    if total == 0:
        emit(0)
    n_batches = -(-total // R)
    next_mark = interval
    done = 0
    for b in range(n_batches):
        params, info = run_minibatch(params, adam, arm, config, b)
        done = min(total, done + R)
        log_rows.append((b, done, info.lam, info.G_bar))
        while done >= next_mark:
            emit(next_mark)
            next_mark += interval
        if b % 200 == 0:
            log.debug("minibatch %d episodes %d lambda %.4f G_bar %.4f", b, done, info.lam, info.G_bar)
    if total > 0 and (not checkpoints or checkpoints[-1].episodes != total):
        emit(total)
    if out_dir is not None:
        with open(out_dir / "train_log.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["minibatch", "episode", "lambda", "G_bar"])
            for b, ep, lam, gb in log_rows:
                w.writerow([b, ep, repr(float(lam)), repr(float(gb))])
    return checkpoints
