"""Reference scheduling policies: exact deadline index, size-aware index, lookahead, QWIC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arms import RecoveringParams, WirelessParams
from .core import Arm
from .rng import make_rng


def top_m(indices, M: int) -> list[int]:
    """Ids of the ``M`` largest indices, ties broken by lowest id."""
    idx = np.asarray(indices, dtype=np.float64)
    if M > idx.size:
        raise ValueError(f"cannot activate M={M} of N={idx.size} arms")
    if M < 0:
        raise ValueError("M must be non-negative")
    return sorted(np.argsort(-idx, kind="stable")[:M].tolist())


def deadline_whittle_policy(states, index_table, M: int) -> list[int]:
    """Activate the ``M`` spots with the highest exact Whittle index."""
    return top_m([index_table[s] for s in states], M)


# ---------------------------------------------------------------------------
# wireless: size-aware index
# ---------------------------------------------------------------------------


def secondary_index(y: float, params: WirelessParams) -> float:
    return params.holding_cost * params.r2 / y


def primary_index(params: WirelessParams) -> float:
    if params.q == 0.0:
        return math.inf
    return params.holding_cost / (params.q * (params.r2 / params.r1 - 1.0))


def size_aware_index(state, params: WirelessParams) -> float:
    """Single-arm index: secondary index on a good channel, primary otherwise; -inf once finished."""
    y, v = state
    if y <= 0.0:
        return -math.inf
    return secondary_index(y, params) if v == 1 else primary_index(params)


def size_aware_policy(states, params, M: int) -> list[int]:
    """Good-channel clients by secondary index first, then the rest by primary index.

    ``params`` is one :class:`WirelessParams` per arm. Finished clients are
    never scheduled, so fewer than ``M`` ids come back when fewer than ``M``
    clients remain.
    """
    live = [i for i, (y, _) in enumerate(states) if y > 0.0]
    good = [i for i in live if states[i][1] == 1]
    good.sort(key=lambda i: (-secondary_index(states[i][0], params[i]), i))
    chosen = good[:M]
    if len(chosen) < M:
        taken = set(chosen)
        rest = [i for i in live if i not in taken]
        rest.sort(key=lambda i: (-primary_index(params[i]), i))
        chosen += rest[:M - len(chosen)]
    return sorted(chosen)


# ---------------------------------------------------------------------------
# recovering bandits: d-step lookahead
# ---------------------------------------------------------------------------


@dataclass
class LookaheadPlan:
    actions: list
    value: float


def _reward_table(functions, z_max: int) -> np.ndarray:
    """(N, z_max + 1) table of f_i(z); column 0 unused."""
    rows = []
    for f in functions:
        if isinstance(f, RecoveringParams):
            f = f.f
        rows.append([0.0] + [float(f(z)) for z in range(1, z_max + 1)])
    return np.array(rows)


def _expand(z, val, seq, table, z_max):
    """All one-step extensions of the partial plans (lexicographic order)."""
    L, N = z.shape
    choice = np.tile(np.arange(N), L)
    z = np.repeat(z, N, axis=0)
    val = np.repeat(val, N) + table[choice, z[np.arange(L * N), choice]]
    seq = np.concatenate([np.repeat(seq, N, axis=0), choice[:, None]], axis=1)
    z = np.minimum(z + 1, z_max)
    z[np.arange(L * N), choice] = 1
    return z, val, seq


def lookahead_policy(states, functions, d: int, beam_width: int = 64, M: int = 1,
                     z_max: int = 20, exhaustive_limit: int = 10**6) -> LookaheadPlan:
    """Best length-``d`` sequence of single-arm plays (0-based arm ids).

    Exhaustive when ``N**d <= exhaustive_limit``; otherwise beam search
    over undiscounted reward. A single beam is not monotone in its width,
    so the returned plan is the best over every width ``1..beam_width``.
    Ties go to the lexicographically smallest sequence.
    """
    if M != 1:
        raise NotImplementedError("the lookahead baseline only supports M = 1")
    if d < 1 or beam_width < 1:
        raise ValueError("d and beam_width must be at least 1")
    N = len(states)
    table = _reward_table(functions, z_max)
    z0 = np.array([[s[0] if isinstance(s, tuple) else s for s in states]])
    if N ** d <= exhaustive_limit:
        return _beam(z0, table, d, math.inf, z_max)
    return _best_over_widths(z0, table, d, beam_width, z_max)


def _best_over_widths(z0, table, d, beam_width, z_max) -> LookaheadPlan:
    best = None
    for w in range(1, beam_width + 1):
        plan = _beam(z0, table, d, w, z_max)
        if best is None or plan.value > best.value or (plan.value == best.value and plan.actions < best.actions):
            best = plan
    return best


def _beam(z0, table, d, width, z_max) -> LookaheadPlan:
    z = z0.astype(np.int64)
    val = np.zeros(1)
    seq = np.zeros((1, 0), dtype=np.int64)
    for _ in range(d):
        z, val, seq = _expand(z, val, seq, table, z_max)
        if val.size > width:
            keep = np.sort(np.argsort(-val, kind="stable")[:int(width)])
            z, val, seq = z[keep], val[keep], seq[keep]
    best = int(np.argmax(val))
    return LookaheadPlan(seq[best].tolist(), float(val[best]))


def beam_lookahead(states, functions, d: int, beam_width: int, z_max: int = 20) -> LookaheadPlan:
    """Width-monotone beam search regardless of tree size."""
    table = _reward_table(functions, z_max)
    z0 = np.array([[s[0] if isinstance(s, tuple) else s for s in states]])
    return _best_over_widths(z0, table, d, beam_width, z_max)


# ---------------------------------------------------------------------------
# QWIC: tabular Q-learning over candidate costs
# ---------------------------------------------------------------------------


@dataclass
class QwicConfig:
    episodes: int = 1000
    horizon: int = 300
    lr: float = 1e-3
    discount: float = 0.99
    seed: int = 0


@dataclass
class QwicTable:
    Q: np.ndarray
    candidates: np.ndarray
    states: list
    steps: int = 0
    index: dict = field(default_factory=dict)

    def epsilon(self) -> float:
        return 1.0 if self.steps == 0 else min(1.0, 2.0 * self.steps ** -0.5)


def qwic_train(arm: Arm, candidates, config: QwicConfig | None = None) -> tuple[dict, QwicTable]:
    """Q-learn one table per candidate cost and read off the per-state index.

    Every transition updates all candidate tables (off-policy); episode
    ``e`` behaves epsilon-greedily with respect to candidate ``e mod K``
    with ``epsilon = min(1, 2 t^-1/2)``. The index of ``s`` is the
    candidate minimizing ``|Q(lam, s, 1) - Q(lam, s, 0)|`` (smaller cost on ties).
    """
    config = config or QwicConfig()
    if not arm.finite:
        raise NotImplementedError(f"QWIC needs an enumerable state space; {arm.kind} has ~2e6 states")
    cands = np.sort(np.asarray(candidates, dtype=np.float64))
    if cands.size == 0:
        raise ValueError("candidate set must be non-empty")
    states = arm.states()
    pos = {s: i for i, s in enumerate(states)}
    K, S = cands.size, len(states)
    tab = QwicTable(np.zeros((K, S, 2)), cands, states)
    Q = tab.Q
    rng = make_rng(config.seed, "qwic")
    lr, beta = config.lr, config.discount
    for e in range(config.episodes):
        k = e % K
        arm.seed_exogenous(make_rng(config.seed, "qwic-exo", e))
        state = arm.reset(arm.sample_initial_state(rng))
        s = pos[state]
        explore = rng.random(config.horizon)
        coin = rng.random(config.horizon)
        for t in range(config.horizon):
            if explore[t] < tab.epsilon():
                a = 1 if coin[t] < 0.5 else 0
            else:
                a = 1 if Q[k, s, 1] >= Q[k, s, 0] else 0
            out = arm.step(a)
            s2 = pos[out.next_state]
            target = out.reward - cands * a + beta * Q[:, s2, :].max(axis=1)
            Q[:, s, a] += lr * (target - Q[:, s, a])
            tab.steps += 1
            s = s2
    gap = np.abs(Q[:, :, 1] - Q[:, :, 0])
    best = np.argmin(gap, axis=0)
    tab.index = {st: float(cands[best[i]]) for i, st in enumerate(states)}
    return tab.index, tab


def default_qwic_candidates(index_table, n: int = 21) -> np.ndarray:
    w = np.asarray(index_table.index)
    return np.linspace(float(w.min()), float(w.max()), n)
