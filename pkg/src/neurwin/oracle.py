"""Exact and Monte-Carlo evaluation of the single-arm activation-cost problem.

For an arm with an enumerable state space, :func:`q_values` runs T-step
backward induction on the MDP with reward ``r - lam * a`` and returns the
values of forcing each first action. Their difference ``D_s(lam)`` locates
the Whittle index (its root) and certifies strong indexability (strict
decrease in ``lam``). Everything is vectorized over a batch of costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arms import DeadlineArm, DeadlineParams, RecoveringArm, RecoveringParams, deadline_reward
from .core import Arm
from .rng import make_rng


class UnsupportedModelError(ValueError):
    pass


class IndexabilityError(RuntimeError):
    def __init__(self, state, detail=""):
        super().__init__(f"D_s(lambda) is not decreasing for state {state!r}{': ' + detail if detail else ''}")
        self.state = state


@dataclass
class ArmModel:
    """Enumerated arm: ``R[a, s]`` expected rewards and ``P[a, s, s']`` transitions."""

    states: list
    R: np.ndarray
    P: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        S = len(self.states)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.P = np.asarray(self.P, dtype=np.float64)
        if self.R.shape != (2, S) or self.P.shape != (2, S, S):
            raise ValueError(f"expected R of shape (2, {S}) and P of shape (2, {S}, {S})")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("transition rows must be non-negative and sum to 1")
        self._pos = {s: i for i, s in enumerate(self.states)}

    def index_of(self, state) -> int:
        try:
            return self._pos[tuple(state)]
        except KeyError:
            raise ValueError(f"state {state!r} is not in the model") from None

    @property
    def reward_range(self) -> tuple[float, float]:
        return float(self.R.min()), float(self.R.max())


def deadline_model(params: DeadlineParams | None = None) -> ArmModel:
    params = params or DeadlineParams()
    states = params.states()
    pos = {s: i for i, s in enumerate(states)}
    S = len(states)
    arrivals = params.arrival_probs()
    R = np.zeros((2, S))
    P = np.zeros((2, S, S))
    for i, (d, b) in enumerate(states):
        for a in (0, 1):
            R[a, i] = deadline_reward((d, b), a, params)
            if d > 1:
                P[a, i, pos[(d - 1, max(b - a, 0))]] = 1.0
            else:
                P[a, i] = arrivals
    return ArmModel(states, R, P, "deadline")


def recovering_model(params: RecoveringParams | None = None) -> ArmModel:
    params = params or RecoveringParams()
    zm = params.z_max
    states = [(z,) for z in range(1, zm + 1)]
    R = np.zeros((2, zm))
    P = np.zeros((2, zm, zm))
    for i in range(zm):
        z = i + 1
        R[1, i] = params.f(z)
        P[1, i, 0] = 1.0
        P[0, i, min(z + 1, zm) - 1] = 1.0
    return ArmModel(states, R, P, "recovering")


def model_from_arm(arm: Arm) -> ArmModel:
    if isinstance(arm, DeadlineArm):
        return deadline_model(arm.params)
    if isinstance(arm, RecoveringArm):
        return recovering_model(arm.params)
    raise UnsupportedModelError(
        f"{arm.kind} arm has no enumerable model; use mc_q_values for Monte-Carlo estimates")


# ---------------------------------------------------------------------------
# dynamic programming
# ---------------------------------------------------------------------------


def _q_batch(model: ArmModel, lams: np.ndarray, beta: float, T: int, keep_policy=False):
    """Q_act, Q_pass of shape (K, S) for K costs; optionally greedy actions per steps-to-go."""
    if not isinstance(model, ArmModel):
        raise UnsupportedModelError(f"q_values needs an enumerated ArmModel, got {type(model).__name__}")
    if T < 1:
        raise ValueError(f"horizon must be at least 1, got {T}")
    lams = np.asarray(lams, dtype=np.float64)[:, None]
    R0, R1 = model.R
    P0T, P1T = model.P[0].T, model.P[1].T
    V = np.zeros((lams.shape[0], len(model.states)))
    policy = []
    for _ in range(T - 1):
        qa = R1 - lams + beta * (V @ P1T)
        qp = R0 + beta * (V @ P0T)
        if keep_policy:
            policy.append(qa >= qp)
        V = np.maximum(qa, qp)
    qa = R1 - lams + beta * (V @ P1T)
    qp = R0 + beta * (V @ P0T)
    if keep_policy:
        policy.append(qa >= qp)
        # policy[k - 1] is the greedy action with k steps to go
        return qa, qp, policy
    return qa, qp


def q_values(model: ArmModel, lam: float, beta: float = 0.99, T: int = 300):
    """Per-state values of activating / not activating first, then acting optimally."""
    qa, qp = _q_batch(model, np.array([lam]), beta, T)
    return qa[0], qp[0]


def truncation_bound(model: ArmModel, lam: float, beta: float, T: int) -> float:
    """Bound on the gap between the T-step and infinite-horizon values."""
    r_max = float(np.max(np.abs(model.R))) + abs(lam)
    return beta ** T * r_max / (1.0 - beta)


@dataclass
class DsCurve:
    state: tuple
    lambdas: np.ndarray
    values: np.ndarray


def ds_curves(model: ArmModel, lambdas, beta: float = 0.99, T: int = 300) -> np.ndarray:
    """``D_s(lam)`` for every state (rows) and every grid cost (columns)."""
    qa, qp = _q_batch(model, np.asarray(lambdas, dtype=np.float64), beta, T)
    return (qa - qp).T


def _ds_diag(model, lams, beta, T):
    """D_s at a state-specific cost: entry s is D_s(lams[s])."""
    qa, qp = _q_batch(model, lams, beta, T)
    i = np.arange(len(lams))
    return qa[i, i] - qp[i, i]


@dataclass
class IndexTable:
    states: list
    index: np.ndarray
    iterations: int
    residual: float
    beta: float = 0.99
    horizon: int = 300
    tol: float = 1e-6

    def __getitem__(self, state):
        return float(self.index[self.states.index(tuple(state))])

    def as_dict(self) -> dict:
        return {s: float(w) for s, w in zip(self.states, self.index)}


def whittle_indices(model: ArmModel, beta: float = 0.99, tol: float = 1e-6, T: int = 300,
                    max_expand: int = 60) -> IndexTable:
    """Whittle index of every state by simultaneous bisection on ``D_s(lam) = 0``.

    The bracket starts at the reward range and doubles outward until
    ``D_s(lo) > 0 > D_s(hi)``. Every evaluated (lam, D) pair is kept; if
    any state's samples are not decreasing in lam the search stops with
    :class:`IndexabilityError`.
    """
    S = len(model.states)
    r_lo, r_hi = model.reward_range
    if r_hi - r_lo < 1.0:
        r_lo, r_hi = r_lo - 0.5, r_hi + 0.5
    lo = np.full(S, r_lo)
    hi = np.full(S, r_hi)
    samples = [[] for _ in range(S)]

    def evaluate(lams):
        d = _ds_diag(model, lams, beta, T)
        for s in range(S):
            samples[s].append((lams[s], d[s]))
        return d

    for _ in range(max_expand):
        d_lo = evaluate(lo)
        bad = d_lo <= 0
        if not bad.any():
            break
        width = hi - lo
        hi = np.where(bad, lo, hi)
        lo = np.where(bad, lo - width, lo)
    else:
        raise RuntimeError("could not find a lower bracket with D_s > 0")
    for _ in range(max_expand):
        d_hi = evaluate(hi)
        bad = d_hi >= 0
        if not bad.any():
            break
        width = hi - lo
        lo = np.where(bad, hi, lo)
        hi = np.where(bad, hi + width, hi)
    else:
        raise RuntimeError("could not find an upper bracket with D_s < 0")

    it = 0
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        d = evaluate(mid)
        pos = d > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        it += 1
    w = 0.5 * (lo + hi)
    d_w = evaluate(w)

    for s in range(S):
        pts = sorted(samples[s])
        vals = np.array([v for _, v in pts])
        if np.any(np.diff(vals) > 1e-9):
            k = int(np.argmax(np.diff(vals)))
            raise IndexabilityError(model.states[s], f"D rises between lambda={pts[k][0]:.6g} and {pts[k + 1][0]:.6g}")
    return IndexTable(list(model.states), w, it, float(np.max(np.abs(d_w))), beta, T, tol)


def whittle_index(model: ArmModel, s, beta: float = 0.99, tol: float = 1e-6, T: int = 300) -> float:
    """Whittle index of one state (bisection on the root of ``D_s``)."""
    i = model.index_of(s)
    sub = _single_state_search(model, i, beta, tol, T)
    return sub


def _single_state_search(model, i, beta, tol, T, max_expand=60):
    def D(lam):
        qa, qp = _q_batch(model, np.array([lam]), beta, T)
        return float(qa[0, i] - qp[0, i])

    samples = []

    def ev(lam):
        d = D(lam)
        samples.append((lam, d))
        return d

    lo, hi = model.reward_range
    if hi - lo < 1.0:
        lo, hi = lo - 0.5, hi + 0.5
    for _ in range(max_expand):
        if ev(lo) > 0:
            break
        lo, hi = lo - (hi - lo), lo
    else:
        raise IndexabilityError(model.states[i], "no lower bracket")
    for _ in range(max_expand):
        if ev(hi) < 0:
            break
        lo, hi = hi, hi + (hi - lo)
    else:
        raise IndexabilityError(model.states[i], "no upper bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ev(mid) > 0:
            lo = mid
        else:
            hi = mid
    pts = sorted(samples)
    for (l1, d1), (l2, d2) in zip(pts, pts[1:]):
        if d2 > d1 + 1e-9:
            raise IndexabilityError(model.states[i], f"D rises between lambda={l1:.6g} and {l2:.6g}")
    return 0.5 * (lo + hi)


@dataclass
class IndexabilityReport:
    passed: bool
    states: list
    lambdas: np.ndarray
    curves: np.ndarray
    violations: list = field(default_factory=list)
    margin: float = 1e-9

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: {len(self.states)} states, {len(self.lambdas)} costs in "
                f"[{self.lambdas[0]:g}, {self.lambdas[-1]:g}], {len(self.violations)} violations")


def strong_indexability_check(model: ArmModel, lambdas, beta: float = 0.99, T: int = 300,
                              margin: float = 1e-9) -> IndexabilityReport:
    """Check that ``D_s`` drops by more than ``margin`` between consecutive grid costs."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 1 or lambdas.size < 2 or np.any(np.diff(lambdas) <= 0):
        raise ValueError("lambda grid must be strictly increasing with at least two points")
    curves = ds_curves(model, lambdas, beta, T)
    violations = []
    for s, row in enumerate(curves):
        for k in np.flatnonzero(~(row[1:] < row[:-1] - margin)):
            violations.append((model.states[s], float(lambdas[k]), float(lambdas[k + 1]),
                               float(row[k]), float(row[k + 1])))
    return IndexabilityReport(not violations, list(model.states), lambdas, curves, violations, margin)


def lambda_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive, evenly spaced grid (rounded so that the endpoints are exact)."""
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 12)


# ---------------------------------------------------------------------------
# Monte-Carlo Q estimates
# ---------------------------------------------------------------------------


def dp_policy(model: ArmModel, lam: float, beta: float = 0.99, T: int = 300):
    """Time-dependent optimal policy ``policy(state, t)`` of the T-step cost-``lam`` problem."""
    _, _, acts = _q_batch(model, np.array([lam]), beta, T, keep_policy=True)

    def policy(state, t):
        return int(acts[T - t - 1][0, model.index_of(state)])

    return policy


def mc_q_values(arm: Arm, s, lam: float, beta: float = 0.99, horizon: int = 300,
                rollouts: int = 50, seed: int = 0, policy=None):
    """Monte-Carlo estimates of (Q_act, Q_pass) at ``s``.

    Round 0 forces the action; later rounds follow ``policy(state, t)``
    (default: never activate). Both branches of a rollout share the same
    exogenous-event stream. Returns ``(q_act, q_pass, se_act, se_pass)``.
    """
    if rollouts < 2:
        raise ValueError("rollouts must be at least 2")
    if policy is None:
        policy = lambda state, t: 0  # noqa: E731
    totals = np.zeros((2, rollouts))
    for k in range(rollouts):
        for first in (1, 0):
            arm.reset(s)
            arm.seed_exogenous(make_rng(seed, "mc", k))
            state, g, disc = tuple(s), 0.0, 1.0
            for t in range(horizon):
                if arm.is_terminal(state):
                    break
                a = first if t == 0 else policy(state, t)
                out = arm.step(a)
                g += disc * (out.reward - lam * a)
                disc *= beta
                state = out.next_state
            totals[1 - first, k] = g
    mean = totals.mean(axis=1)
    se = totals.std(axis=1, ddof=1) / math.sqrt(rollouts)
    return float(mean[0]), float(mean[1]), float(se[0]), float(se[1])


def mc_ds_curve(arm: Arm, s, lambdas, beta=0.99, horizon=300, rollouts=50, seed=0, policy_for=None):
    """Monte-Carlo ``D_s`` over a grid; ``policy_for(lam)`` builds the continuation policy."""
    vals = []
    for lam in lambdas:
        pol = policy_for(lam) if policy_for is not None else None
        qa, qp, _, _ = mc_q_values(arm, s, lam, beta, horizon, rollouts, seed, pol)
        vals.append(qa - qp)
    return DsCurve(tuple(s), np.asarray(lambdas, dtype=np.float64), np.array(vals))
