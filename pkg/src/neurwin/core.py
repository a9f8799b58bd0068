"""Single-arm simulator contract and the activation-cost environments.

An arm is a small mutable simulator: ``reset(state)`` places it in any
state, ``step(action)`` advances one round and returns the raw reward and
the next state. The costed environments charge ``lam`` per activation;
:func:`env_hard_step` thresholds the index at ``lam`` and
:func:`env_star_step` samples the action through a sigmoid gate so the
episode return is differentiable in the index.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .rng import hashed_normal, make_rng

State = tuple


class StepOutcome(NamedTuple):
    reward: float
    next_state: State


class CostedStepOutcome(NamedTuple):
    action: int
    net_reward: float
    next_state: State
    reward: float


def sigmoid_gate(x: float, m: float) -> float:
    """Probability ``1 / (1 + exp(-m x))`` of activating the arm."""
    if not (m > 0.0) or not math.isfinite(m):
        raise ValueError(f"sensitivity m must be positive and finite, got {m!r}")
    if not math.isfinite(x):
        raise ValueError(f"gate input must be finite, got {x!r}")
    z = m * x
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class Arm:
    """Base class for restless-arm simulators.

    Subclasses set ``kind``, ``state_dim`` and implement ``_step``,
    ``features``, ``validate`` and ``sample_initial_state``. Exogenous
    events (arrivals, channel states) consume exactly one uniform from the
    exogenous stream per round, so two arms reseeded identically see the
    same event sequence whatever actions they take.
    """

    kind = "arm"
    state_dim = 0
    finite = False

    def __init__(self, seed: int = 0):
        self.state: State | None = None
        self._exo = make_rng(seed, "exo-default")

    def seed_exogenous(self, rng) -> None:
        """Replace the exogenous-event stream (a Generator or an int seed)."""
        self._exo = rng if isinstance(rng, np.random.Generator) else make_rng(int(rng), "exo")

    def reset(self, state: State) -> State:
        self.validate(state)
        self.state = tuple(state)
        return self.state

    def step(self, action: int) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("arm has no current state; call reset() first")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action!r}")
        out = self._step(self.state, action, self._exo.random())
        self.state = out.next_state
        return out

    def is_terminal(self, state: State) -> bool:
        return False

    def state_key(self, state: State) -> tuple[int, ...]:
        """Integer key identifying ``state`` (used to hash noise factors)."""
        return tuple(int(x) for x in state)

    # subclass hooks
    def _step(self, state: State, action: int, u: float) -> StepOutcome:
        raise NotImplementedError

    def features(self, state: State) -> np.ndarray:
        raise NotImplementedError

    def validate(self, state: State) -> None:
        raise NotImplementedError

    def sample_initial_state(self, rng: np.random.Generator) -> State:
        raise NotImplementedError


def _costed(arm: Arm, action: int, lam: float) -> CostedStepOutcome:
    out = arm.step(action)
    return CostedStepOutcome(action, out.reward - lam * action, out.next_state, out.reward)


def env_hard_step(arm: Arm, index_value: float, lam: float) -> CostedStepOutcome:
    """One round of the thresholded environment; ties activate."""
    return _costed(arm, 1 if index_value >= lam else 0, lam)


def env_star_step(arm: Arm, index_value: float, lam: float, m: float,
                  rng: np.random.Generator) -> CostedStepOutcome:
    """One round of the sigmoid-gated environment.

    The arm is activated with probability ``sigmoid_gate(index_value - lam, m)``
    using one uniform from ``rng``.
    """
    p = sigmoid_gate(index_value - lam, m)
    return _costed(arm, 1 if rng.random() < p else 0, lam)


class NoisyArm(Arm):
    """Misspecified copy of an arm: rewards scaled by ``1 + G(state, action)``.

    ``G`` is Gaussian with standard deviation ``noise_level``, drawn once per
    (state, action) pair. The draw is a hash of ``(seed, state, action)``,
    so a revisited pair always gets the same factor regardless of the order
    in which states were first seen. Transitions are untouched.
    """

    def __init__(self, arm: Arm, noise_level: float, seed: int = 0):
        if not (noise_level >= 0.0) or not math.isfinite(noise_level):
            raise ValueError(f"noise_level must be a non-negative finite number, got {noise_level!r}")
        self.arm = arm
        self.noise_level = float(noise_level)
        self.noise_seed = int(seed)
        self.kind = arm.kind
        self.state_dim = arm.state_dim
        self.finite = arm.finite
        self._factors: dict | None = {} if arm.finite else None

    # delegate simulator state to the wrapped arm
    @property
    def state(self):
        return self.arm.state

    @state.setter
    def state(self, value):
        self.arm.state = value

    @property
    def _exo(self):
        return self.arm._exo

    def seed_exogenous(self, rng) -> None:
        self.arm.seed_exogenous(rng)

    def noise_factor(self, state: State, action: int) -> float:
        if self.noise_level == 0.0:
            return 1.0
        key = (*self.arm.state_key(state), int(action))
        if self._factors is not None and key in self._factors:
            return self._factors[key]
        g = 1.0 + self.noise_level * hashed_normal(self.noise_seed, key)
        if self._factors is not None:
            self._factors[key] = g
        return g

    def _step(self, state, action, u):
        out = self.arm._step(state, action, u)
        if self.noise_level == 0.0:
            return out
        return StepOutcome(out.reward * self.noise_factor(state, action), out.next_state)

    def is_terminal(self, state):
        return self.arm.is_terminal(state)

    def state_key(self, state):
        return self.arm.state_key(state)

    def features(self, state):
        return self.arm.features(state)

    def validate(self, state):
        self.arm.validate(state)

    def sample_initial_state(self, rng):
        return self.arm.sample_initial_state(rng)

    def __getattr__(self, name):
        # params and helpers of the wrapped arm (q, c, theta, ...)
        if name == "arm":
            raise AttributeError(name)
        return getattr(self.arm, name)


def noisy_wrapper(arm: Arm, noise_level: float, seed: int = 0) -> NoisyArm:
    return NoisyArm(arm, noise_level, seed)
