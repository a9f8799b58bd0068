"""The three restless arms: deadline scheduling, recovering bandits, wireless scheduling."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import Arm, StepOutcome

# ---------------------------------------------------------------------------
# Deadline scheduling (EV charging spot)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeadlineParams:
    """Charging-spot arm.

    ``c`` is the processing cost per unit charged, ``penalty`` the
    coefficient of the quadratic penalty ``penalty * b**2`` paid on unmet
    charge ``b`` when the vehicle leaves. A free spot receives no vehicle
    with probability ``empty_prob``; otherwise one of the non-empty states
    arrives uniformly.
    """

    c: float = 0.5
    penalty: float = 0.2
    d_max: int = 12
    b_max: int = 9
    empty_prob: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"processing cost c must lie in [0, 1], got {self.c}")
        if not 0.0 <= self.empty_prob <= 1.0:
            raise ValueError(f"empty_prob must lie in [0, 1], got {self.empty_prob}")
        if self.d_max < 1 or self.b_max < 1:
            raise ValueError("d_max and b_max must be positive")

    def F(self, b: int) -> float:
        return self.penalty * b * b

    def states(self) -> list[tuple[int, int]]:
        """Reachable states: the empty spot plus every (D, B) with D >= 1.

        (d_max, 0) is excluded: arrivals are the only way to reach D = d_max
        and the state D = d_max, B = 0 cannot follow from a decrement.
        """
        out = [(0, 0)]
        for d in range(1, self.d_max + 1):
            for b in range(0, self.b_max + 1):
                if d == self.d_max and b == 0:
                    continue
                out.append((d, b))
        return out

    def arrival_states(self) -> list[tuple[int, int]]:
        return self.states()[1:]

    def arrival_probs(self) -> np.ndarray:
        """Probabilities aligned with :meth:`states` (empty spot first)."""
        n = len(self.states()) - 1
        return np.array([self.empty_prob] + [(1.0 - self.empty_prob) / n] * n)


def deadline_reward(state, a: int, params: DeadlineParams) -> float:
    d, b = state
    if b > 0 and d > 1:
        return (1.0 - params.c) * a
    if b > 0 and d == 1:
        return (1.0 - params.c) * a - params.F(b - a)
    return 0.0


def deadline_step(state, a: int, params: DeadlineParams, rng) -> StepOutcome:
    """Advance a charging spot one round; ``rng`` is a Generator or a uniform in [0, 1)."""
    states = params.states()
    if tuple(state) not in states:
        raise ValueError(f"invalid deadline state {state!r}")
    u = rng if isinstance(rng, float) else rng.random()
    return _deadline_step(tuple(state), a, params, states[1:], u)


def _deadline_step(state, a, params, arrivals, u) -> StepOutcome:
    d, b = state
    r = deadline_reward(state, a, params)
    if d > 1:
        return StepOutcome(r, (d - 1, b - a if b > a else 0))
    if u < params.empty_prob:
        return StepOutcome(r, (0, 0))
    k = int((u - params.empty_prob) / (1.0 - params.empty_prob) * len(arrivals))
    return StepOutcome(r, arrivals[min(k, len(arrivals) - 1)])


class DeadlineArm(Arm):
    kind = "deadline"
    state_dim = 2
    finite = True

    def __init__(self, params: DeadlineParams | None = None, seed: int = 0):
        super().__init__(seed)
        self.params = params or DeadlineParams()
        self._states = self.params.states()
        self._state_set = frozenset(self._states)
        self._arrivals = self._states[1:]
        self.label = "default"

    def _step(self, state, action, u):
        return _deadline_step(state, action, self.params, self._arrivals, u)

    def features(self, state):
        return np.array([state[0] / self.params.d_max, state[1] / self.params.b_max])

    def validate(self, state):
        if tuple(state) not in self._state_set:
            raise ValueError(f"invalid deadline state {state!r}")

    def states(self):
        return list(self._states)

    def sample_initial_state(self, rng):
        return self._states[int(rng.integers(len(self._states)))]


# ---------------------------------------------------------------------------
# Recovering bandits
# ---------------------------------------------------------------------------

RECOVERING_CLASSES = {
    "A": (10.0, 0.2),
    "B": (8.5, 0.4),
    "C": (7.0, 0.6),
    "D": (5.5, 0.8),
}


@dataclass(frozen=True)
class RecoveringParams:
    theta0: float = 10.0
    theta1: float = 0.2
    z_max: int = 20
    label: str = "A"

    def __post_init__(self):
        if self.theta0 <= 0 or self.theta1 <= 0:
            raise ValueError("theta0 and theta1 must be positive")
        if self.z_max < 1:
            raise ValueError("z_max must be at least 1")

    @classmethod
    def for_class(cls, name: str, z_max: int = 20) -> RecoveringParams:
        try:
            t0, t1 = RECOVERING_CLASSES[name.upper()]
        except KeyError:
            raise ValueError(f"unknown recovering class {name!r}; expected one of A, B, C, D") from None
        return cls(t0, t1, z_max, name.upper())

    def f(self, z) -> float:
        return self.theta0 * (1.0 - math.exp(-self.theta1 * z))

    def initial_probs(self) -> np.ndarray:
        """P(z) proportional to 2**z on 1..z_max."""
        w = np.ldexp(1.0, np.arange(1, self.z_max + 1))
        return w / w.sum()


def recovering_step(state, a: int, params: RecoveringParams) -> StepOutcome:
    (z,) = state
    if not 1 <= z <= params.z_max:
        raise ValueError(f"invalid recovering state z={z}")
    if a == 1:
        return StepOutcome(params.f(z), (1,))
    return StepOutcome(0.0, (min(z + 1, params.z_max),))


class RecoveringArm(Arm):
    kind = "recovering"
    state_dim = 1
    finite = True

    def __init__(self, params: RecoveringParams | None = None, seed: int = 0):
        super().__init__(seed)
        self.params = params or RecoveringParams()
        self.label = self.params.label
        self._f = [0.0] + [self.params.f(z) for z in range(1, self.params.z_max + 1)]
        self._p0 = self.params.initial_probs()

    def _step(self, state, action, u):
        z = state[0]
        if action == 1:
            return StepOutcome(self._f[z], (1,))
        return StepOutcome(0.0, (z + 1 if z < self.params.z_max else z,))

    def features(self, state):
        return np.array([state[0] / self.params.z_max])

    def validate(self, state):
        if len(state) != 1 or not isinstance(state[0], (int, np.integer)) or not 1 <= state[0] <= self.params.z_max:
            raise ValueError(f"invalid recovering state {state!r}")

    def states(self):
        return [(z,) for z in range(1, self.params.z_max + 1)]

    def sample_initial_state(self, rng):
        return (int(rng.choice(self.params.z_max, p=self._p0)) + 1,)


# ---------------------------------------------------------------------------
# Wireless scheduling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WirelessParams:
    holding_cost: float = 1.0
    r1: float = 8400.0
    r2: float = 33600.0
    q: float = 0.75
    y_max: float = 1e6

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise ValueError(f"rates must satisfy 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"good-channel probability q must lie in [0, 1], got {self.q}")

    @property
    def label(self) -> str:
        return f"q{round(self.q * 100):d}"


def wireless_step(state, a: int, params: WirelessParams, rng) -> StepOutcome:
    """Advance a wireless client one round; ``rng`` is a Generator or a uniform in [0, 1)."""
    u = rng if isinstance(rng, float) else rng.random()
    y, v = state
    if y < 0 or v not in (0, 1):
        raise ValueError(f"invalid wireless state {state!r}")
    return _wireless_step(y, v, a, params, u)


def _wireless_step(y, v, a, params, u) -> StepOutcome:
    v_next = 1 if u < params.q else 0
    if y <= 0.0:
        return StepOutcome(0.0, (0.0, v_next))
    if a == 1:
        y = y - (params.r2 if v == 1 else params.r1)
        if y < 0.0:
            y = 0.0
    return StepOutcome(-params.holding_cost, (y, v_next))


class WirelessArm(Arm):
    kind = "wireless"
    state_dim = 2
    finite = False

    def __init__(self, params: WirelessParams | None = None, seed: int = 0):
        super().__init__(seed)
        self.params = params or WirelessParams()
        self.label = self.params.label

    def _step(self, state, action, u):
        return _wireless_step(state[0], state[1], action, self.params, u)

    def is_terminal(self, state):
        return state[0] <= 0.0

    def state_key(self, state):
        return (struct.unpack("<q", struct.pack("<d", float(state[0])))[0], int(state[1]))

    def features(self, state):
        return np.array([state[0] / self.params.y_max, float(state[1])])

    def validate(self, state):
        if len(state) != 2:
            raise ValueError(f"invalid wireless state {state!r}")
        y, v = state
        if not (0.0 <= y <= self.params.y_max) or v not in (0, 1):
            raise ValueError(f"invalid wireless state {state!r}")

    def sample_initial_state(self, rng):
        y = self.params.y_max * (1.0 - rng.random())
        return (y, 1 if rng.random() < self.params.q else 0)


# ---------------------------------------------------------------------------

ENV_KINDS = ("deadline", "recovering", "wireless")


def make_arm(kind: str, label: str | None = None, seed: int = 0, **params) -> Arm:
    """Build an arm of ``kind``; ``label`` selects a recovering class or wireless type."""
    if kind == "deadline":
        return DeadlineArm(DeadlineParams(**params), seed)
    if kind == "recovering":
        p = RecoveringParams.for_class(label or "A", **params)
        return RecoveringArm(p, seed)
    if kind == "wireless":
        if label is not None:
            params.setdefault("q", wireless_q(label))
        return WirelessArm(WirelessParams(**params), seed)
    raise ValueError(f"unknown env kind {kind!r}; expected one of {', '.join(ENV_KINDS)}")


def wireless_q(label: str) -> float:
    if not label.startswith("q"):
        raise ValueError(f"wireless type label must look like 'q75', got {label!r}")
    return int(label[1:]) / 100.0


def initial_state_sampler(env_kind: str, rng, **params):
    return make_arm(env_kind, **params).sample_initial_state(rng)
