"""scikit-learn style wrappers: an index is fitted to an arm and predicts per state.

``X`` passed to ``predict`` holds raw state coordinates, one row per state:
``(D, B)`` for deadline spots, ``(z,)`` for recovering arms and ``(y, v)``
for wireless clients.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .arms import make_arm
from .core import Arm, NoisyArm
from .nn import forward, load_checkpoint
from .oracle import model_from_arm, whittle_indices
from .rng import derive_seed
from .training import TrainingConfig, train


def row_to_state(arm: Arm, row) -> tuple:
    if arm.kind == "wireless":
        return (float(row[0]), int(row[1]))
    if np.any(row != np.round(row)):
        raise ValueError(f"{arm.kind} states are integer valued, got {row.tolist()}")
    return tuple(int(x) for x in row)


def check_states(X, arm: Arm) -> list[tuple]:
    """Validate a 2-D array of raw states against ``arm`` and return state tuples."""
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != arm.state_dim:
        raise ValueError(f"X has {X.shape[1]} columns, {arm.kind} states have {arm.state_dim}")
    states = [row_to_state(arm, row) for row in X]
    for s in states:
        arm.validate(s)
    return states


def _arm_for(env, arm_type):
    return make_arm(env, label=None if env == "deadline" else arm_type)


class NeurWINIndex(BaseEstimator):
    """Index network trained on a single-arm simulator.

    ``fit`` runs the mini-batch policy-gradient training; unset
    hyperparameters take the per-environment defaults (sigmoid
    sensitivity, episode budget, checkpoint interval).

    >>> est = NeurWINIndex(env="recovering", arm_type="A", episodes=50).fit()
    >>> est.predict([[1], [20]]).shape
    (2,)
    """

    def __init__(self, env="deadline", arm_type=None, hidden=(16, 32), sigmoid_m=None, lr=1e-3,
                 discount=0.99, batch_size=5, horizon=300, episodes=None, checkpoint_interval=None,
                 noise_level=0.0, seed=0):
        self.env = env
        self.arm_type = arm_type
        self.hidden = hidden
        self.sigmoid_m = sigmoid_m
        self.lr = lr
        self.discount = discount
        self.batch_size = batch_size
        self.horizon = horizon
        self.episodes = episodes
        self.checkpoint_interval = checkpoint_interval
        self.noise_level = noise_level
        self.seed = seed

    def training_config(self) -> TrainingConfig:
        kw = dict(hidden=self.hidden, lr=self.lr, discount=self.discount, batch_size=self.batch_size,
                  horizon=self.horizon, seed=self.seed)
        for key in ("sigmoid_m", "episodes", "checkpoint_interval"):
            if getattr(self, key) is not None:
                kw[key] = getattr(self, key)
        return TrainingConfig.for_env(self.env, **kw)

    def fit(self, arm: Arm | None = None, out_dir=None):
        arm = arm if arm is not None else _arm_for(self.env, self.arm_type)
        if self.noise_level > 0.0:
            arm = NoisyArm(arm, self.noise_level, seed=derive_seed(self.seed, "noise", arm.label))
        self.checkpoints_ = train(arm, self.training_config(), out_dir)
        self.params_ = self.checkpoints_[-1].params
        self.arm_ = arm
        self.n_features_in_ = arm.state_dim
        return self

    @classmethod
    def from_checkpoint(cls, path, env="deadline", arm_type=None):
        ck = load_checkpoint(path)
        est = cls(env=env, arm_type=arm_type, hidden=ck.params.layer_sizes[1:-1])
        est.arm_ = _arm_for(env, arm_type)
        est.params_ = ck.params
        est.checkpoints_ = [ck]
        est.n_features_in_ = est.arm_.state_dim
        return est

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        states = check_states(X, self.arm_)
        return np.array([forward(self.params_, self.arm_.features(s)) for s in states])


class WhittleIndexOracle(BaseEstimator):
    """Exact Whittle index table from finite-horizon dynamic programming."""

    def __init__(self, env="deadline", arm_type=None, discount=0.99, horizon=300, tol=1e-6):
        self.env = env
        self.arm_type = arm_type
        self.discount = discount
        self.horizon = horizon
        self.tol = tol

    def fit(self, arm: Arm | None = None):
        arm = arm if arm is not None else _arm_for(self.env, self.arm_type)
        self.arm_ = arm
        self.index_table_ = whittle_indices(model_from_arm(arm), self.discount, self.tol, self.horizon)
        self._lookup = self.index_table_.as_dict()
        self.n_features_in_ = arm.state_dim
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "index_table_")
        return np.array([self._lookup[s] for s in check_states(X, self.arm_)])
