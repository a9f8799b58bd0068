"""N-arm top-M index-policy evaluation and experiment orchestration."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arms import ENV_KINDS, RECOVERING_CLASSES, make_arm
from .baselines import (default_qwic_candidates, lookahead_policy, QwicConfig, qwic_train,
                        size_aware_policy, top_m)
from .core import NoisyArm
from .nn import forward, load_checkpoint
from .oracle import model_from_arm, whittle_indices
from .rng import derive_seed, make_rng
from .training import TrainingConfig, train

log = logging.getLogger(__name__)

DEFAULT_BASELINE = {"deadline": "whittle-oracle", "recovering": "lookahead:d=3", "wireless": "size-aware"}


def arm_labels(env: str, N: int) -> list[str]:
    """Arm-type label of each of the ``N`` arms.

    Recovering arms are split over classes A-D as evenly as possible with
    earlier classes taking the remainder (10 arms -> 3A 3B 2C 2D); wireless
    arms are half q=0.75 then half q=0.10.
    """
    if env == "deadline":
        return ["default"] * N
    if env == "recovering":
        names = list(RECOVERING_CLASSES)
        base, extra = divmod(N, 4)
        out = []
        for k, name in enumerate(names):
            out += [name] * (base + (1 if k < extra else 0))
        return out
    if env == "wireless":
        half = N - N // 2
        return ["q75"] * half + ["q10"] * (N - half)
    raise ValueError(f"unknown env {env!r}")


@dataclass
class ExperimentConfig:
    env: str = "deadline"
    N: int = 4
    M: int = 1
    policy: str = "whittle-oracle"
    horizon: int = 300
    discount: float = 0.99
    runs: int = 50
    seed: int = 0
    arm_params: dict = field(default_factory=dict)
    labels: list | None = None

    def __post_init__(self):
        if self.env not in ENV_KINDS:
            raise ValueError(f"unknown env {self.env!r}; expected one of {', '.join(ENV_KINDS)}")
        if not 1 <= self.M <= self.N:
            raise ValueError(f"need 1 <= M <= N, got N={self.N}, M={self.M}")
        if self.runs < 1 or self.horizon < 1:
            raise ValueError("runs and horizon must be positive")
        if self.labels is None:
            self.labels = arm_labels(self.env, self.N)
        if len(self.labels) != self.N:
            raise ValueError(f"arm-type mix has {len(self.labels)} entries for N={self.N}")

    def make_arms(self):
        return [make_arm(self.env, label=None if self.env == "deadline" else lab, **self.arm_params)
                for lab in self.labels]


@dataclass
class RunRecord:
    run: int
    seed: int
    total: float
    per_arm: np.ndarray
    activations: list | None = None


@dataclass
class EvalResult:
    policy: str
    mean: float
    std: float
    records: list

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class IndexPolicy:
    """Activates the top-M arms by a per-arm index computed from that arm's state only."""

    name = "index"

    def prepare(self, arms):
        pass

    def indices(self, arms, states) -> np.ndarray:
        raise NotImplementedError

    def select(self, arms, states, M, t) -> list[int]:
        idx = np.asarray(self.indices(arms, states), dtype=np.float64)
        live = int(np.sum(idx > -math.inf))
        return top_m(idx, min(M, live))


class TablePolicy(IndexPolicy):
    """Index read from a per-type lookup table (exact Whittle or QWIC)."""

    def __init__(self, tables: dict, name: str):
        self.tables = tables
        self.name = name

    def indices(self, arms, states):
        return [self.tables[a.label][s] for a, s in zip(arms, states)]


class NetworkPolicy(IndexPolicy):
    """Index from one trained network per arm type, evaluated on each arm's own state."""

    name = "neurwin"

    def __init__(self, params_by_label: dict):
        self.params = params_by_label

    def prepare(self, arms):
        missing = {a.label for a in arms} - set(self.params)
        if missing:
            raise KeyError(f"no trained network for arm type(s) {sorted(missing)}")
        self._memo = {}

    def _index(self, arm, state):
        # one forward pass per arm so an index never depends on its neighbours
        if arm.is_terminal(state):
            return -math.inf
        if not arm.finite:
            return forward(self.params[arm.label], arm.features(state))
        key = (arm.label, state)
        val = self._memo.get(key)
        if val is None:
            val = self._memo[key] = forward(self.params[arm.label], arm.features(state))
        return val

    def indices(self, arms, states):
        return np.array([self._index(a, s) for a, s in zip(arms, states)])


class SizeAwarePolicy:
    name = "size-aware"

    def prepare(self, arms):
        if any(a.kind != "wireless" for a in arms):
            raise ValueError("size-aware policy applies to wireless arms only")
        self._params = [a.params for a in arms]

    def select(self, arms, states, M, t):
        return size_aware_policy(states, self._params, M)


class LookaheadPolicy:
    def __init__(self, d: int, beam_width: int = 64):
        self.d = d
        self.beam_width = beam_width
        self.name = f"lookahead:d={d}"

    def prepare(self, arms):
        if any(a.kind != "recovering" for a in arms):
            raise ValueError("lookahead policy applies to recovering arms only")
        self._fns = [a.params for a in arms]
        self._zmax = arms[0].params.z_max
        self._plan = []

    def select(self, arms, states, M, t):
        if M != 1:
            raise NotImplementedError("the lookahead baseline only supports M = 1")
        if t % self.d == 0 or not self._plan:
            self._plan = list(lookahead_policy(states, self._fns, self.d, self.beam_width,
                                               z_max=self._zmax).actions)
        return [self._plan.pop(0)]


def _parse_policy(spec: str) -> tuple[str, dict]:
    name, _, rest = spec.partition(":")
    opts = {}
    for part in filter(None, rest.split(",")):
        k, eq, v = part.partition("=")
        if not eq:
            raise ValueError(f"malformed policy option {part!r} in {spec!r}")
        opts[k.strip()] = v.strip()
    return name.strip(), opts


def oracle_tables(env: str, labels, arm_params=None, beta=0.99, T=300) -> dict:
    tables = {}
    for lab in sorted(set(labels)):
        arm = make_arm(env, label=None if env == "deadline" else lab, **(arm_params or {}))
        tables[lab] = whittle_indices(model_from_arm(arm), beta=beta, T=T).as_dict()
    return tables


def load_network_params(ckpt: str, labels, episodes: int | None = None) -> dict:
    """Per-type parameters from a checkpoint file or a directory of checkpoints.

    A file is used for every arm type. A directory holds ``ckpt_<n>.txt``
    (single type) or ``<label>/ckpt_<n>.txt`` (one subdirectory per type);
    the latest checkpoint, or the one at ``episodes``, is loaded.
    """
    path = Path(ckpt)
    if path.is_file():
        p = load_checkpoint(path).params
        return {lab: p for lab in set(labels)}
    if not path.is_dir():
        raise FileNotFoundError(f"checkpoint path not found: {path}")
    out = {}
    for lab in sorted(set(labels)):
        d = path / lab if (path / lab).is_dir() else path
        out[lab] = load_checkpoint(_pick_checkpoint(d, episodes)).params
    return out


def list_checkpoints(directory) -> dict[int, Path]:
    found = {}
    for p in Path(directory).glob("ckpt_*.txt"):
        m = re.fullmatch(r"ckpt_(\d+)\.txt", p.name)
        if m:
            found[int(m.group(1))] = p
    return dict(sorted(found.items()))


def _pick_checkpoint(directory, episodes):
    found = list_checkpoints(directory)
    if not found:
        raise FileNotFoundError(f"no checkpoints (ckpt_<n>.txt) in {directory}")
    if episodes is None:
        return found[max(found)]
    if episodes not in found:
        raise FileNotFoundError(f"no checkpoint for {episodes} episodes in {directory}")
    return found[episodes]


def build_policy(config: ExperimentConfig, spec: str | None = None):
    spec = spec or config.policy
    name, opts = _parse_policy(spec)
    if name == "whittle-oracle":
        if config.env == "wireless":
            raise ValueError("no exact Whittle index for the wireless arm; use size-aware")
        return TablePolicy(oracle_tables(config.env, config.labels, config.arm_params,
                                         config.discount, config.horizon), "whittle-oracle")
    if name == "size-aware":
        return SizeAwarePolicy()
    if name in ("lookahead", "greedy"):
        d = 1 if name == "greedy" else int(opts.get("d", 20))
        return LookaheadPolicy(d, int(opts.get("beam", 64)))
    if name == "qwic":
        qcfg = QwicConfig(episodes=int(opts.get("episodes", 1000)), lr=float(opts.get("lr", 1e-3)),
                          discount=config.discount, horizon=config.horizon, seed=config.seed)
        tables = {}
        for lab in sorted(set(config.labels)):
            arm = make_arm(config.env, label=None if config.env == "deadline" else lab, **config.arm_params)
            cands = default_qwic_candidates(whittle_indices(model_from_arm(arm), beta=config.discount))
            tables[lab], _ = qwic_train(arm, cands, qcfg)
        return TablePolicy(tables, "qwic")
    if name == "neurwin":
        if "ckpt" not in opts:
            raise ValueError("neurwin policy needs ckpt=PATH")
        episodes = int(opts["episodes"]) if "episodes" in opts else None
        return NetworkPolicy(load_network_params(opts["ckpt"], config.labels, episodes))
    raise ValueError(f"unknown policy {spec!r}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def initial_states(arms, env: str, rng) -> list:
    if env == "deadline":
        return [(0, 0)] * len(arms)
    if env == "recovering":
        return [(1,)] * len(arms)
    return [a.sample_initial_state(rng) for a in arms]


def run_once(config: ExperimentConfig, policy, run: int, record_actions: bool = False) -> RunRecord:
    arms = config.make_arms()
    seed = derive_seed(config.seed, "run", run)
    states = [a.reset(s) for a, s in zip(arms, initial_states(arms, config.env, make_rng(seed, "init")))]
    for i, a in enumerate(arms):
        a.seed_exogenous(make_rng(seed, "arm", i))
    policy.prepare(arms)
    per_arm = np.zeros(len(arms))
    disc = 1.0
    acts = [] if record_actions else None
    for t in range(config.horizon):
        if config.env == "wireless" and all(a.is_terminal(s) for a, s in zip(arms, states)):
            break
        chosen = set(policy.select(arms, states, config.M, t))
        if len(chosen) > config.M:
            raise RuntimeError(f"policy activated {len(chosen)} > M={config.M} arms")
        if acts is not None:
            acts.append(sorted(chosen))
        for i, a in enumerate(arms):
            out = a.step(1 if i in chosen else 0)
            per_arm[i] += disc * out.reward
            states[i] = out.next_state
        disc *= config.discount
    return RunRecord(run, seed, float(per_arm.sum()), per_arm, acts)


def evaluate_policy(config: ExperimentConfig, policy=None, record_actions: bool = False) -> EvalResult:
    """Average total discounted reward of a top-M index policy over seeded runs."""
    if policy is None or isinstance(policy, str):
        policy = build_policy(config, policy)
    records = [run_once(config, policy, r, record_actions) for r in range(config.runs)]
    totals = np.array([r.total for r in records])
    std = float(totals.std(ddof=1)) if len(totals) > 1 else 0.0
    return EvalResult(getattr(policy, "name", str(policy)), float(totals.mean()), std, records)


# ---------------------------------------------------------------------------
# training helpers, curves and noise sweeps
# ---------------------------------------------------------------------------


def train_models(env: str, labels, train_config: TrainingConfig, out_dir=None, noise_level: float = 0.0,
                 arm_params=None) -> dict:
    """Train one network per arm type; returns ``{label: [checkpoints]}``.

    Checkpoints go to ``out_dir/<label>/`` when ``out_dir`` is set. With a
    positive ``noise_level`` each type trains on a misspecified simulator.
    """
    out = {}
    for lab in sorted(set(labels)):
        arm = make_arm(env, label=None if env == "deadline" else lab, **(arm_params or {}))
        if noise_level > 0.0:
            arm = NoisyArm(arm, noise_level, seed=derive_seed(train_config.seed, "noise", lab))
        d = None if out_dir is None else Path(out_dir) / lab
        out[lab] = train(arm, train_config, d)
    return out


def learning_curve(config: ExperimentConfig, checkpoint_dir, out_csv=None, plot=None,
                   baseline: str | None = None) -> list[tuple]:
    """Evaluate every checkpoint with the same seeds; rows of (episodes, mean, std)."""
    checkpoint_dir = Path(checkpoint_dir)
    labels = sorted(set(config.labels))
    per_label = {}
    for lab in labels:
        d = checkpoint_dir / lab if (checkpoint_dir / lab).is_dir() else checkpoint_dir
        per_label[lab] = list_checkpoints(d)
    common = sorted(set.intersection(*(set(v) for v in per_label.values())))
    if not common:
        raise FileNotFoundError(f"no checkpoints found under {checkpoint_dir}")
    rows = []
    for ep in common:
        params = {lab: load_checkpoint(per_label[lab][ep]).params for lab in labels}
        res = evaluate_policy(config, NetworkPolicy(params))
        rows.append((ep, res.mean, res.std))
    if out_csv is not None:
        write_csv(out_csv, ["episodes_trained", "mean_reward", "std"], rows)
    if plot is not None:
        ref = None
        spec = baseline if baseline is not None else DEFAULT_BASELINE[config.env]
        if spec:
            ref = evaluate_policy(config, spec)
        plot_curve(rows, plot, ref, config)
    return rows


def noisy_sweep(config: ExperimentConfig, train_config: TrainingConfig, noise_levels,
                out_csv=None, model_dir=None) -> list[tuple]:
    """Train on simulators with multiplicative reward noise, evaluate on the true arms."""
    levels = [float(x) for x in noise_levels]
    if not levels:
        raise ValueError("noise_levels must not be empty")
    if any(x < 0 for x in levels):
        raise ValueError("noise levels must be non-negative")
    rows = []
    for level in levels:
        sub = None if model_dir is None else Path(model_dir) / f"noise_{level:g}"
        models = train_models(config.env, config.labels, train_config, sub, level, config.arm_params)
        params = {lab: cks[-1].params for lab, cks in models.items()}
        res = evaluate_policy(config, NetworkPolicy(params))
        rows.append((level, res.mean, res.std))
    if out_csv is not None:
        write_csv(out_csv, ["noise_level", "mean_reward", "std"], rows)
    return rows


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    tmp.replace(path)
    return path


def plot_curve(rows, path, reference=None, config=None):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "neurwin"
    ep = np.array([r[0] for r in rows], dtype=float)
    mean = np.array([r[1] for r in rows])
    std = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ep, mean, label="NeurWIN")
    ax.fill_between(ep, mean - std, mean + std, alpha=0.25)
    if reference is not None:
        ax.axhline(reference.mean, color="k", ls="--", label=reference.policy)
    ax.set_xlabel("training episodes")
    ax.set_ylabel("total discounted reward")
    if config is not None:
        ax.set_title(f"{config.env} (N={config.N}, M={config.M})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    return path
