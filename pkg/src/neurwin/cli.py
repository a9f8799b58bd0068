"""Command line entry point.

Subcommands: ``train``, ``evaluate``, ``curve``, ``oracle``,
``indexability`` and ``noisy``. Settings come from ``--config`` (flat
``key = value`` file) and are overridden by explicit flags. Outputs go under
``--out``. Exit status: 0 on success, 1 on usage or configuration errors,
2 on runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .arms import ENV_KINDS, RECOVERING_CLASSES, make_arm
from .baselines import size_aware_index
from .config import ConfigError, arm_params, load_config
from .harness import (ExperimentConfig, evaluate_policy, learning_curve, noisy_sweep,
                      train_models, write_csv)
from .oracle import (ds_curves, lambda_grid, mc_ds_curve, model_from_arm, strong_indexability_check,
                     whittle_indices)
from .rng import make_rng
from .training import TrainingConfig, train

log = logging.getLogger("neurwin")

DEFAULT_GRID = {"deadline": (-1.0, 2.0, 0.05), "recovering": (0.0, 12.0, 0.1), "wireless": (0.0, 2.0, 0.1)}
STATE_COLUMNS = {"deadline": ["D", "B"], "recovering": ["z"], "wireless": ["y", "v"]}
DEFAULT_NOISE_LEVELS = [0.0, 0.1, 0.2, 0.3, 0.4]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--env", choices=ENV_KINDS)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    exp = _Parser(add_help=False)
    exp.add_argument("--N", type=int)
    exp.add_argument("--M", type=int)
    exp.add_argument("--runs", type=int)
    exp.add_argument("--horizon", type=int)

    trn = _Parser(add_help=False)
    trn.add_argument("--episodes", type=int)
    trn.add_argument("--interval", type=int, dest="checkpoint_interval")
    trn.add_argument("--lr", type=float)
    trn.add_argument("--sigmoid-m", type=float, dest="sigmoid_m")
    trn.add_argument("--batch-size", type=int, dest="batch_size")

    p = _Parser(prog="neurwin", description="Neural Whittle index training and restless-bandit experiments")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", parents=[common, trn], help="train index networks")
    t.add_argument("--class", dest="label", help="arm type: recovering class A-D or wireless q75/q10")
    t.add_argument("--noise", type=float, default=0.0, help="simulator reward noise level")

    e = sub.add_parser("evaluate", parents=[common, exp], help="evaluate a policy over seeded runs")
    e.add_argument("--policy", help="whittle-oracle | size-aware | greedy | lookahead:d=20 | qwic | neurwin:ckpt=PATH")

    c = sub.add_parser("curve", parents=[common, exp], help="learning curve over saved checkpoints")
    c.add_argument("--ckpt", required=True, help="checkpoint directory")
    c.add_argument("--baseline", help="reference policy for the plot ('' to skip)")

    for name, helptext in (("oracle", "exact Whittle index tables and D_s curves"),
                           ("indexability", "strong-indexability check on a cost grid")):
        o = sub.add_parser(name, parents=[common], help=helptext)
        o.add_argument("--class", dest="label")
        o.add_argument("--lambda-min", type=float, dest="lambda_min")
        o.add_argument("--lambda-max", type=float, dest="lambda_max")
        o.add_argument("--lambda-step", type=float, dest="lambda_step")
        o.add_argument("--rollouts", type=int)

    n = sub.add_parser("noisy", parents=[common, exp, trn], help="train on noisy simulators, evaluate on true arms")
    n.add_argument("--levels", help="comma-separated noise levels")
    return p


def _settings(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "command", "out", "verbose") or value is None:
            continue
        if key == "label":
            cfg["class"] = value
        elif key == "levels":
            cfg["noise_levels"] = [float(x) for x in value.split(",") if x.strip()]
        else:
            cfg[key] = value
    if "env" not in cfg:
        raise UsageError("no environment given (use --env or 'env = ...' in the config)")
    return cfg


def _training_config(cfg: dict) -> TrainingConfig:
    keys = ("discount", "lr", "lr_decay", "sigmoid_m", "batch_size", "horizon", "episodes",
            "checkpoint_interval", "hidden", "seed")
    return TrainingConfig.for_env(cfg["env"], **{k: cfg[k] for k in keys if k in cfg})


def _experiment_config(cfg: dict, policy_default: str = "whittle-oracle") -> ExperimentConfig:
    keys = ("N", "M", "runs", "seed", "horizon", "discount")
    return ExperimentConfig(env=cfg["env"], policy=cfg.get("policy", policy_default),
                            arm_params=arm_params(cfg, cfg["env"]), **{k: cfg[k] for k in keys if k in cfg})


def _labels(cfg: dict) -> list[str]:
    env = cfg["env"]
    if "class" in cfg:
        return [cfg["class"]]
    if env == "deadline":
        return ["default"]
    if env == "recovering":
        return list(RECOVERING_CLASSES)
    return ["q75", "q10"]


def _arm(cfg, label):
    return make_arm(cfg["env"], label=None if cfg["env"] == "deadline" else label, **arm_params(cfg, cfg["env"]))


# ---------------------------------------------------------------------------


def cmd_train(cfg, out: Path, args) -> None:
    tcfg = _training_config(cfg)
    if "class" in cfg or cfg["env"] == "deadline":
        from .core import NoisyArm
        from .rng import derive_seed

        label = _labels(cfg)[0]
        arm = _arm(cfg, label)
        if args.noise > 0:
            arm = NoisyArm(arm, args.noise, seed=derive_seed(tcfg.seed, "noise", label))
        cks = train(arm, tcfg, out)
        print(f"{label}: {len(cks)} checkpoints in {out}")
        return
    models = train_models(cfg["env"], _labels(cfg), tcfg, out, args.noise, arm_params(cfg, cfg["env"]))
    for lab, cks in models.items():
        print(f"{lab}: {len(cks)} checkpoints in {out / lab}")


def cmd_evaluate(cfg, out: Path, args) -> None:
    ecfg = _experiment_config(cfg)
    res = evaluate_policy(ecfg)
    write_csv(out / "runs.csv", ["run", "seed", "total_discounted_reward"],
              [(r.run, r.seed, r.total) for r in res.records])
    write_csv(out / "summary.csv", ["policy", "N", "M", "runs", "mean_reward", "std"],
              [(ecfg.policy, ecfg.N, ecfg.M, ecfg.runs, res.mean, res.std)])
    print(f"{ecfg.policy} on {ecfg.env} (N={ecfg.N}, M={ecfg.M}, {ecfg.runs} runs): "
          f"mean {res.mean:.4f} std {res.std:.4f}")


def cmd_curve(cfg, out: Path, args) -> None:
    ecfg = _experiment_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    rows = learning_curve(ecfg, args.ckpt, out / "curve.csv", out / "curve.svg", cfg.get("baseline"))
    print(f"{len(rows)} checkpoints evaluated -> {out / 'curve.csv'}")


def _grid(cfg):
    lo, hi, step = DEFAULT_GRID[cfg["env"]]
    return lambda_grid(cfg.get("lambda_min", lo), cfg.get("lambda_max", hi), cfg.get("lambda_step", step))


def _wireless_curves(cfg, grid):
    """Monte-Carlo D_s curves for five random wireless states per type."""

    rollouts = cfg.get("rollouts", 50)
    seed = cfg.get("seed", 0)
    rows, curves = [], []
    for label in _labels(cfg):
        arm = _arm(cfg, label)
        rng = make_rng(seed, "ds-states", label)
        for _ in range(5):
            s = arm.sample_initial_state(rng)

            def policy_for(lam, params=arm.params):
                return lambda state, t: 1 if size_aware_index(state, params) >= lam else 0

            curve = mc_ds_curve(arm, s, grid, rollouts=rollouts, seed=seed, policy_for=policy_for)
            curves.append((label, curve))
            rows += [(label, s[0], s[1], lam, d) for lam, d in zip(curve.lambdas, curve.values)]
    return rows, curves


def cmd_oracle(cfg, out: Path, args) -> None:
    grid = _grid(cfg)
    env = cfg["env"]
    cols = STATE_COLUMNS[env]
    if env == "wireless":
        rows, _ = _wireless_curves(cfg, grid)
        write_csv(out / "ds_curves.csv", ["type", *cols, "lambda", "d_s"], rows)
        print(f"wireless has no exact index table; Monte-Carlo D_s curves -> {out / 'ds_curves.csv'}")
        return
    for label in _labels(cfg):
        model = model_from_arm(_arm(cfg, label))
        table = whittle_indices(model, cfg.get("discount", 0.99), cfg.get("tol", 1e-6), cfg.get("horizon", 300))
        suffix = "" if env == "deadline" else f"_{label}"
        write_csv(out / f"index_table{suffix}.csv", [*cols, "whittle_index"],
                  [(*s, w) for s, w in zip(table.states, table.index)])
        curves = ds_curves(model, grid, cfg.get("discount", 0.99), cfg.get("horizon", 300))
        write_csv(out / f"ds_curves{suffix}.csv", [*cols, "lambda", "d_s"],
                  [(*s, lam, d) for s, row in zip(model.states, curves) for lam, d in zip(grid, row)])
        print(f"{env} {label}: {len(table.states)} states, residual {table.residual:.2e} -> {out}")


def cmd_indexability(cfg, out: Path, args) -> None:
    grid = _grid(cfg)
    env = cfg["env"]
    cols = STATE_COLUMNS[env]
    if env == "wireless":
        rows, curves = _wireless_curves(cfg, grid)
        write_csv(out / "ds_curves.csv", ["type", *cols, "lambda", "d_s"], rows)
        bad = sum(int(np.any(np.diff(c.values) >= 0)) for _, c in curves)
        print(f"{'PASS' if bad == 0 else 'FAIL'}: {len(curves)} sampled wireless states, {bad} curves not "
              f"strictly decreasing (Monte-Carlo estimate with size-aware continuation, not a certificate)")
        return
    for label in _labels(cfg):
        model = model_from_arm(_arm(cfg, label))
        rep = strong_indexability_check(model, grid, cfg.get("discount", 0.99), cfg.get("horizon", 300))
        suffix = "" if env == "deadline" else f"_{label}"
        write_csv(out / f"violations{suffix}.csv", [*cols, "lambda_k", "lambda_k1", "d_k", "d_k1"],
                  [(*s, l1, l2, d1, d2) for s, l1, l2, d1, d2 in rep.violations])
        tag = "" if env == "deadline" else f" class {label}"
        print(f"{env}{tag}: {rep.summary()}")


def cmd_noisy(cfg, out: Path, args) -> None:
    levels = cfg.get("noise_levels", DEFAULT_NOISE_LEVELS)
    ecfg = _experiment_config(cfg, policy_default="neurwin")
    rows = noisy_sweep(ecfg, _training_config(cfg), levels, out / "noisy.csv", out / "models")
    for level, mean, std in rows:
        print(f"noise {level:g}: mean {mean:.4f} std {std:.4f}")


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "curve": cmd_curve, "oracle": cmd_oracle,
            "indexability": cmd_indexability, "noisy": cmd_noisy}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _settings(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except (ValueError, KeyError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
