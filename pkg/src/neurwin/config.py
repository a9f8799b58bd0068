"""Flat ``key = value`` experiment configuration files.

Blank lines and ``#`` comments are ignored. Keys are listed in
:data:`KEYS` with their types; anything else is rejected with its line
number.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


KEYS = {
    # experiment
    "env": str, "N": int, "M": int, "policy": str, "runs": int, "seed": int,
    "horizon": int, "discount": float, "baseline": str,
    # training
    "episodes": int, "lr": float, "lr_decay": float, "sigmoid_m": float, "batch_size": int,
    "checkpoint_interval": int, "hidden": _ints, "class": str, "noise_levels": _floats,
    # arm parameters
    "c": float, "penalty": float, "empty_prob": float, "z_max": int,
    "holding_cost": float, "r1": float, "r2": float,
    # oracle
    "lambda_min": float, "lambda_max": float, "lambda_step": float, "tol": float,
    "rollouts": int,
}

ARM_KEYS = {
    "deadline": ("c", "penalty", "empty_prob"),
    "recovering": ("z_max",),
    "wireless": ("holding_cost", "r1", "r2"),
}


def parse_config(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def arm_params(config: dict, env: str) -> dict:
    return {k: config[k] for k in ARM_KEYS.get(env, ()) if k in config}
