"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (shown in the pytest terminal
summary) with the measured value next to its pinned tolerance. Criteria 4-7
train networks and take minutes; they carry the ``slow`` marker.
"""

import filecmp
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import kendalltau

from neurwin.arms import DeadlineArm, RecoveringParams, make_arm
from neurwin.cli import main as cli_main
from neurwin.harness import ExperimentConfig, NetworkPolicy, evaluate_policy, noisy_sweep, train_models
from neurwin.nn import forward, grad_log_prob, init_params, log_prob
from neurwin.oracle import (deadline_model, ds_curves, lambda_grid, recovering_model, strong_indexability_check,
                            whittle_indices)
from neurwin.rng import make_rng
from neurwin.training import TrainingConfig, train

# pinned tolerances
FD_DRAWS = 100
FD_STEP = 1e-5
FD_REL_TOL = 1e-5
ROOT_TOL = 1e-4
BISECTION_TOL = 1e-6
EMPTY_INDEX_TOL = 1e-6
DEADLINE_GAP = 0.05          # NeurWIN >= 95% of the exact-index policy
DEADLINE_SEEDS_NEEDED = 2
KENDALL_MIN = 0.9
LOOKAHEAD_GAP = 0.05
WIRELESS_GAP = 0.05
NOISE_GAP = 0.10
RUNS = 50
SEEDS = (0, 1, 2)


def rel_shortfall(value, reference):
    """How far ``value`` falls short of ``reference``, relative to its magnitude (<= 0 means at least as good)."""
    return (reference - value) / abs(reference)


# ---------------------------------------------------------------------------
# 1. gradient check
# ---------------------------------------------------------------------------


def _fd(params, x, lam, m, a):
    g = np.empty(params.size)
    for i in range(params.size):
        p = params.copy()
        p.flat[i] += FD_STEP
        up = log_prob(p, x, lam, m, a)
        p.flat[i] -= 2 * FD_STEP
        g[i] = (up - log_prob(p, x, lam, m, a)) / (2 * FD_STEP)
    return g


def test_criterion_1_gradient(acceptance_report):
    worst = 0.0
    for d_in in (1, 2):
        rng = make_rng(2024, "acceptance-fd", d_in)
        for _ in range(FD_DRAWS):
            p = init_params((d_in, 16, 32, 1), rng)
            p.flat += rng.normal(0.0, 0.1, p.size)
            x = rng.random(d_in)
            f = forward(p, x)
            lam = f + rng.normal(0.0, 1.0)
            m = float(rng.choice([0.75, 1.0, 5.0]))
            a = int(rng.integers(2))
            g = grad_log_prob(p, x, lam, m, a)
            fd = _fd(p, x, lam, m, a)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    ok = worst <= FD_REL_TOL
    acceptance_report(1, ok, f"max relative error {worst:.2e} over {2 * FD_DRAWS} draws (tol {FD_REL_TOL:g})")
    assert ok


# ---------------------------------------------------------------------------
# 2-3. oracle
# ---------------------------------------------------------------------------


def test_criterion_2_strong_indexability(acceptance_report):
    results = {"deadline": strong_indexability_check(deadline_model(), lambda_grid(-1.0, 2.0, 0.05), 0.99, 300)}
    for c in "ABCD":
        results[c] = strong_indexability_check(recovering_model(RecoveringParams.for_class(c)),
                                               lambda_grid(0.0, 12.0, 0.1), 0.99, 300)
    ok = all(r.passed for r in results.values())
    detail = ", ".join(f"{k}: {len(r.states)} states {len(r.violations)} violations" for k, r in results.items())
    acceptance_report(2, ok, detail)
    assert ok


def test_criterion_3_oracle_roots(acceptance_report):
    worst, worst_empty = 0.0, 0.0
    models = [deadline_model()] + [recovering_model(RecoveringParams.for_class(c)) for c in "ABCD"]
    for model in models:
        table = whittle_indices(model, 0.99, BISECTION_TOL, 300)
        d = np.diag(ds_curves(model, table.index))
        worst = max(worst, float(np.max(np.abs(d))))
        if model.kind == "deadline":
            empty = [w for s, w in zip(table.states, table.index) if s[1] == 0]
            worst_empty = max(abs(w) for w in empty)
    ok = worst <= ROOT_TOL and worst_empty <= EMPTY_INDEX_TOL
    acceptance_report(3, ok, f"max |D_s(W(s))| {worst:.2e} (tol {ROOT_TOL:g}); "
                             f"max |W| at empty spots {worst_empty:.2e} (tol {EMPTY_INDEX_TOL:g})")
    assert ok


# ---------------------------------------------------------------------------
# 4. deadline learning
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_deadline(acceptance_report):
    cfg = ExperimentConfig(env="deadline", N=4, M=1, runs=RUNS)
    oracle = evaluate_policy(cfg, "whittle-oracle").mean
    scores = []
    for seed in SEEDS:
        ck = train(DeadlineArm(), TrainingConfig.for_env("deadline", seed=seed))[-1]
        assert ck.episodes == 2000
        scores.append(evaluate_policy(cfg, NetworkPolicy({"default": ck.params})).mean)
    gaps = [rel_shortfall(s, oracle) for s in scores]
    passed = sum(g <= DEADLINE_GAP for g in gaps)
    ok = passed >= DEADLINE_SEEDS_NEEDED
    acceptance_report(4, ok, f"oracle {oracle:.3f}; NeurWIN " + ", ".join(f"{s:.3f}" for s in scores)
                      + f"; shortfall " + ", ".join(f"{g:+.3f}" for g in gaps)
                      + f" (tol {DEADLINE_GAP}, need {DEADLINE_SEEDS_NEEDED}/3)")
    assert ok


# ---------------------------------------------------------------------------
# 5. recovering index fidelity
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_recovering(acceptance_report):
    cfg = ExperimentConfig(env="recovering", N=10, M=1, runs=RUNS)
    greedy = evaluate_policy(cfg, "greedy").mean
    look3 = evaluate_policy(cfg, "lookahead:d=3").mean
    oracle = {c: whittle_indices(recovering_model(RecoveringParams.for_class(c))).index for c in "ABCD"}
    z = np.arange(1, 21)[:, None] / 20.0
    tried = []
    ok = False
    for seed in SEEDS:
        models = train_models("recovering", list("ABCD"), TrainingConfig.for_env("recovering", seed=seed))
        params = {c: cks[-1].params for c, cks in models.items()}
        taus = {c: kendalltau([forward(params[c], x) for x in z], oracle[c])[0] for c in "ABCD"}
        reward = evaluate_policy(cfg, NetworkPolicy(params)).mean
        seed_ok = (min(taus.values()) >= KENDALL_MIN and reward >= greedy
                   and rel_shortfall(reward, look3) <= LOOKAHEAD_GAP)
        tried.append(f"seed {seed}: tau " + "/".join(f"{taus[c]:.3f}" for c in "ABCD") + f", reward {reward:.2f}")
        if seed_ok:
            ok = True
            break
    acceptance_report(5, ok, f"greedy {greedy:.2f}, lookahead d=3 {look3:.2f}; " + "; ".join(tried)
                      + f" (tau >= {KENDALL_MIN}, >= greedy, shortfall vs d=3 <= {LOOKAHEAD_GAP})")
    assert ok


# ---------------------------------------------------------------------------
# 6. wireless parity
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_wireless(acceptance_report):
    cfg = ExperimentConfig(env="wireless", N=4, M=1, runs=RUNS)
    ref = evaluate_policy(cfg, "size-aware").mean
    tried = []
    ok = False
    for seed in SEEDS:
        models = train_models("wireless", ["q75", "q10"], TrainingConfig.for_env("wireless", seed=seed))
        params = {lab: cks[-1].params for lab, cks in models.items()}
        reward = evaluate_policy(cfg, NetworkPolicy(params)).mean
        gap = abs(reward - ref) / abs(ref)
        tried.append(f"seed {seed}: {reward:.3f} (gap {gap:.3f})")
        if gap <= WIRELESS_GAP:
            ok = True
            break
    acceptance_report(6, ok, f"size-aware {ref:.3f}; " + "; ".join(tried) + f" (tol {WIRELESS_GAP})")
    assert ok


# ---------------------------------------------------------------------------
# 7. noise robustness
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_noise(acceptance_report):
    tcfg = TrainingConfig.for_env("deadline", seed=0)
    parts, ok = [], True
    for n, m in ((4, 1), (100, 25)):
        rows = noisy_sweep(ExperimentConfig(env="deadline", N=n, M=m, runs=RUNS), tcfg, [0.0, 0.4])
        clean, noisy = rows[0][1], rows[1][1]
        gap = abs(noisy - clean) / abs(clean)
        ok &= gap <= NOISE_GAP
        parts.append(f"({n},{m}) level 0: {clean:.3f}, level 0.4: {noisy:.3f}, gap {gap:.3f}")
    acceptance_report(7, ok, "; ".join(parts) + f" (tol {NOISE_GAP})")
    assert ok


# ---------------------------------------------------------------------------
# 8. determinism of the CLI
# ---------------------------------------------------------------------------

CLI_RUNS = [
    ["train", "--env", "deadline", "--episodes", "40"],
    ["train", "--env", "recovering", "--episodes", "20", "--interval", "10"],
    ["evaluate", "--env", "deadline", "--runs", "5"],
    ["evaluate", "--env", "wireless", "--policy", "size-aware", "--runs", "5"],
    ["evaluate", "--env", "recovering", "--N", "10", "--policy", "lookahead:d=3", "--runs", "2"],
    ["oracle", "--env", "deadline"],
    ["oracle", "--env", "recovering"],
    ["oracle", "--env", "wireless", "--rollouts", "4", "--lambda-step", "0.5"],
    ["indexability", "--env", "deadline"],
    ["indexability", "--env", "recovering"],
    ["noisy", "--env", "deadline", "--episodes", "20", "--levels", "0,0.4", "--runs", "5"],
]


def _run_all(root: Path, ckpt: Path):
    for k, argv in enumerate(CLI_RUNS):
        assert cli_main(argv + ["--seed", "7", "--out", str(root / str(k))]) == 0
    assert cli_main(["curve", "--env", "deadline", "--ckpt", str(ckpt), "--runs", "5", "--seed", "7",
                     "--out", str(root / "curve")]) == 0


def test_criterion_8_determinism(acceptance_report, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run_all(a, a / "0")
    _run_all(b, a / "0")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.suffix in (".csv", ".svg", ".txt"))
    differing = [str(f) for f in files if not filecmp.cmp(a / f, b / f, shallow=False)]
    csvs = sum(f.suffix == ".csv" for f in files)
    ok = not differing and csvs > 0
    acceptance_report(8, ok, f"{len(CLI_RUNS) + 1} subcommand runs, {csvs} CSVs compared byte for byte, "
                             f"{len(differing)} differ" + (f": {differing[:5]}" if differing else ""))
    assert ok
