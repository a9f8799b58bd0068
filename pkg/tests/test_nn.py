import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neurwin.nn import (AdamState, Checkpoint, MlpParams, adam_ascent, forward, forward_batch, grad_log_prob,
                        grad_weighted_sum, init_params, load_checkpoint, log_prob, n_params, save_checkpoint)
from neurwin.rng import make_rng


def fd_grad(params, x, lam, m, a, h=1e-5):
    g = np.empty(params.size)
    for i in range(params.size):
        p = params.copy()
        p.flat[i] += h
        up = log_prob(p, x, lam, m, a)
        p.flat[i] -= 2 * h
        g[i] = (up - log_prob(p, x, lam, m, a)) / (2 * h)
    return g


@pytest.mark.parametrize("sizes,count", [((2, 16, 32, 1), 625), ((1, 16, 32, 1), 609), ((2, 48, 64, 1), 3345)])
def test_parameter_counts(sizes, count):
    assert n_params(sizes) == count
    assert init_params(sizes, make_rng(0)).size == count


def test_zero_network():
    assert forward(MlpParams((2, 16, 32, 1)), [0.3, 0.9]) == 0.0


def test_constant_network():
    p = MlpParams((2, 16, 32, 1))
    p.biases[-1][0] = 1.7
    assert forward(p, [0.3, 0.9]) == 1.7
    assert forward(p, [1.0, 0.0]) == 1.7


def test_init_deterministic_and_scaled():
    a = init_params((2, 16, 32, 1), make_rng(7, "init"))
    b = init_params((2, 16, 32, 1), make_rng(7, "init"))
    assert a == b
    assert np.all(np.abs(a.weights[1]) <= 1 / 4)
    assert all(np.all(bias == 0) for bias in a.biases)


def test_dimension_mismatch():
    p = init_params((2, 16, 32, 1), make_rng(0))
    with pytest.raises(ValueError):
        forward(p, [1.0])
    with pytest.raises(ValueError):
        forward_batch(p, np.zeros((3, 1)))


def test_batch_matches_single():
    p = init_params((2, 16, 32, 1), make_rng(1))
    X = make_rng(2).random((50, 2))
    assert np.allclose(forward_batch(p, X), [forward(p, x) for x in X], atol=1e-14)


def test_sweep_stays_finite():
    p = init_params((2, 16, 32, 1), make_rng(3))
    X = np.column_stack([np.linspace(0, 1, 10_000), np.full(10_000, 0.5)])
    y = forward_batch(p, X)
    assert np.all(np.isfinite(y))
    assert np.max(np.abs(np.diff(y))) < 1e-2


def test_gradient_at_indifference():
    p = init_params((1, 16, 32, 1), make_rng(4))
    x = np.array([0.35])
    lam, m = forward(p, x), 3.0
    g1 = grad_log_prob(p, x, lam, m, 1)
    g0 = grad_log_prob(p, x, lam, m, 0)
    grad_f = grad_weighted_sum(p, x[None, :], [1.0])
    assert np.allclose(g1, m / 2 * grad_f, atol=1e-15)
    assert np.allclose(g1, -g0, atol=1e-15)


@pytest.mark.parametrize("d_in", [1, 2])
def test_finite_difference_small(d_in):
    rng = make_rng(5, "fd", d_in)
    for _ in range(10):
        p = init_params((d_in, 16, 32, 1), rng)
        p.flat += rng.normal(0, 0.1, p.size)
        x = rng.random(d_in)
        lam, m, a = rng.normal(), rng.uniform(0.5, 5), int(rng.integers(2))
        g = grad_log_prob(p, x, lam, m, a)
        fd = fd_grad(p, x, lam, m, a)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-8)


def test_saturation_finite():
    p = MlpParams((1, 2, 1))
    p.biases[-1][0] = 1e4
    for a in (0, 1):
        assert np.all(np.isfinite(grad_log_prob(p, [0.5], 0.0, 10.0, a)))
        assert math.isfinite(log_prob(p, [0.5], 0.0, 10.0, a))


class TestAdam:
    def test_zero_gradient(self):
        p = init_params((1, 4, 1), make_rng(0))
        adam = AdamState()
        q = adam_ascent(p, adam, np.zeros(p.size))
        assert q == p and adam.t == 1

    def test_first_step(self):
        p = MlpParams((1, 1), [0.0, 0.0])
        q = adam_ascent(p, AdamState(lr=1e-3), np.array([1.0, 0.0]))
        assert q.flat[0] == pytest.approx(1e-3, rel=1e-6)
        assert q.flat[1] == 0.0

    def test_non_finite(self):
        p = init_params((1, 4, 1), make_rng(0))
        adam = AdamState()
        g = np.zeros(p.size)
        g[3] = np.nan
        before = p.copy()
        with pytest.raises(FloatingPointError):
            adam_ascent(p, adam, g)
        assert p == before and adam.t == 0

    def test_deterministic(self):
        p = init_params((2, 16, 32, 1), make_rng(0))
        g = make_rng(1).normal(size=p.size)
        a, b = AdamState(), AdamState()
        assert adam_ascent(p, a, g) == adam_ascent(p, b, g)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 50_000))
def test_checkpoint_round_trip(tmp_path_factory, seed, episodes):
    p = init_params((2, 16, 32, 1), make_rng(seed))
    p.flat *= make_rng(seed, "scale").lognormal(0, 3, p.size)
    path = tmp_path_factory.mktemp("ck") / "ckpt.txt"
    save_checkpoint(Checkpoint(p, episodes), path)
    ck = load_checkpoint(path)
    assert ck.params == p and ck.episodes == episodes


def test_checkpoint_format(tmp_path):
    p = init_params((1, 16, 32, 1), make_rng(0))
    path = save_checkpoint(Checkpoint(p, 100), tmp_path / "c.txt")
    lines = path.read_text().splitlines()
    assert lines[:3] == ["NEURWIN-CKPT v1", "1 16 32 1", "100"]
    assert len(lines) == 3 + 609


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope"):
        load_checkpoint(tmp_path / "nope.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("hello\n")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
