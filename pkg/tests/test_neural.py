"""Network forward/backward tests, anchored by a finite-difference oracle."""

import math

import numpy as np
import pytest

from oracles import finite_difference_grads, max_relative_error

from vwrrl import neural
from vwrrl.neural import (
    PARAM_FIELDS,
    PolicyValueParams,
    TrainingDivergedError,
    apply_gradients,
    backward,
    copy_params,
    forward,
    init_params,
    load_params,
    save_params,
    zeros_like_params,
)


def zero_params(state_dim=4, num_actions=3, hidden_dim=8):
    rng = np.random.default_rng(0)
    p = init_params(state_dim, num_actions, hidden_dim, rng)
    return zeros_like_params(p)


def random_params(rng, state_dim=4, num_actions=3, hidden_dim=8):
    return init_params(state_dim, num_actions, hidden_dim, rng)


class TestForward:
    def test_zero_network_gives_uniform_policy_and_zero_values(self):
        p = zero_params(num_actions=5)
        cache = forward(p, np.ones(4))
        assert cache.probs == pytest.approx([0.2] * 5, abs=1e-15)
        assert cache.v_short == 0.0
        assert cache.v_long == 0.0

    def test_softmax_identity(self):
        p = zero_params(num_actions=2)
        p.policy_b[:] = [0.0, math.log(3.0)]
        cache = forward(p, np.zeros(4))
        assert cache.probs == pytest.approx([0.25, 0.75], rel=1e-12)

    def test_probabilities_normalized(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            p = random_params(rng)
            cache = forward(p, rng.normal(size=4))
            assert cache.probs.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(cache.probs >= 0)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(3)
        p = random_params(rng)
        state = rng.normal(size=4)
        base = forward(p, state).probs
        p.policy_b += 123.456
        shifted = forward(p, state).probs
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_dimension_mismatch_rejected(self):
        p = zero_params(state_dim=4)
        with pytest.raises(ValueError):
            forward(p, np.zeros(5))

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        p = random_params(rng)
        state = rng.normal(size=4)
        a, b = forward(p, state), forward(p, state)
        assert np.array_equal(a.probs, b.probs)
        assert a.v_short == b.v_short and a.v_long == b.v_long

    def test_head_isolation(self):
        rng = np.random.default_rng(11)
        p = random_params(rng)
        state = rng.normal(size=4)
        before = forward(p, state)
        p.value_short_w += rng.normal(size=p.value_short_w.shape)
        p.value_short_b += 0.7
        after = forward(p, state)
        assert np.array_equal(before.probs, after.probs)
        assert before.v_long == after.v_long
        assert before.v_short != after.v_short


class TestBackward:
    def test_all_zero_targets_give_zero_gradient(self):
        rng = np.random.default_rng(1)
        p = random_params(rng)
        cache = forward(p, rng.normal(size=4))
        g = backward(p, cache, 0.0, 0.0, 0.0, 0.0, action_taken=1)
        for name in PARAM_FIELDS:
            assert np.array_equal(getattr(g, name), np.zeros_like(getattr(g, name)))

    def test_entropy_gradient_vanishes_at_uniform_policy(self):
        p = zero_params(num_actions=4)
        cache = forward(p, np.zeros(4))
        g = backward(p, cache, 0.0, 0.0, 0.0, entropy_coef=0.05, action_taken=0)
        for name in PARAM_FIELDS:
            assert np.allclose(getattr(g, name), 0.0, atol=1e-14)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(10):
            dims = (int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(4, 10)))
            state_dim, num_actions, hidden = dims
            p = init_params(state_dim, num_actions, hidden, rng)
            state = rng.normal(size=state_dim)
            action = int(rng.integers(num_actions))
            advantage = float(rng.normal())
            ret_s = float(rng.normal())
            ret_l = float(rng.normal())
            coef = float(rng.uniform(0, 0.1))
            cache = forward(p, state)
            analytic = backward(p, cache, advantage, ret_s - cache.v_short,
                                ret_l - cache.v_long, coef, action)
            numeric = finite_difference_grads(p, state, action, advantage, ret_s,
                                              ret_l, coef)
            worst = max(worst, max_relative_error(analytic, numeric))
        assert worst < 1e-4

    def test_gradient_head_isolation(self):
        rng = np.random.default_rng(5)
        p = random_params(rng)
        cache = forward(p, rng.normal(size=4))
        only_policy = backward(p, cache, 1.3, 0.0, 0.0, 0.0, action_taken=2)
        assert np.allclose(only_policy.value_short_w, 0.0)
        assert np.allclose(only_policy.value_long_w, 0.0)
        assert not np.allclose(only_policy.policy_w, 0.0)
        only_short = backward(p, cache, 0.0, 0.8, 0.0, 0.0, action_taken=2)
        assert np.allclose(only_short.policy_w, 0.0)
        assert np.allclose(only_short.value_long_w, 0.0)
        assert not np.allclose(only_short.value_short_w, 0.0)

    def test_action_out_of_range_rejected(self):
        rng = np.random.default_rng(6)
        p = random_params(rng, num_actions=3)
        cache = forward(p, rng.normal(size=4))
        with pytest.raises(ValueError):
            backward(p, cache, 1.0, 0.0, 0.0, 0.0, action_taken=3)


class TestApplyGradients:
    def test_zero_gradient_leaves_params_unchanged(self):
        rng = np.random.default_rng(7)
        p = random_params(rng)
        snapshot = copy_params(p)
        apply_gradients(p, zeros_like_params(p), step_size=0.1, grad_clip=0.5)
        for name in PARAM_FIELDS:
            assert np.array_equal(getattr(p, name), getattr(snapshot, name))

    def test_zero_step_size_leaves_params_unchanged(self):
        rng = np.random.default_rng(8)
        p = random_params(rng)
        g = random_params(rng)
        snapshot = copy_params(p)
        apply_gradients(p, g, step_size=0.0, grad_clip=None)
        for name in PARAM_FIELDS:
            assert np.array_equal(getattr(p, name), getattr(snapshot, name))

    def test_global_norm_clipping(self):
        p = zero_params()
        g = zeros_like_params(p)
        g.trunk_w[0, 0] = 6.0
        g.policy_w[0, 0] = 8.0  # global norm 10
        assert neural.global_norm(g) == pytest.approx(10.0)
        apply_gradients(p, g, step_size=1.0, grad_clip=0.5)
        applied = np.sqrt(sum(float(np.sum(a * a)) for a in p.arrays()))
        assert applied == pytest.approx(0.5, abs=1e-9)

    def test_non_finite_gradient_raises_with_diagnostics(self):
        p = zero_params()
        g = zeros_like_params(p)
        g.trunk_b[0] = float("nan")
        with pytest.raises(TrainingDivergedError, match="trunk_b"):
            apply_gradients(p, g, step_size=0.1)

    def test_momentum_matches_manual_recursion(self):
        rng = np.random.default_rng(9)
        p = random_params(rng)
        manual = copy_params(p)
        velocity = zeros_like_params(p)
        g1 = random_params(rng)
        g2 = random_params(rng)
        lr, mom = 0.05, 0.9
        apply_gradients(p, g1, lr, grad_clip=None, velocity=velocity, momentum=mom)
        apply_gradients(p, g2, lr, grad_clip=None, velocity=velocity, momentum=mom)
        v = {name: np.zeros_like(getattr(manual, name)) for name in PARAM_FIELDS}
        for g in (g1, g2):
            for name in PARAM_FIELDS:
                v[name] = mom * v[name] + getattr(g, name)
                arr = getattr(manual, name)
                arr -= lr * v[name]
        for name in PARAM_FIELDS:
            assert getattr(p, name) == pytest.approx(getattr(manual, name), rel=1e-12)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(10)
        p = random_params(rng, state_dim=6, num_actions=4, hidden_dim=12)
        path = tmp_path / "params.txt"
        save_params(p, path)
        loaded = load_params(path)
        for name in PARAM_FIELDS:
            assert np.array_equal(getattr(p, name), getattr(loaded, name))
            assert getattr(loaded, name).shape == getattr(p, name).shape

    def test_rejects_non_checkpoint_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello\nworld\n")
        with pytest.raises(ValueError):
            load_params(path)

    def test_rejects_truncated_checkpoint(self, tmp_path):
        rng = np.random.default_rng(11)
        p = random_params(rng)
        path = tmp_path / "params.txt"
        save_params(p, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:3]) + "\n")
        with pytest.raises((ValueError, IndexError)):
            load_params(path)
