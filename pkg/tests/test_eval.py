"""Tests for exact value solutions, kernel/rollout metrics, and curve
aggregation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gendyna.numeric import Rng
from gendyna import dbn, envs, evaluation, temporal
from gendyna.evaluation import (
    KernelEstimate,
    average_curves,
    empirical_kernel,
    kernel_tv,
    kernel_tv_per_action,
    kstep_tv,
    nearest_class,
    recognition_radius,
    rollout_class_accuracy,
    solve_exact_values,
    solve_optimal,
    steps_to_return_threshold,
    total_variation,
    value_error,
)
from gendyna.rbm import CdConfig


# -------------------------------------------------------------- exact values

def test_exact_values_two_state_hand_solution():
    # symmetric 2-cycle with reward on state 1:
    # V0 = 1 + g*V1, V1 = 0 + g*V0  =>  V0 = 1/(1-g^2), V1 = g/(1-g^2)
    env = envs.build_chain_env(2, 1.0, 1, 0.9)
    v = solve_exact_values(env)
    assert v[0] == pytest.approx(1.0 / (1 - 0.81))
    assert v[1] == pytest.approx(0.9 / (1 - 0.81))


def test_exact_values_satisfy_bellman_residual():
    env = envs.build_chain_env(8, 0.7, 5, 0.9)
    v = solve_exact_values(env)
    residual = env.p[0] @ (env.r + env.gamma * v) - v
    np.testing.assert_allclose(residual, 0.0, atol=1e-12)


def test_exact_values_terminal_pinned_to_zero():
    env = envs.build_grid_env(2, 2, 0.9, {3}, 0.9)
    v = solve_exact_values(env)
    assert v[3] == 0.0
    assert np.all(v[:3] > 0.0)


def test_exact_values_match_monte_carlo():
    # long-horizon Monte Carlo returns agree with the solve
    env = envs.build_chain_env(4, 0.8, 3, 0.9)
    v = solve_exact_values(env)
    rng = Rng(0)
    est = []
    for _ in range(3000):
        s, g, disc = 0, 0.0, 1.0
        for _ in range(120):
            s, r, _ = envs.step(env, s, 0, rng)
            g += disc * r
            disc *= env.gamma
        est.append(g)
    assert abs(np.mean(est) - v[0]) < 0.05


def test_solve_optimal_grid_prefers_shortest_path():
    env = envs.build_grid_env(2, 3, 1.0, {5}, 0.9)
    v, policy = solve_optimal(env)
    # from state 2 (top-right) the best move is down (action 1)
    assert policy[2] == 1
    # deterministic moves: V = gamma^(d-1) for distance-d states
    assert v[4] == pytest.approx(1.0)
    assert v[0] == pytest.approx(0.9 ** 2)
    assert v[5] == 0.0


def test_solve_optimal_bellman_optimality():
    env = envs.build_grid_env(3, 3, 0.8, {8}, 0.9)
    v, _ = solve_optimal(env)
    nonterm = np.array([0.0 if s in env.terminal else 1.0
                        for s in range(env.n_states)])
    q = env.p @ (env.r + env.gamma * v * nonterm)
    np.testing.assert_allclose(v, q.max(axis=0) * nonterm, atol=1e-8)


# ------------------------------------------------------------------- metrics

def test_total_variation_basic():
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert total_variation([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25)


def test_total_variation_validates_inputs():
    with pytest.raises(ValueError):
        total_variation([0.5, 0.5], [0.5, 0.5, 0.0])
    with pytest.raises(ValueError):
        total_variation([0.5, 0.4], [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
       st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
       st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
def test_total_variation_metric_axioms(a, b, c):
    n = min(len(a), len(b), len(c))
    p = np.array(a[:n]) / np.sum(a[:n])
    q = np.array(b[:n]) / np.sum(b[:n])
    r = np.array(c[:n]) / np.sum(c[:n])
    dpq = total_variation(p, q)
    assert 0.0 <= dpq <= 1.0
    assert dpq == pytest.approx(total_variation(q, p))
    assert total_variation(p, p) == 0.0
    assert dpq <= total_variation(p, r) + total_variation(r, q) + 1e-12


def test_nearest_class_picks_closest_and_breaks_ties_low():
    templates = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    assert nearest_class(np.array([0.9, 0.8]), templates) == 1
    # equidistant between identical templates 0 and 2 -> index 0
    assert nearest_class(np.array([0.5, 0.5]), templates) == 0
    ids = nearest_class(np.array([[0.1, 0.0], [1.0, 0.9]]), templates)
    np.testing.assert_array_equal(ids, [0, 1])


def test_nearest_class_validates():
    with pytest.raises(ValueError):
        nearest_class(np.zeros(2), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        nearest_class(np.zeros(3), np.zeros((2, 2)))


def test_kernel_estimate_rows_normalize_and_keep_empty_rows_zero():
    counts = np.zeros((1, 2, 2))
    counts[0, 0] = [3.0, 1.0]
    est = KernelEstimate(counts)
    np.testing.assert_allclose(est.rows[0, 0], [0.75, 0.25])
    np.testing.assert_allclose(est.rows[0, 1], [0.0, 0.0])
    assert est.row_counts[0, 0] == 4.0


def test_kernel_tv_exact_match_is_zero():
    env = envs.build_chain_env(3, 0.8, 2, 0.9)
    est = KernelEstimate(env.p * 100.0)
    assert kernel_tv(est, env) == pytest.approx(0.0)


def test_kernel_tv_uniform_estimate_hand_value():
    # uniform rows vs chain rows: per-row TV =
    # 0.5*(|1/3-0.2| + |1/3-0.8| + 1/3) = 0.4666...
    env = envs.build_chain_env(3, 0.8, 2, 0.9)
    est = KernelEstimate(np.ones((1, 3, 3)))
    assert kernel_tv(est, env) == pytest.approx(0.5 * (2 / 15 + 7 / 15 + 1 / 3))


def test_kernel_tv_shape_mismatch():
    env = envs.build_chain_env(3, 0.8, 2, 0.9)
    with pytest.raises(ValueError):
        kernel_tv(KernelEstimate(np.ones((1, 2, 2))), env)


def test_kernel_tv_per_action_separates_actions():
    env = envs.build_grid_env(1, 2, 1.0, {1}, 0.9)
    counts = np.array(env.p * 50.0)
    counts[0] = np.array([[0.0, 50.0], [0.0, 50.0]])  # corrupt action 0
    per = kernel_tv_per_action(KernelEstimate(counts), env)
    assert per[0] > 0.4
    assert per[3] == pytest.approx(0.0)


# -------------------------------------------------- sampled model evaluation

def trained_world(seed=0, n=4):
    env = envs.build_chain_env(n, 0.8, n - 1, 0.9)
    omap = envs.make_synthetic_observations(n, 6, 2, 0.0, Rng(seed))
    trans = envs.collect_transitions(env, omap, None, 300, Rng(seed))
    obs = np.array([t.observation for t in trans])
    obs_next = np.array([t.observation_next for t in trans])
    cfg = CdConfig(k=2, learning_rate=0.1, momentum=0.5, epochs=40,
                   minibatch_size=25)
    stack = dbn.greedy_train(obs, [12, 6], cfg, Rng(seed))
    pairs = list(zip(dbn.encode(stack, obs), dbn.encode(stack, obs_next)))
    tcfg = CdConfig(k=5, learning_rate=0.05, momentum=0.9, epochs=400,
                    minibatch_size=50)
    tm = temporal.train_temporal(pairs, 24, tcfg, Rng(seed),
                                 gibbs_steps_sampling=200)
    return env, omap, stack, tm


def test_empirical_kernel_counts_and_rows():
    env, omap, stack, tm = trained_world()
    est = empirical_kernel(stack, {0: tm}, omap, env, 50, Rng(1))
    assert est.counts.shape == (1, 4, 4)
    np.testing.assert_allclose(est.row_counts[0], 50.0)
    np.testing.assert_allclose(est.rows[0].sum(axis=1), 1.0)


def test_empirical_kernel_skips_terminal_states():
    env = envs.build_grid_env(1, 2, 1.0, {1}, 0.9)
    omap = envs.make_synthetic_observations(2, 6, 1, 0.0, Rng(0))
    data = np.array([omap.canonical(s) for s in range(2)])
    cfg = CdConfig(k=1, learning_rate=0.1, momentum=0.0, epochs=2,
                   minibatch_size=2)
    stack = dbn.greedy_train(data, [4], cfg, Rng(0))
    pairs = [(dbn.encode(stack, data[0]), dbn.encode(stack, data[1]))]
    tms = {a: temporal.train_temporal(pairs, 3, cfg, Rng(0), action=a)
           for a in range(4)}
    est = empirical_kernel(stack, tms, omap, env, 10, Rng(1))
    assert np.all(est.counts[:, 1, :] == 0.0)


def test_kstep_tv_shape_and_validation():
    env, omap, stack, tm = trained_world()
    curve = kstep_tv(stack, {0: tm}, env, omap, 3, 40, Rng(2))
    assert curve.shape == (3,)
    assert np.all(curve >= 0.0) and np.all(curve <= 1.0)
    with pytest.raises(ValueError):
        kstep_tv(stack, {0: tm}, env, omap, 0, 10, Rng(0))


def test_value_error_mean_absolute():
    assert value_error([1.0, 2.0], [0.0, 4.0]) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        value_error([1.0], [1.0, 2.0])


def test_average_curves_mean_and_stderr():
    curves = [np.array([[0.0, 2.0]]), np.array([[2.0, 4.0]])]
    mean, stderr = average_curves(curves)
    np.testing.assert_allclose(mean, [[1.0, 3.0]])
    np.testing.assert_allclose(stderr, [[1.0, 1.0]])
    _, zero = average_curves([np.array([[1.0]])])
    np.testing.assert_array_equal(zero, [[0.0]])
    with pytest.raises(ValueError):
        average_curves([])


def test_steps_to_return_threshold():
    curve = np.zeros((6, 4))
    curve[:, 0] = [10, 20, 30, 40, 50, 60]
    curve[:, 3] = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
    # window-2 trailing mean first reaches 1.0 at episode 3 (40 steps)
    assert steps_to_return_threshold(curve, 1.0, window=2) == 40.0
    assert steps_to_return_threshold(curve, 2.0, window=2) == float("inf")


def test_recognition_radius_is_half_min_template_gap():
    templates = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 10.0]])
    # closest pair is (0,0)-(3,4) at distance 5
    assert recognition_radius(templates) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        recognition_radius(np.array([[1.0, 2.0]]))


def test_rollout_class_accuracy_counts_supported_recognizable_steps():
    env = envs.build_chain_env(3, 0.8, 2, 0.9)
    templates = np.eye(3)
    frames = [templates[2], templates[0], templates[1]]
    # from 0 the kernel supports {0, 1}: class 2 is an impossible jump
    acc = rollout_class_accuracy(frames, [0, 0, 0], env, 0, templates)
    assert acc == pytest.approx(2 / 3)
    frames = [templates[0], templates[1], templates[2]]
    assert rollout_class_accuracy(frames, [0, 0, 0], env, 0,
                                  templates) == 1.0


def test_rollout_class_accuracy_rejects_blurry_frames():
    env = envs.build_chain_env(3, 0.8, 2, 0.9)
    templates = np.eye(3)
    # equal mixture of all templates: outside every recognition ball
    blur = templates.mean(axis=0)
    frames = [templates[0], blur, blur]
    acc = rollout_class_accuracy(frames, [0, 0, 0], env, 0, templates)
    assert acc == pytest.approx(1 / 3)
    # an explicit generous radius accepts the blurred frames again
    acc = rollout_class_accuracy(frames, [0, 0, 0], env, 0, templates,
                                 radius=10.0)
    assert acc == 1.0
