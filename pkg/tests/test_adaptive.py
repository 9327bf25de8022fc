import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

import oracles
from adaptive_rbm import (AdaptiveConfig, CapacityError, GradientStats,
                          RbmModel, TrainConfig, annihilate,
                          annihilation_candidates, exact_marginal, free_energy,
                          generate_neuron, generation_candidates, make_rng,
                          train)
from adaptive_rbm.adaptive import (ANNIHILATED, GENERATED, AdaptiveState,
                                   adaptive_epoch_hook, mean_activations,
                                   replay)
from adaptive_rbm.core import binary_states, softplus
from adaptive_rbm.data import bars_and_stripes
from adaptive_rbm.training import WalkingDistance


def stats_with(g_c, g_W):
    g_W = np.asarray(g_W, dtype=float)
    s = GradientStats(g_W.shape[0], g_W.shape[1])
    s.g_c = np.asarray(g_c, dtype=float)
    s.g_W = g_W
    return s


def test_generation_candidates_zero_stats():
    assert generation_candidates(GradientStats(4, 3), AdaptiveConfig()) == []


def test_generation_candidates_threshold_example():
    # 0.1 * 0.1 = 0.01 > 0.005
    s = stats_with([0.1, 0.0], [[0.1, 0.1]] * 4)
    assert generation_candidates(s, AdaptiveConfig(theta_g=0.005)) == [0]
    assert generation_candidates(s, AdaptiveConfig(theta_g=1e18)) == []


def test_generation_candidates_order_and_cap():
    s = stats_with([0.1, 0.3, 0.2, 0.4], np.full((3, 4), 0.1))
    cfg = AdaptiveConfig(theta_g=0.005, max_generations_per_epoch=2)
    assert generation_candidates(s, cfg) == [3, 1]


def test_generation_candidates_uses_column_rms():
    s = stats_with([1.0], [[0.0], [0.3], [0.4], [0.0]])
    rms = np.sqrt((0.09 + 0.16) / 4)
    assert generation_candidates(s, AdaptiveConfig(theta_g=rms * 0.999)) == [0]
    assert generation_candidates(s, AdaptiveConfig(theta_g=rms * 1.001)) == []


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), t1=st.floats(1e-6, 1.0), t2=st.floats(1e-6, 1.0))
def test_raising_theta_g_shrinks_candidates(seed, t1, t2):
    rng = np.random.default_rng(seed)
    s = stats_with(rng.random(6), rng.random((5, 6)))
    lo, hi = sorted((t1, t2))
    big = dict(max_generations_per_epoch=100)
    assert set(generation_candidates(s, AdaptiveConfig(theta_g=hi, **big))) <= \
        set(generation_candidates(s, AdaptiveConfig(theta_g=lo, **big)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), t1=st.floats(0.0, 0.99), t2=st.floats(0.0, 0.99))
def test_raising_theta_a_grows_candidates(seed, t1, t2):
    rng = np.random.default_rng(seed)
    m = RbmModel(rng.normal(size=5), rng.normal(0, 2, 6), rng.normal(size=(5, 6)))
    data = (rng.random((20, 5)) < 0.5).astype(float)
    lo, hi = sorted((t1, t2))
    assert set(annihilation_candidates(m, data, AdaptiveConfig(theta_a=lo))) <= \
        set(annihilation_candidates(m, data, AdaptiveConfig(theta_a=hi)))


def test_generate_neuron_exact_copy_adjacent(random_model):
    m = random_model(4, 3, seed=1)
    before = m.copy()
    child = generate_neuron(m, 1, AdaptiveConfig(child_noise=0.0), make_rng(0))
    assert child == 2 and m.n_hidden == 4
    assert m.W[:, 2].tobytes() == before.W[:, 1].tobytes()
    assert m.c[2] == before.c[1]
    # every pre-existing value is bit-preserved
    assert np.delete(m.W, 2, axis=1).tobytes() == before.W.tobytes()
    assert np.delete(m.c, 2).tobytes() == before.c.tobytes()
    assert m.b.tobytes() == before.b.tobytes()


def test_generate_neuron_noise_bounded(random_model):
    m = random_model(6, 2, seed=3)
    parent = m.W[:, 0].copy()
    generate_neuron(m, 0, AdaptiveConfig(child_noise=0.05), make_rng(0))
    diff = m.W[:, 1] - parent
    assert np.all(np.abs(diff) <= 0.05) and np.any(diff != 0)


def test_generate_neuron_capacity(random_model):
    m = random_model(3, 2)
    before = m.copy()
    with pytest.raises(CapacityError):
        generate_neuron(m, 0, AdaptiveConfig(max_hidden=2), make_rng(0))
    assert m.same_as(before)


def test_generation_changes_marginals_as_free_energy_predicts(random_model):
    m = random_model(4, 3, seed=6)
    V = binary_states(4)
    old_f = free_energy(m, V)
    parent_term = softplus(m.c[1] + V @ m.W[:, 1])
    generate_neuron(m, 1, AdaptiveConfig(child_noise=0.0), make_rng(0))
    new_f = free_energy(m, V)
    np.testing.assert_allclose(new_f, old_f - parent_term, atol=1e-10)
    predicted = np.exp(-new_f) / np.exp(-new_f).sum()
    np.testing.assert_allclose(exact_marginal(m, V), predicted, atol=1e-10)


def test_annihilation_candidates_examples():
    m = RbmModel([0.2, -0.1], [0.5, -30.0], [[0.3, 0.0], [0.7, 0.0]])
    data = binary_states(2)
    assert mean_activations(m, data)[1] < 1e-12
    assert annihilation_candidates(m, data, AdaptiveConfig(theta_a=0.01)) == [1]
    assert annihilation_candidates(m, data, AdaptiveConfig(theta_a=0.3)) == [1]
    assert annihilation_candidates(RbmModel.zeros(3, 4), binary_states(3),
                                   AdaptiveConfig(theta_a=0.3)) == []


def test_annihilation_candidates_solved_means():
    data = binary_states(2)  # fixed 4-sample dataset
    w = np.array([[0.5, -0.8], [-0.3, 1.1]])

    def mean_act(c, j):
        return np.mean([oracles.sigmoid(c + v @ w[:, j]) for v in data])

    c0 = brentq(lambda c: mean_act(c, 0) - 0.29, -10, 10, xtol=1e-14)
    c1 = brentq(lambda c: mean_act(c, 1) - 0.31, -10, 10, xtol=1e-14)
    m = RbmModel([0, 0], [c0, c1], w)
    np.testing.assert_allclose(mean_activations(m, data), [0.29, 0.31], atol=1e-12)
    assert annihilation_candidates(m, data, AdaptiveConfig(theta_a=0.3)) == [0]


def test_annihilation_candidates_keep_one_unit():
    m = RbmModel([0.0, 0.0], [-30.0, -30.0, -30.0], np.zeros((2, 3)))
    got = annihilation_candidates(m, binary_states(2), AdaptiveConfig(theta_a=0.3))
    assert len(got) == 2


def test_annihilate_dead_neuron_preserves_marginals(random_model):
    m = random_model(4, 2, seed=2)
    m.W = np.hstack([m.W[:, :1], np.zeros((4, 1)), m.W[:, 1:]])
    m.c = np.array([m.c[0], -30.0, m.c[1]])
    V = binary_states(4)
    before = exact_marginal(m, V)
    annihilate(m, 1)
    assert m.n_hidden == 2
    assert np.max(np.abs(exact_marginal(m, V) - before)) < 1e-9


def test_annihilate_then_reinsert_restores(random_model):
    m = random_model(3, 3, seed=4)
    V = binary_states(3)
    before = exact_marginal(m, V)
    col, bias = m.W[:, 1].copy(), m.c[1]
    annihilate(m, 1)
    m.W = np.insert(m.W, 1, col, axis=1)
    m.c = np.insert(m.c, 1, bias)
    assert np.max(np.abs(exact_marginal(m, V) - before)) < 1e-9


def test_annihilate_refuses_last_unit():
    m = RbmModel([0.1], [0.2], [[0.3]])
    with pytest.raises(CapacityError):
        annihilate(m, 0)
    assert m.n_hidden == 1 and m.c[0] == 0.2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), I=st.integers(1, 5), J=st.integers(2, 5))
def test_annihilation_safety(seed, I, J):
    rng = np.random.default_rng(seed)
    m = RbmModel(rng.normal(size=I), rng.normal(size=J), rng.normal(size=(I, J)))
    k = int(rng.integers(J))
    m.W[:, k] = rng.uniform(-1e-7, 1e-7, I)
    m.c[k] = -40.0
    V = binary_states(I)
    assert mean_activations(m, V)[k] < 1e-6
    before = exact_marginal(m, V)
    annihilate(m, k)
    assert np.max(np.abs(exact_marginal(m, V) - before)) < 1e-6


def _hook_setup():
    m = RbmModel([0.0, 0.0], [0.0, -30.0], [[0.5, 0.0], [0.5, 0.0]])
    s = stats_with([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]])
    return m, s, binary_states(2)


def test_hook_inactive_before_gen_start():
    m, s, data = _hook_setup()
    cfg = AdaptiveConfig(gen_start_epoch=10, annihilation_start_epoch=10)
    state = AdaptiveState()
    for epoch in range(1, 10):
        assert adaptive_epoch_hook(m, s, data, cfg, epoch, 0, state) == []
    assert m.n_hidden == 2


def test_hook_generation_before_annihilation_and_newborn_exempt():
    m, s, data = _hook_setup()
    cfg = AdaptiveConfig(theta_g=0.5, theta_a=0.3, gen_start_epoch=1,
                         annihilation_start_epoch=1, child_noise=0.0)
    wd = WalkingDistance(2)
    events = adaptive_epoch_hook(m, s, data, cfg, 1, 0, AdaptiveState(), wd)
    kinds = [e.kind for e in events]
    assert kinds == [GENERATED, GENERATED, ANNIHILATED]
    # the dead parent (index 2 after inserting a child at 1) goes; its child stays
    assert events[-1].neuron_index == 2
    assert m.n_hidden == 3 and s.n_hidden == 3 and wd.wd.size == 3
    assert np.allclose(m.c, [0.0, 0.0, -30.0])
    assert [e.seq for e in events] == [0, 1, 2]


def test_hook_patience_rule():
    X = bars_and_stripes(3, exhaustive=True).as_float()
    m = RbmModel.initialize(9, 3, make_rng(0))
    m.c[:] = -30.0
    s = GradientStats(9, 3)
    cfg = AdaptiveConfig(theta_g=1e18, theta_a=0.3, gen_start_epoch=2, patience=3)
    state = AdaptiveState()
    # quiet epochs 2 and 3 are not enough; the third (epoch 4) opens pruning
    for epoch in range(1, 4):
        adaptive_epoch_hook(m, s, X, cfg, epoch, 0, state)
        assert m.n_hidden == 3
    adaptive_epoch_hook(m, s, X, cfg, 4, 0, state)
    assert m.n_hidden == 1


def test_no_op_equivalence():
    X = bars_and_stripes(4, exhaustive=False, n_samples=400, seed=1).as_float()
    cfg = TrainConfig(epochs=30, seed=9)
    plain = train(X, cfg, n_hidden=4)
    noop = train(X, cfg, n_hidden=4,
                 adaptive=AdaptiveConfig(theta_g=1e18, theta_a=0.0, gen_start_epoch=1))
    assert plain.model.same_as(noop.model)
    assert noop.events == []


def test_structure_replay_and_shapes():
    X = bars_and_stripes(4, exhaustive=False, n_samples=1000, seed=0).as_float()
    r = train(X, TrainConfig(epochs=120, seed=0), n_hidden=2,
              adaptive=AdaptiveConfig(theta_g=1e-3, theta_a=0.3))
    assert r.events, "expected structural events"
    assert replay(2, r.events) == r.model.n_hidden
    counts = r.hidden_counts
    for k, m in enumerate(r.history):
        prev = 2 if k == 0 else counts[k - 1]
        delta = sum(1 if e["kind"] == GENERATED else -1 for e in m.events)
        assert counts[k] == prev + delta
    assert r.stats.g_W.shape == r.model.W.shape
    assert r.walking.wd.size == r.model.n_hidden
    assert all(m.hidden_count >= 1 for m in r.history)
    seqs = [e.seq for e in r.events]
    assert seqs == sorted(seqs)
    assert all(a.epoch <= b.epoch for a, b in zip(r.events, r.events[1:]))


def test_adaptive_config_validation():
    with pytest.raises(ValueError):
        AdaptiveConfig(theta_g=0.0)
    with pytest.raises(ValueError):
        AdaptiveConfig(theta_a=1.0)
    with pytest.raises(ValueError):
        AdaptiveConfig(alpha_c=0.0)
    with pytest.raises(ValueError, match="max_hidden"):
        train(np.ones((3, 2)), TrainConfig(epochs=1), n_hidden=5,
              adaptive=AdaptiveConfig(max_hidden=4))
