import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest

from nrmab.baselines import none_policy
from nrmab.dynamics import EnumerationCapError, exact_model, reward_table
from nrmab.planning import (
    ExactQ,
    MetaState,
    RolloutQ,
    SampledQ,
    bellman_hc,
    bellman_multi,
    bellman_opt,
    feasible_action_masks,
    greedy_evaluation_count,
    hill_climb_select,
    load_value_table,
    meta_discount,
    modified_reward,
    modular_values,
    multi_bellman_composite,
    q_exact,
    q_table,
    rollout_q,
    save_value_table,
    telescoped_reward,
    value_iteration,
)

from conftest import make_instance
from test_dynamics import brute_kernel


class SetFunction:
    """Q evaluator backed by an arbitrary python set function, for selection tests."""

    def __init__(self, f):
        self.f = f
        self.evaluations = 0

    def reset(self):
        pass

    def value(self, s, chosen):
        return self.f(frozenset(chosen))

    def gains(self, s, chosen, candidates):
        self.evaluations += len(candidates)
        return np.array([self.f(frozenset(chosen) | {int(c)}) for c in candidates])


def coverage(sets, weights):
    def f(chosen):
        covered = set().union(*(sets[c] for c in chosen)) if chosen else set()
        return float(sum(weights[x] for x in covered))
    return f


def test_exact_q_matches_bruteforce(tri4, rng):
    V = rng.uniform(0, 5, 16)
    R = reward_table(tri4)
    for s in (0, 5, 15):
        for a in [(), (2,), (0, 3)]:
            want = R[s] + tri4.gamma * brute_kernel(tri4, s, a) @ V
            assert q_exact(tri4, V, s, a) == pytest.approx(want, abs=1e-12)


def test_hill_climb_on_modular_picks_top_k():
    inst = make_instance(5, [], k=3)
    w = [0.3, 2.0, 1.0, 2.0, 0.1]
    q = SetFunction(lambda A: sum(w[i] for i in A))
    assert hill_climb_select(inst, q, 0) == (1, 3, 2)
    assert q.evaluations == greedy_evaluation_count(5, 3) == 5 + 4 + 3


def test_hill_climb_stops_without_gain():
    inst = make_instance(4, [], k=3)
    q = SetFunction(lambda A: 1.0 if 2 in A else 0.0)
    assert hill_climb_select(inst, q, 0) == (2,)
    assert len(hill_climb_select(inst, q, 0, stop_when_no_gain=False)) == 3


def test_lazy_greedy_matches_plain_on_coverage(rng):
    inst = make_instance(12, [], k=4)
    universe = range(30)
    for _ in range(20):
        sets = [set(rng.choice(30, size=rng.integers(1, 8), replace=False)) for _ in range(12)]
        weights = {x: float(rng.integers(1, 5)) for x in universe}
        f = coverage(sets, weights)
        plain = hill_climb_select(inst, SetFunction(f), 0)
        lazy_q = SetFunction(f)
        lazy = hill_climb_select(inst, lazy_q, 0, lazy=True, lazy_batch=2)
        assert f(frozenset(plain)) == pytest.approx(f(frozenset(lazy)))


def test_bellman_opt_fixed_point_is_policy_value(tri4):
    V, trace = value_iteration(tri4, "opt", tol=1e-12)
    assert trace.converged
    _, actions = bellman_opt(tri4, V, return_actions=True)
    model = exact_model(tri4)
    P = np.array([model.kernel_row(s, sum(1 << v for v in a)) for s, a in enumerate(actions)])
    V_pi = np.linalg.solve(np.eye(16) - tri4.gamma * P, reward_table(tri4))
    np.testing.assert_allclose(V, V_pi, atol=1e-9)


def test_bellman_opt_equals_brute_max(tri4, rng):
    V = rng.uniform(0, 10, 16)
    out = bellman_opt(tri4, V)
    for s in range(16):
        best = max(q_exact(tri4, V, s, a) for j in range(3)
                   for a in itertools.combinations(range(4), j))
        assert out[s] == pytest.approx(best, abs=1e-12)


def test_hc_equals_opt_when_k_is_one(path3, rng):
    V = rng.uniform(0, 10, 8)
    np.testing.assert_allclose(bellman_hc(path3, V), bellman_opt(path3, V), atol=1e-12)


def test_feasible_masks_order_and_cap():
    masks = feasible_action_masks(3, 2)
    assert list(masks) == [0, 1, 3, 5, 2, 6, 4]
    with pytest.raises(EnumerationCapError):
        feasible_action_masks(30, 10, max_sets=1000)


def test_q_table_nan_beyond_size(tri4):
    Q = q_table(tri4, modular_values(tri4), max_size=1)
    assert np.isnan(Q[0, 0b0011]) and not np.isnan(Q[0, 0b0100])


def test_sampled_q_is_unbiased(tri4):
    V = modular_values(tri4)
    exact = ExactQ(tri4, V)
    q = SampledQ(tri4, 20000, np.random.default_rng(3))
    for a in [(), (1,), (0, 2)]:
        want = exact.value(0b1001, a)
        got = q.value(np.array([1, 0, 0, 1], bool), a)
        # per-sample sd of w.s' is at most sum(w); 5 standard errors
        assert abs(got - want) < 5 * tri4.gamma * sum(tri4.rewards) / math.sqrt(20000)


def test_sampled_gains_match_value(tri4):
    q = SampledQ(tri4, 500, np.random.default_rng(0))
    s = np.array([0, 1, 0, 0], bool)
    g = q.gains(s, (0,), [1, 2, 3])
    assert g == pytest.approx([q.value(s, (0, c)) for c in (1, 2, 3)])


def exact_none_return(inst, s, a, horizon):
    """E[sum_{h<H} gamma^h R(s_h)] with ``a`` at step 0 and no action afterwards."""
    model = exact_model(inst)
    R = reward_table(inst)
    dist = np.zeros(1 << inst.n)
    dist[s] = 1.0
    total = R[s]
    mask = sum(1 << v for v in a)
    for h in range(1, horizon):
        P = np.array([model.kernel_row(x, mask if h == 1 else 0) for x in range(1 << inst.n)])
        dist = dist @ P
        total += inst.gamma ** h * dist @ R
    return total


def test_rollout_estimates_match_exact_policy_evaluation(tri4):
    base = none_policy(tri4)
    m = 20000
    for a in [(), (1, 3)]:
        want = exact_none_return(tri4, 0b0100, a, 4)
        got = rollout_q(tri4, 0b0100, a, base, 4, m, np.random.default_rng(8))
        bound = sum(tri4.rewards) * sum(tri4.gamma ** h for h in range(4))
        assert abs(got - want) < 5 * bound / math.sqrt(m)
        rq = RolloutQ(tri4, base, 4, m, np.random.default_rng(9))
        assert abs(rq.value(0b0100, a) - want) < 5 * bound / math.sqrt(m)


def test_rollout_gains_match_value(tri4):
    rq = RolloutQ(tri4, none_policy(tri4), 3, 400, np.random.default_rng(1))
    s = np.array([1, 0, 0, 0], bool)
    g = rq.gains(s, (2,), [0, 1, 3])
    assert g == pytest.approx([rq.value(s, (2, c)) for c in (0, 1, 3)])


def test_meta_discount():
    assert meta_discount(0.9, 3) ** 3 == pytest.approx(0.9)
    assert meta_discount(0.0, 4) == 0.0
    with pytest.raises(ValueError):
        MetaState(0, (1,), 0)


def test_modified_reward_vanishes_for_state_reward():
    R = lambda s, A: float(bin(s).count("1"))
    assert modified_reward(MetaState(5, (0,), 1), 2, 0.9, R) == 0


def test_telescoping_is_exact_with_fractions():
    # a reward that depends on the set, to exercise the telescoping identity
    R = lambda s, A: Fraction(len(A) ** 2 + s, 7)
    g = Fraction(2, 3)
    seq = (3, 0, 4)
    total = telescoped_reward(R, 1, seq, g)
    direct = sum(g ** t * (R(1, seq[:t + 1]) - R(1, seq[:t])) / g ** t for t in range(3))
    assert total == direct == R(1, seq) - R(1, ())


def test_multi_composite_equals_hc(tri4, rng):
    for _ in range(3):
        V = rng.uniform(0, 30, 16)
        np.testing.assert_allclose(bellman_multi(tri4, V), bellman_hc(tri4, V), atol=1e-9)
    _, chosen = multi_bellman_composite(tri4, V, 3)
    assert chosen == hill_climb_select(tri4, ExactQ(tri4, V), 3)


def test_gamma_zero_operators_return_reward(tri4, rng):
    inst = tri4.replace(gamma=0.0)
    V = rng.uniform(0, 5, 16)
    R = reward_table(inst)
    for op in (bellman_hc, bellman_opt, bellman_multi):
        np.testing.assert_allclose(op(inst, V), R, atol=1e-12)


def test_value_iteration_warns_when_not_converged(tri4):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        _, trace = value_iteration(tri4, "hc", max_iters=3)
    assert not trace.converged and trace.iterations == 3
    assert any("did not converge" in str(w.message) for w in caught)


def test_value_table_io(tmp_path, rng):
    V = rng.random(8)
    save_value_table(tmp_path / "v.csv", V)
    np.testing.assert_array_equal(load_value_table(tmp_path / "v.csv"), V)
