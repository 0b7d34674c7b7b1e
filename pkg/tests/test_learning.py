import math

import numpy as np
import pytest

from nrmab.dynamics import reward_table
from nrmab.learning import (
    CapacityError,
    LearningConfig,
    QTable,
    backup_subsets,
    feasible_sets,
    greedy_agreement,
    hill_climb_column,
    learned_policy,
    q_learn_hc,
    q_learn_tabular,
    tabular_sweep,
    write_learning_curve,
)
from nrmab.planning import ExactQ, value_iteration

from conftest import bundled, make_instance

SHORT = LearningConfig(episodes=20, steps_per_episode=200, seed=4)


def test_config_validation():
    with pytest.raises(ValueError):
        LearningConfig(alpha=0.0)
    with pytest.raises(ValueError):
        LearningConfig(alpha="1/visits^0.3")
    with pytest.raises(ValueError):
        LearningConfig(epsilon_end=1.5)
    assert LearningConfig(alpha="1/visits^0.8").alpha_exponent == 0.8
    cfg = LearningConfig(episodes=2, steps_per_episode=5)
    assert cfg.epsilon(0) == 1.0 and cfg.epsilon(9) == pytest.approx(0.05)


def test_feasible_sets():
    assert feasible_sets(3, 2) == [(), (0,), (0, 1), (0, 2), (1,), (1, 2), (2,)]
    assert feasible_sets(4, 2, exact=True) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_gamma_zero_learns_immediate_reward(tri4):
    inst = tri4.replace(gamma=0.0)
    table = q_learn_tabular(inst, LearningConfig(episodes=10, steps_per_episode=300,
                                                 alpha="1/visits", start="random"))
    R = reward_table(inst)
    seen = table.visits > 0
    assert seen.any()
    rows = np.nonzero(seen)[0]
    np.testing.assert_allclose(table.values[seen], R[rows], atol=1e-12)


def test_fixed_seed_is_bit_identical(tri4):
    a, b = q_learn_hc(tri4, SHORT), q_learn_hc(tri4, SHORT)
    assert np.array_equal(a.values, b.values) and a.returns == b.returns
    c = q_learn_hc(tri4, LearningConfig(episodes=20, steps_per_episode=200, seed=5))
    assert not np.array_equal(a.values, c.values)


def test_k1_hc_equals_tabular(path3):
    a, b = q_learn_tabular(path3, SHORT), q_learn_hc(path3, SHORT)
    assert a.returns == b.returns
    full = b.full_columns
    np.testing.assert_array_equal(a.values, b.values[:, full])
    np.testing.assert_array_equal(a.visits, b.visits[:, full])


def test_learned_sets_fill_budget(tri4):
    for learner in (q_learn_tabular, q_learn_hc):
        table = learner(tri4, SHORT)
        assert all(len(table.greedy_action(s)) == 2 for s in range(16))
        pol = learned_policy(tri4, table)
        assert pol.select(np.zeros(4, bool)) == table.greedy_action(0)


def test_q_values_stay_bounded(tri4):
    table = q_learn_tabular(tri4, SHORT)
    bound = sum(tri4.rewards) / (1 - tri4.gamma)
    assert np.all(table.values <= bound + 1e-9) and np.all(table.values >= -1e-9)


def test_subset_backup_and_climb():
    table = QTable.empty(4, 2, "hc")
    col = table.col_of_mask
    table.values[0, col[0b0011]] = 5.0
    table.values[0, col[0b1100]] = 7.0
    table.values[0, col[0b0110]] = 6.0
    for m in (0b0011, 0b1100, 0b0110):
        backup_subsets(table, 0, m)
    assert table.values[0, col[0b0010]] == 6.0   # best pair containing node 1
    assert table.values[0, col[0b0100]] == 7.0
    assert table.values[0, col[0]] == 7.0
    assert table.action_masks[hill_climb_column(table, 0)] == 0b1100


def test_greedy_is_stationary_with_optimistic_start(tri4):
    cfg = LearningConfig(episodes=10, steps_per_episode=200, epsilon_start=0.0,
                         epsilon_end=0.0, init_value=100.0)
    table = q_learn_hc(tri4, cfg)
    assert [table.greedy_action(s) for s in range(16)] == \
        [table.greedy_action(s) for s in range(16)]


def test_table_roundtrip(tmp_path, tri4):
    table = q_learn_hc(tri4, SHORT)
    table.save(tmp_path / "q.csv")
    again = QTable.load(tmp_path / "q.csv")
    assert again.selector == "hc" and again.k == 2
    np.testing.assert_array_equal(again.values, table.values)
    np.testing.assert_array_equal(again.visits, table.visits)
    np.testing.assert_array_equal(again.action_masks, table.action_masks)
    write_learning_curve(tmp_path / "c.csv", table.returns)
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 21


def test_capacity_cap():
    with pytest.raises(CapacityError):
        QTable.empty(20, 3)


def test_tabular_sweep_counts_pairs(tri4):
    Q, pairs = tabular_sweep(tri4, 2, np.random.default_rng(0))
    assert pairs == 16 * math.comb(4, 2) and Q.shape == (16, 6)


def test_n4_k1_greedy_agrees_with_optimal_policy():
    # classical convergence conditions: uniform exploration, 1/visits step size,
    # 200k steps; agreement counts ties among optimal sets as matches
    inst = bundled("toy4")
    V, _ = value_iteration(inst, "opt")
    q_star = ExactQ(inst, V)
    rates = []
    for seed in range(4):
        cfg = LearningConfig(episodes=2000, steps_per_episode=100, alpha="1/visits",
                             epsilon_end=1.0, start="random", seed=seed)
        rates.append(greedy_agreement(q_learn_tabular(inst, cfg), q_star))
    assert np.mean(rates) >= 0.95, rates
