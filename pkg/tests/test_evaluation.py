import math

import numpy as np
import pytest

from nrmab.baselines import none_policy
from nrmab.evaluation import (
    EpisodeLog,
    ExperimentConfig,
    loglog_slope,
    read_raw_csv,
    run_episode,
    run_experiment,
    runtime_scaling,
    summarize,
    write_raw_csv,
    write_runtime_csv,
    write_summary,
)
from nrmab.planning import greedy_evaluation_count

from conftest import make_instance


@pytest.fixture
def dormant():
    # nothing activates without help
    return make_instance(5, [(0, 1, 0.5), (1, 2, 0.5)], k=2, dyn=(0.0, 0.6, 0.5, 0.9))


def test_none_on_dormant_instance_stays_inactive(dormant):
    res = run_experiment(ExperimentConfig(dormant, ("none",), (0, 1), 5, 10))
    assert all(np.all(lg.active_counts == 0) for lg in res.logs)
    assert res.summary["none"]["activation_mean"] == [0.0] * 10


def test_config_validation(dormant):
    with pytest.raises(ValueError, match="valid names"):
        ExperimentConfig(dormant, ("oracle",))
    with pytest.raises(ValueError):
        ExperimentConfig(dormant, ("none",), horizon=0)
    with pytest.raises(ValueError):
        ExperimentConfig(dormant, ("none",), seeds=())


def test_common_random_numbers(tri4):
    pol = none_policy(tri4)
    a = run_episode(tri4, pol, 3, 7, 20)
    b = run_episode(tri4, pol, 3, 7, 20)
    assert np.array_equal(a.active_counts, b.active_counts)
    c = run_episode(tri4, pol, 3, 8, 20)
    assert not np.array_equal(a.active_counts, c.active_counts)


def test_log_shapes_and_return(tri4):
    res = run_experiment(ExperimentConfig(tri4, ("random",), (0,), 3, 6, record_timing=True))
    lg = res.logs[0]
    assert len(lg.rewards) == len(lg.actions) == 6 and lg.decision_ms.shape == (6,)
    assert np.all((0 <= lg.active_counts) & (lg.active_counts <= 4))
    assert lg.discounted_return == pytest.approx(sum(0.9 ** t * r for t, r in enumerate(lg.rewards)))


def test_raw_csv_is_deterministic_and_summary_recomputes(tmp_path, tri4):
    cfg = ExperimentConfig(tri4, ("whittle", "random", "lookahead1"), (0, 1), 4, 8)
    paths = []
    for i in range(2):
        res = run_experiment(cfg)
        paths.append(tmp_path / f"raw{i}.csv")
        write_raw_csv(paths[-1], res.logs)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    again = summarize(read_raw_csv(paths[0], tri4.gamma), tri4.n, cfg.policies)
    for name in cfg.policies:
        for key in ("activation_mean", "activation_sd", "mean_cumulative_reward",
                    "mean_reward_per_timestep", "mean_discounted_return"):
            assert again[name][key] == res.summary[name][key]
    write_summary(tmp_path / "s.json", res.summary)


def test_workers_do_not_change_results(tri4):
    base = ExperimentConfig(tri4, ("random", "none"), (0, 1), 3, 5)
    par = ExperimentConfig(tri4, ("random", "none"), (0, 1), 3, 5, workers=2)
    a, b = run_experiment(base), run_experiment(par)
    assert a.summary == b.summary


def test_construction_failure_is_isolated(tri4):
    cfg = ExperimentConfig(tri4, ("none", "hc-rollout"), (0,), 2, 3,
                           policy_options={"hc-rollout": {"horizon": 0}})
    res = run_experiment(cfg)
    assert "hc-rollout" in res.errors
    assert res.summary["none"]["episodes"] == 2
    assert "error" in res.summary["hc-rollout"]


def test_learned_policies_train_per_seed(tri4):
    lc = {"episodes": 3, "steps_per_episode": 100}
    cfg = ExperimentConfig(tri4, ("hc-qlearn",), (0, 1), 2, 4,
                           policy_options={"hc-qlearn": {"config": lc}})
    res = run_experiment(cfg)
    assert res.summary["hc-qlearn"]["episodes"] == 4


def test_activation_grows_with_budget():
    inst = make_instance(6, [(0, 1, 0.2), (2, 3, 0.2), (4, 5, 0.2)], k=1)
    means, ses = [], []
    for k in (1, 3):
        res = run_experiment(ExperimentConfig(inst.replace(budget=k), ("random",),
                                              tuple(range(10)), 50, 10))
        frac = np.array([lg.active_counts[-1] for lg in res.logs]) / inst.n
        means.append(frac.mean())
        ses.append(frac.std(ddof=1) / math.sqrt(len(frac)))
    assert means[1] >= means[0] - 3 * math.hypot(*ses)


def test_runtime_counts():
    rows = runtime_scaling("hc", [12, 20], k=3, trials=1)
    evals = {r[1]: r[4] for r in rows if r[3] == "q_evaluations"}
    assert evals == {12: greedy_evaluation_count(12, 3), 20: greedy_evaluation_count(20, 3)}
    assert greedy_evaluation_count(12, 3) == 12 + 11 + 10
    rows = runtime_scaling("tabular", [5, 6, 30], k=2, trials=1)
    pairs = {r[1]: r[4] for r in rows if r[3] == "pairs"}
    assert pairs == {5: 32 * 10, 6: 64 * 15}
    assert any(r[1] == 30 and r[3] == "skipped" for r in rows)
    with pytest.raises(ValueError):
        runtime_scaling("hc", [20, 10], k=2)


def test_loglog_slope_and_csv(tmp_path):
    assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
    write_runtime_csv(tmp_path / "r.csv", [("hc", 5, 2, "decision_seconds", 0.5)])
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "method,n,k,measure,value"
