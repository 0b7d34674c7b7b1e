"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Lines are also collected and echoed in the terminal summary under
"acceptance criteria".
"""
import json
import time

import numpy as np
import pytest

from nrmab.cli import data_path, main
from nrmab.evaluation import ExperimentConfig, loglog_slope, run_experiment, runtime_scaling
from nrmab.graph_model import load_instance
from nrmab.learning import LearningConfig
from nrmab.verify import (
    GREEDY_BOUND,
    check_contraction,
    check_equivalence,
    check_greedy_ratio,
    check_kernel,
    check_submodularity,
    check_value_iteration_rate,
    random_value_table,
    write_report,
)

from conftest import bundled, record

TOL = 1e-9


def test_criterion_01_kernel(small_suite):
    start = time.perf_counter()
    reports = [check_kernel(inst, seed=0, draws=200_000, label=name)
               for name, inst in small_suite.items() if inst.n <= 6]
    elapsed = time.perf_counter() - start
    worst_row = max(r.details["max_row_deviation"] for r in reports)
    worst_z = max(s["max_z"] for r in reports for s in r.details["sampled"])
    ok = all(r.verdict == "pass" for r in reports) and elapsed < 60
    record(1, ok, f"kernel: {len(reports)} instances, max |row sum - 1| = {worst_row:.2e}, "
                  f"max sampled z = {worst_z:.2f} (limit 3), {elapsed:.1f}s")
    assert ok, [r.violations for r in reports if r.violations]


def test_criterion_02_submodularity():
    start = time.perf_counter()
    six = [check_submodularity(bundled(name), label=name) for name in ("six_a", "six_b")]
    four = [check_submodularity(bundled(name), label=name) for name in ("toy4", "four")]
    elapsed = time.perf_counter() - start
    excess = max(r.details["max_excess"] for r in six)
    profile = max(r.details["profile_max_deviation"] for r in four)
    ok = (all(r.verdict == "pass" for r in six) and profile <= TOL and elapsed < 600)
    record(2, ok, f"submodularity: n=6 violations={sum(len(r.violations) for r in six)} "
                  f"(max excess {excess:.1e}), n=4 profile deviation {profile:.1e}, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_03_greedy_ratio():
    start = time.perf_counter()
    reports = [check_greedy_ratio(bundled(name), label=name) for name in ("six_a", "six_b")]
    elapsed = time.perf_counter() - start
    worst = min(r.details["min_ratio"] for r in reports)
    ok = worst >= GREEDY_BOUND - TOL and elapsed < 300
    record(3, ok, f"greedy ratio: min over states {worst:.6f} vs bound {GREEDY_BOUND:.6f}, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_04_multi_bellman_equivalence():
    inst = bundled("five")
    assert inst.n == 5 and inst.budget == 3
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    devs = [check_equivalence(inst, random_value_table(inst, rng)).details["max_deviation"]
            for _ in range(20)]
    elapsed = time.perf_counter() - start
    ok = max(devs) <= TOL and elapsed < 300
    record(4, ok, f"multi-Bellman equivalence: max deviation {max(devs):.2e} over 20 tables, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_05_contraction(tmp_path):
    inst = bundled("five").replace(budget=2)
    start = time.perf_counter()
    opt = check_contraction(inst, "opt", pairs=100, seed=0, label="five k=2")
    hc = check_contraction(inst, "hc", pairs=100, seed=0, label="five k=2")
    elapsed = time.perf_counter() - start
    write_report(tmp_path / "contraction.json", [opt, hc])
    saved = json.loads((tmp_path / "contraction.json").read_text())
    ok = (opt.verdict == "pass" and hc.verdict in ("pass", "finding") and len(saved) == 2
          and elapsed < 300)
    record(5, ok, f"contraction: opt max ratio {opt.details['max_ratio']:.4f} (gamma "
                  f"{inst.gamma}), hc max ratio {hc.details['max_ratio']:.4f} verdict "
                  f"{hc.verdict}, {elapsed:.1f}s")
    assert ok


def test_criterion_06_value_iteration_rate():
    inst = bundled("toy4")
    assert inst.n == 4 and inst.gamma == 0.9
    start = time.perf_counter()
    opt = check_value_iteration_rate(inst, "opt")
    hc = check_value_iteration_rate(inst, "hc")
    elapsed = time.perf_counter() - start
    ok = opt.verdict == "pass" and hc.verdict in ("pass", "finding") and elapsed < 60
    record(6, ok, f"value iteration rate: opt {opt.verdict} ({opt.trials} steps), hc "
                  f"{hc.verdict} ({len(hc.violations)} excesses), {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_07_policy_ordering():
    inst, _ = load_instance(data_path("village_edgelist.txt"), data_path("village_attrs.json"))
    assert (inst.n, inst.n_edges, inst.budget) == (202, 692, 20)
    policies = ("hc-rollout", "lookahead1", "whittle", "topk", "random", "none")
    start = time.perf_counter()
    res = run_experiment(ExperimentConfig(inst, policies, tuple(range(10)), 50, 30))
    elapsed = time.perf_counter() - start
    final = {p: res.summary[p]["activation_mean"][-1] for p in policies}
    sd = {p: res.summary[p]["activation_sd"][-1] for p in policies}
    margins = {p: final[p] - final["none"] for p in policies if p != "none"}
    pooled = float(np.sqrt((sd["hc-rollout"] ** 2 + sd["lookahead1"] ** 2) / 2))
    ok = (min(margins.values()) >= 0.03
          and final["hc-rollout"] >= final["lookahead1"] - pooled
          and elapsed < 7200)
    shown = ", ".join(f"{p}={final[p]:.3f}" for p in policies)
    record(7, ok, f"policy ordering at t=30: {shown}; smallest margin over none "
                  f"{min(margins.values()):.3f}; hc-rollout - lookahead1 = "
                  f"{final['hc-rollout'] - final['lookahead1']:+.3f} (1 SD = {pooled:.3f}), "
                  f"{elapsed / 60:.1f} min")
    assert ok


@pytest.mark.slow
def test_criterion_08_learners_near_optimal():
    inst = bundled("ten")
    assert inst.n == 10
    lc = LearningConfig(episodes=300, steps_per_episode=1000)
    options = {"hc-qlearn": {"config": lc}, "tabular-qlearn": {"config": lc}}
    start = time.perf_counter()
    res = run_experiment(ExperimentConfig(inst, ("hc-qlearn", "tabular-qlearn"),
                                          tuple(range(10)), 50, 30, policy_options=options))
    elapsed = time.perf_counter() - start
    mean = {p: float(np.mean(res.summary[p]["activation_mean"]))
            for p in ("hc-qlearn", "tabular-qlearn")}
    gap = abs(mean["hc-qlearn"] - mean["tabular-qlearn"])
    ok = gap <= 0.03 and elapsed < 1800
    record(8, ok, f"learners on n=10: hc {mean['hc-qlearn']:.4f}, tabular "
                  f"{mean['tabular-qlearn']:.4f}, gap {100 * gap:.2f} pp (limit 3), "
                  f"{elapsed / 60:.1f} min")
    assert ok


@pytest.mark.slow
def test_criterion_09_scaling():
    start = time.perf_counter()
    tab = runtime_scaling("tabular", [8, 9, 10, 11, 12], k=3, trials=1)
    hc = runtime_scaling("hc", [25, 50, 100, 200], k=5, trials=5, m=200)
    elapsed = time.perf_counter() - start
    sweep = [r[4] for r in tab if r[3] == "sweep_seconds"]
    growth = [b / a for a, b in zip(sweep, sweep[1:])]
    decision = [r[4] for r in hc if r[3] == "decision_seconds"]
    slope = loglog_slope([25, 50, 100, 200], decision)
    ok = len(growth) == 4 and min(growth) >= 2.0 and slope < 2.0 and elapsed < 1800
    record(9, ok, f"scaling: tabular sweep growth per node "
                  f"{', '.join(f'{g:.2f}x' for g in growth)}; hill-climbing log-log slope "
                  f"{slope:.2f}, {elapsed:.1f}s")
    assert ok


def _digests(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())["outputs"]


def test_criterion_10_determinism(tmp_path):
    toy = str(data_path("four.json"))
    commands = {
        "ingest": lambda o: ["ingest", "--edgelist", "builtin:village_edgelist", "--attrs",
                             "builtin:village_attrs", "--out", str(o / "village.json"),
                             "--manifest", str(o / "manifest.json")],
        "generate": lambda o: ["generate", "--n", "9", "--edges", "12", "--k", "2", "--seed",
                               "4", "--out", str(o / "g.json"),
                               "--manifest", str(o / "manifest.json")],
        "evaluate": lambda o: ["evaluate", "--instance", toy, "--policies",
                               ",".join(("hc-rollout", "hc-qlearn", "tabular-qlearn", "whittle",
                                         "lookahead1", "topk", "random", "none")),
                               "--seeds", "0-1", "--runs", "3", "--horizon", "10",
                               "--episodes", "5", "--steps", "200", "--out-dir", str(o)],
        "verify": lambda o: ["verify", "--suite", "small-suite", "--pairs", "5",
                             "--kernel-draws", "5000", "--out-dir", str(o)],
        "train": lambda o: ["train", "--instance", toy, "--learner", "hc", "--episodes", "10",
                            "--steps", "200", "--seed", "2", "--out-dir", str(o)],
    }
    mismatched = []
    for name, argv in commands.items():
        runs = []
        for i in range(2):
            out = tmp_path / f"{name}{i}"
            out.mkdir()
            code = main(argv(out))
            assert code == 0, name
            runs.append(_digests(out))
        if runs[0] != runs[1]:
            mismatched.append(name)
    ok = not mismatched
    record(10, ok, f"determinism: {len(commands)} commands re-run, identical digests "
                   f"for {len(commands) - len(mismatched)}"
                   + (f"; mismatched {mismatched}" if mismatched else ""))
    assert ok
