"""Monte-Carlo experiment harness: multi-seed rollouts, per-timestep metrics,
result files and runtime-scaling measurements."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import POLICY_NAMES, Policy, build_policy
from .dynamics import rng_for, sample_step
from .graph_model import Instance, SyntheticSpec, generate_synthetic
from .learning import MAX_PAIRS, LearningConfig, tabular_sweep
from .planning import SampledQ, greedy_evaluation_count, hill_climb_select

logger = logging.getLogger(__name__)

RAW_COLUMNS = ("policy", "seed", "run", "timestep", "active_count", "reward", "decision_ms")
LEARNED = ("hc-qlearn", "tabular-qlearn")


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run. ``policy_options`` maps a policy name to keyword arguments.

    Learned policies are trained once per master seed; their ``config``
    option (a ``LearningConfig`` or dict) gets its seed replaced by that
    master seed.
    """

    instance: Instance
    policies: tuple[str, ...]
    seeds: tuple[int, ...] = tuple(range(10))
    runs_per_seed: int = 50
    horizon: int = 30
    record_timing: bool = False
    policy_options: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.runs_per_seed < 1:
            raise ValueError("runs_per_seed must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise ValueError(f"unknown policies {unknown}; valid names: {', '.join(POLICY_NAMES)}")
        if not self.policies:
            raise ValueError("at least one policy is required")


@dataclass
class EpisodeLog:
    policy: str
    seed: int
    run: int
    active_counts: np.ndarray
    rewards: np.ndarray
    actions: list
    decision_ms: np.ndarray | None
    gamma: float

    @property
    def discounted_return(self) -> float:
        disc = self.gamma ** np.arange(len(self.rewards))
        return float(np.dot(disc, self.rewards))


@dataclass
class ExperimentResult:
    logs: list[EpisodeLog]
    summary: dict
    errors: dict[str, str]


def _policy_options(cfg: ExperimentConfig, name: str, seed: int) -> dict:
    opts = dict(cfg.policy_options.get(name, {}))
    if name in LEARNED:
        lc = opts.get("config", LearningConfig())
        if isinstance(lc, dict):
            lc = LearningConfig(**lc)
        opts = {"config": LearningConfig(**{**lc.to_dict(), "seed": int(seed)})}
    return opts


def run_episode(inst: Instance, policy: Policy, seed: int, run: int, horizon: int,
                record_timing: bool = False) -> EpisodeLog:
    """One trajectory from the all-inactive state.

    The environment draws from stream ``(seed, run, 0)`` and the policy from
    ``(seed, run, 1)``, so every policy sees the same environment noise.
    Entry ``t`` of the log describes ``s_{t+1}`` reached by the action at ``s_t``.
    """
    env_rng = rng_for(seed, run, 0)
    pol_rng = rng_for(seed, run, 1)
    s = np.zeros(inst.n, dtype=bool)
    counts = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon)
    ms = np.empty(horizon) if record_timing else None
    actions = []
    r = inst.reward_vector
    for t in range(horizon):
        start = time.perf_counter()
        a = policy.select(s, pol_rng)
        if ms is not None:
            ms[t] = 1e3 * (time.perf_counter() - start)
        _, s = sample_step(inst, s, a, env_rng)
        actions.append(a)
        counts[t] = int(s.sum())
        rewards[t] = float(r @ s)
    return EpisodeLog(policy.name, seed, run, counts, rewards, actions, ms, inst.gamma)


def _run_seed(cfg: ExperimentConfig, seed: int) -> tuple[list[EpisodeLog], dict[str, str]]:
    logs, errors = [], {}
    for name in cfg.policies:
        try:
            policy = build_policy(name, cfg.instance, _policy_options(cfg, name, seed))
        except Exception as exc:  # surfaced per policy, others continue
            logger.error("policy %s failed to build for seed %s: %s", name, seed, exc)
            errors[name] = f"{type(exc).__name__}: {exc}"
            continue
        for run in range(cfg.runs_per_seed):
            logs.append(run_episode(cfg.instance, policy, seed, run, cfg.horizon,
                                    cfg.record_timing))
    return logs, errors


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every policy for every seed and run; results are independent of ``workers``."""
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        parts = [_run_seed(cfg, seed) for seed in cfg.seeds]
    logs, errors = [], {}
    for part_logs, part_errors in parts:
        logs.extend(part_logs)
        for k, v in part_errors.items():
            errors.setdefault(k, v)
    order = {p: i for i, p in enumerate(cfg.policies)}
    logs.sort(key=lambda lg: (order[lg.policy], lg.seed, lg.run))
    return ExperimentResult(logs, summarize(logs, cfg.instance.n, cfg.policies, errors), errors)


def summarize(logs: list[EpisodeLog], n: int, policies=None, errors=None) -> dict:
    """Per-policy per-timestep mean and SD of activation fraction plus scalar aggregates."""
    policies = policies or sorted({lg.policy for lg in logs})
    errors = errors or {}
    out = {}
    for name in policies:
        mine = [lg for lg in logs if lg.policy == name]
        if not mine:
            out[name] = {"error": errors.get(name, "no episodes")}
            continue
        frac = np.array([lg.active_counts for lg in mine], dtype=float) / n
        rew = np.array([lg.rewards for lg in mine])
        sd = frac.std(axis=0, ddof=1) if len(mine) > 1 else np.zeros(frac.shape[1])
        entry = {
            "episodes": len(mine),
            "activation_mean": frac.mean(axis=0).tolist(),
            "activation_sd": sd.tolist(),
            "mean_cumulative_reward": float(rew.sum(axis=1).mean()),
            "mean_reward_per_timestep": float(rew.mean()),
            "mean_discounted_return": float(np.mean([lg.discounted_return for lg in mine])),
            "mean_decision_ms": None,
        }
        if all(lg.decision_ms is not None for lg in mine):
            entry["mean_decision_ms"] = float(np.mean([lg.decision_ms for lg in mine]))
        if name in errors:
            entry["error"] = errors[name]
        out[name] = entry
    return out


def write_raw_csv(path, logs: list[EpisodeLog]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        for lg in logs:
            for t in range(len(lg.rewards)):
                ms = "" if lg.decision_ms is None else f"{lg.decision_ms[t]:.3f}"
                w.writerow([lg.policy, lg.seed, lg.run, t + 1, int(lg.active_counts[t]),
                            repr(float(lg.rewards[t])), ms])


def read_raw_csv(path, gamma: float = 1.0) -> list[EpisodeLog]:
    """Rebuild episode logs (without action sets) from a raw CSV."""
    groups: dict[tuple, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault((row["policy"], int(row["seed"]), int(row["run"])), []).append(row)
    logs = []
    for (policy, seed, run), rows in groups.items():
        rows.sort(key=lambda r: int(r["timestep"]))
        ms = None if rows[0]["decision_ms"] == "" else np.array([float(r["decision_ms"]) for r in rows])
        logs.append(EpisodeLog(policy, seed, run,
                               np.array([int(r["active_count"]) for r in rows]),
                               np.array([float(r["reward"]) for r in rows]),
                               [], ms, gamma))
    return logs


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# runtime scaling

RUNTIME_COLUMNS = ("method", "n", "k", "measure", "value")


def scaling_instance(n: int, k: int, seed: int = 0, edges_per_node: float = 1.0) -> Instance:
    """Synthetic instance for timing: about ``edges_per_node * n`` edges."""
    max_edges = n * (n - 1) // 2
    spec = SyntheticSpec(n=n, n_edges=min(max_edges, max(1, round(edges_per_node * n))),
                         budget=k, gamma=0.95)
    return generate_synthetic(spec, seed)


def time_hill_climbing(inst: Instance, trials: int = 3, m: int = 32, seed: int = 0
                       ) -> tuple[float, int]:
    """Median wall-clock of one full hill-climbing decision and its evaluation count."""
    rng = np.random.default_rng(seed)
    s = rng.random(inst.n) < 0.3
    times, evals = [], 0
    for _ in range(trials):
        q = SampledQ(inst, m, rng)
        start = time.perf_counter()
        hill_climb_select(inst, q, s, stop_when_no_gain=False)
        times.append(time.perf_counter() - start)
        evals = q.evaluations
    return float(np.median(times)), evals


def time_tabular_sweep(inst: Instance, k: int, trials: int = 1, seed: int = 0
                       ) -> tuple[float, int]:
    """Median wall-clock of one synchronous sweep over all size-``k`` pairs."""
    rng = np.random.default_rng(seed)
    tabular_sweep(inst, k, rng)  # warm the cascade cache outside the timed region
    times, pairs = [], 0
    for _ in range(trials):
        start = time.perf_counter()
        _, pairs = tabular_sweep(inst, k, rng)
        times.append(time.perf_counter() - start)
    return float(np.median(times)), pairs


def runtime_scaling(family: str, n_list, k: int, trials: int = 3, seed: int = 0,
                    m: int = 32) -> list[tuple]:
    """Rows ``(method, n, k, measure, value)`` for the ``"hc"`` or ``"tabular"`` family.

    Tabular sizes past the pair cap produce a ``skipped`` row instead of an error.
    """
    n_list = list(n_list)
    if n_list != sorted(n_list):
        raise ValueError("n list must be sorted ascending")
    rows = []
    for n in n_list:
        if family == "hc":
            inst = scaling_instance(n, k, seed, edges_per_node=3.0)
            secs, evals = time_hill_climbing(inst, trials, m, seed)
            rows.append(("hc", n, k, "decision_seconds", secs))
            rows.append(("hc", n, k, "q_evaluations", evals))
        elif family == "tabular":
            pairs = (1 << n) * math.comb(n, k)
            if pairs > MAX_PAIRS:
                rows.append(("tabular", n, k, "skipped", pairs))
                continue
            inst = scaling_instance(n, k, seed, edges_per_node=1.0)
            secs, touched = time_tabular_sweep(inst, k, trials, seed)
            rows.append(("tabular", n, k, "sweep_seconds", secs))
            rows.append(("tabular", n, k, "pairs", touched))
        else:
            raise ValueError(f"unknown family {family!r}; use 'hc' or 'tabular'")
    return rows


def expected_hc_evaluations(n: int, k: int) -> int:
    return greedy_evaluation_count(n, k)


def loglog_slope(ns, values) -> float:
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(values, float))
    return float(np.polyfit(x, y, 1)[0])


def write_runtime_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUNTIME_COLUMNS)
        for row in rows:
            w.writerow([row[0], row[1], row[2], row[3],
                        repr(float(row[4])) if isinstance(row[4], float) else row[4]])
