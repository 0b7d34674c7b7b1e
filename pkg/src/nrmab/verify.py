"""Executable theory checks with pass / fail / finding reports.

``fail`` marks an implementation defect (e.g. a kernel row that does not
sum to one, or a broken classical contraction). ``finding`` marks a claimed
property that was not observed for an approximate operator; the witness is
kept in the report. ``skipped`` marks checks above the enumeration caps.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (
    DENSE_MAX_NODES,
    ENUM_MAX_EDGES,
    closure_table,
    decode,
    enumerate_profiles,
    exact_model,
    simulate_batch,
)
from .graph_model import Instance
from .planning import (
    ExactQ,
    SampledQ,
    bellman_hc,
    bellman_multi,
    bellman_opt,
    feasible_action_masks,
    hill_climb_select,
    q_table,
    value_iteration,
    _mask,
)

logger = logging.getLogger(__name__)

TOL = 1e-9
EXHAUSTIVE_MAX_NODES = 6
PROFILE_MAX_TERMS = 2_000_000
VERDICTS = ("pass", "fail", "finding", "skipped")
GREEDY_BOUND = 1.0 - 1.0 / math.e


@dataclass
class CheckReport:
    name: str
    instance: str
    trials: int
    violations: list = field(default_factory=list)
    verdict: str = "pass"
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if self.verdict == "pass" and self.violations:
            raise ValueError("a passing report cannot carry violations")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def describe(inst: Instance, label: str | None = None) -> str:
    base = f"n={inst.n} |E|={inst.n_edges} k={inst.budget} gamma={inst.gamma}"
    return f"{label} ({base})" if label else base


def _verdict(violations, bad: str = "fail") -> str:
    return bad if violations else "pass"


def _enumerable(inst: Instance) -> bool:
    return inst.n <= DENSE_MAX_NODES and inst.n_edges <= ENUM_MAX_EDGES


def _skipped(name: str, inst: Instance, label, reason: str) -> CheckReport:
    return CheckReport(name, describe(inst, label), 0, [], "skipped", {"reason": reason})


def random_value_table(inst: Instance, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from ``[0, R_max / (1 - gamma)]`` per state."""
    rmax = float(np.sum(inst.reward_vector))
    hi = rmax / (1.0 - inst.gamma)
    return rng.uniform(0.0, hi, size=1 << inst.n)


def modular_value_table(inst: Instance) -> np.ndarray:
    from .planning import modular_values
    return modular_values(inst)


# ---------------------------------------------------------------------------
# kernel

def check_kernel(inst: Instance, seed: int = 0, draws: int = 200_000, label=None,
                 sample_pairs: int = 1) -> CheckReport:
    """Row sums of the exact kernel, and sampled frequencies against exact probabilities.

    For ``sample_pairs`` random feasible ``(s, A)`` pairs, ``draws`` samples
    are taken through the simulator; every outcome frequency must lie within
    three standard errors ``sqrt(p(1-p)/draws)`` of its exact probability.
    """
    name = "kernel"
    if not _enumerable(inst):
        return _skipped(name, inst, label, "above enumeration caps")
    model = exact_model(inst)
    masks = feasible_action_masks(inst.n, inst.budget)
    violations = []
    worst = 0.0
    for s in range(1 << inst.n):
        for a in masks:
            dev = abs(model.kernel_row(s, int(a)).sum() - 1.0)
            worst = max(worst, dev)
            if dev > TOL:
                violations.append({"s": s, "a": int(a), "deviation": dev})
    rng = np.random.default_rng([seed, 7])
    sampled = []
    for _ in range(sample_pairs):
        s = int(rng.integers(1 << inst.n))
        a = int(masks[rng.integers(len(masks))])
        exact = model.kernel_row(s, a)
        states = np.tile(decode(s, inst.n), (draws, 1))
        acts = np.tile(decode(a, inst.n), (draws, 1))
        _, nxt = simulate_batch(inst, states, acts, rng)
        codes = nxt.astype(np.int64) @ (1 << np.arange(inst.n))
        freq = np.bincount(codes, minlength=1 << inst.n) / draws
        se = np.sqrt(exact * (1.0 - exact) / draws)
        z = np.abs(freq - exact)
        bad = np.flatnonzero(z > 3.0 * se + (se == 0) * TOL)
        for b in bad:
            violations.append({"s": s, "a": a, "outcome": int(b), "freq": float(freq[b]),
                               "exact": float(exact[b]), "se": float(se[b])})
        with np.errstate(divide="ignore", invalid="ignore"):
            zmax = float(np.nanmax(np.where(se > 0, z / se, 0.0)))
        sampled.append({"s": s, "a": a, "max_z": zmax})
    return CheckReport(name, describe(inst, label), int(len(masks) << inst.n) + sample_pairs,
                       violations, _verdict(violations),
                       {"max_row_deviation": worst, "sampled": sampled, "draws": draws})


# ---------------------------------------------------------------------------
# submodularity

def lattice_triples(n: int, max_size: int | None = None):
    """All ``(A, B, t)`` masks with ``A <= B``, ``t`` not in ``B`` and ``|B| + 1 <= max_size``."""
    max_size = n if max_size is None else max_size
    A, B, T = [], [], []
    for t in range(n):
        rest = [v for v in range(n) if v != t]
        for bsize in range(0, max_size):
            for b in itertools.combinations(rest, bsize):
                bm = _mask(b)
                for asize in range(bsize + 1):
                    for a in itertools.combinations(b, asize):
                        A.append(_mask(a))
                        B.append(bm)
                        T.append(1 << t)
    return np.array(A, dtype=np.int64), np.array(B, dtype=np.int64), np.array(T, dtype=np.int64)


def submodularity_violations(Q: np.ndarray, A, B, T, tol: float = TOL):
    """Per-state rows where ``Q(A+t) - Q(A) < Q(B+t) - Q(B) - tol``.

    Returns the list of ``(state, A, B, t, excess)`` and the largest excess.
    """
    gain_a = Q[:, A | T] - Q[:, A]
    gain_b = Q[:, B | T] - Q[:, B]
    excess = gain_b - gain_a
    bad = np.argwhere(excess > tol)
    out = [(int(s), int(A[j]), int(B[j]), int(T[j]).bit_length() - 1, float(excess[s, j]))
           for s, j in bad]
    return out, float(excess.max()) if excess.size else 0.0


def profile_future_values(inst: Instance, V, s: int, masks) -> np.ndarray:
    """``E[V(s')]`` for each action mask via the coupled coin-profile sum.

    Every profile fixes passive and active outcomes per node and the live
    edges, so the next state is a deterministic closure of the seed set.
    """
    V = np.asarray(V, dtype=float)
    x, y, pxy, zs, pz = enumerate_profiles(inst, s)
    masks = np.asarray(masks, dtype=np.int64)
    seeds = (y[None, :] & masks[:, None]) | (x[None, :] & ~masks[:, None])   # (A, profiles)
    out = np.zeros(len(masks))
    for z, p in zip(zs, pz):
        if p == 0.0:
            continue
        cl = closure_table(inst, int(z))
        out += p * (V[cl[seeds]] @ pxy)
    return out


def check_submodularity(inst: Instance, V=None, tol: float = TOL, label=None, seed: int = 0,
                        samples: int = 2000, max_size: int | None = None) -> CheckReport:
    """Diminishing returns of ``Q(s, .)`` plus the coin-profile decomposition oracle.

    Exhaustive over all states and triples up to ``EXHAUSTIVE_MAX_NODES``;
    above that, ``samples`` random triples are checked (exactly while the
    kernel is enumerable, through ``SampledQ`` otherwise).
    """
    name = "submodularity"
    V = modular_value_table(inst) if V is None and _enumerable(inst) else V
    if inst.n <= EXHAUSTIVE_MAX_NODES and _enumerable(inst):
        Q = q_table(inst, V)
        A, B, T = lattice_triples(inst.n, max_size)
        violations, worst = submodularity_violations(Q, A, B, T, tol)
        details = {"mode": "exhaustive", "triples_per_state": len(A), "max_excess": worst}
        trials = len(A) << inst.n
        terms = (3 ** inst.n) * (1 << inst.n_edges)
        if terms <= PROFILE_MAX_TERMS:
            q = ExactQ(inst, V)
            all_masks = np.arange(1 << inst.n)
            dev = 0.0
            for s in range(1 << inst.n):
                d = np.abs(profile_future_values(inst, V, s, all_masks) - q.expected_next(s, all_masks))
                dev = max(dev, float(d.max()))
            details["profile_max_deviation"] = dev
            if dev > tol:
                violations.append({"profile_decomposition_deviation": dev})
        else:
            details["profile_decomposition"] = "skipped: too many coin profiles"
        return CheckReport(name, describe(inst, label), trials, violations,
                           _verdict(violations), details)
    rng = np.random.default_rng([seed, 11])
    violations = []
    worst = -np.inf
    mode = "sampled-exact" if _enumerable(inst) else "sampled-monte-carlo"
    q = ExactQ(inst, V) if _enumerable(inst) else None
    for _ in range(samples):
        s = rng.random(inst.n) < 0.5
        perm = rng.permutation(inst.n)
        bsize = int(rng.integers(0, inst.n))
        asize = int(rng.integers(0, bsize + 1))
        b, t = tuple(perm[:bsize]), int(perm[bsize])
        a = tuple(perm[:asize])
        qe = q if q is not None else SampledQ(inst, 64, rng)
        qa, qb = qe.value(s, a), qe.value(s, b)
        qat, qbt = qe.value(s, a + (t,)), qe.value(s, b + (t,))
        excess = (qbt - qb) - (qat - qa)
        worst = max(worst, excess)
        if excess > tol:
            violations.append({"s": int(s @ (1 << np.arange(inst.n))), "A": list(map(int, a)),
                               "B": list(map(int, b)), "t": t, "excess": float(excess)})
    return CheckReport(name, describe(inst, label), samples, violations, _verdict(violations),
                       {"mode": mode, "max_excess": float(worst)})


# ---------------------------------------------------------------------------
# greedy ratio

def check_greedy_ratio(inst: Instance, V=None, label=None, tol: float = TOL) -> CheckReport:
    """Per-state ``Q(s, A_hc) / max_A Q(s, A)`` against ``1 - 1/e``.

    The bound is asserted only on states where ``Q(s, .)`` is non-negative,
    monotone and submodular over the sets it is evaluated on; other states
    are listed separately.
    """
    name = "greedy_ratio"
    if not _enumerable(inst):
        return _skipped(name, inst, label, "above enumeration caps")
    V = modular_value_table(inst) if V is None else np.asarray(V, float)
    q = ExactQ(inst, V)
    masks = feasible_action_masks(inst.n, inst.budget)
    k = min(inst.budget, inst.n)
    Q = q_table(inst, V, max_size=k)
    A, B, T = lattice_triples(inst.n, k)
    gain_a = Q[:, A | T] - Q[:, A]
    gain_b = Q[:, B | T] - Q[:, B]
    sub_ok = np.all(gain_b - gain_a <= tol, axis=1)
    mono_ok = np.all(gain_a >= -tol, axis=1)
    ratios = np.empty(1 << inst.n)
    violations, outside = [], []
    for s in range(1 << inst.n):
        hc = hill_climb_select(inst, q, s)
        best = float(np.max(q.q_masks(s, masks)))
        val = q.value(s, hc)
        ratios[s] = 1.0 if best == 0 else val / best
        nonneg = q.value(s, ()) >= -tol
        if not (sub_ok[s] and mono_ok[s] and nonneg):
            outside.append(s)
            continue
        if ratios[s] < GREEDY_BOUND - tol:
            violations.append({"s": s, "hc": list(hc), "ratio": float(ratios[s])})
    held = np.setdiff1d(np.arange(1 << inst.n), outside)
    return CheckReport(name, describe(inst, label), 1 << inst.n, violations,
                       _verdict(violations),
                       {"min_ratio": float(ratios.min()),
                        "min_ratio_where_preconditions_hold":
                            float(ratios[held].min()) if len(held) else None,
                        "precondition_failures": outside, "bound": GREEDY_BOUND})


# ---------------------------------------------------------------------------
# multi-Bellman equivalence

def check_equivalence(inst: Instance, V=None, label=None, tol: float = TOL) -> CheckReport:
    """Composite of the per-node meta operator against one hill-climbing backup."""
    name = "equivalence"
    if not _enumerable(inst):
        return _skipped(name, inst, label, "above enumeration caps")
    V = modular_value_table(inst) if V is None else np.asarray(V, float)
    dev = np.abs(bellman_multi(inst, V) - bellman_hc(inst, V))
    bad = np.flatnonzero(dev > tol)
    violations = [{"s": int(s), "deviation": float(dev[s])} for s in bad]
    return CheckReport(name, describe(inst, label), 1 << inst.n, violations,
                       _verdict(violations), {"max_deviation": float(dev.max())})


# ---------------------------------------------------------------------------
# contraction and value-iteration rate

_OPS = {"opt": bellman_opt, "hc": bellman_hc, "multi": bellman_multi}


def check_contraction(inst: Instance, operator: str = "opt", pairs: int = 100, seed: int = 0,
                      label=None, tol: float = TOL, witnesses: int = 3) -> CheckReport:
    """Sup-norm ratio ``|BV1 - BV2| / |V1 - V2|`` on random table pairs.

    Excess over ``gamma`` fails for the exact operator and is a finding for
    the approximate ones.
    """
    name = f"contraction[{operator}]"
    if not _enumerable(inst):
        return _skipped(name, inst, label, "above enumeration caps")
    op = _OPS[operator]
    rng = np.random.default_rng([seed, 13])
    ratios, violations, skipped = [], [], 0
    for i in range(pairs):
        V1, V2 = random_value_table(inst, rng), random_value_table(inst, rng)
        denom = float(np.max(np.abs(V1 - V2)))
        if denom == 0.0:
            skipped += 1
            continue
        ratio = float(np.max(np.abs(op(inst, V1) - op(inst, V2)))) / denom
        ratios.append(ratio)
        if ratio > inst.gamma + tol:
            violations.append({"pair": i, "ratio": ratio, "V1": V1, "V2": V2})
    violations.sort(key=lambda v: -v["ratio"])
    excess_count = len(violations)
    violations = violations[:witnesses]
    bad = "fail" if operator == "opt" else "finding"
    return CheckReport(name, describe(inst, label), len(ratios), violations,
                       _verdict(violations, bad),
                       {"max_ratio": max(ratios) if ratios else None, "gamma": inst.gamma,
                        "pairs_over_gamma": excess_count, "degenerate_pairs": skipped})


def check_value_iteration_rate(inst: Instance, operator: str = "opt", label=None,
                               tol: float = TOL, max_iters: int = 2000) -> CheckReport:
    """Geometric decay of successive changes and the a-priori error envelope."""
    name = f"vi_rate[{operator}]"
    if not _enumerable(inst):
        return _skipped(name, inst, label, "above enumeration caps")
    V_star, trace, iterates = value_iteration(inst, operator, tol=1e-12, max_iters=max_iters,
                                              keep_iterates=True)
    g = inst.gamma
    d = trace.deltas
    violations = []
    for t in range(1, len(d)):
        if d[t] > g * d[t - 1] + tol:
            violations.append({"kind": "delta", "t": t + 1, "delta": d[t], "previous": d[t - 1]})
    for t, Vt in enumerate(iterates):
        err = float(np.max(np.abs(Vt - V_star)))
        bound = g ** t / (1.0 - g) * d[0] + tol
        if err > bound:
            violations.append({"kind": "envelope", "t": t, "error": err, "bound": bound})
    bad = "fail" if operator == "opt" else "finding"
    return CheckReport(name, describe(inst, label), len(d), violations, _verdict(violations, bad),
                       {"iterations": len(d), "converged": trace.converged,
                        "deltas_head": d[:5]})


# ---------------------------------------------------------------------------
# suite

def run_checks(inst: Instance, seed: int = 0, label=None, pairs: int = 100,
               kernel_draws: int = 200_000) -> list[CheckReport]:
    """Every check on one instance; never raises for theorem-level outcomes."""
    rng = np.random.default_rng([seed, 17])
    reports = [check_kernel(inst, seed, kernel_draws, label)]
    reports.append(check_submodularity(inst, label=label, seed=seed))
    reports.append(check_greedy_ratio(inst, label=label))
    V = random_value_table(inst, rng) if _enumerable(inst) else None
    reports.append(check_equivalence(inst, V, label=label))
    for op in ("opt", "hc"):
        reports.append(check_contraction(inst, op, pairs, seed, label))
    for op in ("opt", "hc"):
        reports.append(check_value_iteration_rate(inst, op, label))
    return reports


def exit_status(reports) -> int:
    return 2 if any(r.verdict == "fail" for r in reports) else 0


def text_summary(reports) -> str:
    lines = []
    for r in reports:
        extra = ""
        for key in ("max_deviation", "max_excess", "min_ratio", "max_ratio", "max_row_deviation",
                    "reason"):
            if key in r.details and r.details[key] is not None:
                val = r.details[key]
                extra = f" {key}={val:.3g}" if isinstance(val, float) else f" {key}={val}"
                break
        lines.append(f"{r.verdict.upper():8s} {r.name:22s} {r.instance} trials={r.trials}"
                     f" violations={len(r.violations)}{extra}")
    counts = {v: sum(r.verdict == v for r in reports) for v in VERDICTS}
    lines.append(", ".join(f"{k}={v}" for k, v in counts.items()))
    return "\n".join(lines)


def write_report(path, reports) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1, sort_keys=True)
        fh.write("\n")
