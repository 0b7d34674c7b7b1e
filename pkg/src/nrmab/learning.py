"""Tabular Q-learning over encoded states and action sets.

Both learners act with exactly ``min(k, n)`` nodes and share one exploration
stream, so they differ only in how a greedy set is found:

* ``q_learn_tabular`` keeps one column per size-``k`` set and takes the
  exhaustive argmax.
* ``q_learn_hc`` also keeps a column for every smaller set and builds the
  greedy set one node at a time, adding the node whose extended set has the
  largest value. After each update the smaller subsets of the executed set
  are backed up to the best value among their one-node extensions, which is
  what the one-node-at-a-time search reads.

At ``k == 1`` the two searches coincide, so equal seeds give identical runs.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ENUM_MAX_EDGES, ENUM_MAX_NODES, exact_model, members, reward_table, \
    rng_for
from .graph_model import Instance
from .planning import _mask

logger = logging.getLogger(__name__)

MAX_PAIRS = 5_000_000
SELECTORS = ("tabular", "hc")


class CapacityError(MemoryError):
    """The state-action table would exceed ``MAX_PAIRS`` entries."""


@dataclass(frozen=True)
class LearningConfig:
    """Training budget and schedules.

    ``alpha`` is a constant in (0, 1], ``"1/visits"``, or ``"1/visits^w"``
    with ``0.5 < w <= 1`` (a polynomial step size).
    ``epsilon`` decays linearly from ``epsilon_start`` to ``epsilon_end``
    over all training steps.
    """

    episodes: int = 200
    steps_per_episode: int = 1000
    alpha: float | str = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    seed: int = 0
    start: str = "zeros"
    init_value: float = 0.0

    def __post_init__(self):
        if isinstance(self.alpha, str):
            self.alpha_exponent  # validates
        elif not 0.0 < float(self.alpha) <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("epsilon_start", "epsilon_end"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {x}")
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise ValueError("episodes and steps_per_episode must be >= 1")
        if self.start not in ("zeros", "random"):
            raise ValueError("start must be 'zeros' or 'random'")
        if not math.isfinite(self.init_value):
            raise ValueError("init_value must be finite")

    @property
    def alpha_exponent(self) -> float | None:
        """``w`` of a ``1/visits^w`` schedule, or None for a constant rate."""
        if not isinstance(self.alpha, str):
            return None
        head, _, w = self.alpha.partition("^")
        try:
            w = float(w) if w else 1.0
        except ValueError:
            w = -1.0
        if head.strip() != "1/visits" or not 0.5 < w <= 1.0:
            raise ValueError(f"alpha schedule must be a number, '1/visits' or '1/visits^w' "
                             f"with 0.5 < w <= 1, got {self.alpha!r}")
        return w

    @property
    def total_steps(self) -> int:
        return self.episodes * self.steps_per_episode

    def epsilon(self, step: int) -> float:
        total = self.total_steps
        if total <= 1:
            return self.epsilon_end
        frac = min(step / (total - 1), 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def feasible_sets(n: int, k: int, exact: bool = False) -> list[tuple[int, ...]]:
    """Action sets as sorted tuples in lexicographic order.

    All sets of size ``<= k`` (the empty set first), or only size ``k`` when
    ``exact`` is set.
    """
    k = min(k, n)
    sizes = [k] if exact else range(k + 1)
    sets = [c for j in sizes for c in itertools.combinations(range(n), j)]
    sets.sort()
    return sets


@dataclass
class QTable:
    """Dense ``Q[state, action column]`` with visit counts.

    ``action_masks[j]`` is the bitmask of column ``j``; ``col_of_mask`` maps
    any mask back to its column (``-1`` when infeasible).
    """

    n: int
    k: int
    action_masks: np.ndarray
    values: np.ndarray
    visits: np.ndarray
    selector: str = "tabular"
    returns: list = field(default_factory=list)

    def __post_init__(self):
        self.action_masks = np.asarray(self.action_masks, dtype=np.int64)
        self.col_of_mask = np.full(1 << self.n, -1, dtype=np.int64)
        self.col_of_mask[self.action_masks] = np.arange(len(self.action_masks))
        sizes = np.array([bin(int(m)).count("1") for m in self.action_masks])
        if np.any(sizes > self.k):
            raise ValueError("action set larger than the budget in QTable")
        if self.values.shape != (1 << self.n, len(self.action_masks)):
            raise ValueError("values shape does not match states x actions")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("QTable has non-finite values")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}")

    @classmethod
    def empty(cls, n: int, k: int, selector: str = "tabular", init_value: float = 0.0):
        masks = [_mask(c) for c in feasible_sets(n, k, exact=selector == "tabular")]
        pairs = (1 << n) * len(masks)
        if pairs > MAX_PAIRS:
            raise CapacityError(f"table needs {pairs} state-action pairs, cap is {MAX_PAIRS}")
        return cls(n, k, np.array(masks, dtype=np.int64),
                   np.full((1 << n, len(masks)), float(init_value)),
                   np.zeros((1 << n, len(masks)), dtype=np.int64), selector)

    @property
    def n_actions(self) -> int:
        return len(self.action_masks)

    @property
    def full_columns(self) -> np.ndarray:
        """Columns of the size-``min(k, n)`` sets, in lexicographic order."""
        size = min(self.k, self.n)
        sizes = np.array([bin(int(m)).count("1") for m in self.action_masks])
        return np.flatnonzero(sizes == size)

    def greedy_column(self, s: int) -> int:
        if self.selector == "tabular":
            return int(np.argmax(self.values[s]))
        return hill_climb_column(self, s)

    def greedy_value(self, s: int) -> float:
        return float(self.values[s, self.greedy_column(s)])

    def greedy_action(self, s: int) -> tuple[int, ...]:
        return members(int(self.action_masks[self.greedy_column(s)]))

    # serialization: one row per (state, action) pair
    def save(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# n={self.n} k={self.k} selector={self.selector}\n")
            w = csv.writer(fh)
            w.writerow(["state", "action", "value", "visits"])
            for s in range(1 << self.n):
                for j, m in enumerate(self.action_masks):
                    w.writerow([s, int(m), repr(float(self.values[s, j])), int(self.visits[s, j])])

    @classmethod
    def load(cls, path) -> "QTable":
        with open(path, encoding="utf-8") as fh:
            header = dict(tok.split("=") for tok in fh.readline().lstrip("# ").split())
            rows = list(csv.DictReader(fh))
        n, k = int(header["n"]), int(header["k"])
        masks = sorted({int(r["action"]) for r in rows}, key=lambda m: members(m))
        table = cls(n, k, np.array(masks, dtype=np.int64),
                    np.zeros((1 << n, len(masks))),
                    np.zeros((1 << n, len(masks)), dtype=np.int64), header["selector"])
        for r in rows:
            j = table.col_of_mask[int(r["action"])]
            table.values[int(r["state"]), j] = float(r["value"])
            table.visits[int(r["state"]), j] = int(r["visits"])
        return table


def hill_climb_column(table: QTable, s: int) -> int:
    """Greedy set construction on one table row.

    Adds, ``min(k, n)`` times, the node whose extended set has the largest
    looked-up value; ties go to the lowest node id.
    """
    row = table.values[s]
    col = table.col_of_mask
    mask = 0
    bits = 1 << np.arange(table.n, dtype=np.int64)
    for _ in range(min(table.k, table.n)):
        cand = np.flatnonzero((mask & bits) == 0)
        best = int(np.argmax(row[col[mask | bits[cand]]]))
        mask |= int(bits[cand[best]])
    return int(col[mask])


def backup_subsets(table: QTable, s: int, mask: int) -> None:
    """Set ``Q(s, B)`` for every proper subset ``B`` of ``mask`` to ``max_v Q(s, B + v)``.

    Subsets are processed from the largest down, so each level reads the
    level above it after that level was refreshed.
    """
    row = table.values[s]
    col = table.col_of_mask
    bits = 1 << np.arange(table.n, dtype=np.int64)
    nodes = members(mask)
    for size in range(len(nodes) - 1, -1, -1):
        for sub in itertools.combinations(nodes, size):
            b = _mask(sub)
            cand = np.flatnonzero((b & bits) == 0)
            row[col[b]] = row[col[b | bits[cand]]].max()


class StepSampler:
    """Samples ``s'`` for encoded ``(s, A)`` through the exact cascade law.

    Cascade outcome distributions are enumerated once per temporary state
    and cached as cumulative arrays, so a step costs ``n`` arm uniforms plus
    one uniform for the cascade.
    """

    def __init__(self, inst: Instance):
        if inst.n > ENUM_MAX_NODES or inst.n_edges > ENUM_MAX_EDGES:
            raise CapacityError("tabular sampling requires an enumerable cascade")
        self.inst = inst
        self.model = exact_model(inst)
        self.table = inst.activation_table
        self.nodes = np.arange(inst.n)
        self.weights = 1 << self.nodes
        self._cum: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def arm_probs(self, s: int, a: int) -> np.ndarray:
        return self.table[self.nodes, (s >> self.nodes) & 1, (a >> self.nodes) & 1]

    def cascade(self, u: int, x: float) -> int:
        entry = self._cum.get(u)
        if entry is None:
            dist = self.model.cascade_distribution(u)
            outs = np.fromiter(dist.keys(), dtype=np.int64, count=len(dist))
            cum = np.cumsum(np.fromiter(dist.values(), dtype=float, count=len(dist)))
            entry = (outs, cum / cum[-1])
            self._cum[u] = entry
        outs, cum = entry
        return int(outs[min(int(np.searchsorted(cum, x, side="right")), len(outs) - 1)])

    def step(self, s: int, a: int, rng: np.random.Generator) -> int:
        u = int(self.weights[rng.random(self.inst.n) < self.arm_probs(s, a)].sum())
        return self.cascade(u, rng.random())


def _explore_index(rng: np.random.Generator, eps: float, n_sets: int) -> int | None:
    """Shared exploration draw: with probability ``eps`` a uniform index into the
    size-``k`` sets, else None."""
    if rng.random() < eps:
        return int(rng.integers(n_sets))
    return None


def _train(inst: Instance, cfg: LearningConfig, selector: str) -> QTable:
    table = QTable.empty(inst.n, inst.budget, selector, cfg.init_value)
    sampler = StepSampler(inst)
    rewards = reward_table(inst)
    explore_rng = rng_for(cfg.seed, 1)
    env_rng = rng_for(cfg.seed, 0)
    gamma = inst.gamma
    full = table.full_columns
    hc = selector == "hc" and table.k > 1
    power = cfg.alpha_exponent
    const_alpha = float(cfg.alpha) if power is None else None
    step = 0
    for _ in range(cfg.episodes):
        s = 0 if cfg.start == "zeros" else int(env_rng.integers(1 << inst.n))
        ret, disc = 0.0, 1.0
        for _ in range(cfg.steps_per_episode):
            j = _explore_index(explore_rng, cfg.epsilon(step), len(full))
            j = table.greedy_column(s) if j is None else int(full[j])
            s2 = sampler.step(s, int(table.action_masks[j]), env_rng)
            r = rewards[s]
            target = r + gamma * table.greedy_value(s2)
            table.visits[s, j] += 1
            alpha = const_alpha if const_alpha is not None else table.visits[s, j] ** -power
            table.values[s, j] += alpha * (target - table.values[s, j])
            if hc:
                backup_subsets(table, s, int(table.action_masks[j]))
            ret += disc * r
            disc *= gamma
            s = s2
            step += 1
        table.returns.append(ret)
    return table


def q_learn_tabular(inst: Instance, cfg: LearningConfig | None = None) -> QTable:
    """Q-learning with epsilon-greedy behaviour and an exhaustive target max."""
    return _train(inst, cfg or LearningConfig(), "tabular")


def q_learn_hc(inst: Instance, cfg: LearningConfig | None = None) -> QTable:
    """Q-learning whose behaviour and target sets come from hill-climbing the table."""
    return _train(inst, cfg or LearningConfig(), "hc")


def learned_policy(inst: Instance, table: QTable):
    """Greedy policy read off a trained table (no exploration)."""
    from .baselines import Policy
    if table.n != inst.n:
        raise ValueError("table and instance disagree on n")
    weights = 1 << np.arange(inst.n)

    def behavior(state, rng):
        s = int(weights[np.asarray(state, dtype=bool)].sum())
        return table.greedy_action(s)

    name = "hc-qlearn" if table.selector == "hc" else "tabular-qlearn"
    return Policy(name, behavior, inst.budget, {"selector": table.selector})


def write_learning_curve(path, returns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "discounted_return"])
        for i, r in enumerate(returns, start=1):
            w.writerow([i, repr(float(r))])


def tabular_sweep(inst: Instance, k: int | None = None, rng=None, Q=None,
                  alpha: float = 1.0) -> tuple[np.ndarray, int]:
    """One synchronous sampled Q-learning pass over every state and every size-``k`` set.

    Each pair gets one sampled successor and one update against the previous
    table. Returns ``(Q, pairs_touched)``; ``pairs_touched == 2**n * C(n, k)``.
    """
    k = inst.budget if k is None else k
    rng = np.random.default_rng(0) if rng is None else rng
    masks = [_mask(c) for c in feasible_sets(inst.n, k, exact=True)]
    size = 1 << inst.n
    if size * len(masks) > MAX_PAIRS:
        raise CapacityError(f"sweep needs {size * len(masks)} pairs, cap is {MAX_PAIRS}")
    Q = np.zeros((size, len(masks))) if Q is None else np.asarray(Q, dtype=float)
    best = Q.max(axis=1)
    new = Q.copy()
    sampler = StepSampler(inst)
    rewards = reward_table(inst)
    gamma = inst.gamma
    pairs = 0
    for s in range(size):
        r = rewards[s]
        for j, a in enumerate(masks):
            s2 = sampler.step(s, a, rng)
            new[s, j] += alpha * (r + gamma * best[s2] - new[s, j])
            pairs += 1
    return new, pairs


def greedy_agreement(table: QTable, q_star, tol: float = 1e-9) -> float:
    """Fraction of states whose learned greedy set attains the optimal Q within ``tol``.

    ``q_star`` is an ``ExactQ`` built on the optimal value table; ties among
    optimal sets all count as agreement.
    """
    size = 1 << table.n
    hits = 0
    for s in range(size):
        q = q_star.q_masks(s, table.action_masks)
        hits += q[table.greedy_column(s)] >= q.max() - tol
    return hits / size
