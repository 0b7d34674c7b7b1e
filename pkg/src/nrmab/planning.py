"""Value functions, Q evaluators, hill-climbing selection and Bellman operators.

Value tables are plain float arrays indexed by encoded state (length ``2**n``).

Three Q evaluators share one small interface (``value`` and ``gains``) so the
same hill-climbing routine drives exact planning, sampled one-step lookahead
and rollout estimates on large graphs:

* ``ExactQ``   -- ``R(s) + gamma * sum_s' P(s'|s,A) V(s')`` by enumeration.
* ``SampledQ`` -- same with a modular terminal value, averaged over ``m``
  coupled coin profiles drawn once per decision state.
* ``RolloutQ`` -- discounted return of taking ``A`` then following a base
  policy for ``horizon - 1`` steps, averaged over ``m`` coupled rollouts.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    DENSE_MAX_NODES,
    EnumerationCapError,
    arm_activation_probs,
    arm_distribution_matrix,
    decode,
    encode,
    exact_model,
    live_components,
    members,
    reward_table,
    simulate_batch,
    spread,
)
from .graph_model import Instance

logger = logging.getLogger(__name__)

MAX_ACTION_SETS = 200_000


def _code(s) -> int:
    return int(s) if isinstance(s, (int, np.integer)) else encode(s)


def _bool_state(inst: Instance, s) -> np.ndarray:
    if isinstance(s, (int, np.integer)):
        return decode(int(s), inst.n)
    return np.asarray(s, dtype=bool)


def _mask(nodes) -> int:
    out = 0
    for v in nodes:
        out |= 1 << int(v)
    return out


# ---------------------------------------------------------------------------
# value tables

def check_value_table(inst: Instance, V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape != (1 << inst.n,):
        raise ValueError(f"value table must have length 2**{inst.n}, got {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValueError("value table has non-finite entries")
    return V


def modular_values(inst: Instance, weights=None) -> np.ndarray:
    """``V(s) = sum_v w_v s_v`` for every state; weights default to node rewards."""
    if weights is None:
        return reward_table(inst)
    from .dynamics import bit_matrix
    return bit_matrix(inst.n).astype(float) @ np.asarray(weights, dtype=float)


def save_value_table(path, V) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("state,value\n")
        for i, x in enumerate(np.asarray(V, dtype=float)):
            fh.write(f"{i},{float(x)!r}\n")


def load_value_table(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(rows[:, 0])
    return rows[order, 1]


# ---------------------------------------------------------------------------
# Q evaluators

class ExactQ:
    """Exact ``Q(s, A)`` for a fixed value table (enumeration scale only)."""

    mode = "exact"

    def __init__(self, inst: Instance, V):
        if inst.n > DENSE_MAX_NODES:
            raise EnumerationCapError(
                f"exact Q evaluation limited to n<={DENSE_MAX_NODES} (n={inst.n})")
        self.inst = inst
        self.V = check_value_table(inst, V)
        self.model = exact_model(inst)
        self.after_cascade = self.model.expected_after_cascade(self.V)
        self.rewards = self.model.rewards
        self.evaluations = 0

    def reset(self):
        pass

    def expected_next(self, s, masks) -> np.ndarray:
        """``E[V(s') | s, A]`` for each action mask."""
        return arm_distribution_matrix(self.inst, _code(s), masks) @ self.after_cascade

    def q_masks(self, s, masks) -> np.ndarray:
        s = _code(s)
        return self.rewards[s] + self.inst.gamma * self.expected_next(s, masks)

    def value(self, s, chosen: Sequence[int]) -> float:
        return float(self.q_masks(s, [_mask(chosen)])[0])

    def gains(self, s, chosen: Sequence[int], candidates) -> np.ndarray:
        base = _mask(chosen)
        masks = [base | (1 << int(c)) for c in candidates]
        self.evaluations += len(masks)
        return self.q_masks(s, masks)


def q_exact(inst: Instance, V, s, a) -> float:
    """``R(s,a) + gamma * sum_{s'} P(s'|s,a) V(s')``; ``a`` is a mask or node ids."""
    a_mask = int(a) if isinstance(a, (int, np.integer)) else _mask(a)
    return float(ExactQ(inst, V).q_masks(s, [a_mask])[0])


class SampledQ:
    """Monte-Carlo ``Q`` with a modular terminal value ``V(s') = sum_v w_v s'_v``.

    Coin profiles are drawn once per decision state and reused for every
    candidate set, so comparisons between sets share noise and the sampled
    objective stays monotone and submodular in the action set.
    With ``include_reward=False`` and ``discount=1`` this is ``E[w . s']``,
    the one-step lookahead surrogate.
    """

    mode = "sampled"

    def __init__(self, inst: Instance, m: int, rng: np.random.Generator, weights=None,
                 discount: float | None = None, include_reward: bool = True):
        if m < 1:
            raise ValueError("need at least one sample")
        self.inst = inst
        self.m = m
        self.rng = rng
        self.weights = inst.reward_vector if weights is None else np.asarray(weights, float)
        self.discount = inst.gamma if discount is None else discount
        self.include_reward = include_reward
        self.evaluations = 0
        self._key = None

    def reset(self):
        """Forget cached profiles so the next query draws fresh ones."""
        self._key = None

    def _prepare(self, s: np.ndarray):
        key = s.tobytes()
        if key == self._key:
            return
        inst, m = self.inst, self.m
        table = inst.activation_table[np.arange(inst.n), s.astype(np.int64)]
        uni = self.rng.random((m, inst.n))
        live = self.rng.random((m, inst.n_edges)) < inst.edge_weights
        self.x = uni < table[:, 0]
        self.y = uni < table[:, 1]
        self.labels, self.ncomp = live_components(inst, live)
        self.comp_weight = np.bincount(self.labels.ravel(), weights=np.tile(self.weights, m),
                                       minlength=self.ncomp)
        self.base = float(inst.reward_vector @ s) if self.include_reward else 0.0
        self._key = key

    def _lit(self, chosen) -> np.ndarray:
        a = np.zeros(self.inst.n, dtype=bool)
        a[list(chosen)] = True
        seeds = np.where(a, self.y, self.x)
        lit = np.zeros(self.ncomp, dtype=bool)
        lit[self.labels[seeds]] = True
        return lit

    def value(self, s, chosen) -> float:
        s = _bool_state(self.inst, s)
        self._prepare(s)
        lit = self._lit(chosen)
        total = self.comp_weight[lit].sum() / self.m
        return self.base + self.discount * float(total)

    def gains(self, s, chosen, candidates) -> np.ndarray:
        s = _bool_state(self.inst, s)
        self._prepare(s)
        candidates = np.asarray(candidates, dtype=np.int64)
        self.evaluations += len(candidates)
        lit = self._lit(chosen)
        current = self.comp_weight[lit].sum() / self.m
        lab = self.labels[:, candidates]
        newly = self.y[:, candidates] & ~lit[lab]
        extra = (newly * self.comp_weight[lab]).sum(axis=0) / self.m
        return self.base + self.discount * (current + extra)


class RolloutQ:
    """Rollout estimate of ``Q(s, A)`` under a base policy.

    Takes ``A`` at ``s`` then follows ``base_policy`` (anything with
    ``select_batch(states, rng)``) for ``horizon - 1`` further steps. All
    rollouts for one decision state reuse the same arm uniforms and live-edge
    draws, so candidate sets are compared under common random numbers.
    """

    mode = "rollout"

    def __init__(self, inst: Instance, base_policy, horizon: int, m: int,
                 rng: np.random.Generator):
        if horizon < 1 or m < 1:
            raise ValueError("horizon and m must be >= 1")
        self.inst = inst
        self.base_policy = base_policy
        self.horizon = horizon
        self.m = m
        self.rng = rng
        self.evaluations = 0
        self._key = None

    def reset(self):
        self._key = None

    def _prepare(self, s: np.ndarray):
        key = s.tobytes()
        if key == self._key:
            return
        inst, m = self.inst, self.m
        table = inst.activation_table[np.arange(inst.n), s.astype(np.int64)]
        uni = self.rng.random((m, inst.n))
        live = self.rng.random((m, inst.n_edges)) < inst.edge_weights
        self.x = uni < table[:, 0]
        self.y = uni < table[:, 1]
        self.labels, self.ncomp = live_components(inst, live)
        self.future = []
        for _ in range(self.horizon - 2):
            uni_h = self.rng.random((m, inst.n))
            live_h = self.rng.random((m, inst.n_edges)) < inst.edge_weights
            lab_h, nc_h = live_components(inst, live_h)
            self.future.append((uni_h, lab_h, nc_h))
        self.policy_seed = int(self.rng.integers(2**63))
        self.base = float(inst.reward_vector @ s)
        self._key = key

    def _continuation(self, first: np.ndarray) -> np.ndarray:
        """Discounted reward from step 1 on, per row; rows are sample-major blocks of m."""
        inst, gamma = self.inst, self.inst.gamma
        rows = first.shape[0]
        sample = np.arange(rows) % self.m
        block = np.arange(rows) // self.m
        policy_rng = np.random.default_rng(self.policy_seed)
        states = first
        total = gamma * (states @ inst.reward_vector)
        for h, (uni_h, lab_h, nc_h) in enumerate(self.future, start=2):
            actions = self.base_policy.select_batch(states, policy_rng)
            u = uni_h[sample] < arm_activation_probs(inst, states, actions)
            labels = lab_h[sample] + (block * nc_h)[:, None]
            lit = np.zeros(nc_h * (block[-1] + 1), dtype=bool)
            lit[labels[u]] = True
            states = lit[labels]
            total = total + gamma ** h * (states @ inst.reward_vector)
        return total

    def _after_first(self, chosen) -> np.ndarray:
        a = np.zeros(self.inst.n, dtype=bool)
        a[list(chosen)] = True
        seeds = np.where(a, self.y, self.x)
        lit = np.zeros(self.ncomp, dtype=bool)
        lit[self.labels[seeds]] = True
        return lit

    def value(self, s, chosen) -> float:
        s = _bool_state(self.inst, s)
        self._prepare(s)
        if self.horizon == 1:
            return self.base
        lit = self._after_first(chosen)
        return self.base + float(self._continuation(lit[self.labels]).mean())

    def gains(self, s, chosen, candidates) -> np.ndarray:
        s = _bool_state(self.inst, s)
        self._prepare(s)
        candidates = np.asarray(candidates, dtype=np.int64)
        self.evaluations += len(candidates)
        if self.horizon == 1:
            return np.full(len(candidates), self.base)
        lit = self._after_first(chosen)
        current = lit[self.labels]                                   # (m, n)
        lab_c = self.labels[:, candidates]                            # (m, c)
        newly = self.y[:, candidates] & ~lit[lab_c]                   # (m, c)
        joins = (self.labels[:, None, :] == lab_c[:, :, None]) & newly[:, :, None]
        first = current[:, None, :] | joins                           # (m, c, n)
        first = first.transpose(1, 0, 2).reshape(-1, self.inst.n)
        cont = self._continuation(first).reshape(len(candidates), self.m)
        return self.base + cont.mean(axis=1)


# ---------------------------------------------------------------------------
# hill climbing

@dataclass
class GreedyStep:
    chosen: tuple[int, ...]
    candidates: np.ndarray
    values: np.ndarray
    picked: int | None


def hill_climb_select(inst: Instance, qeval, s, k: int | None = None, *,
                      stop_when_no_gain: bool = True, lazy: bool = False,
                      lazy_batch: int = 8, trace: list | None = None) -> tuple[int, ...]:
    """Greedily build an action set of at most ``k`` nodes.

    Each pass adds the candidate maximising ``Q(s, A + {c})``; ties go to the
    lowest node id. With ``stop_when_no_gain`` the loop ends once the best
    marginal gain is <= 0. ``lazy=True`` re-evaluates only the candidates
    whose stale gain could still win (exact for submodular objectives, a
    heuristic otherwise). Returns node ids in selection order.
    """
    k = inst.budget if k is None else k
    k = min(k, inst.n)
    chosen: list[int] = []
    remaining = np.arange(inst.n)
    current = qeval.value(s, ()) if stop_when_no_gain or lazy else None
    if lazy:
        return _lazy_greedy(inst, qeval, s, k, current, stop_when_no_gain, lazy_batch, trace)
    for _ in range(k):
        values = np.asarray(qeval.gains(s, chosen, remaining), dtype=float)
        best = int(np.argmax(values))
        if stop_when_no_gain and values[best] - current <= 0:
            if trace is not None:
                trace.append(GreedyStep(tuple(chosen), remaining, values, None))
            break
        pick = int(remaining[best])
        if trace is not None:
            trace.append(GreedyStep(tuple(chosen), remaining, values, pick))
        chosen.append(pick)
        current = values[best]
        remaining = np.delete(remaining, best)
    return tuple(chosen)


def _lazy_greedy(inst, qeval, s, k, current, stop_when_no_gain, batch, trace):
    chosen: list[int] = []
    cand = np.arange(inst.n)
    first = np.asarray(qeval.gains(s, chosen, cand), dtype=float) - current
    # entries: (-gain, node, round in which the gain was computed)
    heap = [(-g, int(c), 0) for c, g in zip(cand, first)]
    heapq.heapify(heap)
    rnd = 0
    while len(chosen) < k and heap:
        if heap[0][2] == rnd:
            neg, node, _ = heapq.heappop(heap)
            if stop_when_no_gain and -neg <= 0:
                break
            if trace is not None:
                trace.append(GreedyStep(tuple(chosen), np.array([node]),
                                        np.array([current - neg]), node))
            chosen.append(node)
            current -= neg
            rnd += 1
            continue
        stale = []
        while heap and len(stale) < batch and heap[0][2] != rnd:
            stale.append(heapq.heappop(heap)[1])
        nodes = np.array(stale, dtype=np.int64)
        fresh = np.asarray(qeval.gains(s, chosen, nodes), dtype=float) - current
        for node, g in zip(nodes, fresh):
            heapq.heappush(heap, (-g, int(node), rnd))
    return tuple(chosen)


def greedy_evaluation_count(n: int, k: int) -> int:
    """Candidate evaluations made by a full (non-lazy, non-stopping) greedy pass."""
    return sum(n - j + 1 for j in range(1, min(k, n) + 1))


# ---------------------------------------------------------------------------
# Bellman operators

def bellman_hc(inst: Instance, V, return_actions: bool = False):
    """One sweep of the hill-climbing Bellman operator over every state."""
    q = ExactQ(inst, V)
    size = 1 << inst.n
    out = np.empty(size)
    actions = []
    for s in range(size):
        A = hill_climb_select(inst, q, s)
        out[s] = q.value(s, A)
        actions.append(A)
    return (out, actions) if return_actions else out


def feasible_action_masks(n: int, k: int, max_sets: int = MAX_ACTION_SETS) -> np.ndarray:
    """All action masks with at most ``k`` members, in lexicographic order of member tuples."""
    count = sum(math.comb(n, j) for j in range(min(k, n) + 1))
    if count > max_sets:
        raise EnumerationCapError(f"{count} feasible action sets exceed cap {max_sets}")
    sets = [c for j in range(min(k, n) + 1) for c in itertools.combinations(range(n), j)]
    sets.sort()
    return np.array([_mask(c) for c in sets], dtype=np.int64)


def bellman_opt(inst: Instance, V, return_actions: bool = False,
                max_sets: int = MAX_ACTION_SETS):
    """Exact ``max_{|A|<=k} Q(s, A)`` for every state."""
    q = ExactQ(inst, V)
    masks = feasible_action_masks(inst.n, inst.budget, max_sets)
    size = 1 << inst.n
    out = np.empty(size)
    actions = []
    for s in range(size):
        vals = q.q_masks(s, masks)
        best = int(np.argmax(vals))
        out[s] = vals[best]
        actions.append(members(int(masks[best])))
    return (out, actions) if return_actions else out


def q_table(inst: Instance, V, max_size: int | None = None) -> np.ndarray:
    """``Q[s, mask]`` for every state and every action mask of size <= ``max_size``.

    Entries for larger masks are NaN. Budget is ignored here on purpose:
    the exhaustive checks look at set functions over all of ``2**V``.
    """
    q = ExactQ(inst, V)
    size = 1 << inst.n
    max_size = inst.n if max_size is None else max_size
    masks = np.arange(size)
    sizes = np.array([popcount_int(m) for m in masks])
    keep = sizes <= max_size
    out = np.full((size, size), np.nan)
    for s in range(size):
        out[s, keep] = q.q_masks(s, masks[keep])
    return out


def popcount_int(x: int) -> int:
    return bin(int(x)).count("1")


# ---------------------------------------------------------------------------
# multi-Bellman construction over meta-states (s, A, t)

def meta_discount(gamma: float, k: int) -> float:
    """Per-selection discount: the positive real ``k``-th root of ``gamma``."""
    return 0.0 if gamma == 0 else gamma ** (1.0 / k)


@dataclass(frozen=True)
class MetaState:
    s: int
    chosen: tuple[int, ...]
    t: int

    def __post_init__(self):
        if self.t != len(self.chosen):
            raise ValueError(f"meta-state step {self.t} but {len(self.chosen)} actions chosen")
        if len(set(self.chosen)) != len(self.chosen):
            raise ValueError("duplicate actions in meta-state")


def modified_reward(meta: MetaState, a: int, gamma_meta: float,
                    reward_fn: Callable[[int, tuple], float]) -> float:
    """Scaled marginal reward ``gamma_meta**(-t) * (R(s, A+{a}) - R(s, A))``."""
    diff = reward_fn(meta.s, meta.chosen + (a,)) - reward_fn(meta.s, meta.chosen)
    if diff == 0:
        return diff
    return diff / gamma_meta ** meta.t


class ExtendedValue:
    """Meta-state values synthesised from a base-state table.

    ``(s, (), 0)`` maps to ``V[s]``. A partially built meta-state
    ``(s, A, t)`` with ``t >= 1`` is valued as committing ``A`` now:
    ``gamma_meta**(k-t) * E[V(s') | s, A]``. Choosing the next action against
    this value reproduces the hill-climbing choice, since
    ``R~(s~, a) + gamma_meta * W(s, A+{a}, t+1)`` equals
    ``gamma_meta**(-t) * (Q(s, A+{a}) - R(s, A))``.
    """

    def __init__(self, inst: Instance, V):
        self.inst = inst
        self.q = ExactQ(inst, V)
        self.V = self.q.V
        self.k = inst.budget
        self.gamma_meta = meta_discount(inst.gamma, self.k)

    def expected_next(self, s: int, chosen) -> float:
        return float(self.q.expected_next(s, [_mask(chosen)])[0])

    def commit_value(self, s: int, chosen, t: int) -> float:
        return self.gamma_meta ** (self.k - t) * self.expected_next(s, chosen)

    def __call__(self, s: int, chosen, t: int) -> float:
        if t == 0 and not chosen:
            return float(self.V[s])
        return self.commit_value(s, chosen, t)

    def reward(self, s: int, chosen) -> float:
        return float(self.q.rewards[s])


def multi_bellman_step(inst: Instance, ext: ExtendedValue, meta: MetaState):
    """One application of the single-action operator at ``meta``.

    Returns ``(value, action)``. For ``t < k`` the action maximises
    ``R~ + gamma_meta * ext(next)`` over unchosen nodes (lowest id on ties);
    ``action`` is ``None`` when no candidate beats committing the current set.
    For ``t == k`` the chosen set is applied: value ``E[ext(s', (), 0)]``,
    action ``None``.
    """
    k = inst.budget
    if meta.t > k:
        raise ValueError(f"meta-state step {meta.t} exceeds budget {k}")
    gm = ext.gamma_meta
    if meta.t == k:
        row = ext.q.model.kernel_row(meta.s, _mask(meta.chosen))
        return float(row @ ext.V), None
    best_val, best_a = -np.inf, None
    for a in range(inst.n):
        if a in meta.chosen:
            continue
        val = (modified_reward(meta, a, gm, ext.reward)
               + gm * ext(meta.s, meta.chosen + (a,), meta.t + 1))
        if val > best_val:
            best_val, best_a = val, a
    stay = ext.commit_value(meta.s, meta.chosen, meta.t)
    if best_a is None or best_val - stay <= 0:
        return stay, None
    return best_val, best_a


def multi_bellman_composite(inst: Instance, V, s: int, ext: ExtendedValue | None = None):
    """Compose selection steps from ``(s, (), 0)`` and the final transition step.

    Returns ``(value, chosen)`` where
    ``value = R(s, ()) + sum_t gamma_meta**t R~_t + gamma_meta**k E[V(s')]``.
    """
    ext = ExtendedValue(inst, V) if ext is None else ext
    gm, k = ext.gamma_meta, inst.budget
    meta = MetaState(s, (), 0)
    total = ext.reward(s, ())
    while meta.t < k:
        _, a = multi_bellman_step(inst, ext, meta)
        if a is None:
            break
        total += gm ** meta.t * modified_reward(meta, a, gm, ext.reward)
        meta = MetaState(s, meta.chosen + (a,), meta.t + 1)
    final = MetaState(s, meta.chosen, k) if meta.t == k else None
    if final is not None:
        transition, _ = multi_bellman_step(inst, ext, final)
    else:
        transition = ext.expected_next(s, meta.chosen)
    total += gm ** k * transition
    return total, meta.chosen


def bellman_multi(inst: Instance, V) -> np.ndarray:
    ext = ExtendedValue(inst, V)
    return np.array([multi_bellman_composite(inst, V, s, ext)[0]
                     for s in range(1 << inst.n)])


def telescoped_reward(reward_fn, s: int, sequence: Sequence[int], gamma_meta) -> object:
    """``sum_t gamma_meta**t * R~_t`` along ``sequence``; exact if inputs are Fractions."""
    total, chosen = 0, ()
    for t, a in enumerate(sequence):
        total += gamma_meta ** t * modified_reward(MetaState(s, chosen, t), a,
                                                   gamma_meta, reward_fn)
        chosen = chosen + (a,)
    return total


# ---------------------------------------------------------------------------
# value iteration

OPERATORS = {"hc": bellman_hc, "opt": bellman_opt, "multi": bellman_multi}


@dataclass
class IterationTrace:
    deltas: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.deltas)


def value_iteration(inst: Instance, operator="opt", V0=None, tol: float = 1e-10,
                    max_iters: int = 2000, keep_iterates: bool = False):
    """Iterate ``operator`` until the sup-norm change is <= ``tol``.

    Returns ``(V, trace)``; with ``keep_iterates`` also the list of iterates.
    Non-convergence is reported through ``trace.converged`` and a warning.
    """
    op = OPERATORS[operator] if isinstance(operator, str) else operator
    V = np.zeros(1 << inst.n) if V0 is None else check_value_table(inst, V0).copy()
    trace = IterationTrace()
    iterates = [V]
    for _ in range(max_iters):
        V_next = op(inst, V)
        delta = float(np.max(np.abs(V_next - V)))
        trace.deltas.append(delta)
        V = V_next
        if keep_iterates:
            iterates.append(V)
        if delta <= tol:
            trace.converged = True
            break
    if not trace.converged:
        warnings.warn(f"value iteration did not converge in {max_iters} iterations "
                      f"(final delta {trace.deltas[-1]:.3e})", RuntimeWarning, stacklevel=2)
    return (V, trace, iterates) if keep_iterates else (V, trace)


def greedy_policy_from_values(inst: Instance, V, operator="opt") -> list[tuple[int, ...]]:
    op = bellman_opt if operator == "opt" else bellman_hc
    return op(inst, V, return_actions=True)[1]


# ---------------------------------------------------------------------------
# rollouts

def rollout_returns(inst: Instance, s, a, base_policy, horizon: int, m: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Discounted ``horizon``-step return of each of ``m`` independent rollouts."""
    if horizon < 1 or m < 1:
        raise ValueError("horizon and m must be >= 1")
    s = _bool_state(inst, s)
    a_vec = np.zeros(inst.n, dtype=bool)
    a_vec[list(a if not isinstance(a, (int, np.integer)) else members(int(a)))] = True
    states = np.tile(s, (m, 1))
    actions = np.tile(a_vec, (m, 1))
    total = np.full(m, float(inst.reward_vector @ s))
    for h in range(1, horizon):
        _, states = simulate_batch(inst, states, actions, rng)
        total += inst.gamma ** h * (states @ inst.reward_vector)
        if h < horizon - 1:
            actions = base_policy.select_batch(states, rng)
    return total


def rollout_q(inst: Instance, s, a, base_policy, horizon: int, m: int,
              rng: np.random.Generator) -> float:
    """Mean of ``rollout_returns``: a Monte-Carlo estimate of ``Q(s, a)``."""
    return float(rollout_returns(inst, s, a, base_policy, horizon, m, rng).mean())
