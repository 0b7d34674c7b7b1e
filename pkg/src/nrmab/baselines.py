"""Comparison policies: Whittle index, one-step lookahead, top-k singletons,
hill-climbing with rollouts, random and no-intervention."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .dynamics import DENSE_MAX_NODES, ENUM_MAX_EDGES, reward_table
from .graph_model import Instance
from .planning import ExactQ, RolloutQ, SampledQ, _mask, hill_climb_select

logger = logging.getLogger(__name__)


class WhittleError(RuntimeError):
    pass


@dataclass
class Policy:
    """Maps a boolean state vector to an action set of at most ``k`` nodes.

    ``behavior(state, rng)`` returns node ids; ``select`` validates the budget
    and returns them sorted. ``batch_behavior(states, rng)`` is an optional
    vectorised form returning a boolean action matrix.
    """

    name: str
    behavior: Callable
    k: int
    metadata: dict = field(default_factory=dict)
    batch_behavior: Callable | None = None

    def select(self, state, rng=None) -> tuple[int, ...]:
        chosen = tuple(sorted(int(v) for v in self.behavior(np.asarray(state, dtype=bool), rng)))
        if len(chosen) > self.k or len(set(chosen)) != len(chosen):
            raise RuntimeError(f"policy {self.name} returned infeasible set {chosen}")
        return chosen

    def select_batch(self, states, rng=None) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=bool))
        if self.batch_behavior is not None:
            return self.batch_behavior(states, rng)
        out = np.zeros_like(states)
        for i, s in enumerate(states):
            out[i, list(self.select(s, rng))] = True
        return out


# ---------------------------------------------------------------------------
# Whittle index

def _arm_values(p1: np.ndarray, r: float, gamma: float, subsidy: float) -> np.ndarray:
    """Optimal ``Q[state, action]`` of one two-state arm with a passive subsidy.

    Solved exactly: evaluate all four deterministic policies by a linear
    solve and keep the pointwise-best value function.
    """
    P = np.stack([1.0 - p1, p1], axis=-1)          # P[s, a, s']
    R = np.array([[subsidy, 0.0], [r + subsidy, r]])   # R[s, a]
    best = None
    for a0 in (0, 1):
        for a1 in (0, 1):
            Ppi = np.array([P[0, a0], P[1, a1]])
            Rpi = np.array([R[0, a0], R[1, a1]])
            V = np.linalg.solve(np.eye(2) - gamma * Ppi, Rpi)
            best = V if best is None else np.maximum(best, V)
    return R + gamma * P @ best


@lru_cache(maxsize=4096)
def _arm_index(p1_key: tuple, r: float, gamma: float, state: int, tol: float,
               max_iter: int) -> float:
    p1 = np.array(p1_key).reshape(2, 2)

    def advantage(lam):
        Q = _arm_values(p1, r, gamma, lam)
        return Q[state, 1] - Q[state, 0]

    span = gamma * r / (1.0 - gamma) + 1.0
    lo, hi = -span, span
    if advantage(lo) < 0 or advantage(hi) > 0:
        raise WhittleError("active preference is not monotone in the subsidy")
    for _ in range(max_iter):
        if hi - lo <= tol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if advantage(mid) > 0:
            lo = mid
        else:
            hi = mid
    raise WhittleError(f"bisection did not reach tolerance {tol}")


def whittle_indices(inst: Instance, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Index ``lambda_v(sigma)`` of every arm in both states, shape ``(n, 2)``.

    The index is the passive subsidy at which the single-arm MDP (reward
    ``r(v) * sigma``, no network) is indifferent between acting and not.
    """
    out = np.empty((inst.n, 2))
    for v in range(inst.n):
        key = tuple(inst.activation_table[v].ravel().tolist())
        for sigma in (0, 1):
            try:
                out[v, sigma] = _arm_index(key, float(inst.rewards[v]), float(inst.gamma),
                                           sigma, tol, max_iter)
            except WhittleError as exc:
                raise WhittleError(f"arm {v} state {sigma}: {exc}") from None
    return out


def whittle_policy(inst: Instance) -> Policy:
    """Network-blind policy acting on the ``k`` arms with the largest current index.

    Ties go to higher reward, then lower node id. The budget is always filled.
    """
    idx = whittle_indices(inst)
    tiebreak = np.lexsort((np.arange(inst.n), -inst.reward_vector))
    tie_rank = np.empty(inst.n, dtype=np.int64)
    tie_rank[tiebreak] = np.arange(inst.n)
    k = inst.budget
    nodes = np.arange(inst.n)

    def current(states):
        return idx[nodes, states.astype(np.int64)]

    def behavior(state, rng):
        order = np.lexsort((tie_rank, -current(state)))
        return order[:k]

    def batch(states, rng):
        keys = -current(states)
        order = np.lexsort((np.broadcast_to(tie_rank, keys.shape), keys), axis=-1)
        out = np.zeros(states.shape, dtype=bool)
        np.put_along_axis(out, order[:, :k], True, axis=1)
        return out

    return Policy("whittle", behavior, k, {"indices": idx.tolist()}, batch)


# ---------------------------------------------------------------------------
# lookahead / top-k / rollout

class ExpectedNextReward:
    """Exact ``E[R(s')]`` for an action set, as a Q source (gamma plays no role)."""

    mode = "exact"

    def __init__(self, inst: Instance):
        self._q = ExactQ(inst, reward_table(inst))
        self.evaluations = 0

    def reset(self):
        pass

    def value(self, s, chosen) -> float:
        return float(self._q.expected_next(s, [_mask(chosen)])[0])

    def gains(self, s, chosen, candidates) -> np.ndarray:
        base = _mask(chosen)
        self.evaluations += len(candidates)
        return self._q.expected_next(s, [base | (1 << int(c)) for c in candidates])


def _exact_ok(inst: Instance) -> bool:
    return inst.n <= DENSE_MAX_NODES and inst.n_edges <= ENUM_MAX_EDGES


def one_step_lookahead_policy(inst: Instance, m: int = 200, exact: bool | None = None,
                              trace: list | None = None) -> Policy:
    """Hill-climbing on the expected reward after one transition and cascade.

    Exact below the enumeration caps (unless ``exact=False``), otherwise
    ``m`` coupled samples per decision drawn from the rng passed to ``select``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    use_exact = _exact_ok(inst) if exact is None else exact
    exact_q = ExpectedNextReward(inst) if use_exact else None

    def behavior(state, rng):
        if exact_q is not None:
            q = exact_q
        else:
            q = SampledQ(inst, m, rng if rng is not None else np.random.default_rng(0),
                         discount=1.0, include_reward=False)
        return hill_climb_select(inst, q, state, trace=trace)

    return Policy("lookahead1", behavior, inst.budget,
                  {"mode": "exact" if use_exact else f"sampled(m={m})"})


def topk_singleton_select(inst: Instance, qsource, s, k: int | None = None) -> tuple[int, ...]:
    """Rank nodes by ``Q(s, {v})`` and keep the best ``k`` with positive gain over ``Q(s, {})``."""
    k = inst.budget if k is None else k
    base = qsource.value(s, ())
    vals = np.asarray(qsource.gains(s, (), np.arange(inst.n)), dtype=float)
    order = np.lexsort((np.arange(inst.n), -vals))
    return tuple(int(v) for v in order[:k] if vals[v] - base > 0)


def topk_singleton_policy(inst: Instance, qsource=None, m: int = 200) -> Policy:
    """Top-k singleton scoring; ``qsource`` defaults to the lookahead surrogate."""

    def behavior(state, rng):
        q = qsource
        if q is None:
            q = (ExpectedNextReward(inst) if _exact_ok(inst) else
                 SampledQ(inst, m, rng if rng is not None else np.random.default_rng(0),
                          discount=1.0, include_reward=False))
        q.reset()
        return topk_singleton_select(inst, q, state)

    return Policy("topk", behavior, inst.budget)


def hc_rollout_policy(inst: Instance, base: Policy | None = None, horizon: int = 4,
                      m: int = 16, lazy: bool = True) -> Policy:
    """Hill-climbing on rollout Q estimates under ``base`` (default: no intervention).

    ``lazy`` uses lazy re-evaluation of marginal gains; see ``hill_climb_select``.
    """
    if horizon < 1 or m < 1:
        raise ValueError("rollout horizon and sample count must be >= 1")
    base = none_policy(inst) if base is None else base

    def behavior(state, rng):
        q = RolloutQ(inst, base, horizon, m,
                     rng if rng is not None else np.random.default_rng(0))
        return hill_climb_select(inst, q, state, lazy=lazy)

    return Policy("hc-rollout", behavior, inst.budget,
                  {"base": base.name, "horizon": horizon, "m": m, "lazy": lazy})


# ---------------------------------------------------------------------------
# static

def none_policy(inst: Instance) -> Policy:
    return Policy("none", lambda s, rng: (), inst.budget,
                  batch_behavior=lambda states, rng: np.zeros(states.shape, dtype=bool))


def random_policy(inst: Instance) -> Policy:
    """Uniformly random set of ``min(k, n)`` nodes from the rng passed to ``select``."""
    k = min(inst.budget, inst.n)

    def behavior(state, rng):
        rng = rng if rng is not None else np.random.default_rng(0)
        return rng.choice(inst.n, size=k, replace=False)

    def batch(states, rng):
        rng = rng if rng is not None else np.random.default_rng(0)
        keys = rng.random(states.shape)
        out = np.zeros(states.shape, dtype=bool)
        np.put_along_axis(out, np.argsort(keys, axis=1)[:, :k], True, axis=1)
        return out

    return Policy("random", behavior, inst.budget, batch_behavior=batch)


def static_policies(inst: Instance) -> dict[str, Policy]:
    return {"random": random_policy(inst), "none": none_policy(inst)}


# ---------------------------------------------------------------------------
# registry

POLICY_NAMES = ("hc-rollout", "hc-qlearn", "tabular-qlearn", "whittle", "lookahead1",
                "topk", "random", "none")


def build_policy(name: str, inst: Instance, options: dict | None = None) -> Policy:
    """Construct a named policy. ``options`` holds per-policy keyword arguments."""
    options = dict(options or {})
    if name == "none":
        return none_policy(inst)
    if name == "random":
        return random_policy(inst)
    if name == "whittle":
        return whittle_policy(inst)
    if name == "lookahead1":
        return one_step_lookahead_policy(inst, **options)
    if name == "topk":
        return topk_singleton_policy(inst, **options)
    if name == "hc-rollout":
        base_name = options.pop("base", "none")
        base = build_policy(base_name, inst) if isinstance(base_name, str) else base_name
        return hc_rollout_policy(inst, base=base, **options)
    if name in ("hc-qlearn", "tabular-qlearn"):
        from .learning import LearningConfig, learned_policy, q_learn_hc, q_learn_tabular
        cfg = options.pop("config", None) or LearningConfig(**options)
        learner = q_learn_hc if name == "hc-qlearn" else q_learn_tabular
        table = learner(inst, cfg)
        policy = learned_policy(inst, table)
        policy.name = name
        return policy
    raise KeyError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}")
