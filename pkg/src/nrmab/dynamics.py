"""Two-phase stochastic kernel: independent arm transitions, then an independent cascade.

Exact routines work on *encoded* states and action sets: Python ints where
bit ``v`` (the ``2**v`` digit) is node ``v``. Simulators work on boolean
numpy vectors (or ``(batch, n)`` matrices), which scale to graphs of any size.

Cascade semantics within one timestep: every node active in the temporary
state ``u`` seeds the cascade, propagation is multi-hop until quiescence, and
each edge carries one live/blocked coin. One coin per undirected edge gives
the same outcome distribution as one attempt per direction, since only the
first attempt across an edge can ever change a node's status. Cascades never
deactivate nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .graph_model import Instance

ENUM_MAX_NODES = 16
ENUM_MAX_EDGES = 20
DENSE_MAX_NODES = 10


class EnumerationCapError(ValueError):
    """Exact enumeration requested above the configured size caps."""


# ---------------------------------------------------------------------------
# encodings

def encode(bits) -> int:
    return sum(1 << v for v, b in enumerate(bits) if b)


def decode(code: int, n: int) -> np.ndarray:
    return np.array([(code >> v) & 1 for v in range(n)], dtype=bool)


def members(mask: int) -> tuple[int, ...]:
    out, v = [], 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return tuple(out)


def action_mask(nodes: Iterable[int]) -> int:
    mask = 0
    for v in nodes:
        if mask >> v & 1:
            raise ValueError(f"duplicate action member {v}")
        mask |= 1 << v
    return mask


def check_action(inst: Instance, nodes: Iterable[int]) -> tuple[int, ...]:
    nodes = tuple(nodes)
    if len(set(nodes)) != len(nodes):
        raise ValueError(f"duplicate members in action set {nodes}")
    if len(nodes) > inst.budget:
        raise ValueError(f"action set of size {len(nodes)} exceeds budget {inst.budget}")
    if any(not 0 <= v < inst.n for v in nodes):
        raise ValueError(f"action set {nodes} references unknown node")
    return nodes


def popcount(x: int) -> int:
    return bin(x).count("1")


def bit_matrix(n: int) -> np.ndarray:
    """``(2**n, n)`` boolean matrix whose row ``c`` decodes code ``c``."""
    codes = np.arange(1 << n)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


# ---------------------------------------------------------------------------
# rng streams

def rng_for(master_seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, *stream)``.

    Streams are keyed by position, not by creation order, so parallel or
    reordered execution reproduces the same draws.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, stream)]))


# ---------------------------------------------------------------------------
# reward

def reward(inst: Instance, s, a=None) -> float:
    """Sum of node rewards over active nodes. The action does not enter."""
    if isinstance(s, (int, np.integer)):
        return float(sum(inst.rewards[v] for v in members(int(s))))
    return float(np.dot(inst.reward_vector, np.asarray(s, dtype=float)))


def reward_table(inst: Instance) -> np.ndarray:
    """Reward of every encoded state, length ``2**n``."""
    return bit_matrix(inst.n).astype(float) @ inst.reward_vector


# ---------------------------------------------------------------------------
# exact enumeration

def _check_caps(inst: Instance, max_nodes=ENUM_MAX_NODES, max_edges=ENUM_MAX_EDGES):
    if inst.n > max_nodes or inst.n_edges > max_edges:
        raise EnumerationCapError(
            f"exact enumeration limited to n<={max_nodes}, |E|<={max_edges} "
            f"(instance has n={inst.n}, |E|={inst.n_edges}); use sample_step / "
            f"simulate_batch instead")


def arm_probabilities(inst: Instance, s: int, actions) -> np.ndarray:
    """Activation probability of every arm for each action mask.

    Returns ``(len(actions), n)`` with entry ``P_v(s_v, a_v, u_v=1)``.
    """
    actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
    v = np.arange(inst.n)
    s_bits = (s >> v) & 1
    a_bits = (actions[:, None] >> v) & 1
    return inst.activation_table[v, s_bits[None, :], a_bits]


def arm_distribution_matrix(inst: Instance, s: int, actions) -> np.ndarray:
    """Rows are ``P(u | s, a)`` over all ``2**n`` temporary states, one per action mask."""
    p = arm_probabilities(inst, s, actions)
    m = p.shape[0]
    out = np.ones((m, 1))
    for v in range(inst.n):
        f = np.stack([1.0 - p[:, v], p[:, v]], axis=1)
        out = (f[:, :, None] * out[:, None, :]).reshape(m, -1)
    return out


class ExactModel:
    """Memoised exact kernel for one instance.

    Cascade distributions are computed per temporary state by branching only
    on edges that cross the current active frontier, so edges inside the
    active set or between inactive nodes are never enumerated.
    """

    def __init__(self, inst: Instance):
        _check_caps(inst)
        self.inst = inst
        self.n = inst.n
        self._edges = [(e.u, e.v, e.weight) for e in inst.edges]
        self._cascade: dict[int, dict[int, float]] = {}
        self._matrix = None
        self._rewards = None

    @property
    def rewards(self) -> np.ndarray:
        if self._rewards is None:
            self._rewards = reward_table(self.inst)
        return self._rewards

    def cascade_distribution(self, u: int) -> dict[int, float]:
        cached = self._cascade.get(u)
        if cached is not None:
            return cached
        out: dict[int, float] = {}
        edges = self._edges

        def branch(active: int, decided: int, prob: float):
            for i, (a, b, w) in enumerate(edges):
                if decided >> i & 1:
                    continue
                a_on, b_on = active >> a & 1, active >> b & 1
                if a_on != b_on:
                    other = b if a_on else a
                    branch(active | (1 << other), decided | (1 << i), prob * w)
                    branch(active, decided | (1 << i), prob * (1.0 - w))
                    return
            out[active] = out.get(active, 0.0) + prob

        branch(u, 0, 1.0)
        self._cascade[u] = out
        return out

    def cascade_matrix(self) -> np.ndarray:
        """Dense ``C[u, s']``; only for ``n <= DENSE_MAX_NODES``."""
        if self._matrix is None:
            if self.n > DENSE_MAX_NODES:
                raise EnumerationCapError(
                    f"dense cascade matrix limited to n<={DENSE_MAX_NODES}")
            size = 1 << self.n
            mat = np.zeros((size, size))
            for u in range(size):
                for s2, p in self.cascade_distribution(u).items():
                    mat[u, s2] = p
            self._matrix = mat
        return self._matrix

    def arm_distribution(self, s: int, a: int) -> np.ndarray:
        return arm_distribution_matrix(self.inst, s, [a])[0]

    def kernel_row(self, s: int, a: int) -> np.ndarray:
        """``P(s' | s, a)`` as a dense vector of length ``2**n``."""
        pu = self.arm_distribution(s, a)
        if self.n <= DENSE_MAX_NODES:
            return pu @ self.cascade_matrix()
        row = np.zeros(1 << self.n)
        for u in np.flatnonzero(pu):
            for s2, p in self.cascade_distribution(int(u)).items():
                row[s2] += pu[u] * p
        return row

    def expected_after_cascade(self, values: np.ndarray) -> np.ndarray:
        """``E[V(s') | u]`` for every temporary state ``u``."""
        return self.cascade_matrix() @ values


@lru_cache(maxsize=16)
def exact_model(inst: Instance) -> ExactModel:
    return ExactModel(inst)


def _as_code(state) -> int:
    if isinstance(state, (int, np.integer)):
        return int(state)
    return encode(state)


def _as_action(inst: Instance, a) -> int:
    if isinstance(a, (int, np.integer)):
        return int(a)
    return action_mask(check_action(inst, a))


def _to_dict(vec: np.ndarray) -> dict[int, float]:
    return {int(i): float(vec[i]) for i in np.flatnonzero(vec)}


def transition_step_distribution(inst: Instance, s, a) -> dict[int, float]:
    """``P(u | s, a)`` as ``{encoded u: probability}`` (zero-probability states omitted).

    ``a`` may be an encoded mask or an iterable of node ids.
    """
    _check_caps(inst)
    return _to_dict(exact_model(inst).arm_distribution(_as_code(s), _as_action(inst, a)))


def cascade_distribution(inst: Instance, u) -> dict[int, float]:
    _check_caps(inst)
    return dict(exact_model(inst).cascade_distribution(_as_code(u)))


def full_kernel(inst: Instance, s, a) -> dict[int, float]:
    _check_caps(inst)
    return _to_dict(exact_model(inst).kernel_row(_as_code(s), _as_action(inst, a)))


# ---------------------------------------------------------------------------
# sampling

def live_components(inst: Instance, live: np.ndarray) -> tuple[np.ndarray, int]:
    """Connected components of the live-edge subgraphs, one per row of ``live``.

    ``live`` is ``(batch, |E|)`` boolean. Returns ``(labels, n_components)``
    where ``labels`` is ``(batch, n)`` and labels are unique across rows.
    """
    live = np.atleast_2d(live)
    batch, n = live.shape[0], inst.n
    if inst.n_edges == 0:
        return np.arange(batch * n).reshape(batch, n), batch * n
    rows, cols = np.nonzero(live)
    offset = rows * n
    src = inst.edge_array[cols, 0] + offset
    dst = inst.edge_array[cols, 1] + offset
    graph = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)),
                       shape=(batch * n, batch * n))
    ncomp, labels = connected_components(graph, directed=False)
    return labels.reshape(batch, n), ncomp


def spread(labels: np.ndarray, ncomp: int, seeds: np.ndarray) -> np.ndarray:
    """Final active sets: every component containing a seed becomes active."""
    lit = np.zeros(ncomp, dtype=bool)
    lit[labels[seeds]] = True
    return lit[labels]


def arm_activation_probs(inst: Instance, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    v = np.arange(inst.n)
    return inst.activation_table[v, states.astype(np.int64), actions.astype(np.int64)]


def simulate_batch(inst: Instance, states: np.ndarray, actions: np.ndarray,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One kernel step for each row of ``states``/``actions`` (boolean ``(batch, n)``).

    Draws exactly ``batch*n`` arm uniforms followed by ``batch*|E|`` edge
    uniforms, independent of the states, so runs that share a generator stay
    aligned (common random numbers). Returns ``(u, s_next)``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=bool))
    actions = np.atleast_2d(np.asarray(actions, dtype=bool))
    batch = states.shape[0]
    arm_u = rng.random((batch, inst.n))
    edge_u = rng.random((batch, inst.n_edges))
    u = arm_u < arm_activation_probs(inst, states, actions)
    live = edge_u < inst.edge_weights
    labels, ncomp = live_components(inst, live)
    return u, spread(labels, ncomp, u)


def sample_step(inst: Instance, s: np.ndarray, a, rng: np.random.Generator
                ) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(u, s')`` for a single boolean state and an action (node ids or mask vector)."""
    s = np.asarray(s, dtype=bool)
    a_vec = np.asarray(a)
    if a_vec.dtype != bool or a_vec.shape != (inst.n,):
        a_vec = np.zeros(inst.n, dtype=bool)
        a_vec[list(check_action(inst, a))] = True
    u, s2 = simulate_batch(inst, s[None, :], a_vec[None, :], rng)
    return u[0], s2[0]


# ---------------------------------------------------------------------------
# coupled coin profiles

@dataclass(frozen=True)
class CoinProfile:
    """Passive outcomes ``x``, active outcomes ``y`` (per node) and live edges ``z``."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if np.any(self.x & ~self.y):
            raise ValueError("coupling violated: x_v = 1 requires y_v = 1")


def sample_coin_profile(inst: Instance, s, rng: np.random.Generator) -> CoinProfile:
    s = np.asarray(decode(s, inst.n) if isinstance(s, (int, np.integer)) else s, dtype=bool)
    table = inst.activation_table[np.arange(inst.n), s.astype(np.int64)]
    p_passive, p_active = table[:, 0], table[:, 1]
    x = rng.random(inst.n) < p_passive
    denom = 1.0 - p_passive
    with np.errstate(divide="ignore", invalid="ignore"):
        residual = np.where(denom > 0, (p_active - p_passive) / denom, 0.0)
    y = x | (rng.random(inst.n) < residual)
    z = rng.random(inst.n_edges) < inst.edge_weights
    return CoinProfile(x=x, y=y, z=z)


def apply_profile(inst: Instance, s, a, profile: CoinProfile) -> np.ndarray:
    """Deterministic next state given all coins: ``y`` for acted nodes, ``x`` otherwise."""
    a_vec = np.zeros(inst.n, dtype=bool)
    a_vec[list(check_action(inst, a if not isinstance(a, (int, np.integer))
                            else members(int(a))))] = True
    seeds = np.where(a_vec, profile.y, profile.x)
    labels, ncomp = live_components(inst, profile.z[None, :])
    return spread(labels, ncomp, seeds[None, :])[0]


def enumerate_profiles(inst: Instance, s: int):
    """All coin profiles for encoded state ``s`` with their probabilities.

    Returns ``(x_masks, y_masks, xy_prob, z_masks, z_prob)``: per-node outcome
    combinations ``(x,y) in {(0,0),(0,1),(1,1)}`` as encoded masks with their
    joint probability, and every live-edge mask with its probability.
    """
    n, m = inst.n, inst.n_edges
    table = inst.activation_table[np.arange(n), (s >> np.arange(n)) & 1]
    combos = 3 ** n
    digits = (np.arange(combos)[:, None] // 3 ** np.arange(n)) % 3
    # digit 0: x=0,y=0; 1: x=0,y=1; 2: x=1,y=1
    outcome_p = np.stack([1.0 - table[:, 1], table[:, 1] - table[:, 0], table[:, 0]], axis=1)
    xy_prob = np.prod(outcome_p[np.arange(n), digits], axis=1)
    weights = 1 << np.arange(n)
    x_masks = ((digits == 2) * weights).sum(axis=1)
    y_masks = ((digits >= 1) * weights).sum(axis=1)
    z_masks = np.arange(1 << m)
    z_bits = (z_masks[:, None] >> np.arange(m)) & 1
    w = inst.edge_weights
    z_prob = np.prod(np.where(z_bits == 1, w, 1.0 - w), axis=1) if m else np.ones(1)
    return x_masks, y_masks, xy_prob, z_masks, z_prob


def closure_table(inst: Instance, z_mask: int) -> np.ndarray:
    """Final active mask for every seed mask under live-edge mask ``z_mask``."""
    live = np.array([(z_mask >> i) & 1 for i in range(inst.n_edges)], dtype=bool)
    labels, ncomp = live_components(inst, live[None, :])
    labels = labels[0]
    comp_mask = np.zeros(ncomp, dtype=np.int64)
    np.bitwise_or.at(comp_mask, labels, 1 << np.arange(inst.n))
    node_comp_mask = comp_mask[labels]
    seeds = np.arange(1 << inst.n)
    out = np.zeros(1 << inst.n, dtype=np.int64)
    for v in range(inst.n):
        out |= np.where((seeds >> v) & 1, node_comp_mask[v], 0)
    return out
