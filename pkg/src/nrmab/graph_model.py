"""Problem instances: graph topology, cascade weights, node rewards and arm dynamics.

Nodes are dense integers ``0..n-1``. Raw labels from input files are kept in
``Instance.labels`` so results can be mapped back.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

INSTANCE_FORMAT = "nrmab-instance/1"

DYNAMICS_KEYS = ("p01_passive", "p01_active", "p11_passive", "p11_active")


class ParseError(ValueError):
    """Malformed edgelist content."""


class ValidationError(ValueError):
    """An instance or attribute document violates an invariant."""


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    weight: float

    def __post_init__(self):
        if self.u == self.v:
            raise ValidationError(f"self-loop on node {self.u}")
        if not 0.0 < self.weight < 1.0:
            raise ValidationError(
                f"edge ({self.u}, {self.v}) weight {self.weight} outside (0, 1)")


@dataclass(frozen=True)
class ArmDynamics:
    """Probability of being active after the transition step, per (state, action)."""

    p01_passive: float
    p01_active: float
    p11_passive: float
    p11_active: float

    def __post_init__(self):
        for key in DYNAMICS_KEYS:
            p = getattr(self, key)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{key}={p} outside [0, 1]")

    @property
    def satisfies_assumption(self) -> bool:
        return (self.p01_active >= self.p01_passive
                and self.p11_active >= self.p11_passive)

    def as_table(self) -> np.ndarray:
        """2x2 table ``t[s, a] = P(u=1 | s, a)``."""
        return np.array([[self.p01_passive, self.p01_active],
                         [self.p11_passive, self.p11_active]])


@dataclass(frozen=True)
class Graph:
    """Topology produced by edgelist ingestion (no attributes yet)."""

    n: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...]
    self_loops_dropped: int = 0
    duplicates_collapsed: int = 0

    @property
    def label_to_id(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}


@dataclass(frozen=True)
class Instance:
    n: int
    edges: tuple[Edge, ...]
    rewards: tuple[float, ...]
    dynamics: tuple[ArmDynamics, ...]
    budget: int
    gamma: float
    labels: tuple[str, ...] = field(default=(), compare=True)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("instance needs at least one node")
        if len(self.rewards) != self.n:
            raise ValidationError(f"expected {self.n} rewards, got {len(self.rewards)}")
        if len(self.dynamics) != self.n:
            raise ValidationError(
                f"expected {self.n} dynamics records, got {len(self.dynamics)}")
        if self.labels and len(self.labels) != self.n:
            raise ValidationError("labels must cover every node")
        for v, r in enumerate(self.rewards):
            if r < 0 or not np.isfinite(r):
                raise ValidationError(f"node {self._name(v)}: reward {r} must be >= 0")
        for v, dyn in enumerate(self.dynamics):
            if not dyn.satisfies_assumption:
                raise ValidationError(
                    f"node {self._name(v)}: active probabilities must dominate passive "
                    f"ones (got {dyn})")
        if not 1 <= self.budget <= self.n:
            raise ValidationError(f"budget k={self.budget} must be in [1, {self.n}]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"discount {self.gamma} must be in [0, 1)")
        seen = set()
        for e in self.edges:
            if not (0 <= e.u < self.n and 0 <= e.v < self.n):
                raise ValidationError(f"edge ({e.u}, {e.v}) references unknown node")
            key = (min(e.u, e.v), max(e.u, e.v))
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen.add(key)

    def _name(self, v: int) -> str:
        return f"{v} ({self.labels[v]!r})" if self.labels else str(v)

    # numpy views used by the simulators; instances are immutable so caching is safe

    @cached_property
    def activation_table(self) -> np.ndarray:
        """Array ``(n, 2, 2)``: ``P_v(s, a, u=1)`` indexed ``[v, s, a]``."""
        return np.stack([d.as_table() for d in self.dynamics])

    @cached_property
    def reward_vector(self) -> np.ndarray:
        return np.asarray(self.rewards, dtype=float)

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array([(e.u, e.v) for e in self.edges], dtype=np.int64).reshape(-1, 2)

    @cached_property
    def edge_weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.edges], dtype=float)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def replace(self, **changes) -> "Instance":
        from dataclasses import replace
        return replace(self, **changes)

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": INSTANCE_FORMAT,
            "n": self.n,
            "labels": list(self.labels),
            "budget_k": self.budget,
            "gamma": self.gamma,
            "rewards": list(self.rewards),
            "dynamics": [[getattr(d, key) for key in DYNAMICS_KEYS] for d in self.dynamics],
            "edges": [[e.u, e.v, e.weight] for e in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Instance":
        if doc.get("format") != INSTANCE_FORMAT:
            raise ValidationError(f"not an instance document (format={doc.get('format')!r})")
        return cls(
            n=int(doc["n"]),
            edges=tuple(Edge(int(u), int(v), float(w)) for u, v, w in doc["edges"]),
            rewards=tuple(float(r) for r in doc["rewards"]),
            dynamics=tuple(ArmDynamics(*map(float, row)) for row in doc["dynamics"]),
            budget=int(doc["budget_k"]),
            gamma=float(doc["gamma"]),
            labels=tuple(str(x) for x in doc.get("labels", ())),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Instance":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def ingest_edgelist(text: str | Iterable[str]) -> Graph:
    """Parse a whitespace-separated edgelist into a simple undirected graph.

    Labels are remapped to ids in order of first appearance. Lines that are
    blank or start with ``#`` are skipped. Repeated edges (in either
    orientation) collapse to one; self-loops are dropped and counted.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    ids: dict[str, int] = {}
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    loops = dups = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(f"line {lineno}: expected 2 node labels, got {len(tokens)}")
        a, b = (ids.setdefault(tok, len(ids)) for tok in tokens)
        if a == b:
            loops += 1
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            dups += 1
            continue
        seen.add(key)
        edges.append(key)
    if not ids:
        raise ParseError("edgelist is empty")
    if loops:
        logger.warning("dropped %d self-loop(s)", loops)
    labels = tuple(sorted(ids, key=ids.get))
    return Graph(n=len(ids), edges=tuple(edges), labels=labels,
                 self_loops_dropped=loops, duplicates_collapsed=dups)


def _dynamics_from(doc: Mapping, where: str) -> ArmDynamics:
    missing = [key for key in DYNAMICS_KEYS if key not in doc]
    if missing:
        raise ValidationError(f"{where}: missing dynamics keys {missing}")
    return ArmDynamics(*(float(doc[key]) for key in DYNAMICS_KEYS))


def _edge_key(text: str, label_to_id: dict[str, int]) -> tuple[int, int]:
    tokens = text.replace(",", " ").split()
    if len(tokens) != 2 or any(t not in label_to_id for t in tokens):
        raise ValidationError(f"cascade_weights key {text!r} does not name an edge")
    a, b = (label_to_id[t] for t in tokens)
    return (min(a, b), max(a, b))


def attach_attributes(graph: Graph, attrs: Mapping) -> Instance:
    """Combine ingested topology with an attribute document.

    Recognised keys: ``n``, ``reward_default``, ``rewards``,
    ``dynamics_default``, ``dynamics``, ``cascade_weight_default``,
    ``cascade_weights``, ``budget_k``, ``gamma``. Per-node maps are keyed by
    the raw labels of the edgelist; per-edge keys are ``"label label"``.
    """
    label_to_id = graph.label_to_id
    rewards_map = attrs.get("rewards") or {}
    dyn_map = attrs.get("dynamics") or {}
    weight_map = attrs.get("cascade_weights") or {}

    missing = [key for key in ("budget_k", "gamma") if key not in attrs]
    if "dynamics_default" not in attrs and len(dyn_map) < graph.n:
        missing.append("dynamics_default")
    if "cascade_weight_default" not in attrs and len(weight_map) < len(graph.edges):
        missing.append("cascade_weight_default")
    if missing:
        raise ValidationError(f"attribute document missing required keys: {missing}")

    if "n" in attrs and int(attrs["n"]) != graph.n:
        raise ValidationError(f"attribute n={attrs['n']} but edgelist has {graph.n} nodes")
    for key in list(rewards_map) + list(dyn_map):
        if str(key) not in label_to_id:
            raise ValidationError(f"attributes reference unknown node {key!r}")

    reward_default = float(attrs.get("reward_default", 1.0))
    rewards = []
    for label in graph.labels:
        r = float(rewards_map.get(label, reward_default))
        if r < 0:
            raise ValidationError(f"node {label!r}: reward {r} must be >= 0")
        rewards.append(r)

    default_dyn = attrs.get("dynamics_default")
    dynamics = []
    for label in graph.labels:
        doc = dyn_map.get(label)
        if doc is None:
            dyn = _dynamics_from(default_dyn, "dynamics_default")
        else:
            merged = dict(default_dyn or {})
            merged.update(doc)
            dyn = _dynamics_from(merged, f"node {label!r}")
        if not dyn.satisfies_assumption:
            raise ValidationError(
                f"node {label!r}: active probabilities must dominate passive ones ({dyn})")
        dynamics.append(dyn)

    weights = {_edge_key(str(k), label_to_id): float(w) for k, w in weight_map.items()}
    unknown = set(weights) - set(graph.edges)
    if unknown:
        raise ValidationError(f"cascade_weights for non-edges: {sorted(unknown)}")
    w_default = attrs.get("cascade_weight_default")
    edges = tuple(Edge(u, v, weights.get((u, v), w_default if w_default is None
                                         else float(w_default)))
                  for u, v in graph.edges)

    return Instance(n=graph.n, edges=edges, rewards=tuple(rewards),
                    dynamics=tuple(dynamics), budget=int(attrs["budget_k"]),
                    gamma=float(attrs["gamma"]), labels=graph.labels)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for random instance generation.

    Exactly one of ``edge_prob`` (Erdos-Renyi) or ``n_edges`` (uniform over
    simple graphs with that many edges) should be set. Active probabilities
    are drawn from their range clipped below by the passive draw, so every
    arm respects the active-dominates-passive requirement.
    """

    n: int
    edge_prob: float | None = None
    n_edges: int | None = None
    reward_range: tuple[float, float] = (1.0, 1.0)
    p01_passive_range: tuple[float, float] = (0.05, 0.2)
    p01_active_range: tuple[float, float] = (0.5, 0.9)
    p11_passive_range: tuple[float, float] = (0.5, 0.8)
    p11_active_range: tuple[float, float] = (0.85, 0.99)
    cascade_weight: float = 0.03
    budget: int = 1
    gamma: float = 0.95


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Instance:
    if spec.budget > spec.n or spec.budget < 1:
        raise ValidationError(f"budget k={spec.budget} infeasible for n={spec.n}")
    if (spec.edge_prob is None) == (spec.n_edges is None):
        raise ValidationError("set exactly one of edge_prob / n_edges")
    ranges = [spec.p01_passive_range, spec.p01_active_range,
              spec.p11_passive_range, spec.p11_active_range]
    for lo, hi in ranges:
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValidationError(f"probability range ({lo}, {hi}) outside [0, 1]")
    lo, hi = spec.reward_range
    if not 0.0 <= lo <= hi:
        raise ValidationError(f"reward range ({lo}, {hi}) invalid")

    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(spec.n) for v in range(u + 1, spec.n)]
    if spec.edge_prob is not None:
        if not 0.0 <= spec.edge_prob <= 1.0:
            raise ValidationError(f"edge_prob {spec.edge_prob} outside [0, 1]")
        keep = rng.random(len(pairs)) < spec.edge_prob
        chosen = [p for p, k in zip(pairs, keep) if k]
    else:
        if not 0 <= spec.n_edges <= len(pairs):
            raise ValidationError(f"cannot place {spec.n_edges} edges on {spec.n} nodes")
        idx = np.sort(rng.choice(len(pairs), size=spec.n_edges, replace=False))
        chosen = [pairs[i] for i in idx]

    def draw(bounds, floor=0.0):
        a, b = max(bounds[0], floor), max(bounds[1], floor)
        return float(rng.uniform(a, b))

    dynamics = []
    for _ in range(spec.n):
        p01p = draw(spec.p01_passive_range)
        p01a = draw(spec.p01_active_range, p01p)
        p11p = draw(spec.p11_passive_range)
        p11a = draw(spec.p11_active_range, p11p)
        dynamics.append(ArmDynamics(p01p, p01a, p11p, p11a))
    rewards = tuple(float(rng.uniform(lo, hi)) for _ in range(spec.n))
    edges = tuple(Edge(u, v, spec.cascade_weight) for u, v in chosen)
    return Instance(n=spec.n, edges=edges, rewards=rewards, dynamics=tuple(dynamics),
                    budget=spec.budget, gamma=spec.gamma,
                    labels=tuple(str(i) for i in range(spec.n)))


def load_instance(edgelist_path, attrs_path) -> tuple[Instance, Graph]:
    with open(edgelist_path, encoding="utf-8") as fh:
        graph = ingest_edgelist(fh.read())
    with open(attrs_path, encoding="utf-8") as fh:
        attrs = json.load(fh)
    return attach_attributes(graph, attrs), graph
