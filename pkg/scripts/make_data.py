"""Regenerate the bundled instances and the synthetic village contact network.

Run from the repository root: ``python3 scripts/make_data.py``.
"""
import json
from pathlib import Path

import numpy as np

from nrmab.graph_model import SyntheticSpec, generate_synthetic

DATA = Path(__file__).resolve().parents[1] / "src" / "nrmab" / "data"

SMALL = {
    "path3": (SyntheticSpec(n=3, n_edges=2, cascade_weight=0.4, budget=1, gamma=0.9), 3),
    "toy4": (SyntheticSpec(n=4, n_edges=3, cascade_weight=0.3, budget=1, gamma=0.9), 4),
    "four": (SyntheticSpec(n=4, n_edges=4, cascade_weight=0.3, budget=2, gamma=0.9,
                           reward_range=(0.5, 2.0)), 5),
    "five": (SyntheticSpec(n=5, n_edges=6, cascade_weight=0.25, budget=3, gamma=0.9,
                           reward_range=(0.5, 2.0)), 6),
    "six_a": (SyntheticSpec(n=6, n_edges=7, cascade_weight=0.3, budget=3, gamma=0.9), 7),
    "six_b": (SyntheticSpec(n=6, n_edges=9, cascade_weight=0.2, budget=3, gamma=0.95,
                            reward_range=(0.5, 2.0)), 8),
}

# learner comparison instance (not part of the small verification suite)
EXTRA = {
    "ten": (SyntheticSpec(n=10, n_edges=15, cascade_weight=0.1, budget=2, gamma=0.95), 10),
}

VILLAGE_NODES, VILLAGE_EDGES = 202, 692


def village_edges(seed: int = 2024):
    """Clustered contact graph: households in hamlets, dense inside, sparse across."""
    rng = np.random.default_rng(seed)
    hamlet = rng.integers(0, 12, size=VILLAGE_NODES)
    edges = set()
    # spanning chain inside each hamlet keeps the graph from fragmenting
    for h in range(12):
        idx = np.flatnonzero(hamlet == h)
        for a, b in zip(idx[:-1], idx[1:]):
            edges.add((int(a), int(b)))
    while len(edges) < VILLAGE_EDGES:
        u, v = rng.integers(0, VILLAGE_NODES, size=2)
        if u == v:
            continue
        if hamlet[u] != hamlet[v] and rng.random() > 0.12:
            continue
        edges.add((int(min(u, v)), int(max(u, v))))
    return sorted(edges), rng


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for name, (spec, seed) in {**SMALL, **EXTRA}.items():
        generate_synthetic(spec, seed).save(DATA / f"{name}.json")

    edges, rng = village_edges()
    labels = [f"{1000 + i}" for i in rng.permutation(VILLAGE_NODES)]
    lines = ["# synthetic village contact network: 202 households, 692 contacts",
             "# columns: household household"]
    for u, v in edges:
        lines.append(f"{labels[u]} {labels[v]}")
    # raw exports repeat some contacts in both directions and carry self-contacts
    for j in rng.choice(len(edges), size=25, replace=False):
        u, v = edges[j]
        lines.append(f"{labels[v]} {labels[u]}")
    for u in rng.choice(VILLAGE_NODES, size=4, replace=False):
        lines.append(f"{labels[u]} {labels[u]}")
    (DATA / "village_edgelist.txt").write_text("\n".join(lines) + "\n")

    attrs = {
        "budget_k": 20,
        "gamma": 0.95,
        "reward_default": 1.0,
        "cascade_weight_default": 0.03,
        "dynamics_default": {"p01_passive": 0.1, "p01_active": 0.8,
                             "p11_passive": 0.7, "p11_active": 0.95},
    }
    (DATA / "village_attrs.json").write_text(json.dumps(attrs, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
