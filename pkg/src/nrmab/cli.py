"""Command-line entry point: ``nrmab {ingest,generate,evaluate,verify,train,scaling}``.

Every command writes a JSON manifest last, listing the fully resolved
configuration and a SHA-256 digest of each output file. Exit status is 0 on
success, 1 on invalid input or configuration, 2 when a check reports ``fail``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__
from .graph_model import Instance, ParseError, SyntheticSpec, ValidationError, \
    generate_synthetic, load_instance

logger = logging.getLogger("nrmab")

BUILTIN_PREFIX = "builtin:"
SMALL_SUITE = ("path3", "toy4", "four", "five", "six_a", "six_b")


class UsageError(Exception):
    """Bad configuration detected by the CLI itself (exit status 1)."""


def data_path(name: str) -> Path:
    return Path(str(resources.files("nrmab") / "data" / name))


def resolve(ref: str, suffix: str = ".json") -> Path:
    """A filesystem path, or ``builtin:NAME`` for a bundled file."""
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        path = data_path(name if "." in name else name + suffix)
    else:
        path = Path(ref)
    if not path.is_file():
        raise UsageError(f"file not found: {ref}")
    return path


def read_instance(ref: str) -> Instance:
    return Instance.load(resolve(ref))


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config: dict, seeds, outputs, started: float) -> None:
    doc = {
        "command": command,
        "config": config,
        "version": __version__,
        "seeds": list(seeds),
        "outputs": {Path(p).name: sha256(p) for p in outputs},
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,5,7"`` or a mix such as ``"0-2,10"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    started = time.perf_counter()
    edgelist, attrs = resolve(args.edgelist, ".txt"), resolve(args.attrs)
    inst, graph = load_instance(edgelist, attrs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    inst.save(out)
    print(f"n={inst.n} edges={inst.n_edges} duplicates_collapsed={graph.duplicates_collapsed} "
          f"self_loops_dropped={graph.self_loops_dropped}")
    config = {"edgelist": str(args.edgelist), "attrs": str(args.attrs), "out": str(out),
              "edgelist_sha256": sha256(edgelist), "attrs_sha256": sha256(attrs)}
    write_manifest(args.manifest or out.with_suffix(".manifest.json"), "ingest", config, [],
                   [out], started)
    return 0


def cmd_generate(args) -> int:
    started = time.perf_counter()
    spec = SyntheticSpec(n=args.n, edge_prob=args.edge_prob, n_edges=args.edges,
                         cascade_weight=args.cascade_weight, budget=args.k, gamma=args.gamma)
    inst = generate_synthetic(spec, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    inst.save(out)
    print(f"n={inst.n} edges={inst.n_edges}")
    config = {**vars(spec), "seed": args.seed, "out": str(out)}
    write_manifest(args.manifest or out.with_suffix(".manifest.json"), "generate", config,
                   [args.seed], [out], started)
    return 0


def _learning_config(args, seed=None):
    from .learning import LearningConfig
    alpha = args.alpha
    try:
        alpha = float(alpha)
    except ValueError:
        pass
    return LearningConfig(episodes=args.episodes, steps_per_episode=args.steps,
                          alpha=alpha, epsilon_start=args.epsilon_start,
                          epsilon_end=args.epsilon_end,
                          seed=args.seed if seed is None else seed, start=args.start)


def cmd_evaluate(args) -> int:
    from .baselines import POLICY_NAMES
    from .evaluation import ExperimentConfig, run_experiment, write_raw_csv, write_summary

    started = time.perf_counter()
    inst = read_instance(args.instance)
    if args.k is not None:
        inst = inst.replace(budget=args.k)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    unknown = [p for p in policies if p not in POLICY_NAMES]
    if unknown:
        raise UsageError(f"unknown policies {', '.join(unknown)}; valid names: "
                         f"{', '.join(POLICY_NAMES)}")
    seeds = parse_seeds(args.seeds)
    lc = _learning_config(args, seed=0).to_dict()
    options = {
        "hc-rollout": {"base": args.rollout_base, "horizon": args.rollout_horizon,
                       "m": args.rollout_samples, "lazy": not args.no_lazy},
        "lookahead1": {"m": args.lookahead_samples},
        "topk": {"m": args.lookahead_samples},
        "hc-qlearn": {"config": lc},
        "tabular-qlearn": {"config": lc},
    }
    options = {p: options[p] for p in policies if p in options}
    cfg = ExperimentConfig(inst, tuple(policies), tuple(seeds), args.runs, args.horizon,
                           args.record_timing, options, args.workers)
    result = run_experiment(cfg)
    out = _out_dir(args.out_dir)
    raw, summary = out / "episodes.csv", out / "summary.json"
    write_raw_csv(raw, result.logs)
    write_summary(summary, result.summary)
    for name, entry in result.summary.items():
        if "activation_mean" in entry:
            print(f"{name:15s} activation@T={entry['activation_mean'][-1]:.4f} "
                  f"mean_reward/step={entry['mean_reward_per_timestep']:.4f}")
        else:
            print(f"{name:15s} ERROR {entry.get('error')}")
    config = {"instance": args.instance, "instance_sha256": sha256(resolve(args.instance)),
              "budget_k": inst.budget, "policies": policies, "runs": args.runs,
              "horizon": args.horizon, "record_timing": args.record_timing,
              "workers": args.workers, "policy_options": options}
    write_manifest(out / "manifest.json", "evaluate", config, seeds, [raw, summary], started)
    return 1 if result.errors else 0


def cmd_verify(args) -> int:
    from .verify import exit_status, run_checks, text_summary, write_report

    started = time.perf_counter()
    if args.suite:
        if args.suite != "small-suite":
            raise UsageError(f"unknown suite {args.suite!r}; available: small-suite")
        targets = [(name, read_instance(BUILTIN_PREFIX + name)) for name in SMALL_SUITE]
    elif args.instance:
        targets = [(Path(args.instance).stem, read_instance(args.instance))]
    else:
        raise UsageError("give --instance or --suite")
    reports = []
    for label, inst in targets:
        reports.extend(run_checks(inst, args.seed, label, args.pairs, args.kernel_draws))
    out = _out_dir(args.out_dir)
    report_path, text_path = out / "report.json", out / "report.txt"
    write_report(report_path, reports)
    summary = text_summary(reports)
    text_path.write_text(summary + "\n", encoding="utf-8")
    print(summary)
    config = {"suite": args.suite, "instance": args.instance, "pairs": args.pairs,
              "kernel_draws": args.kernel_draws}
    write_manifest(out / "manifest.json", "verify", config, [args.seed],
                   [report_path, text_path], started)
    return exit_status(reports)


def cmd_train(args) -> int:
    from .learning import CapacityError, q_learn_hc, q_learn_tabular, write_learning_curve

    started = time.perf_counter()
    inst = read_instance(args.instance)
    cfg = _learning_config(args)
    learner = q_learn_hc if args.learner == "hc" else q_learn_tabular
    try:
        table = learner(inst, cfg)
    except CapacityError as exc:
        raise UsageError(f"{exc}; use the hc-rollout policy for instances this large") from None
    out = _out_dir(args.out_dir)
    table_path, curve_path = out / "qtable.csv", out / "learning_curve.csv"
    table.save(table_path)
    write_learning_curve(curve_path, table.returns)
    print(f"trained {args.learner} learner: {cfg.total_steps} steps, "
          f"final episode return {table.returns[-1]:.4f}")
    config = {"instance": args.instance, "instance_sha256": sha256(resolve(args.instance)),
              "learner": args.learner, **cfg.to_dict()}
    write_manifest(out / "manifest.json", "train", config, [cfg.seed],
                   [table_path, curve_path], started)
    return 0


def cmd_scaling(args) -> int:
    from .evaluation import runtime_scaling, write_runtime_csv

    started = time.perf_counter()
    ns = sorted(int(x) for x in args.n.split(","))
    rows = runtime_scaling(args.family, ns, args.k, args.trials, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_runtime_csv(out, rows)
    for row in rows:
        print(",".join(str(x) for x in row))
    config = {"family": args.family, "n": ns, "k": args.k, "trials": args.trials}
    write_manifest(args.manifest or out.with_suffix(".manifest.json"), "scaling", config,
                   [args.seed], [out], started)
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_learning_flags(p):
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--steps", type=int, default=1000, help="steps per episode")
    p.add_argument("--alpha", default="0.1",
                   help="constant rate, '1/visits' or '1/visits^w'")
    p.add_argument("--epsilon-start", type=float, default=1.0)
    p.add_argument("--epsilon-end", type=float, default=0.05)
    p.add_argument("--start", choices=("zeros", "random"), default="zeros")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrmab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="edgelist + attributes -> instance file")
    p.add_argument("--edgelist", required=True, help="path or builtin:village_edgelist")
    p.add_argument("--attrs", required=True, help="path or builtin:village_attrs")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="random synthetic instance")
    p.add_argument("--n", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--edges", type=int)
    g.add_argument("--edge-prob", type=float)
    p.add_argument("--cascade-weight", type=float, default=0.03)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="Monte-Carlo comparison of policies")
    p.add_argument("--instance", required=True)
    p.add_argument("--policies", required=True, help="comma-separated policy names")
    p.add_argument("--seeds", default="0-9")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--k", type=int, help="override the instance budget")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--record-timing", action="store_true",
                   help="fill decision_ms (makes output machine-dependent)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--rollout-base", default="none")
    p.add_argument("--rollout-horizon", type=int, default=4)
    p.add_argument("--rollout-samples", type=int, default=16)
    p.add_argument("--no-lazy", action="store_true", help="plain greedy for hc-rollout")
    p.add_argument("--lookahead-samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    _add_learning_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="run the theory checks")
    p.add_argument("--instance")
    p.add_argument("--suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--kernel-draws", type=int, default=200_000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="tabular Q-learning")
    p.add_argument("--instance", required=True)
    p.add_argument("--learner", choices=("hc", "tabular"), default="hc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    _add_learning_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("scaling", help="runtime scaling table")
    p.add_argument("--family", choices=("hc", "tabular"), required=True)
    p.add_argument("--n", required=True, help="comma-separated sizes")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_scaling)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParseError, ValidationError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
