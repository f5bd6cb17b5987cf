"""Command-line entry point: ``recdecode {ingest,synth,split,run,audit}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .catalog import CatalogError, dump_catalog, ghost_positions, length_stats, load_catalog
from .harness.data import DataError, dump_interactions, ingest, temporal_split
from .harness.experiment import ExperimentError, load_config, run_experiment
from .harness.synthetic import SyntheticSpec, generate_synthetic


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_ingest(args) -> int:
    catalog, users, dropped = ingest(args.catalog, args.interactions)
    n = sum(len(u.interactions) for u in users)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_catalog(catalog, out / "catalog.jsonl")
        dump_interactions(users, out / "interactions.jsonl")
    _emit({"items": len(catalog), "users": len(users), "interactions": n, "dropped": dropped,
           "catalog_fingerprint": catalog.fingerprint()})
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_categories=args.categories, series_per_category=args.series, items_per_series=args.items,
        name_length=args.name_length, n_users=args.users, history_length=args.history,
        skew=args.skew, seed=args.seed,
    )
    catalog, users = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_catalog(catalog, out / "catalog.jsonl")
    dump_interactions(users, out / "interactions.jsonl")
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit({"items": len(catalog), "users": len(users), "out": str(out)})
    return 0


def cmd_split(args) -> int:
    catalog, users, _ = ingest(args.catalog, args.interactions)
    split = temporal_split(users, tuple(args.ratios), args.max_history, per_user=args.per_user)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_interactions(split.train, out / "train.jsonl")
        for name in ("valid", "test"):
            with open(out / f"{name}.jsonl", "w", encoding="utf-8") as fh:
                for case in getattr(split, name):
                    fh.write(json.dumps(asdict(case)) + "\n")
    _emit({**split.stats, "skipped": split.skipped})
    return 0


def _config_from_flags(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    if args.catalog or args.interactions:
        if not (args.catalog and args.interactions):
            raise ExperimentError("--catalog and --interactions go together")
        cfg["dataset"] = {"catalog": args.catalog, "interactions": args.interactions}
    if args.strategy:
        point = {"strategy": args.strategy}
        for flag, key in (("alpha", "alpha"), ("lam", "lambda"), ("temp", "temp")):
            if getattr(args, flag) is not None:
                point[key] = getattr(args, flag)
        cfg["grid"] = [point]
    for flag, key in (("beam", "beam"), ("expand_k", "expand_k"), ("topk", "topk"), ("assistant", "assistant"),
                      ("mask_category", "mask_category"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    return cfg


def cmd_run(args) -> int:
    cfg = _config_from_flags(args)
    out = args.out or cfg.get("out")
    res = run_experiment(cfg, out)
    sys.stdout.write(res.csv_text)
    return 0


def cmd_audit(args) -> int:
    catalog = load_catalog(args.catalog)
    stats = length_stats(catalog)
    report = {
        "items": len(catalog),
        "max_branching": catalog.max_branching(),
        "length_stats": {k: {"mean": m, "var": v} for k, (m, v) in stats.items()},
        "catalog_fingerprint": catalog.fingerprint(),
    }
    if args.items:
        report["ghosts"] = {
            i: [j + 1 for j, g in enumerate(ghost_positions(catalog, i).mask) if g] for i in sorted(catalog.items)
        }
    _emit(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recdecode", description="Constrained decoding for title-based recommendation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate a catalog and interaction file")
    s.add_argument("--catalog", required=True)
    s.add_argument("--interactions", required=True)
    s.add_argument("--out", help="write cleaned copies here")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic series catalog and users")
    s.add_argument("--categories", type=int, default=4)
    s.add_argument("--series", type=int, default=4)
    s.add_argument("--items", type=int, default=5)
    s.add_argument("--name-length", type=int, default=3)
    s.add_argument("--users", type=int, default=200)
    s.add_argument("--history", type=int, default=10)
    s.add_argument("--skew", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="temporal train/valid/test split")
    s.add_argument("--catalog", required=True)
    s.add_argument("--interactions", required=True)
    s.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    s.add_argument("--max-history", type=int, default=10)
    s.add_argument("--per-user", action="store_true", help="leave-last-out per user")
    s.add_argument("--out")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("run", help="run an experiment grid and write results.csv / summary.json")
    s.add_argument("--config", help="JSON config; flags below override it")
    s.add_argument("--catalog")
    s.add_argument("--interactions")
    s.add_argument("--strategy", choices=["baseline", "baseline-temp", "d3"])
    s.add_argument("--alpha", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--temp", type=float)
    s.add_argument("--beam", type=int)
    s.add_argument("--expand-k", type=int)
    s.add_argument("--topk", type=int)
    s.add_argument("--assistant", choices=["popularity", "markov"])
    s.add_argument("--mask-category")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("audit", help="ghost-token and length statistics for a catalog")
    s.add_argument("--catalog", required=True)
    s.add_argument("--items", action="store_true", help="list ghost positions per item")
    s.set_defaults(func=cmd_audit)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CatalogError, DataError, ExperimentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
