"""Experiment orchestration: decode every test case per grid cell and write CSV/JSON reports."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..assistant import DegenerateMaskWarning, apply_group_mask, markov_model, popularity_model
from ..catalog import Catalog, length_stats
from ..decoder import DecodeConfig, DecodeError, decode
from ..metrics import EvalRecord, evaluate
from ..scorer import DecodingContext, ScorerConfig, SyntheticCopyLM
from .data import SplitDataset, TestCase, ingest, temporal_split
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "dataset", "strategy", "alpha", "lambda", "T", "B", "k",
    "hr@5", "hr@10", "ndcg@5", "ndcg@10", "pairwise_bleu", "category_entropy",
    "history_bleu", "category_repeat_ratio", "target_group_ratio", "seed", "config_hash",
    # appended after the fixed schema
    "mask_category", "group_hr@10", "n_cases", "catalog_fingerprint",
]

DEFAULTS: dict[str, Any] = {
    "dataset": {"synthetic": {}},
    "split": {"ratios": [0.8, 0.1, 0.1], "max_history": 10, "per_user": False},
    "eval_split": "test",
    "assistant": "markov",
    "copy_bonus": 2.0,
    "beam": 10,
    "expand_k": 10,
    "topk": 10,
    "fusion": "step",
    "mask_category": None,
    "seed": 0,
    "grid": [
        {"strategy": "baseline", "lambda": [1.0]},
        {"strategy": "d3", "alpha": [0.7, 1.0]},
    ],
}


class ExperimentError(RuntimeError):
    pass


def load_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ExperimentError(f"{path}: invalid JSON ({exc.msg})") from None


def resolve_config(config: dict) -> dict:
    out = json.loads(json.dumps(DEFAULTS))
    for key, val in config.items():
        if key not in DEFAULTS and key != "out":
            raise ExperimentError(f"unknown config key {key!r}")
        if key == "split":
            out["split"].update(val)
        else:
            out[key] = val
    if not out["grid"]:
        raise ExperimentError("strategy grid is empty")
    if out["assistant"] not in ("markov", "popularity"):
        raise ExperimentError(f"unknown assistant {out['assistant']!r}")
    if out["eval_split"] not in ("test", "valid"):
        raise ExperimentError("eval_split must be 'test' or 'valid'")
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps({k: v for k, v in config.items() if k != "out"}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Cell:
    strategy: str
    alpha: float = 1.0
    length_penalty: float = 1.0
    temperature: float = 1.0
    masked: bool = False


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def expand_grid(grid: Sequence[dict], with_mask: bool) -> list[Cell]:
    cells = []
    for entry in grid:
        strategy = entry["strategy"].replace("-", "_")
        alphas = _as_list(entry.get("alpha", 1.0))
        lambdas = _as_list(entry.get("lambda", 1.0))
        temps = _as_list(entry.get("temp", 1.0))
        for a, lam, t in itertools.product(alphas, lambdas, temps):
            cfg = DecodeConfig(strategy, alpha=float(a), length_penalty=float(lam), temperature=float(t))
            cells.append(Cell(cfg.strategy, cfg.alpha, cfg.length_penalty, cfg.temperature))
            if with_mask and cfg.strategy == "d3" and cfg.alpha < 1.0:
                cells.append(Cell(cfg.strategy, cfg.alpha, cfg.length_penalty, cfg.temperature, masked=True))
    return list(dict.fromkeys(cells))


def load_dataset(spec: dict, seed: int) -> tuple[str, Catalog, list]:
    if "synthetic" in spec:
        params = dict(spec["synthetic"])
        params.setdefault("seed", seed)
        catalog, users = generate_synthetic(SyntheticSpec(**params))
        return spec.get("name", f"synthetic-{params['seed']}"), catalog, users
    if "catalog" in spec and "interactions" in spec:
        catalog, users, _ = ingest(spec["catalog"], spec["interactions"])
        return spec.get("name", Path(spec["catalog"]).stem), catalog, users
    raise ExperimentError("dataset needs either 'synthetic' or 'catalog' + 'interactions'")


def build_assistant(kind: str, split: SplitDataset, catalog: Catalog):
    if kind == "popularity":
        return popularity_model(split.train_items(), catalog)
    return markov_model(split.train_sequences(), catalog)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def run_cell(cell: Cell, cases: Sequence[TestCase], catalog: Catalog, assistant, resolved: dict,
             group: frozenset[str] | None) -> tuple[list[EvalRecord], dict]:
    cfg = DecodeConfig(cell.strategy, resolved["beam"], resolved["expand_k"], alpha=cell.alpha,
                       length_penalty=cell.length_penalty, temperature=cell.temperature, fusion=resolved["fusion"])
    scorer = SyntheticCopyLM()
    sc = ScorerConfig(copy_bonus=resolved["copy_bonus"])
    topk = resolved["topk"]
    records = []
    for case in sorted(cases, key=lambda c: (c.user, c.case)):
        ctx = DecodingContext.from_history(catalog, case.history, case.user)
        dist = assistant.score_items(case.history) if cfg.strategy == "d3" and cfg.alpha < 1 else None
        if cell.masked:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateMaskWarning)
                dist = apply_group_mask(dist, group)
        try:
            rec = decode(catalog, scorer, ctx, dist, cfg, sc)
        except DecodeError as exc:
            raise ExperimentError(f"decode failed for case {case.user}#{case.case}: {exc}") from exc
        records.append(EvalRecord(case.user, rec.item_ids[:topk], case.target, list(case.history), case.case))
    extra: dict[str, float | None] = {"target_group_ratio": None, "group_hr@10": None}
    if group is not None:
        listed = [i for r in records for i in r.recommendations]
        extra["target_group_ratio"] = sum(i in group for i in listed) / len(listed) if listed else None
        inside = [r for r in records if r.target in group]
        if inside:
            extra["group_hr@10"] = math.fsum(float(r.target in r.recommendations[:10]) for r in inside) / len(inside)
    return records, extra


@dataclass
class ExperimentResult:
    rows: list[dict]
    summary: dict
    csv_text: str = field(repr=False, default="")


def run_experiment(config: dict | str | Path, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run every grid cell over the evaluation split; writes ``results.csv`` and ``summary.json``."""
    raw = load_config(config) if isinstance(config, (str, Path)) else dict(config)
    out_dir = out_dir or raw.get("out")
    resolved = resolve_config(raw)
    chash = config_hash(resolved)
    seed = resolved["seed"]
    name, catalog, users = load_dataset(resolved["dataset"], seed)
    split_cfg = resolved["split"]
    split = temporal_split(users, split_cfg["ratios"], split_cfg["max_history"], split_cfg["per_user"])
    cases = split.test if resolved["eval_split"] == "test" else split.valid
    if not cases:
        raise ExperimentError("evaluation split has no cases")
    assistant = build_assistant(resolved["assistant"], split, catalog)
    mask_cat = resolved["mask_category"]
    group = None
    if mask_cat is not None:
        group = catalog.by_category(mask_cat)
        if not group:
            raise ExperimentError(f"mask category {mask_cat!r} has no items")
    fingerprint = catalog.fingerprint()

    rows = []
    for cell in expand_grid(resolved["grid"], group is not None):
        log.info("running %s", cell)
        records, extra = run_cell(cell, cases, catalog, assistant, resolved, group)
        report = evaluate(records, catalog, resolved["topk"])
        row = {
            "dataset": name, "strategy": cell.strategy, "alpha": cell.alpha, "lambda": cell.length_penalty,
            "T": cell.temperature, "B": resolved["beam"], "k": resolved["expand_k"],
            **report.values, **extra, "seed": seed, "config_hash": chash,
            "mask_category": mask_cat if cell.masked else "", "n_cases": report.n_records,
            "catalog_fingerprint": fingerprint,
        }
        rows.append(row)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])
    stats = length_stats(catalog)
    summary = {
        "config": resolved, "config_hash": chash, "seed": seed, "dataset": name,
        "catalog_fingerprint": fingerprint, "n_items": len(catalog), "n_users": len(users),
        "split": {**split.stats, "skipped": split.skipped,
                  "boundaries": list(split.boundaries) if split.boundaries else None},
        "length_stats": {k: {"mean": m, "var": v} for k, (m, v) in stats.items()},
        "rows": rows,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(buf.getvalue(), encoding="utf-8")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n",
                                          encoding="utf-8")
    return ExperimentResult(rows, summary, buf.getvalue())
