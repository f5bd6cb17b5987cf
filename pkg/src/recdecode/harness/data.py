"""Interaction data: ingestion, validation and timestamp-based splitting."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..catalog import Catalog, load_catalog

log = logging.getLogger(__name__)

MAX_HISTORY = 10
MAX_DROP_FRACTION = 0.10


class DataError(ValueError):
    pass


@dataclass
class UserRecord:
    user: str
    interactions: list[tuple[str, int]]

    def __post_init__(self):
        ts = [t for _, t in self.interactions]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise DataError(f"timestamps of user {self.user!r} are not non-decreasing")

    @property
    def items(self) -> list[str]:
        return [i for i, _ in self.interactions]


@dataclass(frozen=True)
class TestCase:
    user: str
    target: str
    ts: int
    history: tuple[str, ...]
    case: int = 0


@dataclass
class SplitDataset:
    train: list[UserRecord]
    valid: list[TestCase]
    test: list[TestCase]
    boundaries: tuple[int, int] | None = None
    skipped: int = 0
    stats: dict[str, int] = field(default_factory=dict)

    def train_sequences(self) -> list[list[str]]:
        return [u.items for u in self.train if u.interactions]

    def train_items(self) -> list[str]:
        return [i for u in self.train for i in u.items]


def _read_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            rows.append((lineno, obj))
    return rows


def group_interactions(rows: Sequence[tuple[str, str, int]]) -> list[UserRecord]:
    """Group ``(user, item, ts)`` rows into per-user records ordered by time, then input order."""
    per_user: dict[str, list[tuple[int, int, str]]] = {}
    for n, (user, item, ts) in enumerate(rows):
        per_user.setdefault(user, []).append((ts, n, item))
    return [
        UserRecord(u, [(item, ts) for ts, _, item in sorted(events)])
        for u, events in sorted(per_user.items())
    ]


def load_interactions(path: str | Path, catalog: Catalog) -> tuple[list[UserRecord], int]:
    rows, dropped = [], 0
    for lineno, obj in _read_jsonl(path):
        try:
            user, item, ts = str(obj["user"]), str(obj["item"]), obj["ts"]
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from None
        if not isinstance(ts, int) or isinstance(ts, bool):
            raise DataError(f"{path}:{lineno}: ts must be an integer")
        if item not in catalog.items:
            dropped += 1
            continue
        rows.append((user, item, ts))
    total = len(rows) + dropped
    if total and dropped / total > MAX_DROP_FRACTION:
        raise DataError(f"{dropped} of {total} interactions reference unknown items (limit 10%)")
    if dropped:
        log.warning("dropped %d interactions with unknown item ids", dropped)
    return group_interactions(rows), dropped


def ingest(catalog_path: str | Path, interactions_path: str | Path, **catalog_kwargs):
    """Load a catalog and an interaction log; returns ``(catalog, users, dropped)``."""
    if not Path(catalog_path).exists():
        raise FileNotFoundError(f"no such file: {catalog_path}")
    catalog = load_catalog(catalog_path, **catalog_kwargs)
    users, dropped = load_interactions(interactions_path, catalog)
    return catalog, users, dropped


def dump_interactions(users: Sequence[UserRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in users:
            for item, ts in u.interactions:
                fh.write(json.dumps({"user": u.user, "item": item, "ts": ts}) + "\n")


def _check_ratios(ratios: Sequence[float]) -> None:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be three non-negative numbers summing to 1, got {tuple(ratios)}")


def temporal_split(
    users: Sequence[UserRecord],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    max_history: int = MAX_HISTORY,
    per_user: bool = False,
) -> SplitDataset:
    """Split interactions at global timestamp quantiles.

    Every validation/test interaction becomes a case whose history is the
    user's interactions strictly earlier in time, truncated to the last
    ``max_history``. ``per_user=True`` switches to leave-last-out (second to
    last is validation, last is test) for data without usable timestamps; there history
    is every earlier interaction in file order.
    """
    _check_ratios(ratios)
    all_ts = sorted(t for u in users for _, t in u.interactions)
    if len(all_ts) < 10:
        raise DataError(f"need at least 10 interactions to split, got {len(all_ts)}")

    if per_user:
        def bucket(u: UserRecord, idx: int, ts: int) -> int:
            n = len(u.interactions)
            return 2 if idx == n - 1 and n >= 2 else 1 if idx == n - 2 and n >= 3 else 0
        boundaries = None
    else:
        if all_ts[0] == all_ts[-1]:
            raise DataError("all timestamps are equal; use the per-user leave-last-out fallback")
        n = len(all_ts)
        n_train = max(1, math.floor(ratios[0] * n + 1e-9))
        n_valid = math.floor((ratios[0] + ratios[1]) * n + 1e-9)
        t_train = all_ts[n_train - 1]
        t_valid = all_ts[max(n_valid, n_train) - 1]
        boundaries = (t_train, t_valid)

        def bucket(u: UserRecord, idx: int, ts: int) -> int:
            return 0 if ts <= t_train else 1 if ts <= t_valid else 2

    train, cases, skipped = [], ([], []), 0
    for u in users:
        kept = []
        for idx, (item, ts) in enumerate(u.interactions):
            b = bucket(u, idx, ts)
            if b == 0:
                kept.append((item, ts))
                continue
            if per_user:
                # timestamps may tie here, so order decides what came before
                history = tuple(i for i, _ in u.interactions[:idx])[-max_history:]
            else:
                history = tuple(i for i, t in u.interactions if t < ts)[-max_history:]
            if not history:
                skipped += 1
                continue
            out = cases[b - 1]
            out.append(TestCase(u.user, item, ts, history, idx))
        train.append(UserRecord(u.user, kept))
    stats = {"train": sum(len(u.interactions) for u in train), "valid": len(cases[0]), "test": len(cases[1])}
    return SplitDataset(train, cases[0], cases[1], boundaries, skipped, stats)
