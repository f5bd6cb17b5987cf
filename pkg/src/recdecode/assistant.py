"""Text-free assistant models and their projection onto per-step token scores.

An assistant scores whole items. During decoding its item distribution is
turned into token scores by comparing probability mass below the extended
prefix with mass below the current prefix; summed along an item's path these
log-ratios telescope back to the item's normalized log-probability.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .catalog import Catalog, TrieNode

NEG_INF = -math.inf


class AssistantError(ValueError):
    pass


class DegenerateMaskWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AssistantDistribution:
    p: dict[str, float]
    group_mask: frozenset[str] | None = None
    degenerate: bool = False

    def __post_init__(self):
        if any(v < 0 or math.isnan(v) for v in self.p.values()):
            raise AssistantError("assistant probabilities must be non-negative")

    def total(self) -> float:
        return sum(self.p.values())


class TextFreeModel(Protocol):
    def score_items(self, history: Sequence[str]) -> AssistantDistribution: ...


def _normalized(weights: dict[str, float]) -> dict[str, float]:
    z = sum(weights.values())
    return {k: v / z for k, v in weights.items()}


class PopularityModel:
    kind = "popularity"

    def __init__(self, counts: dict[str, int], items: Sequence[str], smoothing: float = 1.0):
        self.items = list(items)
        self.counts = {i: int(counts.get(i, 0)) for i in self.items}
        self.smoothing = smoothing
        self._p = _normalized({i: self.counts[i] + smoothing for i in self.items})

    def score_items(self, history: Sequence[str] = ()) -> AssistantDistribution:
        return AssistantDistribution(dict(self._p))

    def to_json(self) -> dict:
        return {"kind": self.kind, "smoothing": self.smoothing, "items": self.items, "counts": self.counts}


class MarkovModel:
    """First-order item transitions with add-``smoothing`` smoothing."""

    kind = "markov"

    def __init__(self, transitions: dict[str, dict[str, int]], items: Sequence[str], popularity: PopularityModel,
                 smoothing: float = 1.0):
        self.items = list(items)
        self.transitions = {src: dict(dst) for src, dst in transitions.items()}
        self.popularity = popularity
        self.smoothing = smoothing
        self._cache: dict[str, dict[str, float]] = {}

    def score_items(self, history: Sequence[str] = ()) -> AssistantDistribution:
        if not history:
            return self.popularity.score_items()
        last = history[-1]
        p = self._cache.get(last)
        if p is None:
            row = self.transitions.get(last, {})
            denom = sum(row.values()) + self.smoothing * len(self.items)
            p = {j: (row.get(j, 0) + self.smoothing) / denom for j in self.items}
            self._cache[last] = p
        return AssistantDistribution(dict(p))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "smoothing": self.smoothing,
            "items": self.items,
            "counts": self.transitions,
            "popularity": self.popularity.counts,
        }


def _item_universe(items: Catalog | Iterable[str]) -> list[str]:
    if isinstance(items, Catalog):
        return sorted(items.items)
    return list(dict.fromkeys(items))


def popularity_model(train_interactions: Iterable[str], items: Catalog | Iterable[str],
                     smoothing: float = 1.0) -> PopularityModel:
    """Item popularity with add-one smoothing: ``p(i) ∝ count(i) + 1``."""
    counts = Counter(train_interactions)
    if not counts:
        raise AssistantError("popularity model needs at least one interaction")
    universe = _item_universe(items)
    unknown = set(counts) - set(universe)
    if unknown:
        raise AssistantError(f"interactions reference unknown items: {sorted(unknown)[:5]}")
    return PopularityModel(counts, universe, smoothing)


def markov_model(train_sequences: Iterable[Sequence[str]], items: Catalog | Iterable[str],
                 smoothing: float = 1.0) -> MarkovModel:
    sequences = [list(s) for s in train_sequences]
    flat = [i for s in sequences for i in s]
    popularity = popularity_model(flat, items, smoothing)
    transitions: dict[str, Counter] = defaultdict(Counter)
    for seq in sequences:
        for src, dst in zip(seq, seq[1:]):
            transitions[src][dst] += 1
    return MarkovModel(transitions, popularity.items, popularity, smoothing)


def load_model(path: str | Path) -> PopularityModel | MarkovModel:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        kind = obj["kind"]
        if kind == "popularity":
            return PopularityModel(obj["counts"], obj["items"], obj["smoothing"])
        if kind == "markov":
            pop = PopularityModel(obj["popularity"], obj["items"], obj["smoothing"])
            return MarkovModel(obj["counts"], obj["items"], pop, obj["smoothing"])
    except (KeyError, TypeError) as exc:
        raise AssistantError(f"{path}: malformed model file ({exc})") from None
    raise AssistantError(f"{path}: unknown model kind {kind!r}")


def save_model(model: PopularityModel | MarkovModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, sort_keys=True)


def apply_group_mask(dist: AssistantDistribution, group: Iterable[str]) -> AssistantDistribution:
    """Zero the mass of every item outside ``group``; values inside are left as they are."""
    group = frozenset(group)
    if not group:
        raise AssistantError("group mask must be non-empty")
    p = {i: (v if i in group else 0.0) for i, v in dist.p.items()}
    degenerate = not any(v > 0 for v in p.values())
    if degenerate:
        warnings.warn("group mask leaves no assistant mass; every prefix scores -inf", DegenerateMaskWarning,
                      stacklevel=2)
    return AssistantDistribution(p, group, degenerate)


def accumulate_tf(score_so_far: float, logratio: float) -> float:
    return score_so_far + logratio


class PrefixMass:
    """Assistant mass below every trie node, computed in one bottom-up pass.

    ``epsilon`` (off by default) floors each step ratio so zero-mass
    continuations score ``log(epsilon)`` instead of ``-inf``.
    """

    def __init__(self, catalog: Catalog, dist: AssistantDistribution, epsilon: float | None = None):
        self.catalog = catalog
        self.epsilon = epsilon
        self.degenerate_prefixes: set[int] = set()
        mass = [0.0] * len(catalog.nodes)
        for node in reversed(catalog.nodes):
            if node.terminal_item is not None:
                mass[node.index] = dist.p.get(node.terminal_item, 0.0)
            else:
                mass[node.index] = math.fsum(mass[c.index] for c in node.children.values())
        self.mass = mass

    def logratio(self, parent: TrieNode, child: TrieNode) -> float:
        den = self.mass[parent.index]
        num = self.mass[child.index]
        if den <= 0:
            self.degenerate_prefixes.add(parent.index)
            return NEG_INF if self.epsilon is None else math.log(self.epsilon)
        if num <= 0:
            return NEG_INF if self.epsilon is None else math.log(self.epsilon)
        ratio = num / den
        if self.epsilon is not None:
            ratio = max(ratio, self.epsilon)
        return math.log(ratio)


def step_logratio(catalog: Catalog, dist: AssistantDistribution, prefix: Sequence[str], token: str,
                  epsilon: float | None = None) -> float:
    """Log of (assistant mass below ``prefix + [token]``) over (mass below ``prefix``)."""
    parent = catalog.node(prefix)
    if parent is None or not parent.subtree_items:
        raise AssistantError(f"dead prefix {list(prefix)!r}")
    child = parent.children.get(token)
    if child is None:
        raise AssistantError(f"{token!r} is not a legal continuation of {list(prefix)!r}")
    return PrefixMass(catalog, dist, epsilon).logratio(parent, child)
