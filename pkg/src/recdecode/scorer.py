"""Language-model side of decoding: next-token log-probabilities over legal continuations."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .catalog import EOI, Catalog, CatalogError

TokenDistribution = dict[str, float]


class ScorerError(ValueError):
    pass


@dataclass(frozen=True)
class ScorerConfig:
    temperature: float = 1.0
    copy_bonus: float = 2.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.copy_bonus < 0:
            raise ValueError(f"copy_bonus must be non-negative, got {self.copy_bonus}")


@dataclass(frozen=True)
class DecodingContext:
    user_history: tuple[str, ...] = ()
    rendered_history_tokens: Counter = field(default_factory=Counter, compare=False)
    context_id: str = ""

    @classmethod
    def from_history(cls, catalog: Catalog, history: Iterable[str], context_id: str = "") -> "DecodingContext":
        history = tuple(history)
        toks: Counter = Counter()
        for item_id in history:
            toks.update(catalog.items[item_id].tokens)
        return cls(history, toks, context_id)


class Scorer(Protocol):
    def next_token_logprobs(
        self, context: DecodingContext, prefix: Sequence[str], catalog: Catalog, config: ScorerConfig | None = None
    ) -> TokenDistribution: ...


def log_softmax(logits: dict[str, float], temperature: float = 1.0) -> TokenDistribution:
    finite = [v for v in logits.values() if v != -math.inf]
    if not finite:
        raise ScorerError("all continuations have zero weight")
    scaled = {t: v / temperature for t, v in logits.items()}
    top = max(finite) / temperature
    z = top + math.log(sum(math.exp(v - top) for v in scaled.values() if v != -math.inf))
    return {t: (v - z if v != -math.inf else -math.inf) for t, v in scaled.items()}


def _legal_node(catalog: Catalog, prefix: Sequence[str]):
    node = catalog.node(prefix)
    if node is None or not node.subtree_items:
        raise ScorerError(f"dead prefix {list(prefix)!r}")
    return node


class SyntheticCopyLM:
    """Closed-form scorer with a token-copy bias toward the user's history.

    A child token's weight is the number of items below it, multiplied by
    ``exp(copy_bonus)`` when the token occurs in the rendered history. The
    end-of-item marker weighs 1 where it is legal.
    """

    def __init__(self, copy_bonus: float | None = None):
        self.copy_bonus = copy_bonus

    def next_token_logprobs(self, context, prefix, catalog, config=None):
        config = config or ScorerConfig()
        beta = config.copy_bonus if self.copy_bonus is None else self.copy_bonus
        node = _legal_node(catalog, prefix)
        history = context.rendered_history_tokens
        logits = {}
        for tok, child in node.children.items():
            if tok == EOI:
                logits[tok] = 0.0
            else:
                logits[tok] = math.log(len(child.subtree_items)) + (beta if history[tok] > 0 else 0.0)
        return log_softmax(logits, config.temperature)


class TableScorer:
    """Scorer returning distributions listed in a table; uniform where no entry exists."""

    def __init__(self, table: dict[tuple[str, tuple[str, ...]], dict[str, float]] | None = None):
        self.table = {}
        for key, dist in (table or {}).items():
            self.add(key[0], key[1], dist)

    def add(self, context_id: str, prefix: Sequence[str], dist: dict[str, float]) -> None:
        if not dist:
            raise ScorerError(f"empty distribution for ({context_id!r}, {list(prefix)!r})")
        if any(not isinstance(p, (int, float)) or p < 0 or math.isnan(p) for p in dist.values()):
            raise ScorerError(f"invalid probability in ({context_id!r}, {list(prefix)!r})")
        total = sum(dist.values())
        if abs(total - 1.0) > 1e-6:
            raise ScorerError(f"distribution for ({context_id!r}, {list(prefix)!r}) sums to {total}")
        self.table[(context_id, tuple(prefix))] = {t: float(p) for t, p in dist.items()}

    def next_token_logprobs(self, context, prefix, catalog, config=None):
        config = config or ScorerConfig()
        node = _legal_node(catalog, prefix)
        legal = node.children
        dist = self.table.get((context.context_id, tuple(prefix)))
        if dist is None:
            logits = {t: 0.0 for t in legal}
        else:
            extra = set(dist) - set(legal)
            if extra:
                raise ScorerError(f"table lists illegal continuations {sorted(extra)} at {list(prefix)!r}")
            logits = {t: (math.log(dist[t]) if dist.get(t, 0.0) > 0 else -math.inf) for t in legal}
        # renormalize: the file tolerance (1e-6) is looser than the emitted one
        return log_softmax(logits, config.temperature)

    @classmethod
    def load(cls, path: str | Path) -> "TableScorer":
        scorer = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    context, prefix, dist = str(obj["context"]), obj["prefix"], obj["dist"]
                    if not isinstance(prefix, list) or not isinstance(dist, dict):
                        raise TypeError("prefix must be a list and dist an object")
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ScorerError(f"{path}:{lineno}: malformed table line ({exc})") from None
                try:
                    scorer.add(context, [str(t) for t in prefix], dist)
                except ScorerError as exc:
                    raise ScorerError(f"{path}:{lineno}: {exc}") from None
        return scorer


def table_scorer_load(path: str | Path) -> TableScorer:
    return TableScorer.load(path)


def next_token_logprobs(scorer: Scorer, context, prefix, catalog, config=None) -> TokenDistribution:
    try:
        return scorer.next_token_logprobs(context, prefix, catalog, config)
    except CatalogError as exc:
        raise ScorerError(str(exc)) from None
