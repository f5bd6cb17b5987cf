"""Catalog-constrained beam search.

Three strategies share one engine:

``baseline``
    rank by summed log-probability, divide finished hypotheses by
    ``length ** length_penalty`` at the end.
``baseline_temp``
    the same, with the scorer's temperature applied at every step.
``d3``
    no length normalization; every step is scored by
    ``alpha * lm + (1 - alpha) * tf`` where ``tf`` accumulates the text-free
    assistant's prefix-mass log-ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .assistant import AssistantDistribution, PrefixMass
from .catalog import EOI, Catalog, TrieNode
from .scorer import DecodingContext, Scorer, ScorerConfig

NEG_INF = -math.inf
STRATEGIES = ("baseline", "baseline_temp", "d3")
BRUTE_FORCE_LIMIT = 10_000


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "d3"
    beam_width: int = 10
    expansion_width: int = 10
    alpha: float = 1.0
    length_penalty: float = 1.0
    temperature: float = 1.0
    max_steps: int | None = None
    finished_target: int | None = None
    fusion: str = "step"  # "step": fuse while searching; "final": fuse only when ranking finished items
    epsilon: float | None = None

    def __post_init__(self):
        strategy = self.strategy.replace("-", "_")
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        object.__setattr__(self, "strategy", strategy)
        if self.beam_width < 1 or self.expansion_width < 1:
            raise ValueError("beam_width and expansion_width must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.length_penalty < 0:
            raise ValueError("length_penalty must be non-negative")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.finished_target is not None and self.finished_target < 1:
            raise ValueError("finished_target must be positive")
        if self.fusion not in ("step", "final"):
            raise ValueError(f"unknown fusion mode {self.fusion!r}")
        if strategy == "d3":
            object.__setattr__(self, "length_penalty", 0.0)
        else:
            object.__setattr__(self, "alpha", 1.0)
        if strategy == "baseline":
            object.__setattr__(self, "temperature", 1.0)


@dataclass(slots=True)
class Hypothesis:
    tokens: tuple[str, ...]
    lm_score: float = 0.0
    tf_score: float = 0.0
    finished: bool = False
    node: TrieNode | None = field(default=None, repr=False, compare=False)

    @property
    def length(self) -> int:
        return len(self.tokens) - 1 if self.finished else len(self.tokens)


@dataclass(frozen=True)
class RecommendationList:
    entries: tuple[tuple[str, float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def item_ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.entries]


def _fuse(lm: float, tf: float, alpha: float) -> float:
    if alpha == 1.0:
        return lm
    if alpha == 0.0:
        return tf
    return alpha * lm + (1.0 - alpha) * tf


def combined_score(h: Hypothesis, config: DecodeConfig) -> float:
    """Final ranking score of a hypothesis."""
    if config.strategy == "d3":
        return _fuse(h.lm_score, h.tf_score, config.alpha)
    if h.finished and config.length_penalty != 0.0 and h.lm_score != NEG_INF:
        return h.lm_score / h.length ** config.length_penalty
    return h.lm_score


def _selection_score(h: Hypothesis, config: DecodeConfig) -> float:
    if config.strategy == "d3" and config.fusion == "step":
        return _fuse(h.lm_score, h.tf_score, config.alpha)
    return h.lm_score


def _scorer_config(config: DecodeConfig, base: ScorerConfig | None) -> ScorerConfig:
    base = base or ScorerConfig()
    return replace(base, temperature=config.temperature)


def _uses_assistant(config: DecodeConfig) -> bool:
    return config.strategy == "d3" and config.alpha < 1.0


def _prefix_mass(catalog, assistant_dist, config) -> PrefixMass | None:
    if not _uses_assistant(config):
        return None
    if assistant_dist is None:
        raise DecodeError("strategy d3 with alpha < 1 needs an assistant distribution")
    return PrefixMass(catalog, assistant_dist, config.epsilon)


class _Stepper:
    """Expands hypotheses one token, caching scorer calls per prefix."""

    def __init__(self, catalog, scorer, context, mass, config, scorer_config):
        self.catalog = catalog
        self.scorer = scorer
        self.context = context
        self.mass = mass
        self.config = config
        self.scorer_config = _scorer_config(config, scorer_config)

    def children(self, h: Hypothesis) -> list[Hypothesis]:
        node = h.node
        dist = self.scorer.next_token_logprobs(self.context, h.tokens, self.catalog, self.scorer_config)
        out = []
        for tok, child in node.children.items():
            tf = h.tf_score
            if self.mass is not None:
                tf = tf + self.mass.logratio(node, child)
            out.append(Hypothesis(h.tokens + (tok,), h.lm_score + dist[tok], tf, tok == EOI, child))
        return out


def _sort_key(score: float, tokens: tuple[str, ...]):
    return (-score, tokens)


def _default_max_steps(catalog: Catalog) -> int:
    return catalog.max_item_length() + 1


def _rank_finished(finished: Sequence[Hypothesis], config: DecodeConfig, limit: int | None) -> RecommendationList:
    scored = sorted(((combined_score(h, config), h) for h in finished), key=lambda sh: _sort_key(sh[0], sh[1].tokens))
    if limit is not None:
        scored = scored[:limit]
    return RecommendationList(tuple((h.node.terminal_item, s) for s, h in scored))


def decode(
    catalog: Catalog,
    scorer: Scorer,
    context: DecodingContext,
    assistant_dist: AssistantDistribution | None = None,
    config: DecodeConfig | None = None,
    scorer_config: ScorerConfig | None = None,
) -> RecommendationList:
    """Beam search over the catalog trie; returns at most ``beam_width`` items."""
    config = config or DecodeConfig()
    B, k = config.beam_width, config.expansion_width
    max_steps = config.max_steps or _default_max_steps(catalog)
    target = config.finished_target or 2 * B
    stepper = _Stepper(catalog, scorer, context, _prefix_mass(catalog, assistant_dist, config), config, scorer_config)

    live = [Hypothesis((), 0.0, 0.0, False, catalog.root)]
    finished: list[Hypothesis] = []
    for step in range(max_steps):
        pool = []
        for h in live:
            cands = [(c, _selection_score(c, config)) for c in stepper.children(h)]
            cands = [cs for cs in cands if cs[1] != NEG_INF]
            cands.sort(key=lambda cs: _sort_key(cs[1], cs[0].tokens))
            pool.extend(cands[:k])
        if not pool:
            if finished:
                break
            raise DecodeError(
                f"every candidate scores -inf at step {step} for context {context.context_id!r}; "
                "check the group mask and the scorer's support"
            )
        pool.sort(key=lambda cs: _sort_key(cs[1], cs[0].tokens))
        live = []
        for cand, _ in pool:
            if len(live) >= B:
                break
            if cand.finished:
                finished.append(cand)
            else:
                live.append(cand)
        if len(finished) >= target or not live:
            break
    if not finished:
        raise DecodeError(f"no hypothesis finished within {max_steps} steps")
    return _rank_finished(finished, config, B)


def brute_force_rank(
    catalog: Catalog,
    scorer: Scorer,
    context: DecodingContext,
    assistant_dist: AssistantDistribution | None = None,
    config: DecodeConfig | None = None,
    scorer_config: ScorerConfig | None = None,
) -> RecommendationList:
    """Score every catalog item along its full path and rank them all exactly."""
    config = config or DecodeConfig()
    if len(catalog) > BRUTE_FORCE_LIMIT:
        raise DecodeError(f"catalog has {len(catalog)} items; brute force is limited to {BRUTE_FORCE_LIMIT}")
    stepper = _Stepper(catalog, scorer, context, _prefix_mass(catalog, assistant_dist, config), config, scorer_config)
    cache: dict[tuple[str, ...], dict[str, Hypothesis]] = {}
    finished = []
    for item_id in sorted(catalog.items):
        h = Hypothesis((), 0.0, 0.0, False, catalog.root)
        for tok in catalog.path(item_id):
            kids = cache.get(h.tokens)
            if kids is None:
                kids = cache[h.tokens] = {c.tokens[-1]: c for c in stepper.children(h)}
            h = kids[tok]
        finished.append(h)
    return _rank_finished(finished, config, None)


def score_item(catalog, scorer, context, item_id, assistant_dist=None, config=None, scorer_config=None) -> Hypothesis:
    """Finished hypothesis for one item, scored exactly as the engine would."""
    config = config or DecodeConfig()
    stepper = _Stepper(catalog, scorer, context, _prefix_mass(catalog, assistant_dist, config), config, scorer_config)
    h = Hypothesis((), 0.0, 0.0, False, catalog.root)
    for tok in catalog.path(item_id):
        h = next(c for c in stepper.children(h) if c.tokens[-1] == tok)
    return h
