"""Item catalog, its prefix trie, and ghost-token analysis.

Every item is a token path followed by the end-of-item marker ``EOI``. The
trie over these paths is the whole constrained generation space: a decoder
may only emit tokens that keep it inside the trie.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

EOI = "<eoi>"

Tokenizer = Callable[[str], list[str]]


class CatalogError(ValueError):
    pass


class InvalidItemError(CatalogError):
    pass


class CollisionError(CatalogError):
    def __init__(self, ids: Sequence[str]):
        self.ids = list(ids)
        super().__init__(f"items share an identical token sequence: {', '.join(self.ids)}")


def whitespace_tokenizer(title: str) -> list[str]:
    return title.lower().split()


_TOKENIZERS: dict[str, Tokenizer] = {"whitespace": whitespace_tokenizer}


def register_tokenizer(name: str, fn: Tokenizer) -> None:
    if name in _TOKENIZERS:
        raise ValueError(f"tokenizer {name!r} already registered")
    _TOKENIZERS[name] = fn


def get_tokenizer(name: str = "whitespace") -> Tokenizer:
    try:
        return _TOKENIZERS[name]
    except KeyError:
        raise ValueError(f"unknown tokenizer {name!r}") from None


def tokenize(title: str, tokenizer: str = "whitespace") -> list[str]:
    """Tokenize an item title; the default lowercases and splits on whitespace."""
    if not title or not title.strip():
        raise InvalidItemError("item title is empty")
    tokens = get_tokenizer(tokenizer)(title)
    if not tokens:
        raise InvalidItemError(f"title {title!r} produced no tokens")
    if EOI in tokens:
        raise InvalidItemError(f"title {title!r} contains the reserved token {EOI}")
    return tokens


@dataclass(frozen=True)
class Item:
    id: str
    title: str
    category: str
    tokens: tuple[str, ...]


class TrieNode:
    __slots__ = ("children", "terminal_item", "subtree_items", "index", "depth")

    def __init__(self, depth: int = 0):
        self.children: dict[str, TrieNode] = {}
        self.terminal_item: str | None = None
        self.subtree_items: frozenset[str] = frozenset()
        self.index = -1
        self.depth = depth

    def __repr__(self) -> str:
        return f"TrieNode(children={sorted(self.children)}, items={len(self.subtree_items)})"


@dataclass(frozen=True)
class GhostAnalysis:
    mask: tuple[bool, ...]

    @property
    def raw_length(self) -> int:
        return len(self.mask)

    @property
    def effective_length(self) -> int:
        return self.raw_length - sum(self.mask)


@dataclass
class Catalog:
    """Immutable after :func:`build_catalog`; safe to share between decoders."""

    items: dict[str, Item]
    root: TrieNode
    categories: frozenset[str]
    nodes: list[TrieNode] = field(repr=False, default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self.items

    def node(self, prefix: Iterable[str]) -> TrieNode | None:
        node = self.root
        for tok in prefix:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def items_with_prefix(self, prefix: Iterable[str]) -> frozenset[str]:
        node = self.node(prefix)
        return frozenset() if node is None else node.subtree_items

    def legal_continuations(self, prefix: Iterable[str]) -> list[str]:
        node = self.node(prefix)
        if node is None or not node.subtree_items:
            raise CatalogError(f"dead prefix {list(prefix)!r}")
        return sorted(node.children)

    def max_branching(self) -> int:
        return max(len(n.children) for n in self.nodes)

    def max_item_length(self) -> int:
        return max(len(it.tokens) for it in self.items.values())

    def path(self, item_id: str) -> tuple[str, ...]:
        """Token path of an item including the trailing end-of-item marker."""
        return self.items[item_id].tokens + (EOI,)

    def by_category(self, category: str) -> frozenset[str]:
        return frozenset(i for i, it in self.items.items() if it.category == category)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for item_id in sorted(self.items):
            it = self.items[item_id]
            h.update(json.dumps([it.id, it.category, list(it.tokens)]).encode())
        return h.hexdigest()[:16]


def _insert(root: TrieNode, tokens: Sequence[str], item_id: str) -> TrieNode:
    node = root
    for tok in list(tokens) + [EOI]:
        child = node.children.get(tok)
        if child is None:
            child = node.children[tok] = TrieNode(node.depth + 1)
        node = child
    return node


def _finalize(root: TrieNode) -> list[TrieNode]:
    # iterative post-order so deep titles do not hit the recursion limit
    order: list[TrieNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.children[t] for t in sorted(node.children, reverse=True))
    for i, node in enumerate(order):
        node.index = i
    for node in reversed(order):
        ids = set()
        if node.terminal_item is not None:
            ids.add(node.terminal_item)
        for child in node.children.values():
            ids |= child.subtree_items
        node.subtree_items = frozenset(ids)
    return order


def build_catalog(
    raw_items: Iterable[tuple[str, str, str]],
    *,
    collisions: str = "reject",
    tokenizer: str = "whitespace",
) -> Catalog:
    """Build a catalog from ``(id, title, category)`` triples.

    ``collisions`` is ``"reject"`` (default) or ``"suffix"``; the latter
    appends ``#2``, ``#3`` ... to later items whose token sequence repeats an
    earlier one.
    """
    if collisions not in ("reject", "suffix"):
        raise ValueError(f"unknown collision policy {collisions!r}")
    items: dict[str, Item] = {}
    seen: dict[tuple[str, ...], list[str]] = {}
    pending: list[tuple[str, str, str, tuple[str, ...]]] = []
    for item_id, title, category in raw_items:
        item_id = str(item_id)
        if item_id in items or any(p[0] == item_id for p in pending):
            raise CatalogError(f"duplicate item id {item_id!r}")
        toks = tuple(tokenize(title, tokenizer))
        seen.setdefault(toks, []).append(item_id)
        pending.append((item_id, title, category, toks))
    if not pending:
        raise CatalogError("catalog has no items")

    taken = set(seen)
    for toks, ids in seen.items():
        if len(ids) > 1 and collisions == "reject":
            raise CollisionError(ids)
    for item_id, title, category, toks in pending:
        ids = seen[toks]
        rank = ids.index(item_id)
        if rank > 0:
            suffixed = toks + (f"#{rank + 1}",)
            if suffixed in taken:
                raise CollisionError([item_id, *seen.get(suffixed, [])])
            taken.add(suffixed)
            toks = suffixed
        items[item_id] = Item(item_id, title, str(category), toks)

    root = TrieNode()
    for item in items.values():
        terminal = _insert(root, item.tokens, item.id)
        terminal.terminal_item = item.id
    nodes = _finalize(root)
    return Catalog(items, root, frozenset(it.category for it in items.values()), nodes)


def load_catalog(path: str | Path, **kwargs) -> Catalog:
    """Read a JSON Lines catalog file (``id``, ``title``, ``category`` per line)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append((str(obj["id"]), obj["title"], str(obj["category"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CatalogError(f"{path}:{lineno}: malformed catalog line ({exc})") from None
    return build_catalog(rows, **kwargs)


def dump_catalog(catalog: Catalog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in catalog.items.values():
            fh.write(json.dumps({"id": item.id, "title": item.title, "category": item.category}) + "\n")


def items_with_prefix(catalog: Catalog, prefix: Iterable[str]) -> frozenset[str]:
    return catalog.items_with_prefix(prefix)


def ghost_positions(catalog: Catalog, item: Item | str) -> GhostAnalysis:
    """Structural ghost mask: token ``j`` is a ghost when the node it leaves has a single edge."""
    item_id = item if isinstance(item, str) else item.id
    if item_id not in catalog.items:
        raise CatalogError(f"unknown item {item_id!r}")
    node = catalog.root
    mask = []
    for tok in catalog.items[item_id].tokens:
        mask.append(len(node.children) == 1)
        node = node.children[tok]
    return GhostAnalysis(tuple(mask))


def ghost_positions_probabilistic(
    catalog: Catalog, item: Item | str, scorer, context, config=None, tau: float = 0.99
) -> GhostAnalysis:
    """Scorer-dependent variant: a token is a ghost when its probability exceeds ``tau``."""
    import math

    item_id = item if isinstance(item, str) else item.id
    if item_id not in catalog.items:
        raise CatalogError(f"unknown item {item_id!r}")
    tokens = catalog.items[item_id].tokens
    mask = []
    for j, tok in enumerate(tokens):
        dist = scorer.next_token_logprobs(context, tokens[:j], catalog, config)
        mask.append(math.exp(dist[tok]) > tau)
    return GhostAnalysis(tuple(mask))


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = sum(xs) / n
    return mean, sum((x - mean) ** 2 for x in xs) / n


def length_stats(catalog: Catalog) -> dict[str, tuple[float, float]]:
    """Population mean and variance of raw and ghost-free item lengths."""
    if not catalog.items:
        raise CatalogError("catalog has no items")
    analyses = [ghost_positions(catalog, i) for i in sorted(catalog.items)]
    return {
        "raw": _mean_var([a.raw_length for a in analyses]),
        "effective": _mean_var([a.effective_length for a in analyses]),
    }
