"""Seeded synthetic catalogs and users.

Items are grouped into series that share a multi-token name, so every name
token after the first is forced inside the trie (a ghost token). Users have a
home category and draw most of their interactions from it.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass

from ..catalog import Catalog, build_catalog
from .data import UserRecord

_ONSETS = "b c d f g k l m n p r s t v z br cr dr gr kl pl st tr".split()
_VOWELS = "a e i o u ai ea io".split()


@dataclass(frozen=True)
class SyntheticSpec:
    n_categories: int = 4
    series_per_category: int = 4
    items_per_series: int = 5
    name_length: int = 3
    n_users: int = 200
    history_length: int = 10
    skew: float = 0.9
    seed: int = 0
    # series name lengths cycle through name_length .. name_length + spread
    name_length_spread: int = 2
    # Zipf exponent of item popularity inside every draw; 0 gives uniform draws
    popularity_exponent: float = 0.0

    def __post_init__(self):
        counts = (self.n_categories, self.series_per_category, self.items_per_series, self.name_length,
                  self.n_users, self.history_length)
        if any(c < 1 for c in counts):
            raise ValueError("synthetic spec counts must be positive")
        if self.name_length_spread < 0:
            raise ValueError("name_length_spread must be non-negative")
        if self.popularity_exponent < 0:
            raise ValueError("popularity_exponent must be non-negative")
        if not 0.0 <= self.skew <= 1.0:
            raise ValueError("skew must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))


def _series_names(spec: SyntheticSpec, rng: random.Random) -> list[list[str]]:
    n_series = spec.n_categories * spec.series_per_category
    firsts: set[str] = set()
    names = []
    for s in range(n_series):
        while True:
            head = _word(rng, 3)
            if head not in firsts:
                firsts.add(head)
                break
        length = spec.name_length + s % (spec.name_length_spread + 1)
        names.append([head] + [_word(rng, 2) for _ in range(length - 1)])
    return names


def synthetic_catalog(spec: SyntheticSpec) -> Catalog:
    rng = random.Random(spec.seed)
    names = _series_names(spec, rng)
    rows = []
    for s, name in enumerate(names):
        category = f"cat{s // spec.series_per_category}"
        for v in range(1, spec.items_per_series + 1):
            rows.append((f"i{len(rows):05d}", " ".join(name + [str(v)]), category))
    return build_catalog(rows)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Catalog, list[UserRecord]]:
    """Deterministic catalog and users for ``spec.seed``.

    Each user gets ``history_length + 2`` interactions; timestamps interleave
    users so a global timestamp split cuts every user near the end.
    """
    catalog = synthetic_catalog(spec)
    rng = random.Random(f"users-{spec.seed}")
    all_items = sorted(catalog.items)
    by_cat = {c: sorted(catalog.by_category(c)) for c in sorted(catalog.categories)}
    cats = sorted(by_cat)
    n_events = spec.history_length + 2
    ranked = list(all_items)
    rng.shuffle(ranked)
    weight = {item: 1.0 / (r + 1) ** spec.popularity_exponent for r, item in enumerate(ranked)}
    pools = {c: (items, [weight[i] for i in items]) for c, items in by_cat.items()}
    pools[None] = (all_items, [weight[i] for i in all_items])
    homes = [rng.choice(cats) for _ in range(spec.n_users)]
    order = [list(range(spec.n_users)) for _ in range(n_events)]
    for perm in order:
        rng.shuffle(perm)
    users = []
    for u in range(spec.n_users):
        events = []
        for pos in range(n_events):
            items, weights = pools[homes[u] if rng.random() < spec.skew else None]
            ts = pos * spec.n_users + order[pos][u] + 1
            events.append((rng.choices(items, weights)[0], ts))
        users.append(UserRecord(f"u{u:05d}", events))
    return catalog, users
