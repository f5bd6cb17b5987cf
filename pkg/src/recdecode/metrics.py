"""Accuracy and homogeneity metrics for top-K recommendation lists."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .catalog import Catalog


def hr_at_k(rec: Sequence[str], target: str, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(target in rec[:k])


def ndcg_at_k(rec: Sequence[str], target: str, k: int) -> float:
    """NDCG with a single relevant item, so the ideal DCG is 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for rank, item in enumerate(rec[:k], 1):
        if item == target:
            return 1.0 / math.log2(rank + 1)
    return 0.0


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(hypothesis: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on every n-gram precision.

    Precisions run up to ``min(max_n, len(hypothesis))``; counts are clipped
    by the maximum over references and the brevity penalty uses the
    reference length closest to the hypothesis (shorter wins ties).
    """
    hyp = list(hypothesis)
    refs = [list(r) for r in references]
    if not hyp or not refs:
        return 0.0
    top_n = min(max_n, len(hyp))
    log_p = 0.0
    for n in range(1, top_n + 1):
        hyp_counts = _ngrams(hyp, n)
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= _ngrams(r, n)
        matches = sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
        total = sum(hyp_counts.values())
        log_p += math.log((matches + 1) / (total + 1))
    c = len(hyp)
    r = min((len(ref) for ref in refs), key=lambda length: (abs(length - c), length))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_p / top_n)


def _prefixes(rec_items: Sequence[str], catalog: Catalog, first_m: int) -> list[tuple[str, ...]]:
    return [catalog.items[i].tokens[:first_m] for i in rec_items]


def pairwise_bleu(rec_items: Sequence[str], catalog: Catalog, first_m: int = 5, max_n: int = 4) -> float | None:
    """Mean BLEU over ordered pairs of distinct list positions; ``None`` for fewer than two items."""
    if len(rec_items) < 2:
        return None
    toks = _prefixes(rec_items, catalog, first_m)
    scores = [sentence_bleu(toks[i], [toks[j]], max_n)
              for i in range(len(toks)) for j in range(len(toks)) if i != j]
    return math.fsum(scores) / len(scores)


def category_entropy(rec_items: Sequence[str], catalog: Catalog) -> float:
    if not rec_items:
        raise ValueError("category entropy needs at least one recommendation")
    counts = Counter(catalog.items[i].category for i in rec_items)
    n = len(rec_items)
    h = -math.fsum(c / n * math.log2(c / n) for c in counts.values())
    return h + 0.0  # avoid -0.0


def history_repetition(rec_items: Sequence[str], history_items: Sequence[str], catalog: Catalog,
                       first_m: int = 5, max_n: int = 4) -> dict[str, float]:
    """Textual and categorical overlap between recommendations and history.

    Each history item's first ``first_m`` tokens is one BLEU reference.
    """
    if not history_items:
        raise ValueError("history_repetition needs a non-empty history")
    if not rec_items:
        return {"history_bleu": 0.0, "category_repeat_ratio": 0.0}
    refs = _prefixes(history_items, catalog, first_m)
    hyps = _prefixes(rec_items, catalog, first_m)
    bleu = math.fsum(sentence_bleu(h, refs, max_n) for h in hyps) / len(hyps)
    hist_cats = {catalog.items[i].category for i in history_items}
    repeat = sum(catalog.items[i].category in hist_cats for i in rec_items) / len(rec_items)
    return {"history_bleu": bleu, "category_repeat_ratio": repeat}


@dataclass
class EvalRecord:
    user: str
    recommendations: list[str]
    target: str
    history: list[str]
    case: int = 0


METRIC_FIELDS = (
    "hr@5", "hr@10", "ndcg@5", "ndcg@10", "pairwise_bleu", "category_entropy",
    "history_bleu", "category_repeat_ratio",
)


@dataclass
class MetricsReport:
    values: dict[str, float | None]
    n_records: int
    counts: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float | None:
        return self.values[key]

    def to_dict(self) -> dict:
        return asdict(self)


def record_metrics(rec: EvalRecord, catalog: Catalog, top: int = 10) -> dict[str, float | None]:
    items = rec.recommendations[:top]
    row: dict[str, float | None] = {}
    for k in (5, 10):
        row[f"hr@{k}"] = float(hr_at_k(items, rec.target, k))
        row[f"ndcg@{k}"] = ndcg_at_k(items, rec.target, k)
    row["pairwise_bleu"] = pairwise_bleu(items, catalog)
    row["category_entropy"] = category_entropy(items, catalog) if items else None
    if rec.history:
        row.update(history_repetition(items, rec.history, catalog))
    else:
        row["history_bleu"] = row["category_repeat_ratio"] = None
    return row


def evaluate(records: Iterable[EvalRecord], catalog: Catalog, top: int = 10) -> MetricsReport:
    """Per-metric means over records, summed in ascending ``(user, case)`` order.

    Records where a metric is undefined (e.g. BLEU on a single item) are left
    out of that metric's mean only.
    """
    ordered = sorted(records, key=lambda r: (r.user, r.case))
    columns: dict[str, list[float]] = {k: [] for k in METRIC_FIELDS}
    for rec in ordered:
        for key, val in record_metrics(rec, catalog, top).items():
            if val is not None:
                columns[key].append(val)
    values = {k: (math.fsum(v) / len(v) if v else None) for k, v in columns.items()}
    return MetricsReport(values, len(ordered), {k: len(v) for k, v in columns.items()})
