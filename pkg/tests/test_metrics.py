import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdecode.catalog import build_catalog
from recdecode.metrics import (
    EvalRecord,
    category_entropy,
    evaluate,
    history_repetition,
    hr_at_k,
    ndcg_at_k,
    pairwise_bleu,
    sentence_bleu,
)

REC = [f"r{i}" for i in range(1, 12)]


def test_hr():
    assert hr_at_k(REC, "r1", 5) == 1
    assert hr_at_k(REC, "r6", 5) == 0
    assert hr_at_k([], "r1", 5) == 0
    with pytest.raises(ValueError):
        hr_at_k(REC, "r1", 0)


def test_ndcg():
    assert ndcg_at_k(REC, "r1", 5) == 1.0
    assert ndcg_at_k(REC, "r3", 5) == 0.5
    assert ndcg_at_k(REC, "r11", 10) == 0.0
    assert ndcg_at_k(REC, "zz", 10) == 0.0


@pytest.mark.parametrize("k", [1, 5, 10, 50])
def test_hr_ndcg_agree_at_extremes(k):
    assert hr_at_k(REC, "r1", k) == ndcg_at_k(REC, "r1", k) == 1
    assert hr_at_k(REC, "nope", k) == ndcg_at_k(REC, "nope", k) == 0


def test_bleu_hand_values():
    # p1 = 1/3, p2 = 1/2, brevity penalty 1
    assert sentence_bleu(["a", "b"], [["c", "d"]]) == pytest.approx(math.sqrt(1 / 6), abs=1e-12)
    assert round(sentence_bleu(["a", "b"], [["c", "d"]]), 5) == 0.40825
    assert sentence_bleu(["a", "b"], [["a", "b"]]) == 1.0


def test_bleu_brevity_penalty():
    # hyp [a] vs ref [a, b]: p1 = 2/2, bp = exp(1 - 2/1)
    assert sentence_bleu(["a"], [["a", "b"]]) == pytest.approx(math.exp(-1), abs=1e-12)


def test_bleu_clipping():
    # hyp [a, a] vs ref [a, b]: clipped unigram matches 1 -> (1+1)/(2+1); bigram aa unmatched -> 1/2
    assert sentence_bleu(["a", "a"], [["a", "b"]]) == pytest.approx(math.sqrt(2 / 3 * 1 / 2), abs=1e-12)


def _catalog(titles, cats=None):
    cats = cats or ["c"] * len(titles)
    return build_catalog([(f"i{n}", t, c) for n, (t, c) in enumerate(zip(titles, cats))])


def test_pairwise_bleu_two_items():
    cat = _catalog(["a b", "c d"])
    assert pairwise_bleu(["i0", "i1"], cat) == pytest.approx(math.sqrt(1 / 6), abs=1e-12)
    assert pairwise_bleu(["i0"], cat) is None


def test_pairwise_bleu_identical_prefixes():
    cat = _catalog([f"star wars episode one two {n}" for n in range(10)])
    # the first five tokens agree everywhere, only the sixth differs
    assert pairwise_bleu(sorted(cat.items), cat) == 1.0
    assert pairwise_bleu(sorted(cat.items), cat, first_m=6) < 1.0


def test_category_entropy():
    cat = _catalog([f"t{n}" for n in range(10)], ["a"] * 10)
    assert category_entropy(sorted(cat.items), cat) == 0.0
    cat = _catalog([f"t{n}" for n in range(10)], ["a"] * 5 + ["b"] * 5)
    assert category_entropy(sorted(cat.items), cat) == 1.0
    cat = _catalog([f"t{n}" for n in range(8)], ["a"] * 4 + ["b"] * 2 + ["c"] * 2)
    assert category_entropy(sorted(cat.items), cat) == 1.5
    with pytest.raises(ValueError):
        category_entropy([], cat)


def test_history_repetition():
    cat = _catalog(["a b", "c d", "e f", "g h"], ["x", "x", "y", "z"])
    full = history_repetition(["i0", "i1"], ["i0", "i2"], cat)
    assert full["category_repeat_ratio"] == 1.0
    # i0 repeats a history item verbatim -> 1.0; i1 shares nothing with either reference
    assert full["history_bleu"] == pytest.approx((1.0 + math.sqrt(1 / 6)) / 2, abs=1e-12)
    assert history_repetition(["i3"], ["i0", "i2"], cat)["category_repeat_ratio"] == 0.0
    with pytest.raises(ValueError):
        history_repetition(["i0"], [], cat)


def test_evaluate_means_and_absent_bleu():
    cat = _catalog(["a b", "c d", "e f"], ["x", "y", "x"])
    recs = [
        EvalRecord("u2", ["i0", "i1"], "i1", ["i2"]),
        EvalRecord("u1", ["i2"], "i2", ["i0"]),
    ]
    rep = evaluate(recs, cat)
    assert rep.n_records == 2
    assert rep["hr@5"] == 1.0
    assert rep["ndcg@10"] == pytest.approx((1.0 + 1 / math.log2(3)) / 2)
    assert rep["pairwise_bleu"] == pytest.approx(math.sqrt(1 / 6))
    assert rep.counts["pairwise_bleu"] == 1
    assert rep["category_entropy"] == pytest.approx(0.5)
    assert rep["category_repeat_ratio"] == pytest.approx((0.5 + 1.0) / 2)


def _oracle_bleu(hyp, ref, max_n=4):
    # independent re-derivation with explicit lists instead of Counters
    top = min(max_n, len(hyp))
    prod = 1.0
    for n in range(1, top + 1):
        hg = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
        rg = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
        used, m = list(rg), 0
        for g in hg:
            if g in used:
                used.remove(g)
                m += 1
        prod *= (m + 1) / (len(hg) + 1)
    bp = 1.0 if len(hyp) > len(ref) else math.exp(1 - len(ref) / len(hyp))
    return bp * prod ** (1 / top)


toks = st.lists(st.sampled_from("abc"), min_size=1, max_size=7)


@settings(max_examples=300, deadline=None)
@given(toks, toks)
def test_bleu_matches_oracle(hyp, ref):
    got = sentence_bleu(hyp, [ref])
    assert got == pytest.approx(_oracle_bleu(hyp, ref), abs=1e-12)
    assert 0.0 < got <= 1.0
    assert (got == 1.0) == (hyp == ref)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(toks, st.sampled_from("xyzw")), min_size=1, max_size=12))
def test_entropy_bound(rows):
    uniq = {}
    for t, c in rows:
        uniq.setdefault(tuple(t), c)
    cat = build_catalog([(f"i{n}", " ".join(t), c) for n, (t, c) in enumerate(uniq.items())])
    ids = sorted(cat.items)
    h = category_entropy(ids, cat)
    assert 0.0 <= h <= math.log2(min(len(ids), len(cat.categories))) + 1e-12
