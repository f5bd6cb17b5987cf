import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdecode.catalog import EOI, build_catalog
from recdecode.scorer import (
    DecodingContext,
    ScorerConfig,
    ScorerError,
    SyntheticCopyLM,
    TableScorer,
    next_token_logprobs,
    table_scorer_load,
)


def probs(dist):
    return {t: math.exp(v) for t, v in dist.items()}


def test_forced_continuation(three_items):
    ctx = DecodingContext.from_history(three_items, ["ps3"])
    dist = SyntheticCopyLM().next_token_logprobs(ctx, ["play"], three_items, ScorerConfig(copy_bonus=0))
    assert dist == {"station": 0.0}


def test_copy_bonus_root(three_items):
    ctx = DecodingContext.from_history(three_items, ["ps3"])
    dist = SyntheticCopyLM().next_token_logprobs(ctx, [], three_items, ScorerConfig(copy_bonus=2.0))
    expected = 2 * math.e ** 2 / (2 * math.e ** 2 + 1)
    assert math.exp(dist["play"]) == pytest.approx(expected, abs=1e-12)
    assert round(math.exp(dist["play"]), 4) == 0.9366


def test_constructor_bonus_overrides_config(three_items):
    ctx = DecodingContext.from_history(three_items, ["ps3"])
    a = SyntheticCopyLM(copy_bonus=0.0).next_token_logprobs(ctx, [], three_items, ScorerConfig(copy_bonus=5))
    assert math.exp(a["play"]) == pytest.approx(2 / 3)


def test_end_of_item_weight():
    cat = build_catalog([("a", "guitar", "c"), ("b", "guitar hero", "c"), ("d", "guitar hero live", "c")])
    ctx = DecodingContext()
    dist = probs(SyntheticCopyLM().next_token_logprobs(ctx, ["guitar"], cat))
    # hero subtree holds 2 items, end-of-item weighs 1
    assert dist == pytest.approx({"hero": 2 / 3, EOI: 1 / 3})


def test_temperature_one_is_identity(three_items):
    ctx = DecodingContext.from_history(three_items, ["guitar"])
    lm = SyntheticCopyLM()
    assert lm.next_token_logprobs(ctx, [], three_items) == lm.next_token_logprobs(
        ctx, [], three_items, ScorerConfig(temperature=1.0))


def test_dead_prefix(three_items):
    with pytest.raises(ScorerError):
        next_token_logprobs(SyntheticCopyLM(), DecodingContext(), ["play", "guitar"], three_items)
    with pytest.raises(ScorerError):
        next_token_logprobs(TableScorer(), DecodingContext(), ["nope"], three_items)


def test_config_validation():
    with pytest.raises(ValueError):
        ScorerConfig(temperature=0)
    with pytest.raises(ValueError):
        ScorerConfig(copy_bonus=-1)


def test_rendered_history_multiset(three_items):
    ctx = DecodingContext.from_history(three_items, ["ps3", "ps4", "ps3"])
    assert ctx.rendered_history_tokens["play"] == 3
    assert ctx.rendered_history_tokens["4"] == 1


def _write(tmp_path, rows):
    path = tmp_path / "table.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_table_verbatim(tmp_path, three_items):
    path = _write(tmp_path, [{"context": "u1", "prefix": ["play"], "dist": {"station": 1.0}},
                             {"context": "u1", "prefix": [], "dist": {"play": 0.25, "guitar": 0.75}}])
    scorer = table_scorer_load(path)
    ctx = DecodingContext(context_id="u1")
    assert scorer.next_token_logprobs(ctx, ["play"], three_items) == {"station": 0.0}
    assert probs(scorer.next_token_logprobs(ctx, [], three_items)) == pytest.approx({"play": 0.25, "guitar": 0.75})


def test_table_missing_key_uniform(three_items):
    dist = TableScorer().next_token_logprobs(DecodingContext(context_id="u9"), ["play", "station"], three_items)
    assert dist == pytest.approx({"3": math.log(0.5), "4": math.log(0.5)})


def test_table_bad_sum(tmp_path):
    path = _write(tmp_path, [{"context": "u1", "prefix": [], "dist": {"play": 0.5, "guitar": 0.3}}])
    with pytest.raises(ScorerError, match="sums to"):
        table_scorer_load(path)


def test_table_malformed(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text('{"context": "u1", "prefix": []}\n')
    with pytest.raises(ScorerError, match=":1:"):
        table_scorer_load(path)


def test_table_illegal_token(three_items):
    scorer = TableScorer({("u", ()): {"drum": 1.0}})
    with pytest.raises(ScorerError, match="illegal"):
        scorer.next_token_logprobs(DecodingContext(context_id="u"), [], three_items)


def test_table_zero_probability_entry(three_items):
    scorer = TableScorer({("u", ()): {"play": 1.0}})
    dist = scorer.next_token_logprobs(DecodingContext(context_id="u"), [], three_items)
    assert dist["guitar"] == -math.inf and dist["play"] == 0.0


# property tests over random catalogs and histories

words = st.sampled_from(["ab", "cd", "ef", "gh", "ij"])
catalogs = st.lists(st.lists(words, min_size=1, max_size=4), min_size=2, max_size=20).map(
    lambda ts: sorted({tuple(t) for t in ts}))


def _build(token_lists):
    return build_catalog([(f"i{n}", " ".join(t), "c") for n, t in enumerate(token_lists)])


@settings(max_examples=150, deadline=None)
@given(catalogs, st.floats(0.05, 20), st.floats(0, 6), st.data())
def test_normalized_and_exact_support(token_lists, temp, beta, data):
    cat = _build(token_lists)
    history = data.draw(st.lists(st.sampled_from(sorted(cat.items)), max_size=4))
    ctx = DecodingContext.from_history(cat, history)
    for node_prefix in _live_prefixes(cat):
        dist = SyntheticCopyLM().next_token_logprobs(ctx, node_prefix, cat, ScorerConfig(temp, beta))
        assert set(dist) == set(cat.node(node_prefix).children)
        assert not any(math.isnan(v) for v in dist.values())
        assert math.fsum(math.exp(v) for v in dist.values()) == pytest.approx(1.0, abs=1e-9)


def _live_prefixes(cat):
    out, stack = [], [((), cat.root)]
    while stack:
        prefix, node = stack.pop()
        if node.children:
            out.append(list(prefix))
            stack.extend((prefix + (t,), c) for t, c in node.children.items())
    return out


@settings(max_examples=150, deadline=None)
@given(catalogs, st.floats(0.1, 5), st.floats(0.1, 5), st.data())
def test_temperature_flattens(token_lists, t1, t2, data):
    lo, hi = sorted((t1, t2))
    cat = _build(token_lists)
    history = data.draw(st.lists(st.sampled_from(sorted(cat.items)), max_size=3))
    ctx = DecodingContext.from_history(cat, history)
    lm = SyntheticCopyLM()
    for prefix in _live_prefixes(cat):
        a = lm.next_token_logprobs(ctx, prefix, cat, ScorerConfig(lo))
        b = lm.next_token_logprobs(ctx, prefix, cat, ScorerConfig(hi))
        top = max(a, key=lambda t: (a[t], t))
        assert b[top] <= a[top] + 1e-12
        assert max(b.values()) == pytest.approx(b[top], abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(catalogs, st.floats(0, 4), st.floats(0, 4), st.data())
def test_copy_bonus_monotone(token_lists, b1, b2, data):
    lo, hi = sorted((b1, b2))
    cat = _build(token_lists)
    history = data.draw(st.lists(st.sampled_from(sorted(cat.items)), min_size=1, max_size=3))
    ctx = DecodingContext.from_history(cat, history)
    lm = SyntheticCopyLM()
    for prefix in _live_prefixes(cat):
        kids = cat.node(prefix).children
        matching = [t for t in kids if t != EOI and ctx.rendered_history_tokens[t] > 0]
        if not matching or len(matching) == len(kids):
            continue
        a = lm.next_token_logprobs(ctx, prefix, cat, ScorerConfig(copy_bonus=lo))
        b = lm.next_token_logprobs(ctx, prefix, cat, ScorerConfig(copy_bonus=hi))
        for t in matching:
            assert b[t] >= a[t] - 1e-12
