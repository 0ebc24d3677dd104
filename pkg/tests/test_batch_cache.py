import json

import pytest

from psytext.errors import ProviderError
from psytext.raters import (
    STATUS_OK,
    STATUS_PARSE_FAILED,
    STATUS_PROVIDER_ERROR,
    ResponseCache,
    RetryPolicy,
    batch_score,
)
from psytext.corpus import TextRecord

from conftest import ConstantProvider, StubProvider, make_instrument

NO_BACKOFF = RetryPolicy(max_attempts=2, backoff_base=0.0)


def corpus(n=2):
    return [TextRecord(id=f"t{i + 1:02d}", text=f"text body {i + 1}") for i in range(n)]


def test_one_record_per_text_item_pair(instrument_2x4):
    provider = ConstantProvider("agree")
    records = batch_score(make_instrument(2, 4), corpus(2), provider, retry=NO_BACKOFF)
    assert len(records) == 16
    pairs = {(r.text_id, r.item_id) for r in records}
    assert len(pairs) == 16


def test_seven_item_instrument_cardinality():
    inst = make_instrument(1, 7)
    provider = ConstantProvider("disagree")
    records = batch_score(inst, corpus(2), provider, retry=NO_BACKOFF)
    assert len(records) == 14
    assert all(r.status == STATUS_OK for r in records)


def test_output_sorted_by_text_then_item_regardless_of_concurrency():
    inst = make_instrument(2, 4)
    provider = ConstantProvider("agree")
    records = batch_score(inst, corpus(5), provider, concurrency_limit=8, retry=NO_BACKOFF)
    keys = [(r.text_id, r.item_id) for r in records]
    assert keys == sorted(keys)


def test_warm_cache_rerun_zero_calls_identical_records(tmp_path):
    inst = make_instrument(1, 7)
    cache_path = str(tmp_path / "cache.jsonl")

    p1 = ConstantProvider("agree")
    cache1 = ResponseCache(cache_path)
    first = batch_score(inst, corpus(2), p1, cache=cache1, retry=NO_BACKOFF)
    assert p1.call_count == 14

    p2 = ConstantProvider("agree")
    cache2 = ResponseCache(cache_path)
    second = batch_score(inst, corpus(2), p2, cache=cache2, retry=NO_BACKOFF)
    assert p2.call_count == 0
    assert second == first

    # cache file format: one JSON object per line with the documented keys
    with open(cache_path, encoding="utf-8") as fh:
        lines = [json.loads(l) for l in fh]
    assert len(lines) == 14
    assert set(lines[0]) == {"prompt_hash", "model_id", "raw_response", "timestamp"}


def test_cache_is_keyed_by_model_id(tmp_path):
    inst = make_instrument(1, 3)
    cache_path = str(tmp_path / "cache.jsonl")
    batch_score(
        inst, corpus(1), ConstantProvider("agree", model_id="model-a"),
        cache=ResponseCache(cache_path), retry=NO_BACKOFF,
    )
    p_b = ConstantProvider("disagree", model_id="model-b")
    records = batch_score(inst, corpus(1), p_b, cache=ResponseCache(cache_path), retry=NO_BACKOFF)
    assert p_b.call_count == 3  # different model: no replay
    assert all(r.parsed_code == 2 for r in records)


def test_parse_failures_become_missing_not_crashes():
    inst = make_instrument(1, 3)
    provider = ConstantProvider("not a valid label")
    records = batch_score(inst, corpus(1), provider, retry=NO_BACKOFF)
    assert all(r.status == STATUS_PARSE_FAILED for r in records)
    assert all(r.parsed_code is None for r in records)
    assert all(r.attempt_count == 2 for r in records)


def test_permanent_provider_failure_degrades_not_raises():
    inst = make_instrument(1, 3)
    provider = StubProvider([ProviderError("down")])
    records = batch_score(inst, corpus(1), provider, retry=NO_BACKOFF)
    assert len(records) == 3
    assert all(r.status == STATUS_PROVIDER_ERROR for r in records)


def test_provider_errors_not_cached(tmp_path):
    inst = make_instrument(1, 3)
    cache_path = str(tmp_path / "cache.jsonl")
    provider = StubProvider([ProviderError("down")])
    batch_score(inst, corpus(1), provider, cache=ResponseCache(cache_path), retry=NO_BACKOFF)
    # nothing cached: a later run should retry the provider
    p2 = ConstantProvider("agree")
    records = batch_score(inst, corpus(1), p2, cache=ResponseCache(cache_path), retry=NO_BACKOFF)
    assert p2.call_count == 3
    assert all(r.status == STATUS_OK for r in records)


def test_parse_failures_are_cached_and_replayed(tmp_path):
    inst = make_instrument(1, 3)
    cache_path = str(tmp_path / "cache.jsonl")
    p1 = ConstantProvider("gibberish")
    batch_score(inst, corpus(1), p1, cache=ResponseCache(cache_path), retry=NO_BACKOFF)
    p2 = ConstantProvider("agree")
    records = batch_score(inst, corpus(1), p2, cache=ResponseCache(cache_path), retry=NO_BACKOFF)
    assert p2.call_count == 0
    assert all(r.status == STATUS_PARSE_FAILED for r in records)
    assert all(r.raw_response == "gibberish" for r in records)


def test_empty_corpus_rejected(instrument_2x4):
    with pytest.raises(ValueError, match="corpus is empty"):
        batch_score(instrument_2x4, [], ConstantProvider("agree"))


def test_records_never_carry_code_outside_scale(instrument_2x4):
    provider = ConstantProvider("strongly agree")
    records = batch_score(instrument_2x4, corpus(3), provider, retry=NO_BACKOFF)
    for rec in records:
        assert rec.parsed_code is None or 1 <= rec.parsed_code <= 4
        assert (rec.parsed_code is not None) == (rec.status == STATUS_OK)
