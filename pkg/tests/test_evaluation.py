"""Answer normalization, EM/F1 scoring, dataset slicing, aggregation."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from errr.errors import EmptyResults, FormatError, SliceOutOfRange
from errr.evaluation import (
    DatasetSpec,
    ExampleResult,
    QAExample,
    exact_match,
    f1,
    load_dataset,
    normalize_answer,
    summarize,
)
from errr.gateway import UsageStats

from conftest import fixture_dataset, write_jsonl
from reference_scorer import ref_exact_match, ref_f1, ref_normalize

FIXTURE_PAIRS = Path(__file__).parent / "fixtures" / "scoring_pairs.jsonl"


def scoring_pairs():
    with open(FIXTURE_PAIRS, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class TestNormalize:
    def test_article_and_punctuation(self):
        assert normalize_answer("The Office!") == "office"

    def test_lowercase(self):
        assert normalize_answer("Steven John Carell") == "steven john carell"

    def test_empty(self):
        assert normalize_answer("") == ""

    def test_whitespace_collapse(self):
        assert normalize_answer("  a   big \t gap ") == "big gap"

    def test_articles_only_as_whole_tokens(self):
        assert normalize_answer("theatre thespian") == "theatre thespian"

    def test_agrees_with_reference(self):
        for pair in scoring_pairs():
            for s in [pair["pred"], *pair["golds"]]:
                assert normalize_answer(s) == ref_normalize(s)


class TestExactMatch:
    def test_identity(self):
        assert exact_match("Steven John Carell", ["Steven John Carell"]) == 1

    def test_token_mismatch(self):
        assert exact_match("Steve Carell", ["Steven John Carell"]) == 0

    def test_normalization_applied(self):
        assert exact_match("the office", ["Office"]) == 1

    def test_any_gold_matches(self):
        assert exact_match("NYC", ["New York City", "NYC"]) == 1

    def test_empty_golds_rejected(self):
        with pytest.raises(ValueError):
            exact_match("x", [])


class TestF1:
    def test_partial_overlap_value(self):
        # P = 1/2, R = 1/3 -> F1 = 0.4
        assert f1("Steve Carell", ["Steven John Carell"]) == pytest.approx(0.4, abs=1e-9)

    def test_identity(self):
        assert f1("exact same answer", ["exact same answer"]) == 1.0

    def test_disjoint(self):
        assert f1("xyz", ["abc"]) == 0.0

    def test_both_empty_after_normalization(self):
        assert f1("the", ["a"]) == 1.0

    def test_one_side_empty_is_zero(self):
        assert f1("", ["something"]) == 0.0
        assert f1("something", ["..."]) == 0.0

    def test_max_over_golds(self):
        assert f1("Bulgakov", ["Mikhail Bulgakov", "Bulgakov"]) == 1.0

    def test_em_one_implies_f1_one(self):
        for pair in scoring_pairs():
            if exact_match(pair["pred"], pair["golds"]) == 1:
                assert f1(pair["pred"], pair["golds"]) == 1.0

    def test_symmetry_for_single_gold(self):
        for pair in scoring_pairs():
            if len(pair["golds"]) == 1:
                a, b = pair["pred"], pair["golds"][0]
                if not a:  # golds must stay non-empty
                    continue
                assert f1(a, [b]) == pytest.approx(f1(b, [a]), abs=1e-12)

    def test_agrees_with_reference_scorer_on_fixture(self):
        for pair in scoring_pairs():
            assert exact_match(pair["pred"], pair["golds"]) == ref_exact_match(
                pair["pred"], pair["golds"]
            )
            assert f1(pair["pred"], pair["golds"]) == pytest.approx(
                ref_f1(pair["pred"], pair["golds"]), abs=1e-9
            )


class TestLoadDataset:
    def test_ambignq_preset_takes_first_1000(self, tmp_path):
        path = fixture_dataset(tmp_path / "ambig.jsonl", 1500)
        examples = load_dataset(DatasetSpec(name="ambignq", path=path))
        assert len(examples) == 1000
        assert examples[0].id == "q0"
        assert examples[-1].id == "q999"

    def test_popqa_preset_takes_first_997(self, tmp_path):
        path = fixture_dataset(tmp_path / "pop.jsonl", 997)
        examples = load_dataset(DatasetSpec(name="popqa", path=path))
        assert len(examples) == 997

    def test_popqa_preset_fails_on_underfull_file(self, tmp_path):
        path = fixture_dataset(tmp_path / "pop.jsonl", 996)
        with pytest.raises(SliceOutOfRange):
            load_dataset(DatasetSpec(name="popqa", path=path))

    def test_hotpotqa_preset_is_full_set(self, tmp_path):
        path = fixture_dataset(tmp_path / "hotpot.jsonl", 123)
        examples = load_dataset(DatasetSpec(name="hotpotqa", path=path))
        assert len(examples) == 123

    def test_explicit_slice(self, tmp_path):
        path = fixture_dataset(tmp_path / "x.jsonl", 20)
        examples = load_dataset(DatasetSpec(name="custom", path=path, slice=(5, 10)))
        assert [e.id for e in examples] == [f"q{i}" for i in range(5, 15)]

    def test_slice_out_of_range(self, tmp_path):
        path = fixture_dataset(tmp_path / "x.jsonl", 12)
        with pytest.raises(SliceOutOfRange):
            load_dataset(DatasetSpec(name="custom", path=path, slice=(10, 5)))

    def test_slice_length_must_be_positive(self, tmp_path):
        path = fixture_dataset(tmp_path / "x.jsonl", 5)
        with pytest.raises(ValueError):
            load_dataset(DatasetSpec(name="custom", path=path, slice=(0, 0)))

    def test_format_error_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"id": "q0", "question": "ok?", "answers": ["a"]}\nnot json\n',
            encoding="utf-8",
        )
        with pytest.raises(FormatError, match="line 2"):
            load_dataset(DatasetSpec(name="custom", path=path))

    def test_missing_answers_is_format_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        write_jsonl(path, [{"id": "q0", "question": "ok?"}])
        with pytest.raises(FormatError, match="line 1"):
            load_dataset(DatasetSpec(name="custom", path=path))

    def test_empty_answer_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        write_jsonl(path, [{"id": "q0", "question": "ok?", "answers": [""]}])
        with pytest.raises(FormatError):
            load_dataset(DatasetSpec(name="custom", path=path))

    def test_file_order_kept(self, tmp_path):
        path = fixture_dataset(tmp_path / "x.jsonl", 10)
        examples = load_dataset(DatasetSpec(name="custom", path=path))
        assert [e.id for e in examples] == [f"q{i}" for i in range(10)]


class TestSummarize:
    def result(self, em, f1_val, cost=0.0):
        return ExampleResult(em=em, f1=f1_val, usage=UsageStats(cost_usd=cost))

    def test_means(self):
        s = summarize([self.result(1, 1.0), self.result(0, 0.4)])
        assert s.n == 2
        assert s.em == pytest.approx(0.5)
        assert s.f1 == pytest.approx(0.7)

    def test_single_result(self):
        s = summarize([self.result(1, 0.9)])
        assert (s.n, s.em, s.f1) == (1, 1.0, 0.9)

    def test_all_zero(self):
        s = summarize([self.result(0, 0.0)] * 997)
        assert s.n == 997
        assert s.em == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyResults):
            summarize([])

    def test_usage_totals_summed(self):
        s = summarize([self.result(1, 1.0, cost=0.5), self.result(0, 0.0, cost=0.25)])
        assert s.totals.cost_usd == pytest.approx(0.75)

    def test_permutation_invariant(self):
        rng = random.Random(7)
        results = [self.result(rng.randint(0, 1), rng.random(), rng.random()) for _ in range(60)]
        shuffled = results[:]
        rng.shuffle(shuffled)
        a, b = summarize(results), summarize(shuffled)
        assert a.em == b.em
        assert a.f1 == b.f1


class TestQAExample:
    def test_rejects_empty_question(self):
        with pytest.raises(ValueError):
            QAExample(id="x", question="", gold_answers=("a",))

    def test_rejects_empty_gold(self):
        with pytest.raises(ValueError):
            QAExample(id="x", question="q?", gold_answers=("a", ""))
