"""Decision-core math: entropy normalization, threshold bits, truth table."""

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcgauge.constraints import (
    RULE_ANSWERABILITY_ONLY,
    RULE_BOTH,
    RULE_COMPLETENESS_ONLY,
    RcVerdict,
    answerability,
    classify,
    completeness,
    completeness_score,
    decide_label,
    per_document_entropy,
    verdict_from_json,
    verdict_to_json,
)
from rcgauge.core import Question, Thresholds
from rcgauge.evaluator import AnswerabilityScores, RelevanceMatrix

# frozen from a 50-digit arbitrary-precision oracle
ENTROPY_2211 = 0.9591479170272448

positive_rows = st.lists(
    st.floats(min_value=1e-9, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=2,
    max_size=12,
)


@st.composite
def rectangular_matrices(draw):
    width = draw(st.integers(min_value=2, max_value=6))
    height = draw(st.integers(min_value=1, max_value=6))
    cell = st.floats(min_value=1e-9, max_value=1e6, allow_nan=False, allow_infinity=False)
    return tuple(
        tuple(draw(cell) for _ in range(width)) for _ in range(height)
    )


class TestPerDocumentEntropy:
    def test_uniform_row_is_exactly_one(self):
        for n in (2, 3, 4, 7, 16, 33):
            for c in (1.0, 2.0, 5.0, 0.25, 1e-6):
                assert per_document_entropy([c] * n) == 1.0

    def test_one_hot_row_is_exactly_zero(self):
        assert per_document_entropy([0.0, 7.0, 0.0, 0.0]) == 0.0
        assert per_document_entropy([3.0, 0.0]) == 0.0

    def test_hand_oracle_2211(self):
        assert per_document_entropy([2.0, 2.0, 1.0, 1.0]) == pytest.approx(
            ENTROPY_2211, abs=1e-9
        )

    def test_single_column_is_zero(self):
        assert per_document_entropy([42.0]) == 0.0

    def test_all_zero_row_rejected(self):
        with pytest.raises(ValueError, match="smoothing"):
            per_document_entropy([0.0, 0.0, 0.0])

    def test_negative_entry_rejected(self):
        with pytest.raises(ValueError):
            per_document_entropy([1.0, -1.0])

    def test_empty_row_rejected(self):
        with pytest.raises(ValueError):
            per_document_entropy([])

    @given(positive_rows, st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=300)
    def test_scale_invariance(self, row, alpha):
        scaled = [alpha * v for v in row]
        assert per_document_entropy(scaled) == pytest.approx(
            per_document_entropy(row), abs=1e-9
        )

    @given(positive_rows, st.randoms(use_true_random=False))
    @settings(max_examples=300)
    def test_permutation_invariance_exact(self, row, rng):
        shuffled = list(row)
        rng.shuffle(shuffled)
        assert per_document_entropy(shuffled) == per_document_entropy(row)

    @given(positive_rows)
    def test_bounded(self, row):
        assert 0.0 <= per_document_entropy(row) <= 1.0


class TestAnswerability:
    def test_all_below_threshold(self):
        scores = AnswerabilityScores((0.02, 0.10, 0.14))
        assert answerability(scores, 0.15) == 0

    def test_boundary_is_answerable(self):
        assert answerability(AnswerabilityScores((0.14, 0.15)), 0.15) == 1

    def test_clearly_answerable(self):
        assert answerability(AnswerabilityScores((0.9,)), 0.15) == 1

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError):
            answerability(AnswerabilityScores(()), 0.15)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=10),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=300)
    def test_raising_threshold_only_flips_one_to_zero(self, values, t_low, t_high):
        t_low, t_high = sorted((t_low, t_high))
        scores = AnswerabilityScores(tuple(values))
        assert answerability(scores, t_low) >= answerability(scores, t_high)


class TestCompleteness:
    def test_boundary_inclusive(self):
        assert completeness(0.80, 0.80) == 1

    def test_just_below(self):
        assert completeness(0.79, 0.80) == 0

    def test_zero_score(self):
        assert completeness(0.0, 0.5) == 0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            completeness(1.2, 0.8)

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=300)
    def test_raising_threshold_only_flips_one_to_zero(self, s, t_low, t_high):
        t_low, t_high = sorted((t_low, t_high))
        assert completeness(s, t_low) >= completeness(s, t_high)


class TestCompletenessScore:
    def test_average_of_uniform_and_one_hot(self):
        matrix = RelevanceMatrix(((1.0, 1.0), (0.0, 5.0)))
        assert completeness_score(matrix) == 0.5

    def test_all_uniform_is_one(self):
        matrix = RelevanceMatrix(((2.0, 2.0, 2.0), (7.0, 7.0, 7.0)))
        assert completeness_score(matrix) == 1.0

    def test_single_doc_2211(self):
        matrix = RelevanceMatrix(((2.0, 2.0, 1.0, 1.0),))
        assert completeness_score(matrix) == pytest.approx(ENTROPY_2211, abs=1e-9)

    def test_zero_documents_rejected(self):
        with pytest.raises(ValueError):
            completeness_score(RelevanceMatrix(()))

    @given(rectangular_matrices(), st.randoms(use_true_random=False))
    @settings(max_examples=100)
    def test_row_permutation_invariance(self, rows, rng):
        matrix = RelevanceMatrix(rows)
        shuffled = list(rows)
        rng.shuffle(shuffled)
        permuted = RelevanceMatrix(tuple(shuffled))
        assert completeness_score(matrix) == pytest.approx(
            completeness_score(permuted), abs=1e-12
        )


class TestDecideLabel:
    @pytest.mark.parametrize(
        "ans,com,expected",
        [
            (0, 1, "complex"),
            (0, 0, "not_complex"),
            (1, 1, "not_complex"),
            (1, 0, "not_complex"),
        ],
    )
    def test_truth_table(self, ans, com, expected):
        assert decide_label(ans, com, RULE_BOTH) == expected

    def test_single_constraint_rules(self):
        assert decide_label(0, 0, RULE_ANSWERABILITY_ONLY) == "complex"
        assert decide_label(1, 1, RULE_ANSWERABILITY_ONLY) == "not_complex"
        assert decide_label(1, 1, RULE_COMPLETENESS_ONLY) == "complex"
        assert decide_label(0, 0, RULE_COMPLETENESS_ONLY) == "not_complex"

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            decide_label(0, 1, "majority")


class TestClassify:
    def make_inputs(self, correctness, rows):
        n_tokens = len(rows[0])
        question = Question.from_text("q", " ".join(f"t{i}" for i in range(n_tokens)))
        return (
            question,
            AnswerabilityScores(tuple(correctness)),
            RelevanceMatrix(tuple(tuple(r) for r in rows)),
        )

    def test_complex_when_unanswerable_and_spread(self):
        question, scores, matrix = self.make_inputs(
            [0.05, 0.10], [[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]
        )
        verdict = classify(question, scores, matrix, Thresholds())
        assert (verdict.ans_bit, verdict.com_bit, verdict.label) == (0, 1, "complex")
        assert verdict.max_correctness == 0.10
        assert verdict.completeness_score == 1.0
        assert verdict.per_doc_entropy == (1.0, 1.0)

    def test_not_complex_when_answerable(self):
        question, scores, matrix = self.make_inputs([0.9], [[1.0, 1.0]])
        verdict = classify(question, scores, matrix, Thresholds())
        assert (verdict.ans_bit, verdict.label) == (1, "not_complex")

    def test_not_complex_when_concentrated(self):
        question, scores, matrix = self.make_inputs([0.05], [[9.0, 0.0]])
        verdict = classify(question, scores, matrix, Thresholds())
        assert (verdict.ans_bit, verdict.com_bit, verdict.label) == (0, 0, "not_complex")

    def test_misaligned_rows_rejected(self):
        question, scores, matrix = self.make_inputs([0.5, 0.5], [[1.0, 1.0]])
        with pytest.raises(ValueError, match="misaligned"):
            classify(question, scores, matrix, Thresholds())

    def test_misaligned_columns_rejected(self):
        question = Question.from_text("q", "one two three")
        scores = AnswerabilityScores((0.5,))
        matrix = RelevanceMatrix(((1.0, 1.0),))
        with pytest.raises(ValueError, match="misaligned"):
            classify(question, scores, matrix, Thresholds())

    def test_verdict_invariants_hold(self):
        question, scores, matrix = self.make_inputs(
            [0.3, 0.1], [[1.0, 2.0, 1.0], [4.0, 1.0, 1.0]]
        )
        verdict = classify(question, scores, matrix, Thresholds(t_ans=0.5, t_com=0.2))
        assert verdict.completeness_score == pytest.approx(
            math.fsum(verdict.per_doc_entropy) / len(verdict.per_doc_entropy)
        )
        assert verdict.ans_bit == (1 if verdict.max_correctness >= 0.5 else 0)

    def test_truth_table_over_threshold_grid(self):
        rng = random.Random(99)
        grid = [i / 20 for i in range(21)]
        for _ in range(25):
            n = rng.randint(1, 5)
            question, scores, matrix = self.make_inputs(
                [rng.random() for _ in range(n)],
                [[rng.random() + 1e-9 for _ in range(4)] for _ in range(n)],
            )
            for t_ans in grid:
                for t_com in grid:
                    verdict = classify(
                        question, scores, matrix, Thresholds(t_ans=t_ans, t_com=t_com)
                    )
                    expected_complex = verdict.ans_bit == 0 and verdict.com_bit == 1
                    assert verdict.label == (
                        "complex" if expected_complex else "not_complex"
                    )


class TestVerdictSerialization:
    def sample_verdict(self):
        return RcVerdict(
            question_id="q-1",
            label="complex",
            ans_bit=0,
            com_bit=1,
            max_correctness=0.123456789123,
            completeness_score=0.987654321987,
            per_doc_entropy=(1.0, 0.9591479170272448),
            rule=RULE_BOTH,
        )

    def test_stable_key_order(self):
        line = verdict_to_json(self.sample_verdict())
        assert list(json.loads(line)) == [
            "question_id",
            "label",
            "ans_bit",
            "com_bit",
            "max_correctness",
            "completeness_score",
            "per_doc_entropy",
            "rule",
        ]

    def test_nine_significant_digits(self):
        line = verdict_to_json(self.sample_verdict())
        obj = json.loads(line)
        assert obj["max_correctness"] == 0.123456789
        assert obj["completeness_score"] == 0.987654322
        assert obj["per_doc_entropy"] == [1.0, 0.959147917]

    def test_round_trip(self):
        verdict = self.sample_verdict()
        recovered = verdict_from_json(verdict_to_json(verdict))
        assert recovered.question_id == verdict.question_id
        assert recovered.label == verdict.label
        assert recovered.ans_bit == verdict.ans_bit
        assert recovered.com_bit == verdict.com_bit

    def test_label_consistency_enforced(self):
        with pytest.raises(ValueError, match="inconsistent"):
            RcVerdict(
                question_id="q",
                label="complex",
                ans_bit=1,
                com_bit=1,
                max_correctness=0.5,
                completeness_score=0.9,
                per_doc_entropy=(0.9,),
            )
