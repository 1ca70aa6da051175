"""Acceptance suite: one test per exit criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines. Tolerances are pinned here and nowhere else.
"""

import json
import random
import re
import time
from contextlib import contextmanager

import pytest
from click.testing import CliRunner

from rcgauge.cli import main as cli_main
from rcgauge.constraints import (
    answerability,
    classify,
    completeness,
    decide_label,
    per_document_entropy,
)
from rcgauge.core import (
    Document,
    PipelineConfig,
    Question,
    ReferenceSet,
    Thresholds,
    load_config,
)
from rcgauge.datasets import BenchmarkRecord, write_records
from rcgauge.evaluator import AnswerabilityScores, LexicalScorer, RelevanceMatrix
from rcgauge.metrics import ConfusionMatrix, f1, mcc, pcc, precision, recall
from rcgauge.pipeline import classify_record, classify_records
from rcgauge.retrieval import build_index, load_index, retrieve_bm25, save_index
from tests.test_retrieval import oracle_ranking

ENTROPY_2211 = 0.9591479170272448  # frozen 50-digit oracle
MCC_3124 = 0.408248290463863
PCC_123_247 = 0.9933992677987828


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"ACCEPTANCE {number} ({name}): PASS")


def test_criterion_1_bm25_oracle_equivalence():
    with criterion(1, "BM25 oracle equivalence"):
        started = time.monotonic()
        rng = random.Random(20240117)
        vocab = [f"w{i}" for i in range(10)]
        for _ in range(50):
            doc_texts = {
                f"doc{i:02d}": " ".join(rng.choices(vocab, k=rng.randint(1, 15)))
                for i in range(rng.randint(2, 20))
            }
            index = build_index(
                [Document(doc_id=d, text=t) for d, t in doc_texts.items()]
            )
            query = Question.from_text("q", " ".join(rng.choices(vocab, k=rng.randint(1, 4))))
            top_k = rng.randint(1, 20)
            got = retrieve_bm25(index, query, top_k)
            expected = oracle_ranking(doc_texts, list(query.tokens), top_k)
            assert [doc.doc_id for doc, _ in got.entries] == [d for d, _ in expected]
            for (_, got_score), (_, want_score) in zip(got.entries, expected):
                assert abs(got_score - want_score) <= 1e-9
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_criterion_2_entropy_correctness():
    with criterion(2, "entropy correctness"):
        rng = random.Random(7)
        for n in (2, 3, 4, 5, 8, 13, 21):
            for c in (1.0, 2.0, 3.0, 0.25, 1e-6):
                assert per_document_entropy([c] * n) == 1.0
        for n in (2, 3, 4, 10):
            for hot in range(n):
                row = [0.0] * n
                row[hot] = rng.uniform(0.5, 9.0)
                assert per_document_entropy(row) == 0.0
        assert abs(per_document_entropy([2.0, 2.0, 1.0, 1.0]) - ENTROPY_2211) <= 1e-9

        for _ in range(1000):
            width = rng.randint(2, 10)
            row = [rng.uniform(1e-6, 100.0) for _ in range(width)]
            base = per_document_entropy(row)
            alpha = rng.uniform(1e-3, 1e3)
            assert abs(per_document_entropy([alpha * v for v in row]) - base) <= 1e-9
            shuffled = list(row)
            rng.shuffle(shuffled)
            assert per_document_entropy(shuffled) == base
            assert 0.0 <= base <= 1.0


def _inputs_for(ans_target: int, com_target: int, t_ans: float):
    question = Question.from_text("q", "alpha beta gamma")
    if ans_target == 1:
        corr = t_ans  # boundary: >= threshold answers
    else:
        corr = t_ans * 0.5  # strictly below (only possible for t_ans > 0)
    row = (1.0, 1.0, 1.0) if com_target == 1 else (5.0, 0.0, 0.0)
    return question, AnswerabilityScores((corr,)), RelevanceMatrix((row,))


def test_criterion_3_classification_truth_table():
    with criterion(3, "classification truth table"):
        grid = [i / 20 for i in range(21)]
        combos_seen = set()
        for t_ans in grid:
            for t_com in grid:
                thresholds = Thresholds(t_ans=t_ans, t_com=t_com)
                for ans_target in (0, 1):
                    if ans_target == 0 and t_ans == 0.0:
                        continue  # no score can fall below a zero threshold
                    for com_target in (0, 1):
                        if com_target == 0 and t_com == 0.0:
                            continue  # entropy 0 still reaches a zero threshold
                        question, scores, matrix = _inputs_for(
                            ans_target, com_target, t_ans
                        )
                        verdict = classify(question, scores, matrix, thresholds)
                        assert verdict.ans_bit == ans_target
                        assert verdict.com_bit == com_target
                        expected = (
                            "complex"
                            if ans_target == 0 and com_target == 1
                            else "not_complex"
                        )
                        assert verdict.label == expected
                        assert verdict.label == decide_label(
                            verdict.ans_bit, verdict.com_bit
                        )
                        combos_seen.add((ans_target, com_target))
        assert combos_seen == {(0, 0), (0, 1), (1, 0), (1, 1)}

        rng = random.Random(31)
        for _ in range(1000):
            scores = AnswerabilityScores(
                tuple(rng.random() for _ in range(rng.randint(1, 8)))
            )
            s_d = rng.random()
            t_low, t_high = sorted((rng.random(), rng.random()))
            assert answerability(scores, t_low) >= answerability(scores, t_high)
            assert completeness(s_d, t_low) >= completeness(s_d, t_high)


def test_criterion_4_default_thresholds(tmp_path):
    with criterion(4, "default thresholds honored"):
        config_path = tmp_path / "empty.conf"
        config_path.write_text("# no threshold keys here\ntop_k = 5\n")
        config = load_config(config_path)
        assert config.thresholds.t_ans == 0.15
        assert config.thresholds.t_com == 0.80

        question = Question.from_text("q", "alpha beta")
        uniform = RelevanceMatrix(((1.0, 1.0),))
        at_boundary = classify(
            question, AnswerabilityScores((0.15,)), uniform, config.thresholds
        )
        assert at_boundary.ans_bit == 1 and at_boundary.label == "not_complex"
        below = classify(
            question, AnswerabilityScores((0.1499999,)), uniform, config.thresholds
        )
        assert below.ans_bit == 0 and below.label == "complex"

        # completeness boundary at the 0.80 default: engineer s_d == 0.8
        # exactly with five docs, four uniform (1.0) and one one-hot (0.0)
        rows = tuple([(1.0, 1.0)] * 4 + [(3.0, 0.0)])
        five_scores = AnswerabilityScores((0.0,) * 5)
        at_com = classify(question, five_scores, RelevanceMatrix(rows), config.thresholds)
        assert at_com.completeness_score == 0.8
        assert at_com.com_bit == 1 and at_com.label == "complex"


def test_criterion_5_metric_oracles():
    with criterion(5, "metric oracles"):
        cm = ConfusionMatrix(tp=2, fp=1, fn=1, tn=6)
        assert abs(precision(cm).value - 2 / 3) <= 1e-9
        assert abs(recall(cm).value - 2 / 3) <= 1e-9
        assert abs(f1(cm).value - 2 / 3) <= 1e-9
        assert abs(mcc(ConfusionMatrix(tp=3, fp=1, fn=2, tn=4)).value - MCC_3124) <= 1e-9
        assert abs(pcc([1.0, 2.0, 3.0], [2.0, 4.0, 7.0]).value - PCC_123_247) <= 1e-9

        assert mcc(ConfusionMatrix(tp=4, tn=4)).value == pytest.approx(1.0, abs=1e-12)
        assert pcc([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).value == pytest.approx(1.0, abs=1e-12)
        assert pcc([1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]).value == pytest.approx(-1.0, abs=1e-12)

        assert precision(ConfusionMatrix(tn=5)) == (0.0, False)
        assert recall(ConfusionMatrix(tn=5)) == (0.0, False)
        assert f1(ConfusionMatrix(tn=5)) == (0.0, False)
        assert mcc(ConfusionMatrix(tp=3, fn=2)) == (0.0, False)
        assert pcc([1.0, 1.0], [1.0, 2.0]) == (0.0, False)


# --- end-to-end fixture -----------------------------------------------------
# Question A has its full answer inside one document; question B's answer
# entities are spread over five documents, each of which mentions every
# question token once (uniform relevance) but carries only one answer token.

ANSWER_DOC = "paris is the capital of france"
EVIDENCE_ENTITIES = ["zmass", "qweight", "vload", "pmetric", "kscale"]
EVIDENCE_FILLERS = [
    ("when", "gets", "measured"),
    ("while", "labs", "compared"),
    ("since", "tests", "showed"),
    ("because", "records", "exist"),
    ("which", "surveys", "confirm"),
]
FILLER_DOCS = [
    "cats chase mice in the old barn",
    "rivers flow gently to the wide sea",
    "bakers knead dough before sunrise",
    "the orchestra tunes its strings nightly",
    "gardeners plant tulip bulbs each autumn",
    "the library keeps quiet reading rooms",
    "sailors watch tides from the harbor wall",
    "painters mix pigments on wooden palettes",
    "the train departs from platform nine",
    "chess players study openings for hours",
    "the bakery sells warm loaves at dawn",
    "hikers follow marked trails uphill",
    "the museum displays ancient pottery",
    "farmers rotate crops between seasons",
    "the lighthouse beam sweeps the coast",
    "students solve equations on chalkboards",
    "the market opens with fresh produce",
    "carpenters measure twice and cut once",
    "the river freezes along its banks",
    "beekeepers harvest honey in summer",
    "the observatory tracks distant comets",
    "potters shape clay on spinning wheels",
    "the ferry crosses the strait hourly",
    "weavers thread looms with bright wool",
]

QUESTION_A = "What is the capital of France?"
REFERENCE_A = "paris is the capital of france"
QUESTION_B = "Are zorblats heavier than quizzine fandles?"
REFERENCE_B = " ".join(EVIDENCE_ENTITIES)


def build_e2e_corpus() -> list[Document]:
    docs = [Document(doc_id="doc-answer", text=ANSWER_DOC)]
    question_b_tokens = "zorblats are heavier than quizzine fandles"
    for i, (entity, fillers) in enumerate(zip(EVIDENCE_ENTITIES, EVIDENCE_FILLERS)):
        text = f"{question_b_tokens} {' '.join(fillers)} {entity}"
        docs.append(Document(doc_id=f"doc-evidence-{i}", text=text))
    docs += [
        Document(doc_id=f"doc-filler-{i:02d}", text=text)
        for i, text in enumerate(FILLER_DOCS)
    ]
    assert len(docs) == 30
    reserved = set(Question.from_text("b", QUESTION_B).tokens) | set(EVIDENCE_ENTITIES)
    for text in FILLER_DOCS:
        assert not (set(text.split()) & reserved), f"filler leaks a planted token: {text}"
    return docs


def test_criterion_6_end_to_end_fixture():
    with criterion(6, "end-to-end fixture"):
        started = time.monotonic()
        config = PipelineConfig()  # defaults: 0.15/0.80, top_k=10, lexical
        index = build_index(build_e2e_corpus())
        scorer = LexicalScorer(epsilon_rel=config.epsilon_rel)

        record_a = BenchmarkRecord(
            id="qa",
            question=Question.from_text("qa", QUESTION_A),
            references=ReferenceSet.of(REFERENCE_A),
            gold_label=None,
            dataset="custom",
        )
        verdict_a, _ = classify_record(record_a, index, config, scorer)
        assert verdict_a.max_correctness == 1.0  # answer doc identical to reference
        assert verdict_a.ans_bit == 1
        assert verdict_a.label == "not_complex"

        record_b = BenchmarkRecord(
            id="qb",
            question=Question.from_text("qb", QUESTION_B),
            references=ReferenceSet.of(REFERENCE_B),
            gold_label=None,
            dataset="custom",
        )
        verdict_b, _ = classify_record(record_b, index, config, scorer)
        # five evidence docs, each 10 tokens with one of 5 reference entities:
        # token F1 = 2/(10+5), below the 0.15 answerability threshold
        assert verdict_b.max_correctness == pytest.approx(2 / 15, abs=1e-12)
        assert verdict_b.max_correctness < 0.15
        assert len(verdict_b.per_doc_entropy) == 5
        assert all(h == 1.0 for h in verdict_b.per_doc_entropy)
        assert verdict_b.completeness_score == 1.0
        assert (verdict_b.ans_bit, verdict_b.com_bit) == (0, 1)
        assert verdict_b.label == "complex"

        elapsed = time.monotonic() - started
        assert elapsed < 10.0, f"took {elapsed:.2f}s"


def _synthetic_records(count: int, rng: random.Random) -> list[BenchmarkRecord]:
    topics = [
        ("what is the capital of france", REFERENCE_A),
        ("are zorblats heavier than quizzine fandles", REFERENCE_B),
        ("where do sailors watch tides", "from the harbor wall"),
        ("when does the ferry cross the strait", "hourly crossings"),
        ("who studies openings for hours", "chess players"),
        ("completely unrelated mystery topic", "no answer exists"),
    ]
    records = []
    for i in range(count):
        text, ref = topics[rng.randrange(len(topics))]
        records.append(
            BenchmarkRecord(
                id=f"s{i:04d}",
                question=Question.from_text(f"s{i:04d}", text),
                references=ReferenceSet.of(ref),
                gold_label=rng.choice(["complex", "not_complex"]),
                dataset="custom",
            )
        )
    return records


def test_criterion_7_thread_determinism(tmp_path):
    with criterion(7, "thread determinism"):
        rng = random.Random(501)
        records = _synthetic_records(500, rng)
        records_path = tmp_path / "records.jsonl"
        write_records(records, records_path)
        corpus_path = tmp_path / "corpus.jsonl"
        with open(corpus_path, "w", encoding="utf-8") as handle:
            for doc in build_e2e_corpus():
                handle.write(
                    json.dumps({"doc_id": doc.doc_id, "text": doc.text}) + "\n"
                )

        runner = CliRunner()
        index_path = tmp_path / "c.rcx"
        result = runner.invoke(cli_main, ["index", str(corpus_path), str(index_path)])
        assert result.exit_code == 0, result.output

        blobs = []
        for threads in (1, 4, 16):
            out_path = tmp_path / f"verdicts-{threads}.jsonl"
            result = runner.invoke(
                cli_main,
                [
                    "--threads",
                    str(threads),
                    "classify",
                    str(records_path),
                    str(index_path),
                    "--out",
                    str(out_path),
                ],
            )
            assert result.exit_code == 0, result.output
            blobs.append(out_path.read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]
        assert len(blobs[0].splitlines()) == 500


def test_criterion_8_persistence_round_trip(tmp_path):
    with criterion(8, "persistence round trip"):
        rng = random.Random(88)
        vocab = [f"tok{i}" for i in range(40)]
        docs = [
            Document(doc_id=f"d{i:03d}", text=" ".join(rng.choices(vocab, k=rng.randint(3, 30))))
            for i in range(60)
        ]
        index = build_index(docs)
        path = tmp_path / "r.rcx"
        save_index(index, path)
        reloaded = load_index(path)
        assert reloaded == index

        for _ in range(100):
            question = Question.from_text(
                "q", " ".join(rng.choices(vocab, k=rng.randint(1, 5)))
            )
            top_k = rng.randint(1, 15)
            assert retrieve_bm25(reloaded, question, top_k) == retrieve_bm25(
                index, question, top_k
            )


def test_criterion_9_calibration_self_consistency(tmp_path):
    with criterion(9, "calibration self-consistency"):
        rng = random.Random(909)
        records = _synthetic_records(50, rng)
        records_path = tmp_path / "records.jsonl"
        write_records(records, records_path)
        corpus_path = tmp_path / "corpus.jsonl"
        with open(corpus_path, "w", encoding="utf-8") as handle:
            for doc in build_e2e_corpus():
                handle.write(json.dumps({"doc_id": doc.doc_id, "text": doc.text}) + "\n")

        runner = CliRunner()
        index_path = tmp_path / "c.rcx"
        assert runner.invoke(cli_main, ["index", str(corpus_path), str(index_path)]).exit_code == 0

        calibrated_config = tmp_path / "calibrated.conf"
        result = runner.invoke(
            cli_main,
            [
                "calibrate",
                str(records_path),
                str(index_path),
                "--step",
                "0.1",
                "--out",
                str(calibrated_config),
            ],
        )
        assert result.exit_code == 0, result.output
        match = re.search(r"F1=([0-9.eE+-]+)", result.output)
        assert match, result.output
        reported_f1 = float(match.group(1))

        verdicts_path = tmp_path / "verdicts.jsonl"
        result = runner.invoke(
            cli_main,
            [
                "--config",
                str(calibrated_config),
                "classify",
                str(records_path),
                str(index_path),
                "--out",
                str(verdicts_path),
            ],
        )
        assert result.exit_code == 0, result.output

        report_path = tmp_path / "report.json"
        result = runner.invoke(
            cli_main,
            [
                "evaluate",
                str(verdicts_path),
                str(records_path),
                "--out",
                str(report_path),
            ],
        )
        assert result.exit_code == 0, result.output
        evaluated_f1 = json.loads(report_path.read_text())["pooled"]["f1"]
        assert evaluated_f1 == reported_f1
