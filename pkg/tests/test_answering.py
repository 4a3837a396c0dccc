"""Knowledge base construction, answering, answerability reporting."""

import json

import numpy as np
import pytest

from qurious.answering import (
    AnswerHit,
    Sentence,
    answer,
    answer_batch,
    answerability_report,
    build_kb,
    load_kb,
    parse_sentences,
    save_kb,
)
from qurious.corpus import Question, QType, Topic
from qurious.embedding import MockEmbedder
from qurious.errors import FormatError
from qurious.vectorstore import brute_force_topk


def make_question(qid, text, qtype=None, topic=None):
    return Question(
        id=qid, raw_text=text, norm_text=text,
        token_count=len(text.split()), qtype=qtype, topic=topic,
    )


def synthetic_sentences(n, prefix="fact"):
    return [Sentence(sid=f"s{i:04d}", text=f"{prefix} number {i} is recorded here") for i in range(n)]


class TestParseSentences:
    def test_reads_jsonl(self):
        raw = b'{"sid":"s1","text":"water boils","title":"Water"}\n{"sid":"s2","text":"iron rusts"}'
        sentences = parse_sentences(raw)
        assert sentences[0].title == "Water"
        assert sentences[1].title is None

    def test_duplicate_sid(self):
        raw = b'{"sid":"s1","text":"a"}\n{"sid":"s1","text":"b"}'
        with pytest.raises(FormatError, match="duplicate sid"):
            parse_sentences(raw)

    def test_missing_fields(self):
        with pytest.raises(FormatError):
            parse_sentences(b'{"sid":"s1"}')

    def test_malformed_json(self):
        with pytest.raises(FormatError, match="line 1"):
            parse_sentences(b"{oops}")


class TestBuildKb:
    def test_hundred_sentences_indexed(self):
        kb = build_kb(synthetic_sentences(100), MockEmbedder(dim=64, seed=1), seed=2)
        assert kb.count == 100
        assert kb.index.count == 100
        assert kb.duplicate_embeddings == 0

    def test_duplicate_sentences_counted(self):
        sentences = [
            Sentence("s1", "exactly the same text"),
            Sentence("s2", "exactly the same text"),
            Sentence("s3", "something different"),
        ]
        kb = build_kb(sentences, MockEmbedder(dim=32, seed=3))
        assert kb.count == 3
        assert kb.duplicate_embeddings == 1

    def test_empty_stream_errors(self):
        with pytest.raises(ValueError):
            build_kb([], MockEmbedder(dim=16))

    def test_from_raw_jsonl(self):
        raw = "\n".join(
            json.dumps({"sid": f"s{i}", "text": f"note {i} body"}) for i in range(10)
        )
        kb = build_kb(raw, MockEmbedder(dim=16, seed=4))
        assert kb.count == 10


class TestAnswer:
    def test_verbatim_text_accepted(self):
        embedder = MockEmbedder(dim=768, seed=5)
        sentences = synthetic_sentences(50) + [Sentence("hit", "why is the sky blue")]
        kb = build_kb(sentences, embedder, seed=6)
        q = make_question("q1", "why is the sky blue")
        hit = answer(q, kb, embedder, tau_qa=0.688)
        assert hit.sid == "hit"
        assert hit.score == pytest.approx(1.0, abs=1e-6)
        assert hit.accepted

    def test_tau_above_one_rejects(self):
        embedder = MockEmbedder(dim=768, seed=5)
        kb = build_kb([Sentence("only", "the exact question text")], embedder)
        q = make_question("q1", "the exact question text")
        hit = answer(q, kb, embedder, tau_qa=1.0 + 1e-6)
        assert not hit.accepted

    def test_unrelated_kb_not_accepted(self):
        # independent random 768-d unit vectors stay far below 0.688
        embedder = MockEmbedder(dim=768, seed=7)
        kb = build_kb(synthetic_sentences(100), embedder, seed=8)
        q = make_question("q1", "completely unrelated query text")
        hit = answer(q, kb, embedder, tau_qa=0.688)
        assert hit is not None
        assert hit.score < 0.688
        assert not hit.accepted

    def test_full_probe_matches_brute_force(self):
        embedder = MockEmbedder(dim=64, seed=9)
        kb = build_kb(synthetic_sentences(200), embedder, ncells=14, seed=10)
        q = make_question("q1", "fact number 42 is recorded here")
        hit = answer(q, kb, embedder, nprobe=14)
        qvec = embedder.embed(["q1"], [q.norm_text]).data[0]
        qvec = qvec / np.linalg.norm(qvec)
        oracle = brute_force_topk(kb.matrix, qvec.astype(np.float32), k=1)[0]
        assert hit.sid == oracle.id
        assert hit.score == pytest.approx(oracle.score, abs=1e-6)

    def test_raising_tau_never_accepts_more(self):
        embedder = MockEmbedder(dim=64, seed=11)
        kb = build_kb(synthetic_sentences(30), embedder, seed=12)
        q = make_question("q1", "fact number 3 is recorded here")
        taus = [0.1, 0.3, 0.5, 0.7, 0.9, 1.1]
        accepted = [answer(q, kb, embedder, tau_qa=t).accepted for t in taus]
        for earlier, later in zip(accepted, accepted[1:]):
            assert later <= earlier

    def test_accepted_only_filters(self):
        embedder = MockEmbedder(dim=128, seed=13)
        kb = build_kb(synthetic_sentences(20), embedder, seed=14)
        q = make_question("q1", "text that matches nothing at all")
        assert answer(q, kb, embedder, tau_qa=0.95, accepted_only=True) is None

    def test_topk_list(self):
        embedder = MockEmbedder(dim=32, seed=15)
        kb = build_kb(synthetic_sentences(25), embedder, seed=16)
        q = make_question("q1", "fact number 7 is recorded here")
        hits = answer(q, kb, embedder, k=5)
        assert isinstance(hits, list)
        assert len(hits) == 5
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)

    def test_dim_mismatch(self):
        kb = build_kb(synthetic_sentences(10), MockEmbedder(dim=32, seed=17))
        with pytest.raises(ValueError):
            answer(make_question("q1", "text"), kb, MockEmbedder(dim=64, seed=17))


class TestKbPersistence:
    def test_round_trip_same_answers(self, tmp_path):
        embedder = MockEmbedder(dim=48, seed=18)
        kb = build_kb(synthetic_sentences(60), embedder, ncells=7, seed=19)
        save_kb(kb, tmp_path / "kb")
        loaded = load_kb(tmp_path / "kb")
        assert loaded.count == kb.count
        assert loaded.duplicate_embeddings == kb.duplicate_embeddings
        questions = [make_question(f"q{i}", f"fact number {i} is recorded here") for i in range(10)]
        before = answer_batch(questions, kb, embedder)
        after = answer_batch(questions, loaded, embedder)
        assert before == after


class TestAnswerabilityReport:
    def _hits(self, questions, accepted_ids):
        return [
            AnswerHit(q.id, "s1", "text", 0.9 if q.id in accepted_ids else 0.1,
                      q.id in accepted_ids)
            for q in questions
        ]

    def test_hand_enumerated_cells(self):
        # 12 questions over 4 (topic, type) cells, 3 each; accept 2/1/3/0
        cells = [
            (Topic.HEALTH, QType.WHY, 2),
            (Topic.HEALTH, QType.HOW, 1),
            (Topic.SPORTS, QType.WHO, 3),
            (Topic.SPORTS, QType.WHAT, 0),
        ]
        questions, accepted = [], set()
        i = 0
        for topic, qtype, naccept in cells:
            for j in range(3):
                q = make_question(f"q{i}", f"text {i}", qtype=qtype, topic=topic)
                questions.append(q)
                if j < naccept:
                    accepted.add(q.id)
                i += 1
        report = answerability_report(self._hits(questions, accepted), questions)
        assert report.cells[(Topic.HEALTH.value, QType.WHY.value)] == (2, 3)
        assert report.cells[(Topic.HEALTH.value, QType.HOW.value)] == (1, 3)
        assert report.cells[(Topic.SPORTS.value, QType.WHO.value)] == (3, 3)
        assert report.cells[(Topic.SPORTS.value, QType.WHAT.value)] == (0, 3)
        assert report.question_total == 12
        assert report.accepted_total == 6
        assert sum(t for _, t in report.cells.values()) == 12

    def test_all_accepted(self):
        questions = [
            make_question(f"q{i}", f"text {i}", qtype=QType.WHY, topic=Topic.HEALTH)
            for i in range(5)
        ]
        report = answerability_report(self._hits(questions, {q.id for q in questions}), questions)
        acc, tot = report.cells[(Topic.HEALTH.value, QType.WHY.value)]
        assert acc == tot == 5
        assert report.overall_ratio == 1.0

    def test_zero_questions(self):
        report = answerability_report([], [])
        assert report.question_total == 0
        assert report.overall_ratio == 0.0
        assert report.cells == {}

    def test_unknown_question_id(self):
        questions = [make_question("q1", "text", qtype=QType.WHY, topic=Topic.HEALTH)]
        bad = [AnswerHit("ghost", "s1", "t", 0.9, True)]
        with pytest.raises(ValueError, match="unknown question id"):
            answerability_report(bad, questions)

    def test_missing_topic_error(self):
        questions = [make_question("q1", "text", qtype=QType.WHY)]
        with pytest.raises(ValueError, match="missing"):
            answerability_report([None], questions)

    def test_csv_shape(self):
        questions = [make_question("q1", "text", qtype=QType.WHY, topic=Topic.HEALTH)]
        report = answerability_report(self._hits(questions, {"q1"}), questions)
        lines = report.to_csv().strip().splitlines()
        assert len(lines) == 12  # header + 10 topics + footer
        assert lines[0].startswith("topic,how,what,when,where,which,who,why,if,other,all")
        assert lines[-1].startswith("all,")
        assert lines[-1].endswith("1/1")
