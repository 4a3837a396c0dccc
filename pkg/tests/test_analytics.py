"""Contingency tables, lift, word frequencies."""

import numpy as np
import pytest

from qurious.analytics import (
    ContingencyTable,
    contingency,
    contingency_from_counts,
    frequencies_to_csv,
    lift,
    lift_report_csv,
    word_frequencies,
)
from qurious.corpus import QTYPE_ORDER, TOPIC_ORDER, Question, QType, Topic, parse_corpus

# Reference topic-by-type count grid used as a fixture throughout; rows in
# TOPIC_ORDER, columns in QTYPE_ORDER; grand total 8,600.
FIXTURE_COUNTS = [
    [121, 100, 16, 18, 0, 26, 191, 30, 136],
    [34, 9, 3, 2, 0, 3, 18, 5, 34],
    [132, 81, 8, 11, 2, 50, 84, 16, 68],
    [55, 56, 10, 10, 0, 12, 80, 39, 108],
    [44, 32, 8, 8, 0, 1, 95, 14, 68],
    [159, 66, 18, 10, 0, 6, 299, 34, 84],
    [23, 18, 7, 2, 0, 5, 57, 22, 51],
    [1355, 646, 88, 99, 15, 58, 1107, 392, 918],
    [142, 159, 23, 21, 0, 52, 286, 108, 237],
    [47, 14, 5, 0, 0, 15, 48, 7, 59],
]


def make_question(qid, qtype, topic):
    return Question(id=qid, raw_text="t", norm_text="t", token_count=1,
                    qtype=qtype, topic=topic)


class TestContingency:
    def test_single_question_full_share(self):
        table = contingency([make_question("q1", QType.WHY, Topic.HEALTH)])
        assert table.n == 1
        assert table.cell(Topic.HEALTH, QType.WHY) == 1
        assert table.row_pct[TOPIC_ORDER.index(Topic.HEALTH)] == 100.0
        assert table.col_pct[QTYPE_ORDER.index(QType.WHY)] == 100.0

    def test_uniform_grid_equal_shares(self):
        questions = [
            make_question(f"q{i}", qtype, topic)
            for i, (topic, qtype) in enumerate(
                (t, y) for t in TOPIC_ORDER for y in QTYPE_ORDER
            )
        ]
        table = contingency(questions)
        assert table.n == 90
        assert np.allclose(table.row_pct, 10.0)

    def test_unassigned_reported_with_ids(self):
        questions = [
            make_question("q1", QType.WHY, Topic.HEALTH),
            Question(id="q2", raw_text="t", norm_text="t", token_count=1),
        ]
        with pytest.raises(ValueError, match="q2"):
            contingency(questions)

    def test_percent_sums(self):
        table = contingency_from_counts(FIXTURE_COUNTS)
        assert abs(table.row_pct.sum() - 100.0) <= 0.01
        assert abs(table.col_pct.sum() - 100.0) <= 0.01

    def test_counts_sum_preserved(self):
        rng = np.random.default_rng(1)
        questions = [
            make_question(f"q{i}",
                          QTYPE_ORDER[int(rng.integers(0, 9))],
                          TOPIC_ORDER[int(rng.integers(0, 10))])
            for i in range(137)
        ]
        table = contingency(questions)
        assert int(table.counts.sum()) == 137

    def test_fixture_reference_shares(self):
        table = contingency_from_counts(FIXTURE_COUNTS)
        assert table.n == 8600
        sci = table.row_pct[TOPIC_ORDER.index(Topic.SCIENCE_MATHEMATICS)]
        why = table.col_pct[QTYPE_ORDER.index(QType.WHY)]
        assert sci == pytest.approx(54.40, abs=0.01)
        assert why == pytest.approx(26.34, abs=0.01)

    def test_invalid_shapes(self):
        with pytest.raises(ValueError):
            ContingencyTable(counts=np.zeros((3, 3), dtype=np.int64), n=0)
        with pytest.raises(ValueError):
            ContingencyTable(counts=np.zeros((10, 9), dtype=np.int64), n=5)

    def test_csv_layout(self):
        table = contingency_from_counts(FIXTURE_COUNTS)
        lines = table.to_csv().strip().splitlines()
        assert len(lines) == 12
        assert lines[0] == "topic,how,what,when,where,which,who,why,if,other,%"
        assert lines[8].startswith('"Science & Mathematics",1355,')
        assert lines[8].endswith("54.40")
        assert lines[-1].startswith("%,")


class TestLift:
    def test_sports_who_strongly_associated(self):
        table = contingency_from_counts(FIXTURE_COUNTS)
        value = lift(table, Topic.SPORTS, QType.WHO)
        assert 2.7 <= value <= 3.1

    def test_independent_table_unit_lift(self):
        rows = np.array([5, 1, 2, 3, 4, 6, 2, 9, 3, 1])
        cols = np.array([4, 2, 1, 1, 1, 2, 5, 3, 2])
        counts = np.outer(rows, cols)
        table = contingency_from_counts(counts)
        for topic in TOPIC_ORDER:
            for qtype in QTYPE_ORDER:
                assert lift(table, topic, qtype) == pytest.approx(1.0, abs=1e-9)

    def test_zero_cell_positive_marginals(self):
        table = contingency_from_counts(FIXTURE_COUNTS)
        assert lift(table, Topic.BUSINESS_FINANCE, QType.WHICH) == 0.0

    def test_zero_marginal_errors(self):
        counts = np.zeros((10, 9), dtype=np.int64)
        counts[0, 0] = 4
        table = contingency_from_counts(counts)
        with pytest.raises(ValueError, match="zero marginal"):
            lift(table, Topic.SPORTS, QType.HOW)

    def test_scale_invariance(self):
        table1 = contingency_from_counts(FIXTURE_COUNTS)
        table3 = contingency_from_counts(np.array(FIXTURE_COUNTS) * 3)
        for topic in (Topic.SPORTS, Topic.HEALTH):
            for qtype in (QType.WHO, QType.WHY):
                assert lift(table3, topic, qtype) == pytest.approx(
                    lift(table1, topic, qtype), abs=1e-12
                )

    def test_total_probability_identity(self):
        rng = np.random.default_rng(2)
        counts = rng.integers(1, 50, size=(10, 9))
        table = contingency_from_counts(counts)
        total = 0.0
        for t_idx, topic in enumerate(TOPIC_ORDER):
            for y_idx, qtype in enumerate(QTYPE_ORDER):
                p_topic = table.counts[t_idx].sum() / table.n
                p_type = table.counts[:, y_idx].sum() / table.n
                total += lift(table, topic, qtype) * p_topic * p_type
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_lift_report_csv(self):
        table = contingency_from_counts(FIXTURE_COUNTS)
        text = lift_report_csv(table)
        lines = text.strip().splitlines()
        assert lines[0] == "topic,type,lift,strong_association"
        sports_who = [ln for ln in lines if ln.startswith('"Sports",who')]
        assert len(sports_who) == 1
        assert sports_who[0].endswith(",1")


class TestWordFrequencies:
    def test_hand_counts(self):
        questions = parse_corpus(b"why sky\nwhy sea", format="lines")
        assert word_frequencies(questions) == [("why", 2), ("sea", 1), ("sky", 1)]

    def test_empty(self):
        assert word_frequencies([]) == []

    def test_stopwords_excluded(self):
        questions = parse_corpus(b"why is the sky blue\nwhy is the sea salty", format="lines")
        full = dict(word_frequencies(questions))
        filtered = dict(word_frequencies(questions, stopwords={"is", "the"}))
        assert "is" not in filtered and "the" not in filtered
        assert set(filtered) == set(full) - {"is", "the"}

    def test_csv(self):
        text = frequencies_to_csv([("why", 2), ("sky", 1)])
        assert text == "token,count\nwhy,2\nsky,1\n"
