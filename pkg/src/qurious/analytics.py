"""Type-by-topic contingency analysis, lift, and token frequency reports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import QTYPE_ORDER, TOPIC_ORDER, Question, QType, Topic, tokenize


@dataclass
class ContingencyTable:
    """Counts over the 10 topics (rows) by 9 types (columns)."""

    counts: np.ndarray  # (10, 9) int64
    n: int

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(TOPIC_ORDER), len(QTYPE_ORDER)):
            raise ValueError(f"counts must be {len(TOPIC_ORDER)}x{len(QTYPE_ORDER)}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if int(self.counts.sum()) != self.n:
            raise ValueError("n must equal the sum of counts")

    @property
    def row_pct(self) -> np.ndarray:
        """Topic shares in percent (Table rows)."""
        return 100.0 * self.counts.sum(axis=1) / self.n

    @property
    def col_pct(self) -> np.ndarray:
        """Type shares in percent (Table columns)."""
        return 100.0 * self.counts.sum(axis=0) / self.n

    def cell(self, topic: Topic, qtype: QType) -> int:
        return int(self.counts[TOPIC_ORDER.index(topic), QTYPE_ORDER.index(qtype)])

    def to_csv(self) -> str:
        type_names = [t.value for t in QTYPE_ORDER]
        lines = ["topic," + ",".join(type_names) + ",%"]
        row_pct = self.row_pct
        for r, topic in enumerate(TOPIC_ORDER):
            cells = ",".join(str(int(c)) for c in self.counts[r])
            lines.append(f'"{topic.value}",{cells},{row_pct[r]:.2f}')
        col = ",".join(f"{p:.2f}" for p in self.col_pct)
        lines.append(f"%,{col},")
        return "\n".join(lines) + "\n"


def contingency(questions: Sequence[Question]) -> ContingencyTable:
    """Tally questions into the topic-by-type grid.

    Every question must have both qtype and topic assigned.
    """
    missing = [q.id for q in questions if q.qtype is None or q.topic is None]
    if missing:
        raise ValueError(f"questions missing qtype/topic assignments: {missing[:10]}")
    counts = np.zeros((len(TOPIC_ORDER), len(QTYPE_ORDER)), dtype=np.int64)
    for q in questions:
        counts[TOPIC_ORDER.index(q.topic), QTYPE_ORDER.index(q.qtype)] += 1
    return ContingencyTable(counts=counts, n=len(questions))


def contingency_from_counts(counts) -> ContingencyTable:
    """Build a table directly from a 10x9 count grid (fixtures, imports)."""
    counts = np.asarray(counts, dtype=np.int64)
    return ContingencyTable(counts=counts, n=int(counts.sum()))


def lift(table: ContingencyTable, topic: Topic, qtype: QType) -> float:
    """P(topic, type) / (P(topic) * P(type)).

    Raises on empty tables or zero marginals, returns 0.0 for an empty
    cell with positive marginals.
    """
    if table.n == 0:
        raise ValueError("lift undefined on an empty table")
    r = TOPIC_ORDER.index(topic)
    c = QTYPE_ORDER.index(qtype)
    row_total = int(table.counts[r].sum())
    col_total = int(table.counts[:, c].sum())
    if row_total == 0 or col_total == 0:
        raise ValueError(f"lift undefined: zero marginal for ({topic.value}, {qtype.value})")
    joint = table.counts[r, c] / table.n
    return float(joint / ((row_total / table.n) * (col_total / table.n)))


def lift_report_csv(table: ContingencyTable, association_threshold: float = 2.0) -> str:
    """Lift per cell with positive marginals; flags cells at or above the
    association threshold."""
    lines = ["topic,type,lift,strong_association"]
    for topic in TOPIC_ORDER:
        row_total = int(table.counts[TOPIC_ORDER.index(topic)].sum())
        if row_total == 0:
            continue
        for qtype in QTYPE_ORDER:
            col_total = int(table.counts[:, QTYPE_ORDER.index(qtype)].sum())
            if col_total == 0:
                continue
            value = lift(table, topic, qtype)
            flag = "1" if value >= association_threshold else "0"
            lines.append(f'"{topic.value}",{qtype.value},{value!r},{flag}')
    return "\n".join(lines) + "\n"


def word_frequencies(
    questions: Sequence[Question],
    stopwords: Optional[set[str]] = None,
) -> list[tuple[str, int]]:
    """Token counts over the corpus, descending, ties alphabetical."""
    from collections import Counter

    counts: Counter[str] = Counter()
    for q in questions:
        counts.update(tokenize(q.norm_text))
    if stopwords:
        for word in stopwords:
            counts.pop(word, None)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def frequencies_to_csv(freqs: Sequence[tuple[str, int]]) -> str:
    lines = ["token,count"]
    for token, count in freqs:
        escaped = '"' + token.replace('"', '""') + '"' if any(c in token for c in ',"\n') else token
        lines.append(f"{escaped},{count}")
    return "\n".join(lines) + "\n"
