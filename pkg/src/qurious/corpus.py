"""Question corpus ingestion: parsing, normalization, filtering, typing, stats.

Tokenization rule used everywhere in the engine: split on Unicode
whitespace, strip leading/trailing punctuation from each token, case-fold.
Tokens that are pure punctuation vanish.
"""

from __future__ import annotations

import io
import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Iterable, Optional, Sequence, Union

from .errors import FormatError


class QType(Enum):
    HOW = "how"
    WHAT = "what"
    WHEN = "when"
    WHERE = "where"
    WHICH = "which"
    WHO = "who"
    WHY = "why"
    IF = "if"
    OTHER = "other"


class Topic(Enum):
    BUSINESS_FINANCE = "Business & Finance"
    COMPUTERS_INTERNET = "Computers & Internet"
    EDUCATION_REFERENCE = "Education & Reference"
    ENTERTAINMENT_MUSIC = "Entertainment & Music"
    FAMILY_RELATIONSHIPS = "Family & Relationships"
    HEALTH = "Health"
    POLITICS_GOVERNMENT = "Politics & Government"
    SCIENCE_MATHEMATICS = "Science & Mathematics"
    SOCIETY_CULTURE = "Society & Culture"
    SPORTS = "Sports"


# Canonical row/column orders for every table in the engine.
QTYPE_ORDER = [
    QType.HOW, QType.WHAT, QType.WHEN, QType.WHERE, QType.WHICH,
    QType.WHO, QType.WHY, QType.IF, QType.OTHER,
]
TOPIC_ORDER = list(Topic)

_WH_KEYWORDS = {"how", "what", "when", "where", "which", "who", "why"}


@dataclass(frozen=True)
class Question:
    """One corpus record. qtype/topic stay None until assigned."""

    id: str
    raw_text: str
    norm_text: str
    token_count: int
    qtype: Optional[QType] = None
    topic: Optional[Topic] = None
    source_tag: Optional[str] = None


@dataclass
class RemovalReport:
    """Which records normalize_and_filter dropped, and why."""

    removed: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)

    @property
    def count(self) -> int:
        return len(self.removed)

    def reason_counts(self) -> dict[str, int]:
        return dict(Counter(reason for _, reason in self.removed))

    def to_csv(self) -> str:
        lines = ["id,reason"]
        lines.extend(f"{qid},{reason}" for qid, reason in self.removed)
        return "\n".join(lines) + "\n"


@dataclass
class CorpusStats:
    question_count: int
    vocab_size: int
    min_len: int
    max_len: int
    mean_len: float
    pct_within_10: float
    token_frequencies: list[tuple[str, int]]


def tokenize(text: str) -> list[str]:
    """Case-folded tokens with leading/trailing punctuation stripped."""
    tokens = []
    for tok in text.split():
        start, end = 0, len(tok)
        while start < end and unicodedata.category(tok[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(tok[end - 1]).startswith("P"):
            end -= 1
        if end > start:
            tokens.append(tok[start:end].casefold())
    return tokens


def normalize_text(text: str) -> str:
    """Trim and collapse inner whitespace runs to single spaces."""
    return " ".join(text.split())


def _make_question(qid: str, raw: str, source_tag: Optional[str] = None) -> Question:
    norm = normalize_text(raw)
    return Question(
        id=qid,
        raw_text=raw,
        norm_text=norm,
        token_count=len(tokenize(norm)),
        source_tag=source_tag,
    )


def parse_corpus(
    stream: Union[bytes, str, IO[bytes], IO[str]],
    format: str = "lines",
) -> list[Question]:
    """Parse a corpus from `lines` or `jsonl` input.

    lines: one question per line (LF or CRLF), blank lines skipped, ids
    auto-assigned q0001, q0002, ... by input position.
    jsonl: one object per line with required "text", optional "id" and
    "source"; records without an explicit id get auto ids.

    Raises FormatError on malformed JSON (with line number) or duplicate
    explicit ids.
    """
    if isinstance(stream, bytes):
        text = stream.decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    if format not in ("lines", "jsonl"):
        raise ValueError(f"unknown corpus format: {format!r}")

    questions: list[Question] = []
    seen_ids: set[str] = set()
    auto = 0

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if format == "lines":
            auto += 1
            qid = f"q{auto:04d}"
            q = _make_question(qid, line)
        else:
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(record, dict) or "text" not in record:
                raise FormatError(f'line {lineno}: record must be an object with a "text" field')
            if "id" in record:
                qid = str(record["id"])
                if qid in seen_ids:
                    raise FormatError(f"line {lineno}: duplicate id {qid!r}")
            else:
                auto += 1
                qid = f"q{auto:04d}"
                if qid in seen_ids:
                    raise FormatError(f"line {lineno}: auto id {qid!r} collides with explicit id")
            q = _make_question(qid, str(record["text"]), record.get("source"))
        seen_ids.add(q.id)
        questions.append(q)

    return questions


def normalize_and_filter(
    questions: Sequence[Question],
    min_tokens: int = 3,
) -> tuple[list[Question], RemovalReport]:
    """Drop exact duplicates (case-folded norm_text, first kept) and
    questions shorter than `min_tokens` tokens."""
    report = RemovalReport()
    kept: list[Question] = []
    seen: set[str] = set()
    for q in questions:
        key = q.norm_text.casefold()
        if key in seen:
            report.removed.append((q.id, "duplicate"))
            continue
        seen.add(key)
        if q.token_count < min_tokens:
            report.removed.append((q.id, "too_short"))
            continue
        kept.append(q)
    return kept, report


def classify_type(norm_text: str) -> QType:
    """Keyword-based question type.

    The token "if" anywhere wins outright; otherwise the earliest-positioned
    wh/how keyword decides; no keyword means OTHER.
    """
    tokens = tokenize(norm_text)
    if "if" in tokens:
        return QType.IF
    for tok in tokens:
        if tok in _WH_KEYWORDS:
            return QType(tok)
    return QType.OTHER


def assign_types(questions: Sequence[Question]) -> list[Question]:
    """Copy of `questions` with qtype filled in from classify_type."""
    return [replace(q, qtype=classify_type(q.norm_text)) for q in questions]


def corpus_stats(questions: Sequence[Question]) -> CorpusStats:
    """Length and vocabulary statistics over a (filtered) corpus."""
    if not questions:
        return CorpusStats(0, 0, 0, 0, 0.0, 0.0, [])
    lengths = [q.token_count for q in questions]
    counts: Counter[str] = Counter()
    for q in questions:
        counts.update(tokenize(q.norm_text))
    freqs = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    n = len(questions)
    return CorpusStats(
        question_count=n,
        vocab_size=len(counts),
        min_len=min(lengths),
        max_len=max(lengths),
        mean_len=sum(lengths) / n,
        pct_within_10=sum(1 for ln in lengths if ln <= 10) / n,
        token_frequencies=freqs,
    )


def question_to_json(q: Question) -> dict:
    record = {
        "id": q.id,
        "raw_text": q.raw_text,
        "norm_text": q.norm_text,
        "token_count": q.token_count,
    }
    if q.qtype is not None:
        record["qtype"] = q.qtype.value
    if q.topic is not None:
        record["topic"] = q.topic.value
    if q.source_tag is not None:
        record["source"] = q.source_tag
    return record


def question_from_json(record: dict) -> Question:
    return Question(
        id=record["id"],
        raw_text=record["raw_text"],
        norm_text=record["norm_text"],
        token_count=record["token_count"],
        qtype=QType(record["qtype"]) if "qtype" in record else None,
        topic=Topic(record["topic"]) if "topic" in record else None,
        source_tag=record.get("source"),
    )


def save_questions(questions: Iterable[Question], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in questions:
            fh.write(json.dumps(question_to_json(q), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_questions(path) -> list[Question]:
    with open(path, "r", encoding="utf-8") as fh:
        return [question_from_json(json.loads(line)) for line in fh if line.strip()]
