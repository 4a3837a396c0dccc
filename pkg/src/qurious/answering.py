"""Sentence-level knowledge base and single-sentence answering.

The knowledge base embeds pre-split sentences, indexes them with IVF, and
answers a question with the best-scored sentence; the hit is accepted iff
its cosine similarity clears tau_qa.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from .corpus import QTYPE_ORDER, TOPIC_ORDER, Question
from .embedding import (
    EmbeddingMatrix,
    l2_normalize,
    load_embeddings,
    normalize_rows,
    save_embeddings,
)
from .errors import FormatError
from .vectorstore import IvfIndex, default_ncells, ivf_build, ivf_search, load_index, save_index

DEFAULT_TAU_QA = 0.688


@dataclass(frozen=True)
class Sentence:
    sid: str
    text: str
    title: Optional[str] = None


@dataclass(frozen=True)
class AnswerHit:
    question_id: str
    sid: str
    text: str
    score: float
    accepted: bool


@dataclass
class KnowledgeBase:
    sentences: list[Sentence]
    matrix: EmbeddingMatrix
    index: IvfIndex
    duplicate_embeddings: int = 0

    def __post_init__(self) -> None:
        self._by_sid = {s.sid: s for s in self.sentences}

    def sentence(self, sid: str) -> Sentence:
        return self._by_sid[sid]

    @property
    def count(self) -> int:
        return len(self.sentences)


def parse_sentences(stream: Union[bytes, str, IO]) -> list[Sentence]:
    """Read JSONL sentence records {"sid", "text", "title"?}."""
    if isinstance(stream, bytes):
        text = stream.decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    sentences = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: malformed JSON: {exc.msg}") from exc
        if "sid" not in record or "text" not in record:
            raise FormatError(f'line {lineno}: sentence records need "sid" and "text"')
        sid = str(record["sid"])
        if sid in seen:
            raise FormatError(f"line {lineno}: duplicate sid {sid!r}")
        seen.add(sid)
        sentences.append(Sentence(sid=sid, text=str(record["text"]), title=record.get("title")))
    return sentences


def _count_duplicate_rows(data: np.ndarray) -> int:
    if data.shape[0] == 0:
        return 0
    seen = set()
    for row in data:
        seen.add(row.tobytes())
    return data.shape[0] - len(seen)


def build_kb(
    sentences: Union[Sequence[Sentence], bytes, str, IO],
    embedder,
    ncells: Optional[int] = None,
    seed: int = 0,
) -> KnowledgeBase:
    """Embed, normalize and index a sentence stream."""
    if not isinstance(sentences, (list, tuple)):
        sentences = parse_sentences(sentences)
    sentences = list(sentences)
    if not sentences:
        raise ValueError("knowledge base needs at least one sentence")
    ids = [s.sid for s in sentences]
    texts = [s.text for s in sentences]
    matrix = embedder.embed(ids, texts)
    matrix = l2_normalize(matrix)
    if ncells is None:
        ncells = default_ncells(matrix.count)
    index = ivf_build(matrix, ncells=ncells, seed=seed)
    return KnowledgeBase(
        sentences=sentences,
        matrix=matrix,
        index=index,
        duplicate_embeddings=_count_duplicate_rows(matrix.data),
    )


def answer(
    question: Question,
    kb: KnowledgeBase,
    embedder,
    tau_qa: float = DEFAULT_TAU_QA,
    k: int = 1,
    nprobe: Optional[int] = None,
    accepted_only: bool = False,
) -> Union[Optional[AnswerHit], list[AnswerHit]]:
    """Best-scored sentence(s) for a question.

    k = 1 returns a single AnswerHit (or None when accepted_only filters
    it out); k > 1 returns the top-k list. The embedder must be the one
    the knowledge base was built with.
    """
    qvec = embedder.embed([question.id], [question.norm_text])
    if qvec.dim != kb.matrix.dim:
        raise ValueError(f"question dim {qvec.dim} != knowledge base dim {kb.matrix.dim}")
    query = normalize_rows(qvec.data)[0]
    hits = ivf_search(kb.index, query, k=k, nprobe=nprobe)
    answers = [
        AnswerHit(
            question_id=question.id,
            sid=h.id,
            text=kb.sentence(h.id).text,
            score=h.score,
            accepted=h.score >= tau_qa,
        )
        for h in hits
    ]
    if accepted_only:
        answers = [a for a in answers if a.accepted]
    if k == 1:
        return answers[0] if answers else None
    return answers


def answer_batch(
    questions: Sequence[Question],
    kb: KnowledgeBase,
    embedder,
    tau_qa: float = DEFAULT_TAU_QA,
    nprobe: Optional[int] = None,
) -> list[Optional[AnswerHit]]:
    """Top-1 answer per question, in input order."""
    return [
        answer(q, kb, embedder, tau_qa=tau_qa, k=1, nprobe=nprobe)
        for q in questions
    ]


@dataclass
class AnswerabilityReport:
    """accepted/total per (topic, type) cell plus marginals."""

    cells: dict[tuple[str, str], tuple[int, int]]  # (topic, qtype) -> (accepted, total)
    accepted_total: int
    question_total: int

    @property
    def overall_ratio(self) -> float:
        return self.accepted_total / self.question_total if self.question_total else 0.0

    def to_csv(self) -> str:
        type_names = [t.value for t in QTYPE_ORDER]
        header = "topic," + ",".join(type_names) + ",all"
        lines = [header]
        col_acc = {t: 0 for t in type_names}
        col_tot = {t: 0 for t in type_names}
        for topic in TOPIC_ORDER:
            row = [f'"{topic.value}"']
            racc = rtot = 0
            for qt in type_names:
                acc, tot = self.cells.get((topic.value, qt), (0, 0))
                row.append(f"{acc}/{tot}")
                racc += acc
                rtot += tot
                col_acc[qt] += acc
                col_tot[qt] += tot
            row.append(f"{racc}/{rtot}")
            lines.append(",".join(row))
        footer = ["all"] + [f"{col_acc[t]}/{col_tot[t]}" for t in type_names]
        footer.append(f"{self.accepted_total}/{self.question_total}")
        lines.append(",".join(footer))
        return "\n".join(lines) + "\n"


def answerability_report(
    hits: Sequence[Optional[AnswerHit]],
    questions: Sequence[Question],
) -> AnswerabilityReport:
    """Tally accepted/total per (topic, type) cell.

    Questions must carry qtype and topic; hits align to questions by id
    and may be None (counted as unanswered).
    """
    by_id = {q.id: q for q in questions}
    for hit in hits:
        if hit is not None and hit.question_id not in by_id:
            raise ValueError(f"hit references unknown question id {hit.question_id!r}")
    unassigned = [q.id for q in questions if q.qtype is None or q.topic is None]
    if unassigned:
        raise ValueError(f"questions missing qtype/topic: {unassigned[:5]}")

    accepted_by_id = {
        hit.question_id: hit.accepted for hit in hits if hit is not None
    }
    cells: dict[tuple[str, str], tuple[int, int]] = {}
    accepted_total = 0
    for q in questions:
        key = (q.topic.value, q.qtype.value)
        acc, tot = cells.get(key, (0, 0))
        got = 1 if accepted_by_id.get(q.id, False) else 0
        cells[key] = (acc + got, tot + 1)
        accepted_total += got
    return AnswerabilityReport(
        cells=cells,
        accepted_total=accepted_total,
        question_total=len(questions),
    )


def save_kb(kb: KnowledgeBase, directory) -> None:
    """Persist a knowledge base as a directory of artifacts."""
    directory = str(directory)
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "sentences.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        for s in kb.sentences:
            record = {"sid": s.sid, "text": s.text}
            if s.title is not None:
                record["title"] = s.title
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    save_embeddings(kb.matrix, os.path.join(directory, "embeddings.qemb"))
    save_index(kb.index, os.path.join(directory, "index.qivf"))
    manifest = {
        "sentence_count": kb.count,
        "dim": kb.matrix.dim,
        "ncells": kb.index.ncells,
        "build_seed": kb.index.build_seed,
        "duplicate_embeddings": kb.duplicate_embeddings,
    }
    with open(os.path.join(directory, "kb.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_kb(directory) -> KnowledgeBase:
    directory = str(directory)
    with open(os.path.join(directory, "sentences.jsonl"), "r", encoding="utf-8") as fh:
        sentences = parse_sentences(fh.read())
    matrix = load_embeddings(os.path.join(directory, "embeddings.qemb"))
    index = load_index(os.path.join(directory, "index.qivf"), matrix)
    with open(os.path.join(directory, "kb.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return KnowledgeBase(
        sentences=sentences,
        matrix=matrix,
        index=index,
        duplicate_embeddings=manifest.get("duplicate_embeddings", 0),
    )
