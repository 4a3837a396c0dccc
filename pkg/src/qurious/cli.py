"""Command-line surface for the full pipeline.

Every subcommand reads declared inputs, writes declared outputs, and emits
a JSON run manifest (stdout, or --manifest PATH) recording the config
snapshot, 64-bit content digests of inputs and outputs, the seed, and
per-stage timings. Reruns with identical inputs and seed produce identical
output digests; only the timings differ.

Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional

from . import mini_corpus_path  # noqa: F401  (re-exported convenience)
from . import analytics, answering, calibration, corpus, equivalence
from .embedding import (
    EmbedderConfig,
    l2_normalize,
    load_embeddings,
    make_embedder,
    save_embeddings,
)
from .errors import QuriousError
from .hashing import content_digest
from .vectorstore import default_ncells, ivf_build, save_index


class _CliParser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract wants 1."""

    def error(self, message):
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


class _Manifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.config = {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "manifest") and v is not None
        }
        self.inputs: list[dict] = []
        self.outputs: list[dict] = []
        self.timings_ms: dict[str, float] = {}
        self._t0: Optional[float] = None
        self._stage: Optional[str] = None

    def add_input(self, path) -> None:
        self.inputs.append({"path": str(path), "digest": content_digest(path)})

    def add_output(self, path) -> None:
        self.outputs.append({"path": str(path), "digest": content_digest(path)})

    def stage(self, name: str) -> "_Manifest":
        self._finish_stage()
        self._stage = name
        self._t0 = time.perf_counter()
        return self

    def _finish_stage(self) -> None:
        if self._stage is not None:
            self.timings_ms[self._stage] = (time.perf_counter() - self._t0) * 1000.0
            self._stage = None

    def emit(self, path: Optional[str]) -> None:
        self._finish_stage()
        payload = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": self.config.get("seed"),
            "timings_ms": self.timings_ms,
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if path:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _resolve_endpoint(args) -> Optional[str]:
    return os.environ.get("QURIOUS_ENDPOINT") or getattr(args, "endpoint", None)


def _embedder_from_args(args):
    endpoint = _resolve_endpoint(args)
    config = EmbedderConfig(
        provider=args.provider,
        endpoint=endpoint if args.provider == "http" else None,
        dim=args.dim,
        seed=args.seed,
        batch_size=args.batch_size,
    )
    embeddings_in = getattr(args, "embeddings_in", None)
    return make_embedder(config, embeddings_path=embeddings_in)


def _add_provider_flags(sub) -> None:
    sub.add_argument("--provider", choices=["file", "http", "mock"], default="mock")
    sub.add_argument("--endpoint", help="embed service URL (env QURIOUS_ENDPOINT overrides)")
    sub.add_argument("--dim", type=int, default=768)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--embeddings-in", help="QEMB file for the file provider")


def cmd_ingest(args, manifest: _Manifest) -> None:
    manifest.stage("parse")
    manifest.add_input(args.input)
    with open(args.input, "rb") as fh:
        questions = corpus.parse_corpus(fh, format=args.format)
    manifest.stage("filter")
    kept, report = corpus.normalize_and_filter(questions, min_tokens=args.min_tokens)
    manifest.stage("write")
    corpus.save_questions(kept, args.output)
    manifest.add_output(args.output)
    if args.removed:
        _write_text(args.removed, report.to_csv())
        manifest.add_output(args.removed)
    manifest.config["kept"] = len(kept)
    manifest.config["removed"] = report.count
    manifest.config["removal_reasons"] = report.reason_counts()


def cmd_classify_type(args, manifest: _Manifest) -> None:
    manifest.stage("classify")
    manifest.add_input(args.questions)
    questions = corpus.load_questions(args.questions)
    typed = corpus.assign_types(questions)
    manifest.stage("write")
    corpus.save_questions(typed, args.output)
    manifest.add_output(args.output)


def cmd_embed(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.questions)
    questions = corpus.load_questions(args.questions)
    embedder = _embedder_from_args(args)
    manifest.stage("embed")
    matrix = embedder.embed([q.id for q in questions], [q.norm_text for q in questions])
    matrix = l2_normalize(matrix)
    manifest.stage("write")
    save_embeddings(matrix, args.output)
    manifest.add_output(args.output)
    manifest.add_output(str(args.output) + ".ids")


def cmd_index(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.embeddings)
    matrix = load_embeddings(args.embeddings)
    ncells = args.ncells if args.ncells else default_ncells(matrix.count)
    manifest.stage("build")
    index = ivf_build(matrix, ncells=ncells, seed=args.seed)
    manifest.stage("write")
    save_index(index, args.output)
    manifest.add_output(args.output)
    manifest.config["ncells"] = ncells


def cmd_calibrate(args, manifest: _Manifest) -> None:
    import csv

    manifest.stage("load")
    manifest.add_input(args.pairs)
    scores, labels = [], []
    with open(args.pairs, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.append(float(row["score"]))
            labels.append(int(row["label"]))
    manifest.stage("sweep")
    curve = calibration.threshold_sweep(scores, labels)
    criterion = args.criterion.replace("-", "_")
    tau = calibration.select_threshold(scores, labels, criterion, curve=curve)
    curve.selected = (criterion, tau)
    manifest.stage("write")
    if args.curve:
        _write_text(args.curve, curve.to_csv())
        manifest.add_output(args.curve)
    selection = {"criterion": criterion, "tau": tau}
    _write_text(args.output, json.dumps(selection, indent=2, sort_keys=True) + "\n")
    manifest.add_output(args.output)


def cmd_pairs(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.embeddings)
    matrix = load_embeddings(args.embeddings)
    questions = None
    if args.questions:
        manifest.add_input(args.questions)
        questions = corpus.load_questions(args.questions)
    manifest.stage("pairs")
    pairs = equivalence.candidate_pairs(matrix, topn=args.topn)
    manifest.stage("write")
    _write_text(args.output, equivalence.pairs_to_csv(pairs, questions))
    manifest.add_output(args.output)
    manifest.config["pair_count"] = len(pairs)


def cmd_cluster(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.embeddings)
    matrix = load_embeddings(args.embeddings)
    manifest.stage("graph")
    graph = equivalence.build_similarity_graph(matrix, tau=args.tau)
    manifest.stage("communities")
    partition = equivalence.detect_communities(graph)
    manifest.stage("write")
    _write_text(args.output, equivalence.partition_to_jsonl(partition))
    manifest.add_output(args.output)
    summary = {
        "community_count": partition.community_count,
        "singleton_count": partition.singleton_count,
        "modularity": partition.modularity,
        "edge_count": graph.edge_count,
    }
    if args.summary:
        _write_text(args.summary, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        manifest.add_output(args.summary)
    manifest.config.update(summary)


def cmd_kb_build(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.sentences)
    with open(args.sentences, "rb") as fh:
        sentences = answering.parse_sentences(fh)
    embedder = _embedder_from_args(args)
    manifest.stage("build")
    ncells = args.ncells if args.ncells else None
    kb = answering.build_kb(sentences, embedder, ncells=ncells, seed=args.seed)
    manifest.stage("write")
    answering.save_kb(kb, args.out_dir)
    for name in ("sentences.jsonl", "embeddings.qemb", "embeddings.qemb.ids", "index.qivf", "kb.json"):
        manifest.add_output(os.path.join(args.out_dir, name))
    manifest.config["sentence_count"] = kb.count
    manifest.config["duplicate_embeddings"] = kb.duplicate_embeddings


def cmd_answer(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.questions)
    questions = corpus.load_questions(args.questions)
    kb = answering.load_kb(args.kb)
    manifest.add_input(os.path.join(args.kb, "index.qivf"))
    embedder = _embedder_from_args(args)
    manifest.stage("answer")
    hits = answering.answer_batch(
        questions, kb, embedder, tau_qa=args.tau_qa, nprobe=args.nprobe,
    )
    manifest.stage("write")
    lines = ["question_id,sid,text,score,accepted"]
    for q, hit in zip(questions, hits):
        if hit is None:
            lines.append(f"{q.id},,,,-")
            continue
        text = hit.text.replace('"', '""')
        lines.append(f'{hit.question_id},{hit.sid},"{text}",{hit.score!r},{1 if hit.accepted else 0}')
    _write_text(args.output, "\n".join(lines) + "\n")
    manifest.add_output(args.output)
    manifest.config["answered"] = sum(1 for h in hits if h is not None and h.accepted)
    manifest.config["evaluated"] = len(hits)


def cmd_report(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.questions)
    questions = corpus.load_questions(args.questions)
    os.makedirs(args.out_dir, exist_ok=True)

    manifest.stage("stats")
    stats = corpus.corpus_stats(questions)
    stats_payload = {
        "question_count": stats.question_count,
        "vocab_size": stats.vocab_size,
        "min_len": stats.min_len,
        "max_len": stats.max_len,
        "mean_len": stats.mean_len,
        "pct_within_10": stats.pct_within_10,
    }
    stats_path = os.path.join(args.out_dir, "stats.json")
    _write_text(stats_path, json.dumps(stats_payload, indent=2, sort_keys=True) + "\n")
    manifest.add_output(stats_path)

    freq_path = os.path.join(args.out_dir, "word_freq.csv")
    _write_text(freq_path, analytics.frequencies_to_csv(stats.token_frequencies))
    manifest.add_output(freq_path)

    typed = all(q.qtype is not None and q.topic is not None for q in questions)
    if typed and questions:
        manifest.stage("contingency")
        table = analytics.contingency(questions)
        table_path = os.path.join(args.out_dir, "contingency.csv")
        _write_text(table_path, table.to_csv())
        manifest.add_output(table_path)
        lift_path = os.path.join(args.out_dir, "lift.csv")
        _write_text(lift_path, analytics.lift_report_csv(table))
        manifest.add_output(lift_path)

    if args.partition:
        manifest.stage("partition")
        manifest.add_input(args.partition)
        assignment: dict[str, int] = {}
        with open(args.partition, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    assignment[record["id"]] = record["community"]
        sizes: dict[int, int] = {}
        for community in assignment.values():
            sizes[community] = sizes.get(community, 0) + 1
        community_payload = {
            "community_count": len(sizes),
            "singleton_count": sum(1 for s in sizes.values() if s == 1),
            "node_count": len(assignment),
        }
        community_path = os.path.join(args.out_dir, "communities.json")
        _write_text(community_path, json.dumps(community_payload, indent=2, sort_keys=True) + "\n")
        manifest.add_output(community_path)


def cmd_stats(args, manifest: _Manifest) -> None:
    manifest.stage("load")
    manifest.add_input(args.questions)
    questions = corpus.load_questions(args.questions)
    manifest.stage("stats")
    stats = corpus.corpus_stats(questions)
    payload = {
        "question_count": stats.question_count,
        "vocab_size": stats.vocab_size,
        "min_len": stats.min_len,
        "max_len": stats.max_len,
        "mean_len": stats.mean_len,
        "pct_within_10": stats.pct_within_10,
    }
    _write_text(args.output, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    manifest.add_output(args.output)
    if args.freq:
        _write_text(args.freq, analytics.frequencies_to_csv(stats.token_frequencies))
        manifest.add_output(args.freq)


def build_parser() -> _CliParser:
    parser = _CliParser(prog="qurious", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, normalize and filter a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["lines", "jsonl"], default="lines")
    p.add_argument("--min-tokens", type=int, default=3)
    p.add_argument("--output", required=True, help="kept questions JSONL")
    p.add_argument("--removed", help="removal report CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("classify-type", help="assign keyword-based question types")
    p.add_argument("--questions", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_classify_type)

    p = sub.add_parser("embed", help="embed questions into a QEMB matrix")
    p.add_argument("--questions", required=True)
    p.add_argument("--output", required=True, help="QEMB output path")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("index", help="build an IVF index over embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ncells", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="QIVF output path")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("calibrate", help="sweep thresholds on labeled pair scores")
    p.add_argument("--pairs", required=True, help="CSV with score,label columns")
    p.add_argument(
        "--criterion",
        choices=["best-accuracy", "best-precision", "mean-positive"],
        default="best-accuracy",
    )
    p.add_argument("--curve", help="threshold curve CSV output")
    p.add_argument("--output", required=True, help="selection JSON output")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pairs", help="generate top-N candidate question pairs")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--questions", help="questions JSONL, adds texts to the CSV")
    p.add_argument("--topn", type=int, default=10)
    p.add_argument("--output", required=True, help="pairs CSV")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("cluster", help="similarity graph + greedy modularity communities")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--tau", type=float, default=0.825)
    p.add_argument("--output", required=True, help="partition JSONL")
    p.add_argument("--summary", help="summary JSON output")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("kb-build", help="embed and index a sentence knowledge base")
    p.add_argument("--sentences", required=True, help="JSONL with sid/text/title")
    p.add_argument("--ncells", type=int)
    p.add_argument("--out-dir", required=True)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_kb_build)

    p = sub.add_parser("answer", help="retrieve best-scored sentences for questions")
    p.add_argument("--questions", required=True)
    p.add_argument("--kb", required=True, help="knowledge base directory")
    p.add_argument("--tau-qa", type=float, default=answering.DEFAULT_TAU_QA)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--output", required=True, help="answers CSV")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("report", help="corpus analytics bundle")
    p.add_argument("--questions", required=True)
    p.add_argument("--partition", help="partition JSONL from cluster")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--questions", required=True)
    p.add_argument("--output", required=True, help="stats JSON")
    p.add_argument("--freq", help="token frequency CSV")
    p.set_defaults(func=cmd_stats)

    # subparsers inherit _CliParser, so bad flags also exit 1
    for sp in sub.choices.values():
        sp.add_argument("--manifest", help="write the run manifest here instead of stdout")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = _Manifest(args.command, args)
    try:
        args.func(args, manifest)
    except (QuriousError, FileNotFoundError, ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        sys.stderr.write(f"internal error: {exc}\n")
        return 2
    manifest.emit(args.manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
