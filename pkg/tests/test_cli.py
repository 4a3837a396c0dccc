"""CLI subcommands, manifests, determinism."""

import json
import os

import pytest

from qurious import mini_corpus_path
from qurious.cli import _resolve_endpoint, main


def run_cli(*argv):
    return main(list(argv))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def pipeline_dir(tmp_path):
    """ingest + embed + index artifacts for downstream commands."""
    questions = tmp_path / "questions.jsonl"
    emb = tmp_path / "emb.qemb"
    assert run_cli(
        "ingest", "--input", mini_corpus_path(), "--format", "lines",
        "--output", str(questions), "--manifest", str(tmp_path / "m1.json"),
    ) == 0
    assert run_cli(
        "embed", "--questions", str(questions), "--provider", "mock",
        "--dim", "64", "--seed", "7", "--output", str(emb),
        "--manifest", str(tmp_path / "m2.json"),
    ) == 0
    return tmp_path


class TestIngest:
    def test_counts_and_outputs(self, tmp_path, capsys):
        out = tmp_path / "kept.jsonl"
        removed = tmp_path / "removed.csv"
        code = run_cli(
            "ingest", "--input", mini_corpus_path(), "--format", "lines",
            "--min-tokens", "3", "--output", str(out), "--removed", str(removed),
        )
        assert code == 0
        manifest = json.loads(capsys.readouterr().out)
        assert manifest["config"]["kept"] == 36
        assert manifest["config"]["removed"] == 4
        assert manifest["config"]["removal_reasons"] == {"duplicate": 2, "too_short": 2}
        assert len(out.read_text().strip().splitlines()) == 36
        assert len(removed.read_text().strip().splitlines()) == 5  # header + 4

    def test_missing_input_exit_1(self, tmp_path, capsys):
        code = run_cli("ingest", "--input", str(tmp_path / "nope.txt"),
                       "--output", str(tmp_path / "o.jsonl"))
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag_exit_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("ingest", "--nonsense")
        assert exc.value.code == 1


class TestManifest:
    def test_structure(self, tmp_path):
        out = tmp_path / "kept.jsonl"
        manifest_path = tmp_path / "manifest.json"
        run_cli("ingest", "--input", mini_corpus_path(), "--output", str(out),
                "--manifest", str(manifest_path))
        manifest = read_json(manifest_path)
        assert manifest["command"] == "ingest"
        assert manifest["inputs"][0]["path"] == mini_corpus_path()
        assert len(manifest["inputs"][0]["digest"]) == 16
        assert manifest["outputs"][0]["path"] == str(out)
        assert "timings_ms" in manifest

    def test_rerun_same_digests(self, tmp_path):
        manifests = []
        for i in range(2):
            out = tmp_path / f"kept{i}.jsonl"
            mpath = tmp_path / f"m{i}.json"
            run_cli("ingest", "--input", mini_corpus_path(), "--output", str(out),
                    "--manifest", str(mpath))
            manifests.append(read_json(mpath))
        digests = [
            [o["digest"] for o in m["outputs"]] for m in manifests
        ]
        assert digests[0] == digests[1]


class TestClassifyType:
    def test_assigns_types(self, pipeline_dir):
        out = pipeline_dir / "typed.jsonl"
        code = run_cli("classify-type", "--questions", str(pipeline_dir / "questions.jsonl"),
                       "--output", str(out), "--manifest", str(pipeline_dir / "mt.json"))
        assert code == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert all("qtype" in r for r in records)
        kinds = {r["qtype"] for r in records}
        assert "if" in kinds and "why" in kinds and "other" in kinds


class TestIndexAndPairsAndCluster:
    def test_index_builds(self, pipeline_dir):
        code = run_cli("index", "--embeddings", str(pipeline_dir / "emb.qemb"),
                       "--seed", "7", "--output", str(pipeline_dir / "ix.qivf"),
                       "--manifest", str(pipeline_dir / "mi.json"))
        assert code == 0
        assert (pipeline_dir / "ix.qivf").exists()

    def test_pairs_csv(self, pipeline_dir):
        out = pipeline_dir / "pairs.csv"
        code = run_cli("pairs", "--embeddings", str(pipeline_dir / "emb.qemb"),
                       "--questions", str(pipeline_dir / "questions.jsonl"),
                       "--topn", "5", "--output", str(out),
                       "--manifest", str(pipeline_dir / "mp.json"))
        assert code == 0
        header = out.read_text().splitlines()[0]
        assert header == "qid1,question1,qid2,question2,score,label"

    def test_cluster_partition(self, pipeline_dir):
        out = pipeline_dir / "partition.jsonl"
        summary = pipeline_dir / "summary.json"
        code = run_cli("cluster", "--embeddings", str(pipeline_dir / "emb.qemb"),
                       "--tau", "0.825", "--output", str(out), "--summary", str(summary),
                       "--manifest", str(pipeline_dir / "mc.json"))
        assert code == 0
        payload = read_json(summary)
        # mock embeddings of distinct texts are near-orthogonal: all singletons
        assert payload["community_count"] == 36
        assert payload["singleton_count"] == 36


class TestCalibrate:
    def test_selection_json(self, tmp_path, capsys):
        pairs = tmp_path / "scores.csv"
        pairs.write_text("score,label\n0.9,1\n0.8,1\n0.3,0\n")
        out = tmp_path / "sel.json"
        curve = tmp_path / "curve.csv"
        code = run_cli("calibrate", "--pairs", str(pairs), "--criterion", "best-accuracy",
                       "--curve", str(curve), "--output", str(out))
        assert code == 0
        capsys.readouterr()
        selection = read_json(out)
        assert selection == {"criterion": "best_accuracy", "tau": 0.8}
        assert curve.read_text().startswith("threshold,accuracy,precision,recall")

    def test_mean_positive(self, tmp_path, capsys):
        pairs = tmp_path / "scores.csv"
        pairs.write_text("score,label\n0.700,1\n0.676,1\n")
        out = tmp_path / "sel.json"
        code = run_cli("calibrate", "--pairs", str(pairs), "--criterion", "mean-positive",
                       "--output", str(out))
        assert code == 0
        capsys.readouterr()
        assert read_json(out)["tau"] == 0.688


class TestAnswerPipeline:
    def test_kb_build_and_answer(self, tmp_path, capsys):
        sentences = tmp_path / "kb.jsonl"
        records = [{"sid": f"s{i}", "text": f"background fact {i} goes here"} for i in range(30)]
        records.append({"sid": "hit", "text": "when was the wheel invented?"})
        sentences.write_text("\n".join(json.dumps(r) for r in records))

        kb_dir = tmp_path / "kb"
        code = run_cli("kb-build", "--sentences", str(sentences), "--provider", "mock",
                       "--dim", "128", "--seed", "7", "--out-dir", str(kb_dir))
        assert code == 0

        questions = tmp_path / "q.jsonl"
        run_cli("ingest", "--input", mini_corpus_path(), "--output", str(questions),
                "--manifest", str(tmp_path / "mi.json"))
        answers = tmp_path / "answers.csv"
        code = run_cli("answer", "--questions", str(questions), "--kb", str(kb_dir),
                       "--provider", "mock", "--dim", "128", "--seed", "7",
                       "--tau-qa", "0.688", "--output", str(answers))
        assert code == 0
        capsys.readouterr()
        lines = answers.read_text().strip().splitlines()
        assert lines[0] == "question_id,sid,text,score,accepted"
        assert len(lines) == 37
        accepted = [ln for ln in lines[1:] if ln.endswith(",1")]
        # exactly the verbatim wheel question clears tau
        assert len(accepted) == 1
        assert accepted[0].split(",")[1] == "hit"


class TestReportAndStats:
    def test_report_outputs(self, pipeline_dir, capsys):
        out_dir = pipeline_dir / "report"
        partition = pipeline_dir / "partition.jsonl"
        run_cli("cluster", "--embeddings", str(pipeline_dir / "emb.qemb"),
                "--tau", "0.825", "--output", str(partition),
                "--manifest", str(pipeline_dir / "mc.json"))
        code = run_cli("report", "--questions", str(pipeline_dir / "questions.jsonl"),
                       "--partition", str(partition), "--out-dir", str(out_dir))
        assert code == 0
        capsys.readouterr()
        stats = read_json(out_dir / "stats.json")
        assert stats["question_count"] == 36
        assert (out_dir / "word_freq.csv").exists()
        communities = read_json(out_dir / "communities.json")
        assert communities["node_count"] == 36

    def test_stats_output(self, pipeline_dir, capsys):
        out = pipeline_dir / "stats.json"
        freq = pipeline_dir / "freq.csv"
        code = run_cli("stats", "--questions", str(pipeline_dir / "questions.jsonl"),
                       "--output", str(out), "--freq", str(freq))
        assert code == 0
        capsys.readouterr()
        stats = read_json(out)
        assert stats["question_count"] == 36
        assert stats["min_len"] >= 3
        assert freq.read_text().startswith("token,count")


class TestEndpointResolution:
    def test_env_overrides_flag(self, monkeypatch):
        class Args:
            endpoint = "http://flag"

        monkeypatch.setenv("QURIOUS_ENDPOINT", "http://env")
        assert _resolve_endpoint(Args()) == "http://env"
        monkeypatch.delenv("QURIOUS_ENDPOINT")
        assert _resolve_endpoint(Args()) == "http://flag"
