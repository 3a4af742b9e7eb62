import json
import shutil
import subprocess
import sys

import pytest

from passage_rerank.cli import BACKEND_URL_ENV, main
from passage_rerank.dataio import read_run
from passage_rerank.scorer.stub import StubScorerServer
from synth import make_dataset, write_files


@pytest.fixture
def data(tmp_path):
    ds = make_dataset(n_queries=3, n_candidates=20, seed=3)
    return ds, write_files(ds, tmp_path)


def rerank_args(files, out, *extra):
    return [
        "rerank",
        "--run-in", str(files.run),
        "--queries", str(files.queries),
        "--corpus", str(files.corpus),
        "--run-out", str(out),
        *extra,
    ]


def echoed_config(stderr: str) -> dict:
    line = next(l for l in stderr.splitlines() if l.startswith('{"command"'))
    return json.loads(line)["config"]


class TestIndexAndRetrieve:
    def test_index(self, tmp_path, capsys):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text('{"_id": "a", "text": "red apple"}\n{"_id": "b", "title": "Fruit", "text": "green pear"}\n')
        assert main(["index", "--corpus", str(corpus), "--index", str(tmp_path / "i.bin")]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["N"] == 2
        assert summary["avgdl"] == 2.5

    def test_missing_corpus(self, tmp_path):
        assert main(["index", "--corpus", str(tmp_path / "nope.jsonl"), "--index", str(tmp_path / "i.bin")]) == 1

    def test_duplicate_id(self, tmp_path, caplog):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text('{"_id": "a", "text": "x"}\n{"_id": "a", "text": "y"}\n')
        assert main(["index", "--corpus", str(corpus), "--index", str(tmp_path / "i.bin")]) == 1
        assert "c.jsonl:2: duplicate _id" in caplog.text

    def test_missing_required_option(self, tmp_path):
        assert main(["index", "--corpus", "x"]) == 2

    def test_retrieve(self, tmp_path):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text('{"_id": "a", "text": "red apple"}\n{"_id": "b", "text": "green pear"}\n{"_id": "c", "text": "red red car"}\n')
        queries = tmp_path / "q.jsonl"
        queries.write_text('{"_id": "q1", "text": "red"}\n{"_id": "q2", "text": "pear"}\n')
        index = tmp_path / "i.bin"
        assert main(["index", "--corpus", str(corpus), "--index", str(index)]) == 0
        out = tmp_path / "bm25.run"
        assert main(["retrieve", "--index", str(index), "--queries", str(queries), "--run-out", str(out), "--top-k", "5"]) == 0
        run = {r.query_id: r for r in read_run(out)}
        assert run["q1"].passage_ids == ["c", "a"]
        assert run["q2"].passage_ids == ["b"]
        assert out.read_text().split("\n")[0].endswith(" bm25")


class TestRerank:
    def test_oracle_rerank_recovers_grades(self, data, tmp_path, capsys):
        ds, files = data
        out = tmp_path / "out.run"
        assert main(rerank_args(files, out, "--oracle-qrels", str(files.qrels))) == 0
        for ranking in read_run(out):
            grades = [ds.qrels[ranking.query_id].get(pid, 0) for pid in ranking.passage_ids]
            assert grades == sorted(grades, reverse=True)
        assert out.read_text().split("\n")[0].endswith(" pointwise-soft")
        assert main(["eval", "--run", str(out), "--qrels", str(files.qrels)]) == 0
        assert json.loads(capsys.readouterr().out)["mean"] == 1.0

    def test_eval_perfect_run(self, data, tmp_path, capsys):
        _, files = data
        out = tmp_path / "out.run"
        assert main(rerank_args(files, out, "--oracle-qrels", str(files.qrels), "--method", "pipeline", "--pairwise-depth", "5")) == 0
        capsys.readouterr()
        report = tmp_path / "report.txt"
        assert main(["eval", "--run", str(out), "--qrels", str(files.qrels), "--report", str(report)]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["metric"] == "ndcg_cut_10"
        assert result["mean"] == 1.0
        assert "ndcg_cut_10\tall\t1.0000" in report.read_text()

    def test_output_is_deterministic(self, data, tmp_path):
        _, files = data
        outputs = []
        for name in ("a.run", "b.run"):
            args = rerank_args(files, tmp_path / name, "--oracle-qrels", str(files.qrels), "--oracle-noise", "0.5", "--oracle-sharpness", "1")
            assert main(args) == 0
            outputs.append((tmp_path / name).read_bytes())
        assert outputs[0] == outputs[1]

    def test_invalid_pairwise_depth(self, data, tmp_path):
        _, files = data
        args = rerank_args(files, tmp_path / "o.run", "--oracle-qrels", str(files.qrels), "--method", "pairwise", "--pairwise-depth", "1")
        assert main(args) == 2
        assert not (tmp_path / "o.run").exists()

    def test_no_backend(self, data, tmp_path, monkeypatch):
        monkeypatch.delenv(BACKEND_URL_ENV, raising=False)
        _, files = data
        assert main(rerank_args(files, tmp_path / "o.run")) == 2

    def test_unreachable_backend(self, data, tmp_path):
        _, files = data
        out = tmp_path / "o.run"
        args = rerank_args(files, out, "--backend-url", "http://127.0.0.1:9", "--retries", "0", "--timeout", "2")
        assert main(args) == 3
        assert not out.exists()

    def test_upr_via_stub(self, data, tmp_path):
        ds, files = data
        # likelihood rewards passages whose id ends in an even digit
        def likelihood(context, continuation):
            return (-1.0 if any(ds.passages[p].text in context for p in ds.passages if p[-1] in "02468") else -9.0), 4

        out = tmp_path / "o.run"
        with StubScorerServer(likelihood=likelihood) as server:
            assert main(rerank_args(files, out, "--backend-url", server.url, "--mode", "upr", "--parallel", "4")) == 0
        for ranking in read_run(out):
            even = [pid[-1] in "02468" for pid in ranking.passage_ids]
            assert even == sorted(even, reverse=True)
            assert ranking.items[0].score == pytest.approx(-0.25)

    def test_cache_makes_second_run_free(self, data, tmp_path):
        _, files = data
        calls = []

        def options(prompt, toks):
            calls.append(prompt)
            return {t: -float(i) for i, t in enumerate(toks)}

        with StubScorerServer(options) as server:
            for name in ("a.run", "b.run"):
                args = rerank_args(files, tmp_path / name, "--backend-url", server.url, "--cache", str(tmp_path / "cache.db"))
                assert main(args) == 0
        assert len(calls) == 60
        assert (tmp_path / "a.run").read_bytes() == (tmp_path / "b.run").read_bytes()

    def test_env_var_fallback(self, data, tmp_path, monkeypatch, capsys):
        _, files = data
        with StubScorerServer() as server:
            monkeypatch.setenv(BACKEND_URL_ENV, server.url)
            assert main(rerank_args(files, tmp_path / "o.run")) == 0
        assert echoed_config(capsys.readouterr().err)["backend_url"] == server.url
        assert len(server.requests) == 60


class TestConfigFile:
    def test_precedence(self, data, tmp_path, capsys):
        _, files = data
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"method": "pipeline", "pairwise-depth": 4, "parallel": 2, "oracle_qrels": str(files.qrels)}))
        assert main(rerank_args(files, tmp_path / "o.run", "--config", str(config), "--pairwise-depth", "6")) == 0
        effective = echoed_config(capsys.readouterr().err)
        assert effective["method"] == "pipeline"
        assert effective["pairwise_depth"] == 6
        assert effective["parallel"] == 2
        assert effective["k1"] == 0.9
        assert "pointwise-soft+pairwise" in (tmp_path / "o.run").read_text()

    @pytest.mark.parametrize("content", ["{broken", "[1]", '{"pairwise_dpeth": 3}'])
    def test_bad_config(self, data, tmp_path, content):
        _, files = data
        config = tmp_path / "cfg.json"
        config.write_text(content)
        assert main(rerank_args(files, tmp_path / "o.run", "--config", str(config))) == 2


class TestEval:
    def test_missing_qrels(self, data, tmp_path):
        _, files = data
        assert main(["eval", "--run", str(files.run), "--qrels", str(tmp_path / "missing.txt")]) == 1

    def test_invalid_run(self, data, tmp_path):
        _, files = data
        bad = tmp_path / "bad.run"
        bad.write_text("q0 Q0 a 1 1.0 t\nq0 Q0 b 2 2.0 t\n")
        assert main(["eval", "--run", str(bad), "--qrels", str(files.qrels)]) == 1


def test_experiment(data, tmp_path, capsys):
    _, files = data
    out = tmp_path / "exp"
    args = [
        "experiment",
        "--corpus", str(files.corpus),
        "--queries", str(files.queries),
        "--qrels", str(files.qrels),
        "--output-dir", str(out),
        "--index", str(tmp_path / "i.bin"),
        "--oracle-qrels", str(files.qrels),
        "--top-k", "20",
    ]
    assert main(args) == 0
    means = json.loads(capsys.readouterr().out)
    assert set(means) == {"bm25", "pointwise-soft"}
    assert {p.name for p in out.iterdir()} == {"bm25.run", "rerank.run", "eval.json"}
    assert means["pointwise-soft"] >= means["bm25"]
    assert (tmp_path / "i.bin").is_file()
    assert main(args) == 0  # reuses the saved index


def test_console_script():
    exe = shutil.which("passage-rerank")
    cmd = [exe] if exe else [sys.executable, "-m", "passage_rerank.cli"]
    result = subprocess.run([*cmd, "--version"], capture_output=True, text=True, check=True)
    assert result.stdout.strip() == "0.1.0"
    result = subprocess.run([*cmd, "rerank", "--method", "listwise"], capture_output=True, text=True)
    assert result.returncode == 2
