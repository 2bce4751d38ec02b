import json

import pytest
from fastapi.testclient import TestClient

from expertvote.errors import ValidationError
from expertvote.gateway import Engine, create_app, load_config, main

from conftest import author, paper, write_jsonl

TOPICS = {
    "quantum": "quantum entanglement photon qubit superposition",
    "neural": "neural network gradient training backpropagation",
    "market": "market equilibrium pricing auction bidding",
}


@pytest.fixture
def workspace(tmp_path):
    papers = []
    authors = []
    for topic, text in TOPICS.items():
        for k in range(2):
            pid = f"{topic}_p{k}"
            papers.append(
                paper(
                    pid,
                    title=f"{text.split()[0]} study {k}",
                    abstract=text,
                    authors=[f"{topic}_expert"] if topic == "quantum" else [f"{topic}_a{k}"],
                )
            )
    authors.append(author("quantum_expert", tags=["quantum entanglement"]))
    for topic in ("neural", "market"):
        for k in range(2):
            authors.append(author(f"{topic}_a{k}", tags=[topic]))
    papers_path = tmp_path / "papers.jsonl"
    authors_path = tmp_path / "authors.jsonl"
    write_jsonl(papers_path, papers)
    write_jsonl(authors_path, authors)
    stopwords_path = tmp_path / "stopwords.txt"
    stopwords_path.write_text("")
    config_path = tmp_path / "config.toml"
    config_path.write_text(
        f'papers = "{papers_path}"\n'
        f'authors = "{authors_path}"\n'
        f'stopwords = "{stopwords_path}"\n'
        'embedder = "lsi"\n'
        "lsi_k = 8\n"
        "experts = 5\n"
    )
    return tmp_path


class TestConfig:
    def test_load(self, workspace):
        config = load_config(workspace / "config.toml")
        assert config.embedder == "lsi"
        assert config.experts == 5
        assert config.docs == 100  # default survives

    def test_unknown_key_rejected(self, workspace):
        path = workspace / "bad.toml"
        path.write_text("mystery_knob = 3\n")
        with pytest.raises(ValidationError, match="mystery_knob"):
            load_config(path)

    def test_env_overrides(self, workspace, monkeypatch):
        monkeypatch.setenv("EXPERTVOTE_DOCS", "7")
        monkeypatch.setenv("EXPERTVOTE_NORMALIZE", "true")
        monkeypatch.setenv("EXPERTVOTE_ALPHA", "1000.0")
        monkeypatch.setenv("EXPERTVOTE_WEIGHTING", "uniform")
        config = load_config(workspace / "config.toml")
        assert config.docs == 7
        assert config.normalize is True
        assert config.alpha == 1000.0
        assert config.weighting == "uniform"

    def test_missing_referenced_file(self, workspace):
        path = workspace / "dangling.toml"
        path.write_text('papers = "/nonexistent/papers.jsonl"\n')
        with pytest.raises(ValidationError, match="papers"):
            load_config(path)

    def test_bad_embedder_kind(self, workspace):
        path = workspace / "kind.toml"
        path.write_text('embedder = "telepathy"\n')
        with pytest.raises(ValidationError, match="telepathy"):
            load_config(path)


class TestEngine:
    def test_topical_query_finds_expert(self, workspace):
        engine = Engine(load_config(workspace / "config.toml"))
        ranking = engine.search("quantum entanglement photon")
        assert ranking.entries[0].author_id == "quantum_expert"

    def test_out_of_vocabulary_query_rejected(self, workspace):
        engine = Engine(load_config(workspace / "config.toml"))
        with pytest.raises(ValidationError):
            engine.search("zzz unknownword")


class TestCli:
    def test_ingest(self, workspace, capsys):
        out_dir = workspace / "ingested"
        code = main(
            [
                "ingest",
                "--papers", str(workspace / "papers.jsonl"),
                "--authors", str(workspace / "authors.jsonl"),
                "--out", str(out_dir),
            ]
        )
        assert code == 0
        assert "papers=6" in capsys.readouterr().out
        assert (out_dir / "stopwords.txt").exists()

    def test_embed_then_index_then_search(self, workspace, capsys):
        emb_path = workspace / "papers.emb1"
        model_path = workspace / "lsi.npz"
        assert main(
            [
                "embed",
                "--config", str(workspace / "config.toml"),
                "--out", str(emb_path),
                "--model-out", str(model_path),
            ]
        ) == 0
        index_path = workspace / "index.vidx"
        assert main(
            ["index", "--embeddings", str(emb_path), "--out", str(index_path)]
        ) == 0
        capsys.readouterr()
        # point the engine at the prebuilt artifacts
        config_path = workspace / "chained.toml"
        config_path.write_text(
            (workspace / "config.toml").read_text()
            + f'index = "{index_path}"\nlsi_model = "{model_path}"\n'
        )
        assert main(
            [
                "search",
                "--config", str(config_path),
                "--query", "neural network training",
                "--json",
            ]
        ) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["query"] == "neural network training"
        assert payload["experts"][0]["id"].startswith("neural")

    def test_index_missing_embeddings_exit_2(self, workspace, capsys):
        code = main(
            [
                "index",
                "--embeddings", str(workspace / "no-such.emb1"),
                "--out", str(workspace / "o.vidx"),
            ]
        )
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_search_run_file_deterministic(self, workspace, capsys):
        queries = workspace / "queries.txt"
        queries.write_text("quantum entanglement photon\nmarket equilibrium pricing\n")
        runs = []
        for name in ("run_a.jsonl", "run_b.jsonl"):
            out = workspace / name
            assert main(
                [
                    "search",
                    "--config", str(workspace / "config.toml"),
                    "--queries", str(queries),
                    "--out", str(out),
                ]
            ) == 0
            runs.append(out.read_bytes())
        assert runs[0] == runs[1]
        capsys.readouterr()

    def test_search_queries_without_out_exit_2(self, workspace, capsys):
        queries = workspace / "queries.txt"
        queries.write_text("quantum entanglement photon\n")
        code = main(
            ["search", "--config", str(workspace / "config.toml"), "--queries", str(queries)]
        )
        assert code == 2
        capsys.readouterr()

    def test_eval_prints_table(self, workspace, capsys, tmp_path):
        run_path = workspace / "run.jsonl"
        run_path.write_text(
            json.dumps({"query": "q", "experts": [{"id": "quantum_expert", "score": 1.0}]})
            + "\n"
        )
        judgments_path = workspace / "judgments.jsonl"
        judgments_path.write_text(
            json.dumps(
                {"query": "q", "ideal": [{"author": "quantum_expert", "grade": 3}], "idcg10": 7.0}
            )
            + "\n"
        )
        report_path = workspace / "report.json"
        code = main(
            [
                "eval",
                "--run", str(run_path),
                "--judgments", str(judgments_path),
                "--out", str(report_path),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "mrr@10_exact" in out
        assert "queries: 1" in out
        assert json.loads(report_path.read_text())["means"]["mrr@10_exact"] == 1.0

    def test_missing_config_exit_2(self, capsys):
        code = main(["search", "--config", "/nonexistent/config.toml", "--query", "x"])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestHttp:
    @pytest.fixture
    def client(self, workspace):
        engine = Engine(load_config(workspace / "config.toml"))
        return TestClient(create_app(engine)), engine

    def test_healthz(self, client):
        http, _ = client
        response = http.get("/healthz")
        assert response.status_code == 200
        assert response.text == "ok"

    def test_missing_q_400(self, client):
        http, _ = client
        assert http.get("/experts").status_code == 400

    def test_n_zero_empty(self, client):
        http, _ = client
        response = http.get("/experts", params={"q": "quantum entanglement photon", "n": 0})
        assert response.status_code == 200
        assert response.json() == {"query": "quantum entanglement photon", "experts": []}

    def test_n_over_limit_400(self, client):
        http, _ = client
        response = http.get("/experts", params={"q": "x", "n": 10_000})
        assert response.status_code == 400

    def test_not_ready_503(self):
        http = TestClient(create_app(None))
        assert http.get("/experts", params={"q": "x"}).status_code == 503

    def test_end_to_end_matches_engine(self, client):
        http, engine = client
        q = "quantum entanglement photon"
        response = http.get("/experts", params={"q": q, "n": 5})
        assert response.status_code == 200
        body = response.json()
        assert body["experts"][0]["id"] == "quantum_expert"
        ranking = engine.search(q, n_experts=5)
        assert [e["id"] for e in body["experts"]] == [
            entry.author_id for entry in ranking.entries
        ]
        assert [e["score"] for e in body["experts"]] == pytest.approx(
            [entry.score for entry in ranking.entries]
        )
        # evidence carries the voting papers and their document scores
        first = body["experts"][0]
        assert {p["id"] for p in first["papers"]} <= set(engine.corpus.papers)

    def test_bad_query_400(self, client):
        http, _ = client
        response = http.get("/experts", params={"q": "zzz unknownword"})
        assert response.status_code == 400
