"""Round-trip against the search engine's own EMB1 reader.

These tests import the engine package only to parse files the exporter
wrote — the exporter itself shares no code with it.
"""
import json

import numpy as np
import pytest

from emb_export.encoders import HashEncoder
from emb_export.export import ExportJob, export_embeddings, export_query_embeddings
from emb_export.splitting import split_sentences

engine_embedder = pytest.importorskip("expertvote.embedder")


def test_sentence_file_parses_with_exact_floats(tmp_path):
    papers = [
        {"id": "p1", "title": "First title", "abstract": "Alpha beta. Gamma delta. Epsilon!"},
        {"id": "p2", "title": "Second title", "abstract": "Single sentence."},
        {"id": "p3", "title": "Bare title", "abstract": ""},
    ]
    papers_path = tmp_path / "papers.jsonl"
    papers_path.write_text("".join(json.dumps(p) + "\n" for p in papers))
    out = tmp_path / "sentences.emb1"
    summary = export_embeddings(
        ExportJob(corpus=str(papers_path), output=str(out), model="hash://12")
    )
    assert summary.papers == 3
    assert summary.sentences == 4

    groups = engine_embedder.load_sentence_embeddings(out)
    assert set(groups) == {"p1", "p2", "p3"}
    assert len(groups["p1"].abstract_embeddings) == 3
    assert len(groups["p2"].abstract_embeddings) == 1
    assert groups["p3"].abstract_embeddings == []

    # component-exact float32 round-trip against the encoder's own output
    encoder = HashEncoder(12)
    for paper in papers:
        want_title = encoder.encode([paper["title"]])[0]
        got_title = groups[paper["id"]].title_embedding
        assert np.array_equal(got_title, want_title.astype(np.float64))
        for idx, sentence in enumerate(split_sentences(paper["abstract"])):
            want = encoder.encode([sentence])[0]
            got = groups[paper["id"]].abstract_embeddings[idx]
            assert np.array_equal(got, want.astype(np.float64))


def test_query_sidecar_parses_in_engine(tmp_path):
    queries = tmp_path / "queries.txt"
    queries.write_text("cluster analysis\nbig data\n")
    out = tmp_path / "queries.emb1"
    export_query_embeddings(queries, out, model="hash://12")
    vectors = engine_embedder.load_paper_embeddings(out)
    assert set(vectors) == {"cluster analysis", "big data"}
    encoder = HashEncoder(12)
    want = encoder.encode(["cluster analysis"])[0]
    assert np.array_equal(vectors["cluster analysis"], want.astype(np.float64))
