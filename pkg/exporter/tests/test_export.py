import json
import struct

import numpy as np
import pytest

from emb_export.emb1 import EMB1_MAGIC, ROLE_ABSTRACT, ROLE_TITLE
from emb_export.encoders import HashEncoder, load_encoder
from emb_export.export import (
    ExportJob,
    export_embeddings,
    export_query_embeddings,
    read_papers,
)
from emb_export.cli import main


def write_papers(path, papers):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in papers:
            fh.write(json.dumps(obj) + "\n")


class TestHashEncoder:
    def test_deterministic(self):
        enc = HashEncoder(16)
        a = enc.encode(["hello", "world"])
        b = enc.encode(["hello", "world"])
        assert np.array_equal(a, b)
        assert a.shape == (2, 16)
        assert a.dtype == np.float32

    def test_distinct_texts_distinct_vectors(self):
        enc = HashEncoder(16)
        a, b = enc.encode(["alpha", "beta"])
        assert not np.array_equal(a, b)

    def test_scheme_parsing(self):
        enc = load_encoder("hash://24")
        assert enc.dim == 24
        assert enc.max_tokens is None

    def test_bad_dim(self):
        with pytest.raises(ValueError):
            HashEncoder(0)


class TestExportEmbeddings:
    def test_empty_corpus_header_only(self, tmp_path):
        papers = tmp_path / "papers.jsonl"
        papers.write_text("")
        out = tmp_path / "out.emb1"
        summary = export_embeddings(
            ExportJob(corpus=str(papers), output=str(out), model="hash://8")
        )
        assert (summary.papers, summary.sentences, summary.dim) == (0, 0, 8)
        assert out.read_bytes() == struct.pack("<4sI", EMB1_MAGIC, 8)

    def test_one_paper_three_records(self, tmp_path):
        papers = tmp_path / "papers.jsonl"
        write_papers(papers, [{"id": "p1", "title": "T", "abstract": "One. Two."}])
        out = tmp_path / "out.emb1"
        summary = export_embeddings(
            ExportJob(corpus=str(papers), output=str(out), model="hash://4")
        )
        assert summary.papers == 1
        assert summary.sentences == 2
        records = list(_iter_records(out))
        assert [(r[0], r[1], r[2]) for r in records] == [
            ("p1", ROLE_TITLE, 0),
            ("p1", ROLE_ABSTRACT, 0),
            ("p1", ROLE_ABSTRACT, 1),
        ]

    def test_reexport_byte_identical(self, tmp_path):
        papers = tmp_path / "papers.jsonl"
        write_papers(
            papers,
            [
                {"id": "p1", "title": "Alpha", "abstract": "A b. C d!"},
                {"id": "p2", "title": "Beta", "abstract": ""},
            ],
        )
        outputs = []
        for name in ("a.emb1", "b.emb1"):
            out = tmp_path / name
            export_embeddings(ExportJob(corpus=str(papers), output=str(out), model="hash://8"))
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_duplicate_paper_id_rejected(self, tmp_path):
        papers = tmp_path / "papers.jsonl"
        write_papers(papers, [{"id": "p1", "title": "a"}, {"id": "p1", "title": "b"}])
        with pytest.raises(ValueError, match="duplicate"):
            read_papers(papers)

    def test_normalize_flag(self, tmp_path):
        papers = tmp_path / "papers.jsonl"
        write_papers(papers, [{"id": "p1", "title": "T", "abstract": "One."}])
        out = tmp_path / "out.emb1"
        export_embeddings(
            ExportJob(corpus=str(papers), output=str(out), model="hash://8", normalize=True)
        )
        for _, _, _, vec in _iter_records(out):
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-6)

    def test_bad_batch_size(self, tmp_path):
        with pytest.raises(ValueError):
            ExportJob(corpus="x", output="y", batch_size=0)


class TestExportQueries:
    def test_one_record_per_query(self, tmp_path):
        queries = tmp_path / "queries.txt"
        queries.write_text("".join(f"query {i}\n" for i in range(100)))
        out = tmp_path / "q.emb1"
        summary = export_query_embeddings(queries, out, model="hash://8")
        assert summary.queries == 100
        assert summary.blank_lines == 0
        records = list(_iter_records(out))
        assert len(records) == 100
        assert records[0][0] == "query 0"
        assert records[0][1] == ROLE_TITLE

    def test_blank_lines_skipped_and_counted(self, tmp_path):
        queries = tmp_path / "queries.txt"
        queries.write_text("alpha\n\n  \nbeta\n")
        out = tmp_path / "q.emb1"
        summary = export_query_embeddings(queries, out, model="hash://8")
        assert summary.queries == 2
        assert summary.blank_lines == 2

    def test_duplicate_query_rejected(self, tmp_path):
        queries = tmp_path / "queries.txt"
        queries.write_text("same\nsame\n")
        with pytest.raises(ValueError, match="duplicate"):
            export_query_embeddings(queries, tmp_path / "q.emb1", model="hash://8")


class TestCli:
    def test_papers_summary_line(self, tmp_path, capsys):
        papers = tmp_path / "papers.jsonl"
        write_papers(papers, [{"id": "p1", "title": "T", "abstract": "A. B."}])
        out = tmp_path / "out.emb1"
        code = main(
            ["papers", "--papers", str(papers), "--out", str(out), "--model", "hash://8"]
        )
        assert code == 0
        text = capsys.readouterr().out
        assert "papers=1" in text and "sentences=2" in text and "dim=8" in text
        assert "truncation_limit=none" in text

    def test_queries_subcommand(self, tmp_path, capsys):
        queries = tmp_path / "queries.txt"
        queries.write_text("alpha\nbeta\n")
        out = tmp_path / "q.emb1"
        assert main(
            ["queries", "--queries", str(queries), "--out", str(out), "--model", "hash://8"]
        ) == 0
        assert "queries=2" in capsys.readouterr().out

    def test_missing_input_exit_2(self, tmp_path, capsys):
        code = main(
            ["papers", "--papers", str(tmp_path / "nope.jsonl"),
             "--out", str(tmp_path / "o.emb1"), "--model", "hash://8"]
        )
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_duplicate_query_exit_1(self, tmp_path, capsys):
        queries = tmp_path / "queries.txt"
        queries.write_text("x\nx\n")
        code = main(
            ["queries", "--queries", str(queries), "--out", str(tmp_path / "q.emb1"),
             "--model", "hash://8"]
        )
        assert code == 1
        assert "duplicate" in capsys.readouterr().err


def _iter_records(path):
    """Minimal standalone EMB1 reader for assertions."""
    data = path.read_bytes()
    magic, dim = struct.unpack_from("<4sI", data, 0)
    assert magic == EMB1_MAGIC
    offset = 8
    while offset < len(data):
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        record_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        role, sentence_index = struct.unpack_from("<BH", data, offset)
        offset += 3
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        yield record_id, role, sentence_index, vec
