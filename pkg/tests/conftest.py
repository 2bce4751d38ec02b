import json

import pytest
from hypothesis import settings

from expertvote import corpus as corpus_mod

# property tests share one CPU with numba-compiled benchmarks; wall-clock
# deadlines only produce flakes here
settings.register_profile("no-deadline", deadline=None)
settings.load_profile("no-deadline")


def write_jsonl(path, objects):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj) + "\n")


def paper(pid, title="t", abstract="a", authors=(), references=(), n_citations=0):
    return {
        "id": pid,
        "title": title,
        "abstract": abstract,
        "authors": [
            {"id": aid, "name": aid, "position": i + 1} for i, aid in enumerate(authors)
        ],
        "references": list(references),
        "n_citations": n_citations,
    }


def author(aid, tags=(), n_pubs=0, name=None):
    return {"id": aid, "name": name or aid, "tags": list(tags), "n_pubs": n_pubs}


def make_corpus(tmp_path, papers, authors, prefix=""):
    papers_path = tmp_path / f"{prefix}papers.jsonl"
    authors_path = tmp_path / f"{prefix}authors.jsonl"
    write_jsonl(papers_path, papers)
    write_jsonl(authors_path, authors)
    return corpus_mod.load_corpus(papers_path, authors_path)


@pytest.fixture
def tiny_corpus(tmp_path):
    papers = [
        paper("p1", title="Deep learning", abstract="We learn. Deeply.", authors=["a1", "a2"], references=["p2"]),
        paper("p2", title="Shallow learning", abstract="We also learn.", authors=["a3"], n_citations=5),
    ]
    authors = [
        author("a1", tags=["machine learning"]),
        author("a2", tags=["deep learning"]),
        author("a3", tags=["statistics"]),
    ]
    return make_corpus(tmp_path, papers, authors)
