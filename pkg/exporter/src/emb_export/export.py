"""Export jobs: corpus sentences and query strings to EMB1 files."""
import json
from dataclasses import dataclass

import numpy as np

from .emb1 import ROLE_ABSTRACT, ROLE_TITLE, write_records
from .encoders import DEFAULT_MODEL, load_encoder
from .splitting import split_sentences


@dataclass
class ExportJob:
    corpus: str
    output: str
    model: str = DEFAULT_MODEL
    batch_size: int = 32
    normalize: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ExportSummary:
    papers: int
    sentences: int
    dim: int
    truncation_limit: int | None = None

    def line(self) -> str:
        limit = self.truncation_limit if self.truncation_limit is not None else "none"
        return (
            f"export papers={self.papers} sentences={self.sentences} "
            f"dim={self.dim} truncation_limit={limit}"
        )


@dataclass
class QueryExportSummary:
    queries: int
    blank_lines: int
    dim: int

    def line(self) -> str:
        return (
            f"export queries={self.queries} blank_lines_skipped={self.blank_lines} "
            f"dim={self.dim}"
        )


def read_papers(path) -> list[dict]:
    papers = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "id" not in obj:
                raise ValueError(f"{path}:{lineno}: paper without id")
            if obj["id"] in seen:
                raise ValueError(f"duplicate paper id {obj['id']!r}")
            seen.add(obj["id"])
            papers.append(obj)
    return papers


def _maybe_normalize(matrix: np.ndarray, normalize: bool) -> np.ndarray:
    if not normalize:
        return matrix
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return (matrix / norms).astype(np.float32)


def export_embeddings(job: ExportJob) -> ExportSummary:
    """One title record plus one record per abstract sentence, per paper."""
    papers = read_papers(job.corpus)
    plan = []  # (record_id, role, sentence_index)
    texts = []
    n_sentences = 0
    for paper in papers:
        plan.append((paper["id"], ROLE_TITLE, 0))
        texts.append(paper.get("title", ""))
        for idx, sentence in enumerate(split_sentences(paper.get("abstract", ""))):
            plan.append((paper["id"], ROLE_ABSTRACT, idx))
            texts.append(sentence)
            n_sentences += 1

    encoder = load_encoder(job.model)
    if texts:
        matrix = _maybe_normalize(
            encoder.encode(texts, batch_size=job.batch_size), job.normalize
        )
    else:
        matrix = np.empty((0, encoder.dim), dtype=np.float32)
    write_records(
        job.output,
        encoder.dim,
        (
            (record_id, role, idx, matrix[row])
            for row, (record_id, role, idx) in enumerate(plan)
        ),
    )
    return ExportSummary(
        papers=len(papers),
        sentences=n_sentences,
        dim=encoder.dim,
        truncation_limit=encoder.max_tokens,
    )


def export_query_embeddings(
    queries_path, output, model: str = DEFAULT_MODEL, batch_size: int = 32,
    normalize: bool = False,
) -> QueryExportSummary:
    """One role-0 record per query line; the query string is the record id."""
    queries = []
    blanks = 0
    with open(queries_path, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if not text:
                blanks += 1
                continue
            if text in queries:
                raise ValueError(f"duplicate query {text!r}")
            queries.append(text)

    encoder = load_encoder(model)
    if queries:
        matrix = _maybe_normalize(
            encoder.encode(queries, batch_size=batch_size), normalize
        )
    else:
        matrix = np.empty((0, encoder.dim), dtype=np.float32)
    write_records(
        output,
        encoder.dim,
        ((query, ROLE_TITLE, 0, matrix[row]) for row, query in enumerate(queries)),
    )
    return QueryExportSummary(queries=len(queries), blank_lines=blanks, dim=encoder.dim)
