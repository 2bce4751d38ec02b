"""Ranking evaluation: relevance judging, MRR/MP/MAP/nDCG, and reports.

Author relevance comes from field-of-work tags, either by exact string
match against the query or approximately via cosine similarity between the
query embedding and tag embeddings. nDCG grades come from a citation-count
proxy bucketed into quartiles.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, normalize_tag
from .errors import ValidationError

DEFAULT_APPROX_THRESHOLD = 0.7
MAX_GRADE = 3


def is_relevant_exact(author, query: str) -> bool:
    """True iff the normalized query is one of the author's tags."""
    wanted = normalize_tag(query)
    return any(normalize_tag(tag) == wanted for tag in author.tags)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def is_relevant_approx(query_embedding, tag_embeddings, threshold: float) -> bool:
    """True iff some tag embedding is cosine-similar enough to the query."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    if not tag_embeddings:
        return False
    return max(cosine(query_embedding, tag) for tag in tag_embeddings) >= threshold


# --- binary metrics ----------------------------------------------------------


def reciprocal_rank(relevance) -> float:
    for i, rel in enumerate(relevance):
        if rel:
            return 1.0 / (i + 1)
    return 0.0


def precision_at_n(relevance, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    hits = sum(1 for rel in relevance[:n] if rel)
    return hits / n


def average_precision_at_n(relevance, n: int) -> float:
    """AP over the top-n window; denominator is the in-window relevant count."""
    if n < 1:
        raise ValueError("n must be >= 1")
    window = relevance[:n]
    precisions = []
    hits = 0
    for i, rel in enumerate(window):
        if rel:
            hits += 1
            precisions.append(hits / (i + 1))
    if not precisions:
        return 0.0
    return sum(precisions) / len(precisions)


def dcg_at_n(grades, n: int) -> float:
    return sum(
        (2**g - 1) / math.log2(i + 2) for i, g in enumerate(grades[:n])
    )


def ndcg_at_n(grades, idcg: float, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if idcg <= 0:
        raise ValueError("idcg must be positive")
    return min(max(dcg_at_n(grades, n) / idcg, 0.0), 1.0)


# --- graded judgments --------------------------------------------------------


@dataclass
class QueryJudgment:
    query: str
    ideal_grades: list[tuple[str, int]]  # (author_id, grade), grade descending
    idcg_at_10: float
    usable: bool = True

    def grade_of(self, author_id: str) -> int:
        for aid, grade in self.ideal_grades:
            if aid == author_id:
                return grade
        return 0

    def relevant_ids(self) -> set[str]:
        return {aid for aid, _ in self.ideal_grades}


def _paper_matches_query(paper, wanted: str) -> bool:
    return wanted in normalize_tag(paper.title + " " + paper.abstract)


def build_ideal_ranking(
    query: str,
    corpus: Corpus,
    relevance_mode: str = "exact",
    embeddings: dict[str, np.ndarray] | None = None,
    threshold: float = DEFAULT_APPROX_THRESHOLD,
) -> QueryJudgment:
    """Grade the query's relevant authors by a citation-count proxy.

    The proxy is the citation sum over the author's query-matching papers;
    quartile rank maps to grades 3..0, with zero-proxy authors pinned to 0.
    """
    wanted = normalize_tag(query)
    relevant = []
    for aid in sorted(corpus.authors):
        author = corpus.authors[aid]
        if relevance_mode == "exact":
            hit = is_relevant_exact(author, query)
        elif relevance_mode == "approx":
            if embeddings is None:
                raise ValidationError("approx mode needs an embedding lookup")
            query_emb = embeddings.get(wanted)
            tag_embs = [embeddings[t] for t in author.tags if t in embeddings]
            hit = query_emb is not None and is_relevant_approx(query_emb, tag_embs, threshold)
        else:
            raise ValueError(f"unknown relevance mode {relevance_mode!r}")
        if hit:
            proxy = sum(
                corpus.papers[pid].n_citations
                for pid in author.paper_ids
                if _paper_matches_query(corpus.papers[pid], wanted)
            )
            relevant.append((aid, proxy))

    if not relevant:
        return QueryJudgment(query=query, ideal_grades=[], idcg_at_10=0.0, usable=False)

    relevant.sort(key=lambda ap: (-ap[1], ap[0]))
    m = len(relevant)
    graded = []
    for rank, (aid, proxy) in enumerate(relevant):
        if proxy == 0:
            grade = 0
        else:
            grade = max(0, min(MAX_GRADE, MAX_GRADE - (rank * 4) // m))
        graded.append((aid, grade, proxy))
    graded.sort(key=lambda agp: (-agp[1], -agp[2], agp[0]))
    ideal = [(aid, grade) for aid, grade, _ in graded]
    idcg = dcg_at_n([grade for _, grade in ideal], 10)
    return QueryJudgment(query=query, ideal_grades=ideal, idcg_at_10=idcg)


def write_judgments(path, judgments: list[QueryJudgment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for j in judgments:
            obj = {
                "query": j.query,
                "ideal": [{"author": aid, "grade": grade} for aid, grade in j.ideal_grades],
                "idcg10": j.idcg_at_10,
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_judgments(path) -> dict[str, QueryJudgment]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            ideal = [(e["author"], int(e["grade"])) for e in obj["ideal"]]
            out[obj["query"]] = QueryJudgment(
                query=obj["query"],
                ideal_grades=ideal,
                idcg_at_10=float(obj["idcg10"]),
                usable=bool(ideal),
            )
    return out


# --- run evaluation ----------------------------------------------------------


@dataclass
class MetricsReport:
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    n_queries: int = 0
    n_zero_relevant: int = 0
    embedder_note: str = ""

    def to_json(self) -> str:
        payload = {
            "n_queries": self.n_queries,
            "n_zero_relevant": self.n_zero_relevant,
            "embedder": self.embedder_note,
            "means": self.means,
            "per_query": self.per_query,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)

    def to_table(self) -> str:
        lines = [f"{'metric':<18} mean"]
        for name in sorted(self.means):
            lines.append(f"{name:<18} {self.means[name]:.4f}")
        lines.append(
            f"queries: {self.n_queries} (zero-relevant: {self.n_zero_relevant})"
        )
        return "\n".join(lines)


def _metrics_for(relevance, grades, judgment, cutoffs):
    values = {}
    for n in cutoffs:
        values[f"mrr@{n}"] = reciprocal_rank(relevance[:n])
        values[f"mp@{n}"] = precision_at_n(relevance, n)
    values["map@10"] = average_precision_at_n(relevance, 10)
    ideal = [g for _, g in judgment.ideal_grades]
    # idcg@10 is stored precomputed; other cutoffs rederive from the ideal list
    for n in (5, 10):
        idcg = judgment.idcg_at_10 if n == 10 else dcg_at_n(ideal, n)
        values[f"ndcg@{n}"] = ndcg_at_n(grades, idcg, n) if idcg > 0 else 0.0
    return values


def evaluate_run(
    run: list[dict],
    judgments: dict[str, QueryJudgment],
    corpus: Corpus | None = None,
    cutoffs=(5, 10),
    embeddings: dict[str, np.ndarray] | None = None,
    threshold: float = DEFAULT_APPROX_THRESHOLD,
    embedder_note: str = "",
) -> MetricsReport:
    """Score a run file against judgments under both relevance modes.

    With a corpus, exact relevance uses author tags; otherwise membership in
    the judgment's ideal list stands in. Approximate relevance needs both a
    corpus and an embedding lookup keyed by normalized tag/query string, and
    falls back to the exact values when either is missing.
    """
    report = MetricsReport(embedder_note=embedder_note)
    accumulators: dict[str, list[float]] = {}
    for entry in run:
        query = entry["query"]
        judgment = judgments.get(query)
        if judgment is None:
            raise ValidationError(f"no judgment for query {query!r}")
        ranked_ids = [expert["id"] for expert in entry["experts"]]

        if corpus is not None:
            exact = [
                aid in corpus.authors and is_relevant_exact(corpus.authors[aid], query)
                for aid in ranked_ids
            ]
        else:
            relevant = judgment.relevant_ids()
            exact = [aid in relevant for aid in ranked_ids]

        if corpus is not None and embeddings is not None:
            query_emb = embeddings.get(normalize_tag(query))
            approx = []
            for aid in ranked_ids:
                if aid not in corpus.authors or query_emb is None:
                    approx.append(False)
                    continue
                tag_embs = [
                    embeddings[t] for t in corpus.authors[aid].tags if t in embeddings
                ]
                approx.append(is_relevant_approx(query_emb, tag_embs, threshold))
        else:
            approx = list(exact)

        grades = [judgment.grade_of(aid) for aid in ranked_ids]
        if not judgment.usable:
            report.n_zero_relevant += 1

        values = {}
        for name, value in _metrics_for(exact, grades, judgment, cutoffs).items():
            values[f"{name}_exact" if not name.startswith("ndcg") else name] = value
        for name, value in _metrics_for(approx, grades, judgment, cutoffs).items():
            if not name.startswith("ndcg"):
                values[f"{name}_approx"] = value
        report.per_query[query] = values
        for name, value in values.items():
            accumulators.setdefault(name, []).append(value)
        report.n_queries += 1

    report.means = {
        name: sum(vals) / len(vals) for name, vals in accumulators.items()
    }
    return report
