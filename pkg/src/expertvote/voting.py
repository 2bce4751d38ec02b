"""Weighted ExpCombSUM voting: document scores -> ranked expert authors.

Every retrieved document casts a vote of w * e^score for each of its
authors, where w depends on the author's position in the author list.
Optional candidate-length normalization rescales the aggregate by
log2(1 + alpha * aL / (lP + beta)).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ValidationError
from .vindex import ScoredDocument, search

WEIGHTING_KINDS = ("binary", "uniform", "descending", "parabolic")


@dataclass(frozen=True)
class WeightingStrategy:
    kind: str = "binary"
    descending_start: float = 0.8
    descending_step: float = 0.2
    floor: float = 0.2

    def __post_init__(self):
        if self.kind not in WEIGHTING_KINDS:
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if not (0.0 < self.floor <= self.descending_start <= 1.0):
            raise ValueError("need 0 < floor <= descending_start <= 1")


@dataclass(frozen=True)
class NormalizationParams:
    enabled: bool = False
    alpha: float = 1.0
    beta: float = 0.0
    avg_publications: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


@dataclass(frozen=True)
class Evidence:
    paper_id: str
    doc_score: float
    weight: float


@dataclass
class ExpertEntry:
    author_id: str
    score: float
    evidence: list[Evidence] = field(default_factory=list)


@dataclass
class ExpertRanking:
    entries: list[ExpertEntry] = field(default_factory=list)


def author_weight(position: int, n_authors: int, strategy: WeightingStrategy) -> float:
    """Vote weight for one author slot; always in (0, 1]."""
    if not 1 <= position <= n_authors:
        raise ValueError(f"position {position} out of range 1..{n_authors}")
    if strategy.kind == "binary":
        return 1.0
    if strategy.kind == "uniform":
        return 1.0 / n_authors
    if position == 1:
        return 1.0
    if strategy.kind == "parabolic" and position == n_authors:
        return 1.0
    decayed = strategy.descending_start - strategy.descending_step * (position - 2)
    return max(strategy.floor, decayed)


def exp_comb_sum(
    retrieved: list[ScoredDocument], corpus, strategy: WeightingStrategy
) -> ExpertRanking:
    """Aggregate weighted e^score votes per author over the retrieved set."""
    scores: dict[str, float] = {}
    evidence: dict[str, list[Evidence]] = {}
    for doc in retrieved:
        paper = corpus.papers.get(doc.paper_id)
        if paper is None:
            raise ValidationError(f"retrieved paper {doc.paper_id!r} not in corpus")
        n_authors = len(paper.authors)
        for author_id, position in paper.authors:
            weight = author_weight(position, n_authors, strategy)
            scores[author_id] = scores.get(author_id, 0.0) + weight * math.exp(doc.score)
            evidence.setdefault(author_id, []).append(
                Evidence(doc.paper_id, doc.score, weight)
            )
    entries = [
        ExpertEntry(author_id, scores[author_id], evidence[author_id])
        for author_id in scores
    ]
    entries.sort(key=lambda e: (-e.score, e.author_id))
    return ExpertRanking(entries=entries)


def normalize_score(score: float, profile_len: int, params: NormalizationParams) -> float:
    """Candidate-length normalization multiplier applied to an author score."""
    denominator = profile_len + params.beta
    if denominator <= 0:
        raise ValueError("profile_len + beta must be > 0")
    return score * math.log2(1.0 + params.alpha * params.avg_publications / denominator)


def rank_experts(
    query_embedding,
    index,
    corpus,
    strategy: WeightingStrategy,
    norm_params: NormalizationParams | None = None,
    n_docs: int = 100,
    n_experts: int = 10,
) -> ExpertRanking:
    """Full query path: retrieve, vote, normalize, truncate."""
    retrieved = search(index, query_embedding, n_docs)
    ranking = exp_comb_sum(retrieved, corpus, strategy)
    if norm_params is not None and norm_params.enabled:
        for entry in ranking.entries:
            profile_len = corpus.authors[entry.author_id].n_pubs
            entry.score = normalize_score(entry.score, profile_len, norm_params)
        ranking.entries.sort(key=lambda e: (-e.score, e.author_id))
    ranking.entries = ranking.entries[:n_experts]
    return ranking


# --- run-file output (consumed by evaluation) --------------------------------


def ranking_to_dict(query: str, ranking: ExpertRanking) -> dict:
    return {
        "query": query,
        "experts": [
            {
                "id": entry.author_id,
                "score": entry.score,
                "evidence": [
                    {"paper": ev.paper_id, "doc_score": ev.doc_score, "weight": ev.weight}
                    for ev in entry.evidence
                ],
            }
            for entry in ranking.entries
        ],
    }


def write_run(path, results: list[tuple[str, ExpertRanking]]) -> None:
    """JSONL run file: one {"query", "experts"} object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for query, ranking in results:
            fh.write(
                json.dumps(ranking_to_dict(query, ranking), ensure_ascii=False, sort_keys=True)
                + "\n"
            )


def read_run(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
