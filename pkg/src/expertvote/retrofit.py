"""Citation-graph retrofitting of paper embeddings.

Each pass pulls a paper's vector halfway toward the mean of its neighbours'
current vectors while staying anchored to the original vector. Updates are
applied in place (Gauss-Seidel style), so a fixed iteration order makes the
whole procedure deterministic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError


@dataclass
class CitationLexicon:
    """paper_id -> neighbour paper ids. Self-loops are dropped on build."""

    neighbors: dict[str, list[str]]

    def __post_init__(self):
        self.neighbors = {
            pid: [n for n in refs if n != pid] for pid, refs in self.neighbors.items()
        }

    @classmethod
    def from_corpus(cls, corpus, symmetrize: bool = False) -> "CitationLexicon":
        neighbors = {pid: list(p.references) for pid, p in corpus.papers.items()}
        if symmetrize:
            for pid, p in corpus.papers.items():
                for ref in p.references:
                    if ref in neighbors and pid not in neighbors[ref]:
                        neighbors[ref].append(pid)
        return cls(neighbors=neighbors)

    @classmethod
    def from_jsonl(cls, path) -> "CitationLexicon":
        neighbors = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    neighbors[obj["id"]] = list(obj["neighbors"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(f"bad lexicon record: {exc!r}", line=lineno) from exc
        return cls(neighbors=neighbors)


@dataclass
class RetrofitConfig:
    num_iter: int = 10
    iteration_order: list[str] | None = None  # default: lexicographic paper_id

    def __post_init__(self):
        if self.num_iter < 1:
            raise ValueError("num_iter must be >= 1")


def retrofit(
    original: dict[str, np.ndarray],
    lexicon: CitationLexicon,
    config: RetrofitConfig | None = None,
) -> dict[str, np.ndarray]:
    """Run the iterative update; papers absent from the lexicon pass through."""
    config = config or RetrofitConfig()
    dims = {vec.shape[0] for vec in original.values()}
    if len(dims) > 1:
        raise ValidationError("embeddings do not share one dimension")

    working = {pid: np.array(vec, dtype=np.float64, copy=True) for pid, vec in original.items()}
    order = config.iteration_order if config.iteration_order is not None else sorted(original)
    visit = [pid for pid in order if pid in working and pid in lexicon.neighbors]
    # Neighbour sets are resolved once; summation order is fixed for bit
    # reproducibility.
    resolved = {
        pid: sorted(set(lexicon.neighbors[pid]) & working.keys()) for pid in visit
    }

    for _ in range(config.num_iter):
        for pid in visit:
            neighbours = resolved[pid]
            n = len(neighbours)
            if n == 0:
                continue
            updated = n * original[pid].astype(np.float64)
            for q in neighbours:
                updated = updated + working[q]
            working[pid] = updated / (2 * n)
    return working


def retrofit_residual(
    original: dict[str, np.ndarray], retrofitted: dict[str, np.ndarray]
) -> dict[str, float]:
    """Per-paper L2 distance between the original and retrofitted vectors."""
    if original.keys() != retrofitted.keys():
        raise ValidationError("original and retrofitted key sets differ")
    return {
        pid: float(np.linalg.norm(retrofitted[pid] - original[pid]))
        for pid in original
    }
