"""Paper/author corpus: loading, validation, text cleaning and sampling.

The corpus is the canonical data model for the whole engine. It is loaded
from two JSONL files (papers.jsonl, authors.jsonl), linked in both
directions (paper -> authors and author -> papers) and immutable afterwards.
"""
from __future__ import annotations

import json
import random
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

# Publication-count strata: [5, 10), [10, 50), [50, 100), [100, inf).
# Authors below 5 publications are not sampled but stay in the corpus.
SAMPLING_BINS = ((5, 10), (10, 50), (50, 100), (100, None))


@dataclass
class PaperRecord:
    """One paper: metadata plus authorship and citation links."""

    paper_id: str
    title: str
    abstract: str
    authors: list[tuple[str, int]]  # (author_id, 1-based position)
    references: list[str]
    n_citations: int = 0

    def validate(self) -> None:
        if not self.paper_id:
            raise ValidationError("empty paper_id")
        positions = sorted(pos for _, pos in self.authors)
        if positions != list(range(1, len(self.authors) + 1)):
            raise ValidationError(
                f"paper {self.paper_id}: author positions {positions} are not 1..{len(self.authors)}"
            )
        if self.paper_id in self.references:
            raise ValidationError(f"paper {self.paper_id} references itself")
        if self.n_citations < 0:
            raise ValidationError(f"paper {self.paper_id}: negative n_citations")


@dataclass
class AuthorRecord:
    """One candidate expert. n_pubs is the profile length used by
    candidate-length normalization; it is recomputed from links at load."""

    author_id: str
    name: str
    tags: list[str] = field(default_factory=list)
    paper_ids: list[str] = field(default_factory=list)
    n_pubs: int = 0


@dataclass
class Corpus:
    papers: dict[str, PaperRecord]
    authors: dict[str, AuthorRecord]
    avg_publications: float = 0.0
    dropped_author_links: int = 0

    def relink(self) -> None:
        """Rebuild author->paper links and profile stats from the papers."""
        for author in self.authors.values():
            author.paper_ids = []
        for pid in sorted(self.papers):
            for author_id, _pos in self.papers[pid].authors:
                self.authors[author_id].paper_ids.append(pid)
        for author in self.authors.values():
            author.n_pubs = len(author.paper_ids)
        if self.authors:
            self.avg_publications = sum(
                a.n_pubs for a in self.authors.values()
            ) / len(self.authors)
        else:
            self.avg_publications = 0.0


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=lineno) from exc


def load_corpus(papers_path, authors_path) -> Corpus:
    """Load and link a corpus from the two JSONL files.

    Author references in papers that do not resolve against the authors file
    are dropped (counted in `dropped_author_links`); positions of the
    remaining authors are re-compacted to stay gapless.
    """
    authors: dict[str, AuthorRecord] = {}
    for lineno, obj in _read_jsonl(authors_path):
        try:
            rec = AuthorRecord(
                author_id=obj["id"],
                name=obj.get("name", ""),
                tags=[normalize_tag(t) for t in obj.get("tags", [])],
                n_pubs=int(obj.get("n_pubs", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad author record: {exc!r}", line=lineno) from exc
        if rec.author_id in authors:
            raise ValidationError(f"duplicate author_id {rec.author_id!r}")
        authors[rec.author_id] = rec

    papers: dict[str, PaperRecord] = {}
    dropped = 0
    for lineno, obj in _read_jsonl(papers_path):
        try:
            raw_authors = [(a["id"], int(a["position"])) for a in obj.get("authors", [])]
            rec = PaperRecord(
                paper_id=obj["id"],
                title=obj.get("title", ""),
                abstract=obj.get("abstract", ""),
                authors=raw_authors,
                references=[r for r in obj.get("references", []) if r != obj["id"]],
                n_citations=int(obj.get("n_citations", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad paper record: {exc!r}", line=lineno) from exc
        if rec.paper_id in papers:
            raise ValidationError(f"duplicate paper_id {rec.paper_id!r}")
        kept = [(aid, pos) for aid, pos in sorted(rec.authors, key=lambda ap: ap[1]) if aid in authors]
        dropped += len(rec.authors) - len(kept)
        rec.authors = [(aid, i + 1) for i, (aid, _) in enumerate(kept)]
        rec.validate()
        papers[rec.paper_id] = rec

    corpus = Corpus(papers=papers, authors=authors, dropped_author_links=dropped)
    corpus.relink()
    return corpus


def save_corpus(corpus: Corpus, papers_path, authors_path) -> None:
    """Serialize a corpus back to the JSONL interchange files."""
    with open(papers_path, "w", encoding="utf-8") as fh:
        for pid in sorted(corpus.papers):
            p = corpus.papers[pid]
            obj = {
                "id": p.paper_id,
                "title": p.title,
                "abstract": p.abstract,
                "authors": [
                    {"id": aid, "name": corpus.authors[aid].name, "position": pos}
                    for aid, pos in p.authors
                ],
                "references": p.references,
                "n_citations": p.n_citations,
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    with open(authors_path, "w", encoding="utf-8") as fh:
        for aid in sorted(corpus.authors):
            a = corpus.authors[aid]
            obj = {"id": a.author_id, "name": a.name, "tags": a.tags, "n_pubs": a.n_pubs}
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


# --- text cleaning -----------------------------------------------------------

_URL_TOKEN = re.compile(r"^(?:\w+://|www\.)", re.IGNORECASE)
_EMAIL_TOKEN = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_WS = re.compile(r"\s+")


def normalize_tag(tag: str) -> str:
    """Lowercase and collapse whitespace; used for tags and queries."""
    return _WS.sub(" ", tag.lower()).strip()


def _strip_accents(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def clean_text(raw: str, stopwords=frozenset()) -> str:
    """Lowercase, strip URLs/e-mails/stopwords, normalize Unicode and spacing."""
    # Lowercasing and decomposition can feed each other on exotic codepoints;
    # iterate to a fixpoint so cleaning is idempotent.
    text = raw
    for _ in range(4):
        canonical = _strip_accents(text.lower())
        if canonical == text:
            break
        text = canonical
    kept = []
    for token in text.split():
        if _URL_TOKEN.match(token) or _EMAIL_TOKEN.match(token):
            continue
        if token in stopwords:
            continue
        kept.append(token)
    return " ".join(kept)


_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Split on ./!/? followed by whitespace or end of text.

    Non-empty text without terminators comes back as a single sentence.
    """
    fragments = [frag.strip() for frag in _SENTENCE_BREAK.split(text)]
    return [frag for frag in fragments if frag]


def load_stopwords(path) -> frozenset[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def corpus_stopwords(corpus: Corpus, n: int = 100) -> list[str]:
    """The corpus's n most frequent tokens (ties broken alphabetically)."""
    counts: Counter[str] = Counter()
    for paper in corpus.papers.values():
        text = clean_text(paper.title + " " + paper.abstract)
        counts.update(text.split())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [token for token, _ in ranked[:n]]


# --- author sampling ---------------------------------------------------------


def eligible_authors(corpus: Corpus) -> list[AuthorRecord]:
    """Authors with at least one paper whose references resolve in-corpus."""
    out = []
    for aid in sorted(corpus.authors):
        author = corpus.authors[aid]
        for pid in author.paper_ids:
            if any(ref in corpus.papers for ref in corpus.papers[pid].references):
                out.append(author)
                break
    return out


def bin_allocation(bin_size: int, total: int, sample_size: int) -> int:
    """Proportionate allocation for one stratum, rounded down."""
    return bin_size * sample_size // total


def _bin_of(n_pubs: int):
    for lo, hi in SAMPLING_BINS:
        if n_pubs >= lo and (hi is None or n_pubs < hi):
            return (lo, hi)
    return None


def stratified_author_sample(authors, sample_size: int, seed: int) -> list[str]:
    """Sample author ids with proportionate allocation over publication strata.

    Allocation per bin is floored; any shortfall against sample_size is left
    unfilled. If the eligible population is no larger than sample_size, every
    binned author is returned.
    """
    if sample_size <= 0:
        raise ValueError("sample_size must be positive")
    bins: dict[tuple, list[str]] = {key: [] for key in SAMPLING_BINS}
    for author in authors:
        key = _bin_of(author.n_pubs)
        if key is not None:
            bins[key].append(author.author_id)
    total = sum(len(members) for members in bins.values())
    if total <= sample_size:
        return sorted(aid for members in bins.values() for aid in members)
    rng = random.Random(seed)
    sample: list[str] = []
    for key in SAMPLING_BINS:
        members = sorted(bins[key])
        take = bin_allocation(len(members), total, sample_size)
        sample.extend(rng.sample(members, take))
    return sample
