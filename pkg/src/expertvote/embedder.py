"""Paper embeddings: sentence-pooling strategies, LSI, and the EMB1 format.

Contextual sentence vectors are produced out of process (see the exporter
package) and arrive through the EMB1 binary file; this module combines them
into one vector per paper. The LSI baseline is fully in-process.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

EMB1_MAGIC = b"EMB1"
ROLE_TITLE = 0
ROLE_ABSTRACT = 1


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValidationError("cannot L2-normalize a zero or non-finite vector")
    return vec / norm


@dataclass
class SentenceEmbeddingSet:
    """Per-paper sentence vectors: one title vector plus the abstract's."""

    paper_id: str
    title_embedding: np.ndarray
    abstract_embeddings: list[np.ndarray]

    def check_dims(self) -> int:
        dim = self.title_embedding.shape[0]
        for emb in self.abstract_embeddings:
            if emb.shape[0] != dim:
                raise ValidationError(
                    f"paper {self.paper_id}: mixed embedding dimensions"
                )
        return dim


def embed_merge(s: SentenceEmbeddingSet) -> np.ndarray:
    """Merge strategy: plain mean over the title and every abstract sentence."""
    s.check_dims()
    stack = [s.title_embedding] + list(s.abstract_embeddings)
    return np.mean(stack, axis=0)


def embed_separate(s: SentenceEmbeddingSet) -> np.ndarray:
    """Separate strategy: mean of the title and the averaged abstract.

    The title keeps half the weight regardless of abstract length. Papers
    without abstract sentences fall back to the title vector.
    """
    s.check_dims()
    if not s.abstract_embeddings:
        return np.array(s.title_embedding, copy=True)
    abstract_avg = np.mean(s.abstract_embeddings, axis=0)
    return (s.title_embedding + abstract_avg) / 2.0


def pool_double(sentences: list[list[np.ndarray]]) -> np.ndarray:
    """Double pooling: token mean per sentence, then mean over sentences.

    The title is expected to be passed as one of the sentences.
    """
    if not sentences or any(len(tokens) == 0 for tokens in sentences):
        raise ValidationError("double pooling needs at least one token per sentence")
    dims = {tok.shape[0] for tokens in sentences for tok in tokens}
    if len(dims) != 1:
        raise ValidationError("mixed token embedding dimensions")
    sentence_means = [np.mean(tokens, axis=0) for tokens in sentences]
    return np.mean(sentence_means, axis=0)


# --- LSI baseline ------------------------------------------------------------


@dataclass
class LsiModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    projection: np.ndarray  # (vocab_size, k_effective), orthonormal columns
    k: int

    @property
    def dim(self) -> int:
        return self.projection.shape[1]


def _tf_row(model_vocab: dict[str, int], idf: np.ndarray, document: str) -> np.ndarray:
    row = np.zeros(len(model_vocab))
    for token in document.split():
        idx = model_vocab.get(token)
        if idx is not None:
            row[idx] += 1.0
    return row * idf


def lsi_fit(documents: list[str], k: int) -> LsiModel:
    """Fit TF-IDF + truncated SVD on cleaned documents.

    tf is the raw count, idf = ln(N / df). The effective dimension is
    clamped to the rank of the TF-IDF matrix.
    """
    if not documents:
        raise ValidationError("cannot fit LSI on an empty document list")
    if k < 1:
        raise ValueError("k must be >= 1")
    vocab_tokens = sorted({tok for doc in documents for tok in doc.split()})
    if not vocab_tokens:
        raise ValidationError("cannot fit LSI on an empty vocabulary")
    vocabulary = {tok: i for i, tok in enumerate(vocab_tokens)}

    n_docs = len(documents)
    counts = np.zeros((n_docs, len(vocabulary)))
    for row, doc in enumerate(documents):
        for token in doc.split():
            counts[row, vocabulary[token]] += 1.0
    df = np.count_nonzero(counts, axis=0).astype(float)
    idf = np.log(n_docs / np.maximum(df, 1.0))
    tfidf = counts * idf

    _, singular, vt = np.linalg.svd(tfidf, full_matrices=False)
    if singular.size and singular[0] > 0:
        rank = int(np.sum(singular > singular[0] * 1e-12))
    else:
        rank = 0
    effective = max(min(k, rank), 1) if rank else 1
    projection = vt[:effective].T
    return LsiModel(vocabulary=vocabulary, idf=idf, projection=projection, k=k)


def lsi_embed(model: LsiModel, document: str) -> np.ndarray:
    """Project one cleaned document into the fitted LSI space."""
    row = _tf_row(model.vocabulary, model.idf, document)
    return row @ model.projection


def save_lsi_model(model: LsiModel, path) -> None:
    tokens = sorted(model.vocabulary, key=model.vocabulary.get)
    np.savez(
        path,
        tokens=np.array(tokens, dtype=object),
        idf=model.idf,
        projection=model.projection,
        k=np.array([model.k]),
    )


def load_lsi_model(path) -> LsiModel:
    data = np.load(path, allow_pickle=True)
    tokens = list(data["tokens"])
    return LsiModel(
        vocabulary={tok: i for i, tok in enumerate(tokens)},
        idf=data["idf"],
        projection=data["projection"],
        k=int(data["k"][0]),
    )


# --- EMB1 binary sentence-embedding file -------------------------------------

_HEADER = struct.Struct("<4sI")
_REC_FIXED = struct.Struct("<BH")  # role, sentence_index (after the id)
_U32 = struct.Struct("<I")


def write_sentence_embeddings(path, dim: int, records) -> None:
    """Write EMB1 records: iterable of (paper_id, role, sentence_index, vector)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB1_MAGIC, dim))
        for paper_id, role, sentence_index, vector in records:
            vec = np.asarray(vector, dtype="<f4")
            if vec.shape != (dim,):
                raise ValidationError(
                    f"record for {paper_id!r} has dim {vec.shape}, expected ({dim},)"
                )
            encoded = paper_id.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_REC_FIXED.pack(role, sentence_index))
            fh.write(vec.tobytes())


def read_embedding_records(path):
    """Yield (paper_id, role, sentence_index, vector) from an EMB1 file."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError("truncated header", offset=0)
        magic, dim = _HEADER.unpack(header)
        if magic != EMB1_MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0)
        offset = _HEADER.size
        while True:
            head = fh.read(_U32.size)
            if not head:
                return
            if len(head) < _U32.size:
                raise FormatError("truncated record header", offset=offset)
            (id_len,) = _U32.unpack(head)
            body = fh.read(id_len + _REC_FIXED.size + 4 * dim)
            if len(body) < id_len + _REC_FIXED.size + 4 * dim:
                raise FormatError("truncated record", offset=offset)
            paper_id = body[:id_len].decode("utf-8")
            role, sentence_index = _REC_FIXED.unpack(
                body[id_len : id_len + _REC_FIXED.size]
            )
            if role not in (ROLE_TITLE, ROLE_ABSTRACT):
                raise FormatError(f"unknown role {role} for {paper_id!r}", offset=offset)
            vector = np.frombuffer(
                body[id_len + _REC_FIXED.size :], dtype="<f4"
            ).astype(np.float64)
            yield paper_id, role, sentence_index, vector
            offset += _U32.size + len(body)


def load_sentence_embeddings(path) -> dict[str, SentenceEmbeddingSet]:
    """Group an EMB1 file by paper; each paper needs exactly one title record."""
    titles: dict[str, np.ndarray] = {}
    abstracts: dict[str, list[tuple[int, np.ndarray]]] = {}
    for paper_id, role, sentence_index, vector in read_embedding_records(path):
        if role == ROLE_TITLE:
            if paper_id in titles:
                raise FormatError(f"duplicate title record for {paper_id!r}")
            titles[paper_id] = vector
        else:
            abstracts.setdefault(paper_id, []).append((sentence_index, vector))
    missing = sorted(set(abstracts) - set(titles))
    if missing:
        raise FormatError(f"missing title record for {missing[0]!r}")
    out = {}
    for paper_id, title_vec in titles.items():
        ordered = [vec for _, vec in sorted(abstracts.get(paper_id, []), key=lambda t: t[0])]
        out[paper_id] = SentenceEmbeddingSet(
            paper_id=paper_id,
            title_embedding=title_vec,
            abstract_embeddings=ordered,
        )
    return out


def load_paper_embeddings(path) -> dict[str, np.ndarray]:
    """Read a per-paper vector file (EMB1 with one title-role record each)."""
    return {
        pid: group.title_embedding
        for pid, group in load_sentence_embeddings(path).items()
    }


def write_paper_embeddings(path, embeddings: dict[str, np.ndarray]) -> None:
    if not embeddings:
        raise ValidationError("no embeddings to write")
    dim = len(next(iter(embeddings.values())))
    write_sentence_embeddings(
        path, dim, ((pid, ROLE_TITLE, 0, embeddings[pid]) for pid in sorted(embeddings))
    )
