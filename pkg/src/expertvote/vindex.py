"""Vector index: exact cosine search and an HNSW approximate backend.

Cosine similarity is implemented as an inner product over L2-normalized
vectors; normalization happens once at build time (and per query). Results
are totally ordered: score descending, then paper_id ascending.

The HNSW graph kernels are numba-compiled; distances inside the graph are
negated inner products, so smaller means more similar.
"""
from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .embedder import l2_normalize
from .errors import FormatError, ValidationError

VIDX_MAGIC = b"VIDX"
BACKEND_EXACT = "exact"
BACKEND_HNSW = "hnsw"
_BACKEND_TAGS = {BACKEND_EXACT: 0, BACKEND_HNSW: 1}


@dataclass(frozen=True)
class ScoredDocument:
    paper_id: str
    score: float


@dataclass(frozen=True)
class HnswParams:
    M: int = 32
    ef_construction: int = 200
    ef_search: int = 128
    seed: int = 0


def _ranked(ids, scores, n):
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [ScoredDocument(ids[i], float(scores[i])) for i in order[:n]]


class VectorIndex:
    """Immutable store of normalized paper vectors with top-N cosine search."""

    def __init__(self, ids, vectors, backend=BACKEND_EXACT, params=None, graph=None):
        self.ids: list[str] = ids
        self.vectors: np.ndarray = vectors
        self.backend = backend
        self.params = params or HnswParams()
        self._graph = graph  # _HnswGraph when backend == hnsw

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def build(embeddings: dict[str, np.ndarray], backend=BACKEND_EXACT, params=None) -> VectorIndex:
    """Normalize and insert all vectors; insertion order is lexicographic."""
    if not embeddings:
        raise ValidationError("cannot build an index from zero embeddings")
    if backend not in _BACKEND_TAGS:
        raise ValidationError(f"unknown backend {backend!r}")
    ids = sorted(embeddings)
    dims = {embeddings[pid].shape[0] for pid in ids}
    if len(dims) != 1:
        raise ValidationError("embeddings do not share one dimension")
    vectors = np.empty((len(ids), dims.pop()))
    for row, pid in enumerate(ids):
        try:
            vectors[row] = l2_normalize(np.asarray(embeddings[pid], dtype=np.float64))
        except ValidationError as exc:
            raise ValidationError(f"paper {pid!r}: {exc}") from exc
    params = params or HnswParams()
    graph = None
    if backend == BACKEND_HNSW:
        graph = _HnswGraph(vectors, params)
        for row in range(len(ids)):
            graph.insert(row)
    return VectorIndex(ids, vectors, backend=backend, params=params, graph=graph)


def search(index: VectorIndex, query: np.ndarray, n: int) -> list[ScoredDocument]:
    """Top-n documents by cosine similarity to the query."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise ValidationError(
            f"query dim {query.shape} does not match index dim {index.dim}"
        )
    q = l2_normalize(query)
    if index.backend == BACKEND_EXACT:
        scores = index.vectors @ q
        if n >= index.count:
            return _ranked(index.ids, scores, n)
        # preselect every row tied with or above the nth score, then apply
        # the full (-score, paper_id) ordering to that small subset only
        cutoff = np.partition(scores, index.count - n)[index.count - n]
        rows = np.flatnonzero(scores >= cutoff)
        ranked = sorted(rows, key=lambda r: (-scores[r], index.ids[r]))
        return [ScoredDocument(index.ids[r], float(scores[r])) for r in ranked[:n]]
    candidates = index._graph.search(q, max(index.params.ef_search, n))
    scores = index.vectors[candidates] @ q
    ranked = sorted(
        zip(candidates, scores), key=lambda cs: (-cs[1], index.ids[cs[0]])
    )
    return [ScoredDocument(index.ids[row], float(score)) for row, score in ranked[:n]]


def exact_oracle(embeddings: dict[str, np.ndarray], query, n: int) -> list[ScoredDocument]:
    """Independent full-scan reference: plain-Python cosine over all vectors."""
    if n < 0:
        raise ValueError("n must be >= 0")
    qnorm = math.sqrt(sum(float(x) * float(x) for x in query))
    if qnorm == 0.0:
        raise ValidationError("cannot normalize a zero query")
    scored = []
    for pid, vec in embeddings.items():
        vnorm = math.sqrt(sum(float(x) * float(x) for x in vec))
        if vnorm == 0.0:
            raise ValidationError(f"paper {pid!r}: zero vector")
        dot = sum(float(a) * float(b) for a, b in zip(vec, query))
        scored.append(ScoredDocument(pid, dot / (vnorm * qnorm)))
    scored.sort(key=lambda sd: (-sd.score, sd.paper_id))
    return scored[:n]


# --- numba kernels -----------------------------------------------------------


@njit(cache=True)
def _dot(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        total += a[i] * b[i]
    return total


@njit(cache=True)
def _heap_push(dists, ids, size, d, node):
    """Min-heap push over parallel arrays; returns the new size."""
    dists[size] = d
    ids[size] = node
    size += 1
    child = size - 1
    while child > 0:
        parent = (child - 1) // 2
        if dists[parent] <= dists[child]:
            break
        dists[parent], dists[child] = dists[child], dists[parent]
        ids[parent], ids[child] = ids[child], ids[parent]
        child = parent
    return size


@njit(cache=True)
def _heap_pop(dists, ids, size):
    size -= 1
    dists[0] = dists[size]
    ids[0] = ids[size]
    node = 0
    while True:
        left = 2 * node + 1
        right = left + 1
        smallest = node
        if left < size and dists[left] < dists[smallest]:
            smallest = left
        if right < size and dists[right] < dists[smallest]:
            smallest = right
        if smallest == node:
            break
        dists[node], dists[smallest] = dists[smallest], dists[node]
        ids[node], ids[smallest] = ids[smallest], ids[node]
        node = smallest
    return size


@njit(cache=True)
def _search_layer(vectors, adjacency, counts, entry_points, q, ef):
    """Best-first beam search within one layer.

    Returns (dists, rows) sorted by distance ascending, at most ef entries.
    The result heap stores negated distances so its root is the current
    worst kept result.
    """
    n = vectors.shape[0]
    visited = np.zeros(n, dtype=np.uint8)
    cand_d = np.empty(n + 1)
    cand_i = np.empty(n + 1, dtype=np.int32)
    cand_n = 0
    res_d = np.empty(ef + 1)
    res_i = np.empty(ef + 1, dtype=np.int32)
    res_n = 0

    for k in range(entry_points.shape[0]):
        e = entry_points[k]
        if visited[e]:
            continue
        visited[e] = 1
        d = -_dot(vectors[e], q)
        cand_n = _heap_push(cand_d, cand_i, cand_n, d, e)
        res_n = _heap_push(res_d, res_i, res_n, -d, e)
        if res_n > ef:
            res_n = _heap_pop(res_d, res_i, res_n)

    while cand_n > 0:
        d = cand_d[0]
        c = cand_i[0]
        cand_n = _heap_pop(cand_d, cand_i, cand_n)
        if res_n >= ef and d > -res_d[0]:
            break
        for j in range(counts[c]):
            e = adjacency[c, j]
            if visited[e]:
                continue
            visited[e] = 1
            de = -_dot(vectors[e], q)
            if res_n < ef or de < -res_d[0]:
                cand_n = _heap_push(cand_d, cand_i, cand_n, de, e)
                res_n = _heap_push(res_d, res_i, res_n, -de, e)
                if res_n > ef:
                    res_n = _heap_pop(res_d, res_i, res_n)

    out_d = np.empty(res_n)
    out_i = np.empty(res_n, dtype=np.int32)
    k = res_n - 1
    while res_n > 0:
        out_d[k] = -res_d[0]
        out_i[k] = res_i[0]
        res_n = _heap_pop(res_d, res_i, res_n)
        k -= 1
    return out_d, out_i


@njit(cache=True)
def _select_heuristic(vectors, cand_i, cand_d, m):
    """Keep candidates closer to the query than to any chosen neighbour;
    backfill with pruned candidates. Input must be sorted by distance."""
    total = cand_i.shape[0]
    chosen = np.empty(min(m, total), dtype=np.int32)
    chosen_n = 0
    pruned = np.empty(total, dtype=np.int32)
    pruned_n = 0
    for idx in range(total):
        if chosen_n >= m:
            break
        e = cand_i[idx]
        d = cand_d[idx]
        keep = True
        for j in range(chosen_n):
            if -_dot(vectors[e], vectors[chosen[j]]) < d:
                keep = False
                break
        if keep:
            chosen[chosen_n] = e
            chosen_n += 1
        else:
            pruned[pruned_n] = e
            pruned_n += 1
    for idx in range(pruned_n):
        if chosen_n >= m:
            break
        chosen[chosen_n] = pruned[idx]
        chosen_n += 1
    return chosen[:chosen_n].copy()


@njit(cache=True)
def _shrink(vectors, link_ids, owner, cap):
    """Re-select an over-full adjacency row around its owner vector."""
    k = link_ids.shape[0]
    dists = np.empty(k)
    for i in range(k):
        dists[i] = -_dot(vectors[link_ids[i]], vectors[owner])
    order = np.argsort(dists)
    return _select_heuristic(vectors, link_ids[order], dists[order], cap)


# --- HNSW graph --------------------------------------------------------------


class _HnswGraph:
    """Hierarchical navigable small-world graph over row indices."""

    def __init__(self, vectors: np.ndarray, params: HnswParams):
        self.vectors = np.ascontiguousarray(vectors)
        self.params = params
        self.m_l = 1.0 / math.log(params.M)
        self.rng = random.Random(params.seed)
        self.entry_point = -1
        self.max_level = -1
        self.node_levels = np.full(vectors.shape[0], -1, dtype=np.int32)
        # per level: (adjacency int32 (n, cap), counts int32 (n,))
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []

    def _cap(self, level: int) -> int:
        return self.params.M * 2 if level == 0 else self.params.M

    def _ensure_layers(self, level: int) -> None:
        n = self.vectors.shape[0]
        while len(self.layers) <= level:
            lc = len(self.layers)
            self.layers.append(
                (
                    np.zeros((n, self._cap(lc)), dtype=np.int32),
                    np.zeros(n, dtype=np.int32),
                )
            )

    def insert(self, row: int) -> None:
        level = int(-math.log(max(self.rng.random(), 1e-300)) * self.m_l)
        self.node_levels[row] = level
        self._ensure_layers(level)
        q = self.vectors[row]
        if self.entry_point < 0:
            self.entry_point = row
            self.max_level = level
            return

        ep = np.array([self.entry_point], dtype=np.int32)
        for lc in range(self.max_level, level, -1):
            adjacency, counts = self.layers[lc]
            _, rows = _search_layer(self.vectors, adjacency, counts, ep, q, 1)
            ep = rows[:1]
        for lc in range(min(level, self.max_level), -1, -1):
            adjacency, counts = self.layers[lc]
            found_d, found_i = _search_layer(
                self.vectors, adjacency, counts, ep, q, self.params.ef_construction
            )
            neighbours = _select_heuristic(self.vectors, found_i, found_d, self.params.M)
            adjacency[row, : len(neighbours)] = neighbours
            counts[row] = len(neighbours)
            cap = self._cap(lc)
            for nb in neighbours:
                cnt = counts[nb]
                if cnt < cap:
                    adjacency[nb, cnt] = row
                    counts[nb] = cnt + 1
                else:
                    merged = np.empty(cnt + 1, dtype=np.int32)
                    merged[:cnt] = adjacency[nb, :cnt]
                    merged[cnt] = row
                    pruned = _shrink(self.vectors, merged, nb, cap)
                    adjacency[nb, : len(pruned)] = pruned
                    counts[nb] = len(pruned)
            ep = found_i
        if level > self.max_level:
            self.max_level = level
            self.entry_point = row

    def search(self, q: np.ndarray, ef: int) -> np.ndarray:
        if self.entry_point < 0:
            return np.empty(0, dtype=np.int32)
        q = np.ascontiguousarray(q)
        ep = np.array([self.entry_point], dtype=np.int32)
        for lc in range(self.max_level, 0, -1):
            adjacency, counts = self.layers[lc]
            _, rows = _search_layer(self.vectors, adjacency, counts, ep, q, 1)
            ep = rows[:1]
        adjacency, counts = self.layers[0]
        _, rows = _search_layer(self.vectors, adjacency, counts, ep, q, ef)
        return rows


# --- persistence -------------------------------------------------------------

_HDR = struct.Struct("<4sBIQIIIq")
_U32 = struct.Struct("<I")
_U8 = struct.Struct("<B")


def save_index(index: VectorIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _HDR.pack(
                VIDX_MAGIC,
                _BACKEND_TAGS[index.backend],
                index.dim,
                index.count,
                index.params.M,
                index.params.ef_construction,
                index.params.ef_search,
                index.params.seed,
            )
        )
        for pid in index.ids:
            encoded = pid.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
        fh.write(index.vectors.astype("<f4").tobytes())
        if index.backend == BACKEND_HNSW:
            graph = index._graph
            fh.write(_U32.pack(graph.entry_point))
            fh.write(_U32.pack(graph.max_level + 1))
            for row in range(index.count):
                n_levels = graph.node_levels[row] + 1
                fh.write(_U8.pack(n_levels))
                for lc in range(n_levels):
                    adjacency, counts = graph.layers[lc]
                    cnt = int(counts[row])
                    fh.write(_U32.pack(cnt))
                    fh.write(adjacency[row, :cnt].astype("<u4").tobytes())


def load_index(path) -> VectorIndex:
    with open(path, "rb") as fh:
        header = fh.read(_HDR.size)
        if len(header) < _HDR.size:
            raise FormatError("truncated header", offset=0)
        magic, tag, dim, count, m, efc, efs, seed = _HDR.unpack(header)
        if magic != VIDX_MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0)
        backend = {v: k for k, v in _BACKEND_TAGS.items()}.get(tag)
        if backend is None:
            raise FormatError(f"unknown backend tag {tag}")
        params = HnswParams(M=m, ef_construction=efc, ef_search=efs, seed=seed)
        ids = []
        for _ in range(count):
            (id_len,) = _U32.unpack(fh.read(_U32.size))
            ids.append(fh.read(id_len).decode("utf-8"))
        raw = fh.read(4 * dim * count)
        if len(raw) < 4 * dim * count:
            raise FormatError("truncated vector block")
        vectors = (
            np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(count, dim)
        )
        graph = None
        if backend == BACKEND_HNSW:
            graph = _HnswGraph(vectors, params)
            (graph.entry_point,) = _U32.unpack(fh.read(_U32.size))
            (n_levels,) = _U32.unpack(fh.read(_U32.size))
            graph.max_level = n_levels - 1
            graph._ensure_layers(graph.max_level)
            for row in range(count):
                (levels,) = _U8.unpack(fh.read(_U8.size))
                graph.node_levels[row] = levels - 1
                for lc in range(levels):
                    (n_links,) = _U32.unpack(fh.read(_U32.size))
                    links = np.frombuffer(fh.read(4 * n_links), dtype="<u4")
                    adjacency, counts = graph.layers[lc]
                    adjacency[row, :n_links] = links.astype(np.int32)
                    counts[row] = n_links
        return VectorIndex(ids, vectors, backend=backend, params=params, graph=graph)
