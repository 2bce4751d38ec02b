"""CLI entry points and the JSON-over-HTTP expert-search service."""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass

import numpy as np
import tomli

from . import corpus as corpus_mod
from . import embedder as embedder_mod
from . import evaluation as evaluation_mod
from . import retrofit as retrofit_mod
from . import vindex as vindex_mod
from . import voting as voting_mod
from .errors import ExpertVoteError, ValidationError

ENV_PREFIX = "EXPERTVOTE_"
EMBEDDER_KINDS = ("merge", "separate", "pooled", "lsi")


@dataclass
class EngineConfig:
    papers: str = ""
    authors: str = ""
    stopwords: str = ""          # optional stopword list; else top-100 corpus tokens
    embedder: str = "lsi"        # merge | separate | pooled | lsi
    embeddings: str = ""         # EMB1 sentence embeddings for contextual kinds
    paper_embeddings: str = ""   # precomputed per-paper EMB1 (skips the strategy)
    query_embeddings: str = ""   # EMB1 sidecar mapping query strings to vectors
    lsi_model: str = ""          # fitted LSI model (.npz); else fit in-process
    index: str = ""              # prebuilt VIDX file; else build from embeddings
    lexicon: str = ""            # lexicon.jsonl override for retrofitting
    retrofit: bool = False
    retrofit_iterations: int = 10
    backend: str = "exact"       # exact | hnsw
    hnsw_m: int = 32
    hnsw_ef_construction: int = 200
    hnsw_ef_search: int = 128
    hnsw_seed: int = 0
    weighting: str = "binary"
    normalize: bool = False
    alpha: float = 1.0
    beta: float = 0.0
    docs: int = 100
    experts: int = 10
    max_experts: int = 100
    approx_threshold: float = 0.7
    lsi_k: int = 768

    def validate(self) -> None:
        if self.embedder not in EMBEDDER_KINDS:
            raise ValidationError(f"unknown embedder kind {self.embedder!r}")
        if self.backend not in (vindex_mod.BACKEND_EXACT, vindex_mod.BACKEND_HNSW):
            raise ValidationError(f"unknown index backend {self.backend!r}")
        if self.weighting not in voting_mod.WEIGHTING_KINDS:
            raise ValidationError(f"unknown weighting {self.weighting!r}")
        if self.docs < 0 or self.experts < 0 or self.max_experts < 1:
            raise ValidationError("docs/experts out of range")
        if not 0.0 < self.approx_threshold <= 1.0:
            raise ValidationError("approx_threshold must be in (0, 1]")
        for path_field in ("papers", "authors", "stopwords", "embeddings",
                           "paper_embeddings", "query_embeddings", "lsi_model",
                           "index", "lexicon"):
            path = getattr(self, path_field)
            if path and not os.path.exists(path):
                raise ValidationError(f"{path_field} file not found: {path}")


def load_config(path) -> EngineConfig:
    """Read a TOML config; EXPERTVOTE_<FIELD> environment variables override."""
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    config = EngineConfig()
    fields = {f.name: f for f in dataclasses.fields(EngineConfig)}
    for key, value in raw.items():
        if key not in fields:
            raise ValidationError(f"unknown config key {key!r}")
        setattr(config, key, value)
    for name, f in fields.items():
        env = os.environ.get(ENV_PREFIX + name.upper())
        if env is None:
            continue
        if f.type in ("bool", bool):
            setattr(config, name, env.lower() in ("1", "true", "yes", "on"))
        elif f.type in ("int", int):
            setattr(config, name, int(env))
        elif f.type in ("float", float):
            setattr(config, name, float(env))
        else:
            setattr(config, name, env)
    config.validate()
    return config


_STRATEGIES = {
    "merge": embedder_mod.embed_merge,
    "separate": embedder_mod.embed_separate,
    # Pooled sentence records arrive pre-averaged per sentence; the second
    # pooling stage is numerically the merge mean over all records.
    "pooled": embedder_mod.embed_merge,
}


def compute_paper_embeddings(config: EngineConfig, corpus, stopwords, lsi_model=None):
    """One vector per corpus paper, per the configured embedder kind."""
    if config.embedder == "lsi":
        ids = sorted(corpus.papers)
        documents = [
            corpus_mod.clean_text(
                corpus.papers[pid].title + " " + corpus.papers[pid].abstract, stopwords
            )
            for pid in ids
        ]
        if lsi_model is None:
            lsi_model = embedder_mod.lsi_fit(documents, config.lsi_k)
        vectors = {
            pid: embedder_mod.lsi_embed(lsi_model, doc)
            for pid, doc in zip(ids, documents)
        }
        return vectors, lsi_model
    if not config.embeddings:
        raise ValidationError(
            f"embedder kind {config.embedder!r} needs an EMB1 embeddings file"
        )
    groups = embedder_mod.load_sentence_embeddings(config.embeddings)
    strategy = _STRATEGIES[config.embedder]
    vectors = {
        pid: strategy(groups[pid]) for pid in sorted(groups) if pid in corpus.papers
    }
    if not vectors:
        raise ValidationError("no embedded papers intersect the corpus")
    return vectors, None


class Engine:
    """Immutable query engine: corpus + index + query-embedding path."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.corpus = corpus_mod.load_corpus(config.papers, config.authors)
        if config.stopwords:
            self.stopwords = corpus_mod.load_stopwords(config.stopwords)
        else:
            self.stopwords = frozenset(corpus_mod.corpus_stopwords(self.corpus))

        self.lsi_model = None
        if config.lsi_model:
            self.lsi_model = embedder_mod.load_lsi_model(config.lsi_model)

        if config.index:
            self.index = vindex_mod.load_index(config.index)
            if config.embedder == "lsi" and self.lsi_model is None:
                _, self.lsi_model = compute_paper_embeddings(
                    config, self.corpus, self.stopwords
                )
        else:
            if config.paper_embeddings:
                embeddings = embedder_mod.load_paper_embeddings(config.paper_embeddings)
                if config.embedder == "lsi" and self.lsi_model is None:
                    _, self.lsi_model = compute_paper_embeddings(
                        config, self.corpus, self.stopwords
                    )
            else:
                embeddings, fitted = compute_paper_embeddings(
                    config, self.corpus, self.stopwords, self.lsi_model
                )
                if fitted is not None:
                    self.lsi_model = fitted
                if config.retrofit:
                    embeddings = self._retrofit(embeddings)
            params = vindex_mod.HnswParams(
                M=config.hnsw_m,
                ef_construction=config.hnsw_ef_construction,
                ef_search=config.hnsw_ef_search,
                seed=config.hnsw_seed,
            )
            self.index = vindex_mod.build(embeddings, backend=config.backend, params=params)

        self.query_vectors = {}
        if config.query_embeddings:
            self.query_vectors = embedder_mod.load_paper_embeddings(config.query_embeddings)

        self.strategy = voting_mod.WeightingStrategy(kind=config.weighting)
        self.norm_params = voting_mod.NormalizationParams(
            enabled=config.normalize,
            alpha=config.alpha,
            beta=config.beta,
            avg_publications=max(self.corpus.avg_publications, 1e-9),
        )

    def _retrofit(self, embeddings):
        if self.config.lexicon:
            lexicon = retrofit_mod.CitationLexicon.from_jsonl(self.config.lexicon)
        else:
            lexicon = retrofit_mod.CitationLexicon.from_corpus(self.corpus)
        return retrofit_mod.retrofit(
            embeddings,
            lexicon,
            retrofit_mod.RetrofitConfig(num_iter=self.config.retrofit_iterations),
        )

    def embed_query(self, text: str) -> np.ndarray:
        if self.config.embedder == "lsi":
            cleaned = corpus_mod.clean_text(text, self.stopwords)
            vec = embedder_mod.lsi_embed(self.lsi_model, cleaned)
            if not np.any(vec):
                raise ValidationError(f"query {text!r} has no in-vocabulary tokens")
            return vec
        vec = self.query_vectors.get(text)
        if vec is None:
            vec = self.query_vectors.get(corpus_mod.normalize_tag(text))
        if vec is None:
            raise ValidationError(
                f"no precomputed embedding for query {text!r}; "
                "contextual embedders need a query_embeddings sidecar"
            )
        return vec

    def search(self, query_text: str, n_experts: int | None = None) -> voting_mod.ExpertRanking:
        if n_experts is None:
            n_experts = self.config.experts
        return voting_mod.rank_experts(
            self.embed_query(query_text),
            self.index,
            self.corpus,
            self.strategy,
            self.norm_params,
            n_docs=self.config.docs,
            n_experts=n_experts,
        )


# --- HTTP service ------------------------------------------------------------


def create_app(engine: Engine | None, max_n: int | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import PlainTextResponse

    app = FastAPI(title="expertvote")
    limit = max_n or (engine.config.max_experts if engine else 100)

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.get("/experts")
    def experts(q: str | None = None, n: int | None = None):
        if engine is None:
            raise HTTPException(status_code=503, detail="index not ready")
        if q is None:
            raise HTTPException(status_code=400, detail="missing query parameter q")
        if n is None:
            n = engine.config.experts
        if n < 0 or n > limit:
            raise HTTPException(status_code=400, detail=f"n must be in 0..{limit}")
        try:
            ranking = engine.search(q, n_experts=n)
        except ExpertVoteError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        payload = []
        for entry in ranking.entries:
            author = engine.corpus.authors[entry.author_id]
            payload.append(
                {
                    "id": entry.author_id,
                    "name": author.name,
                    "score": entry.score,
                    "papers": [
                        {
                            "id": ev.paper_id,
                            "title": engine.corpus.papers[ev.paper_id].title,
                            "doc_score": ev.doc_score,
                        }
                        for ev in entry.evidence
                    ],
                }
            )
        return {"query": q, "experts": payload}

    return app


# --- CLI ---------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    corpus = corpus_mod.load_corpus(args.papers, args.authors)
    os.makedirs(args.out, exist_ok=True)
    stopwords = corpus_mod.corpus_stopwords(corpus)
    stopwords_path = os.path.join(args.out, "stopwords.txt")
    with open(stopwords_path, "w", encoding="utf-8") as fh:
        for token in stopwords:
            fh.write(token + "\n")
    print(
        f"ingest papers={len(corpus.papers)} authors={len(corpus.authors)} "
        f"dropped_author_links={corpus.dropped_author_links} "
        f"avg_publications={corpus.avg_publications:.4f} stopwords={stopwords_path}"
    )
    return 0


def _cmd_embed(args) -> int:
    config = load_config(args.config)
    corpus = corpus_mod.load_corpus(config.papers, config.authors)
    stopwords = (
        corpus_mod.load_stopwords(config.stopwords)
        if config.stopwords
        else frozenset(corpus_mod.corpus_stopwords(corpus))
    )
    embeddings, lsi_model = compute_paper_embeddings(config, corpus, stopwords)
    embedder_mod.write_paper_embeddings(args.out, embeddings)
    if lsi_model is not None and args.model_out:
        embedder_mod.save_lsi_model(lsi_model, args.model_out)
    dim = len(next(iter(embeddings.values())))
    print(f"embed kind={config.embedder} papers={len(embeddings)} dim={dim} out={args.out}")
    return 0


def _cmd_retrofit(args) -> int:
    embeddings = embedder_mod.load_paper_embeddings(args.embeddings)
    if args.lexicon:
        lexicon = retrofit_mod.CitationLexicon.from_jsonl(args.lexicon)
    else:
        corpus = corpus_mod.load_corpus(args.papers, args.authors)
        lexicon = retrofit_mod.CitationLexicon.from_corpus(corpus)
    result = retrofit_mod.retrofit(
        embeddings, lexicon, retrofit_mod.RetrofitConfig(num_iter=args.iterations)
    )
    embedder_mod.write_paper_embeddings(args.out, result)
    residuals = retrofit_mod.retrofit_residual(embeddings, result)
    moved = sum(1 for r in residuals.values() if r > 0)
    print(f"retrofit papers={len(result)} moved={moved} iterations={args.iterations} out={args.out}")
    return 0


def _cmd_index(args) -> int:
    if not os.path.exists(args.embeddings):
        print(f"error: embeddings file not found: {args.embeddings}", file=sys.stderr)
        return 2
    embeddings = embedder_mod.load_paper_embeddings(args.embeddings)
    params = vindex_mod.HnswParams(
        M=args.m, ef_construction=args.ef_construction, ef_search=args.ef_search
    )
    index = vindex_mod.build(embeddings, backend=args.backend, params=params)
    vindex_mod.save_index(index, args.out)
    print(f"index backend={args.backend} count={index.count} dim={index.dim} out={args.out}")
    return 0


def _format_ranking(query, ranking, as_json):
    if as_json:
        import json

        return json.dumps(
            voting_mod.ranking_to_dict(query, ranking), ensure_ascii=False, sort_keys=True
        )
    lines = [f"# query: {query}"]
    for rank, entry in enumerate(ranking.entries, start=1):
        lines.append(f"{rank:>3}  {entry.author_id:<24} {entry.score:.6f}")
    return "\n".join(lines)


def _cmd_search(args) -> int:
    config = load_config(args.config)
    engine = Engine(config)
    n = args.experts if args.experts is not None else config.experts
    if args.queries:
        with open(args.queries, "r", encoding="utf-8") as fh:
            queries = [line.strip() for line in fh if line.strip()]
        results = [(q, engine.search(q, n_experts=n)) for q in queries]
        if not args.out:
            print("error: --queries needs --out for the run file", file=sys.stderr)
            return 2
        voting_mod.write_run(args.out, results)
        print(f"search queries={len(results)} experts={n} out={args.out}")
        return 0
    if not args.query:
        print("error: provide --query or --queries", file=sys.stderr)
        return 2
    ranking = engine.search(args.query, n_experts=n)
    print(_format_ranking(args.query, ranking, args.json))
    return 0


def _cmd_eval(args) -> int:
    run = voting_mod.read_run(args.run)
    judgments = evaluation_mod.read_judgments(args.judgments)
    corpus = None
    embeddings = None
    if args.papers and args.authors:
        corpus = corpus_mod.load_corpus(args.papers, args.authors)
    if args.tag_embeddings:
        embeddings = embedder_mod.load_paper_embeddings(args.tag_embeddings)
    report = evaluation_mod.evaluate_run(
        run,
        judgments,
        corpus=corpus,
        embeddings=embeddings,
        threshold=args.threshold,
    )
    print(report.to_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    config = load_config(args.config)
    engine = Engine(config)
    app = create_app(engine)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expertvote")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, validate and profile a corpus")
    p.add_argument("--papers", required=True)
    p.add_argument("--authors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("embed", help="compute per-paper embeddings")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", default="")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("retrofit", help="retrofit embeddings over the citation graph")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--papers")
    p.add_argument("--authors")
    p.add_argument("--lexicon")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_retrofit)

    p = sub.add_parser("index", help="build and persist a vector index")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--backend", choices=("exact", "hnsw"), default="exact")
    p.add_argument("--m", type=int, default=32)
    p.add_argument("--ef-construction", type=int, default=200)
    p.add_argument("--ef-search", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("search", help="rank experts for one query or a query file")
    p.add_argument("--config", required=True)
    p.add_argument("--query")
    p.add_argument("--queries")
    p.add_argument("--experts", type=int)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("eval", help="score a run file against judgments")
    p.add_argument("--run", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--papers")
    p.add_argument("--authors")
    p.add_argument("--tag-embeddings")
    p.add_argument("--threshold", type=float, default=evaluation_mod.DEFAULT_APPROX_THRESHOLD)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the JSON query service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExpertVoteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
