"""Command line interface for the EMB1 exporter."""
import argparse
import sys

from .encoders import DEFAULT_MODEL
from .export import ExportJob, export_embeddings, export_query_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emb-export")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("papers", help="embed titles and abstract sentences")
    p.add_argument("--papers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--normalize", action="store_true")

    p = sub.add_parser("queries", help="embed a query file")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--normalize", action="store_true")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "papers":
            job = ExportJob(
                corpus=args.papers,
                output=args.out,
                model=args.model,
                batch_size=args.batch_size,
                normalize=args.normalize,
            )
            summary = export_embeddings(job)
        else:
            summary = export_query_embeddings(
                args.queries,
                args.out,
                model=args.model,
                batch_size=args.batch_size,
                normalize=args.normalize,
            )
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary.line())
    return 0


if __name__ == "__main__":
    sys.exit(main())
