"""Command-line entry points: ingest, simulate, report, export-triples, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ServiceConfig, load_config
from .errors import CascadeError, MalformedJsonl
from .jsonl import write_jsonl
from .knowledge import ingest_corpus
from .metrics import generate_reports
from .router import export_triples
from .simulation import (
    SessionLog,
    load_qa_dataset,
    read_session_logs,
    run_simulation,
    write_session_logs,
)


def _load_config(args) -> ServiceConfig:
    return load_config(args.config) if args.config else load_config()


def _cmd_ingest(args) -> int:
    config = _load_config(args)
    from .config import build_embedder

    embedder = build_embedder(config)

    def report_skip(lineno: int, message: str) -> None:
        print(f"warning: skipped malformed line {lineno}: {message}", file=sys.stderr)

    with open(args.corpus, "r", encoding="utf-8") as fh:
        kb = ingest_corpus(
            fh,
            embedder,
            lenient=args.lenient,
            on_error=report_skip if args.lenient else None,
        )
    snapshot_dir = Path(args.snapshot_dir)
    snapshot_dir.mkdir(parents=True, exist_ok=True)
    path = snapshot_dir / "knowledge_base.idx"
    path.write_bytes(kb.snapshot())
    print(f"ingested {len(kb)} passages -> {path}")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    sim = config.simulation
    overrides = {}
    if args.sessions is not None:
        overrides["n_sessions"] = args.sessions
    if args.queries is not None:
        overrides["queries_per_session"] = args.queries
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from dataclasses import replace

        sim = replace(sim, **overrides)

    dataset = load_qa_dataset(args.dataset, lenient=args.lenient)
    from .config import build_backend, build_embedder
    from .knowledge import MainKnowledgeBase
    from .router import CascadeRouter
    from .simulation import dataset_to_corpus

    embedder = build_embedder(config)
    kb = MainKnowledgeBase()
    corpus_lines = (json.dumps(row) for row in dataset_to_corpus(dataset))
    ingest_corpus(corpus_lines, embedder, kb=kb)
    router = CascadeRouter(
        embedder=embedder,
        backend=build_backend(config),
        knowledge_base=kb,
        config=config.router,
    )
    logs = run_simulation(sim, router, dataset)
    paths = write_session_logs(logs, args.out_dir)
    total = sum(len(log.events) for log in logs)
    print(f"wrote {len(paths)} session logs ({total} events) -> {args.out_dir}")
    return 0


def _cmd_report(args) -> int:
    config = _load_config(args)
    logs = read_session_logs(args.log_dir)
    if not logs:
        print(f"error: no session_*.jsonl files in {args.log_dir}", file=sys.stderr)
        return 2
    paths = generate_reports(logs, args.out_dir, cost_model=config.cost_model)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_export_triples(args) -> int:
    log = SessionLog.read(args.log)
    count = write_jsonl(args.out, (t.to_dict() for t in export_triples(log.events)))
    print(f"exported {count} triples -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    config = _load_config(args)
    from .service import serve

    serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragcascade",
        description="Five-layer query-routing cascade: ingest, simulate, report, serve.",
    )
    parser.add_argument("--config", help="YAML configuration file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="embed a JSONL corpus and snapshot the knowledge base")
    p_ingest.add_argument("--corpus", required=True, help="JSONL passages: {id, text, source[, answer]}")
    p_ingest.add_argument("--snapshot-dir", required=True)
    p_ingest.add_argument(
        "--lenient", action="store_true", help="skip malformed lines instead of failing"
    )
    p_ingest.set_defaults(func=_cmd_ingest)

    p_sim = sub.add_parser("simulate", help="run the multi-session runtime simulation")
    p_sim.add_argument("--dataset", required=True, help="JSONL rows: {question, answer, context}")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--sessions", type=int, default=None)
    p_sim.add_argument("--queries", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--lenient", action="store_true")
    p_sim.set_defaults(func=_cmd_simulate)

    p_report = sub.add_parser("report", help="emit warmup/boxplot/usage CSVs and summary JSON")
    p_report.add_argument("--log-dir", required=True)
    p_report.add_argument("--out-dir", required=True)
    p_report.set_defaults(func=_cmd_report)

    p_export = sub.add_parser("export-triples", help="distill a session log into training triples")
    p_export.add_argument("--log", required=True)
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=_cmd_export_triples)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MalformedJsonl as exc:
        print(f"error [{exc.code}] line {exc.line_number}: {exc}", file=sys.stderr)
        return 2
    except CascadeError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
