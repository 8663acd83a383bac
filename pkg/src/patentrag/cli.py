"""Command line entry point: ``patentrag {ingest,index,search,answer,eval,serve}``.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import replace
from typing import Optional, Sequence

from . import corpus, evalkit
from .config import AppConfig, load_config
from .embedder import EmbedderConfig, make_embedder
from .errors import ConfigError, PatentRagError
from .index import VectorIndex
from .ragpipe import RagPipeline

log = logging.getLogger("patentrag")


def _meta_path(index_path: str) -> str:
    return index_path + ".meta.json"


def _write_meta(index_path: str, emb: EmbedderConfig) -> None:
    with open(_meta_path(index_path), "w", encoding="utf-8") as fh:
        json.dump({"embedder": emb.to_dict()}, fh, indent=2)


def _embedder_config(cfg: AppConfig, args, index_path: Optional[str] = None) -> EmbedderConfig:
    """Embedder settings: index sidecar, then config file, then flags."""
    emb = cfg.embedder
    if index_path and os.path.exists(_meta_path(index_path)):
        with open(_meta_path(index_path), encoding="utf-8") as fh:
            emb = EmbedderConfig(**json.load(fh)["embedder"])
    overrides = {}
    if getattr(args, "dim", None):
        overrides["dimension"] = args.dim
    if getattr(args, "embed_seed", None) is not None:
        overrides["seed"] = args.embed_seed
    if getattr(args, "local_embedder", False):
        overrides.update(provider="local", endpoint_url=None)
        if emb.provider != "local":
            overrides["model_name"] = "local-hash-trigram"
    return replace(emb, **overrides) if overrides else emb


def _require(value, flag: str):
    if not value:
        raise ConfigError(f"{flag} is required (flag or config file)")
    return value


def _open_pipeline(cfg: AppConfig, args) -> RagPipeline:
    index_path = _require(args.index or cfg.index_path, "--index")
    corpus_path = _require(args.corpus or cfg.corpus_path, "--corpus")
    index = VectorIndex.load(index_path)
    records = {r.application_number: r for r in corpus.load_corpus(corpus_path)}
    embedder = make_embedder(_embedder_config(cfg, args, index_path))
    if embedder.dimension != index.dimension:
        raise ConfigError(f"embedder dimension {embedder.dimension} != index dimension {index.dimension}")
    nprobe = args.nprobe if getattr(args, "nprobe", None) else cfg.nprobe
    return RagPipeline(embedder, index, records, cfg.generator, k=cfg.k,
                       budget_chars=cfg.budget_chars, nprobe=nprobe)


def cmd_ingest(cfg: AppConfig, args) -> int:
    fmt = args.format or ("csv" if args.input.lower().endswith(".csv") else "jsonl")
    raw, parse_errors = corpus.parse_records(args.input, fmt)
    accepted, rejected = corpus.normalize_all(raw)
    kept, dups = corpus.deduplicate(accepted)
    rejected += dups
    corpus.write_jsonl(kept, args.out)
    rejects_path = args.rejects or os.path.splitext(args.out)[0] + ".rejects.jsonl"
    corpus.write_jsonl(rejected, rejects_path)
    summary = {
        "accepted": len(kept),
        "rejected": dict(sorted(Counter(r.reason.value for r in rejected).items())),
        "parse_errors": [{"line": e.line, "message": e.message} for e in parse_errors],
        "corpus_path": args.out,
        "rejects_path": rejects_path,
    }
    if args.split_out and kept:
        split = corpus.stratified_split(kept, (8, 1, 1), args.seed)
        with open(args.split_out, "w", encoding="utf-8") as fh:
            json.dump(split.to_dict(), fh)
        summary["split"] = {"train": len(split.train_ids), "validation": len(split.validation_ids),
                            "test": len(split.test_ids)}
    print(json.dumps(summary))
    for e in parse_errors:
        print(f"line {e.line}: {e.message}", file=sys.stderr)
    return 0


def cmd_index(cfg: AppConfig, args) -> int:
    corpus_path = _require(args.corpus or cfg.corpus_path, "--corpus")
    out = _require(args.out or cfg.index_path, "--out")
    records = corpus.load_corpus(corpus_path)
    emb_cfg = _embedder_config(cfg, args)
    index = evalkit.build_index(records, make_embedder(emb_cfg), nlist=args.nlist, seed=args.seed)
    index.save(out)
    _write_meta(out, emb_cfg)
    print(json.dumps({"index_path": out, "size": index.size, "dim": index.dimension, "nlist": index.nlist}))
    return 0


def cmd_search(cfg: AppConfig, args) -> int:
    index_path = _require(args.index or cfg.index_path, "--index")
    index = VectorIndex.load(index_path)
    embedder = make_embedder(_embedder_config(cfg, args, index_path))
    nprobe = args.nprobe or cfg.nprobe
    hits = index.search(embedder.embed(args.query), args.k or cfg.k, nprobe)
    for h in hits:
        print(json.dumps(h.to_dict()))
    return 0


def cmd_answer(cfg: AppConfig, args) -> int:
    pipeline = _open_pipeline(cfg, args)
    ans = pipeline.answer(args.query, args.k)
    print(ans.to_json(timings=not args.no_timings))
    return 0


def cmd_eval(cfg: AppConfig, args) -> int:
    corpus_path = _require(args.corpus or cfg.corpus_path, "--corpus")
    records = corpus.load_corpus(corpus_path)
    queries = evalkit.load_queries(args.queries)
    index_path = args.index or cfg.index_path
    index = VectorIndex.load(index_path) if index_path else None
    embedder = make_embedder(_embedder_config(cfg, args, index_path))
    split = None
    if args.split:
        with open(args.split, encoding="utf-8") as fh:
            s = json.load(fh)
        split = corpus.CorpusSplit(s["train_ids"], s["validation_ids"], s["test_ids"],
                                   s["seed"], tuple(s["ratios"]))
    report = evalkit.run_eval(records, split, queries, embedder, k=args.k or cfg.k,
                              model_label=args.label or embedder.config.model_name,
                              index=index, nprobe=args.nprobe or cfg.nprobe)
    if args.report_json:
        with open(args.report_json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    print(report.to_json())
    print(report.render_table(), file=sys.stderr)
    return 0


def cmd_serve(cfg: AppConfig, args) -> int:
    from .service import serve

    serve(lambda: _open_pipeline(cfg, args), args.host or cfg.host, args.port or cfg.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patentrag", description="Semantic patent retrieval")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="normalize a raw CSV/JSONL export")
    p.add_argument("input")
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--out", required=True, help="normalized corpus JSONL")
    p.add_argument("--rejects", help="rejection report JSONL")
    p.add_argument("--split-out", help="also write an 8:1:1 stratified split as JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    def embed_flags(p):
        p.add_argument("--dim", type=int)
        p.add_argument("--embed-seed", type=int)
        p.add_argument("--local-embedder", action="store_true")

    p = sub.add_parser("index", help="embed a corpus into a binary index")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--nlist", type=int, help="train an IVF partition with this many lists")
    p.add_argument("--seed", type=int, default=0, help="k-means seed")
    embed_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="print top-k hits as JSON lines")
    p.add_argument("--index")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--nprobe", type=int)
    embed_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("answer", help="retrieve and generate an answer")
    p.add_argument("--index")
    p.add_argument("--corpus")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--no-timings", action="store_true", help="report timings as 0 for reproducible output")
    embed_flags(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("eval", help="score labeled queries")
    p.add_argument("--corpus")
    p.add_argument("--index")
    p.add_argument("--queries", required=True)
    p.add_argument("--split", help="split JSON; relevant ids must be test ids")
    p.add_argument("--k", type=int)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--label", help="model label for the report")
    p.add_argument("--report-json")
    embed_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP JSON service")
    p.add_argument("--index")
    p.add_argument("--corpus")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--nprobe", type=int)
    embed_flags(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "k", None) is not None and args.k < 1:
        parser.print_usage(sys.stderr)
        print("patentrag: error: --k must be >= 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except (PatentRagError, OSError) as exc:
        print(f"patentrag: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
