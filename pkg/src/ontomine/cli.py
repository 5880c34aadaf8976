"""Command-line entry points: index-build, mine, refine, evaluate, cost, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .corpus import load_annotations, load_corpus, save_annotations
from .costmodel import CostInputs, estimate_cost, scale_factor
from .errors import OntomineError
from .evaluation import format_report_table, fuzzy_score, score, stratify_by_length
from .ontology import Namespace, load_ontology
from .pipeline import (
    build_runtime,
    make_embedder,
    make_refinement_hooks,
    mine_corpus,
    stream_progress,
    write_annotations,
    write_atomic,
    write_entity_dump,
    write_unmatched,
)
from .refinement import apply_keyword_filter, build_review_queue, compare, load_filter_list, load_queue, save_queue
from .retrieval import build_index, ontology_index_items, save_index
from .verification import (
    abbreviation_index_items,
    lab_index_items,
    load_abbreviations,
    load_lab_ranges,
)

logger = logging.getLogger(__name__)


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run configuration JSON")


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "task": getattr(args, "task", None),
        "workers": getattr(args, "workers", None),
        "retrieval.k": getattr(args, "k", None),
        "chunking.min_size": getattr(args, "min_size", None),
    }


def cmd_index_build(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    embedder = make_embedder(config)
    if args.what == "ontology":
        kind = Namespace.HPO if config.task == "phenotype" else Namespace.ORPHA
        store = load_ontology(config.resolve(config.paths.ontology), kind)
        items = ontology_index_items(store)
    elif args.what == "abbreviations":
        items = abbreviation_index_items(
            load_abbreviations(config.resolve(config.paths.abbreviations))
        )
    else:
        items = lab_index_items(load_lab_ranges(config.resolve(config.paths.lab_ranges)))
    index = build_index(items, embedder)
    save_index(index, args.out)
    print(json.dumps({"entries": len(index), "dimension": index.dimension, "out": args.out}))
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    runtime = build_runtime(config)
    outcomes = mine_corpus(runtime, progress=stream_progress)
    out = args.out or str(config.resolve(config.output.annotations))
    write_annotations(outcomes, out)
    write_unmatched(outcomes, Path(out).with_suffix("").as_posix() + ".unmatched.jsonl")
    if args.dump_entities:
        write_entity_dump(outcomes, args.dump_entities)
    total = sum(len(o.result.annotations) for o in outcomes)
    print(json.dumps({"documents": len(outcomes), "annotations": total, "out": out}))
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    runtime = build_runtime(config)
    prior = load_annotations(args.prior)
    if args.filters or config.paths.filters:
        filters = load_filter_list(args.filters or config.resolve(config.paths.filters))
        prior = apply_keyword_filter(prior, filters, runtime.corpus)
    mined = load_annotations(args.mined)
    comparisons = compare(mined, prior)
    verdict_fn, context_fn, candidates_fn = make_refinement_hooks(runtime)
    queue = build_review_queue(comparisons, verdict_fn, context_fn, candidates_fn)
    flags_out = args.flags or str(config.resolve(config.output.flags))
    queue_out = args.queue or str(config.resolve(config.output.queue))
    save_queue(queue, flags_out, flags_only=True)
    save_queue(queue, queue_out, flags_only=False)
    if args.filtered_prior:
        save_annotations(prior, args.filtered_prior)
    print(
        json.dumps(
            {
                "flags": len(queue.flags),
                "no_flag": queue.no_flag_count,
                "flags_out": flags_out,
                "queue_out": queue_out,
            }
        )
    )
    return 0


def _codes_by_doc(path: str) -> dict[str, set]:
    out: dict[str, set] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.setdefault(obj["doc_id"], set()).add(obj["code"])
    return out


def _mentions_by_doc(path: str) -> dict[str, list]:
    out: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.setdefault(obj["doc_id"], []).append(obj.get("mention", ""))
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.fuzzy:
        report = fuzzy_score(
            _mentions_by_doc(args.pred), _mentions_by_doc(args.gold), threshold=args.threshold
        )
    else:
        pred = _codes_by_doc(args.pred)
        gold = _codes_by_doc(args.gold)
        if args.corpus:
            report = stratify_by_length(pred, gold, load_corpus(args.corpus))
        else:
            report = score(pred, gold)
    print(json.dumps(report.to_json(), indent=2))
    print(format_report_table(report), file=sys.stderr)
    if args.csv:
        rows = ["doc_id,tp,fp,fn\n"]
        for doc_id, counts in sorted(report.per_document.items()):
            rows.append(f"{doc_id},{counts.tp},{counts.fp},{counts.fn}\n")
        write_atomic(args.csv, rows)
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    inputs = CostInputs(
        runtime_minutes=args.runtime_minutes,
        gpu_count=args.gpu_count,
        gpu_rate_per_hour=args.gpu_rate,
        total_notes=args.total_notes,
        median_note_words=args.median_note_words,
        bench_median_words=args.bench_median_words,
    )
    print(
        json.dumps(
            {
                "scale_factor": scale_factor(
                    args.median_note_words, args.total_notes, args.bench_median_words
                ),
                "cost_usd": estimate_cost(inputs, args.per_benchmark_cases),
            }
        )
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ReviewStore, create_app

    config = load_config(args.config, _overrides(args))
    queue = load_queue(args.queue or config.resolve(config.output.queue))
    prior = load_annotations(args.prior)
    log_path = args.decision_log or str(config.resolve(config.output.decisions))
    store = ReviewStore(queue, prior, log_path)
    app = create_app(store, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ontomine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index-build", help="embed a data file into a .idx.jsonl index")
    _add_config_arg(p)
    p.add_argument("--what", choices=["ontology", "abbreviations", "lab-ranges"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", default=None)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("mine", help="run extract -> verify -> match over the corpus")
    _add_config_arg(p)
    p.add_argument("--task", choices=["phenotype", "disease"], default=None)
    p.add_argument("--out", default=None, help="annotations JSONL path")
    p.add_argument("--dump-entities", default=None, help="also dump raw entity records")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--min-size", dest="min_size", type=int, default=None)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("refine", help="compare mined output against prior annotations")
    _add_config_arg(p)
    p.add_argument("--prior", required=True, help="prior annotations JSONL")
    p.add_argument("--mined", required=True, help="mined annotations JSONL (from mine)")
    p.add_argument("--filters", default=None, help="keyword filter JSON")
    p.add_argument("--flags", default=None, help="flagged-items JSONL output")
    p.add_argument("--queue", default=None, help="full queue JSONL output (for serve)")
    p.add_argument("--filtered-prior", default=None, help="write the post-filter prior set")
    p.add_argument("--task", default=None)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="score predictions against gold annotations")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--corpus", default=None, help="corpus JSONL for length strata")
    p.add_argument("--fuzzy", action="store_true", help="fuzzy mention-string scoring")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--csv", default=None, help="write per-document counts CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cost", help="project inference cost to corpus scale")
    p.add_argument("--runtime-minutes", type=float, required=True)
    p.add_argument("--gpu-count", type=int, required=True)
    p.add_argument("--gpu-rate", type=float, required=True)
    p.add_argument("--total-notes", type=int, required=True)
    p.add_argument("--median-note-words", type=float, required=True)
    p.add_argument("--bench-median-words", type=float, required=True)
    p.add_argument("--per-benchmark-cases", type=int, default=None)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("serve", help="run the review HTTP service")
    _add_config_arg(p)
    p.add_argument("--queue", default=None, help="full queue JSONL (from refine)")
    p.add_argument("--prior", required=True, help="prior annotations JSONL")
    p.add_argument("--decision-log", default=None)
    p.add_argument("--ui-dir", default=None, help="static review UI assets")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8177)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OntomineError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    except (OSError, ValueError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
