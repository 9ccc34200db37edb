"""Command-line entry point: ``topickg <subcommand> ...``.

Settings resolve in the order flags > ``TOPICKG_<NAME>`` environment
variables > ``--config`` JSON file > built-in defaults.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 backend error,
5 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from . import __version__
from . import kg as K
from . import pipeline as P
from .backend import BackendConfig, BackendError
from .refine import DEFAULT_MAX_SUBSET

EXIT_USAGE, EXIT_IO, EXIT_BACKEND, EXIT_VALIDATION = 2, 3, 4, 5

# dest -> (default, type)
SETTINGS: dict[str, tuple[Any, Any]] = {
    "metagraph": (None, str),
    "variant": ("base", str),
    "stopwords": (None, str),
    "max_reviews_per_item": (None, int),
    "backend": ("mock", str),
    "model": ("gpt-4o-mini", str),
    "endpoint": ("https://api.openai.com/v1/chat/completions", str),
    "api_key_env": ("TOPIC_BACKEND_API_KEY", str),
    "timeout": (60.0, float),
    "max_retries": (3, int),
    "parallelism": (8, int),
    "cache_dir": (None, str),
    "prompt_dir": (None, str),
    "max_words": (10, int),
    "max_subset": (DEFAULT_MAX_SUBSET, int),
    "k": (10, int),
    "ratio": (0.8, float),
    "seed": (0, int),
    "backfill": (False, bool),
}


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge flags, environment, config file and defaults into one settings dict."""
    file_cfg: dict[str, Any] = {}
    config_path = getattr(args, "config", None) or os.environ.get("TOPICKG_CONFIG")
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            file_cfg = json.load(f)
        unknown = set(file_cfg) - set(SETTINGS)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
    out = {}
    for name, (default, typ) in SETTINGS.items():
        flag = getattr(args, name, None)
        env = os.environ.get(f"TOPICKG_{name.upper()}")
        if flag is not None and flag is not False:
            value = flag
        elif env is not None:
            value = _bool(env) if typ is bool else typ(env)
        elif name in file_cfg:
            value = file_cfg[name]
        else:
            value = default
        out[name] = value
    return out


def make_config(settings: dict[str, Any]) -> P.PipelineConfig:
    try:
        bc = BackendConfig(
            endpoint=settings["endpoint"],
            model=settings["model"],
            api_key_env=settings["api_key_env"],
            timeout=settings["timeout"],
            max_retries=settings["max_retries"],
            parallelism=settings["parallelism"],
            cache_dir=settings["cache_dir"],
            prompt_dir=settings["prompt_dir"],
        )
        return P.PipelineConfig(
            metagraph=settings["metagraph"],
            variant=settings["variant"],
            stopwords=settings["stopwords"],
            max_reviews_per_item=settings["max_reviews_per_item"],
            backend=settings["backend"],
            backend_config=bc,
            max_words=settings["max_words"],
            max_subset=settings["max_subset"],
            k=settings["k"],
            ratio=settings["ratio"],
            seed=settings["seed"],
            backfill=settings["backfill"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _report(args: argparse.Namespace, name: str, payload: dict[str, Any], cfg: P.PipelineConfig) -> None:
    out = Path(args.out) if args.out else Path(args.graph) / "reports" / name
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{name}.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    P.write_manifest(out, name, [Path(args.graph)], cfg.to_dict())
    print(json.dumps(payload, indent=2, sort_keys=True))


# -- subcommands -----------------------------------------------------------------------


def cmd_ingest(args, cfg):
    P.ingest(args.metadata, args.reviews, args.out, cfg, holdout=args.holdout)


def cmd_extract_general(args, cfg):
    P.extract_general(args.input, args.out, cfg, checkpoint=args.checkpoint)


def cmd_extract_specific(args, cfg):
    P.extract_specific(args.input, args.out, cfg, context_path=args.context, checkpoint=args.checkpoint)


def cmd_refine(args, cfg):
    P.refine(args.staged, args.graph, args.out, cfg, checkpoint=args.checkpoint)


def cmd_validate(args, cfg):
    kg = K.load_graph(args.graph, strict=False)
    violations = K.validate_graph(kg)
    payload = {
        "violations": [
            {"triplet": list(v.triplet), "triplet_type": list(v.triplet_type)} for v in violations
        ],
        "count": len(violations),
    }
    _report(args, "validate", payload, cfg)
    if violations:
        return EXIT_VALIDATION


def cmd_stats(args, cfg):
    _report(args, "stats", K.stats(K.load_graph(args.graph, strict=False)).to_dict(), cfg)


def cmd_eval(args, cfg):
    _report(args, "eval", P.evaluate(args.graph, cfg), cfg)


def cmd_run_all(args, cfg):
    summary = P.run_all(args.metadata, args.reviews, args.out, cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (lowest precedence above defaults)")
    common.add_argument("-v", "--verbose", action="store_true")

    graph_opts = argparse.ArgumentParser(add_help=False)
    graph_opts.add_argument("--metagraph", help="standardized metagraph JSON (default: bundled)")
    graph_opts.add_argument("--variant", choices=["base", "large"])
    graph_opts.add_argument("--stopwords", help="stopword file, one word per line")
    graph_opts.add_argument("--max-reviews-per-item", type=int)

    backend_opts = argparse.ArgumentParser(add_help=False)
    backend_opts.add_argument("--backend", choices=["http", "mock"])
    backend_opts.add_argument("--model")
    backend_opts.add_argument("--endpoint")
    backend_opts.add_argument("--api-key-env")
    backend_opts.add_argument("--timeout", type=float)
    backend_opts.add_argument("--max-retries", type=int)
    backend_opts.add_argument("--parallelism", type=int)
    backend_opts.add_argument("--cache-dir")
    backend_opts.add_argument("--prompt-dir", help="directory overriding the bundled prompt templates")
    backend_opts.add_argument("--checkpoint", help="JSON progress file for resuming")

    eval_opts = argparse.ArgumentParser(add_help=False)
    eval_opts.add_argument("--k", type=int)
    eval_opts.add_argument("--ratio", type=float)
    eval_opts.add_argument("--seed", type=int)
    eval_opts.add_argument("--backfill", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="topickg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common, graph_opts], help="build the base graph")
    p.add_argument("--metadata", required=True)
    p.add_argument("--reviews", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--holdout", action="store_true",
                   help="withhold review text of the pairs eval will test (uses --ratio/--seed)")
    p.add_argument("--ratio", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract-general", parents=[common, backend_opts], help="add item subtypes")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_general)

    p = sub.add_parser("extract-specific", parents=[common, backend_opts], help="stage topic words")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--context", help="context store (default: <in>/context.jsonl)")
    p.add_argument("--out", required=True)
    p.add_argument("--max-words", type=int)
    p.set_defaults(func=cmd_extract_specific)

    p = sub.add_parser("refine", parents=[common, backend_opts], help="merge synonyms, materialize words")
    p.add_argument("--staged", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-subset", type=int)
    p.set_defaults(func=cmd_refine)

    for name, func, extra, text in (
        ("validate", cmd_validate, [], "check every triplet against the metagraph"),
        ("stats", cmd_stats, [], "graph size summary"),
        ("eval", cmd_eval, [eval_opts], "top-k recommendation metrics"),
    ):
        p = sub.add_parser(name, parents=[common, *extra], help=text)
        p.add_argument("--graph", required=True)
        p.add_argument("--out", help="report directory (default: <graph>/reports/<command>)")
        p.set_defaults(func=func)

    p = sub.add_parser("run-all", parents=[common, graph_opts, backend_opts, eval_opts],
                       help="every stage in order")
    p.add_argument("--metadata", required=True)
    p.add_argument("--reviews", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-words", type=int)
    p.add_argument("--max-subset", type=int)
    p.set_defaults(func=cmd_run_all)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = make_config(resolve(args))
        return args.func(args, cfg) or 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, exc)
    except BackendError as exc:
        return _fail(EXIT_BACKEND, exc)
    except (P.ValidationFailed, K.KGError) as exc:
        return _fail(EXIT_VALIDATION, exc)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
