"""Command-line entry point: ``passage-rerank {index,retrieve,rerank,eval,experiment}``.

Every option can also come from a JSON config file (``--config``) whose keys
are the option names with dashes replaced by underscores, e.g.::

    {"method": "pipeline", "mode": "soft", "pairwise_depth": 15,
     "backend_url": "http://localhost:8000", "parallel": 8}

Precedence: command-line flag > config file > built-in default. The
effective configuration is logged as JSON on stderr at startup.

Exit codes: 0 success, 1 I/O or data error, 2 argument or configuration
error, 3 scoring backend error.
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
from .bm25 import Bm25Params, InvertedIndex, build_index, search
from .core import ContractViolation, IngestionError, Query, Ranking, RerankError, ScoreScale
from .dataio import load_corpus, load_qrels, load_queries, read_run, write_run
from .metrics import evaluate_run
from .rerank import METHODS, POINTWISE_MODES, RerankConfig, rerank_run
from .scorer import (
    BackendError,
    CachedBackend,
    CountingBackend,
    HttpBackend,
    OracleBackend,
    OracleRelevanceTable,
    PromptTemplate,
    RetryPolicy,
    ScoreCache,
    TemplateError,
    TemplateSet,
)
from .scorer.templates import DEFAULT_MAX_PASSAGE_CHARS

log = logging.getLogger("passage_rerank")

BACKEND_URL_ENV = "PASSAGE_RERANK_BACKEND_URL"

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_BACKEND = 0, 1, 2, 3


class ConfigError(RerankError):
    pass


DEFAULTS: dict[str, Any] = {
    "stem": False,
    "stopwords": False,
    "k1": 0.9,
    "b": 0.4,
    "top_k": 100,
    "tag": None,
    "method": "pointwise",
    "mode": "soft",
    "pairwise_depth": 40,
    "candidate_depth": 100,
    "scale_min": 1,
    "scale_max": 5,
    "backend_url": None,
    "oracle_qrels": None,
    "oracle_sharpness": 10.0,
    "oracle_noise": 0.0,
    "oracle_seed": 0,
    "template_pointwise": None,
    "template_pairwise": None,
    "template_binary": None,
    "template_upr": None,
    "max_passage_chars": DEFAULT_MAX_PASSAGE_CHARS,
    "upr_normalize": "mean",
    "parallel": 1,
    "retries": 3,
    "retry_delay": 0.1,
    "timeout": 60.0,
    "cache": None,
    "k": 10,
    "gain": "linear",
    "report": None,
}


# file and directory options without a default
PATH_KEYS = {"corpus", "index", "queries", "qrels", "run", "run_in", "run_out", "output_dir"}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_bm25_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k1", type=float, help="BM25 term-frequency saturation (default 0.9)")
    p.add_argument("--b", type=float, help="BM25 length normalisation (default 0.4)")


def _add_index_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stem", action="store_true", help="Snowball-stem terms")
    p.add_argument("--stopwords", action="store_true", help="drop English stopwords")


def _add_rerank_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS + ("pointwise_then_pairwise",))
    p.add_argument("--mode", choices=POINTWISE_MODES, help="pointwise scoring mode")
    p.add_argument("--pairwise-depth", type=int, help="candidates compared pairwise (default 40)")
    p.add_argument("--candidate-depth", type=int, help="first-stage candidates reranked (default 100)")
    p.add_argument("--scale-min", type=int)
    p.add_argument("--scale-max", type=int)
    p.add_argument("--backend-url", help=f"scorer server URL (falls back to ${BACKEND_URL_ENV})")
    p.add_argument("--oracle-qrels", help="use the deterministic oracle backend driven by these qrels")
    p.add_argument("--oracle-sharpness", type=float)
    p.add_argument("--oracle-noise", type=float)
    p.add_argument("--oracle-seed", type=int)
    for kind in ("pointwise", "pairwise", "binary", "upr"):
        p.add_argument(f"--template-{kind}", help=f"{kind} prompt template file")
    p.add_argument("--max-passage-chars", type=_positive_int)
    p.add_argument("--upr-normalize", choices=("mean", "total"))
    p.add_argument("--parallel", type=_positive_int, help="concurrent scorer requests")
    p.add_argument("--retries", type=int)
    p.add_argument("--retry-delay", type=float)
    p.add_argument("--timeout", type=float)
    p.add_argument("--cache", help="SQLite score cache path")


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=_positive_int, help="NDCG cutoff (default 10)")
    p.add_argument("--gain", choices=("linear", "exponential"))
    p.add_argument("--report", help="also write a per-query text report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="passage-rerank", description="LLM passage reranking with a BM25 first stage")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config file")
        return p

    p = command("index", "build a BM25 index from a BEIR corpus.jsonl")
    p.add_argument("--corpus")
    p.add_argument("--index")
    _add_index_args(p)

    p = command("retrieve", "BM25 retrieval into a TREC run")
    p.add_argument("--index")
    p.add_argument("--queries")
    p.add_argument("--top-k", type=_positive_int)
    p.add_argument("--run-out")
    p.add_argument("--tag")
    _add_bm25_args(p)

    p = command("rerank", "rerank a TREC run with an LLM scorer")
    p.add_argument("--run-in")
    p.add_argument("--queries")
    p.add_argument("--corpus")
    p.add_argument("--run-out")
    p.add_argument("--tag")
    _add_rerank_args(p)

    p = command("eval", "NDCG@k of a TREC run")
    p.add_argument("--run")
    p.add_argument("--qrels")
    _add_eval_args(p)

    p = command("experiment", "index, retrieve, rerank and evaluate in one go")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--qrels")
    p.add_argument("--index", help="reuse or create this index file")
    p.add_argument("--output-dir")
    p.add_argument("--top-k", type=_positive_int)
    _add_index_args(p)
    _add_bm25_args(p)
    _add_rerank_args(p)
    _add_eval_args(p)
    return parser


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    from_file: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            from_file = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON config ({exc.msg})") from None
        if not isinstance(from_file, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = sorted(set(from_file) - set(DEFAULTS) - PATH_KEYS)
        if unknown:
            raise ConfigError(f"{args.config}: unknown config key(s): {', '.join(unknown)}")
    config = {**DEFAULTS, **from_file, **flags}
    if config.get("backend_url") is None and os.environ.get(BACKEND_URL_ENV):
        config["backend_url"] = os.environ[BACKEND_URL_ENV]
    return config


def _require(config: dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if not config.get(k)]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def cmd_index(config: dict[str, Any]) -> int:
    _require(config, "corpus", "index")
    index = build_index(load_corpus(_existing(config["corpus"])), stem=config["stem"], stopwords=config["stopwords"])
    index.save(config["index"])
    print(json.dumps(index.summary()))
    return EXIT_OK


def _retrieve(index: InvertedIndex, queries: list[Query], params: Bm25Params, top_k: int) -> list[Ranking]:
    return [
        Ranking.from_scored(q.id, ((c.passage_id, c.first_stage_score) for c in search(index, params, q, top_k)), "bm25")
        for q in queries
    ]


def cmd_retrieve(config: dict[str, Any]) -> int:
    _require(config, "index", "queries", "run_out")
    params = Bm25Params(config["k1"], config["b"])
    index = InvertedIndex.load(_existing(config["index"]))
    queries = load_queries(_existing(config["queries"]))
    write_run(_retrieve(index, queries, params, config["top_k"]), config["tag"] or "bm25", config["run_out"])
    return EXIT_OK


def _rerank_config(config: dict[str, Any]) -> RerankConfig:
    chars = config["max_passage_chars"]
    defaults = TemplateSet.defaults(chars)
    templates = {}
    for kind in ("pointwise", "pairwise", "binary", "upr"):
        path = config[f"template_{kind}"]
        templates[kind] = PromptTemplate.from_file(_existing(path), kind, chars) if path else getattr(defaults, kind)
    return RerankConfig(
        method=config["method"],
        pointwise_mode=config["mode"],
        pairwise_depth=config["pairwise_depth"],
        candidate_depth=config["candidate_depth"],
        scale=ScoreScale.likert(config["scale_min"], config["scale_max"]),
        templates=TemplateSet(**templates),
        retry=RetryPolicy(retries=config["retries"], base_delay=config["retry_delay"]),
        upr_normalize=config["upr_normalize"],
    )


def _backend(config: dict[str, Any]):
    if config["oracle_qrels"]:
        table = OracleRelevanceTable.from_qrels(
            load_qrels(_existing(config["oracle_qrels"])),
            sharpness=config["oracle_sharpness"],
            noise=config["oracle_noise"],
            seed=config["oracle_seed"],
        )
        backend = OracleBackend(table, max_parallel_requests=config["parallel"])
    elif config["backend_url"]:
        backend = HttpBackend(config["backend_url"], timeout=config["timeout"], max_parallel_requests=config["parallel"])
    else:
        raise ConfigError(f"no scorer: pass --backend-url, set ${BACKEND_URL_ENV}, or use --oracle-qrels")
    if config["cache"]:
        backend = CachedBackend(backend, ScoreCache(config["cache"]))
    return backend


def _rerank(config: dict[str, Any], rerank_cfg: RerankConfig, first_stage: list[Ranking], queries: list[Query]) -> list[Ranking]:
    depth = rerank_cfg.candidate_depth
    wanted = {pid for r in first_stage for pid in r.passage_ids[:depth]}
    passages = {p.id: p for p in load_corpus(_existing(config["corpus"])) if p.id in wanted}
    backend = CountingBackend(_backend(config))

    def report(ranking: Ranking) -> None:
        counts = backend.reset()
        log.info("query %s: scorer calls %s", ranking.query_id, json.dumps(dict(sorted(counts.items()))))

    return rerank_run(rerank_cfg, backend, {q.id: q for q in queries}, first_stage, passages, on_query=report)


def cmd_rerank(config: dict[str, Any]) -> int:
    _require(config, "run_in", "queries", "corpus", "run_out")
    rerank_cfg = _rerank_config(config)
    first_stage = read_run(_existing(config["run_in"]))
    queries = load_queries(_existing(config["queries"]))
    reranked = _rerank(config, rerank_cfg, first_stage, queries)
    write_run(reranked, config["tag"] or rerank_cfg.tag, config["run_out"])
    return EXIT_OK


def cmd_eval(config: dict[str, Any]) -> int:
    _require(config, "run", "qrels")
    qrels = load_qrels(_existing(config["qrels"]))
    report = evaluate_run(read_run(_existing(config["run"])), qrels, config["k"], config["gain"])
    if report.skipped:
        log.info("excluded %d queries without relevant judgements: %s", len(report.skipped), " ".join(report.skipped))
    if config["report"]:
        Path(config["report"]).write_text(report.text_report(), encoding="utf-8")
    print(report.dumps())
    return EXIT_OK


def cmd_experiment(config: dict[str, Any]) -> int:
    _require(config, "corpus", "queries", "qrels", "output_dir")
    rerank_cfg = _rerank_config(config)
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    index_path = config.get("index")
    if index_path and Path(index_path).is_file():
        index = InvertedIndex.load(index_path)
    else:
        index = build_index(load_corpus(_existing(config["corpus"])), stem=config["stem"], stopwords=config["stopwords"])
        if index_path:
            index.save(index_path)
    queries = load_queries(_existing(config["queries"]))
    qrels = load_qrels(_existing(config["qrels"]))
    bm25_run = _retrieve(index, queries, Bm25Params(config["k1"], config["b"]), config["top_k"])
    write_run(bm25_run, "bm25", out / "bm25.run")
    reranked = _rerank(config, rerank_cfg, bm25_run, queries)
    write_run(reranked, rerank_cfg.tag, out / "rerank.run")
    summary = {
        "bm25": evaluate_run(bm25_run, qrels, config["k"], config["gain"]).to_json(),
        rerank_cfg.tag: evaluate_run(reranked, qrels, config["k"], config["gain"]).to_json(),
    }
    (out / "eval.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({name: s["mean"] for name, s in summary.items()}))
    return EXIT_OK


COMMANDS = {
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = effective_config(args)
        print(json.dumps({"command": args.command, "config": config}, sort_keys=True), file=sys.stderr)
        return COMMANDS[args.command](config)
    except BackendError as exc:
        log.error("scorer backend failed: %s", exc)
        return EXIT_BACKEND
    except (ConfigError, ContractViolation, TemplateError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (IngestionError, OSError, RerankError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
