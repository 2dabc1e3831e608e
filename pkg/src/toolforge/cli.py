"""`forge` command line: sample / create / retrieve / analyze / eval.

Settings resolve as flags > environment > config file. The config file is
plain ``key = value`` lines (# comments allowed); recognized keys are
base_url, model, api_key_env, shim, seed. The resolved configuration is
echoed to stderr at startup with secrets redacted. Machine-readable
output goes to stdout as JSON; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .analysis import analyze, scaling_slices
from .embedding import HashEmbedding, RemoteEmbedding
from .errors import ToolforgeError
from .llm import CallBudget, CallLedger, LlmProvider, RemoteChatProvider, load_replay_script
from .metrics import run_benchmark
from .model import load_corpus, load_toolset
from .pipeline import PipelineConfig, forge
from .retrieval import (
    RetrieverConfig,
    bm25_topk,
    build_bm25_index,
    expand_query,
    retrieve,
    retrieve_single_view,
)
from .sampling import SamplerConfig, embedding_oracle, run_sampler
from .sandbox import SandboxConfig

ENV_PREFIX = "FORGE_"
CONFIG_KEYS = ("base_url", "model", "api_key_env", "shim", "seed")


@dataclass
class RunConfig:
    base_url: str = ""
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "FORGE_API_KEY"
    shim: str = ""
    seed: int = 0

    def redacted(self) -> dict:
        out = {k: getattr(self, k) for k in CONFIG_KEYS}
        out["api_key"] = "***" if os.environ.get(self.api_key_env) else "(unset)"
        return out


def _read_config_file(path: str | None) -> dict:
    if not path:
        return {}
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        key = key.strip()
        if key in CONFIG_KEYS:
            values[key] = value.strip()
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    file_values = _read_config_file(getattr(args, "config", None))
    for key in CONFIG_KEYS:
        if key in file_values:
            setattr(cfg, key, file_values[key])
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            setattr(cfg, key, env)
        flag = getattr(args, key, None)
        if flag not in (None, ""):
            setattr(cfg, key, flag)
    cfg.seed = int(cfg.seed)
    print(f"forge config: {json.dumps(cfg.redacted())}", file=sys.stderr)
    return cfg


def _make_provider(spec: str, cfg: RunConfig, budget_calls: int | None, ledger_path) -> LlmProvider:
    budget = CallBudget(max_calls=budget_calls) if budget_calls is not None else None
    ledger = CallLedger(ledger_path) if ledger_path else None
    if spec.startswith("replay:"):
        provider = load_replay_script(spec.split(":", 1)[1])
        provider.budget = budget
        provider.ledger = ledger
        return provider
    if spec == "remote":
        return RemoteChatProvider(
            model=cfg.model,
            base_url=cfg.base_url or None,
            api_key=os.environ.get(cfg.api_key_env),
            budget=budget,
            ledger=ledger,
        )
    raise ToolforgeError(f"unknown provider {spec!r}; use 'remote' or 'replay:<script.json>'")


def _make_embedder(spec: str, cfg: RunConfig):
    if spec == "hash":
        return HashEmbedding()
    if spec.startswith("remote:"):
        _, model, dim = spec.split(":")
        return RemoteEmbedding(model=model, dim=int(dim), base_url=cfg.base_url or None)
    raise ToolforgeError(f"unknown embedder {spec!r}; use 'hash' or 'remote:<model>:<dim>'")


def _sandbox(cfg: RunConfig) -> SandboxConfig:
    return SandboxConfig(shim_path=cfg.shim or None)


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    corpus = load_corpus(args.corpus)
    sampler = SamplerConfig(
        n_init=args.n_init, k_per_epoch=args.k, epochs=args.epochs, seed=cfg.seed
    )
    embedder = _make_embedder(args.embedder, cfg)
    selected = run_sampler(corpus, sampler, embedding_oracle(corpus, embedder))
    json.dump({"selected": [p.id for p in selected]}, sys.stdout, indent=1)
    print()
    return 0


def cmd_create(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    corpus = load_corpus(args.corpus)
    sampler = SamplerConfig(
        n_init=args.n_init, k_per_epoch=args.k, epochs=args.epochs, seed=cfg.seed
    )
    n_sampled = min(len(corpus), sampler.n_init + sampler.k_per_epoch * sampler.epochs)
    if args.dry_run:
        plan = {
            "corpus": len(corpus),
            "sampled": n_sampled,
            "estimated_calls": 3 * n_sampled,  # generate + abstract + validate, plus dedup
            "budget_calls": args.budget_calls,
            "out": str(args.out),
        }
        json.dump(plan, sys.stdout, indent=1)
        print()
        return 0
    provider = _make_provider(args.provider, cfg, args.budget_calls, args.ledger)
    embedder = _make_embedder(args.embedder, cfg)
    ts = forge(
        corpus,
        sampler,
        provider,
        _sandbox(cfg),
        embedder,
        PipelineConfig(
            task_family=args.task_family,
            out_path=args.out,
            audit_path=args.audit,
            checkpoint_path=args.checkpoint,
        ),
    )
    json.dump({"tools": len(ts), "funnel": ts.meta.get("funnel", {})}, sys.stdout, indent=1)
    print()
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    ts = load_toolset(args.toolset)
    embedder = _make_embedder(args.embedder, cfg)
    rcfg = RetrieverConfig(k_problem=args.k_problem, k_name=args.k_name, k_doc=args.k_doc)
    diagnostics: dict = {}
    if args.method == "craft":
        provider = _make_provider(args.provider, cfg, None, None)
        query = expand_query(args.query, provider, family=args.task_family)
        result = retrieve(query, ts, rcfg, embedder)
        ids = list(result.selected)
        diagnostics = {
            "expanded_names": list(query.expanded_names),
            "expanded_docstring": query.expanded_docstring,
            "view_hits": {k: list(v) for k, v in result.view_hits.items()},
            "frequencies": result.frequencies,
        }
    elif args.method == "simcse":
        ids = retrieve_single_view(args.query, ts, rcfg.select_top, embedder)
    elif args.method == "bm25":
        ids = bm25_topk(build_bm25_index(ts), args.query, rcfg.select_top)
    else:
        raise ToolforgeError(f"unknown method {args.method!r}")
    out = {
        "method": args.method,
        "selected": ids,
        "codes": [ts.get(tid).code for tid in ids],
        "diagnostics": diagnostics,
    }
    json.dump(out, sys.stdout, indent=1)
    print()
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    ts = load_toolset(args.toolset)
    report = analyze(ts, threshold=args.graph_threshold, seed=cfg.seed)
    out = {
        "n_tools": report.n_tools,
        "avg_complexity": report.avg_complexity,
        "n_classes": report.n_classes,
        "modularity": report.modularity,
        "per_tool_complexity": report.per_tool_complexity,
    }
    if args.epoch_marks:
        marks = [int(m) for m in args.epoch_marks.split(",")]
        out["scaling_slices"] = {
            str(m): len(s) for m, s in zip(marks, scaling_slices(ts, marks))
        }
    json.dump(out, sys.stdout, indent=1)
    print()
    rows = [
        ("tools", str(report.n_tools)),
        ("avg cyclomatic complexity", f"{report.avg_complexity:.2f}"),
        ("tool classes (louvain)", str(report.n_classes)),
        ("modularity", f"{report.modularity:.3f}"),
        ("graph threshold", f"{args.graph_threshold:.2f}"),
    ]
    width = max(len(label) for label, _ in rows)
    for label, value in rows:
        print(f"{label:<{width}}  {value}", file=sys.stderr)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    corpus = load_corpus(args.corpus)
    ts = load_toolset(args.toolset)
    provider = _make_provider(args.provider, cfg, args.budget_calls, args.ledger)
    embedder = _make_embedder(args.embedder, cfg)
    summary, records = run_benchmark(
        corpus,
        ts,
        args.method,
        provider,
        _sandbox(cfg),
        embedder,
        family=args.task_family,
    )
    report = {
        "summary": summary,
        "records": [
            {
                "problem_id": r.problem_id,
                "prediction": r.prediction,
                "reference": r.reference,
                "em": r.em,
                "f1": r.f1,
            }
            for r in records
        ],
    }
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1), encoding="utf-8")
    json.dump(summary, sys.stdout, indent=1)
    print()
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--base-url", dest="base_url", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--shim", default=None)
    p.add_argument("--embedder", default="hash", help="hash | remote:<model>:<dim>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="diversity-sample a problem corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n-init", type=int, default=1000)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--epochs", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("create", help="run the tool-creation funnel")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task-family", choices=("vqa", "tabular", "math"), default="math")
    p.add_argument("--out", required=True)
    p.add_argument("--provider", default="remote", help="remote | replay:<script.json>")
    p.add_argument("--budget-calls", type=int, default=None)
    p.add_argument("--n-init", type=int, default=1000)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--audit", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--ledger", default=None)
    p.add_argument("--dry-run", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_create)

    p = sub.add_parser("retrieve", help="retrieve tools for a query")
    p.add_argument("--toolset", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--method", choices=("craft", "simcse", "bm25"), default="craft")
    p.add_argument("--task-family", choices=("vqa", "tabular", "math"), default="math")
    p.add_argument("--provider", default="remote")
    p.add_argument("--k-problem", type=int, default=10)
    p.add_argument("--k-name", type=int, default=5)
    p.add_argument("--k-doc", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("analyze", help="complexity and community report")
    p.add_argument("--toolset", required=True)
    p.add_argument("--graph-threshold", type=float, default=0.7)
    p.add_argument("--epoch-marks", default=None, help="comma-separated scaling slice marks")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="run a benchmark over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--toolset", required=True)
    p.add_argument("--method", choices=("craft", "simcse", "bm25", "none"), default="craft")
    p.add_argument("--task-family", choices=("vqa", "tabular", "math"), default="math")
    p.add_argument("--provider", default="remote")
    p.add_argument("--report", default=None)
    p.add_argument("--budget-calls", type=int, default=None)
    p.add_argument("--ledger", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToolforgeError as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
