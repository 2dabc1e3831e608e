"""Scoring and the benchmark runner for downstream evaluation.

Exact match reuses the sandbox answer normalization; token F1 is the
token-overlap score common in extractive QA. The benchmark runner wires
retrieval, prompt assembly, code extraction and sandboxed execution into
per-problem records plus aggregate numbers.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .embedding import EmbeddingProvider
from .errors import (
    BudgetExceededError,
    NoCodeFoundError,
    ProtocolError,
    ProviderError,
)
from .llm import LlmProvider, build_messages, extract_code_block, load_template, render
from .model import Problem, Toolset
from .retrieval import (
    RetrieverConfig,
    bm25_topk,
    build_bm25_index,
    expand_query,
    retrieve,
    retrieve_single_view,
)
from .sandbox import ExecJob, SandboxConfig, answers_match, run_job

METHODS = ("craft", "simcse", "bm25", "none")

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class EvalRecord:
    problem_id: str
    prediction: str
    reference: str
    em: int
    f1: float

    def __post_init__(self):
        if self.em == 1 and self.f1 != 1.0:
            raise ValueError("em=1 requires f1=1")


def exact_match(pred: str, ref: str) -> int:
    """1 iff the answers match under the sandbox normalization rules."""
    return 1 if answers_match(pred, ref) else 0


def _f1_tokens(text: str) -> list[str]:
    return _WS_RE.sub(" ", text.lower().translate(_PUNCT_TABLE)).split()


def token_f1(pred: str, ref: str) -> float:
    """Token-overlap F1 (lowercase, punctuation stripped).

    Answers that already count as an exact match score 1 outright, which
    keeps F1 consistent with the numeric-equivalence rule in exact_match.
    Both sides empty scores 1; exactly one side empty scores 0.
    """
    if exact_match(pred, ref):
        return 1.0
    p_tokens, r_tokens = _f1_tokens(pred), _f1_tokens(ref)
    if not p_tokens and not r_tokens:
        return 1.0
    if not p_tokens or not r_tokens:
        return 0.0
    overlap = sum((Counter(p_tokens) & Counter(r_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(p_tokens)
    recall = overlap / len(r_tokens)
    return 2.0 * precision * recall / (precision + recall)


def score(problem_id: str, prediction: str, reference: str) -> EvalRecord:
    em = exact_match(prediction, reference)
    f1 = 1.0 if em else token_f1(prediction, reference)
    return EvalRecord(problem_id, prediction, reference, em, f1)


def build_solve_prompt(problem: Problem, tool_codes: Sequence[str], template_dir=None) -> tuple[str, str]:
    """Prompt for the solving call: tool codes above the question when any
    were retrieved, the no-tool prompt otherwise. Returns (template_id, text)."""
    if tool_codes:
        tpl = load_template("solve", template_dir)
        text = render(tpl, {"tools": "\n\n".join(tool_codes), "query": problem.full_text()})
    else:
        tpl = load_template("solve_direct", template_dir)
        text = render(tpl, {"query": problem.full_text()})
    return tpl.template_id, text


def _retrieved_codes(
    problem: Problem,
    ts: Toolset,
    method: str,
    llm: LlmProvider,
    embedder: EmbeddingProvider,
    rcfg: RetrieverConfig,
    family: str,
    template_dir,
    bm25_index,
) -> list[str]:
    if method == "none" or len(ts) == 0:
        return []
    if method == "craft":
        query = expand_query(
            problem.text, llm, family=family, context=problem.context, template_dir=template_dir
        )
        result = retrieve(query, ts, rcfg, embedder)
        ids = list(result.selected)
    elif method == "simcse":
        ids = retrieve_single_view(problem.text, ts, rcfg.select_top, embedder)
    elif method == "bm25":
        ids = bm25_topk(bm25_index, problem.text, rcfg.select_top)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return [ts.get(tid).code for tid in ids]


def run_benchmark(
    problems: Sequence[Problem],
    ts: Toolset,
    method: str,
    llm: LlmProvider,
    sandbox: SandboxConfig,
    embedder: EmbeddingProvider,
    rcfg: RetrieverConfig | None = None,
    family: str = "math",
    template_dir=None,
    job_timeout: float = 10.0,
) -> tuple[dict, list[EvalRecord]]:
    """Solve every problem with the chosen retrieval method and score it.

    Per-problem failures (no code, runtime error, provider error) score 0
    and stay in the records; only budget exhaustion aborts the run.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    rcfg = rcfg or RetrieverConfig()
    bm25_index = build_bm25_index(ts) if method == "bm25" else None
    records: list[EvalRecord] = []
    for problem in problems:
        prediction = ""
        try:
            codes = _retrieved_codes(
                problem, ts, method, llm, embedder, rcfg, family, template_dir, bm25_index
            )
            template_id, prompt = build_solve_prompt(problem, codes, template_dir)
            response = llm.complete(build_messages(prompt), template_id=template_id)
            solution = extract_code_block(response)
            exec_code = "\n\n".join(list(codes) + [solution])
            result = run_job(ExecJob(code=exec_code, call="solve()", timeout=job_timeout), sandbox)
            if result.status == "ok":
                prediction = result.value
        except BudgetExceededError:
            raise
        except (ProviderError, NoCodeFoundError, ProtocolError):
            prediction = ""
        records.append(score(problem.id, prediction, problem.answer))
    summary = {
        "method": method,
        "count": len(records),
        "em": (sum(r.em for r in records) / len(records)) if records else None,
        "f1": (sum(r.f1 for r in records) / len(records)) if records else None,
    }
    return summary, records
