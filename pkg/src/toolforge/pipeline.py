"""The tool-creation funnel: generate, abstract, validate, deduplicate.

Each sampled problem flows through the four stages and either survives as
a validated tool or is discarded with a recorded reason. Per-problem
results are checkpointed so a run killed by budget exhaustion resumes to
a byte-identical toolset.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .embedding import EmbeddingProvider
from .errors import (
    BudgetExceededError,
    EmptyTextError,
    NoCodeFoundError,
    NoFunctionError,
    ProtocolError,
    ProviderError,
    SyntaxShapeError,
)
from .llm import LlmProvider, build_messages, extract_code_block, load_template, render
from .model import (
    Problem,
    Tool,
    Toolset,
    ViewEmbeddings,
    make_tool,
    save_toolset,
    tool_from_json,
    tool_to_json,
)
from .sampling import SamplerConfig, run_sampler_state
from .sandbox import ExecJob, SandboxConfig, answers_match, run_job
from .snippets import parse_function

STAGES = ("generate", "abstract", "validate", "dedup")

SOLVE_CALL = "solve()"


@dataclass(frozen=True)
class StageRecord:
    problem_id: str
    stage: str
    outcome: str  # "kept" | "discarded"
    reason: str = ""
    artifacts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "stage": self.stage,
            "outcome": self.outcome,
            "reason": self.reason,
            "artifacts": self.artifacts,
        }


@dataclass
class PipelineConfig:
    task_family: str = "math"
    template_dir: str | Path | None = None
    out_path: str | Path | None = None
    audit_path: str | Path | None = None
    checkpoint_path: str | Path | None = None
    job_timeout: float = 10.0


def _generation_slots(problem: Problem, tpl) -> dict[str, str]:
    slots = {"query": problem.text}
    if "table" in tpl.required_slots:
        slots["table"] = problem.context or ""
    if "solution" in tpl.required_slots:
        raise ValueError(f"template {tpl.template_id} is not a generation template")
    return slots


def generate_solution(
    problem: Problem,
    llm: LlmProvider,
    sandbox: SandboxConfig,
    cfg: PipelineConfig,
    audit: list[StageRecord],
) -> str | None:
    """One problem through the generation stage; code string iff kept."""
    tpl = load_template(f"generate_{cfg.task_family}", cfg.template_dir)
    try:
        response = llm.complete(
            build_messages(render(tpl, _generation_slots(problem, tpl))),
            template_id=tpl.template_id,
        )
    except BudgetExceededError:
        raise
    except ProviderError as exc:
        audit.append(StageRecord(problem.id, "generate", "discarded", f"provider-error: {exc}"))
        return None
    try:
        code = extract_code_block(response)
    except NoCodeFoundError:
        audit.append(
            StageRecord(problem.id, "generate", "discarded", "no-code", {"response": response})
        )
        return None
    try:
        result = run_job(ExecJob(code=code, call=SOLVE_CALL, timeout=cfg.job_timeout), sandbox)
    except ProtocolError as exc:
        audit.append(StageRecord(problem.id, "generate", "discarded", f"sandbox: {exc}"))
        return None
    if result.status != "ok":
        audit.append(
            StageRecord(
                problem.id, "generate", "discarded", result.status,
                {"stderr_tail": result.stderr_tail[-500:], "code": code},
            )
        )
        return None
    if not answers_match(result.value, problem.answer):
        audit.append(
            StageRecord(
                problem.id, "generate", "discarded", "wrong-answer",
                {"value": result.value, "expected": problem.answer, "code": code},
            )
        )
        return None
    audit.append(
        StageRecord(problem.id, "generate", "kept", "", {"response": response, "code": code})
    )
    return code


def generate_solutions(
    problems: Sequence[Problem],
    llm: LlmProvider,
    sandbox: SandboxConfig,
    cfg: PipelineConfig | None = None,
    audit: list[StageRecord] | None = None,
) -> list[tuple[Problem, str]]:
    """Generation stage over a batch; keeps bug-free, correct solutions."""
    cfg = cfg or PipelineConfig()
    audit = audit if audit is not None else []
    kept = []
    for problem in problems:
        code = generate_solution(problem, llm, sandbox, cfg, audit)
        if code is not None:
            kept.append((problem, code))
    return kept


def abstract_tool(
    problem: Problem,
    code: str,
    llm: LlmProvider,
    embedder: EmbeddingProvider,
    cfg: PipelineConfig | None = None,
    audit: list[StageRecord] | None = None,
) -> Tool | None:
    """Abstraction stage: rewrite the specific solution into a general tool.

    The reply's final code block is parsed for name/arity/docstring and the
    three view embeddings are computed; any shape failure discards the tool.
    """
    cfg = cfg or PipelineConfig()
    audit = audit if audit is not None else []
    tpl = load_template(f"abstract_{cfg.task_family}", cfg.template_dir)
    slots = {"query": problem.text, "solution": code}
    if "table" in tpl.required_slots:
        slots["table"] = problem.context or ""
    try:
        response = llm.complete(build_messages(render(tpl, slots)), template_id=tpl.template_id)
    except BudgetExceededError:
        raise
    except ProviderError as exc:
        audit.append(StageRecord(problem.id, "abstract", "discarded", f"provider-error: {exc}"))
        return None
    try:
        tool_code = extract_code_block(response)
        parsed = parse_function(tool_code)
    except (NoCodeFoundError, NoFunctionError, SyntaxShapeError) as exc:
        audit.append(
            StageRecord(
                problem.id, "abstract", "discarded",
                type(exc).__name__, {"response": response},
            )
        )
        return None
    if not parsed.docstring.strip():
        audit.append(
            StageRecord(problem.id, "abstract", "discarded", "no-docstring", {"code": tool_code})
        )
        return None
    try:
        emb = ViewEmbeddings(
            problem=tuple(embedder.embed(problem.text)),
            name=tuple(embedder.embed(parsed.name)),
            doc=tuple(embedder.embed(parsed.docstring)),
        )
    except EmptyTextError:
        audit.append(StageRecord(problem.id, "abstract", "discarded", "unembeddable"))
        return None
    tool = make_tool(problem, parsed.name, parsed.docstring, parsed.arity, tool_code, emb)
    audit.append(
        StageRecord(problem.id, "abstract", "kept", "", {"response": response, "tool_id": tool.id})
    )
    return tool


_CALL_CHARS = re.compile(r"[\w.]")


def extract_invocation(response: str, name: str) -> str | None:
    """Last balanced call expression of ``name(...)`` in a reply."""
    start = response.rfind(name + "(")
    if start == -1:
        return None
    depth = 0
    for i in range(start + len(name), len(response)):
        ch = response[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return response[start : i + 1]
    return None


def validate_tool(
    tool: Tool,
    problem: Problem,
    llm: LlmProvider,
    sandbox: SandboxConfig,
    cfg: PipelineConfig | None = None,
    audit: list[StageRecord] | None = None,
) -> bool:
    """Validation stage: the LLM invokes the tool on its origin problem.

    Single attempt; true only when the call runs clean and reproduces the
    reference answer. The answer itself is never shown to the model.
    """
    cfg = cfg or PipelineConfig()
    audit = audit if audit is not None else []
    tpl = load_template("validate", cfg.template_dir)
    slots = {"tool_code": tool.code, "query": problem.full_text()}

    def discard(reason: str, **artifacts) -> bool:
        audit.append(StageRecord(problem.id, "validate", "discarded", reason, artifacts))
        return False

    try:
        response = llm.complete(build_messages(render(tpl, slots)), template_id=tpl.template_id)
    except BudgetExceededError:
        raise
    except ProviderError as exc:
        return discard(f"provider-error: {exc}")
    invocation = extract_invocation(response, tool.name)
    if invocation is None:
        return discard("no-invocation", response=response)
    try:
        result = run_job(
            ExecJob(code=tool.code, call=invocation, timeout=cfg.job_timeout), sandbox
        )
    except ProtocolError as exc:
        return discard(f"sandbox: {exc}")
    if result.status != "ok":
        return discard("error", stderr_tail=result.stderr_tail[-500:], invocation=invocation)
    if not answers_match(result.value, problem.answer):
        return discard("wrong-answer", value=result.value, expected=problem.answer)
    audit.append(
        StageRecord(problem.id, "validate", "kept", "", {"invocation": invocation})
    )
    return True


def _fallback_winner(group: list[Tool]) -> Tool:
    # deterministic proxy for "most comprehensive"
    return sorted(group, key=lambda t: (-len(t.docstring), -len(t.code), t.id))[0]


def deduplicate(
    ts: Toolset,
    llm: LlmProvider | None,
    cfg: PipelineConfig | None = None,
    audit: list[StageRecord] | None = None,
) -> Toolset:
    """Keep one tool per (name, arity) group.

    Multi-member groups ask the LLM to pick the most general member; an
    unparseable or out-of-range reply (or no LLM at all) falls back to
    longest docstring, then longer code, then smallest id.
    """
    cfg = cfg or PipelineConfig()
    audit = audit if audit is not None else []
    groups: dict[tuple[str, int], list[Tool]] = {}
    order: list[tuple[str, int]] = []
    for tool in ts:
        if tool.group_key not in groups:
            order.append(tool.group_key)
        groups.setdefault(tool.group_key, []).append(tool)

    winners: list[Tool] = []
    for key in order:
        group = groups[key]
        if len(group) == 1:
            winners.append(group[0])
            continue
        winner = None
        if llm is not None:
            tpl = load_template("dedup", cfg.template_dir)
            listing = "\n\n".join(f"No. {i}:\n{t.code}" for i, t in enumerate(group))
            try:
                response = llm.complete(
                    build_messages(render(tpl, {"tools": listing})), template_id=tpl.template_id
                )
                match = re.search(r"-?\d+", response)
                if match is not None:
                    idx = int(match.group())
                    if 0 <= idx < len(group):
                        winner = group[idx]
            except BudgetExceededError:
                raise
            except ProviderError:
                winner = None
        if winner is None:
            winner = _fallback_winner(group)
        winners.append(winner)
        for tool in group:
            if tool.id != winner.id:
                audit.append(
                    StageRecord(
                        tool.origin_problem_id, "dedup", "discarded",
                        f"duplicate of {winner.id}", {"tool_id": tool.id},
                    )
                )
    for tool in winners:
        audit.append(StageRecord(tool.origin_problem_id, "dedup", "kept", "", {"tool_id": tool.id}))
    deduped = Toolset(winners, meta=dict(ts.meta))
    assert all(len(ids) == 1 for ids in deduped.group_index.values())
    return deduped


class Checkpoint:
    """Per-problem funnel results, persisted after every completed problem."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self.entries: dict[str, dict] = {}
        self.last_completed: str | None = None
        if self.path and self.path.exists():
            saved = json.loads(self.path.read_text(encoding="utf-8"))
            self.entries = saved["entries"]
            self.last_completed = saved.get("last_completed")

    def done(self, problem_id: str) -> bool:
        return problem_id in self.entries

    def record(self, problem_id: str, tool: Tool | None, records: list[StageRecord]) -> None:
        self.entries[problem_id] = {
            "tool": tool_to_json(tool) if tool else None,
            "records": [r.to_json() for r in records],
        }
        self.last_completed = problem_id
        self.flush()

    def flush(self) -> None:
        if self.path:
            self.path.write_text(
                json.dumps({"entries": self.entries, "last_completed": self.last_completed}),
                encoding="utf-8",
            )

    def replay(self, problem_id: str) -> tuple[Tool | None, list[StageRecord]]:
        entry = self.entries[problem_id]
        tool = tool_from_json(entry["tool"]) if entry["tool"] else None
        records = [
            StageRecord(r["problem_id"], r["stage"], r["outcome"], r["reason"], r["artifacts"])
            for r in entry["records"]
        ]
        return tool, records


def forge(
    corpus: Sequence[Problem],
    sampler_cfg: SamplerConfig,
    llm: LlmProvider,
    sandbox: SandboxConfig,
    embedder: EmbeddingProvider,
    cfg: PipelineConfig | None = None,
    sims=None,
) -> Toolset:
    """Sample problems, run the four-stage funnel, persist the toolset.

    Budget exhaustion aborts with a resumable checkpoint; re-running with
    the same configuration completes the run and produces the same file an
    uninterrupted run would have.
    """
    from .sampling import embedding_oracle  # local to avoid import noise at module load

    cfg = cfg or PipelineConfig()
    audit: list[StageRecord] = []
    checkpoint = Checkpoint(cfg.checkpoint_path)

    if corpus:
        oracle = sims or embedding_oracle(corpus, embedder)
        state = run_sampler_state(corpus, sampler_cfg, oracle)
        by_id = {p.id: p for p in corpus}
        sampled = [by_id[pid] for pid in state.selected]
        epochs = state.selection_epoch
    else:
        sampled, epochs = [], {}

    validated: list[Tool] = []
    for problem in sampled:
        if checkpoint.done(problem.id):
            tool, records = checkpoint.replay(problem.id)
            audit.extend(records)
            if tool is not None:
                validated.append(tool)
            continue
        records: list[StageRecord] = []
        try:
            tool = None
            code = generate_solution(problem, llm, sandbox, cfg, records)
            if code is not None:
                candidate = abstract_tool(problem, code, llm, embedder, cfg, records)
                if candidate is not None and validate_tool(
                    candidate, problem, llm, sandbox, cfg, records
                ):
                    tool = candidate
        except BudgetExceededError:
            checkpoint.flush()
            audit.extend(records)
            _write_audit(cfg.audit_path, audit)
            raise
        checkpoint.record(problem.id, tool, records)
        audit.extend(records)
        if tool is not None:
            validated.append(tool)

    pre_dedup = Toolset(validated)
    try:
        ts = deduplicate(pre_dedup, llm, cfg, audit)
    except BudgetExceededError:
        checkpoint.flush()
        _write_audit(cfg.audit_path, audit)
        raise

    counts = {
        "sampled": len(sampled),
        "generated": sum(1 for r in audit if r.stage == "generate" and r.outcome == "kept"),
        "abstracted": sum(1 for r in audit if r.stage == "abstract" and r.outcome == "kept"),
        "validated": sum(1 for r in audit if r.stage == "validate" and r.outcome == "kept"),
        "deduped": len(ts),
    }
    ts.meta.update(
        {
            "task_family": cfg.task_family,
            "sampler": {
                "n_init": sampler_cfg.n_init,
                "k_per_epoch": sampler_cfg.k_per_epoch,
                "epochs": sampler_cfg.epochs,
                "seed": sampler_cfg.seed,
            },
            "llm_provider": llm.provider_id,
            "llm_model": llm.model_id,
            "embedding_provider": embedder.provider_id,
            "temperature": getattr(llm, "temperature", 0.0),
            "funnel": counts,
            "tool_epochs": {t.id: epochs.get(t.origin_problem_id, 0) for t in ts},
        }
    )
    if cfg.out_path:
        save_toolset(ts, cfg.out_path)
    _write_audit(cfg.audit_path, audit)
    return ts


def _write_audit(path: str | Path | None, audit: list[StageRecord]) -> None:
    if not path:
        return
    lines = [json.dumps(r.to_json(), sort_keys=True) for r in audit]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
