"""Domain types and the toolset persistence format.

A toolset file is JSONL: one header line tagged ``craft-toolset/1``
carrying run metadata, then one line per tool::

    {"schema": "craft-toolset/1", "meta": {...}}
    {"id": ..., "origin_problem": {"id", "text"}, "name", "docstring",
     "arity", "code", "emb": {"problem": [...], "name": [...], "doc": [...]}}

Embeddings are stored inline so retrieval stays reproducible even if the
embedding provider changes later; the provider id is recorded in meta.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import snippets
from .embedding import check_unit_norm
from .errors import FormatError, InvariantError, SerializationError

SCHEMA_TAG = "craft-toolset/1"


@dataclass(frozen=True)
class Problem:
    """One task instance from a problem corpus."""

    id: str
    text: str
    context: str | None = None
    answer: str = ""
    task_tag: str = ""

    def __post_init__(self):
        if not self.id:
            raise InvariantError("problem id must be nonempty", field="id")
        if not self.text:
            raise InvariantError("problem text must be nonempty", field="text")

    def full_text(self) -> str:
        """Problem text with its context (e.g. a serialized table) appended."""
        if self.context:
            return f"{self.text}\n{self.context}"
        return self.text


@dataclass(frozen=True)
class ViewEmbeddings:
    """Unit-norm vectors for the three retrieval views of a tool."""

    problem: tuple[float, ...]
    name: tuple[float, ...]
    doc: tuple[float, ...]


@dataclass(frozen=True)
class Tool:
    id: str
    origin_problem_id: str
    origin_problem_text: str
    name: str
    docstring: str
    arity: int
    code: str
    emb: ViewEmbeddings

    @property
    def group_key(self) -> tuple[str, int]:
        return (self.name, self.arity)


def tool_id(name: str, arity: int, code: str) -> str:
    """Deterministic content hash identifying a tool."""
    payload = f"{name}\x00{arity}\x00{code}".encode("utf-8", errors="surrogatepass")
    return hashlib.sha256(payload).hexdigest()[:16]


def make_tool(
    problem: Problem,
    name: str,
    docstring: str,
    arity: int,
    code: str,
    emb: ViewEmbeddings,
) -> Tool:
    return Tool(
        id=tool_id(name, arity, code),
        origin_problem_id=problem.id,
        origin_problem_text=problem.text,
        name=name,
        docstring=docstring,
        arity=arity,
        code=code,
        emb=emb,
    )


def validate_tool(tool: Tool) -> None:
    """Re-verify all Tool invariants; raises InvariantError naming the field."""
    snippets.verify_tool_shape(tool)
    dims = {len(tool.emb.problem), len(tool.emb.name), len(tool.emb.doc)}
    if len(dims) != 1:
        raise InvariantError(
            f"tool {tool.id}: embedding views have mixed dimensions {sorted(dims)}",
            field="emb",
        )
    for view in ("problem", "name", "doc"):
        if not check_unit_norm(getattr(tool.emb, view)):
            raise InvariantError(
                f"tool {tool.id}: {view} embedding is not unit-norm", field="emb"
            )


class Toolset:
    """Append-only collection of tools with a (name, arity) group index.

    Mutation is single-writer; once populated the instance can be shared
    read-only across threads.
    """

    def __init__(self, tools: Iterable[Tool] = (), meta: dict | None = None):
        self.tools: list[Tool] = []
        self.meta: dict = dict(meta or {})
        self.group_index: dict[tuple[str, int], list[str]] = {}
        self._by_id: dict[str, Tool] = {}
        for tool in tools:
            self.add(tool)

    def add(self, tool: Tool) -> None:
        if tool.id in self._by_id:
            return
        self.tools.append(tool)
        self._by_id[tool.id] = tool
        self.group_index.setdefault(tool.group_key, []).append(tool.id)

    def get(self, tool_id_: str) -> Tool:
        return self._by_id[tool_id_]

    def ids(self) -> list[str]:
        return [t.id for t in self.tools]

    def rebuild_index(self) -> dict[tuple[str, int], list[str]]:
        index: dict[tuple[str, int], list[str]] = {}
        for tool in self.tools:
            index.setdefault(tool.group_key, []).append(tool.id)
        return index

    def __len__(self) -> int:
        return len(self.tools)

    def __iter__(self) -> Iterator[Tool]:
        return iter(self.tools)

    def __contains__(self, tool_id_: str) -> bool:
        return tool_id_ in self._by_id

    def __eq__(self, other) -> bool:
        if not isinstance(other, Toolset):
            return NotImplemented
        return self.tools == other.tools and self.meta == other.meta

    def __repr__(self) -> str:
        return f"Toolset({len(self.tools)} tools)"


def tool_to_json(tool: Tool) -> dict:
    return {
        "id": tool.id,
        "origin_problem": {"id": tool.origin_problem_id, "text": tool.origin_problem_text},
        "name": tool.name,
        "docstring": tool.docstring,
        "arity": tool.arity,
        "code": tool.code,
        "emb": {
            "problem": list(tool.emb.problem),
            "name": list(tool.emb.name),
            "doc": list(tool.emb.doc),
        },
    }


def tool_from_json(obj: dict) -> Tool:
    origin = obj["origin_problem"]
    emb = obj["emb"]
    return Tool(
        id=obj["id"],
        origin_problem_id=origin["id"],
        origin_problem_text=origin["text"],
        name=obj["name"],
        docstring=obj["docstring"],
        arity=int(obj["arity"]),
        code=obj["code"],
        emb=ViewEmbeddings(
            problem=tuple(float(x) for x in emb["problem"]),
            name=tuple(float(x) for x in emb["name"]),
            doc=tuple(float(x) for x in emb["doc"]),
        ),
    )


def save_toolset(ts: Toolset, path: str | Path) -> None:
    """Write header + one JSON line per tool; reload round-trips exactly."""
    lines = [json.dumps({"schema": SCHEMA_TAG, "meta": ts.meta}, sort_keys=True)]
    for tool in ts.tools:
        try:
            tool.code.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise SerializationError(f"tool {tool.id} code is not valid UTF-8: {exc}") from exc
        lines.append(json.dumps(tool_to_json(tool), sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_toolset(path: str | Path, verify: bool = True) -> Toolset:
    """Load a toolset file, rebuild the group index, re-verify invariants."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty toolset file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed header: {exc.msg}", line=1) from exc
    if not isinstance(header, dict) or header.get("schema") != SCHEMA_TAG:
        raise FormatError(f"missing or unsupported schema tag (want {SCHEMA_TAG})", line=1)

    ts = Toolset(meta=header.get("meta", {}))
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed tool line: {exc.msg}", line=lineno) from exc
        try:
            tool = tool_from_json(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"tool line missing field: {exc}", line=lineno) from exc
        if verify:
            validate_tool(tool)
        ts.add(tool)
    return ts


def load_corpus(path: str | Path) -> list[Problem]:
    """Read a problem corpus: JSONL of {id, text, context, answer, task_tag}."""
    problems = []
    seen: set[str] = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed corpus line: {exc.msg}", line=lineno) from exc
        problem = Problem(
            id=str(obj["id"]),
            text=obj["text"],
            context=obj.get("context"),
            answer=str(obj.get("answer", "")),
            task_tag=obj.get("task_tag", ""),
        )
        if problem.id in seen:
            raise FormatError(f"duplicate problem id {problem.id}", line=lineno)
        seen.add(problem.id)
        problems.append(problem)
    return problems


def save_corpus(problems: Iterable[Problem], path: str | Path) -> None:
    rows = []
    for p in problems:
        rows.append(
            json.dumps(
                {
                    "id": p.id,
                    "text": p.text,
                    "context": p.context,
                    "answer": p.answer,
                    "task_tag": p.task_tag,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")


@dataclass(frozen=True)
class RetrievalQuery:
    """Expanded query: the problem text plus LLM-proposed names/docstring."""

    problem_text: str
    expanded_names: tuple[str, ...] = ()
    expanded_docstring: str = ""
    expansion_failed: bool = False

    def __post_init__(self):
        if not self.problem_text:
            raise InvariantError("query problem_text must be nonempty", field="problem_text")
        if not self.expanded_names and not self.expansion_failed:
            raise InvariantError(
                "empty expanded_names requires the expansion_failed flag",
                field="expanded_names",
            )


@dataclass(frozen=True)
class RetrievalResult:
    """Outcome of multi-view retrieval; empty ``selected`` means fall back
    to direct generation."""

    selected: tuple[str, ...]
    view_hits: dict[str, tuple[str, ...]] = field(default_factory=dict)
    frequencies: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.selected) > 3:
            raise InvariantError("at most 3 tools may be selected", field="selected")
        hits = set()
        for ids in self.view_hits.values():
            hits.update(ids)
        for tid in self.selected:
            if self.frequencies.get(tid, 0) < 2:
                raise InvariantError(
                    f"selected tool {tid} occurs in fewer than 2 views", field="selected"
                )
            if tid not in hits:
                raise InvariantError(
                    f"selected tool {tid} not present in any view list", field="selected"
                )
