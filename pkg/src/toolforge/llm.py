"""Chat-completion providers, prompt templates, and response parsing.

Every pipeline stage goes through this module, so the whole system can run
against either a remote OpenAI-compatible endpoint or the deterministic
replay provider used by tests and offline demos. Replay scripts match on
``(template_id, prompt_hash)`` with ``"*"`` wildcards on either key.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import requests

from .errors import (
    BudgetExceededError,
    MissingSlotError,
    NoCodeFoundError,
    ProviderError,
    UnknownSlotError,
)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r}")


@dataclass(frozen=True)
class PromptTemplate:
    """Template body with named ``{slot}`` placeholders.

    Only declared slots are treated as placeholders; any other brace
    characters in the body (few-shot code examples are full of them) pass
    through untouched, and substituted values are never re-expanded.
    """

    template_id: str
    body: str
    required_slots: tuple[str, ...]

    def __post_init__(self):
        for slot in self.required_slots:
            if "{%s}" % slot not in self.body:
                raise ValueError(
                    f"template {self.template_id}: slot {{{slot}}} not present in body"
                )


def render(tpl: PromptTemplate, slots: dict[str, str]) -> str:
    for name in slots:
        if name not in tpl.required_slots:
            raise UnknownSlotError(name)
    for name in tpl.required_slots:
        if name not in slots:
            raise MissingSlotError(name)
    if not tpl.required_slots:
        return tpl.body
    pattern = re.compile("|".join("\\{%s\\}" % re.escape(s) for s in tpl.required_slots))
    return pattern.sub(lambda m: slots[m.group(0)[1:-1]], tpl.body)


# Template assets shipped with the package, with their declared slots.
TEMPLATE_SLOTS: dict[str, tuple[str, ...]] = {
    "generate_vqa": ("query",),
    "generate_tabular": ("table", "query"),
    "generate_math": ("query",),
    "abstract_vqa": ("query", "solution"),
    "abstract_tabular": ("table", "query", "solution"),
    "abstract_math": ("query", "solution"),
    "validate": ("tool_code", "query"),
    "dedup": ("tools",),
    "retrieve_vqa": ("query",),
    "retrieve_tabular": ("table", "query"),
    "retrieve_math": ("query",),
    "solve": ("tools", "query"),
    "solve_direct": ("query",),
    "vqa_filter": ("query",),
    "answer_judge": ("question", "prediction", "reference"),
}

_DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "templates"


def load_template(name: str, template_dir: str | Path | None = None) -> PromptTemplate:
    if name not in TEMPLATE_SLOTS:
        raise KeyError(f"unknown template {name!r}; known: {sorted(TEMPLATE_SLOTS)}")
    directory = Path(template_dir) if template_dir else _DEFAULT_TEMPLATE_DIR
    body = (directory / f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(template_id=name, body=body, required_slots=TEMPLATE_SLOTS[name])


def prompt_hash(messages: Sequence[ChatMessage]) -> str:
    h = hashlib.sha256()
    for msg in messages:
        h.update(msg.role.encode())
        h.update(b"\x00")
        h.update(msg.content.encode("utf-8", errors="surrogatepass"))
        h.update(b"\x01")
    return h.hexdigest()


def approx_tokens(text: str) -> int:
    # Whitespace tokens; good enough for budget accounting and the ledger.
    return len(text.split())


class CallBudget:
    """Shared call/token budget; checked before any provider I/O."""

    def __init__(self, max_calls: int | None = None, max_tokens: int | None = None):
        self.max_calls = max_calls
        self.max_tokens = max_tokens
        self.calls_used = 0
        self.tokens_used = 0
        self._lock = threading.Lock()

    def charge_call(self) -> None:
        with self._lock:
            if self.max_calls is not None and self.calls_used >= self.max_calls:
                raise BudgetExceededError(f"call budget of {self.max_calls} exhausted")
            if self.max_tokens is not None and self.tokens_used >= self.max_tokens:
                raise BudgetExceededError(f"token budget of {self.max_tokens} exhausted")
            self.calls_used += 1

    def charge_tokens(self, n: int) -> None:
        with self._lock:
            self.tokens_used += n


class CallLedger:
    """JSONL audit trail of every completion call."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, **fields) -> None:
        line = json.dumps(fields, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class LlmProvider:
    """Base chat provider: budget check, ledger entry, then the real call."""

    provider_id = "base"
    model_id = ""

    def __init__(self, budget: CallBudget | None = None, ledger: CallLedger | None = None):
        self.budget = budget
        self.ledger = ledger

    def complete(self, messages: Sequence[ChatMessage], template_id: str | None = None) -> str:
        if not messages:
            raise ValueError("messages must be nonempty")
        if self.budget is not None:
            self.budget.charge_call()
        start = time.perf_counter()
        text = self._complete(list(messages), template_id)
        latency_ms = (time.perf_counter() - start) * 1000.0
        prompt_toks = sum(approx_tokens(m.content) for m in messages)
        if self.budget is not None:
            self.budget.charge_tokens(prompt_toks + approx_tokens(text))
        if self.ledger is not None:
            self.ledger.record(
                provider=self.provider_id,
                model=self.model_id,
                template_id=template_id or "",
                prompt_tokens=prompt_toks,
                response_tokens=approx_tokens(text),
                latency_ms=round(latency_ms, 3),
            )
        return text

    def _complete(self, messages: list[ChatMessage], template_id: str | None) -> str:
        raise NotImplementedError


class ReplayProvider(LlmProvider):
    """Deterministic scripted provider for offline runs.

    Rules are ``(template_id, prompt_hash, response)`` triples; either key
    may be ``"*"``. Exact matches win over template wildcards, which win
    over the global wildcard. Unmatched prompts raise ProviderError so a
    stale script fails loudly instead of silently improvising.
    """

    provider_id = "replay"
    model_id = "replay"

    def __init__(self, rules: Iterable[tuple[str, str, str]], **kwargs):
        super().__init__(**kwargs)
        self._exact: dict[tuple[str, str], str] = {}
        self._by_template: dict[str, str] = {}
        self._fallback: str | None = None
        for template_id, phash, response in rules:
            if template_id == "*" and phash == "*":
                self._fallback = response
            elif phash == "*":
                self._by_template[template_id] = response
            else:
                self._exact[(template_id, phash)] = response
        self.match_counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def _complete(self, messages: list[ChatMessage], template_id: str | None) -> str:
        tid = template_id or "*"
        phash = prompt_hash(messages)
        response = self._exact.get((tid, phash))
        key = f"{tid}:{phash[:12]}"
        if response is None:
            response = self._by_template.get(tid)
            key = f"{tid}:*"
        if response is None:
            response = self._fallback
            key = "*:*"
        if response is None:
            raise ProviderError(
                f"replay script has no entry for template={tid} hash={phash[:12]}"
            )
        with self._lock:
            self.match_counts[key] = self.match_counts.get(key, 0) + 1
        return response


def script_entry(
    tpl: PromptTemplate, slots: dict[str, str], response: str, system: str | None = None
) -> tuple[str, str, str]:
    """Build an exact replay rule for one rendered prompt."""
    messages = build_messages(render(tpl, slots), system)
    return (tpl.template_id, prompt_hash(messages), response)


def build_messages(user_content: str, system: str | None = None) -> list[ChatMessage]:
    messages = []
    if system:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", user_content))
    return messages


def load_replay_script(path: str | Path) -> "ReplayProvider":
    rules = []
    for obj in json.loads(Path(path).read_text(encoding="utf-8")):
        rules.append((obj.get("template_id", "*"), obj.get("prompt_hash", "*"), obj["response"]))
    return ReplayProvider(rules)


def save_replay_script(rules: Iterable[tuple[str, str, str]], path: str | Path) -> None:
    rows = [
        {"template_id": t, "prompt_hash": h, "response": r} for t, h, r in rules
    ]
    Path(path).write_text(json.dumps(rows, indent=1), encoding="utf-8")


class RemoteChatProvider(LlmProvider):
    """OpenAI-compatible chat-completions client with retry/backoff.

    Temperature is 0 by default for reproducibility. Transient failures
    (429, 5xx, network errors) retry with exponential backoff up to
    ``max_retries``; the cumulative count is observable via ``retries_used``.
    """

    provider_id = "remote"
    _RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(
        self,
        model: str,
        base_url: str | None = None,
        api_key: str | None = None,
        temperature: float = 0.0,
        max_retries: int = 3,
        timeout: float = 30.0,
        backoff_base: float = 0.5,
        max_in_flight: int = 8,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.model_id = model
        self.base_url = (base_url or os.environ.get("FORGE_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("FORGE_API_KEY", "")
        self.temperature = temperature
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.retries_used = 0
        self._gate = threading.Semaphore(max_in_flight)

    def _complete(self, messages: list[ChatMessage], template_id: str | None) -> str:
        payload = {
            "model": self.model_id,
            "temperature": self.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        last_error: str = "no attempt made"
        last_status: int | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                self.retries_used += 1
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = requests.post(
                        f"{self.base_url}/chat/completions",
                        json=payload,
                        headers={"Authorization": f"Bearer {self.api_key}"},
                        timeout=self.timeout,
                    )
            except requests.RequestException as exc:
                last_error = f"network error: {exc}"
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, ValueError) as exc:
                    raise ProviderError(f"malformed completion response: {exc}") from exc
            last_status = resp.status_code
            last_error = f"HTTP {resp.status_code}"
            if resp.status_code not in self._RETRYABLE:
                break
        raise ProviderError(f"completion failed: {last_error}", status=last_status)


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_DEF_RE = re.compile(r"^(?:async\s+)?def\s+\w+", re.MULTILINE)
_CODE_CONTINUATION = re.compile(
    r"^(?:\s|$)|^(?:def |async |class |@|#|import |from |\)|\]|\}|'''|\"\"\")"
)


def extract_code_block(response: str) -> str:
    """Pull the tool code out of a completion.

    Fenced blocks win (the last one, since answers put the final tool
    last); otherwise the longest run of lines opening with a function
    definition is taken, with trailing prose dropped.
    """
    fences = _FENCE_RE.findall(response)
    if fences:
        return fences[-1].rstrip("\n")

    lines = response.splitlines()
    regions: list[tuple[int, int]] = []
    for i, line in enumerate(lines):
        if not _DEF_RE.match(line):
            continue
        j = i
        while j + 1 < len(lines) and _CODE_CONTINUATION.match(lines[j + 1]):
            j += 1
        while j > i and not lines[j].strip():
            j -= 1
        regions.append((i, j))
    if not regions:
        raise NoCodeFoundError("no fenced code block or function definition in response")
    start, end = max(regions, key=lambda r: (r[1] - r[0], r[0]))
    return "\n".join(lines[start : end + 1])


def complete(provider: LlmProvider, messages: Sequence[ChatMessage], template_id: str | None = None) -> str:
    return provider.complete(messages, template_id=template_id)
