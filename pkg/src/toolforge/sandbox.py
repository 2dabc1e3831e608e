"""Run untrusted tool code in an isolated interpreter subprocess.

The bridge side of the sandbox protocol: one JSON job on the shim's
stdin, one JSON result line on its stdout. Each job gets a fresh process
killed at the wall-clock timeout. The shim applies CPU/memory rlimits and
chdirs into a throwaway temp dir, but this is a crash barrier, not a
security boundary: run genuinely untrusted toolsets in a container.
"""

from __future__ import annotations

import json
import math
import os
import re
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ProtocolError, ShimMissingError

TIMEOUT_GRACE_S = 2.0

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class ExecJob:
    code: str
    call: str
    inputs: dict = field(default_factory=dict)
    timeout: float = 10.0

    def __post_init__(self):
        if not self.call:
            raise ValueError("job call must be nonempty")
        if self.timeout <= 0:
            raise ValueError("job timeout must be positive")


@dataclass(frozen=True)
class ExecResult:
    status: str  # "ok" | "error" | "timeout"
    value: str | None
    stderr_tail: str
    wall_time: float

    def __post_init__(self):
        if (self.value is not None) != (self.status == "ok"):
            raise ValueError("value must be present exactly when status is ok")


@dataclass(frozen=True)
class SandboxConfig:
    shim_path: str | None = None
    mem_mb: int = 512
    python: str = sys.executable

    def resolve_shim(self) -> Path:
        # an explicitly configured path must exist; only unset config falls
        # through to the development-checkout default
        for source, value in (("shim_path", self.shim_path), ("FORGE_SHIM", os.environ.get("FORGE_SHIM"))):
            if value:
                path = Path(value)
                if not path.is_file():
                    raise ShimMissingError(f"{source} points at {value}, which does not exist")
                return path
        default = Path(__file__).resolve().parents[2] / "shim" / "craft_shim.py"
        if default.is_file():
            return default
        raise ShimMissingError(
            "sandbox shim not found; pass shim_path or set FORGE_SHIM"
        )


def run_job(job: ExecJob, config: SandboxConfig | None = None) -> ExecResult:
    """Execute one job in a fresh shim process; kills it at the timeout."""
    config = config or SandboxConfig()
    shim = config.resolve_shim()
    payload = json.dumps(
        {
            "code": job.code,
            "call": job.call,
            "inputs": job.inputs,
            "limits": {"cpu_s": math.ceil(job.timeout), "mem_mb": config.mem_mb},
        }
    )
    start = time.perf_counter()
    try:
        proc = subprocess.run(
            [config.python, str(shim)],
            input=payload,
            capture_output=True,
            text=True,
            timeout=job.timeout,
        )
    except subprocess.TimeoutExpired as exc:
        wall = time.perf_counter() - start
        tail = (exc.stderr or b"")
        if isinstance(tail, bytes):
            tail = tail.decode("utf-8", errors="replace")
        return ExecResult("timeout", None, tail[-2000:], wall)
    wall = time.perf_counter() - start

    if proc.returncode != 0:
        raise ProtocolError(
            f"shim exited with {proc.returncode}: {proc.stderr.strip()[-500:]}"
        )
    line = proc.stdout.strip().splitlines()
    if len(line) != 1:
        raise ProtocolError(f"expected exactly one result line, got {len(line)}")
    try:
        obj = json.loads(line[0])
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed shim output: {exc.msg}") from exc
    status = obj.get("status")
    if status not in ("ok", "error"):
        raise ProtocolError(f"shim reported unknown status {status!r}")
    value = obj.get("value") if status == "ok" else None
    if status == "ok" and value is None:
        raise ProtocolError("ok result without a value")
    return ExecResult(status, value, obj.get("stderr_tail", ""), wall)


def normalize_answer(text: str) -> str:
    return _WS_RE.sub(" ", text.strip().lower())


def answers_match(predicted: str, reference: str) -> bool:
    """Compare answers: normalized string equality, with numeric tolerance
    (1e-6 relative) when both sides parse as numbers."""
    p, r = normalize_answer(predicted), normalize_answer(reference)
    if p == r:
        return True
    try:
        return math.isclose(float(p), float(r), rel_tol=1e-6)
    except (ValueError, OverflowError):
        return False
