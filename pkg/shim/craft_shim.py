#!/usr/bin/env python3
"""Interpreter-side sandbox shim.

Protocol: stdin carries one JSON object
    {"code": str, "call": str, "inputs": {name: value}, "limits": {"cpu_s", "mem_mb"}}
and stdout carries exactly one JSON line
    {"status": "ok"|"error", "value": str, "stderr_tail": str, "wall_ms": int}

The code string is executed in a fresh namespace seeded with the inputs,
then the call expression is evaluated and its result stringified. Before
any user code runs the process chdirs into a throwaway temp directory and
applies CPU/memory rlimits. User prints are captured into stderr_tail;
fd 1 is re-pointed at stderr so nothing can contaminate the protocol
line, which is written to a private dup of the original stdout.

Exit code 0 covers both ok and error results; nonzero means the protocol
itself failed (malformed stdin, unwritable stdout).
"""

import io
import json
import os
import shutil
import signal
import sys
import tempfile
import time
import traceback

TAIL_CHARS = 2000


class CpuLimitExceeded(Exception):
    pass


def _apply_limits(limits):
    try:
        import resource
    except ImportError:  # non-POSIX: run without rlimits
        return
    cpu_s = int(limits.get("cpu_s", 10))
    mem_mb = int(limits.get("mem_mb", 512))
    try:
        if cpu_s > 0:
            def on_xcpu(signum, frame):
                raise CpuLimitExceeded(f"cpu limit of {cpu_s}s exceeded")

            signal.signal(signal.SIGXCPU, on_xcpu)
            # soft limit signals us, hard limit is the backstop kill
            resource.setrlimit(resource.RLIMIT_CPU, (cpu_s, cpu_s + 1))
        if mem_mb > 0:
            limit = mem_mb * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (OSError, ValueError) as exc:
        print(f"shim: could not apply rlimits: {exc}", file=sys.stderr)


def run_job(job):
    captured = io.StringIO()
    status, value = "ok", None
    start = time.perf_counter()
    namespace = {"__name__": "__sandbox__"}
    namespace.update(job.get("inputs") or {})
    sys.stdout = captured
    try:
        exec(job.get("code", ""), namespace)  # noqa: S102 - that is the job
        result = eval(job["call"], namespace)
        value = str(result)
    except BaseException:
        status = "error"
        captured.write(traceback.format_exc())
    finally:
        sys.stdout = sys.__stdout__
    wall_ms = int((time.perf_counter() - start) * 1000)
    out = {
        "status": status,
        "stderr_tail": captured.getvalue()[-TAIL_CHARS:],
        "wall_ms": wall_ms,
    }
    if status == "ok":
        out["value"] = value
    return out


def shim_main():
    # Private handle on the real stdout; fd 1 then aliases stderr so stray
    # writes (even os.write(1, ...)) cannot break the protocol.
    protocol_fd = os.dup(1)
    os.dup2(2, 1)
    sys.stdout = sys.__stdout__ = os.fdopen(1, "w", closefd=False)

    raw = sys.stdin.read()
    try:
        job = json.loads(raw)
        if not isinstance(job, dict) or not job.get("call"):
            raise ValueError("job must be an object with a nonempty 'call'")
    except ValueError as exc:
        print(f"shim: malformed job on stdin: {exc}", file=sys.stderr)
        return 2

    workdir = tempfile.mkdtemp(prefix="shim-job-")
    os.chdir(workdir)
    _apply_limits(job.get("limits") or {})

    result = run_job(job)
    try:
        os.chdir(tempfile.gettempdir())
        shutil.rmtree(workdir, ignore_errors=True)
    except OSError:
        pass
    try:
        os.write(protocol_fd, (json.dumps(result) + "\n").encode("utf-8"))
    except OSError as exc:
        print(f"shim: cannot write result: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(shim_main())
