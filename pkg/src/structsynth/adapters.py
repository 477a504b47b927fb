"""Subprocess plumbing for pluggable extractors, generators, and judges.

External tools receive one JSON document on stdin and answer on stdout:
extractors and judges answer with JSON, generators with raw program text.
"""

from __future__ import annotations

import json
import subprocess


class AdapterError(Exception):
    """The external command failed, timed out, or wrote nothing."""


def run_json_command(argv: tuple[str, ...], payload: dict, timeout: float = 30.0) -> str:
    """Run argv with payload as JSON on stdin; return its stdout text."""
    try:
        proc = subprocess.run(
            list(argv),
            input=json.dumps(payload),
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except FileNotFoundError as exc:
        raise AdapterError(f"command not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise AdapterError(f"command timed out after {timeout}s: {argv[0]}") from exc
    if proc.returncode != 0:
        detail = proc.stderr.strip() or f"exit code {proc.returncode}"
        raise AdapterError(f"command failed: {detail}")
    return proc.stdout
