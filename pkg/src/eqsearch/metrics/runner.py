"""Stdin/stdout judge for subject programs.

Each test feeds the program an input on stdin and compares normalized stdout
against the expected output.  The default backend spawns one interpreter
process per test with a timeout and an address-space limit.  The special
interpreter command ``"inprocess"`` executes trusted fixture programs inside
the current process instead, which is orders of magnitude faster and is what
the synthetic training environment uses.
"""

from __future__ import annotations

import io
import os
import shlex
import signal
import subprocess
import sys
import tempfile
from contextlib import redirect_stdout
from dataclasses import dataclass

from .parsing import check_syntax


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class despite the name

    input: str
    expected_output: str


@dataclass
class TestRunConfig:
    __test__ = False  # not a pytest class despite the name

    interpreter_command: str = "{python} {src}"
    per_test_timeout_ms: int = 2000
    memory_limit_bytes: int = 256 * 1024 * 1024
    output_normalization: str = "strip-trailing"
    # count every remaining test as failed after the first timeout; a
    # non-terminating candidate then costs one timeout instead of one per test
    timeout_fail_fast: bool = False

    def __post_init__(self):
        if self.per_test_timeout_ms <= 0:
            raise ValueError("per_test_timeout_ms must be positive")


class EnvironmentFailure(Exception):
    """The judge itself could not run (bad interpreter), distinct from a failing test."""


def normalize_output(text: str) -> str:
    """Strip trailing whitespace per line and trailing blank lines."""
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


PASS, FAIL, TIMEOUT = 1, 0, -1


def _run_one_subprocess(src_path: str, test: TestCase, cfg: TestRunConfig) -> int:
    cmd = [
        part.format(src=src_path, python=sys.executable)
        for part in shlex.split(cfg.interpreter_command)
    ]

    def limits():
        try:
            import resource

            resource.setrlimit(
                resource.RLIMIT_AS, (cfg.memory_limit_bytes, cfg.memory_limit_bytes)
            )
        except (ImportError, ValueError):
            pass

    try:
        proc = subprocess.run(
            cmd,
            input=test.input.encode(),
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            timeout=cfg.per_test_timeout_ms / 1000.0,
            preexec_fn=limits if os.name == "posix" else None,
        )
    except FileNotFoundError as exc:
        raise EnvironmentFailure(f"interpreter not executable: {cmd[0]}") from exc
    except subprocess.TimeoutExpired:
        return TIMEOUT
    if proc.returncode != 0:
        return FAIL
    stdout = proc.stdout.decode(errors="replace")
    ok = normalize_output(stdout) == normalize_output(test.expected_output)
    return PASS if ok else FAIL


class _Timeout(Exception):
    pass


def _raise_timeout(signum, frame):
    raise _Timeout()


def _run_one_inprocess(code, test: TestCase, cfg: TestRunConfig) -> int:
    stdin = io.StringIO(test.input)
    stdout = io.StringIO()
    env_globals = {"__name__": "__main__", "input": lambda prompt="": stdin.readline().rstrip("\n")}

    use_alarm = hasattr(signal, "setitimer") and signal.getsignal(signal.SIGALRM) in (
        signal.SIG_DFL,
        signal.default_int_handler,
        None,
    )
    old_handler = None
    if use_alarm:
        old_handler = signal.signal(signal.SIGALRM, _raise_timeout)
        signal.setitimer(signal.ITIMER_REAL, cfg.per_test_timeout_ms / 1000.0)
    try:
        old_stdin = sys.stdin
        sys.stdin = stdin
        try:
            with redirect_stdout(stdout):
                exec(code, env_globals)
        finally:
            sys.stdin = old_stdin
    except SystemExit as exc:
        if exc.code not in (None, 0):
            return FAIL
    except _Timeout:
        return TIMEOUT
    except Exception:
        return FAIL
    finally:
        if use_alarm:
            signal.setitimer(signal.ITIMER_REAL, 0.0)
            signal.signal(signal.SIGALRM, old_handler)
    ok = normalize_output(stdout.getvalue()) == normalize_output(test.expected_output)
    return PASS if ok else FAIL


def run_tests(source: str, tests: list[TestCase], cfg: TestRunConfig | None = None) -> float:
    """Fraction of tests passed, in [0, 1]."""
    if not tests:
        raise ValueError("tests must be non-empty")
    cfg = cfg or TestRunConfig()

    if check_syntax(source) == 0:
        return 0.0

    def tally(run_one) -> float:
        passed = 0
        for test in tests:
            status = run_one(test)
            if status == PASS:
                passed += 1
            elif status == TIMEOUT and cfg.timeout_fail_fast:
                break
        return passed / len(tests)

    if cfg.interpreter_command == "inprocess":
        try:
            code = compile(source, "<subject>", "exec")
        except SyntaxError:
            return 0.0
        return tally(lambda t: _run_one_inprocess(code, t, cfg))

    with tempfile.NamedTemporaryFile("w", suffix=".py", delete=False) as fh:
        fh.write(source)
        src_path = fh.name
    try:
        return tally(lambda t: _run_one_subprocess(src_path, t, cfg))
    finally:
        os.unlink(src_path)
