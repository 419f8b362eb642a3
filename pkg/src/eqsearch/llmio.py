"""Prompt rendering, LLM clients, and candidate parsing.

Three interchangeable clients share one interface:
  * LiveHttpClient       -- chat-completion endpoint over HTTP
  * ReplayClient         -- bit-deterministic playback of a recorded transcript
  * SyntheticMutatorClient -- offline stand-in that mutates programs locally,
    used for desk-scale training and the acceptance suite

Program texts are embedded in prompts as fenced code blocks, which both keeps
the prompts readable and lets the synthetic client recover (A_i, B) from the
rendered prompt alone.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field, asdict
from typing import Optional, Protocol

from .metrics.parsing import check_syntax

TRANSFORM_TEMPLATE = (
    "Given programs {A} and {B}, transform the first program so that it becomes "
    "syntactically more similar to the second program while retaining its semantics. "
    "Apply only one atomic transformation. Provide only the source code without your comments."
)

TOT_PREAMBLE = (
    "Imagine {n} different experts are answering this question.\n"
    "All experts will write down 1 step of their thinking,\n"
    "then share it with the group.\n"
    "Then all experts will go on to the next step, etc.\n"
    "If any expert realizes they're wrong at any point, then they leave. "
    "The question is ..."
)

EQUIVALENCE_QUESTION = (
    "Are these two programs semantically equivalent? "
    "Answer 'equivalent' or 'not equivalent'."
)

COT_TRIGGER = "Let's think step by step."


def _fence(program: str) -> str:
    return f"```\n{program.rstrip()}\n```"


def render_transform_prompt(a_i: str, b: str) -> str:
    """The one-atomic-transformation prompt with both programs embedded."""
    if not b.strip():
        raise ValueError("target program must be non-empty")
    return TRANSFORM_TEMPLATE.format(A=_fence(a_i), B=_fence(b))


def render_tot_prompt(a: str, b: str, experts: int = 3) -> str:
    if experts < 1:
        raise ValueError("experts must be >= 1")
    question = f"{EQUIVALENCE_QUESTION}\n\nProgram 1:\n{_fence(a)}\n\nProgram 2:\n{_fence(b)}"
    return TOT_PREAMBLE.format(n=experts) + "\n\n" + question


def render_cot_prompt(a: str, b: str) -> str:
    return (
        f"{EQUIVALENCE_QUESTION}\n\nProgram 1:\n{_fence(a)}\n\nProgram 2:\n{_fence(b)}"
        f"\n\n{COT_TRIGGER}"
    )


def render_downstream_prompt(a: str, b: str, steps: list[str]) -> str:
    parts = [
        EQUIVALENCE_QUESTION,
        "",
        "Program 1:",
        _fence(a),
        "",
        "Program 2:",
        _fence(b),
    ]
    if steps:
        parts += ["", "The following sequence of transformations was generated:"]
        for i, step in enumerate(steps, start=1):
            parts += ["", f"Step {i}:", _fence(step)]
    return "\n".join(parts)


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def parse_code_response(response: str) -> str:
    """Extract candidate source from an LLM response; never errors.

    First fenced block wins; without fences, leading prose lines are dropped
    until the remainder starts like a program, else the trimmed response is
    kept whole.
    """
    match = _FENCE_RE.search(response)
    if match:
        return match.group(1).rstrip("\n")
    text = response.strip()
    if not text:
        return ""
    lines = text.split("\n")
    for start in range(len(lines)):
        chunk = "\n".join(lines[start:])
        if check_syntax(chunk):
            return chunk
    return text


def extract_fenced_programs(response: str) -> list[str]:
    """All fenced code blocks in reading order (CoT/ToT sequence extraction)."""
    return [m.group(1).rstrip("\n") for m in _FENCE_RE.finditer(response)]


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 1.0
    top_p: float = 0.9
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    max_tokens: Optional[int] = None

    def key(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class LlmClient(Protocol):
    def complete(self, prompt: str, num_samples: int, params: GenerationParams) -> list[str]:
        ...


class TransportError(Exception):
    pass


class ReplayMiss(Exception):
    pass


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode()).hexdigest()


class TranscriptWriter:
    """Append-only JSON-lines transcript of every request/response."""

    def __init__(self, path: str):
        self.path = path

    def append(self, prompt: str, params: GenerationParams, responses: list[str]) -> None:
        record = {
            "prompt_hash": prompt_hash(prompt),
            "prompt": prompt,
            "params": json.loads(params.key()),
            "responses": responses,
            "timestamp": time.time(),
        }
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record) + "\n")


class RecordingClient:
    """Wraps another client and records every exchange to a transcript."""

    def __init__(self, inner: LlmClient, writer: TranscriptWriter):
        self.inner = inner
        self.writer = writer

    def complete(self, prompt: str, num_samples: int, params: GenerationParams) -> list[str]:
        responses = self.inner.complete(prompt, num_samples, params)
        self.writer.append(prompt, params, responses)
        return responses


class ReplayClient:
    """Plays a transcript back; identical requests replay in recorded order."""

    def __init__(self, path: str):
        self._queues: dict[tuple[str, str, int], list[list[str]]] = {}
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                key = (
                    rec["prompt_hash"],
                    json.dumps(rec["params"], sort_keys=True),
                    len(rec["responses"]),
                )
                self._queues.setdefault(key, []).append(rec["responses"])
        self._cursors: dict[tuple[str, str, int], int] = {}

    def complete(self, prompt: str, num_samples: int, params: GenerationParams) -> list[str]:
        key = (prompt_hash(prompt), params.key(), num_samples)
        entries = self._queues.get(key)
        if not entries:
            raise ReplayMiss(f"no transcript entry for prompt hash {key[0][:12]}...")
        cursor = self._cursors.get(key, 0)
        responses = entries[min(cursor, len(entries) - 1)]
        self._cursors[key] = cursor + 1
        return list(responses)


class LiveHttpClient:
    """Chat-completion client with a configurable JSON schema.

    The API key comes from the environment (default EQSEARCH_API_KEY); one
    retry with exponential backoff on transport errors.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "EQSEARCH_API_KEY",
        timeout_s: float = 60.0,
        post_fn=None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        if post_fn is None:
            import requests

            post_fn = requests.post
        self._post = post_fn

    def complete(self, prompt: str, num_samples: int, params: GenerationParams) -> list[str]:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": num_samples,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
        }
        if params.max_tokens is not None:
            body["max_tokens"] = params.max_tokens
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error: Exception | None = None
        for attempt in range(2):
            try:
                resp = self._post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout_s
                )
                if resp.status_code != 200:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                payload = resp.json()
                return [choice["message"]["content"] for choice in payload["choices"]]
            except TransportError as exc:
                last_error = exc
            except Exception as exc:  # connection/timeout/schema errors
                last_error = TransportError(str(exc))
            if attempt == 0:
                time.sleep(2.0**attempt)
        raise last_error


def request_candidates(
    client: LlmClient, a_i: str, b: str, n: int, params: GenerationParams
) -> list[str]:
    """Render the transform prompt and collect exactly n parsed candidates.

    A short batch is retried once; any remaining shortfall is padded with
    empty candidates (scored nu=0) so the action-space arity stays stable.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    prompt = render_transform_prompt(a_i, b)
    responses = client.complete(prompt, n, params)
    if len(responses) < n:
        responses = responses + client.complete(prompt, n - len(responses), params)
    candidates = [parse_code_response(r) for r in responses[:n]]
    candidates += [""] * (n - len(candidates))
    return candidates
