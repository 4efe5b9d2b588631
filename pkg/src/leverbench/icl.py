"""Zero-shot LLM evaluation: prompt construction, chat-completion client, scoring.

Two prompt families are supported. The in-context prompt lists training
samples and asks for a Python list of ``p(L)`` values for test inputs. The
pipeline prompt asks the model to write a feature-parsing function for a
logistic regression; responses are logged only and never executed.

Every failure (transport, auth, quota, unparsable answer) scores a TV distance
of 1 on each test input of that experiment.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import httpx
import numpy as np

from .sampling import parse_input, render_input, render_sample, sample_dataset
from .world import WorldSpec, true_conditional

logger = logging.getLogger(__name__)

API_KEY_ENV = "OPENAI_API_KEY"
BASE_URL_ENV = "LEVERBENCH_LLM_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
SUCCESS_THRESHOLD = 0.1

ICL_TEMPLATE = (
    "Assume we have a model representing a lever on a fulcrum, with two objects on it. "
    "The first object is on the right and the second is on the left.\n"
    "\n"
    "I'll give you a list of partial observations of the states of the model. "
    "Notice that some values might be latent. "
    "Then I'll ask you to give me the probability for the continuation of some prompt, "
    "based on the distribution you can derive from the samples. Be prompt in your answer.\n"
    "\n"
    "Samples:\n"
    "{samples}\n"
    "\n"
    "Question:\n"
    'I\'ll give you a list of prompts. Give me a python list with the probabilities of "L", '
    "one probability for each input.\n"
    "Samples:\n"
    "{tests}\n"
    "Give me a list only with no additional explanations.\n"
)

PIPELINE_HINTS = (
    "We have a lever on a fulcrum with objects on the lever.",
    "Notice that some variables might be latent.",
    "Notice that the distance of the last object is latent.",
)

PIPELINE_TEMPLATE = (
    "Assume we have a model representing physical setting.\n"
    "{hint1}"
    "\n"
    "Here's a list of partial observations of the states of the model. \n"
    "{hint2}"
    "{hint3}"
    "\n"
    "Samples:\n"
    "{samples}\n"
    "\n"
    "I want to learn the distribution using Statistics or Machine Learning. \n"
    "Specifically, I want to use Logistic Regression to predict the balance probabilities of new samples. "
    "Here is an example of the code:\n"
    "\n"
    "```python\n"
    "def fit_lr(X, y):\n"
    "    from sklearn.linear_model \\\n"
    "        import LogisticRegression\n"
    "    model = LogisticRegression(\n"
    "        max_iter=10000, \n"
    "        solver='saga')\n"
    "    model.fit(X, y)\n"
    "    return model\n"
    "    \n"
    "def predict_lr(model, X):\n"
    "    return model.predict_proba(X)\n"
    "```\n"
    "\n"
    "Write me python function parse_samples(), that parses each sample and creates a feature function "
    "that can be used in the snippet above.\n"
    "Make sure the function is appropriate for both training and inference.\n"
    "Give me code only.\n"
)

_TESTS_START = "one probability for each input.\nSamples:\n"
_TESTS_END = "\nGive me a list only with no additional explanations."


@dataclass(frozen=True)
class PromptSpec:
    mode: str
    train_lines: tuple[str, ...]
    test_lines: tuple[str, ...] = ()
    hint_level: int = 0

    def __post_init__(self):
        if self.mode not in ("icl", "pipeline"):
            raise ValueError(f"unknown prompt mode {self.mode!r}")
        if not 0 <= self.hint_level <= len(PIPELINE_HINTS):
            raise ValueError("hint level must be 0..3")
        if any("balance:" in line for line in self.test_lines):
            raise ValueError("test lines must not contain the outcome")


def build_icl_prompt(spec: PromptSpec) -> str:
    if not spec.test_lines:
        raise ValueError("an in-context prompt needs at least one test input")
    return ICL_TEMPLATE.format(samples="\n".join(spec.train_lines), tests="\n".join(spec.test_lines))


def build_pipeline_prompt(spec: PromptSpec) -> str:
    hints = [h + "\n" if i < spec.hint_level else "" for i, h in enumerate(PIPELINE_HINTS)]
    return PIPELINE_TEMPLATE.format(
        hint1=hints[0], hint2=hints[1], hint3=hints[2], samples="\n".join(spec.train_lines)
    )


def extract_test_lines(prompt: str) -> list[str]:
    """Recover the test inputs embedded in an in-context prompt."""
    start = prompt.index(_TESTS_START) + len(_TESTS_START)
    end = prompt.index(_TESTS_END, start)
    return prompt[start:end].split("\n")


class ParseFailure(ValueError):
    pass


_LIST = re.compile(r"\[([^\[\]]*)\]")


def parse_probability_list(text: str, expected_count: int) -> list[float]:
    """First bracketed numeric list in ``text``, validated for length and range."""
    m = _LIST.search(text or "")
    if m is None:
        raise ParseFailure("no bracketed list in response")
    items = [s.strip() for s in m.group(1).split(",")]
    if items and items[-1] == "":
        items.pop()
    try:
        values = [float(s) for s in items]
    except ValueError as exc:
        raise ParseFailure(f"non-numeric entry: {exc}") from None
    if len(values) != expected_count:
        raise ParseFailure(f"expected {expected_count} probabilities, got {len(values)}")
    for v in values:
        if not (0.0 <= v <= 1.0):
            raise ParseFailure(f"probability {v} outside [0, 1]")
    return values


# -- client -----------------------------------------------------------------


class LLMError(RuntimeError):
    pass


class AuthError(LLMError):
    pass


class QuotaError(LLMError):
    pass


class TransportFailure(LLMError):
    pass


class RateLimiter:
    """Enforces a minimum interval between requests across threads."""

    def __init__(self, min_interval: float = 0.0):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self):
        with self._lock:
            delay = self._last + self.min_interval - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            self._last = time.monotonic()


@dataclass
class EndpointConfig:
    model: str = "gpt-4o"
    base_url: str | None = None
    api_key_env: str = API_KEY_ENV
    timeout: float = 120.0
    max_retries: int = 3
    backoff: float = 1.0
    min_interval: float = 0.0

    def resolved_base_url(self) -> str:
        return (self.base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")


class ChatClient:
    """Minimal OpenAI-compatible chat-completion client.

    Pass ``transport`` (e.g. :func:`mock_transport`) to run offline. Every
    attempt is recorded in :attr:`audit` and, when ``audit_path`` is set,
    appended to that file as JSON lines.
    """

    def __init__(self, config: EndpointConfig | None = None, transport=None, audit_path=None, sleep=time.sleep):
        self.config = config or EndpointConfig()
        self.transport = transport
        self.audit_path = Path(audit_path) if audit_path else None
        self.audit: list[dict] = []
        self._sleep = sleep
        self._limiter = RateLimiter(self.config.min_interval)
        self._audit_lock = threading.Lock()

    def _log(self, record: dict):
        record = {"time": datetime.now(timezone.utc).isoformat(), **record}
        with self._audit_lock:
            self.audit.append(record)
            if self.audit_path:
                with self.audit_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env)
        if not key and self.transport is None:
            raise AuthError(f"environment variable {self.config.api_key_env} is not set")
        return {"Authorization": f"Bearer {key or 'offline'}", "Content-Type": "application/json"}

    def complete(self, prompt: str, temperature: float = 0.0, **decoding) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            **decoding,
        }
        url = self.config.resolved_base_url() + "/chat/completions"
        headers = self._headers()
        last_error: Exception | None = None
        with httpx.Client(transport=self.transport, timeout=self.config.timeout) as http:
            for attempt in range(self.config.max_retries + 1):
                if attempt:
                    self._sleep(self.config.backoff * 2 ** (attempt - 1))
                self._limiter.wait()
                try:
                    resp = http.post(url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last_error = exc
                    self._log({"url": url, "request": payload, "attempt": attempt, "error": repr(exc)})
                    continue
                self._log(
                    {"url": url, "request": payload, "attempt": attempt, "status": resp.status_code, "response": resp.text}
                )
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
                if resp.status_code == 429:
                    raise QuotaError("rate limit or quota exceeded (429)")
                if resp.status_code >= 500:
                    last_error = LLMError(f"server error {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise LLMError(f"request failed with status {resp.status_code}: {resp.text[:200]}")
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise LLMError(f"malformed completion payload: {exc}") from exc
        raise TransportFailure(f"giving up after {self.config.max_retries + 1} attempts: {last_error}")


def query_model(client: ChatClient, prompt: str, temperature: float = 0.0, **decoding) -> str:
    return client.complete(prompt, temperature=temperature, **decoding)


def mock_transport(responder: Callable[[str], str]) -> httpx.MockTransport:
    """An offline chat-completion endpoint answering with ``responder(prompt)``."""

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        prompt = body["messages"][-1]["content"]
        content = responder(prompt)
        return httpx.Response(
            200,
            json={
                "object": "chat.completion",
                "model": body.get("model"),
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            },
        )

    return httpx.MockTransport(handler)


def truth_responder(world: WorldSpec) -> Callable[[str], str]:
    """Answers in-context prompts with the exact conditional probabilities."""

    def respond(prompt: str) -> str:
        X = np.array([parse_input(world, line) for line in extract_test_lines(prompt)])
        return "[" + ", ".join(repr(float(p)) for p in true_conditional(world, X)) + "]"

    return respond


def malformed_responder(prompt: str) -> str:
    return "I am not able to estimate these probabilities."


# -- experiments --------------------------------------------------------------


@dataclass
class ICLResult:
    world_id: str
    n_context: int
    seed: int
    true_probabilities: list[float]
    probabilities: list[float] | None
    tv: list[float]
    failed: bool = False
    error: str | None = None
    raw_response: str | None = None
    prompt_chars: int = 0

    @property
    def mean_tv(self) -> float:
        return float(np.mean(self.tv))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_tv"] = self.mean_tv
        return d


def _test_inputs(world: WorldSpec, n_test: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    return world.sample_inputs(rng, n_test)


def run_icl_experiment(
    world: WorldSpec, n_context: int, seed: int, client: ChatClient, n_test: int = 10, temperature: float = 0.0
) -> ICLResult:
    """One in-context experiment: sample, prompt, query, parse, score."""
    train = sample_dataset(world, n_context, seed)
    X_test = _test_inputs(world, n_test, seed)
    truth = true_conditional(world, X_test)
    spec = PromptSpec(
        mode="icl",
        train_lines=tuple(render_sample(world, s) for s in train),
        test_lines=tuple(render_input(world, x) for x in X_test),
    )
    prompt = build_icl_prompt(spec)
    raw = None
    try:
        raw = query_model(client, prompt, temperature=temperature)
        probs = parse_probability_list(raw, n_test)
    except (LLMError, ParseFailure) as exc:
        logger.warning("ICL experiment %s/N=%d/seed=%d failed: %s", world.world_id, n_context, seed, exc)
        return ICLResult(
            world.world_id, n_context, seed, truth.tolist(), None, [1.0] * n_test,
            failed=True, error=f"{type(exc).__name__}: {exc}", raw_response=raw, prompt_chars=len(prompt),
        )
    tv = np.abs(np.asarray(probs) - truth)
    return ICLResult(
        world.world_id, n_context, seed, truth.tolist(), probs, tv.tolist(), raw_response=raw, prompt_chars=len(prompt)
    )


def run_icl(
    worlds: Sequence[WorldSpec],
    client: ChatClient,
    context_sizes: Sequence[int] = (10, 100, 1000),
    n_sets: int = 2,
    n_test: int = 10,
    base_seed: int = 0,
    max_concurrent: int = 1,
) -> list[ICLResult]:
    """Run every (world, sample set, context size) experiment."""
    jobs = [
        (world, n, base_seed + k)
        for world in worlds
        for k in range(n_sets)
        for n in context_sizes
    ]

    def run(job):
        world, n, seed = job
        return run_icl_experiment(world, n, seed, client, n_test=n_test)

    if max_concurrent > 1:
        with ThreadPoolExecutor(max_workers=max_concurrent) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


def score_icl(results: Sequence[ICLResult], threshold: float = SUCCESS_THRESHOLD) -> dict:
    """Mean TV over all test inputs and the fraction of experiments below ``threshold``."""
    if not results:
        raise ValueError("no results to score")
    all_tv = np.concatenate([np.asarray(r.tv, dtype=float) for r in results])
    below = np.mean([r.mean_tv < threshold for r in results])
    return {
        "mean_tv": float(all_tv.mean()),
        "frac_below": float(below),
        "threshold": threshold,
        "n_experiments": len(results),
        "n_failed": int(sum(r.failed for r in results)),
    }


@dataclass
class PipelineRecord:
    world_id: str
    seed: int
    hint_level: int
    prompt: str
    response: str | None
    error: str | None = None
    executed: bool = field(default=False, init=False)


def run_pipeline_prompts(
    world: WorldSpec, client: ChatClient, n_samples: int, seed: int, hint_level: int = 0
) -> PipelineRecord:
    """Send a pipeline prompt and keep the generated code as text only."""
    train = sample_dataset(world, n_samples, seed)
    spec = PromptSpec(mode="pipeline", train_lines=tuple(render_sample(world, s) for s in train), hint_level=hint_level)
    prompt = build_pipeline_prompt(spec)
    try:
        return PipelineRecord(world.world_id, seed, hint_level, prompt, query_model(client, prompt))
    except LLMError as exc:
        return PipelineRecord(world.world_id, seed, hint_level, prompt, None, error=f"{type(exc).__name__}: {exc}")
