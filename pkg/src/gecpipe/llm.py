"""Prompt construction, completion client with retry/cache, and output parsing.

The completion provider is a single-method interface (prompt in, text out)
with an HTTP implementation and a deterministic mock; all tests run against
the mock and the replay cache.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

log = logging.getLogger(__name__)

API_KEY_ENV = "GECPIPE_API_KEY"

COT_PROMPT = (
    "Please identify and correct any grammatical errors in the following sentence "
    "indicated by <input> ERROR </input> tag, you need to comprehend the sentence as "
    "a whole before identifying and correcting any errors step by step while keeping "
    "the original sentence structure unchanged as much as possible. Afterward, output "
    "the corrected version directly without any explanations. Remember to format your "
    "corrected output results with the tag <output> Your Corrected Version </output>. "
    "Please start: <input> INPUT </input>:"
)

OVERCORRECT_COT_PROMPT = (
    "Please identify and correct any grammatical errors in the following sentence, "
    "indicated by <input> ERROR </input> tag. You need to comprehend the sentence as "
    "a whole and find as many errors as you can before identifying and correcting "
    "them step by step. Afterward, output the corrected version directly without any "
    "explanations. Remember to format your corrected output results with the tag "
    "<output> Your Corrected Version </output>. Please start: <input> INPUT </input>:"
)

POST_CORRECT_PROMPT = """\
Please identify and correct any grammatical errors in the source sentence while \
avoiding unnecessary changes (overcorrections) and insufficient edits (undercorrections).

Correction Types:
- Source: The original sentence before any corrections.
- Overcorrect: Contains unnecessary modifications but also many correct edits, \
leading to high recall but low precision.
- Undercorrect: Makes fewer incorrect changes but misses valid corrections, \
resulting in higher precision but lower recall.

Hint Tags:
- <R>...</R>: Indicates a replaced part of the sentence.
- <M>...</M>: Marks an addition that wasn't in the source.
- <U>...</U>: Highlights a removed part of the original sentence.

Your task is to provide the best possible correction for the given source sentence, \
ensuring proper grammar and clarity while preserving its intended meaning. Use the \
"Overcorrect" (high recall) and "Undercorrect" (high precision) sentences, along with \
hint tags, to guide your edits.

Input Data:
Source: {{Source}}
Overcorrect: {{Overcorrected output}}
Undercorrect: {{Undercorrected output}}

Perfect Correction:"""


class MissingBindingError(KeyError):
    """A template placeholder was left unbound."""


class ProviderError(RuntimeError):
    """The completion provider failed for good."""


class RateLimitError(ProviderError):
    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    placeholders: tuple[str, ...]  # literal marker strings

    def binding_name(self, marker: str) -> str:
        return marker[2:-2] if marker.startswith("{{") else marker


TEMPLATES = {
    "cot": PromptTemplate("cot", COT_PROMPT, ("INPUT",)),
    "overcorrect_cot": PromptTemplate("overcorrect_cot", OVERCORRECT_COT_PROMPT, ("INPUT",)),
    "post_correct": PromptTemplate(
        "post_correct",
        POST_CORRECT_PROMPT,
        ("{{Source}}", "{{Overcorrected output}}", "{{Undercorrected output}}"),
    ),
}


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Literal placeholder substitution."""
    out = template.body
    for marker in template.placeholders:
        name = template.binding_name(marker)
        if name not in bindings:
            raise MissingBindingError(name)
        out = out.replace(marker, bindings[name])
    return out


def parse_output(raw_text: str, source_fallback: str) -> str:
    """Extract the text between the first <output> and the last </output>.

    Tag-free responses are returned trimmed; an empty result falls back to
    the source sentence.
    """
    open_at = raw_text.find("<output>")
    close_at = raw_text.rfind("</output>")
    if open_at != -1 and close_at != -1 and close_at >= open_at + len("<output>"):
        text = raw_text[open_at + len("<output>"):close_at].strip()
    else:
        text = raw_text.strip()
    return text if text else source_fallback


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    prompt: str
    temperature: float = 1.0
    max_attempts: int = 3


@dataclass(frozen=True)
class ProviderResponse:
    raw_text: str
    provider_meta: dict = field(default_factory=dict)


_INPUT_RE = re.compile(r"<input>\s*(.*?)\s*</input>", re.S)


class MockProvider:
    """Deterministic offline provider.

    Extracts the sentence from the last ``<input>...</input>`` span of the
    prompt, applies an optional transform, and returns it tagged.
    """

    def __init__(self, transform: Callable[[str], str] | None = None):
        self.transform = transform
        self.calls = 0

    def __call__(self, request: CompletionRequest) -> str:
        self.calls += 1
        spans = _INPUT_RE.findall(request.prompt)
        sentence = spans[-1] if spans else ""
        if self.transform is not None:
            sentence = self.transform(sentence)
        return f"<output> {sentence} </output>"


class HTTPProvider:
    """OpenAI-style chat-completions provider; API key read from the environment."""

    def __init__(self, endpoint: str, api_key_env: str = API_KEY_ENV, timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout

    def __call__(self, request: CompletionRequest) -> str:
        import requests

        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise ProviderError(f"missing API key in ${self.api_key_env}")
        payload = {
            "model": request.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        try:
            resp = requests.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderError(str(exc)) from exc
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            raise RateLimitError(retry_after=float(retry_after) if retry_after else None)
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed response: {exc}") from exc


def _request_digest(model: str, prompt: str, temperature: float) -> str:
    payload = json.dumps(
        {"model": model, "prompt": prompt, "temperature": temperature}, sort_keys=True
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """JSONL-backed response cache keyed by (model, prompt, temperature) digest."""

    def __init__(self, path: str | None = None):
        self.path = path
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self._entries[record["key_digest"]] = record["raw_text"]

    def get(self, digest: str) -> str | None:
        with self._lock:
            return self._entries.get(digest)

    def put(self, digest: str, model: str, temperature: float, prompt: str, raw_text: str) -> None:
        record = {
            "key_digest": digest,
            "model": model,
            "temperature": temperature,
            "prompt": prompt,
            "raw_text": raw_text,
            "timestamp": time.time(),
        }
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = raw_text
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")


class CompletionClient:
    """Cached completion calls with exponential backoff (base 1s, factor 2, jitter)."""

    def __init__(
        self,
        provider: Callable[[CompletionRequest], str],
        cache: CompletionCache | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.provider = provider
        self.cache = cache or CompletionCache()
        self._sleep = sleep
        self._rng = rng or random.Random()

    def complete(self, request: CompletionRequest) -> ProviderResponse:
        digest = _request_digest(request.model, request.prompt, request.temperature)
        cached = self.cache.get(digest)
        if cached is not None:
            return ProviderResponse(cached, {"cached": True})
        delay = 1.0
        last_error: ProviderError | None = None
        for attempt in range(1, request.max_attempts + 1):
            try:
                raw_text = self.provider(request)
            except RateLimitError as exc:
                last_error = exc
                if attempt == request.max_attempts:
                    raise
                wait = exc.retry_after if exc.retry_after is not None else delay
                self._sleep(wait * (1.0 + 0.1 * self._rng.random()))
                delay *= 2.0
            except ProviderError as exc:
                last_error = exc
                if attempt == request.max_attempts:
                    raise ProviderError(
                        f"provider failed after {attempt} attempts: {exc}"
                    ) from exc
                self._sleep(delay * (1.0 + 0.1 * self._rng.random()))
                delay *= 2.0
            else:
                self.cache.put(
                    digest, request.model, request.temperature, request.prompt, raw_text
                )
                return ProviderResponse(raw_text, {"cached": False, "attempts": attempt})
        raise ProviderError(str(last_error))  # unreachable


@dataclass(frozen=True)
class Overcorrection:
    source: str
    overcorrected: str
    failed: bool = False


def overcorrect_corpus(
    sources: Iterable[str],
    client: CompletionClient,
    model: str,
    temperature: float = 1.0,
    max_attempts: int = 3,
    max_workers: int = 1,
) -> list[Overcorrection]:
    """Render the overcorrection prompt for each source and complete it.

    Provider failures fall back to the identity correction and never abort
    the stream; output order matches input order.
    """
    template = TEMPLATES["overcorrect_cot"]

    def one(item: tuple[int, str]) -> Overcorrection:
        index, source = item
        prompt = render_prompt(template, {"INPUT": source})
        request = CompletionRequest(model, prompt, temperature, max_attempts)
        try:
            response = client.complete(request)
        except ProviderError as exc:
            log.warning("record %d: provider failed (%s); falling back to source", index, exc)
            return Overcorrection(source, source, failed=True)
        log.debug("record %d: completed", index)
        return Overcorrection(source, parse_output(response.raw_text, source))

    items = list(enumerate(sources))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, items))
    return [one(item) for item in items]
