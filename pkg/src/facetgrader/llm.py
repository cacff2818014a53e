"""Chat-completion client with retries, disk caching, and offline mocks.

The real client speaks an OpenAI-style chat endpoint over HTTP. Generation
runs can be interrupted and resumed because every completion is cached on
disk keyed by a stable request hash; replayed responses keep their original
creation timestamp so resumed runs emit byte-identical artifacts.

Offline work never touches the network: ``MockLlmClient`` serves canned
prompt-to-text mappings, and ``PipelineMockClient`` understands the two
generation prompts well enough to play both stages deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .corpus import Document, QualityFacet, split_sentences, word_tokens
from .prompts import (
    ARTICLE_MARKER,
    GRADES_MARKER,
    ISSUE_PROMPT_PREFIX,
    ISSUES_MARKER,
    REWRITE_PROMPT_PREFIX,
    REWRITTEN_MARKER,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "FACETGRADER_API_KEY"

# Fixed timestamp for mock completions, keeping offline runs byte-stable.
MOCK_TIMESTAMP = "1970-01-01T00:00:00Z"


class LlmError(Exception):
    """Base class for completion failures."""


class AuthenticationError(LlmError):
    """Credential rejected; retrying cannot help."""


class TransientLlmError(LlmError):
    """Rate limit, server error, or network fault; worth retrying."""


class TruncatedResponseError(TransientLlmError):
    """The completion hit max_tokens before finishing."""


class RetryBudgetExceededError(LlmError):
    """All attempts failed; carries the last underlying error as its cause."""


@dataclass(frozen=True)
class LlmRequest:
    """One single-turn completion request."""

    model: str
    prompt: str
    temperature: float
    max_tokens: int

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def cache_key(self) -> str:
        """Stable hash over everything that determines the completion."""
        payload = json.dumps(
            {
                "model": self.model,
                "prompt": self.prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmResponse:
    """A completion, with cache provenance and the attempt that produced it."""

    text: str
    cached: bool
    attempt_count: int
    created_at: str

    def __post_init__(self) -> None:
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")


def _utcnow_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ResponseCache:
    """Disk cache of completions, one JSON file per request hash.

    Reads are lock-free; writes are serialized and land atomically via a
    temp file + rename, so concurrent readers never observe partial files.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _path(self, request: LlmRequest) -> Path:
        return self.directory / f"{request.cache_key()}.json"

    def get(self, request: LlmRequest) -> dict | None:
        path = self._path(request)
        try:
            with path.open("r", encoding="utf-8") as handle:
                return json.load(handle)
        except FileNotFoundError:
            return None

    def put(self, request: LlmRequest, response: LlmResponse) -> None:
        entry = {
            "model": request.model,
            "prompt_sha256": hashlib.sha256(request.prompt.encode("utf-8")).hexdigest(),
            "text": response.text,
            "created_at": response.created_at,
        }
        path = self._path(request)
        with self._write_lock:
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    json.dump(entry, handle, ensure_ascii=False)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


class TokenBucket:
    """Token-bucket rate limiter shared across worker threads."""

    def __init__(
        self,
        rate_per_sec: float,
        capacity: float,
        clock=time.monotonic,
        sleep=time.sleep,
    ):
        if rate_per_sec <= 0 or capacity < 1:
            raise ValueError("rate must be positive and capacity at least 1")
        self.rate = float(rate_per_sec)
        self.capacity = float(capacity)
        self._tokens = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        """Block until one token is available, then consume it."""
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class LlmClient:
    """Cache handling and call accounting shared by all client flavors."""

    def __init__(self, cache: ResponseCache | None = None):
        self.cache = cache
        self.fresh_calls = 0
        self.cache_hits = 0
        self._count_lock = threading.Lock()

    def complete(self, request: LlmRequest) -> LlmResponse:
        """Return the completion for ``request``, from cache when possible."""
        if self.cache is not None:
            hit = self.cache.get(request)
            if hit is not None:
                with self._count_lock:
                    self.cache_hits += 1
                return LlmResponse(
                    text=hit["text"],
                    cached=True,
                    attempt_count=1,
                    created_at=hit["created_at"],
                )
        response = self._complete_fresh(request)
        with self._count_lock:
            self.fresh_calls += 1
        if self.cache is not None:
            self.cache.put(request, response)
        return response

    def _complete_fresh(self, request: LlmRequest) -> LlmResponse:
        raise NotImplementedError


def _http_transport(endpoint: str, api_key: str | None, request: LlmRequest):
    """POST one chat completion; returns (text, finish_reason).

    Maps HTTP failure classes onto the local error taxonomy so the retry
    loop can tell transient faults from terminal ones.
    """
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {
        "model": request.model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    try:
        resp = requests.post(endpoint, headers=headers, json=payload, timeout=120)
    except requests.RequestException as exc:
        raise TransientLlmError(f"network failure: {exc}") from exc
    if resp.status_code in (401, 403):
        raise AuthenticationError(f"credential rejected (HTTP {resp.status_code})")
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientLlmError(f"service unavailable (HTTP {resp.status_code})")
    if resp.status_code != 200:
        raise LlmError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        choice = resp.json()["choices"][0]
        return choice["message"]["content"], choice.get("finish_reason", "stop")
    except (KeyError, IndexError, ValueError) as exc:
        raise TransientLlmError(f"malformed completion payload: {exc}") from exc


class HttpLlmClient(LlmClient):
    """Client for an OpenAI-style chat endpoint.

    The API key comes from the environment (``FACETGRADER_API_KEY``) and is
    never read from configuration files. ``transport`` is injectable for
    tests; it must return ``(text, finish_reason)`` or raise from the local
    error taxonomy.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        cache: ResponseCache | None = None,
        rate_limit: TokenBucket | None = None,
        transport=None,
        sleep=time.sleep,
    ):
        super().__init__(cache=cache)
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.rate_limit = rate_limit
        self._transport = transport or (
            lambda req: _http_transport(self.endpoint, self.api_key, req)
        )
        self._sleep = sleep

    def _complete_fresh(self, request: LlmRequest) -> LlmResponse:
        last: TransientLlmError | None = None
        for attempt in range(1, self.max_attempts + 1):
            if self.rate_limit is not None:
                self.rate_limit.acquire()
            try:
                text, finish_reason = self._transport(request)
                if finish_reason == "length":
                    raise TruncatedResponseError(
                        f"completion truncated at max_tokens={request.max_tokens}"
                    )
                return LlmResponse(
                    text=text,
                    cached=False,
                    attempt_count=attempt,
                    created_at=_utcnow_iso(),
                )
            except TransientLlmError as exc:
                last = exc
                logger.warning(
                    "completion attempt %d/%d failed: %s", attempt, self.max_attempts, exc
                )
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise RetryBudgetExceededError(
            f"gave up after {self.max_attempts} attempts: {last}"
        ) from last


class MockLlmClient(LlmClient):
    """Deterministic prompt-to-text mapping; performs no network IO."""

    def __init__(self, mapping: dict[str, str] | None = None, default=None,
                 cache: ResponseCache | None = None):
        super().__init__(cache=cache)
        self.mapping = dict(mapping or {})
        self.default = default

    def _complete_fresh(self, request: LlmRequest) -> LlmResponse:
        if request.prompt in self.mapping:
            text = self.mapping[request.prompt]
        elif self.default is not None:
            text = self.default(request)
        else:
            raise LlmError(
                f"mock client has no response for prompt starting "
                f"{request.prompt[:60]!r}"
            )
        return LlmResponse(text=text, cached=False, attempt_count=1,
                           created_at=MOCK_TIMESTAMP)


# ---------------------------------------------------------------------------
# Offline rewriting
#
# The mock rewriter applies a fixed, facet-specific cleanup so that offline
# pipelines still produce pairs whose members genuinely differ. Each facet
# owns a small vocabulary of "noise" markers it removes and a pool of stock
# quality sentences it appends; the synthetic corpus generator plants the
# same vocabulary, so mock rewrites undo planted degradations.
# ---------------------------------------------------------------------------

COHERENCE_MARKERS = ("anyway", "meanwhile", "regardless", "tangent", "digression")
USEFULNESS_MARKERS = ("vaguely", "somehow", "stuff", "whatever", "supposedly")
CREATIVENESS_MARKERS = ("cliche", "formulaic", "boilerplate", "rehashed")
ENGAGINGNESS_MARKERS = ("tedious", "monotonous", "dreary", "plodding")

COHERENCE_NOISE_SENTENCES = (
    "Anyway, the discussion drifts into an unrelated tangent before circling back.",
    "Meanwhile, a sudden digression interrupts the thread of the argument.",
    "Regardless, the point is abandoned mid-thought and picked up much later.",
)
USEFULNESS_NOISE_SENTENCES = (
    "Somehow this stuff supposedly matters, though it is never said how.",
    "It is vaguely suggested that whatever was described might apply somewhere.",
    "Readers are left with stuff that somehow never turns into usable guidance.",
)
CREATIVENESS_NOISE_SENTENCES = (
    "The same formulaic cliche is repeated without a single fresh image.",
    "Boilerplate phrasing recycles rehashed observations everyone has heard.",
    "A rehashed, formulaic summary restates the obvious in stock language.",
)
ENGAGINGNESS_NOISE_SENTENCES = (
    "The tedious recitation continues in a monotonous drone of minor detail.",
    "A dreary, plodding list of items follows with no change of pace.",
    "The plodding account repeats itself in a dreary and tedious register.",
)

FACT_SENTENCES = (
    "Measured results from repeated trials back every claim with concrete evidence.",
    "Cited figures and documented sources anchor the analysis in verifiable detail.",
    "Specific numbers quantify both the effect and its observed magnitude.",
)
ADVICE_SENTENCES = (
    "A practical checklist tells readers exactly which steps to take first.",
    "Each section closes with one concrete recommendation readers can apply today.",
)
TWIST_SENTENCES = (
    "An unexpected analogy reframes the familiar problem from a genuinely new angle.",
    "The narrative threads an original metaphor through the technical material.",
)
HOOK_SENTENCES = (
    "A vivid opening question pulls the reader straight into the subject.",
    "Lively, surprising examples keep the reader curious about what comes next.",
)

_NOISE_MARKERS = {
    "coherence": frozenset(COHERENCE_MARKERS),
    "usefulness": frozenset(USEFULNESS_MARKERS),
    "creativeness": frozenset(CREATIVENESS_MARKERS),
    "engagingness": frozenset(ENGAGINGNESS_MARKERS),
}

_QUALITY_APPENDS = {
    "informativeness": FACT_SENTENCES,
    "usefulness": ADVICE_SENTENCES,
    "creativeness": TWIST_SENTENCES,
    "engagingness": HOOK_SENTENCES,
}


def _drop_marked(sentences: list[str], markers: frozenset[str]) -> list[str]:
    return [s for s in sentences if not markers & set(word_tokens(s))]


def mock_rewriter(facet: QualityFacet, document: Document | str) -> str:
    """Deterministic facet-specific improvement of a document body.

    Used only in tests and synthetic runs as the offline stand-in for the
    rewriting stage. Empty input is returned unchanged. Same input always
    yields the same output.
    """
    body = document.body if isinstance(document, Document) else document
    if not body.strip():
        return body
    sentences = split_sentences(body)

    if facet.name == "coherence":
        kept = _drop_marked(sentences, _NOISE_MARKERS["coherence"])
        return " ".join(sorted(kept))

    if facet.name == "creativeness":
        deduped: list[str] = []
        for s in sentences:
            if s not in deduped:
                deduped.append(s)
        sentences = _drop_marked(deduped, _NOISE_MARKERS["creativeness"])
    elif facet.name in _NOISE_MARKERS:
        sentences = _drop_marked(sentences, _NOISE_MARKERS[facet.name])

    appends = _QUALITY_APPENDS.get(facet.name, ())
    present = set(sentences)
    sentences = sentences + [s for s in appends if s not in present]
    return " ".join(sentences)


def _between(text: str, start_marker: str, end_marker: str) -> str:
    start = text.index(start_marker) + len(start_marker)
    end = text.index(end_marker, start)
    return text[start:end].strip("\n")


class PipelineMockClient(LlmClient):
    """Offline client that plays both generation stages.

    Stage-A prompts get a canned issues blurb prefixed with the facet name;
    stage-B prompts are parsed for their article and issues, and answered by
    applying :func:`mock_rewriter` for the facet named in the issues text.
    """

    def _complete_fresh(self, request: LlmRequest) -> LlmResponse:
        prompt = request.prompt
        if prompt.startswith(ISSUE_PROMPT_PREFIX):
            text = self._issues_for(prompt)
        elif prompt.startswith(REWRITE_PROMPT_PREFIX):
            text = self._rewrite_for(prompt)
        else:
            raise LlmError(
                "pipeline mock only understands the issue and rewrite prompts"
            )
        return LlmResponse(text=text, cached=False, attempt_count=1,
                           created_at=MOCK_TIMESTAMP)

    @staticmethod
    def _issues_for(prompt: str) -> str:
        head, _, _ = prompt.partition(" of the content")
        facet_name = head.rsplit("at the level of ", 1)[1]
        label = _between(prompt, GRADES_MARKER, ISSUES_MARKER).strip()
        return (
            f"{facet_name}: relative to its grade of {label}, the article shows "
            f"clear weaknesses in {facet_name} that a careful rewrite can fix."
        )

    @staticmethod
    def _rewrite_for(prompt: str) -> str:
        article = _between(prompt, ARTICLE_MARKER, ISSUES_MARKER).strip("\n ")
        issues = _between(prompt, ISSUES_MARKER, REWRITTEN_MARKER).strip("\n ")
        facet = _facet_from_issues(issues)
        return mock_rewriter(facet, article)


def _facet_from_issues(issues: str) -> QualityFacet:
    """Find the earliest facet name mentioned in an issues blurb."""
    from .corpus import FACETS

    lowered = issues.lower()
    hits = [(lowered.find(f.name), f) for f in FACETS if f.name in lowered]
    if not hits:
        raise LlmError(
            f"cannot infer a facet from issues text starting {issues[:60]!r}"
        )
    return min(hits, key=lambda pair: pair[0])[1]
