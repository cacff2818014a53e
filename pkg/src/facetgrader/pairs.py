"""Two-stage counterfactual pair construction.

Every labeled document is assigned one quality facet at random, an LLM is
asked to identify issues on that facet (stage A), and the same LLM rewrites
the document to address them (stage B). The rewrite is the higher-quality
member of the resulting pair. Per-document failures are recorded and
skipped; a generation run survives sporadic service faults.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import (
    ContrastivePair,
    Document,
    FACETS,
    Provenance,
    QualityFacet,
    split_sentences,
    word_tokens,
)
from .llm import LlmError, LlmRequest
from .prompts import render_issue_prompt, render_rewrite_prompt

logger = logging.getLogger(__name__)

REWRITTEN_ID_SUFFIX = "::rewritten"


@dataclass(frozen=True)
class FacetAssignment:
    """The facet drawn for one document under a given seed."""

    document_id: str
    facet: QualityFacet
    seed: int


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for one generation run."""

    model: str = "gpt-3.5-turbo"
    seed: int = 0
    stage_a_temperature: float = 0.0
    stage_b_temperature: float = 0.7
    max_body_tokens: int = 3000
    max_completion_tokens: int = 2048
    parallelism: int = 4
    config_hash: str = ""

    def __post_init__(self) -> None:
        if self.stage_a_temperature < 0 or self.stage_b_temperature < 0:
            raise ValueError("temperatures must be >= 0")
        if self.max_body_tokens <= 0 or self.max_completion_tokens <= 0:
            raise ValueError("token limits must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class SkipRecord:
    """Why one document produced no pair."""

    document_id: str
    stage: str
    reason: str

    def to_record(self) -> dict:
        return {"document_id": self.document_id, "stage": self.stage, "reason": self.reason}


@dataclass
class GenerationResult:
    """Pairs plus skip records and run accounting."""

    pairs: list[ContrastivePair]
    skips: list[SkipRecord]
    summary: dict = field(default_factory=dict)


class PairGenerationError(Exception):
    """A stage failed for one document; names the stage."""

    def __init__(self, stage: str, reason: str):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason


def assign_facets(corpus: list[Document], seed: int) -> list[FacetAssignment]:
    """Draw one facet per document, uniformly, from a seeded generator.

    The draw depends only on the seed and the document's position in the
    corpus, so reruns reproduce assignments exactly.
    """
    if not corpus:
        raise ValueError("cannot assign facets over an empty corpus")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(FACETS), size=len(corpus))
    return [
        FacetAssignment(document_id=doc.id, facet=FACETS[int(k)], seed=seed)
        for doc, k in zip(corpus, draws)
    ]


def truncate_body(document: Document, max_tokens: int) -> tuple[Document, bool]:
    """Cut an overlong body back to whole sentences within ``max_tokens``.

    The first sentence is always kept so a document never becomes empty.
    Returns the (possibly unchanged) document and whether truncation happened.
    """
    if len(word_tokens(document.body)) <= max_tokens:
        return document, False
    sentences = split_sentences(document.body)
    kept: list[str] = []
    used = 0
    for sentence in sentences:
        cost = len(word_tokens(sentence))
        if kept and used + cost > max_tokens:
            break
        kept.append(sentence)
        used += cost
    return replace(document, body=" ".join(kept)), True


def generate_pair(
    document: Document,
    facet: QualityFacet,
    client,
    config: GenerationConfig,
) -> ContrastivePair:
    """Run both stages for one document and assemble the pair.

    Raises :class:`PairGenerationError` when either stage fails, so a pair
    is never emitted partially filled.
    """
    if document.grade is None:
        raise PairGenerationError("precondition", f"document {document.id!r} is unlabeled")

    doc, truncated = truncate_body(document, config.max_body_tokens)

    issue_prompt = render_issue_prompt(doc, facet)
    try:
        issue_resp = client.complete(
            LlmRequest(
                model=config.model,
                prompt=issue_prompt,
                temperature=config.stage_a_temperature,
                max_tokens=config.max_completion_tokens,
            )
        )
    except LlmError as exc:
        raise PairGenerationError("issue_identification", str(exc)) from exc
    issues = issue_resp.text
    if not issues.strip():
        raise PairGenerationError("issue_identification", "empty issues text")

    rewrite_prompt = render_rewrite_prompt(doc, issues)
    try:
        rewrite_resp = client.complete(
            LlmRequest(
                model=config.model,
                prompt=rewrite_prompt,
                temperature=config.stage_b_temperature,
                max_tokens=config.max_completion_tokens,
            )
        )
    except LlmError as exc:
        raise PairGenerationError("rewriting", str(exc)) from exc
    if not rewrite_resp.text.strip():
        raise PairGenerationError("rewriting", "empty rewritten body")

    rewritten = Document(
        id=doc.id + REWRITTEN_ID_SUFFIX,
        title=doc.title,
        body=rewrite_resp.text,
        grade=None,
    )
    provenance = Provenance(
        model=config.model,
        issue_prompt_sha256=hashlib.sha256(issue_prompt.encode("utf-8")).hexdigest(),
        rewrite_prompt_sha256=hashlib.sha256(rewrite_prompt.encode("utf-8")).hexdigest(),
        created_at=rewrite_resp.created_at,
        truncated=truncated,
        config_hash=config.config_hash,
        seed=config.seed,
    )
    return ContrastivePair(
        original=document,
        rewritten=rewritten,
        facet=facet,
        issues=issues,
        provenance=provenance,
    )


def build_contrastive_dataset(
    corpus: list[Document],
    client,
    config: GenerationConfig,
) -> GenerationResult:
    """Assign facets and generate one pair per document.

    Pair generation runs under bounded parallelism; results are re-ordered
    by document index so output order always matches corpus order. LLM
    failures for single documents become skip records rather than aborting
    the run.
    """
    if not corpus:
        raise ValueError("cannot build a contrastive dataset from an empty corpus")
    unlabeled = [doc.id for doc in corpus if doc.grade is None]
    if unlabeled:
        raise ValueError(
            f"{len(unlabeled)} unlabeled document(s) in corpus, first: {unlabeled[0]!r}"
        )

    assignments = assign_facets(corpus, config.seed)
    fresh_before = getattr(client, "fresh_calls", 0)
    hits_before = getattr(client, "cache_hits", 0)

    def task(index: int):
        doc = corpus[index]
        facet = assignments[index].facet
        try:
            return index, generate_pair(doc, facet, client, config), None
        except PairGenerationError as exc:
            logger.warning("skipping %s: %s", doc.id, exc)
            return index, None, SkipRecord(doc.id, exc.stage, exc.reason)

    results: list[tuple] = []
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        for outcome in pool.map(task, range(len(corpus))):
            results.append(outcome)
    results.sort(key=lambda item: item[0])

    pairs = [pair for _, pair, _ in results if pair is not None]
    skips = [skip for _, _, skip in results if skip is not None]

    per_facet: dict[str, int] = {facet.name: 0 for facet in FACETS}
    for pair in pairs:
        per_facet[pair.facet.name] += 1

    summary = {
        "documents": len(corpus),
        "pairs_built": len(pairs),
        "skipped": len(skips),
        "per_facet": per_facet,
        "fresh_llm_calls": getattr(client, "fresh_calls", 0) - fresh_before,
        "cached_llm_calls": getattr(client, "cache_hits", 0) - hits_before,
        "seed": config.seed,
        "model": config.model,
        "config_hash": config.config_hash,
    }
    return GenerationResult(pairs=pairs, skips=skips, summary=summary)
