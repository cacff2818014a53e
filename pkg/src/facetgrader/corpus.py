"""Data model for graded documents, quality facets, and contrastive pairs.

Records live on disk as JSONL (one UTF-8 JSON object per line). Two schemas
exist: ``labeled`` documents ``{id, title, body, grade}`` and contrastive
``pairs`` ``{original, rewritten, facet, issues, provenance}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

GRADE_MIN = 0
GRADE_MAX = 4
NUM_GRADES = 5

# Canonical facet definitions. Names and descriptions form a bijection and
# downstream prompt rendering depends on these exact strings.
FACET_DESCRIPTIONS: dict[str, str] = {
    "coherence": (
        "A coherent article is characterized by a logical and organized "
        "structure, clear and concise language, smooth transitions between "
        "ideas, and a seamless flow of information, ensuring that readers can "
        "easily follow and comprehend the content."
    ),
    "usefulness": (
        "An article is considered useful when it provides reliable, "
        "well-researched information, presents a comprehensive and balanced "
        "perspective, addresses relevant issues or questions, and offers "
        "practical insights or solutions for its intended audience."
    ),
    "creativeness": (
        "An article is considered creative when it demonstrates originality "
        "in its approach, offering unique perspectives, innovative ideas, and "
        "engaging storytelling that captivates and inspires the reader."
    ),
    "informativeness": (
        "An informative article is characterized by its ability to provide "
        "accurate, well-researched, and relevant information in a clear and "
        "engaging manner, catering to the needs of its target audience."
    ),
    "engagingness": (
        "Engaging articles captivate readers through a compelling combination "
        "of well-researched and relevant content, a clear and coherent "
        "structure, an accessible writing style, and the incorporation of "
        "multimedia elements that enhance understanding and maintain reader "
        "interest."
    ),
}

FACET_NAMES: tuple[str, ...] = tuple(FACET_DESCRIPTIONS)


class CorpusFormatError(ValueError):
    """A record violates the on-disk schema or a type invariant."""


@dataclass(frozen=True)
class QualityFacet:
    """One of the five content-quality dimensions."""

    name: str
    description: str

    def __post_init__(self) -> None:
        expected = FACET_DESCRIPTIONS.get(self.name)
        if expected is None:
            raise CorpusFormatError(
                f"unknown facet {self.name!r}; expected one of {sorted(FACET_NAMES)}"
            )
        if self.description != expected:
            raise CorpusFormatError(
                f"facet {self.name!r} carries a non-canonical description"
            )


FACETS: tuple[QualityFacet, ...] = tuple(
    QualityFacet(name, desc) for name, desc in FACET_DESCRIPTIONS.items()
)


def facet_by_name(name: str) -> QualityFacet:
    """Return the canonical facet for ``name``."""
    for facet in FACETS:
        if facet.name == name:
            return facet
    raise CorpusFormatError(
        f"unknown facet {name!r}; expected one of {sorted(FACET_NAMES)}"
    )


@dataclass(frozen=True)
class Document:
    """One article with an optional integer quality grade in [0, 4].

    ``grade is None`` means unlabeled; rewritten counterfactuals are always
    unlabeled because they carry only an ordering relative to their original.
    ``aux_grades`` holds optional named sub-dimension gold scores used only
    for extra correlation reporting.
    """

    id: str
    title: str
    body: str
    grade: int | None = None
    aux_grades: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.aux_grades, dict):
            object.__setattr__(self, "aux_grades", tuple(sorted(self.aux_grades.items())))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise CorpusFormatError("document id must be a non-empty string")
        if not isinstance(self.body, str) or not self.body.strip():
            raise CorpusFormatError(
                f"document {self.id!r}: body must be non-empty after trimming"
            )
        if self.grade is not None:
            if isinstance(self.grade, bool) or not isinstance(self.grade, int):
                raise CorpusFormatError(
                    f"document {self.id!r}: grade must be an integer, got {self.grade!r}"
                )
            if not GRADE_MIN <= self.grade <= GRADE_MAX:
                raise CorpusFormatError(
                    f"document {self.id!r}: grade {self.grade} out of range "
                    f"[{GRADE_MIN}, {GRADE_MAX}]"
                )
        if self.aux_grades is not None:
            for key, value in self.aux_grades:
                if not isinstance(key, str) or not isinstance(value, (int, float)):
                    raise CorpusFormatError(
                        f"document {self.id!r}: aux_grades must map names to numbers"
                    )

    def to_record(self) -> dict:
        rec = {"id": self.id, "title": self.title, "body": self.body}
        if self.grade is not None:
            rec["grade"] = self.grade
        if self.aux_grades is not None:
            rec["aux_grades"] = dict(self.aux_grades)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        if not isinstance(rec, dict):
            raise CorpusFormatError(f"expected a JSON object, got {type(rec).__name__}")
        missing = {"id", "title", "body"} - rec.keys()
        if missing:
            raise CorpusFormatError(f"document record missing fields {sorted(missing)}")
        return cls(
            id=rec["id"],
            title=rec["title"],
            body=rec["body"],
            grade=rec.get("grade"),
            aux_grades=rec.get("aux_grades"),
        )


@dataclass(frozen=True)
class Provenance:
    """How one contrastive pair was produced."""

    model: str
    issue_prompt_sha256: str
    rewrite_prompt_sha256: str
    created_at: str
    truncated: bool = False
    config_hash: str = ""
    seed: int | None = None

    def to_record(self) -> dict:
        return {
            "model": self.model,
            "issue_prompt_sha256": self.issue_prompt_sha256,
            "rewrite_prompt_sha256": self.rewrite_prompt_sha256,
            "created_at": self.created_at,
            "truncated": self.truncated,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Provenance":
        if not isinstance(rec, dict):
            raise CorpusFormatError("provenance must be a JSON object")
        try:
            return cls(
                model=rec["model"],
                issue_prompt_sha256=rec["issue_prompt_sha256"],
                rewrite_prompt_sha256=rec["rewrite_prompt_sha256"],
                created_at=rec["created_at"],
                truncated=rec.get("truncated", False),
                config_hash=rec.get("config_hash", ""),
                seed=rec.get("seed"),
            )
        except KeyError as exc:
            raise CorpusFormatError(f"provenance record missing field {exc}") from exc


@dataclass(frozen=True)
class ContrastivePair:
    """An (original, rewritten) pair ordered so the rewrite is higher quality.

    The rewrite addresses issues found on ``facet``, so by construction it is
    the preferred member; the contrastive loss consumes the pair in that
    orientation.
    """

    original: Document
    rewritten: Document
    facet: QualityFacet
    issues: str
    provenance: Provenance

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        self.original.validate()
        self.rewritten.validate()
        if self.original.id == self.rewritten.id:
            raise CorpusFormatError(
                f"pair members must have distinct ids, both are {self.original.id!r}"
            )
        if self.rewritten.grade is not None:
            raise CorpusFormatError(
                f"rewritten document {self.rewritten.id!r} must not carry a grade"
            )
        if self.facet not in FACETS:
            raise CorpusFormatError(f"facet {self.facet!r} is not canonical")

    def to_record(self) -> dict:
        return {
            "original": self.original.to_record(),
            "rewritten": self.rewritten.to_record(),
            "facet": self.facet.name,
            "issues": self.issues,
            "provenance": self.provenance.to_record(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ContrastivePair":
        if not isinstance(rec, dict):
            raise CorpusFormatError(f"expected a JSON object, got {type(rec).__name__}")
        missing = {"original", "rewritten", "facet", "issues", "provenance"} - rec.keys()
        if missing:
            raise CorpusFormatError(f"pair record missing fields {sorted(missing)}")
        return cls(
            original=Document.from_record(rec["original"]),
            rewritten=Document.from_record(rec["rewritten"]),
            facet=facet_by_name(rec["facet"]),
            issues=rec["issues"],
            provenance=Provenance.from_record(rec["provenance"]),
        )


@dataclass(frozen=True)
class GradeBins:
    """Equal-width mapping from a raw score range onto the 5-point scale."""

    source_min: float
    source_max: float
    num_bins: int = NUM_GRADES

    def __post_init__(self) -> None:
        if not self.source_min < self.source_max:
            raise ValueError(
                f"source_min ({self.source_min}) must be < source_max ({self.source_max})"
            )
        if self.num_bins < 1:
            raise ValueError(f"num_bins must be positive, got {self.num_bins}")


def bin_grade(raw: float, bins: GradeBins) -> int:
    """Map ``raw`` onto ``[0, num_bins)`` with equal-width bins.

    Monotone nondecreasing in ``raw``; both endpoints of the source range map
    to the extreme bins.
    """
    if not bins.source_min <= raw <= bins.source_max:
        raise ValueError(
            f"raw score {raw} outside declared range "
            f"[{bins.source_min}, {bins.source_max}]"
        )
    width = bins.source_max - bins.source_min
    idx = int(bins.num_bins * (raw - bins.source_min) / width)
    return min(idx, bins.num_bins - 1)


_WORD_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def word_tokens(text: str) -> list[str]:
    """Lowercased word tokens, splitting on whitespace and punctuation.

    This is the single tokenizer shared by the evaluator and the diversity
    metrics.
    """
    return _WORD_RE.findall(text.lower())


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation followed by whitespace."""
    parts = [p.strip() for p in _SENTENCE_SPLIT_RE.split(text)]
    return [p for p in parts if p]


def _load_template(name: str) -> str:
    text = resources.files("facetgrader.templates").joinpath(name).read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


_QA_TEMPLATE = _load_template("qa_format.txt")


def format_qa(title: str, article: str) -> str:
    """Wrap an article in the dialogue question/answer evaluation format.

    Substitution is single-pass: braces inside ``title`` or ``article`` are
    preserved literally.
    """
    return _QA_TEMPLATE.format(title=title, article_to_be_evaluated=article)


_SCHEMAS = {"labeled": Document, "pairs": ContrastivePair}


def load_corpus(path: str | Path, schema: str = "labeled") -> list:
    """Read a JSONL corpus, validating every record against ``schema``.

    Returns records in file order. The first malformed line aborts the load
    with its 1-based line number.
    """
    if schema not in _SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {sorted(_SCHEMAS)}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    record_type = _SCHEMAS[schema]
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                records.append(record_type.from_record(raw))
            except CorpusFormatError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_corpus(records, path: str | Path) -> None:
    """Write documents or pairs as JSONL.

    All records are validated before the file is touched, so a bad record
    never leaves a partial file behind.
    """
    records = list(records)
    lines = []
    for i, rec in enumerate(records):
        if not isinstance(rec, (Document, ContrastivePair)):
            raise CorpusFormatError(
                f"record {i}: expected Document or ContrastivePair, got {type(rec).__name__}"
            )
        # Invariants hold at construction time but records may have been
        # altered since; re-validate before any IO.
        rec.validate()
        lines.append(json.dumps(rec.to_record(), ensure_ascii=False))
    if len({type(r) for r in records}) > 1:
        raise CorpusFormatError("cannot mix documents and pairs in one corpus file")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line + "\n")
