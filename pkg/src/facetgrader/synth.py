"""Seeded synthetic corpus with planted, graded quality degradations.

Each document starts from a clean topical template carrying stock quality
sentences (facts, advice, a creative twist, an engaging hook). Its grade g
is planted by applying ``2 * (4 - g)`` degradation operations, cycling over
the five facets: noise sentences are injected, quality sentences removed,
sentences duplicated or shuffled. More degradations never yield a higher
grade, by construction.

The degradation vocabulary is exactly the one the mock rewriter undoes, so
offline pair generation produces rewrites that genuinely improve planted
documents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, FACET_NAMES
from .llm import (
    ADVICE_SENTENCES,
    COHERENCE_NOISE_SENTENCES,
    CREATIVENESS_NOISE_SENTENCES,
    ENGAGINGNESS_NOISE_SENTENCES,
    FACT_SENTENCES,
    HOOK_SENTENCES,
    TWIST_SENTENCES,
    USEFULNESS_NOISE_SENTENCES,
)

DEGRADATIONS_PER_GRADE_STEP = 2

TOPICS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("community gardens", ("garden", "soil", "compost", "harvest", "seedling", "plot", "bed", "greenhouse")),
    ("home bread baking", ("dough", "yeast", "crust", "oven", "flour", "proofing", "crumb", "starter")),
    ("urban cycling", ("bicycle", "lane", "commute", "helmet", "pedal", "gear", "route", "saddle")),
    ("amateur astronomy", ("telescope", "nebula", "eyepiece", "tripod", "constellation", "lens", "sky", "orbit")),
    ("trail running", ("trail", "elevation", "stride", "terrain", "summit", "pace", "ridge", "switchback")),
    ("beekeeping", ("hive", "colony", "nectar", "frame", "queen", "swarm", "apiary", "pollen")),
    ("woodworking", ("chisel", "grain", "joinery", "plank", "sawdust", "clamp", "lathe", "veneer")),
    ("tidepool ecology", ("tidepool", "anemone", "barnacle", "kelp", "limpet", "surf", "shoreline", "crab")),
    ("fermentation", ("brine", "culture", "ferment", "jar", "cabbage", "microbe", "acidity", "crock")),
    ("birdwatching", ("binoculars", "plumage", "migration", "perch", "warbler", "fieldbook", "songbird", "nest")),
    ("pottery", ("kiln", "glaze", "wheel", "clay", "bisque", "slip", "trimming", "stoneware")),
    ("chess strategy", ("opening", "endgame", "knight", "sacrifice", "tempo", "rank", "bishop", "castling")),
    ("alpine botany", ("meadow", "lichen", "alpine", "wildflower", "tundra", "moss", "scree", "saxifrage")),
    ("letterpress printing", ("typeface", "platen", "ink", "galley", "kerning", "paper", "impression", "composing")),
    ("kayak touring", ("kayak", "paddle", "current", "estuary", "portage", "drybag", "cockpit", "eddy")),
    ("mushroom foraging", ("mushroom", "mycelium", "spore", "forest", "chanterelle", "gill", "basket", "understory")),
    ("violin practice", ("violin", "bow", "rosin", "intonation", "vibrato", "fingerboard", "etude", "luthier")),
    ("weather observation", ("barometer", "front", "humidity", "cumulus", "forecast", "gauge", "thermometer", "drizzle")),
    ("rock climbing", ("crag", "belay", "carabiner", "crimp", "anchor", "chalk", "pitch", "overhang")),
    ("calligraphy", ("nib", "flourish", "baseline", "script", "letterform", "inkwell", "serif", "stroke")),
)

TITLE_LEADS = ("Understanding", "Notes on", "A Closer Look at", "Inside", "Field Guide to")

SENTENCE_SKELETONS = (
    "The {a} works together with the {b} to shape each {c}.",
    "Careful attention to the {a} keeps the {b} in balance over time.",
    "Every {a} depends on the {b} more than newcomers expect.",
    "Seasoned practitioners compare the {a} against the {b} before trusting the {c}.",
    "Small changes in the {a} ripple through the {b} and the {c} alike.",
    "A reliable {a} makes the difference between a rough {b} and a smooth {c}.",
    "Observing the {a} closely reveals how the {b} actually behaves.",
    "The interplay of {a}, {b}, and {c} rewards patient study.",
)

# Informativeness degradations dilute rather than inject marked noise; the
# mock rewriter restores facts but does not remove these.
DILUTION_SENTENCES = (
    "Broadly speaking, things happen in a general sort of way here.",
    "An overview of the area could loosely cover several directions at once.",
    "Roughly put, there is much that could be said in general terms.",
)

_NOISE_BY_FACET = {
    "coherence": COHERENCE_NOISE_SENTENCES,
    "usefulness": USEFULNESS_NOISE_SENTENCES,
    "creativeness": CREATIVENESS_NOISE_SENTENCES,
    "engagingness": ENGAGINGNESS_NOISE_SENTENCES,
}

_QUALITY_BY_FACET = {
    "usefulness": ADVICE_SENTENCES,
    "creativeness": TWIST_SENTENCES,
    "engagingness": HOOK_SENTENCES,
    "informativeness": FACT_SENTENCES,
}


@dataclass(frozen=True)
class TruthRecord:
    """Ground truth behind one synthetic document."""

    id: str
    grade: int
    degradations: int
    topic: str

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "grade": self.grade,
            "degradations": self.degradations,
            "topic": self.topic,
        }


def _choice(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _insert(rng: np.random.Generator, sentences: list[str], sentence: str) -> None:
    sentences.insert(int(rng.integers(len(sentences) + 1)), sentence)


def _remove_first(sentences: list[str], pool) -> bool:
    for i, s in enumerate(sentences):
        if s in pool:
            del sentences[i]
            return True
    return False


CONTENT_SENTENCES_PER_DOC = 12


def _clean_sentences(rng: np.random.Generator, topic_words: tuple[str, ...], topic_name: str) -> list[str]:
    sentences = [f"This article examines {topic_name} for attentive readers."]
    for _ in range(CONTENT_SENTENCES_PER_DOC):
        skeleton = _choice(rng, SENTENCE_SKELETONS)
        words = rng.permutation(len(topic_words))[:3]
        sentences.append(
            skeleton.format(
                a=topic_words[words[0]], b=topic_words[words[1]], c=topic_words[words[2]]
            )
        )
    picks = rng.permutation(len(FACT_SENTENCES))[:2]
    sentences.extend(FACT_SENTENCES[int(i)] for i in sorted(picks))
    sentences.append(_choice(rng, ADVICE_SENTENCES))
    sentences.append(_choice(rng, TWIST_SENTENCES))
    sentences.append(_choice(rng, HOOK_SENTENCES))
    return sentences


def _degrade(rng: np.random.Generator, sentences: list[str], facet_name: str) -> None:
    """Apply one degradation for ``facet_name`` in place."""
    if facet_name == "coherence":
        _insert(rng, sentences, _choice(rng, COHERENCE_NOISE_SENTENCES))
        rng.shuffle(sentences)
        return
    if facet_name == "informativeness":
        _remove_first(sentences, FACT_SENTENCES)
        _insert(rng, sentences, _choice(rng, DILUTION_SENTENCES))
        return
    if facet_name == "creativeness":
        _remove_first(sentences, TWIST_SENTENCES)
        _insert(rng, sentences, sentences[int(rng.integers(len(sentences)))])
        _insert(rng, sentences, _choice(rng, CREATIVENESS_NOISE_SENTENCES))
        return
    # usefulness and engagingness: strip their quality sentence, inject noise.
    _remove_first(sentences, _QUALITY_BY_FACET[facet_name])
    _insert(rng, sentences, _choice(rng, _NOISE_BY_FACET[facet_name]))


def generate_corpus(size: int, seed: int) -> tuple[list[Document], list[TruthRecord]]:
    """Build ``size`` labeled documents plus their ground-truth records.

    Grades are stratified (every grade appears once per five documents)
    and the whole construction is a pure function of ``seed``.
    """
    if size < 1:
        raise ValueError(f"size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    grades = np.array([i % 5 for i in range(size)])
    rng.shuffle(grades)

    documents: list[Document] = []
    truths: list[TruthRecord] = []
    for index in range(size):
        grade = int(grades[index])
        topic_name, topic_words = _choice(rng, TOPICS)
        sentences = _clean_sentences(rng, topic_words, topic_name)

        degradations = DEGRADATIONS_PER_GRADE_STEP * (4 - grade)
        facet_cycle = [FACET_NAMES[int(i)] for i in rng.permutation(len(FACET_NAMES))]
        for op in range(degradations):
            _degrade(rng, sentences, facet_cycle[op % len(facet_cycle)])

        doc_id = f"synth-{seed}-{index:05d}"
        documents.append(
            Document(
                id=doc_id,
                title=f"{_choice(rng, TITLE_LEADS)} {topic_name}",
                body=" ".join(sentences),
                grade=grade,
            )
        )
        truths.append(
            TruthRecord(id=doc_id, grade=grade, degradations=degradations, topic=topic_name)
        )
    return documents, truths
