"""Agreement and diversity statistics for grade predictions.

Conventions, fixed here once and relied on by the report schema:

* Spearman is the Pearson correlation of average ranks (ties share the
  mean rank).
* Kendall is the tie-corrected tau-b variant; grade data is heavily tied.
* QWK uses quadratic disagreement weights ``(i - j)^2 / (K - 1)^2`` with
  the expected matrix scaled to the observed total.
* A class absent from both gold and predictions scores F1 = 0, so the
  macro average over all five grades is always defined.
* Correlations over constant inputs are reported as explicitly undefined
  (``None`` in reports), never silently as 0.
* Self-BLEU uses uniform n-gram weights, add-one smoothed modified
  precisions, and the closest-reference-length brevity penalty.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import NUM_GRADES, word_tokens


class UndefinedMetricError(ValueError):
    """The metric has no defined value on these inputs (e.g. constant side)."""

    def __init__(self, metric: str, reason: str):
        super().__init__(f"{metric} undefined: {reason}")
        self.metric = metric


class MetricError(ValueError):
    """A metric failed on invalid input; names the failing metric."""

    def __init__(self, metric: str, reason: str):
        message = reason if reason.startswith(f"{metric}") else f"{metric}: {reason}"
        super().__init__(message)
        self.metric = metric


def _paired(gold, pred, metric: str, min_length: int = 1) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(gold, dtype=float)
    p = np.asarray(pred, dtype=float)
    if g.ndim != 1 or p.ndim != 1:
        raise ValueError(f"{metric} expects 1-d score lists")
    if len(g) != len(p):
        raise ValueError(f"{metric}: length mismatch ({len(g)} vs {len(p)})")
    if len(g) < min_length:
        raise ValueError(f"{metric}: needs at least {min_length} items, got {len(g)}")
    if not (np.isfinite(g).all() and np.isfinite(p).all()):
        raise ValueError(f"{metric}: scores must all be finite")
    return g, p


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr))
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    return float((da * db).sum() / math.sqrt((da * da).sum() * (db * db).sum()))


def spearman(gold, pred) -> float:
    """Rank correlation: Pearson over average ranks."""
    g, p = _paired(gold, pred, "spearman", min_length=2)
    if (g == g[0]).all() or (p == p[0]).all():
        raise UndefinedMetricError("spearman", "one side is constant")
    return _pearson(average_ranks(g), average_ranks(p))


def kendall_tau(gold, pred) -> float:
    """Tau-b over all item pairs, corrected for ties on either side."""
    g, p = _paired(gold, pred, "kendall_tau", min_length=2)
    n = len(g)
    concordance = 0.0
    ties_g = 0
    ties_p = 0
    for i in range(n - 1):
        sign_g = np.sign(g[i + 1 :] - g[i])
        sign_p = np.sign(p[i + 1 :] - p[i])
        concordance += float((sign_g * sign_p).sum())
        ties_g += int((sign_g == 0).sum())
        ties_p += int((sign_p == 0).sum())
    total_pairs = n * (n - 1) // 2
    denom_g = total_pairs - ties_g
    denom_p = total_pairs - ties_p
    if denom_g == 0 or denom_p == 0:
        raise UndefinedMetricError("kendall_tau", "all pairs tied on one side")
    return concordance / math.sqrt(denom_g * denom_p)


def _grade_array(values, num_classes: int, metric: str, side: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1 or len(arr) == 0:
        raise ValueError(f"{metric}: {side} must be a non-empty 1-d list")
    as_int = arr.astype(int)
    if not np.array_equal(as_int, arr):
        raise ValueError(f"{metric}: {side} grades must be integers")
    if as_int.min() < 0 or as_int.max() >= num_classes:
        raise ValueError(
            f"{metric}: {side} grades must lie in [0, {num_classes - 1}]"
        )
    return as_int


def qwk(gold, pred, num_classes: int = NUM_GRADES) -> float:
    """Quadratic Weighted Kappa between two grade lists."""
    if num_classes < 2:
        raise ValueError(f"qwk needs num_classes >= 2, got {num_classes}")
    g = _grade_array(gold, num_classes, "qwk", "gold")
    p = _grade_array(pred, num_classes, "qwk", "pred")
    if len(g) != len(p):
        raise ValueError(f"qwk: length mismatch ({len(g)} vs {len(p)})")
    n = len(g)
    observed = np.zeros((num_classes, num_classes))
    np.add.at(observed, (g, p), 1.0)
    idx = np.arange(num_classes, dtype=float)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (num_classes - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    denom = float((weights * expected).sum())
    if denom == 0.0:
        raise UndefinedMetricError("qwk", "single class on both sides")
    return 1.0 - float((weights * observed).sum()) / denom


def accuracy(gold, pred) -> float:
    """Exact-match fraction."""
    g, p = _paired(gold, pred, "accuracy", min_length=1)
    return float((g == p).mean())


def f1_scores(gold, pred, num_classes: int = NUM_GRADES) -> tuple[list[float], float]:
    """Per-class F1 plus the unweighted macro average.

    A class with no support on either side scores 0, keeping the macro
    over all classes defined.
    """
    g = _grade_array(gold, num_classes, "f1_scores", "gold")
    p = _grade_array(pred, num_classes, "f1_scores", "pred")
    if len(g) != len(p):
        raise ValueError(f"f1_scores: length mismatch ({len(g)} vs {len(p)})")
    per_class: list[float] = []
    for cls in range(num_classes):
        tp = int(((g == cls) & (p == cls)).sum())
        fp = int(((g != cls) & (p == cls)).sum())
        fn = int(((g == cls) & (p != cls)).sum())
        if 2 * tp + fp + fn == 0:
            per_class.append(0.0)
        else:
            per_class.append(2 * tp / (2 * tp + fp + fn))
    return per_class, sum(per_class) / num_classes


def ttr(text: str) -> float:
    """Type-token ratio: distinct tokens over total tokens."""
    tokens = word_tokens(text)
    if not tokens:
        raise ValueError("ttr: text has no tokens")
    return len(set(tokens)) / len(tokens)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu(candidate: list[str], references: list[list[str]], max_n: int) -> float:
    length = len(candidate)
    if length == 0:
        return 0.0
    log_precision_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngrams(candidate, n)
        total = sum(cand_counts.values())
        max_ref: Counter = Counter()
        for ref in references:
            for gram, count in _ngrams(ref, n).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        log_precision_sum += math.log((clipped + 1) / (total + 1))
    geo_mean = math.exp(log_precision_sum / max_n)
    ref_len = min((len(r) for r in references), key=lambda rl: (abs(rl - length), rl))
    brevity = 1.0 if length >= ref_len else math.exp(1.0 - ref_len / length)
    return brevity * geo_mean


def self_bleu(documents: list[str], max_n: int = 4) -> float:
    """Mean BLEU of each document against all the others.

    Higher means the corpus repeats itself; lower means more diversity.
    Add-one smoothing keeps every document's score positive.
    """
    if len(documents) < 2:
        raise ValueError(f"self_bleu needs at least 2 documents, got {len(documents)}")
    token_lists = [word_tokens(doc) for doc in documents]
    scores = [
        _bleu(tokens, token_lists[:i] + token_lists[i + 1 :], max_n)
        for i, tokens in enumerate(token_lists)
    ]
    return sum(scores) / len(scores)


@dataclass(frozen=True)
class EvalReport:
    """The metric bundle for one prediction run.

    Correlation fields are ``None`` when undefined (constant inputs).
    """

    spearman: float | None
    kendall: float | None
    qwk: float | None
    accuracy: float
    f1_per_class: tuple[float, ...]
    macro_f1: float

    def __post_init__(self) -> None:
        for name in ("spearman", "kendall", "qwk"):
            value = getattr(self, name)
            if value is not None and not -1.0 - 1e-9 <= value <= 1.0 + 1e-9:
                raise ValueError(f"{name} out of [-1, 1]: {value}")
        for name, value in [("accuracy", self.accuracy), ("macro_f1", self.macro_f1)]:
            if not -1e-9 <= value <= 1.0 + 1e-9:
                raise ValueError(f"{name} out of [0, 1]: {value}")
        if any(not -1e-9 <= f <= 1.0 + 1e-9 for f in self.f1_per_class):
            raise ValueError("per-class F1 out of [0, 1]")

    @property
    def accuracy_percent(self) -> float:
        return 100.0 * self.accuracy

    def to_dict(self) -> dict:
        return {
            "spearman": self.spearman,
            "kendall": self.kendall,
            "qwk": self.qwk,
            "accuracy": self.accuracy,
            "accuracy_percent": self.accuracy_percent,
            "f1_per_class": list(self.f1_per_class),
            "macro_f1": self.macro_f1,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            spearman=data["spearman"],
            kendall=data["kendall"],
            qwk=data["qwk"],
            accuracy=data["accuracy"],
            f1_per_class=tuple(data["f1_per_class"]),
            macro_f1=data["macro_f1"],
        )


def evaluate(gold, pred, num_classes: int = NUM_GRADES) -> EvalReport:
    """Assemble the full report; failures carry the offending metric's name."""

    def run(metric: str, fn):
        try:
            return fn()
        except UndefinedMetricError:
            return None
        except ValueError as exc:
            raise MetricError(metric, str(exc)) from exc

    f1_and_macro = run("f1_scores", lambda: f1_scores(gold, pred, num_classes))
    return EvalReport(
        spearman=run("spearman", lambda: spearman(gold, pred)),
        kendall=run("kendall_tau", lambda: kendall_tau(gold, pred)),
        qwk=run("qwk", lambda: qwk(gold, pred, num_classes)),
        accuracy=run("accuracy", lambda: accuracy(gold, pred)),
        f1_per_class=tuple(f1_and_macro[0]),
        macro_f1=f1_and_macro[1],
    )
