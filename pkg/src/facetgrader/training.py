"""Mini-batch gradient training, checkpoints, and grade prediction.

Each step draws one labeled mini-batch and one pair mini-batch from
independent seeded streams, so removing the pair batch (or setting the
contrast weight to zero) leaves the labeled trajectory bit-identical.
Documents are wrapped in the question/answer evaluation format before
tokenization, for both training and prediction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import ContrastivePair, Document, format_qa
from .model import (
    ModelParams,
    classify,
    encode,
    init_params,
    joint_loss_and_grads,
    tokenize,
)

CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; carries the offending epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}: loss is non-finite")
        self.epoch = epoch


class CheckpointError(ValueError):
    """Checkpoint unreadable or inconsistent with its metadata."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    contrast_weight: float = 10.0
    learning_rate: float = 0.5
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    hidden_dim: int = 32
    vocab_size: int = 4096
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if self.contrast_weight < 0:
            raise ValueError("contrast_weight must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.hidden_dim < 1 or self.vocab_size < 2:
            raise ValueError("hidden_dim must be >= 1 and vocab_size >= 2")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "contrast_weight": self.contrast_weight,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "hidden_dim": self.hidden_dim,
            "vocab_size": self.vocab_size,
            "momentum": self.momentum,
        }


@dataclass(frozen=True)
class EpochLog:
    """Mean losses over one epoch's steps."""

    epoch: int
    cls_loss: float
    ctr_loss: float
    total_loss: float

    def to_record(self) -> dict:
        # Wire format for the training-log JSONL.
        return {
            "epoch": self.epoch,
            "L_cls": self.cls_loss,
            "L_ctr": self.ctr_loss,
            "L": self.total_loss,
        }


def document_text(doc: Document) -> str:
    """The exact text the evaluator sees for a document."""
    return format_qa(doc.title, doc.body)


def train(
    labeled: list[Document],
    pairs: list[ContrastivePair] | None,
    config: TrainConfig,
) -> tuple[ModelParams, list[EpochLog]]:
    """Gradient-descent training of the joint objective.

    Deterministic given the seed: reruns produce bit-identical parameters.
    Pairs are ignored entirely when absent or when the contrast weight is
    zero, which makes the supervised-only ablation exact.
    """
    if not labeled:
        raise ValueError("training needs a non-empty labeled corpus")
    missing = [doc.id for doc in labeled if doc.grade is None]
    if missing:
        raise ValueError(
            f"{len(missing)} unlabeled document(s) in training corpus, "
            f"first: {missing[0]!r}"
        )

    labeled_items = [
        (tokenize(document_text(doc), config.vocab_size), doc.grade) for doc in labeled
    ]
    use_pairs = bool(pairs) and config.contrast_weight != 0.0
    pair_items = (
        [
            (
                tokenize(document_text(p.rewritten), config.vocab_size),
                tokenize(document_text(p.original), config.vocab_size),
            )
            for p in pairs
        ]
        if use_pairs
        else []
    )

    rng_labeled = np.random.default_rng([config.seed, 0])
    rng_pairs = np.random.default_rng([config.seed, 1])
    params = init_params(config.vocab_size, config.hidden_dim, np.random.default_rng([config.seed, 2]))
    param_blocks = params.blocks()
    velocity = params.zeros_like().blocks() if config.momentum else None

    n = len(labeled_items)
    steps = (n + config.batch_size - 1) // config.batch_size
    logs: list[EpochLog] = []

    for epoch in range(1, config.epochs + 1):
        order = rng_labeled.permutation(n)
        epoch_cls = epoch_ctr = epoch_total = 0.0
        for step in range(steps):
            batch_idx = order[step * config.batch_size : (step + 1) * config.batch_size]
            batch = [labeled_items[i] for i in batch_idx]
            if pair_items:
                pair_idx = rng_pairs.integers(0, len(pair_items), size=config.batch_size)
                pair_batch = [pair_items[i] for i in pair_idx]
            else:
                pair_batch = []
            losses, grads = joint_loss_and_grads(
                batch, pair_batch, params, config.contrast_weight
            )
            if not math.isfinite(losses.total):
                raise TrainingDivergedError(epoch)
            if velocity is not None:
                for name, g in grads.blocks().items():
                    v = velocity[name]
                    v *= config.momentum
                    v += g
                    param_blocks[name] -= config.learning_rate * v
            else:
                for name, g in grads.blocks().items():
                    param_blocks[name] -= config.learning_rate * g
            epoch_cls += losses.classification
            epoch_ctr += losses.contrast
            epoch_total += losses.total
        logs.append(
            EpochLog(
                epoch=epoch,
                cls_loss=epoch_cls / steps,
                ctr_loss=epoch_ctr / steps,
                total_loss=epoch_total / steps,
            )
        )
    return params, logs


def predict_grade(
    text: str, params: ModelParams, title: str = ""
) -> tuple[int, np.ndarray]:
    """Predicted grade (argmax, ties toward the lower grade) and distribution."""
    tokens = tokenize(format_qa(title, text), params.vocab_size)
    probs = classify(encode(tokens, params), params)
    return int(np.argmax(probs)), probs


def predict_document(doc: Document, params: ModelParams) -> tuple[int, np.ndarray]:
    """Predict the grade of a corpus document (uses its title)."""
    return predict_grade(doc.body, params, title=doc.title)


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    """Write parameters plus JSON metadata to one ``.npz`` file."""
    params.validate()
    full_meta = dict(meta or {})
    full_meta.update(
        {
            "format_version": CHECKPOINT_VERSION,
            "vocab_size": params.vocab_size,
            "hidden_dim": params.hidden_dim,
        }
    )
    with open(path, "wb") as handle:
        np.savez(handle, __meta__=np.array(json.dumps(full_meta)), **params.blocks())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Read a checkpoint, validating shapes against its metadata."""
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with archive as data:
        try:
            meta = json.loads(str(data["__meta__"][()]))
            params = ModelParams(
                embedding=data["embedding"],
                enc_w=data["enc_w"],
                enc_b=data["enc_b"],
                cls_w=data["cls_w"],
                cls_b=data["cls_b"],
                ctr_w=data["ctr_w"],
                ctr_b=data["ctr_b"],
            )
        except KeyError as exc:
            raise CheckpointError(f"checkpoint {path} missing array {exc}") from exc
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {meta.get('format_version')}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    try:
        params.validate()
    except ValueError as exc:
        raise CheckpointError(f"checkpoint {path}: {exc}") from exc
    if meta["vocab_size"] != params.vocab_size or meta["hidden_dim"] != params.hidden_dim:
        raise CheckpointError(
            f"checkpoint {path}: metadata dimensions "
            f"({meta['vocab_size']}, {meta['hidden_dim']}) do not match arrays "
            f"({params.vocab_size}, {params.hidden_dim})"
        )
    return params, meta
