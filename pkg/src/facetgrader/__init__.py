"""Facet-aware document quality grading.

Builds counterfactual contrastive document pairs with a two-stage prompt
protocol, trains a small grader with a joint classification + pairwise
ranking objective, and reports rank agreement with gold grades.
"""

from .corpus import (
    ContrastivePair,
    Document,
    FACETS,
    GradeBins,
    Provenance,
    QualityFacet,
    bin_grade,
    facet_by_name,
    format_qa,
    load_corpus,
    save_corpus,
)
from .llm import (
    HttpLlmClient,
    LlmRequest,
    LlmResponse,
    MockLlmClient,
    PipelineMockClient,
    ResponseCache,
    mock_rewriter,
)
from .metrics import (
    EvalReport,
    accuracy,
    evaluate,
    f1_scores,
    kendall_tau,
    qwk,
    self_bleu,
    spearman,
    ttr,
)
from .model import (
    ModelParams,
    classify,
    cls_loss,
    contrast_score,
    ctr_loss,
    encode,
    init_params,
    joint_loss,
    joint_loss_and_grads,
    tokenize,
)
from .pairs import (
    FacetAssignment,
    GenerationConfig,
    assign_facets,
    build_contrastive_dataset,
    generate_pair,
)
from .prompts import render_issue_prompt, render_rewrite_prompt
from .synth import generate_corpus
from .training import (
    TrainConfig,
    load_checkpoint,
    predict_document,
    predict_grade,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
