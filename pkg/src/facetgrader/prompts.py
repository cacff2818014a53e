"""Rendering of the two-stage counterfactual generation prompts.

Stage A asks for quality issues on one facet given the article and its grade;
stage B asks for a rewrite that addresses those issues. The fixed template
text ships as package assets and is treated as frozen: tests compare rendered
prompts byte-for-byte against golden files.
"""

from __future__ import annotations

from importlib import resources

from .corpus import Document, QualityFacet


def _load_template(name: str) -> str:
    text = resources.files("facetgrader.templates").joinpath(name).read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


ISSUE_TEMPLATE = _load_template("issue_prompt.txt")
REWRITE_TEMPLATE = _load_template("rewrite_prompt.txt")

# Section markers, used by the offline mock client to parse prompts back.
ARTICLE_MARKER = "**Article:**"
GRADES_MARKER = "**Article Quality Grades:**"
ISSUES_MARKER = "**Issues:**"
REWRITTEN_MARKER = "**Rewritten Article:**"

ISSUE_PROMPT_PREFIX = "Given an article quality assessment system"
REWRITE_PROMPT_PREFIX = "The given article has some content quality issues"


def render_issue_prompt(document: Document, facet: QualityFacet) -> str:
    """Render the stage-A prompt asking for issues on ``facet``.

    Requires a graded document: the prompt cites the overall grade as the
    reference point for how severe the issues should be. Substitution is
    single-pass; braces in the article survive literally.
    """
    if document.grade is None:
        raise ValueError(
            f"document {document.id!r} has no grade; the issue prompt "
            "references the overall quality grade"
        )
    return ISSUE_TEMPLATE.format(
        dim_name=facet.name,
        dim_description=facet.description,
        article=document.body,
        label=document.grade,
    )


def render_rewrite_prompt(document: Document, issues: str) -> str:
    """Render the stage-B prompt asking for a rewrite addressing ``issues``."""
    if not issues or not issues.strip():
        raise ValueError("issues text must be non-empty for the rewrite prompt")
    return REWRITE_TEMPLATE.format(article=document.body, issues=issues)
