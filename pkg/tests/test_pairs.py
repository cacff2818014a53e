import hashlib
from collections import Counter

import pytest

from facetgrader.corpus import Document, FACETS
from facetgrader.llm import (
    LlmError,
    MockLlmClient,
    PipelineMockClient,
    ResponseCache,
)
from facetgrader.pairs import (
    GenerationConfig,
    PairGenerationError,
    assign_facets,
    build_contrastive_dataset,
    generate_pair,
    truncate_body,
)
from facetgrader.prompts import render_issue_prompt, render_rewrite_prompt

from conftest import make_doc


def config(**overrides):
    return GenerationConfig(model="mock", seed=3, **overrides)


class TestAssignFacets:
    def test_deterministic(self, labeled_docs):
        assert assign_facets(labeled_docs, 9) == assign_facets(labeled_docs, 9)

    def test_single_document(self, labeled_docs):
        result = assign_facets(labeled_docs[:1], 0)
        assert len(result) == 1
        assert result[0].facet in FACETS
        assert result[0].document_id == labeled_docs[0].id
        assert result[0].seed == 0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            assign_facets([], 0)

    def test_uniform_shares_at_scale(self):
        docs = [make_doc(i, grade=0) for i in range(100_000)]
        shares = Counter(a.facet.name for a in assign_facets(docs, 42))
        for facet in FACETS:
            assert 0.19 <= shares[facet.name] / len(docs) <= 0.21

    def test_different_seeds_differ(self, labeled_docs):
        a = assign_facets(labeled_docs, 1)
        b = assign_facets(labeled_docs, 2)
        assert any(x.facet != y.facet for x, y in zip(a, b))


class TestTruncateBody:
    def test_short_body_untouched(self):
        doc = make_doc(0, grade=1)
        out, truncated = truncate_body(doc, 1000)
        assert out is doc and truncated is False

    def test_cuts_at_sentence_boundary(self):
        body = "Alpha one two three. Beta four five six. Gamma seven eight nine."
        doc = Document(id="d", title="", body=body, grade=1)
        out, truncated = truncate_body(doc, 8)
        assert truncated is True
        assert out.body == "Alpha one two three. Beta four five six."

    def test_first_sentence_always_kept(self):
        doc = Document(id="d", title="", body="One two three four five six.", grade=1)
        out, truncated = truncate_body(doc, 2)
        assert truncated is True
        assert out.body == "One two three four five six."


class TestGeneratePair:
    def test_mock_passthrough(self):
        doc = make_doc(0, grade=2)
        facet = FACETS[1]
        issue_prompt = render_issue_prompt(doc, facet)
        rewrite_prompt = render_rewrite_prompt(doc, "issues noted")
        client = MockLlmClient({issue_prompt: "issues noted", rewrite_prompt: "better text"})
        pair = generate_pair(doc, facet, client, config())
        assert pair.issues == "issues noted"
        assert pair.rewritten.body == "better text"
        assert pair.rewritten.grade is None
        assert pair.rewritten.id != pair.original.id
        assert pair.original == doc
        assert pair.provenance.issue_prompt_sha256 == hashlib.sha256(
            issue_prompt.encode()).hexdigest()
        assert pair.provenance.rewrite_prompt_sha256 == hashlib.sha256(
            rewrite_prompt.encode()).hexdigest()
        assert pair.provenance.seed == 3

    def test_unlabeled_document_rejected(self):
        with pytest.raises(PairGenerationError, match="unlabeled"):
            generate_pair(make_doc(0), FACETS[0], MockLlmClient({}), config())

    def test_stage_a_failure_names_stage(self):
        doc = make_doc(0, grade=2)
        with pytest.raises(PairGenerationError) as err:
            generate_pair(doc, FACETS[0], MockLlmClient({}), config())
        assert err.value.stage == "issue_identification"

    def test_stage_b_failure_names_stage(self):
        doc = make_doc(0, grade=2)
        facet = FACETS[0]
        client = MockLlmClient({render_issue_prompt(doc, facet): "an issue"})
        with pytest.raises(PairGenerationError) as err:
            generate_pair(doc, facet, client, config())
        assert err.value.stage == "rewriting"

    def test_empty_rewrite_rejected(self):
        doc = make_doc(0, grade=2)
        facet = FACETS[0]
        client = MockLlmClient(
            {
                render_issue_prompt(doc, facet): "an issue",
                render_rewrite_prompt(doc, "an issue"): "   ",
            }
        )
        with pytest.raises(PairGenerationError) as err:
            generate_pair(doc, facet, client, config())
        assert err.value.stage == "rewriting"


class TestBuildDataset:
    def test_compose_with_pipeline_mock(self, labeled_docs):
        result = build_contrastive_dataset(labeled_docs, PipelineMockClient(), config())
        assert len(result.pairs) == len(labeled_docs)
        assert result.skips == []
        expected = Counter(a.facet.name for a in assign_facets(labeled_docs, 3))
        assert result.summary["per_facet"] == {f.name: expected.get(f.name, 0) for f in FACETS}
        assert [p.original.id for p in result.pairs] == [d.id for d in labeled_docs]
        assert result.summary["fresh_llm_calls"] == 2 * len(labeled_docs)

    def test_warm_cache_rerun_is_idempotent(self, labeled_docs, tmp_path):
        cache = ResponseCache(tmp_path / "cache")
        first = build_contrastive_dataset(labeled_docs, PipelineMockClient(cache=cache), config())
        client = PipelineMockClient(cache=cache)
        second = build_contrastive_dataset(labeled_docs, client, config())
        assert second.pairs == first.pairs
        assert second.summary["fresh_llm_calls"] == 0
        assert second.summary["cached_llm_calls"] == 2 * len(labeled_docs)
        assert client.fresh_calls == 0

    def test_per_document_failure_becomes_skip_record(self, labeled_docs):
        class FlakyClient(PipelineMockClient):
            def complete(self, request):
                if labeled_docs[3].body in request.prompt:
                    raise LlmError("boom")
                return super().complete(request)

        result = build_contrastive_dataset(labeled_docs, FlakyClient(), config())
        assert len(result.pairs) == len(labeled_docs) - 1
        assert len(result.skips) == 1
        skip = result.skips[0]
        assert skip.document_id == labeled_docs[3].id
        assert skip.stage == "issue_identification"
        assert result.summary["skipped"] == 1

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_contrastive_dataset([], PipelineMockClient(), config())

    def test_unlabeled_corpus_rejected(self, labeled_docs):
        docs = labeled_docs + [make_doc(99)]
        with pytest.raises(ValueError, match="unlabeled"):
            build_contrastive_dataset(docs, PipelineMockClient(), config())

    def test_parallel_run_matches_serial(self, labeled_docs):
        serial = build_contrastive_dataset(
            labeled_docs, PipelineMockClient(), config(parallelism=1)
        )
        parallel = build_contrastive_dataset(
            labeled_docs, PipelineMockClient(), config(parallelism=8)
        )
        assert serial.pairs == parallel.pairs
