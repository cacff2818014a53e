import math

import numpy as np
import pytest

from facetgrader.model import (
    EMPTY_TOKEN_ID,
    GradientError,
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

from oracles import finite_difference_grads

LN2 = math.log(2.0)
LN4 = math.log(4.0)
LN5 = math.log(5.0)


def tiny_model(rng, vocab=50, d=8):
    params = init_params(vocab, d, rng)
    # make the heads non-trivial so gradients flow everywhere
    params.cls_w += rng.normal(0, 0.3, size=params.cls_w.shape)
    params.cls_b += rng.normal(0, 0.1, size=params.cls_b.shape)
    params.ctr_w += rng.normal(0, 0.3, size=params.ctr_w.shape)
    params.ctr_b += rng.normal(0, 0.1, size=params.ctr_b.shape)
    return params


def random_batches(rng, vocab=50, n_labeled=4, n_pairs=4):
    labeled = [
        (rng.integers(0, vocab, size=rng.integers(3, 9)), int(rng.integers(0, 5)))
        for _ in range(n_labeled)
    ]
    pairs = [
        (rng.integers(0, vocab, size=rng.integers(3, 9)),
         rng.integers(0, vocab, size=rng.integers(3, 9)))
        for _ in range(n_pairs)
    ]
    return labeled, pairs


class TestTokenize:
    def test_case_folding(self):
        ids = tokenize("A a", 100)
        assert len(ids) == 2 and ids[0] == ids[1]

    def test_empty_text_reserved_token(self):
        ids = tokenize("", 100)
        assert list(ids) == [EMPTY_TOKEN_ID]
        assert list(tokenize("  ,. !", 100)) == [EMPTY_TOKEN_ID]

    def test_determinism(self):
        assert np.array_equal(tokenize("the same text", 512), tokenize("the same text", 512))

    def test_ids_in_vocab_bounds(self):
        ids = tokenize("many different words " * 50, 17)
        assert ids.min() >= 1 and ids.max() < 17

    def test_tiny_vocab_rejected(self):
        with pytest.raises(ValueError):
            tokenize("x", 1)


class TestEncode:
    def test_zero_params_zero_output(self):
        params = ModelParams(
            embedding=np.zeros((10, 4)),
            enc_w=np.zeros((4, 4)),
            enc_b=np.zeros(4),
            cls_w=np.zeros((4, 5)),
            cls_b=np.zeros(5),
            ctr_w=np.zeros(4),
            ctr_b=np.zeros(1),
        )
        hidden = encode(np.array([1, 2, 3]), params)
        assert np.array_equal(hidden, np.zeros(4))

    def test_permutation_invariance_under_identity_transform(self, rng):
        params = init_params(30, 6, rng)
        params.enc_w = np.eye(6)
        params.enc_b = np.zeros(6)
        tokens = np.array([4, 9, 2, 2, 7])
        shuffled = np.array([2, 7, 4, 2, 9])
        assert np.allclose(encode(tokens, params), encode(shuffled, params))

    def test_output_dimension(self, rng):
        params = init_params(30, 11, rng)
        assert encode(np.array([1, 2]), params).shape == (11,)


class TestClassify:
    def test_uniform_on_equal_logits(self, rng):
        params = init_params(20, 4, rng)  # zero heads: all logits equal
        probs = classify(encode(np.array([3, 4]), params), params)
        assert np.allclose(probs, 0.2)

    def test_stable_for_huge_logits(self, rng):
        params = init_params(20, 4, rng)
        params.cls_b = np.array([1000.0, 0.0, 0.0, 0.0, 0.0])
        probs = classify(np.zeros(4), params)
        assert np.isfinite(probs).all()
        assert probs[0] == pytest.approx(1.0)
        assert probs[1:] == pytest.approx(np.zeros(4), abs=1e-300)

    def test_sums_to_one(self, rng):
        params = tiny_model(rng)
        for _ in range(20):
            probs = classify(rng.normal(size=8), params)
            assert probs.sum() == pytest.approx(1.0, abs=1e-9)
            assert (probs >= 0).all()

    def test_nonfinite_input_rejected(self, rng):
        params = tiny_model(rng)
        with pytest.raises(ValueError):
            classify(np.array([np.nan] * 8), params)


class TestContrastScore:
    def test_zero_weights_return_bias(self, rng):
        params = init_params(20, 4, rng)
        params.ctr_b = np.array([2.5])
        assert contrast_score(rng.normal(size=4), params) == pytest.approx(2.5)

    def test_linearity(self, rng):
        params = tiny_model(rng, d=6, vocab=20)
        h = rng.normal(size=6)
        zero = contrast_score(np.zeros(6), params)
        assert contrast_score(3.0 * h, params) - zero == pytest.approx(
            3.0 * (contrast_score(h, params) - zero)
        )

    def test_homogeneity_in_weights(self, rng):
        params = tiny_model(rng, d=6, vocab=20)
        params.ctr_b = np.zeros(1)
        h = rng.normal(size=6)
        single = contrast_score(h, params)
        params.ctr_w = params.ctr_w * 2.0
        assert contrast_score(h, params) == pytest.approx(2.0 * single)


class TestClsLoss:
    def test_uniform_is_ln5(self):
        assert cls_loss(np.full(5, 0.2), 3) == pytest.approx(LN5, abs=1e-12)

    def test_perfect_prediction_is_zero(self):
        dist = np.zeros(5)
        dist[2] = 1.0
        assert cls_loss(dist, 2) == 0.0

    def test_quarter_probability(self):
        dist = np.array([0.25, 0.25, 0.25, 0.25, 0.0])
        assert cls_loss(dist, 0) == pytest.approx(LN4, abs=1e-12)

    def test_gold_out_of_range(self):
        with pytest.raises(ValueError):
            cls_loss(np.full(5, 0.2), 5)

    def test_nonnegative(self, rng):
        for _ in range(50):
            logits = rng.normal(size=5)
            e = np.exp(logits - logits.max())
            assert cls_loss(e / e.sum(), int(rng.integers(0, 5))) >= 0.0


class TestCtrLoss:
    def test_zero_margin_is_ln2(self):
        assert ctr_loss(1.5, 1.5) == pytest.approx(LN2, abs=1e-12)

    def test_large_positive_margin(self):
        # -ln(sigmoid(10)) evaluated at high precision
        assert ctr_loss(10.0, 0.0) == pytest.approx(4.5398899216870535e-05, rel=1e-12)

    def test_large_negative_margin(self):
        # softplus(10) evaluated at high precision
        assert ctr_loss(0.0, 10.0) == pytest.approx(10.000045398899218, rel=1e-12)

    def test_translation_invariance(self, rng):
        for _ in range(30):
            a, b, c = rng.normal(size=3) * 10
            assert ctr_loss(a + c, b + c) == pytest.approx(ctr_loss(a, b), rel=1e-12)

    def test_convexity_pair_sum(self, rng):
        for _ in range(30):
            a, b = rng.normal(size=2) * 3
            total = ctr_loss(a, b) + ctr_loss(b, a)
            assert total >= 2 * LN2 - 1e-12
        assert ctr_loss(1.0, 1.0) + ctr_loss(1.0, 1.0) == pytest.approx(2 * LN2)

    def test_strictly_decreasing_in_margin(self):
        margins = np.linspace(-5, 5, 41)
        values = [ctr_loss(m, 0.0) for m in margins]
        assert all(earlier > later for earlier, later in zip(values, values[1:]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            ctr_loss(float("inf"), 0.0)


class TestJointLoss:
    def test_analytic_combination(self, rng):
        params = init_params(20, 4, rng)  # zero heads: uniform classifier, equal scores
        labeled = [(np.array([1, 2, 3]), 2)]
        pairs = [(np.array([4, 5]), np.array([6, 7]))]
        result = joint_loss(labeled, pairs, params, contrast_weight=10.0)
        assert result.total == pytest.approx(LN5 + 10 * LN2, abs=1e-10)
        assert result.classification == pytest.approx(LN5, abs=1e-12)
        assert result.contrast == pytest.approx(LN2, abs=1e-12)

    def test_zero_weight_equals_supervised(self, rng):
        params = tiny_model(rng)
        labeled, pairs = random_batches(rng)
        with_pairs = joint_loss(labeled, pairs, params, contrast_weight=0.0)
        without = joint_loss(labeled, [], params, contrast_weight=0.0)
        assert with_pairs.total == without.total == with_pairs.classification

    def test_empty_batches_rejected(self, rng):
        with pytest.raises(ValueError):
            joint_loss([], [], tiny_model(rng), 1.0)

    def test_empty_pair_batch_contributes_zero(self, rng):
        params = tiny_model(rng)
        labeled, _ = random_batches(rng)
        result = joint_loss(labeled, [], params, contrast_weight=10.0)
        assert result.contrast == 0.0
        assert result.total == result.classification

    def test_matches_grad_path_value(self, rng):
        params = tiny_model(rng)
        labeled, pairs = random_batches(rng)
        forward = joint_loss(labeled, pairs, params, 10.0)
        via_grads, _ = joint_loss_and_grads(labeled, pairs, params, 10.0)
        assert forward.total == pytest.approx(via_grads.total, rel=1e-12)


class TestGradients:
    def test_matches_finite_differences(self, rng):
        params = tiny_model(rng, vocab=50, d=8)
        labeled, pairs = random_batches(rng, vocab=50)
        _, grads = joint_loss_and_grads(labeled, pairs, params, 10.0)

        numeric = finite_difference_grads(
            lambda: joint_loss(labeled, pairs, params, 10.0).total, params, step=1e-4
        )
        for name, analytic_block in grads.blocks().items():
            numeric_block = numeric.blocks()[name]
            denom = np.maximum(np.abs(numeric_block) + np.abs(analytic_block), 1e-8)
            rel = np.abs(numeric_block - analytic_block) / denom
            assert rel.max() < 1e-3, f"block {name} max rel err {rel.max():.2e}"

    def test_zero_weight_disconnects_contrast_head(self, rng):
        params = tiny_model(rng)
        labeled, pairs = random_batches(rng)
        _, grads = joint_loss_and_grads(labeled, pairs, params, 0.0)
        assert np.array_equal(grads.ctr_w, np.zeros_like(grads.ctr_w))
        assert np.array_equal(grads.ctr_b, np.zeros_like(grads.ctr_b))
        assert not np.array_equal(grads.cls_w, np.zeros_like(grads.cls_w))

    def test_pair_contribution_linear_in_weight(self, rng):
        params = tiny_model(rng)
        labeled, pairs = random_batches(rng)
        _, grads_zero = joint_loss_and_grads(labeled, pairs, params, 0.0)
        _, grads_one = joint_loss_and_grads(labeled, pairs, params, 5.0)
        _, grads_two = joint_loss_and_grads(labeled, pairs, params, 10.0)
        for name in grads_zero.blocks():
            contribution_one = grads_one.blocks()[name] - grads_zero.blocks()[name]
            contribution_two = grads_two.blocks()[name] - grads_zero.blocks()[name]
            assert np.allclose(2.0 * contribution_one, contribution_two, rtol=1e-9, atol=1e-12)

    def test_nonfinite_gradient_names_block(self, rng):
        params = tiny_model(rng)
        params.embedding[3, :] = np.nan
        labeled = [(np.array([3, 4]), 1)]
        with pytest.raises(GradientError, match="embedding|enc_w"):
            joint_loss_and_grads(labeled, [], params, 0.0)


class TestParams:
    def test_validate_accepts_fresh_params(self, rng):
        init_params(30, 7, rng).validate()

    def test_validate_rejects_bad_shapes(self, rng):
        params = init_params(30, 7, rng)
        params.cls_w = np.zeros((7, 4))
        with pytest.raises(ValueError, match="cls_w"):
            params.validate()

    def test_validate_rejects_nonfinite(self, rng):
        params = init_params(30, 7, rng)
        params.enc_b[0] = np.inf
        with pytest.raises(ValueError, match="enc_b"):
            params.validate()

    def test_copy_is_deep(self, rng):
        params = init_params(30, 7, rng)
        clone = params.copy()
        clone.embedding[0, 0] += 1.0
        assert params.embedding[0, 0] != clone.embedding[0, 0]
