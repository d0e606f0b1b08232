"""Contrastive loss: closed forms, brute-force oracles, end-to-end gradients."""

import math

import numpy as np
import pytest

from sentemb.backbone import ModelConfig, init_model, make_token_batch, tokenize
from sentemb.contrastive import (
    LossConfig,
    PairBatch,
    in_batch_loss,
    in_batch_loss_with_negatives,
    loss_forward_backward,
    similarity_matrix,
)
from sentemb.embedder import ExtractionStrategy
from sentemb.errors import ContractError, ParameterError, ShapeError
from sentemb.tensor import Tensor, finite_difference_check


def _brute_force_loss(sim_pos, tau, sim_neg=None):
    """Oracle: per-row cross entropy via exact log-sum-exp, plain Python."""
    b = sim_pos.shape[0]
    total = 0.0
    for i in range(b):
        logits = [sim_pos[i, j] / tau for j in range(b)]
        if sim_neg is not None:
            logits += [sim_neg[i, j] / tau for j in range(b)]
        m = max(x for x in logits if x != -math.inf)
        lse = m + math.log(sum(math.exp(x - m) for x in logits))
        total += lse - sim_pos[i, i] / tau
    return total / b


def _unit_rows(rng, shape):
    m = rng.normal(size=shape)
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class TestSimilarityMatrix:
    def test_self_similarity_diagonal(self):
        rng = np.random.default_rng(0)
        e = _unit_rows(rng, (4, 6))
        sim = similarity_matrix(Tensor(e), Tensor(e)).numpy()
        np.testing.assert_allclose(np.diag(sim), np.ones(4), atol=1e-12)

    def test_orthonormal_rows_give_identity(self):
        e = np.eye(3)
        sim = similarity_matrix(Tensor(e), Tensor(e)).numpy()
        np.testing.assert_allclose(sim, np.eye(3), atol=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = _unit_rows(rng, (3, 5))
        c = _unit_rows(rng, (4, 5))
        sim = similarity_matrix(Tensor(a), Tensor(c)).numpy()
        for i in range(3):
            for j in range(4):
                assert abs(sim[i, j] - float(a[i] @ c[j])) < 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            similarity_matrix(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))


class TestInBatchLoss:
    def test_identity_similarity_closed_form(self):
        sim = Tensor(np.eye(2))
        loss = in_batch_loss(sim, temperature=1.0).item()
        assert abs(loss - math.log(1 + math.exp(-1))) < 1e-9
        assert abs(loss - 0.313262) < 1e-6

    def test_uniform_rows_give_log_batch(self):
        for tau in (0.01, 0.5, 1.0):
            sim = Tensor(np.full((2, 2), 0.37))
            assert abs(in_batch_loss(sim, tau).item() - math.log(2)) < 1e-12

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(100):
            b = int(rng.integers(2, 9))
            sim = rng.uniform(-1, 1, size=(b, b))
            tau = float(rng.choice([0.01, 0.05, 0.3, 1.0]))
            got = in_batch_loss(Tensor(sim), tau).item()
            assert abs(got - _brute_force_loss(sim, tau)) < 1e-9

    def test_rejects_bad_inputs(self):
        with pytest.raises(ParameterError):
            in_batch_loss(Tensor(np.eye(2)), temperature=0.0)
        with pytest.raises(ShapeError):
            in_batch_loss(Tensor(np.ones((2, 3))), temperature=1.0)
        with pytest.raises(ContractError):
            in_batch_loss(Tensor(np.ones((1, 1))), temperature=1.0)

    def test_non_negative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            sim = rng.uniform(-1, 1, size=(5, 5))
            assert in_batch_loss(Tensor(sim), 0.1).item() >= 0.0

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        sim = rng.uniform(-1, 1, size=(6, 6))
        perm = rng.permutation(6)
        base = in_batch_loss(Tensor(sim), 0.2).item()
        permuted = in_batch_loss(Tensor(sim[np.ix_(perm, perm)]), 0.2).item()
        assert abs(base - permuted) < 1e-12

    def test_label_correctness_monotonicity(self):
        # Diagonal similarity alpha, off-diagonal similarity beta, alpha > beta:
        # the loss must fall as the correct candidate pulls ahead and rise as
        # the wrong candidates catch up.
        def loss_at(alpha, beta):
            sim = alpha * np.eye(4) + beta * (1 - np.eye(4))
            return in_batch_loss(Tensor(sim), 0.5).item()

        assert loss_at(0.9, 0.2) < loss_at(0.6, 0.2) < loss_at(0.3, 0.2)
        assert loss_at(0.9, 0.1) < loss_at(0.9, 0.4) < loss_at(0.9, 0.8)

    def test_sharper_temperature_reduces_separable_loss(self):
        sim = Tensor(np.eye(4))
        assert in_batch_loss(sim, 0.01).item() < in_batch_loss(sim, 1.0).item()


class TestLossWithNegatives:
    def test_single_pair_closed_form(self):
        loss = in_batch_loss_with_negatives(
            Tensor([[1.0]]), Tensor([[0.0]]), temperature=1.0
        ).item()
        assert abs(loss - math.log(1 + math.exp(-1))) < 1e-9

    def test_masked_negatives_reduce_to_plain_loss(self):
        rng = np.random.default_rng(5)
        sim = rng.uniform(-1, 1, size=(4, 4))
        neg = np.full((4, 4), -np.inf)
        with_neg = in_batch_loss_with_negatives(Tensor(sim), Tensor(neg), 0.05).item()
        plain = in_batch_loss(Tensor(sim), 0.05).item()
        assert abs(with_neg - plain) < 1e-9

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(6)
        for trial in range(100):
            b = int(rng.integers(1, 9))
            sim = rng.uniform(-1, 1, size=(b, b))
            neg = rng.uniform(-1, 1, size=(b, b))
            tau = float(rng.choice([0.01, 0.1, 1.0]))
            got = in_batch_loss_with_negatives(Tensor(sim), Tensor(neg), tau).item()
            assert abs(got - _brute_force_loss(sim, tau, neg)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            in_batch_loss_with_negatives(Tensor(np.eye(2)), Tensor(np.eye(3)), 1.0)


def _pair_batch(cfg, texts_a, texts_b, texts_n=None):
    def tb(texts):
        return make_token_batch([tokenize(t, cfg.max_seq_len).ids for t in texts])

    return PairBatch(
        anchors=tb(texts_a),
        positives=tb(texts_b),
        negatives=tb(texts_n) if texts_n else None,
    )


@pytest.fixture(scope="module")
def setup():
    cfg = ModelConfig.preset("tiny")
    model = init_model(cfg, seed=11)
    rng = np.random.default_rng(12)
    projection = Tensor(
        rng.normal(0, 1 / np.sqrt(cfg.d_model), size=(cfg.d_model, cfg.embed_dim)),
        requires_grad=True,
    )
    batch = _pair_batch(
        cfg,
        ["a red apple", "the blue sky", "warm sand", "cold rain"],
        ["an apple that is red", "sky of blue", "sand which is warm", "rainy and cold"],
    )
    return cfg, model, projection, batch


class TestLossForwardBackward:
    def test_gradients_pass_finite_difference(self, setup):
        cfg, model, projection, batch = setup
        config = LossConfig(temperature=0.05)
        params = list(model.parameters().values()) + [projection]

        _, grads = loss_forward_backward(model, projection, batch, ExtractionStrategy.ENC_MEAN, config)

        def f():
            from sentemb.contrastive import in_batch_loss as ibl
            from sentemb.embedder import embed_batch as eb

            a = eb(model, projection, batch.anchors, ExtractionStrategy.ENC_MEAN)
            p = eb(model, projection, batch.positives, ExtractionStrategy.ENC_MEAN)
            return ibl(similarity_matrix(a, p), config.temperature)

        err = finite_difference_check(f, params, h=1e-5, sample=3, seed=1)
        assert err < 1e-4

    def test_duplicated_batch_does_not_lower_loss(self, setup):
        cfg, model, projection, batch = setup
        config = LossConfig(temperature=0.05)
        base, _ = loss_forward_backward(model, projection, batch, ExtractionStrategy.ENC_MEAN, config)

        double = PairBatch(
            anchors=make_token_batch(list(batch.anchors.ids) * 2),
            positives=make_token_batch(list(batch.positives.ids) * 2),
        )
        doubled, _ = loss_forward_backward(model, projection, double, ExtractionStrategy.ENC_MEAN, config)
        assert doubled >= base - 1e-9

    def test_deterministic_repeat(self, setup):
        cfg, model, projection, batch = setup
        config = LossConfig(temperature=0.05)
        l1, g1 = loss_forward_backward(model, projection, batch, ExtractionStrategy.ENC_MEAN, config)
        l2, g2 = loss_forward_backward(model, projection, batch, ExtractionStrategy.ENC_MEAN, config)
        assert l1 == l2
        for name in g1:
            assert (g1[name] == g2[name]).all(), name

    def test_hard_negative_path(self, setup):
        cfg, model, projection, _ = setup
        batch = _pair_batch(
            cfg,
            ["a red apple", "the blue sky"],
            ["an apple that is red", "sky of blue"],
            ["slow green turtle", "a pile of rocks"],
        )
        config = LossConfig(temperature=0.05, use_hard_negatives=True)
        loss, grads = loss_forward_backward(model, projection, batch, ExtractionStrategy.ENC_MEAN, config)
        assert np.isfinite(loss)
        assert any(np.abs(g).max() > 0 for g in grads.values())

    def test_negatives_required_when_requested(self, setup):
        cfg, model, projection, batch = setup
        config = LossConfig(temperature=0.05, use_hard_negatives=True)
        with pytest.raises(ContractError):
            loss_forward_backward(model, projection, batch, ExtractionStrategy.ENC_MEAN, config)

    def test_micro_model_full_loss_every_coordinate(self):
        # d=8 micro config is small enough to finite-difference every single
        # parameter coordinate of the full contrastive loss, decoder included.
        from sentemb.backbone import EncoderDecoderModel, TokenBatch, parameter_shapes
        from sentemb.embedder import embed_batch

        cfg = ModelConfig(d_model=8, n_heads=2, d_ff=16, n_layers_enc=1,
                          n_layers_dec=1, max_seq_len=32, embed_dim=8, vocab_size=32)
        rng = np.random.default_rng(13)
        params = {
            name: Tensor(rng.normal(0, 0.3, size=shape), requires_grad=True)
            for name, shape in parameter_shapes(cfg).items()
        }
        model = EncoderDecoderModel(cfg, params)
        projection = Tensor(rng.normal(0, 0.3, size=(8, 8)), requires_grad=True)
        anchors = TokenBatch(ids=rng.integers(3, cfg.vocab_size, size=(4, 5)),
                             mask=np.ones((4, 5)))
        positives = TokenBatch(ids=rng.integers(3, cfg.vocab_size, size=(4, 6)),
                               mask=np.ones((4, 6)))

        def f():
            a = embed_batch(model, projection, anchors, ExtractionStrategy.ENCDEC_FIRST)
            p = embed_batch(model, projection, positives, ExtractionStrategy.ENCDEC_FIRST)
            return in_batch_loss(similarity_matrix(a, p), temperature=0.05)

        err = finite_difference_check(f, list(params.values()) + [projection], h=1e-5)
        assert err < 1e-4
