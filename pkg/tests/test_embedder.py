"""Extraction strategies, projection/normalization, similarity, corpus dumps."""

import numpy as np
import pytest

from sentemb.backbone import ModelConfig, init_model, make_token_batch, tokenize
from sentemb.embedder import (
    ExtractionStrategy,
    SentenceEmbedding,
    embed_batch,
    embed_corpus,
    extract_raw,
    project_and_normalize,
    read_embedding_dump,
    similarity,
    write_embedding_dump,
)
from sentemb.errors import ContractError, ParseError
from sentemb.tensor import Tensor


@pytest.fixture(scope="module")
def cfg():
    return ModelConfig.preset("tiny")


@pytest.fixture(scope="module")
def model(cfg):
    return init_model(cfg, seed=3)


@pytest.fixture(scope="module")
def projection(cfg):
    rng = np.random.default_rng(4)
    return Tensor(
        rng.normal(0, 1 / np.sqrt(cfg.d_model), size=(cfg.d_model, cfg.embed_dim)),
        requires_grad=True,
    )


def _batch(texts, cfg, pad_to=None):
    return make_token_batch([tokenize(t, cfg.max_seq_len).ids for t in texts], pad_to=pad_to)


class TestStrategies:
    def test_parse_names(self):
        assert ExtractionStrategy.parse("enc_first") is ExtractionStrategy.ENC_FIRST
        assert ExtractionStrategy.parse("enc_mean") is ExtractionStrategy.ENC_MEAN
        assert ExtractionStrategy.parse("encdec_first") is ExtractionStrategy.ENCDEC_FIRST
        with pytest.raises(ContractError, match="enc_first, enc_mean, encdec_first"):
            ExtractionStrategy.parse("enc_max")

    def test_single_token_first_equals_mean(self, cfg, model):
        batch = _batch([""], cfg)  # single EOS token
        first = extract_raw(model, batch, ExtractionStrategy.ENC_FIRST).numpy()
        mean = extract_raw(model, batch, ExtractionStrategy.ENC_MEAN).numpy()
        np.testing.assert_allclose(first, mean, atol=1e-12)

    def test_mean_invariant_to_trailing_padding(self, cfg, model):
        text = "padding should not matter"
        a = extract_raw(model, _batch([text], cfg), ExtractionStrategy.ENC_MEAN).numpy()
        b = extract_raw(model, _batch([text], cfg, pad_to=40), ExtractionStrategy.ENC_MEAN).numpy()
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_first_is_row_zero_of_encoder_output(self, cfg, model):
        batch = _batch(["row zero please"], cfg)
        first = extract_raw(model, batch, ExtractionStrategy.ENC_FIRST).numpy()
        np.testing.assert_array_equal(first[0], model.encode(batch).numpy()[0, 0])

    def test_mean_equals_manual_masked_average(self, cfg, model):
        batch = _batch(["one", "a longer sentence here"], cfg)
        mean = extract_raw(model, batch, ExtractionStrategy.ENC_MEAN).numpy()
        enc = model.encode(batch).numpy()
        for i in range(2):
            keep = batch.mask[i] == 1.0
            np.testing.assert_allclose(mean[i], enc[i, keep].mean(axis=0), atol=1e-12)

    def test_encdec_depends_on_input_content(self, cfg, model):
        a = extract_raw(model, _batch(["sentence one"], cfg), ExtractionStrategy.ENCDEC_FIRST).numpy()
        b = extract_raw(model, _batch(["sentence two"], cfg), ExtractionStrategy.ENCDEC_FIRST).numpy()
        assert np.abs(a - b).max() > 1e-8


class TestProjectAndNormalize:
    def test_identity_projection_reduces_to_normalize(self, cfg):
        d = cfg.d_model
        raw = np.zeros((1, d))
        raw[0, 0], raw[0, 1] = 3.0, 4.0
        out = project_and_normalize(Tensor(raw), Tensor(np.eye(d))).numpy()
        expected = np.zeros(d)
        expected[0], expected[1] = 0.6, 0.8
        np.testing.assert_allclose(out[0], expected, atol=1e-12)

    def test_outputs_are_unit_norm(self, cfg, model, projection):
        batch = _batch(["a", "bb", "ccc"], cfg)
        out = embed_batch(model, projection, batch, ExtractionStrategy.ENC_MEAN).numpy()
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), np.ones(3), atol=1e-10)

    def test_scale_invariance(self, cfg, projection):
        rng = np.random.default_rng(8)
        raw = rng.normal(size=(3, cfg.d_model))
        a = project_and_normalize(Tensor(raw), projection).numpy()
        b = project_and_normalize(Tensor(raw * 5.0), projection).numpy()
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_dim_mismatch(self, cfg, projection):
        with pytest.raises(ContractError):
            project_and_normalize(Tensor(np.ones((2, cfg.d_model + 1))), projection)


class TestSimilarity:
    def _emb(self, vec):
        v = np.asarray(vec, dtype=float)
        return SentenceEmbedding(v / np.linalg.norm(v), ExtractionStrategy.ENC_MEAN, True)

    def test_self_similarity(self):
        e = self._emb([0.3, -0.4, 0.5])
        assert abs(similarity(e, e) - 1.0) < 1e-10

    def test_orthogonal(self):
        assert abs(similarity(self._emb([1, 0]), self._emb([0, 1]))) < 1e-12

    def test_matches_cosine_formula(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a, b = rng.normal(size=6), rng.normal(size=6)
            got = similarity(self._emb(a), self._emb(b))
            want = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
            assert abs(got - want) < 1e-12

    def test_unprojected_rejected(self):
        raw = SentenceEmbedding(np.array([3.0, 4.0]), ExtractionStrategy.ENC_MEAN, False)
        with pytest.raises(ContractError):
            similarity(raw, raw)

    def test_dim_mismatch(self):
        with pytest.raises(ContractError):
            similarity(self._emb([1, 0]), self._emb([1, 0, 0]))

    def test_unit_norm_enforced_on_construction(self):
        with pytest.raises(ContractError):
            SentenceEmbedding(np.array([3.0, 4.0]), ExtractionStrategy.ENC_MEAN, True)


class TestEmbedCorpus:
    def test_batch_size_invariance(self, cfg, model, projection):
        texts = [f"sentence {i} with words" for i in range(11)]
        m1, _ = embed_corpus(model, projection, texts, ExtractionStrategy.ENC_MEAN, batch_size=1)
        m8, _ = embed_corpus(model, projection, texts, ExtractionStrategy.ENC_MEAN, batch_size=8)
        np.testing.assert_allclose(m1, m8, atol=1e-10)

    def test_duplicates_give_duplicate_rows(self, cfg, model, projection):
        m, _ = embed_corpus(model, projection, ["twin", "twin"], ExtractionStrategy.ENC_MEAN)
        np.testing.assert_array_equal(m[0], m[1])

    def test_empty_corpus(self, cfg, model, projection):
        m, manifest = embed_corpus(model, projection, [], ExtractionStrategy.ENC_MEAN)
        assert m.shape == (0, cfg.embed_dim)
        assert manifest["count"] == 0

    def test_raw_mode_dimension(self, cfg, model):
        m, manifest = embed_corpus(model, None, ["raw"], ExtractionStrategy.ENC_MEAN, projected=False)
        assert m.shape == (1, cfg.d_model)
        assert manifest["projected"] is False

    def test_shared_weights_dual_encoder(self, cfg, model, projection):
        # Embedding the same text as "anchor" or "positive" is the same call
        # on the same parameters; verify the paired outputs coincide.
        text = ["the towers share weights"]
        a, _ = embed_corpus(model, projection, text, ExtractionStrategy.ENC_MEAN)
        b, _ = embed_corpus(model, projection, text, ExtractionStrategy.ENC_MEAN)
        np.testing.assert_array_equal(a, b)


class TestDumpFormat:
    def test_round_trip(self, tmp_path, cfg, model, projection):
        texts = ["first", "second", "third"]
        matrix, _ = embed_corpus(model, projection, texts, ExtractionStrategy.ENC_MEAN)
        path = str(tmp_path / "e.dump")
        write_embedding_dump(path, matrix, ExtractionStrategy.ENC_MEAN, projected=True)
        loaded, meta = read_embedding_dump(path)
        assert (loaded == matrix).all()
        assert meta == {"dim": cfg.embed_dim, "strategy": "enc_mean", "projected": True}

    def test_header_contents(self, tmp_path):
        path = str(tmp_path / "h.dump")
        write_embedding_dump(path, np.zeros((0, 5)), ExtractionStrategy.ENCDEC_FIRST, projected=False)
        header = open(path).readline().strip()
        assert header == "st5-embed v1 dim=5 strategy=encdec_first projected=false"

    def test_rejects_non_dump(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_text("something else\n")
        with pytest.raises(ParseError):
            read_embedding_dump(str(path))
