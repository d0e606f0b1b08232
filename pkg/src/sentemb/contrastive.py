"""In-batch sampled softmax contrastive loss over similarity matrices.

Each anchor's positive is the matching row of the candidate set; every other
candidate in the batch acts as a negative. The loss is the negative log of
the softmax probability assigned to the correct candidate, averaged over the
batch. When explicit hard negatives are supplied, the softmax denominator
additionally sums over all of the batch's negatives.

All exponentials run in log space (log-sum-exp with max subtraction): at the
default temperature of 0.01 the scaled similarities reach +-100, far past
what a naive exp survives. Entries of -inf are legal and drop out of the
denominator, which is how callers mask candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import EncoderDecoderModel, TokenBatch
from .embedder import ExtractionStrategy, embed_batch
from .errors import ContractError, NumericError, ParameterError, ShapeError
from .tensor import Tensor, concat, logsumexp, matmul


@dataclass
class PairBatch:
    """Anchor/positive (and optional negative) token batches, row-aligned."""

    anchors: TokenBatch
    positives: TokenBatch
    negatives: TokenBatch | None = None

    def __post_init__(self):
        b = self.anchors.batch_size
        if self.positives.batch_size != b:
            raise ContractError("anchors and positives must have equal batch size")
        if self.negatives is not None and self.negatives.batch_size != b:
            raise ContractError("negatives must align with anchors by row")
        if self.negatives is None and b < 2:
            raise ContractError("need batch size >= 2 unless negatives are provided")

    @property
    def size(self) -> int:
        return self.anchors.batch_size


@dataclass
class LossConfig:
    temperature: float = 0.01
    use_hard_negatives: bool = False

    def __post_init__(self):
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")


def similarity_matrix(anchor_embs: Tensor, candidate_embs: Tensor) -> Tensor:
    """Pairwise dot products [B, M]; rows are expected to be unit vectors."""
    if anchor_embs.shape[-1] != candidate_embs.shape[-1]:
        raise ShapeError(
            f"embedding dims disagree: {anchor_embs.shape} vs {candidate_embs.shape}"
        )
    return matmul(anchor_embs, candidate_embs.T)


def in_batch_loss(sim: Tensor, temperature: float) -> Tensor:
    """Mean over rows of -log softmax(sim_i / tau)[i]."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ShapeError(f"expected a square similarity matrix, got {sim.shape}")
    if sim.shape[0] < 2:
        raise ContractError("in-batch loss needs batch size >= 2")
    z = sim * (1.0 / temperature)
    return (logsumexp(z, axis=-1) - z.diagonal()).mean()


def in_batch_loss_with_negatives(sim_pos: Tensor, sim_neg: Tensor, temperature: float) -> Tensor:
    """Like ``in_batch_loss`` but the denominator also sums over negatives."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    if sim_pos.shape != sim_neg.shape:
        raise ShapeError(f"shape mismatch: {sim_pos.shape} vs {sim_neg.shape}")
    if sim_pos.ndim != 2 or sim_pos.shape[0] != sim_pos.shape[1]:
        raise ShapeError(f"expected square similarity matrices, got {sim_pos.shape}")
    z_pos = sim_pos * (1.0 / temperature)
    z_neg = sim_neg * (1.0 / temperature)
    z = concat([z_pos, z_neg], axis=1)
    return (logsumexp(z, axis=-1) - z_pos.diagonal()).mean()


def loss_forward_backward(
    model: EncoderDecoderModel,
    projection: Tensor,
    batch: PairBatch,
    strategy: ExtractionStrategy,
    config: LossConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """End-to-end loss and gradients for one pair batch.

    Anchors and positives (and negatives, when used) all run through the
    same parameters; gradients for the whole dual encoder therefore
    accumulate on one weight set. Existing ``.grad`` buffers are cleared
    first so the result is exactly this batch's gradient.
    """
    if config.use_hard_negatives and batch.negatives is None:
        raise ContractError("hard-negative loss requested but batch has no negatives")

    params = dict(model.parameters())
    params["projection"] = projection
    for p in params.values():
        p.grad = None

    anchor_embs = embed_batch(model, projection, batch.anchors, strategy, projected=True)
    positive_embs = embed_batch(model, projection, batch.positives, strategy, projected=True)
    sim_pos = similarity_matrix(anchor_embs, positive_embs)
    if config.use_hard_negatives:
        negative_embs = embed_batch(model, projection, batch.negatives, strategy, projected=True)
        sim_neg = similarity_matrix(anchor_embs, negative_embs)
        loss = in_batch_loss_with_negatives(sim_pos, sim_neg, config.temperature)
    else:
        loss = in_batch_loss(sim_pos, config.temperature)

    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"contrastive loss is non-finite: {value}")
    loss.backward()
    grads = {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    return value, grads
