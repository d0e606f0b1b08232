"""Sentence embedding extraction: strategy -> raw vector -> unit vector.

Three strategies map per-token transformer outputs to one vector per
sentence: the encoder's first-token output, the mask-aware mean of all
encoder outputs, or the first decoder output. A learned linear projection
(no bias) followed by L2 normalization turns the raw vector into the final
fixed-dimension sentence embedding; both towers of the dual encoder are the
same parameters, so anchors and positives share every weight by construction.

Raw (unprojected) embeddings are a first-class mode: they have d_model
dimensions, no norm constraint, and are what the no-fine-tuning baselines
evaluate.
"""

from __future__ import annotations

import base64
import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .backbone import EncoderDecoderModel, TokenBatch, make_token_batch, tokenize
from .errors import ContractError, ParseError
from .tensor import Tensor, l2_normalize, masked_mean, matmul, no_grad


class ExtractionStrategy(enum.Enum):
    ENC_FIRST = "enc_first"
    ENC_MEAN = "enc_mean"
    ENCDEC_FIRST = "encdec_first"

    @classmethod
    def parse(cls, name: str) -> "ExtractionStrategy":
        for member in cls:
            if member.value == name:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ContractError(f"unknown strategy {name!r}; valid strategies: {valid}")


@dataclass
class SentenceEmbedding:
    vector: np.ndarray
    strategy: ExtractionStrategy
    projected: bool

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.projected:
            norm = float(np.linalg.norm(self.vector))
            if abs(norm - 1.0) > 1e-10:
                raise ContractError(f"projected embedding must be unit norm, got {norm}")


def extract_raw(model: EncoderDecoderModel, batch: TokenBatch, strategy: ExtractionStrategy) -> Tensor:
    """Raw per-sentence vectors [B, d_model] for the chosen strategy."""
    encoded = model.encode(batch)
    if strategy is ExtractionStrategy.ENC_FIRST:
        return encoded[:, 0, :]
    if strategy is ExtractionStrategy.ENC_MEAN:
        return masked_mean(encoded, batch.mask)
    if strategy is ExtractionStrategy.ENCDEC_FIRST:
        return model.decode_first(encoded, batch.mask)
    raise ContractError(f"unhandled strategy {strategy}")


def project_and_normalize(raw: Tensor, projection: Tensor) -> Tensor:
    """Apply the learned projection then scale each row to unit L2 norm."""
    if raw.shape[-1] != projection.shape[0]:
        raise ContractError(
            f"raw dim {raw.shape[-1]} does not match projection input {projection.shape[0]}"
        )
    return l2_normalize(matmul(raw, projection))


def embed_batch(
    model: EncoderDecoderModel,
    projection: Tensor | None,
    batch: TokenBatch,
    strategy: ExtractionStrategy,
    projected: bool = True,
) -> Tensor:
    """Differentiable path from token batch to embedding rows."""
    raw = extract_raw(model, batch, strategy)
    if not projected:
        return raw
    if projection is None:
        raise ContractError("projected embeddings need a projection matrix")
    return project_and_normalize(raw, projection)


def similarity(a: SentenceEmbedding, b: SentenceEmbedding) -> float:
    """Dot product of two projected embeddings == their cosine similarity."""
    if not (a.projected and b.projected):
        raise ContractError("similarity is defined on projected (unit-norm) embeddings")
    if a.vector.shape != b.vector.shape:
        raise ContractError(f"dimension mismatch: {a.vector.shape} vs {b.vector.shape}")
    return float(a.vector @ b.vector)


def embed_corpus(
    model: EncoderDecoderModel,
    projection: Tensor | None,
    texts: list[str],
    strategy: ExtractionStrategy,
    projected: bool = True,
    batch_size: int = 32,
) -> tuple[np.ndarray, dict]:
    """Embed texts in order; results are independent of batch_size.

    Returns the [N, dim] matrix and a manifest mapping row id to the SHA-256
    of the source text.
    """
    dim = model.config.embed_dim if projected else model.config.d_model
    rows = []
    with no_grad():
        for start in range(0, len(texts), batch_size):
            chunk = texts[start : start + batch_size]
            token_rows = [tokenize(t, model.config.max_seq_len).ids for t in chunk]
            batch = make_token_batch(token_rows)
            rows.append(embed_batch(model, projection, batch, strategy, projected).numpy())
    matrix = np.concatenate(rows, axis=0) if rows else np.zeros((0, dim))
    manifest = {
        "count": len(texts),
        "dim": int(matrix.shape[1]),
        "strategy": strategy.value,
        "projected": projected,
        "texts": {str(i): hashlib.sha256(t.encode("utf-8")).hexdigest() for i, t in enumerate(texts)},
    }
    return matrix, manifest


# ---------------------------------------------------------------------------
# Embedding dump format
# ---------------------------------------------------------------------------

DUMP_HEADER_PREFIX = "st5-embed v1"


def write_embedding_dump(
    path: str, matrix: np.ndarray, strategy: ExtractionStrategy, projected: bool
) -> None:
    """One header line, then `text-id TAB base64(little-endian f64)` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"{DUMP_HEADER_PREFIX} dim={matrix.shape[1]} strategy={strategy.value} "
            f"projected={'true' if projected else 'false'}\n"
        )
        for i, row in enumerate(matrix):
            blob = base64.b64encode(np.ascontiguousarray(row, dtype="<f8").tobytes()).decode("ascii")
            fh.write(f"{i}\t{blob}\n")


def read_embedding_dump(path: str) -> tuple[np.ndarray, dict]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(DUMP_HEADER_PREFIX):
            raise ParseError(f"{path}: not an embedding dump (header {header!r})")
        meta = dict(part.split("=", 1) for part in header[len(DUMP_HEADER_PREFIX):].split())
        dim = int(meta["dim"])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                _, blob = line.split("\t", 1)
                vec = np.frombuffer(base64.b64decode(blob), dtype="<f8")
            except Exception as exc:
                raise ParseError(f"{path}: line {lineno}: bad record ({exc})") from exc
            if vec.size != dim:
                raise ParseError(f"{path}: line {lineno}: expected dim {dim}, got {vec.size}")
            rows.append(vec.astype(np.float64))
    matrix = np.stack(rows, axis=0) if rows else np.zeros((0, dim))
    return matrix, {"dim": dim, "strategy": meta["strategy"], "projected": meta["projected"] == "true"}
