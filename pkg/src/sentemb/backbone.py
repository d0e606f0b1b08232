"""Toy encoder-decoder transformer over a byte-level vocabulary.

The architecture follows the text-to-text transformer family: pre-layer RMS
normalization with learned gains and no biases, relative-position biases on
self-attention logits (log-bucketed distances, one table per stack shared
across that stack's layers), ReLU feed-forward blocks, and no absolute
position embeddings. The decoder is only ever run for a single step: the
start symbol goes in, and the first output vector (after the final decoder
normalization) comes out.

All parameters live in an ordered name -> Tensor mapping so the optimizer,
checkpoints, and gradient checks can address them uniformly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ContractError, LengthError, NumericError
from .tensor import Tensor, embedding_lookup, matmul, softmax_rows

PAD_ID = 0
EOS_ID = 1
UNK_ID = 2
BYTE_OFFSET = 3
VOCAB_SIZE = 256 + BYTE_OFFSET

# Relative attention: log-bucketed distances, one shared table per stack.
REL_BUCKETS = 16
REL_MAX_DISTANCE = 32
RMS_EPS = 1e-6
ATTN_MASK_PENALTY = 1e30  # exp(-1e30 - max) underflows to exactly 0.0

PRESETS = {
    "tiny": dict(d_model=32, n_heads=2, d_ff=64, n_layers_enc=2, n_layers_dec=2, max_seq_len=64),
    "small": dict(d_model=64, n_heads=4, d_ff=128, n_layers_enc=3, n_layers_dec=3, max_seq_len=128),
    "base-toy": dict(d_model=128, n_heads=8, d_ff=256, n_layers_enc=4, n_layers_dec=4, max_seq_len=128),
}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 32
    n_heads: int = 2
    d_ff: int = 64
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    max_seq_len: int = 64
    embed_dim: int = 64
    size_preset: str = "custom"

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_heads", "d_ff", "n_layers_enc",
                     "n_layers_dec", "max_seq_len", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; valid: {sorted(PRESETS)}")
        kwargs = dict(PRESETS[name])
        kwargs.update(overrides)
        return cls(size_preset=name, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class TokenizedText:
    ids: list[int]
    truncated: bool


@dataclass
class TokenBatch:
    """Right-padded token id matrix with a {0,1} mask."""

    ids: np.ndarray   # [B, L] int64
    mask: np.ndarray  # [B, L] float64, prefix of 1s then 0s per row

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.ids.shape != self.mask.shape or self.ids.ndim != 2:
            raise ContractError(
                f"ids {self.ids.shape} and mask {self.mask.shape} must be equal 2-d shapes"
            )
        if (self.ids < 0).any() or (self.ids >= VOCAB_SIZE).any():
            raise ContractError("token ids out of vocabulary range")
        # Right padding: once a row's mask drops to 0 it must stay 0.
        dropped = np.minimum.accumulate(self.mask, axis=1)
        if not (dropped == self.mask).all():
            raise ContractError("mask must be a prefix of 1s followed by 0s")
        if not (self.mask.sum(axis=1) >= 1).all():
            raise ContractError("every row needs at least one unmasked token")

    @property
    def batch_size(self) -> int:
        return self.ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.ids.shape[1]


def tokenize(text: str, max_seq_len: int) -> TokenizedText:
    """Byte-level tokenization: 256 byte ids behind PAD/EOS/UNK reserves.

    Deterministic and total; overlong inputs are truncated (flagged) so the
    terminating EOS always fits. The empty string becomes a single EOS.
    """
    raw = text.encode("utf-8")
    budget = max_seq_len - 1
    truncated = len(raw) > budget
    ids = [BYTE_OFFSET + b for b in raw[:budget]]
    ids.append(EOS_ID)
    return TokenizedText(ids=ids, truncated=truncated)


def make_token_batch(rows: list[list[int]], pad_to: int | None = None) -> TokenBatch:
    """Right-pad id rows into a TokenBatch (PAD id, mask 0)."""
    if not rows:
        raise ContractError("cannot build a batch from zero rows")
    width = max(len(r) for r in rows)
    if pad_to is not None:
        width = max(width, pad_to)
    ids = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = 1.0
    return TokenBatch(ids=ids, mask=mask)


# ---------------------------------------------------------------------------
# Parameter construction
# ---------------------------------------------------------------------------


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape table; the single source of truth for layout."""
    d, f, h = config.d_model, config.d_ff, config.n_heads
    shapes: dict[str, tuple[int, ...]] = {}
    shapes["embed"] = (config.vocab_size, d)
    shapes["enc.relbias"] = (h, REL_BUCKETS)
    shapes["dec.relbias"] = (h, REL_BUCKETS)
    for i in range(config.n_layers_enc):
        p = f"enc.{i}"
        shapes[f"{p}.attn_norm.gain"] = (d,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{w}"] = (d, d)
        shapes[f"{p}.ff_norm.gain"] = (d,)
        shapes[f"{p}.ff.w1"] = (d, f)
        shapes[f"{p}.ff.w2"] = (f, d)
    for i in range(config.n_layers_dec):
        p = f"dec.{i}"
        shapes[f"{p}.self_norm.gain"] = (d,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.self_attn.{w}"] = (d, d)
        shapes[f"{p}.cross_norm.gain"] = (d,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.cross_attn.{w}"] = (d, d)
        shapes[f"{p}.ff_norm.gain"] = (d,)
        shapes[f"{p}.ff.w1"] = (d, f)
        shapes[f"{p}.ff.w2"] = (f, d)
    shapes["dec.final_norm.gain"] = (d,)
    return shapes


def _init_array(name: str, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if name.endswith(".gain"):
        return np.ones(shape)
    if name.endswith("relbias"):
        return np.zeros(shape)
    fan_in = shape[0] if len(shape) > 1 else shape[-1]
    return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)


class EncoderDecoderModel:
    """Parameter container plus forward passes. Immutable during inference."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "EncoderDecoderModel":
        rng = np.random.default_rng(seed)
        params = {
            name: Tensor(_init_array(name, shape, rng), requires_grad=True)
            for name, shape in parameter_shapes(config).items()
        }
        return cls(config, params)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def count_params(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward passes -------------------------------------------------------

    def encode(self, batch: TokenBatch) -> Tensor:
        """Per-token encoder outputs, [B, L, d_model].

        Attention logits at padded key positions are pushed to -1e30 before
        the softmax, so masked content cannot influence unmasked outputs.
        """
        cfg = self.config
        if batch.seq_len > cfg.max_seq_len:
            raise LengthError(
                f"sequence length {batch.seq_len} exceeds max_seq_len {cfg.max_seq_len}"
            )
        x = embedding_lookup(self.params["embed"], batch.ids)
        bias = self._relative_bias("enc.relbias", batch.seq_len, bidirectional=True)
        add_mask = Tensor((batch.mask[:, None, None, :] - 1.0) * ATTN_MASK_PENALTY)
        for i in range(cfg.n_layers_enc):
            p = f"enc.{i}"
            h = self._rmsnorm(x, f"{p}.attn_norm.gain")
            x = x + self._attention(h, h, f"{p}.attn", bias=bias, add_mask=add_mask)
            h = self._rmsnorm(x, f"{p}.ff_norm.gain")
            x = x + self._ff(h, p)
        if not np.isfinite(x.data).all():
            raise NumericError("encoder produced non-finite outputs")
        return x

    def decode_first(self, encoded: Tensor, enc_mask: np.ndarray, start_id: int = PAD_ID) -> Tensor:
        """First decoder output vector per example, [B, d_model].

        The start symbol is the only decoder input; the returned vector is
        the one that would feed the output softmax, i.e. it is taken after
        the final decoder normalization.
        """
        cfg = self.config
        enc_mask = np.asarray(enc_mask, dtype=np.float64)
        if encoded.ndim != 3 or enc_mask.shape != encoded.shape[:2]:
            raise ContractError(
                f"encoded {encoded.shape} and mask {enc_mask.shape} do not align"
            )
        batch = encoded.shape[0]
        ids = np.full((batch, 1), start_id, dtype=np.int64)
        x = embedding_lookup(self.params["embed"], ids)
        bias = self._relative_bias("dec.relbias", 1, bidirectional=False)
        cross_mask = Tensor((enc_mask[:, None, None, :] - 1.0) * ATTN_MASK_PENALTY)
        for i in range(cfg.n_layers_dec):
            p = f"dec.{i}"
            h = self._rmsnorm(x, f"{p}.self_norm.gain")
            x = x + self._attention(h, h, f"{p}.self_attn", bias=bias, add_mask=None)
            h = self._rmsnorm(x, f"{p}.cross_norm.gain")
            x = x + self._attention(h, encoded, f"{p}.cross_attn", bias=None, add_mask=cross_mask)
            h = self._rmsnorm(x, f"{p}.ff_norm.gain")
            x = x + self._ff(h, p)
        x = self._rmsnorm(x, "dec.final_norm.gain")
        return x.reshape(batch, cfg.d_model)

    # -- blocks ---------------------------------------------------------------

    def _rmsnorm(self, x: Tensor, gain_name: str) -> Tensor:
        ms = (x * x).mean(axis=-1, keepdims=True)
        return x * (ms + RMS_EPS).pow(-0.5) * self.params[gain_name]

    def _ff(self, x: Tensor, prefix: str) -> Tensor:
        h = matmul(x, self.params[f"{prefix}.ff.w1"]).relu()
        return matmul(h, self.params[f"{prefix}.ff.w2"])

    def _split_heads(self, x: Tensor) -> Tensor:
        b, l, d = x.shape
        h = self.config.n_heads
        return x.reshape(b, l, h, d // h).transpose(0, 2, 1, 3)

    def _attention(
        self,
        q_in: Tensor,
        kv_in: Tensor,
        prefix: str,
        bias: Tensor | None,
        add_mask: Tensor | None,
    ) -> Tensor:
        cfg = self.config
        dh = cfg.d_model // cfg.n_heads
        q = self._split_heads(matmul(q_in, self.params[f"{prefix}.wq"]))
        k = self._split_heads(matmul(kv_in, self.params[f"{prefix}.wk"]))
        v = self._split_heads(matmul(kv_in, self.params[f"{prefix}.wv"]))
        scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
        if bias is not None:
            scores = scores + bias
        if add_mask is not None:
            scores = scores + add_mask
        attn = softmax_rows(scores)
        mixed = matmul(attn, v)
        b, _, l, _ = mixed.shape
        merged = mixed.transpose(0, 2, 1, 3).reshape(b, l, cfg.d_model)
        return matmul(merged, self.params[f"{prefix}.wo"])

    def _relative_bias(self, table_name: str, seq_len: int, bidirectional: bool) -> Tensor:
        """Bias tensor [1, H, L, L] gathered from the bucket table.

        The gather is expressed as a one-hot matmul so it rides the existing
        differentiable primitives.
        """
        buckets = _bucket_matrix(seq_len, bidirectional)
        onehot = np.zeros((seq_len * seq_len, REL_BUCKETS))
        onehot[np.arange(buckets.size), buckets.reshape(-1)] = 1.0
        table = self.params[table_name]  # [H, n_buckets]
        flat = matmul(Tensor(onehot), table.T)  # [L*L, H]
        h = self.config.n_heads
        return flat.reshape(seq_len, seq_len, h).transpose(2, 0, 1).reshape(1, h, seq_len, seq_len)


def init_model(config: ModelConfig, seed: int) -> EncoderDecoderModel:
    """Deterministic pseudo-random initialization; same (config, seed) bit-matches."""
    return EncoderDecoderModel.init(config, seed)


_bucket_cache: dict[tuple[int, bool], np.ndarray] = {}


def _bucket_matrix(seq_len: int, bidirectional: bool) -> np.ndarray:
    """Relative position -> bucket index, [L, L].

    Half the buckets cover exact small offsets, the other half cover
    logarithmically growing ranges up to REL_MAX_DISTANCE; everything farther
    shares the last bucket. Bidirectional attention splits the budget between
    negative and positive offsets.
    """
    key = (seq_len, bidirectional)
    cached = _bucket_cache.get(key)
    if cached is not None:
        return cached
    pos = np.arange(seq_len)
    rel = pos[None, :] - pos[:, None]  # key position minus query position
    n = REL_BUCKETS
    out = np.zeros_like(rel)
    if bidirectional:
        n //= 2
        out = out + (rel > 0).astype(np.int64) * n
        rel = np.abs(rel)
    else:
        rel = -np.minimum(rel, 0)
    max_exact = n // 2
    is_small = rel < max_exact
    with np.errstate(divide="ignore"):
        large = max_exact + (
            np.log(np.maximum(rel, 1) / max_exact)
            / math.log(REL_MAX_DISTANCE / max_exact)
            * (n - max_exact)
        ).astype(np.int64)
    large = np.minimum(large, n - 1)
    out = out + np.where(is_small, rel, large)
    _bucket_cache[key] = out
    return out
