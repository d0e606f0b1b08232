"""Sentence embeddings from a toy encoder-decoder transformer.

Everything is float64 and deterministic so that gradients, checkpoints, and
training trajectories can be verified exactly. The public surface mirrors
the workflow: build or load a model, extract sentence embeddings with one of
three strategies, fine-tune contrastively, then evaluate with STS rank
correlation, transfer probes, geometry diagnostics, and throughput sweeps.
"""

__version__ = "0.1.0"

from .backbone import EncoderDecoderModel, ModelConfig, TokenBatch, init_model, tokenize
from .embedder import ExtractionStrategy, SentenceEmbedding, embed_corpus, similarity
from .tensor import Tensor, finite_difference_check

__all__ = [
    "EncoderDecoderModel",
    "ExtractionStrategy",
    "ModelConfig",
    "SentenceEmbedding",
    "Tensor",
    "TokenBatch",
    "embed_corpus",
    "finite_difference_check",
    "init_model",
    "similarity",
    "tokenize",
    "__version__",
]
