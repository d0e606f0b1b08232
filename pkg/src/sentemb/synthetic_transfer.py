"""Synthetic transfer-classification task built on the same topic templates.

Each sentence's class is the identity of its first topic word, drawn from a
small fixed subset; the second topic and the template are noise. A probe on
good embeddings separates the classes, a probe on collapsed embeddings
cannot.
"""

from __future__ import annotations

import numpy as np

from .evaluation import TransferDataset
from .synthetic import STAGE1_TEMPLATES, TOPICS, _sentence

CLASS_TOPICS = ["amber", "fjord", "lotus"]


def transfer_splits(
    n_per_class: int, seed: int, templates: list[str] | None = None
) -> tuple[TransferDataset, TransferDataset]:
    """Train/test datasets; test sentences are freshly sampled."""
    templates = templates or STAGE1_TEMPLATES
    rng = np.random.default_rng([seed, 13])
    distractors = [t for t in TOPICS if t not in CLASS_TOPICS]

    def build(count, split):
        texts, labels = [], []
        for label, topic in enumerate(CLASS_TOPICS):
            for _ in range(count):
                other = distractors[int(rng.integers(len(distractors)))]
                texts.append(_sentence(rng, (topic, other), templates))
                labels.append(label)
        order = rng.permutation(len(texts))
        return TransferDataset(
            texts=[texts[i] for i in order], labels=[labels[i] for i in order], split=split
        )

    return build(n_per_class, "train"), build(max(2, n_per_class // 2), "test")
