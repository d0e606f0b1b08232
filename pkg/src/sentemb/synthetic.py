"""Template-generated corpora with graded similarity labels.

Every sentence realizes a set of two topic words inside a filler-heavy
template, so lexical overlap between unrelated sentences is high and the
topic words carry the meaning. Similarity labels are graded by topic-set
overlap (Jaccard scaled to [0, 5]): paraphrases share both topics,
half-related pairs share one, unrelated pairs share none.

Two training corpora mirror the two fine-tuning stages: a broad
weakly-paired set phrased as question/answer rewrites (no negatives), and a
smaller labeled set carrying an explicit contradiction-style negative per
record. Held-out evaluation sentences use templates disjoint from both.
"""

from __future__ import annotations

import itertools

import numpy as np

from .evaluation import STSExample
from .trainer import PairRecord

TOPICS = [
    "amber", "basalt", "cedar", "dune", "ember", "fjord",
    "grove", "heron", "inlet", "juniper", "kelp", "lotus",
]

# Filler-heavy templates; {a}/{b} hold the topic words.
STAGE1_TEMPLATES = [
    "what can you tell me about the {a} near the {b} please",
    "someone asked about the {a} standing close to the {b} yesterday",
    "could anyone explain how the {a} ended up beside the {b} here",
    "people often wonder why the {a} appears next to the {b} at all",
    "the {a} was reported somewhere around the {b} earlier this week",
    "records mention the {a} resting quietly alongside the {b} again",
]

STAGE2_TEMPLATES = [
    "it is true that the {a} stays with the {b} for now",
    "clearly the {a} remains right beside the {b} these days",
    "the {a} certainly belongs together with the {b} around here",
    "everyone agrees the {a} sits firmly near the {b} still",
]

HELDOUT_TEMPLATES = [
    "this morning the {a} drifted slowly toward the {b} once more",
    "nobody expected the {a} to settle so close to the {b} today",
    "a quiet {a} waited patiently underneath the {b} all evening",
    "the old {a} leaned gently against the {b} after the rain",
]


def _sentence(rng, pair: tuple[str, str], templates: list[str]) -> str:
    template = templates[int(rng.integers(len(templates)))]
    a, b = pair if rng.random() < 0.5 else (pair[1], pair[0])
    return template.format(a=a, b=b)


def _topic_pairs() -> list[tuple[str, str]]:
    return list(itertools.combinations(TOPICS, 2))


def _disjoint_pair(rng, pair, pool):
    while True:
        other = pool[int(rng.integers(len(pool)))]
        if not set(other) & set(pair):
            return other


def paraphrase_pairs(n: int, seed: int, templates: list[str] | None = None) -> list[PairRecord]:
    """Positive pairs: two renderings of the same topic set."""
    templates = templates or STAGE1_TEMPLATES
    rng = np.random.default_rng([seed, 10])
    pool = _topic_pairs()
    records = []
    for _ in range(n):
        pair = pool[int(rng.integers(len(pool)))]
        records.append(
            PairRecord(_sentence(rng, pair, templates), _sentence(rng, pair, templates))
        )
    return records


def nli_style_triples(n: int, seed: int, templates: list[str] | None = None) -> list[PairRecord]:
    """Labeled records: a paraphrase positive plus a disjoint-topic negative."""
    templates = templates or STAGE2_TEMPLATES
    rng = np.random.default_rng([seed, 11])
    pool = _topic_pairs()
    records = []
    for _ in range(n):
        pair = pool[int(rng.integers(len(pool)))]
        neg_pair = _disjoint_pair(rng, pair, pool)
        records.append(
            PairRecord(
                _sentence(rng, pair, templates),
                _sentence(rng, pair, templates),
                _sentence(rng, neg_pair, templates),
            )
        )
    return records


def sts_examples(n: int, seed: int, templates: list[str] | None = None) -> list[STSExample]:
    """Held-out graded pairs: topic-set Jaccard scaled to [0, 5].

    Overlap of both topics scores 5, one shared topic 5/3, none 0; the three
    bands are sampled in equal proportion.
    """
    templates = templates or HELDOUT_TEMPLATES
    rng = np.random.default_rng([seed, 12])
    pool = _topic_pairs()
    out = []
    for i in range(n):
        band = i % 3
        first = pool[int(rng.integers(len(pool)))]
        if band == 0:
            second = first
        elif band == 1:
            shared = first[int(rng.integers(2))]
            others = [t for t in TOPICS if t != shared and t not in first]
            second = (shared, others[int(rng.integers(len(others)))])
        else:
            second = _disjoint_pair(rng, first, pool)
        overlap = len(set(first) & set(second))
        union = len(set(first) | set(second))
        score = 5.0 * overlap / union
        out.append(
            STSExample(_sentence(rng, first, templates), _sentence(rng, second, templates), score)
        )
    return out


def write_pairs_jsonl(records: list[PairRecord], path: str) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"text_a": r.text_a, "text_b": r.text_b}
            if r.text_neg is not None:
                obj["text_neg"] = r.text_neg
            fh.write(json.dumps(obj) + "\n")


def write_sts_tsv(examples: list[STSExample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            fh.write(f"{e.sentence_a}\t{e.sentence_b}\t{e.human_score}\n")
