"""Scoring: STS rank correlation, linear probes, and geometry diagnostics.

Spearman correlation is Pearson on fractional ranks with average-rank tie
handling, scaled x100 for reporting. Transfer probes are multinomial
logistic regressions fit by deterministic full-batch descent with
backtracking line search, so accuracies are exactly reproducible. The
alignment diagnostic is the mean alpha-powered distance between positive
pairs (a positive quantity; lower means positives sit closer). The
uniformity diagnostic is the log-mean Gaussian kernel over all distinct
unordered embedding pairs, computed in log space; more spread means lower
values. Both diagnostics operate on unit-normalized vectors, so raw-mode
embeddings are normalized before they enter.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .backbone import EncoderDecoderModel
from .embedder import ExtractionStrategy, embed_corpus
from .errors import ContractError, DegenerateInputError, ParseError
from .tensor import Tensor

PROBE_MAX_ITERS = 2000
PROBE_GRAD_TOL = 1e-6


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class STSExample:
    sentence_a: str
    sentence_b: str
    human_score: float

    def __post_init__(self):
        if not (0.0 <= self.human_score <= 5.0):
            raise ContractError(f"human score {self.human_score} outside [0, 5]")


@dataclass
class TransferDataset:
    texts: list[str]
    labels: list[int]
    split: str = "train"

    def __post_init__(self):
        if len(self.texts) != len(self.labels):
            raise ContractError("texts and labels must align")
        if self.split == "train" and len(set(self.labels)) < 2:
            raise ContractError("train split needs at least 2 classes")


def load_sts(path: str) -> list[STSExample]:
    """TSV: sentence_a TAB sentence_b TAB score, score in [0, 5]."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 columns, got {len(cols)}")
            try:
                score = float(cols[2])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad score {cols[2]!r}") from exc
            try:
                examples.append(STSExample(cols[0], cols[1], score))
            except ContractError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return examples


def load_transfer(path: str, split: str = "train") -> TransferDataset:
    """TSV: integer label TAB text."""
    texts, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 columns, got {len(cols)}")
            try:
                labels.append(int(cols[0]))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad label {cols[0]!r}") from exc
            texts.append(cols[1])
    return TransferDataset(texts=texts, labels=labels, split=split)


# ---------------------------------------------------------------------------
# Spearman
# ---------------------------------------------------------------------------


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); ties share the mean of their positions."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of average ranks; in [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ContractError(f"need two equal-length lists (>= 2), got {x.shape} and {y.shape}")
    if (x == x[0]).all() or (y == y[0]).all():
        raise DegenerateInputError("correlation is undefined for a constant input")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


def eval_sts(
    model: EncoderDecoderModel,
    projection: Tensor | None,
    dataset: list[STSExample],
    strategy: ExtractionStrategy,
    projected: bool = True,
    batch_size: int = 32,
) -> float:
    """Spearman x100 between model similarities and human scores.

    Projected embeddings are unit vectors, so their dot product is the
    cosine similarity; raw embeddings go through the explicit cosine.
    """
    if not dataset:
        raise ContractError("empty STS dataset")
    texts_a = [e.sentence_a for e in dataset]
    texts_b = [e.sentence_b for e in dataset]
    a, _ = embed_corpus(model, projection, texts_a, strategy, projected, batch_size)
    b, _ = embed_corpus(model, projection, texts_b, strategy, projected, batch_size)
    if projected:
        sims = np.einsum("ij,ij->i", a, b)
    else:
        sims = np.einsum("ij,ij->i", a, b) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        )
    scores = [e.human_score for e in dataset]
    return 100.0 * spearman(sims, scores)


# ---------------------------------------------------------------------------
# Linear probe
# ---------------------------------------------------------------------------


def _probe_objective(w, xb, onehot, l2_penalty):
    logits = xb @ w
    logits = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    nll = -(np.sum(onehot * (logits - log_z))) / xb.shape[0]
    return nll + 0.5 * l2_penalty * float(np.sum(w * w))


def train_probe(
    train_embs: np.ndarray,
    train_labels,
    l2_penalty: float = 1e-3,
    max_iters: int = PROBE_MAX_ITERS,
) -> np.ndarray:
    """Fit a multinomial logistic probe; returns weights [(d+1), C].

    A constant 1 column is appended for the bias; the L2 penalty covers all
    weights, which makes the objective strictly convex and its optimum
    unique. Descent is full-batch with Armijo backtracking, stopping when
    the gradient norm drops below 1e-6 or ``max_iters`` is hit (the latter
    logs a warning with the final gradient norm).
    """
    labels = np.asarray(train_labels, dtype=np.int64)
    classes = int(labels.max()) + 1
    if train_embs.shape[0] != len(labels):
        raise ContractError("embeddings and labels must align")
    if classes < 2:
        raise ContractError("need at least 2 classes")
    if train_embs.shape[0] < classes:
        raise ContractError("need at least as many examples as classes")

    n, d = train_embs.shape
    xb = np.concatenate([train_embs, np.ones((n, 1))], axis=1)
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), labels] = 1.0

    w = np.zeros((d + 1, classes))
    obj = _probe_objective(w, xb, onehot, l2_penalty)
    step = 1.0
    for _ in range(max_iters):
        logits = xb @ w
        logits = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        grad = xb.T @ (probs - onehot) / n + l2_penalty * w
        gnorm = float(np.linalg.norm(grad))
        if gnorm < PROBE_GRAD_TOL:
            break
        # Armijo backtracking from the last accepted step size.
        step = min(step * 2.0, 1e3)
        while step > 1e-12:
            cand = w - step * grad
            cand_obj = _probe_objective(cand, xb, onehot, l2_penalty)
            if cand_obj <= obj - 1e-4 * step * gnorm * gnorm:
                w, obj = cand, cand_obj
                break
            step *= 0.5
    else:
        logging.getLogger(__name__).warning(
            "probe did not converge in %d iters (|grad| = %.3e)", max_iters, gnorm
        )
    return w


def probe_predict(weights: np.ndarray, embs: np.ndarray) -> np.ndarray:
    xb = np.concatenate([embs, np.ones((embs.shape[0], 1))], axis=1)
    return np.argmax(xb @ weights, axis=1)


def eval_transfer(
    model: EncoderDecoderModel,
    projection: Tensor | None,
    train: TransferDataset,
    test: TransferDataset,
    strategy: ExtractionStrategy,
    projected: bool = True,
    l2_penalty: float = 1e-3,
    batch_size: int = 32,
) -> float:
    """Probe accuracy x100 on the test split."""
    train_embs, _ = embed_corpus(model, projection, train.texts, strategy, projected, batch_size)
    weights = train_probe(train_embs, train.labels, l2_penalty)
    test_embs, _ = embed_corpus(model, projection, test.texts, strategy, projected, batch_size)
    preds = probe_predict(weights, test_embs)
    return 100.0 * float(np.mean(preds == np.asarray(test.labels)))


# ---------------------------------------------------------------------------
# Alignment / uniformity
# ---------------------------------------------------------------------------


def _require_unit_rows(m: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(m, axis=-1)
    if np.abs(norms - 1.0).max() > 1e-6:
        raise ContractError(f"{what} must be unit-norm vectors")


def alignment_loss(positive_pairs: list[tuple[np.ndarray, np.ndarray]], alpha: float = 2.0) -> float:
    """Mean ||a - b||^alpha over positive pairs; 0 iff all pairs coincide."""
    if not positive_pairs:
        raise DegenerateInputError("alignment needs at least one positive pair")
    if alpha <= 0:
        raise ContractError(f"alpha must be > 0, got {alpha}")
    a = np.stack([p[0] for p in positive_pairs])
    b = np.stack([p[1] for p in positive_pairs])
    _require_unit_rows(a, "alignment embeddings")
    _require_unit_rows(b, "alignment embeddings")
    dists = np.linalg.norm(a - b, axis=1)
    return float(np.mean(dists ** alpha))


def uniformity_loss(embeddings: np.ndarray, t: float = 2.0, exponent: str = "squared") -> float:
    """log mean over unordered distinct pairs of exp(-t * ||ei - ej||^p).

    ``exponent`` selects p: "squared" (the convention this package defaults
    to) or "linear". Computed via log-sum-exp; self-pairs are excluded so a
    constant exp(0) mass cannot dampen the signal.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[0] < 2:
        raise ContractError("uniformity needs at least 2 embeddings")
    if t <= 0:
        raise ContractError(f"t must be > 0, got {t}")
    if exponent not in ("squared", "linear"):
        raise ContractError(f"exponent must be 'squared' or 'linear', got {exponent!r}")
    _require_unit_rows(embeddings, "uniformity embeddings")
    n = embeddings.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    diffs = embeddings[iu] - embeddings[ju]
    if exponent == "squared":
        dist_pow = np.einsum("ij,ij->i", diffs, diffs)
    else:
        dist_pow = np.linalg.norm(diffs, axis=1)
    exponents = -t * dist_pow
    m = exponents.max()
    return float(m + np.log(np.mean(np.exp(exponents - m))))


@dataclass
class DiagnoseResult:
    alignment: float | None
    uniformity: float
    spearman_x100: float


def diagnose(
    model: EncoderDecoderModel,
    projection: Tensor | None,
    sts_dataset: list[STSExample],
    threshold: float = 4.0,
    strategy: ExtractionStrategy = ExtractionStrategy.ENC_MEAN,
    projected: bool = True,
    alpha: float = 2.0,
    t: float = 2.0,
    exponent: str = "squared",
    batch_size: int = 32,
) -> DiagnoseResult:
    """Alignment over pairs scored above ``threshold``, uniformity over all
    sentences (exact-string deduplicated), plus the Spearman x100 score.

    With no pair above the threshold, alignment is reported as absent
    (None), never as zero. Raw-mode embeddings are unit-normalized before
    the geometry diagnostics.
    """
    if not sts_dataset:
        raise ContractError("empty STS dataset")

    def normalize(m):
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    texts_a = [e.sentence_a for e in sts_dataset]
    texts_b = [e.sentence_b for e in sts_dataset]
    a, _ = embed_corpus(model, projection, texts_a, strategy, projected, batch_size)
    b, _ = embed_corpus(model, projection, texts_b, strategy, projected, batch_size)
    a, b = normalize(a), normalize(b)

    positives = [
        (a[i], b[i]) for i, e in enumerate(sts_dataset) if e.human_score > threshold
    ]
    align = alignment_loss(positives, alpha=alpha) if positives else None

    seen: dict[str, np.ndarray] = {}
    for texts, mat in ((texts_a, a), (texts_b, b)):
        for text, vec in zip(texts, mat):
            if text not in seen:
                seen[text] = vec
    uniform = uniformity_loss(np.stack(list(seen.values())), t=t, exponent=exponent)

    score = eval_sts(model, projection, sts_dataset, strategy, projected, batch_size)
    return DiagnoseResult(alignment=align, uniformity=uniform, spearman_x100=score)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalReport:
    """Scores plus the provenance needed to trace every number."""

    sts: dict[str, float] = field(default_factory=dict)
    transfer: dict[str, float] = field(default_factory=dict)
    alignment: float | None = None
    uniformity: float | None = None
    strategy: str = ""
    projected: bool = True
    config_hash: str = ""
    checkpoint_hash: str = ""
    dataset_hashes: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        machine = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "sts": self.sts,
            "transfer": self.transfer,
            "alignment": self.alignment,
            "uniformity": self.uniformity,
            "strategy": self.strategy,
            "projected": self.projected,
            "config_hash": self.config_hash,
            "checkpoint_hash": self.checkpoint_hash,
            "dataset_hashes": self.dataset_hashes,
        }
        summary_scores = {name: round(v, 2) for name, v in {**self.sts, **self.transfer}.items()}
        if self.sts:
            summary_scores["sts_avg"] = round(float(np.mean(list(self.sts.values()))), 2)
        if self.transfer:
            summary_scores["transfer_avg"] = round(float(np.mean(list(self.transfer.values()))), 2)
        return json.dumps({"summary": summary_scores, "machine": machine}, indent=2, sort_keys=True)
