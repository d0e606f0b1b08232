"""Data loading, scheduling, and the one- and two-stage training loops.

Batching is stateless by construction: records are put in a canonical order
(sorted by content, so file ordering is irrelevant), and the shuffle for
epoch ``e`` is a permutation drawn from a generator seeded with
``(seed, e)``. The batch for any global step can therefore be recomputed
from ``(seed, step)`` alone, which is what makes resume-from-checkpoint
reproduce an uninterrupted run bit for bit. Datasets smaller than the batch
size wrap across epoch boundaries (each epoch reshuffled); otherwise an
epoch is one pass over the shuffled records with the partial final batch
dropped, since the in-batch loss degrades for very small batches.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .backbone import EncoderDecoderModel, ModelConfig, init_model, make_token_batch, tokenize
from .checkpoint import save_checkpoint
from .contrastive import LossConfig, PairBatch, loss_forward_backward
from .embedder import ExtractionStrategy
from .errors import ConfigError, ContractError, ParameterError, ParseError
from .optim import make_optimizer
from .tensor import Tensor
from .util import file_hash

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairRecord:
    text_a: str
    text_b: str
    text_neg: str | None = None

    def __post_init__(self):
        if not self.text_a or not self.text_b:
            raise ContractError("text_a and text_b must be non-empty")


@dataclass
class StageConfig:
    dataset_path: str = ""
    batch_size: int = 16
    total_steps: int = 100
    peak_lr: float = 0.001
    warm_fraction: float = 0.10
    temperature: float = 0.01
    strategy: ExtractionStrategy = ExtractionStrategy.ENC_MEAN
    seed: int = 0
    # Loss path: None means "use negatives iff every record carries one".
    use_negatives: bool | None = None
    # Safety valve; None disables clipping (gradient-check runs want that).
    clip_norm: float | None = 1.0
    optimizer: str = "adafactor"
    log_every: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be > 0")
        if not (0.0 < self.warm_fraction < 1.0):
            raise ConfigError("warm_fraction must lie in (0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")


@dataclass
class TrainState:
    model: EncoderDecoderModel
    projection: Tensor
    optimizer: object
    step: int = 0
    seed: int = 0


@dataclass
class MetricsRow:
    step: int
    lr: float
    loss: float


# ---------------------------------------------------------------------------
# Data loading
# ---------------------------------------------------------------------------


def load_pairs(path: str, fmt: str | None = None) -> list[PairRecord]:
    """Parse a JSONL or TSV pair file, preserving record order.

    ``fmt`` defaults from the file extension. Malformed lines raise
    ``ParseError`` naming the line number; an empty file yields an empty
    list with a warning.
    """
    if fmt is None:
        fmt = "jsonl" if path.endswith((".jsonl", ".json")) else "tsv"
    if fmt not in ("jsonl", "tsv"):
        raise ConfigError(f"unknown pair format {fmt!r}; valid: jsonl, tsv")
    records: list[PairRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if fmt == "jsonl":
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
                for key in ("text_a", "text_b"):
                    if key not in obj or not obj[key]:
                        raise ParseError(f"{path}: line {lineno}: missing field {key!r}")
                records.append(
                    PairRecord(obj["text_a"], obj["text_b"], obj.get("text_neg") or None)
                )
            else:
                cols = line.split("\t")
                if len(cols) not in (2, 3) or not cols[0] or not cols[1]:
                    raise ParseError(
                        f"{path}: line {lineno}: expected 2 or 3 non-empty tab-separated columns"
                    )
                neg = cols[2] if len(cols) == 3 and cols[2] else None
                records.append(PairRecord(cols[0], cols[1], neg))
    if not records:
        logger.warning("%s: no records parsed", path)
    return records


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


def lr_at(step: int, config: StageConfig) -> float:
    """Constant peak for the warm fraction of steps, then linear to 0."""
    total = config.total_steps
    if not 0 <= step <= total:
        raise ParameterError(f"step {step} outside [0, {total}]")
    warm = config.warm_fraction * total
    if step < warm:
        return config.peak_lr
    return config.peak_lr * (total - step) / (total - warm)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def init_train_state(config: ModelConfig, seed: int, optimizer: str = "adafactor") -> TrainState:
    model = init_model(config, seed)
    proj_rng = np.random.default_rng([seed, 1])
    projection = Tensor(
        proj_rng.normal(0.0, 1.0 / math.sqrt(config.d_model), size=(config.d_model, config.embed_dim)),
        requires_grad=True,
    )
    return TrainState(model=model, projection=projection, optimizer=make_optimizer(optimizer), step=0, seed=seed)


def _epoch_perm(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, 2, epoch]).permutation(n)


def batch_indices(n: int, batch_size: int, seed: int, step: int) -> list[int]:
    """Record indices for the batch at ``step``; pure function of its args."""
    if n >= batch_size:
        per_epoch = n // batch_size
        epoch, slot = divmod(step, per_epoch)
        perm = _epoch_perm(n, seed, epoch)
        return perm[slot * batch_size : (slot + 1) * batch_size].tolist()
    # Small dataset: consume the concatenated epoch permutations as a stream.
    out = []
    for k in range(step * batch_size, (step + 1) * batch_size):
        epoch, offset = divmod(k, n)
        out.append(int(_epoch_perm(n, seed, epoch)[offset]))
    return out


def _canonical_order(records: list[PairRecord]) -> list[PairRecord]:
    return sorted(records, key=lambda r: (r.text_a, r.text_b, r.text_neg or ""))


def _clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> dict[str, np.ndarray]:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= clip_norm or total == 0.0:
        return grads
    scale = clip_norm / total
    return {name: g * scale for name, g in grads.items()}


def run_stage(
    state: TrainState,
    stage: StageConfig,
    records: list[PairRecord] | None = None,
    stop_after: int | None = None,
) -> tuple[TrainState, list[MetricsRow]]:
    """Train from ``state.step`` to ``stage.total_steps`` on one pair set.

    Pass ``records`` to skip file I/O (tests, synthetic corpora). Resuming a
    partially trained state continues the identical trajectory;
    ``stop_after`` interrupts the stage at that global step (the schedule
    still follows ``stage.total_steps``) so a mid-stage checkpoint can be
    taken and resumed later.
    """
    if records is None:
        records = load_pairs(stage.dataset_path)
    if not records:
        raise ContractError("cannot train on an empty dataset")

    use_negatives = stage.use_negatives
    if use_negatives is None:
        use_negatives = all(r.text_neg is not None for r in records)
    if use_negatives and any(r.text_neg is None for r in records):
        raise ContractError("hard-negative training needs a negative on every record")
    if stage.batch_size < 2 and not use_negatives:
        raise ConfigError("batch_size must be >= 2 unless every record carries a negative")

    ordered = _canonical_order(records)
    max_len = state.model.config.max_seq_len
    tok_a = [tokenize(r.text_a, max_len).ids for r in ordered]
    tok_b = [tokenize(r.text_b, max_len).ids for r in ordered]
    tok_n = [tokenize(r.text_neg, max_len).ids if r.text_neg else None for r in ordered]

    loss_config = LossConfig(temperature=stage.temperature, use_hard_negatives=use_negatives)
    metrics: list[MetricsRow] = []
    n = len(ordered)
    last = stage.total_steps if stop_after is None else min(stop_after, stage.total_steps)
    for step in range(state.step, last):
        idx = batch_indices(n, stage.batch_size, stage.seed, step)
        batch = PairBatch(
            anchors=make_token_batch([tok_a[i] for i in idx]),
            positives=make_token_batch([tok_b[i] for i in idx]),
            negatives=make_token_batch([tok_n[i] for i in idx]) if use_negatives else None,
        )
        lr = lr_at(step, stage)
        loss, grads = loss_forward_backward(
            state.model, state.projection, batch, stage.strategy, loss_config
        )
        if stage.clip_norm is not None:
            grads = _clip_gradients(grads, stage.clip_norm)
        params = dict(state.model.parameters())
        params["projection"] = state.projection
        t = step + 1
        for name, param in params.items():
            state.optimizer.update(name, param, grads[name], lr, t)
        state.step = t
        if step % stage.log_every == 0 or t == last:
            metrics.append(MetricsRow(step=step, lr=lr, loss=loss))
    return state, metrics


def run_two_stage(
    stage1: StageConfig,
    stage2: StageConfig,
    init_seed: int,
    model_config: ModelConfig,
    records1: list[PairRecord] | None = None,
    records2: list[PairRecord] | None = None,
    checkpoint_dir: str | None = None,
) -> tuple[TrainState, list[MetricsRow], list[MetricsRow]]:
    """Stage 1 then stage 2 on the stage-1 parameters.

    Stage 2 starts from the stage-1 weights but with fresh optimizer slots
    and a fresh schedule (its step counter restarts at 0). A checkpoint is
    written at each stage boundary when ``checkpoint_dir`` is given.
    """
    state = init_train_state(model_config, init_seed, optimizer=stage1.optimizer)
    state, metrics1 = run_stage(state, stage1, records=records1)
    if checkpoint_dir is not None:
        save_checkpoint(
            state.model, state.optimizer.state_tensors(), state.step,
            os.path.join(checkpoint_dir, "stage1.st5f"), projection=state.projection,
        )
    state.optimizer = make_optimizer(stage2.optimizer)
    state.step = 0
    state, metrics2 = run_stage(state, stage2, records=records2)
    if checkpoint_dir is not None:
        save_checkpoint(
            state.model, state.optimizer.state_tensors(), state.step,
            os.path.join(checkpoint_dir, "stage2.st5f"), projection=state.projection,
        )
    return state, metrics1, metrics2


# ---------------------------------------------------------------------------
# Metrics / manifest output
# ---------------------------------------------------------------------------


def write_metrics_csv(rows: list[MetricsRow], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,lr,loss\n")
        for row in rows:
            fh.write(f"{row.step},{row.lr!r},{row.loss!r}\n")


def stage_manifest(stage: StageConfig, dataset_path: str | None = None) -> dict:
    manifest = {
        "config": {
            "dataset_path": stage.dataset_path,
            "batch_size": stage.batch_size,
            "total_steps": stage.total_steps,
            "peak_lr": stage.peak_lr,
            "warm_fraction": stage.warm_fraction,
            "temperature": stage.temperature,
            "strategy": stage.strategy.value,
            "use_negatives": stage.use_negatives,
            "clip_norm": stage.clip_norm,
            "optimizer": stage.optimizer,
        },
        "seed": stage.seed,
    }
    path = dataset_path or stage.dataset_path
    if path and os.path.exists(path):
        manifest["dataset_hash"] = file_hash(path)
    return manifest
