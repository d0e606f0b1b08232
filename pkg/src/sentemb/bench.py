"""Inference throughput measurement across presets, lengths, and batch sizes.

Each cell times the embedding forward pass only (tokenization and I/O are
excluded, and the report says so) on synthetic fully-unmasked batches of
random token ids, after a warmup that amortizes allocator effects. Cells run
one at a time; concurrent cells would contend for the same cores and skew
each other. Failures are recorded per cell and the sweep continues.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .backbone import BYTE_OFFSET, EncoderDecoderModel, ModelConfig, TokenBatch, init_model
from .embedder import ExtractionStrategy, extract_raw
from .errors import CapacityError, ConfigError, ParseError
from .tensor import no_grad

CSV_COLUMNS = "preset,seq_len,batch_size,examples_per_sec,stddev,threads"


@dataclass
class BenchSpec:
    size_presets: list[str] = field(default_factory=lambda: ["tiny", "small"])
    seq_lens: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    batch_sizes: list[int] = field(default_factory=lambda: [1, 8])
    warmup_iters: int = 3
    measure_iters: int = 5
    strategy: ExtractionStrategy = ExtractionStrategy.ENC_MEAN
    seed: int = 0

    def __post_init__(self):
        if self.measure_iters < 3:
            raise ConfigError("measure_iters must be >= 3")
        if self.warmup_iters < 0:
            raise ConfigError("warmup_iters must be >= 0")
        if not self.size_presets or not self.seq_lens or not self.batch_sizes:
            raise ConfigError("sweep axes must be non-empty")


@dataclass
class BenchRow:
    preset: str
    seq_len: int
    batch_size: int
    examples_per_second: float
    wall_time_stddev: float
    threads: int

    def __post_init__(self):
        if not (self.examples_per_second > 0 and np.isfinite(self.examples_per_second)):
            raise ConfigError("examples_per_second must be positive and finite")


def report_threads() -> int:
    """Thread count recorded in reports: ST5_THREADS if set, else cpu count."""
    env = os.environ.get("ST5_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _params_checksum(model: EncoderDecoderModel) -> str:
    h = hashlib.sha256()
    for name, p in model.parameters().items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


def measure_throughput(
    model: EncoderDecoderModel,
    seq_len: int,
    batch_size: int,
    warmup: int = 3,
    iters: int = 5,
    strategy: ExtractionStrategy = ExtractionStrategy.ENC_MEAN,
    seed: int = 0,
) -> BenchRow:
    """Examples/second for one (model, seq_len, batch_size) cell."""
    if seq_len > model.config.max_seq_len:
        raise ConfigError(
            f"seq_len {seq_len} exceeds model max_seq_len {model.config.max_seq_len}"
        )
    rng = np.random.default_rng([seed, seq_len, batch_size])
    ids = rng.integers(BYTE_OFFSET, model.config.vocab_size, size=(batch_size, seq_len))
    batch = TokenBatch(ids=ids, mask=np.ones((batch_size, seq_len)))
    try:
        with no_grad():
            for _ in range(warmup):
                extract_raw(model, batch, strategy)
            times = []
            for _ in range(iters):
                t0 = time.perf_counter()
                extract_raw(model, batch, strategy)
                times.append(time.perf_counter() - t0)
    except MemoryError as exc:
        raise CapacityError(
            f"model/batch too large for host memory at seq_len={seq_len} batch={batch_size}"
        ) from exc
    total = sum(times)
    return BenchRow(
        preset=model.config.size_preset,
        seq_len=seq_len,
        batch_size=batch_size,
        examples_per_second=(iters * batch_size) / total,
        wall_time_stddev=float(np.std(times)),
        threads=report_threads(),
    )


def run_sweep(
    spec: BenchSpec, models: dict[str, EncoderDecoderModel] | None = None
) -> tuple[list[BenchRow], list[tuple[str, int, int, str]]]:
    """Full Cartesian sweep; returns (rows, per-cell failures).

    Models are built per preset from ``spec.seed`` unless supplied. The
    benchmark never mutates parameters; a checksum guards that.
    """
    if models is None:
        models = {
            name: init_model(ModelConfig.preset(name), spec.seed) for name in spec.size_presets
        }
    rows: list[BenchRow] = []
    failures: list[tuple[str, int, int, str]] = []
    for name in spec.size_presets:
        model = models[name]
        before = _params_checksum(model)
        for seq_len in spec.seq_lens:
            for batch_size in spec.batch_sizes:
                try:
                    rows.append(
                        measure_throughput(
                            model, seq_len, batch_size,
                            warmup=spec.warmup_iters, iters=spec.measure_iters,
                            strategy=spec.strategy, seed=spec.seed,
                        )
                    )
                except Exception as exc:  # recorded, sweep continues
                    failures.append((name, seq_len, batch_size, str(exc)))
        if _params_checksum(model) != before:
            raise AssertionError(f"benchmark mutated parameters of preset {name!r}")
    return rows, failures


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def rows_to_csv(rows: list[BenchRow]) -> str:
    lines = [CSV_COLUMNS]
    for r in rows:
        lines.append(
            f"{r.preset},{r.seq_len},{r.batch_size},{r.examples_per_second!r},"
            f"{r.wall_time_stddev!r},{r.threads}"
        )
    return "\n".join(lines) + "\n"


def rows_from_csv(text: str) -> list[BenchRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_COLUMNS:
        raise ParseError(f"bad bench CSV header: {lines[0] if lines else '<empty>'!r}")
    rows = []
    for ln in lines[1:]:
        preset, seq_len, batch, eps, std, threads = ln.split(",")
        rows.append(
            BenchRow(
                preset=preset, seq_len=int(seq_len), batch_size=int(batch),
                examples_per_second=float(eps), wall_time_stddev=float(std),
                threads=int(threads),
            )
        )
    return rows


def rows_to_table(rows: list[BenchRow]) -> str:
    """Aligned text table, one block per preset. Forward pass only."""
    out = ["throughput (examples/second, forward pass only; tokenization and I/O excluded)"]
    header = f"{'seq_len':>8} {'batch':>6} {'examples/s':>12} {'stddev(s)':>10} {'threads':>8}"
    for preset in dict.fromkeys(r.preset for r in rows):
        out.append(f"\n[{preset}]")
        out.append(header)
        for r in rows:
            if r.preset != preset:
                continue
            out.append(
                f"{r.seq_len:>8} {r.batch_size:>6} {r.examples_per_second:>12.2f} "
                f"{r.wall_time_stddev:>10.2e} {r.threads:>8}"
            )
    return "\n".join(out) + "\n"
