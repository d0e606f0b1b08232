"""Figure rendering for the CLI report paths.

Each renderer takes already-computed results and writes one PNG next to the
delimited output it illustrates: training metrics get loss/learning-rate
curves, bench sweeps get throughput-vs-length lines (one per preset/batch
pair), and diagnostics get an alignment-vs-uniformity point colored by the
STS score.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import BenchRow
from .evaluation import DiagnoseResult
from .trainer import MetricsRow


def render_metrics(rows: list[MetricsRow], path: str) -> None:
    steps = [r.step for r in rows]
    fig, (ax_loss, ax_lr) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax_loss.plot(steps, [r.loss for r in rows], marker=".", lw=1)
    ax_loss.set_ylabel("loss")
    ax_loss.grid(alpha=0.3)
    ax_lr.plot(steps, [r.lr for r in rows], color="tab:orange", lw=1)
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_xlabel("step")
    ax_lr.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bench(rows: list[BenchRow], path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    groups: dict[tuple[str, int], list[BenchRow]] = {}
    for r in rows:
        groups.setdefault((r.preset, r.batch_size), []).append(r)
    for (preset, batch), cells in sorted(groups.items()):
        cells = sorted(cells, key=lambda r: r.seq_len)
        ax.plot(
            [c.seq_len for c in cells],
            [c.examples_per_second for c in cells],
            marker="o",
            label=f"{preset}, batch={batch}",
        )
    ax.set_xlabel("sequence length")
    ax.set_ylabel("examples / second")
    ax.set_yscale("log")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_diagnose(results: dict[str, DiagnoseResult], path: str) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    xs, ys, cs, labels = [], [], [], []
    for label, r in results.items():
        if r.alignment is None:
            continue
        xs.append(r.alignment)
        ys.append(r.uniformity)
        cs.append(r.spearman_x100)
        labels.append(label)
    if xs:
        sc = ax.scatter(xs, ys, c=cs, cmap="viridis", s=60)
        fig.colorbar(sc, ax=ax, label="Spearman x100")
        for x, y, label in zip(xs, ys, labels):
            ax.annotate(label, (x, y), fontsize=8, xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel("alignment (lower = positives closer)")
    ax.set_ylabel("uniformity (lower = more spread)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
