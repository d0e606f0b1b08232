"""Command-line entry point.

Subcommands: train, embed, eval-sts, eval-transfer, diagnose, bench, plus
make-data for generating the synthetic corpora the README walks through.
Every run writes a manifest (command, resolved config, content hashes of
datasets and checkpoints, seed, tool version, timestamps) sufficient to
reproduce the run bit for bit with the same binary. Report paths write a
rendered PNG figure next to their delimited output.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage or
configuration error. ``--dry-run`` validates configuration and inputs, then
stops before any side effect. ``--config FILE`` supplies defaults (JSON
object or flat key=value lines); explicit flags win.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .backbone import ModelConfig
from .bench import BenchSpec, rows_to_csv, rows_to_table, run_sweep
from .checkpoint import load_checkpoint, save_checkpoint
from .embedder import ExtractionStrategy, embed_corpus, write_embedding_dump
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    ParseError,
    SentembError,
)
from .evaluation import (
    EvalReport,
    diagnose,
    eval_sts,
    eval_transfer,
    load_sts,
    load_transfer,
)
from .trainer import (
    StageConfig,
    init_train_state,
    load_pairs,
    run_stage,
    stage_manifest,
    write_metrics_csv,
)
from .util import file_hash, stable_json, text_hash

USAGE_ERRORS = (ConfigError, ParseError, ContractError, CheckpointError, FileNotFoundError)


def _apply_thread_cap() -> None:
    """Honor ST5_THREADS as an intra-op parallelism cap (best effort)."""
    value = os.environ.get("ST5_THREADS")
    if not value:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(max(1, int(value)))
    except (ImportError, ValueError):
        pass


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _load_config_file(path: str) -> dict:
    """JSON object, or flat ``key=value`` lines for quick runs."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return obj
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults < config file < explicit flags (flags parse to None when absent)."""
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_values:
            value = file_values[key]
            if default is not None and not isinstance(value, type(default)):
                caster = type(default)
                value = caster(value) if caster is not bool else str(value).lower() in ("1", "true", "yes")
            resolved[key] = value
        else:
            resolved[key] = default
    return resolved


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


def _write_manifest(path: str, command: str, config: dict, datasets: dict, checkpoints: dict,
                    seed, started: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "dataset_hashes": datasets,
        "checkpoint_hashes": checkpoints,
        "seed": seed,
        "tool_version": __version__,
        "started_at": started,
        "finished_at": _now(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_from_args(resolved: dict):
    """A (model, projection, checkpoint_hash) triple from --ckpt or --preset."""
    if resolved.get("ckpt"):
        path = _require_file(resolved["ckpt"], "checkpoint")
        loaded = load_checkpoint(path)
        return loaded.model, loaded.projection, file_hash(path)
    preset = resolved.get("preset") or "tiny"
    seed = resolved.get("init_seed")
    if seed is None:
        raise ConfigError("need --ckpt, or --preset with --init-seed for a random model")
    state = init_train_state(ModelConfig.preset(preset), int(seed))
    return state.model, state.projection, f"random-init:{preset}:{seed}"


def _int_pair(text: str, what: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) == 1:
        v = int(parts[0])
        return v, v
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise ConfigError(f"{what} takes N or N1,N2, got {text!r}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = dict(
    stage1=None, stage2=None, preset="tiny", steps="200", batch_size="16",
    tau=0.01, lr=0.001, warm_frac=0.10, strategy="enc_mean", optimizer="adafactor",
    log_every=10, out_dir="st5-run", clip=True, use_negatives="auto",
)


def cmd_train(args) -> int:
    started = _now()
    resolved = _resolve(args, TRAIN_DEFAULTS)
    resolved["seed"] = args.seed
    stage_paths = [p for p in (resolved["stage1"], resolved["stage2"]) if p]
    if not stage_paths:
        raise ConfigError("train needs --stage1 and/or --stage2 dataset paths")
    for path in stage_paths:
        _require_file(path, "dataset")
    strategy = ExtractionStrategy.parse(resolved["strategy"])
    steps = _int_pair(resolved["steps"], "--steps")
    batches = _int_pair(resolved["batch_size"], "--batch-size")
    if args.dry_run:
        print("dry run ok: train", stable_json(resolved))
        return 0

    os.makedirs(resolved["out_dir"], exist_ok=True)
    model_config = ModelConfig.preset(resolved["preset"])
    state = init_train_state(model_config, args.seed, optimizer=resolved["optimizer"])
    clip = 1.0 if resolved["clip"] else None

    checkpoints = {}
    datasets = {}
    stage_no = 0
    for slot, path in (("stage1", resolved["stage1"]), ("stage2", resolved["stage2"])):
        if not path:
            continue
        stage_no += 1
        datasets[path] = file_hash(path)
        negatives = {"auto": None, "yes": True, "no": False}.get(resolved["use_negatives"])
        if resolved["use_negatives"] not in ("auto", "yes", "no"):
            raise ConfigError("--use-negatives must be auto, yes, or no")
        stage = StageConfig(
            dataset_path=path,
            batch_size=batches[stage_no - 1],
            total_steps=steps[stage_no - 1],
            peak_lr=resolved["lr"],
            warm_fraction=resolved["warm_frac"],
            temperature=resolved["tau"],
            strategy=strategy,
            seed=args.seed + stage_no,
            use_negatives=negatives,
            clip_norm=clip,
            optimizer=resolved["optimizer"],
            log_every=resolved["log_every"],
        )
        if stage_no > 1:
            # Fresh optimizer slots and a fresh schedule for the next stage.
            from .optim import make_optimizer

            state.optimizer = make_optimizer(resolved["optimizer"])
            state.step = 0
        state, metrics = run_stage(state, stage, records=load_pairs(path))
        name = slot if len(stage_paths) == 2 else "final"
        ckpt_path = os.path.join(resolved["out_dir"], f"{name}.st5f")
        save_checkpoint(state.model, state.optimizer.state_tensors(), state.step,
                        ckpt_path, projection=state.projection)
        checkpoints[f"{name}.st5f"] = file_hash(ckpt_path)
        csv_path = os.path.join(resolved["out_dir"], f"metrics_{name}.csv")
        write_metrics_csv(metrics, csv_path)
        from .plots import render_metrics

        render_metrics(metrics, os.path.join(resolved["out_dir"], f"metrics_{name}.png"))
        info = stage_manifest(stage)
        with open(os.path.join(resolved["out_dir"], f"{name}.stage.json"), "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)

    _write_manifest(
        os.path.join(resolved["out_dir"], "run_manifest.json"),
        "train", resolved, datasets, checkpoints, args.seed, started,
    )
    print(f"trained {stage_no} stage(s); outputs in {resolved['out_dir']}")
    return 0


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------

EMBED_DEFAULTS = dict(
    ckpt=None, preset=None, init_seed=None, strategy="enc_mean",
    infile=None, out="embeddings.dump", raw=False, batch_size=32,
)


def cmd_embed(args) -> int:
    started = _now()
    resolved = _resolve(args, EMBED_DEFAULTS)
    if not resolved["infile"]:
        raise ConfigError("embed needs --in with one text per line")
    _require_file(resolved["infile"], "input text file")
    strategy = ExtractionStrategy.parse(resolved["strategy"])
    if args.dry_run:
        print("dry run ok: embed", stable_json({k: v for k, v in resolved.items()}))
        return 0
    model, projection, ckpt_hash = _model_from_args(resolved)
    with open(resolved["infile"], encoding="utf-8") as fh:
        texts = [line.rstrip("\n") for line in fh if line.strip()]
    if not texts:
        print("warning: input file has no text lines; writing an empty dump", file=sys.stderr)
    projected = not resolved["raw"]
    matrix, manifest = embed_corpus(
        model, projection, texts, strategy, projected, resolved["batch_size"]
    )
    write_embedding_dump(resolved["out"], matrix, strategy, projected)
    with open(resolved["out"] + ".texts.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    _write_manifest(
        resolved["out"] + ".manifest.json", "embed", resolved,
        {resolved["infile"]: file_hash(resolved["infile"])},
        {"model": ckpt_hash}, resolved.get("init_seed"), started,
    )
    print(f"wrote {matrix.shape[0]} embeddings (dim {matrix.shape[1]}) to {resolved['out']}")
    return 0


# ---------------------------------------------------------------------------
# eval / diagnose / bench
# ---------------------------------------------------------------------------

EVAL_STS_DEFAULTS = dict(
    ckpt=None, preset=None, init_seed=None, strategy="enc_mean",
    raw=False, batch_size=32, out="sts_report.json",
)


def cmd_eval_sts(args) -> int:
    started = _now()
    resolved = _resolve(args, EVAL_STS_DEFAULTS)
    paths = args.data or []
    if not paths:
        raise ConfigError("eval-sts needs at least one --data file")
    for p in paths:
        _require_file(p, "STS file")
    strategy = ExtractionStrategy.parse(resolved["strategy"])
    if args.dry_run:
        print("dry run ok: eval-sts")
        return 0
    model, projection, ckpt_hash = _model_from_args(resolved)
    projected = not resolved["raw"]
    report = EvalReport(
        strategy=strategy.value, projected=projected,
        config_hash=text_hash(stable_json(resolved)), checkpoint_hash=ckpt_hash,
    )
    for p in paths:
        name = os.path.splitext(os.path.basename(p))[0]
        score = eval_sts(model, projection, load_sts(p), strategy, projected, resolved["batch_size"])
        report.sts[name] = score
        report.dataset_hashes[p] = file_hash(p)
        print(f"{name}: {score:.2f}")
    if len(report.sts) > 1:
        print(f"avg: {float(np.mean(list(report.sts.values()))):.2f}")
    with open(resolved["out"], "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    _write_manifest(resolved["out"] + ".manifest.json", "eval-sts", resolved,
                    report.dataset_hashes, {"model": ckpt_hash},
                    resolved.get("init_seed"), started)
    return 0


EVAL_TRANSFER_DEFAULTS = dict(
    ckpt=None, preset=None, init_seed=None, strategy="enc_mean",
    raw=False, batch_size=32, l2_penalty=1e-3, train=None, test=None,
    out="transfer_report.json",
)


def cmd_eval_transfer(args) -> int:
    started = _now()
    resolved = _resolve(args, EVAL_TRANSFER_DEFAULTS)
    if not resolved["train"] or not resolved["test"]:
        raise ConfigError("eval-transfer needs --train and --test TSV files")
    _require_file(resolved["train"], "train split")
    _require_file(resolved["test"], "test split")
    strategy = ExtractionStrategy.parse(resolved["strategy"])
    if args.dry_run:
        print("dry run ok: eval-transfer")
        return 0
    model, projection, ckpt_hash = _model_from_args(resolved)
    projected = not resolved["raw"]
    train = load_transfer(resolved["train"], split="train")
    test = load_transfer(resolved["test"], split="test")
    acc = eval_transfer(model, projection, train, test, strategy, projected,
                        resolved["l2_penalty"], resolved["batch_size"])
    print(f"accuracy: {acc:.2f}")
    report = EvalReport(
        transfer={os.path.basename(resolved["test"]): acc},
        strategy=strategy.value, projected=projected,
        config_hash=text_hash(stable_json(resolved)), checkpoint_hash=ckpt_hash,
        dataset_hashes={p: file_hash(p) for p in (resolved["train"], resolved["test"])},
    )
    with open(resolved["out"], "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    _write_manifest(resolved["out"] + ".manifest.json", "eval-transfer", resolved,
                    report.dataset_hashes, {"model": ckpt_hash},
                    resolved.get("init_seed"), started)
    return 0


DIAGNOSE_DEFAULTS = dict(
    ckpt=None, preset=None, init_seed=None, strategy="enc_mean", raw=False,
    batch_size=32, data=None, threshold=4.0, alpha=2.0, t=2.0,
    uniformity_exponent="squared", out="diagnose.json",
)


def cmd_diagnose(args) -> int:
    started = _now()
    resolved = _resolve(args, DIAGNOSE_DEFAULTS)
    if not resolved["data"]:
        raise ConfigError("diagnose needs --data with an STS file")
    _require_file(resolved["data"], "STS file")
    strategy = ExtractionStrategy.parse(resolved["strategy"])
    if resolved["uniformity_exponent"] not in ("squared", "linear"):
        raise ConfigError("--uniformity-exponent must be 'squared' or 'linear'")
    if args.dry_run:
        print("dry run ok: diagnose")
        return 0
    model, projection, ckpt_hash = _model_from_args(resolved)
    result = diagnose(
        model, projection, load_sts(resolved["data"]),
        threshold=resolved["threshold"], strategy=strategy,
        projected=not resolved["raw"], alpha=resolved["alpha"], t=resolved["t"],
        exponent=resolved["uniformity_exponent"], batch_size=resolved["batch_size"],
    )
    payload = {
        "alignment": result.alignment,
        "uniformity": result.uniformity,
        "spearman_x100": result.spearman_x100,
        "threshold": resolved["threshold"],
        "strategy": strategy.value,
        "projected": not resolved["raw"],
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    with open(resolved["out"], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    from .plots import render_diagnose

    render_diagnose({"model": result}, os.path.splitext(resolved["out"])[0] + ".png")
    _write_manifest(resolved["out"] + ".manifest.json", "diagnose", resolved,
                    {resolved["data"]: file_hash(resolved["data"])},
                    {"model": ckpt_hash}, resolved.get("init_seed"), started)
    return 0


BENCH_DEFAULTS = dict(
    presets="tiny,small", seq_lens="32,64", batch_sizes="1,8",
    warmup=3, iters=5, strategy="enc_mean", seed=0, out="bench.csv",
)


def cmd_bench(args) -> int:
    started = _now()
    resolved = _resolve(args, BENCH_DEFAULTS)
    strategy = ExtractionStrategy.parse(resolved["strategy"])
    spec = BenchSpec(
        size_presets=[p.strip() for p in resolved["presets"].split(",") if p.strip()],
        seq_lens=[int(x) for x in str(resolved["seq_lens"]).split(",")],
        batch_sizes=[int(x) for x in str(resolved["batch_sizes"]).split(",")],
        warmup_iters=resolved["warmup"], measure_iters=resolved["iters"],
        strategy=strategy, seed=resolved["seed"],
    )
    if args.dry_run:
        print("dry run ok: bench", stable_json(resolved))
        return 0
    rows, failures = run_sweep(spec)
    with open(resolved["out"], "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
    print(rows_to_table(rows))
    for preset, seq_len, batch, message in failures:
        print(f"failed cell ({preset}, {seq_len}, {batch}): {message}", file=sys.stderr)
    from .plots import render_bench

    render_bench(rows, os.path.splitext(resolved["out"])[0] + ".png")
    _write_manifest(resolved["out"] + ".manifest.json", "bench", resolved, {}, {},
                    resolved["seed"], started)
    return 0 if not failures else 1


MAKE_DATA_DEFAULTS = dict(
    out_dir="data", seed=0, pairs=400, triples=64, sts=120, transfer=24,
)


def cmd_make_data(args) -> int:
    started = _now()
    resolved = _resolve(args, MAKE_DATA_DEFAULTS)
    if args.dry_run:
        print("dry run ok: make-data", stable_json(resolved))
        return 0
    from .synthetic import (
        HELDOUT_TEMPLATES,
        STAGE1_TEMPLATES,
        STAGE2_TEMPLATES,
        nli_style_triples,
        paraphrase_pairs,
        sts_examples,
        write_pairs_jsonl,
        write_sts_tsv,
    )
    from .synthetic_transfer import transfer_splits

    out = resolved["out_dir"]
    os.makedirs(out, exist_ok=True)
    seed = resolved["seed"]
    write_pairs_jsonl(paraphrase_pairs(resolved["pairs"], seed), os.path.join(out, "qa.jsonl"))
    write_pairs_jsonl(nli_style_triples(resolved["triples"], seed), os.path.join(out, "nli.jsonl"))
    universe = STAGE1_TEMPLATES + STAGE2_TEMPLATES + HELDOUT_TEMPLATES
    write_sts_tsv(sts_examples(resolved["sts"], seed + 999, templates=universe),
                  os.path.join(out, "sts.tsv"))
    train, test = transfer_splits(resolved["transfer"], seed)
    for name, ds in (("transfer_train.tsv", train), ("transfer_test.tsv", test)):
        with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
            for label, textline in zip(ds.labels, ds.texts):
                fh.write(f"{label}\t{textline}\n")
    produced = ["qa.jsonl", "nli.jsonl", "sts.tsv", "transfer_train.tsv", "transfer_test.tsv"]
    _write_manifest(
        os.path.join(out, "data_manifest.json"), "make-data", resolved,
        {name: file_hash(os.path.join(out, name)) for name in produced}, {}, seed, started,
    )
    print(f"wrote {', '.join(produced)} to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentemb",
        description="Sentence embeddings from a toy encoder-decoder transformer: "
                    "contrastive fine-tuning, STS/transfer evaluation, diagnostics, benchmarks.",
    )
    parser.add_argument("--version", action="version", version=f"sentemb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON or key=value config file; flags override")
        p.add_argument("--dry-run", action="store_true", help="validate config, no side effects")

    def model_source(p):
        p.add_argument("--ckpt", help="checkpoint file (.st5f)")
        p.add_argument("--preset", choices=["tiny", "small", "base-toy"],
                       help="random-init preset (with --init-seed) instead of --ckpt")
        p.add_argument("--init-seed", type=int, dest="init_seed")
        p.add_argument("--strategy", help="enc_first | enc_mean | encdec_first")
        p.add_argument("--raw", action="store_const", const=True,
                       help="use raw d_model embeddings (no projection/normalization)")
        p.add_argument("--batch-size", type=int, dest="batch_size")

    p = sub.add_parser("train", help="contrastive fine-tuning (one or two stages)")
    common(p)
    p.add_argument("--stage1", help="stage-1 pair file (jsonl/tsv)")
    p.add_argument("--stage2", help="stage-2 pair file (jsonl/tsv)")
    p.add_argument("--preset", choices=["tiny", "small", "base-toy"])
    p.add_argument("--steps", help="total steps, N or N1,N2")
    p.add_argument("--batch-size", dest="batch_size", help="batch size, N or N1,N2")
    p.add_argument("--tau", type=float, help="softmax temperature")
    p.add_argument("--lr", type=float, help="peak learning rate")
    p.add_argument("--warm-frac", type=float, dest="warm_frac")
    p.add_argument("--strategy")
    p.add_argument("--optimizer", choices=["adafactor", "adam"])
    p.add_argument("--use-negatives", dest="use_negatives", choices=["auto", "yes", "no"],
                   help="hard-negative loss: auto uses it iff every record has one")
    p.add_argument("--log-every", type=int, dest="log_every")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--no-clip", action="store_const", const=False, dest="clip",
                   help="disable gradient norm clipping")
    p.add_argument("--seed", type=int, required=True, help="master seed (required)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a text file into a dump")
    common(p)
    model_source(p)
    p.add_argument("--in", dest="infile", help="input file, one text per line")
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval-sts", help="Spearman x100 on STS TSV files")
    common(p)
    model_source(p)
    p.add_argument("--data", action="append", help="STS TSV (repeatable)")
    p.add_argument("--out", help="write the EvalReport JSON here")
    p.set_defaults(func=cmd_eval_sts)

    p = sub.add_parser("eval-transfer", help="linear-probe accuracy on a transfer task")
    common(p)
    model_source(p)
    p.add_argument("--train", help="train split TSV: label TAB text")
    p.add_argument("--test", help="test split TSV")
    p.add_argument("--l2", type=float, dest="l2_penalty")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_transfer)

    p = sub.add_parser("diagnose", help="alignment/uniformity/Spearman triple")
    common(p)
    model_source(p)
    p.add_argument("--data", help="STS TSV file")
    p.add_argument("--threshold", type=float, help="positives have score > threshold")
    p.add_argument("--alpha", type=float, help="alignment distance power")
    p.add_argument("--t", type=float, help="uniformity kernel scale")
    p.add_argument("--uniformity-exponent", dest="uniformity_exponent",
                   choices=["squared", "linear"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="throughput sweep over presets/lengths/batches")
    common(p)
    p.add_argument("--presets")
    p.add_argument("--seq-lens", dest="seq_lens")
    p.add_argument("--batch-sizes", dest="batch_sizes")
    p.add_argument("--warmup", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--strategy")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("make-data", help="generate synthetic corpora for the walkthrough")
    common(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--triples", type=int)
    p.add_argument("--sts", type=int)
    p.add_argument("--transfer", type=int)
    p.set_defaults(func=cmd_make_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SentembError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected crashes
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
