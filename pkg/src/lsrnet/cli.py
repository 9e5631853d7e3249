"""Command-line entry point: ``lsrnet <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analyzer, checkpoint, data
from .errors import ContractViolation, FormatError
from .model import LSRNet, LSRNetConfig
from .train import TrainConfig, bench_inference, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_CONTRACT = 0, 2, 3, 4


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _write(path: str, blob: bytes) -> None:
    Path(path).write_bytes(blob)


def cmd_synth(args) -> int:
    d = data.synth_generate(args.classes, args.per_class, args.length, args.fs, args.seed)
    _write(args.out, data.write_container(d))
    print(f"wrote {len(d)} segments of {d.segment_length} samples to {args.out}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    d = data.read_container(_read(args.inp))
    noisy = data.add_noise(d, data.NoiseSpec(args.noise, args.snr_db, args.seed))
    _write(args.out, data.write_container(noisy))
    print(f"wrote {len(noisy)} segments ({noisy.meta['noise']}) to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    d = data.read_container(_read(args.inp))
    parts = data.split_dataset(d, args.seed)
    for path, part in zip((args.out_train, args.out_val, args.out_test), parts):
        _write(path, data.write_container(part))
    print("split train/val/test = {}/{}/{}".format(*(len(p) for p in parts)))
    return EXIT_OK


def cmd_train(args) -> int:
    tr = data.read_container(_read(args.train))
    va = data.read_container(_read(args.val))
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
        weight_decay=args.weight_decay, seed=args.seed, snr_db=args.snr_db,
        prune_fraction=args.prune_fraction, prune_on=args.prune_on,
    )
    model = LSRNet(LSRNetConfig(input_length=tr.segment_length, classes=tr.class_count), seed=args.seed)
    model, metrics, events = train(model, tr, va, cfg)
    for i, (tl, vl, va_) in enumerate(zip(metrics.train_loss, metrics.val_loss, metrics.val_accuracy), 1):
        print(f"epoch {i:3d}  train_loss {tl:.5f}  val_loss {vl:.5f}  val_acc {100 * va_:.2f}%")
    print(f"adaptive pruning: {'armed' if cfg.pruning_armed else 'off'}, {len(events)} event(s)")
    for e in events:
        print(f"  epoch {e.epoch}: zeroed {e.zeroed} weights (loss {e.trigger:.5f})")
    print(f"best epoch {metrics.best_epoch}")
    _write(args.out, checkpoint.save_checkpoint(model))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = checkpoint.load_checkpoint(_read(args.model))
    d = data.read_container(_read(args.data))
    print(evaluate(model, d).table())
    return EXIT_OK


def _model_from(args) -> LSRNet:
    if args.model:
        return checkpoint.load_checkpoint(_read(args.model))
    return LSRNet(LSRNetConfig())


def cmd_analyze(args) -> int:
    report = analyzer.analyze_model(_model_from(args))
    print(report.to_tsv() if args.tsv else report.to_table())
    return EXIT_OK


def cmd_bench(args) -> int:
    result = bench_inference(_model_from(args), repeats=args.repeats, warmup=args.warmup)
    for i, s in enumerate(result.samples_ms, 1):
        print(f"run {i:4d}  {s:.4f} ms")
    print(f"mean {result.mean_ms:.4f} ms ± {result.std_ms:.4f} ms over {len(result.samples_ms)} runs")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsrnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic labelled dataset")
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--per-class", type=int, default=400)
    s.add_argument("--length", type=int, default=4096)
    s.add_argument("--fs", type=float, default=64000.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("prepare", help="inject noise at a target SNR")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--noise", choices=("gaussian", "laplace", "none"), required=True)
    s.add_argument("--snr-db", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("split", help="8:1:1 train/val/test split")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-train", required=True)
    s.add_argument("--out-val", required=True)
    s.add_argument("--out-test", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train LSR-Net (pruning arms when --snr-db < 0)")
    s.add_argument("--train", required=True)
    s.add_argument("--val", required=True)
    s.add_argument("--snr-db", type=float, default=None)
    s.add_argument("--prune-fraction", type=float, default=0.1)
    s.add_argument("--prune-on", choices=("val", "train"), default="val")
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--weight-decay", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="accuracy table and confusion matrix")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_eval)

    for name, func, text in (
        ("analyze", cmd_analyze, "FLOPs / MAC / parameter report"),
        ("bench", cmd_bench, "single-thread inference latency"),
    ):
        s = sub.add_parser(name, help=text)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--model")
        src.add_argument("--default-config", action="store_true")
        if name == "analyze":
            s.add_argument("--tsv", action="store_true", help="tab-separated rows instead of a table")
        else:
            s.add_argument("--repeats", type=int, default=128)
            s.add_argument("--warmup", type=int, default=8)
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
