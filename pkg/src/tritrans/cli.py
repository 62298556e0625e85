"""Command-line entry point.

Configuration precedence (later wins): preset, ``--config`` file, flags.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import MODEL_KEYS, TRAIN_KEYS, ConfigError, apply_overrides, describe, parse_config_text, preset
from .data import pnm
from .data.samples import DataError, load_manifest, read_manifest
from .data.synth import synth_generate, write_dataset
from .tensor import ShapeError
from .tensor.container import ContainerError
from .trainer import CheckpointError, NumericalError

log = logging.getLogger("tritrans")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PATH_KEYS = ("preset", "data", "test_data", "out", "checkpoint", "resume")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=("desk", "paper"), default=None)
    p.add_argument("--config", help="key = value file")
    g = p.add_argument_group("hyperparameters (override preset and config file)")
    for key in MODEL_KEYS + TRAIN_KEYS:
        g.add_argument(_flag(key), dest=f"cfg_{key}", metavar="V", default=None)


def _resolve(args) -> tuple:
    """Merge preset, config file and flags; return (TrainConfig, path settings)."""
    file_vals: dict[str, str] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"missing config file: {path}")
        file_vals = parse_config_text(path.read_text(), str(path))
    paths = {k: file_vals.pop(k) for k in list(file_vals) if k in PATH_KEYS}
    name = args.preset or paths.pop("preset", None) or "desk"
    paths.pop("preset", None)
    overrides = dict(file_vals)
    for key in MODEL_KEYS + TRAIN_KEYS:
        val = getattr(args, f"cfg_{key}", None)
        if val is not None:
            overrides[key] = val
    cfg = apply_overrides(preset(name), overrides).validate()
    for key in PATH_KEYS[1:]:
        val = getattr(args, key, None)
        if val is not None:
            paths[key] = val
    return cfg, paths


def _need(paths: dict, key: str) -> str:
    if not paths.get(key):
        raise UsageError(f"missing required setting {key!r} (flag {_flag(key)} or config key)")
    return paths[key]


# -- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    from .model import TriTransNet
    from .plotting import plot_loss_curve
    from .trainer import train

    cfg, paths = _resolve(args)
    print(describe(cfg))
    if args.dry_run:
        return EXIT_OK
    data = _need(paths, "data")
    out = Path(paths.get("out") or "runs/train")
    samples = load_manifest(data, cfg.model.input_size)
    census = TriTransNet(cfg.model, seed=cfg.seed).census()
    print("parameters: " + " ".join(f"{k}={v}" for k, v in census.items()))

    def progress(step, epoch, loss, lr):
        if step % args.log_every == 0:
            print(f"step {step} epoch {epoch} loss {loss:.5f} lr {lr:g}", flush=True)

    res = train(cfg, samples, out, resume=paths.get("resume"), on_step=progress)
    plot_loss_curve(res.log_rows, out / "loss.png")
    print(f"checkpoint {res.checkpoint}")
    return EXIT_OK


def _write_report(out: Path | None, reports: list[M.MetricReport]) -> None:
    print(M.format_table(reports))
    print(M.format_lines(reports))
    if out is None:
        return
    from .plotting import plot_pr_curves

    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(M.format_table(reports) + "\n")
    (out / "metrics.txt").write_text(M.format_lines(reports) + "\n")
    for r in reports:
        M.write_pr_csv(out / f"pr_{r.name}.csv", r)
    plot_pr_curves(reports, out / "pr.png")


def cmd_eval(args) -> int:
    from .trainer import evaluate_checkpoint, load_checkpoint

    ckpt = args.checkpoint
    if not Path(ckpt).is_file():
        raise DataError(f"missing checkpoint: {ckpt}")
    _, cfg, _, _ = load_checkpoint(ckpt)
    if not all(g is not None for _, _, g in read_manifest(args.data)):
        raise DataError(f"{args.data}: eval needs ground truth for every sample")
    samples = load_manifest(args.data, cfg.model.input_size)
    rep = evaluate_checkpoint(ckpt, samples, name=args.name)
    _write_report(Path(args.out) if args.out else None, [rep])
    return EXIT_OK


def cmd_infer(args) -> int:
    from .trainer import load_checkpoint, predict

    if not Path(args.checkpoint).is_file():
        raise DataError(f"missing checkpoint: {args.checkpoint}")
    model, cfg, _, _ = load_checkpoint(args.checkpoint)
    rows = read_manifest(args.data)
    samples = load_manifest(args.data, cfg.model.input_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preds = predict(model, samples)
    for s, p in zip(samples, preds):
        pnm.write(out / f"{s.name}.pgm", p)
    print(f"wrote {len(preds)} maps to {out}")
    if all(g is not None for _, _, g in rows):
        acc = M.MetricAccumulator(args.name)
        for s, p in zip(samples, preds):
            acc.add(p, s.gt[0])
        _write_report(out, [acc.report()])
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .plotting import plot_ablation
    from .trainer import ablate, format_ablation, parse_variant, summarize_ablation

    cfg, paths = _resolve(args)
    variants = [v for v in args.variants.split(";") if v.strip()] if args.variants else []
    for v in variants:
        parse_variant(v)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not variants:
        print("no variants; nothing to do")
        return EXIT_OK
    train_s = load_manifest(_need(paths, "data"), cfg.model.input_size)
    test_s = load_manifest(_need(paths, "test_data"), cfg.model.input_size)
    rows = ablate(variants, cfg, train_s, test_s, seeds)
    summary = summarize_ablation(rows)
    print(format_ablation(summary))
    lines = "\n".join(f"{v} {k} {val:.6f}" for v, m in summary.items() for k, val in m.items())
    print(lines)
    out = Path(paths.get("out") or "runs/ablate")
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(format_ablation(summary) + "\n")
    (out / "ablation_lines.txt").write_text(lines + "\n")
    with open(out / "ablation_runs.txt", "w") as fh:
        for r in rows:
            vals = " ".join(f"{k}={v:.6f}" for k, v in r.report.scalars().items())
            fh.write(f"{r.variant} seed={r.seed} {vals} final_loss={r.final_loss:.6f}\n")
    plot_ablation(summary, out / "ablation.png")
    return EXIT_OK


def _image_files(d: Path) -> dict[str, Path]:
    if not d.is_dir():
        raise DataError(f"missing directory: {d}")
    return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() in (".pgm", ".ppm")}


def cmd_metrics(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    preds, gts = _image_files(pred_dir), _image_files(gt_dir)
    common = sorted(set(preds) & set(gts))
    if not common:
        raise DataError(f"no matching file names between {pred_dir} and {gt_dir}")
    missing = sorted(set(gts) - set(preds))
    if missing:
        log.warning("%d ground-truth maps have no prediction (e.g. %s)", len(missing), missing[0])
    acc = M.MetricAccumulator(args.name)
    for stem in common:
        p = pnm.read_normalized(preds[stem])
        g = pnm.read_normalized(gts[stem])
        if p.ndim == 3:
            p = p.mean(axis=2)
        if g.ndim == 3:
            g = g.mean(axis=2)
        if p.shape != g.shape:
            raise DataError(f"{stem}: prediction {p.shape} vs ground truth {g.shape}")
        acc.add(p, (g >= 0.5).astype(np.float64))
    _write_report(Path(args.out) if args.out else None, [acc.report()])
    return EXIT_OK


def cmd_synth(args) -> int:
    samples = synth_generate(args.seed, args.n, args.size)
    manifest = write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples; manifest {manifest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tritrans", description="TriTransNet RGB-D saliency toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model")
    _add_config_args(t)
    t.add_argument("--data", help="training manifest")
    t.add_argument("--out", help="output directory (default runs/train)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--log-every", type=int, default=10)
    t.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a manifest")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.add_argument("--name", default="dataset")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="write saliency maps for a manifest")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--name", default="dataset")
    i.set_defaults(func=cmd_infer)

    a = sub.add_parser("ablate", help="train and compare architecture variants")
    _add_config_args(a)
    a.add_argument("--data", help="training manifest")
    a.add_argument("--test-data", dest="test_data", help="test manifest")
    a.add_argument("--out")
    a.add_argument("--variants", default="",
                   help="';'-separated variants, each 'base' or comma-joined key=value over ttem,k,decoder,fusion")
    a.add_argument("--seeds", default="0")
    a.set_defaults(func=cmd_ablate)

    m = sub.add_parser("metrics", help="score prediction maps against ground truth")
    m.add_argument("--pred", required=True)
    m.add_argument("--gt", required=True)
    m.add_argument("--out")
    m.add_argument("--name", default="dataset")
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("synth", help="write a synthetic RGB-D dataset")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, pnm.PnmError, ShapeError, ContainerError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
