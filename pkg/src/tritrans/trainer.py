"""Adam optimisation, checkpointing, evaluation and ablation runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .config import ConfigError, TrainConfig, apply_overrides, from_dict, to_dict
from .data.samples import Sample, augment, stack
from .loss import total_loss
from .metrics import MetricAccumulator, MetricReport
from .model import TriTransNet
from .tensor import load_bundle, no_grad, ops, save_bundle

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class NumericalError(ArithmeticError):
    """NaN/Inf loss or gradient."""


class CheckpointError(ValueError):
    """Checkpoint does not match the requested model or lacks state."""


@dataclass
class OptimState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **kw) -> "OptimState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, **kw)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None], state: OptimState) -> None:
    """Bias-corrected Adam update, in place. Missing gradients count as zero."""
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, model: TriTransNet, cfg: TrainConfig, state: OptimState | None = None,
                    progress: dict | None = None) -> None:
    sections = {f"param/{k}": v for k, v in model.state_dict().items()}
    meta = {"version": CHECKPOINT_VERSION, "config": to_dict(cfg), "progress": progress or {}}
    if state is not None:
        sections.update({f"adam_m/{k}": v for k, v in state.m.items()})
        sections.update({f"adam_v/{k}": v for k, v in state.v.items()})
        meta["optim"] = {"step": state.step}
    save_bundle(path, sections, meta)


def load_checkpoint(path, cfg: TrainConfig | None = None):
    """Return (model, config, optimiser state or None, progress dict).

    If ``cfg`` is given its model section must match the checkpoint's.
    """
    sections, meta = load_bundle(path)
    saved = from_dict(meta["config"])
    if cfg is not None and cfg.model != saved.model:
        diff = {k: (getattr(saved.model, k), getattr(cfg.model, k))
                for k in vars(saved.model) if getattr(saved.model, k) != getattr(cfg.model, k)}
        raise CheckpointError(f"checkpoint {path} was built with a different model config: {diff}")
    use = cfg or saved
    model = TriTransNet(use.model, seed=use.seed)
    params = {k[len("param/"):]: v for k, v in sections.items() if k.startswith("param/")}
    try:
        model.load_state_dict(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} does not fit the model: {exc}") from None
    state = None
    if "optim" in meta:
        state = OptimState(
            {k[len("adam_m/"):]: v for k, v in sections.items() if k.startswith("adam_m/")},
            {k[len("adam_v/"):]: v for k, v in sections.items() if k.startswith("adam_v/")},
            step=meta["optim"]["step"], lr=use.lr, beta1=use.beta1, beta2=use.beta2, eps=use.adam_eps,
        )
    return model, use, state, meta.get("progress", {})


# -- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    model: TriTransNet
    losses: list[float] = field(default_factory=list)
    log_rows: list[tuple[int, int, float, float]] = field(default_factory=list)
    checkpoint: Path | None = None
    steps: int = 0


def compute_loss(model: TriTransNet, batch: list[Sample], cfg: TrainConfig):
    rgb, depth, gt = stack(batch)
    pred = model(rgb, depth)
    return total_loss(pred.final_logits, pred.side_logits, gt,
                      window=cfg.loss_window, gain=cfg.loss_gain, smooth=cfg.loss_smooth)


def _batches(cfg: TrainConfig, n: int, epoch: int) -> list[np.ndarray]:
    order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(n)
    return [order[i:i + cfg.batch] for i in range(0, n, cfg.batch)]


def train(
    cfg: TrainConfig,
    samples: list[Sample],
    out_dir=None,
    resume=None,
    on_step: Callable[[int, int, float, float], None] | None = None,
) -> TrainResult:
    """Train from scratch (or from ``resume``) and return the final model.

    With ``out_dir`` set, ``loss.log`` receives ``step epoch loss lr`` lines and
    ``checkpoint.ttn`` is rewritten every ``ckpt_every`` epochs and at the end.
    """
    cfg.validate()
    if not samples:
        raise ValueError("no training samples")
    size = cfg.model.input_size
    for s in samples:
        if s.size != (size, size):
            raise ValueError(f"sample {s.name!r} is {s.size}, model expects {size}x{size}")

    start_epoch, start_batch = 0, 0
    if resume is not None:
        model, _, state, progress = load_checkpoint(resume, cfg)
        if state is None:
            raise CheckpointError(f"{resume} has no optimiser state")
        start_epoch = progress.get("epoch", 0)
        start_batch = progress.get("batch", 0)
    else:
        model = TriTransNet(cfg.model, seed=cfg.seed)
        state = None
    params = dict(model.named_parameters())
    if state is None:
        state = OptimState.for_params({k: p.data for k, p in params.items()},
                                      lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)

    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_fh = open(out / "loss.log", "a" if resume is not None else "w")
    ckpt_path = out / "checkpoint.ttn" if out is not None else None
    result = TrainResult(model, checkpoint=ckpt_path)

    def checkpoint(epoch: int, batch: int) -> None:
        if ckpt_path is not None:
            save_checkpoint(ckpt_path, model, cfg, state, {"epoch": epoch, "batch": batch})

    try:
        done = False
        for epoch in range(start_epoch, cfg.epochs):
            state.lr = cfg.lr_at(epoch)
            batches = _batches(cfg, len(samples), epoch)
            first = start_batch if epoch == start_epoch else 0
            for bi in range(first, len(batches)):
                idx = batches[bi]
                if cfg.augment:
                    batch = [augment(samples[i], np.random.default_rng([cfg.seed, 2, epoch, int(i)])) for i in idx]
                else:
                    batch = [samples[i] for i in idx]
                model.zero_grad()
                loss = compute_loss(model, batch, cfg)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericalError(f"loss became {value} at step {state.step + 1} (epoch {epoch})")
                loss.backward()
                adam_step({k: p.data for k, p in params.items()}, {k: p.grad for k, p in params.items()}, state)
                row = (state.step, epoch, value, state.lr)
                result.losses.append(value)
                result.log_rows.append(row)
                if log_fh is not None:
                    log_fh.write(f"{row[0]} {row[1]} {row[2]!r} {row[3]!r}\n")
                    log_fh.flush()
                if on_step is not None:
                    on_step(*row)
                if cfg.max_steps and state.step >= cfg.max_steps:
                    nxt = (epoch, bi + 1) if bi + 1 < len(batches) else (epoch + 1, 0)
                    checkpoint(*nxt)
                    done = True
                    break
            if done:
                break
            if (epoch + 1) % cfg.ckpt_every == 0 or epoch + 1 == cfg.epochs:
                checkpoint(epoch + 1, 0)
    finally:
        if log_fh is not None:
            log_fh.close()
    result.steps = state.step
    return result


def read_loss_log(path) -> list[tuple[int, int, float, float]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        s, e, loss, lr = line.split()
        rows.append((int(s), int(e), float(loss), float(lr)))
    return rows


# -- inference and evaluation ------------------------------------------------

def predict(model: TriTransNet, samples: list[Sample], batch: int = 8) -> list[np.ndarray]:
    """S_final maps [H,W] for each sample."""
    out = []
    with no_grad():
        for i in range(0, len(samples), batch):
            rgb, depth, _ = stack(samples[i:i + batch])
            logits = model(rgb, depth).final_logits
            out.extend(ops.sigmoid(logits).data[:, 0])
    return out


def evaluate(model: TriTransNet, samples: list[Sample], name: str = "dataset") -> MetricReport:
    acc = MetricAccumulator(name)
    for pred, s in zip(predict(model, samples), samples):
        acc.add(pred, s.gt[0])
    return acc.report()


def evaluate_checkpoint(path, samples: list[Sample], name: str = "dataset") -> MetricReport:
    model, _, _, _ = load_checkpoint(path)
    size = model.cfg.input_size
    for s in samples:
        if s.size != (size, size):
            raise CheckpointError(f"sample {s.name!r} is {s.size}, checkpoint expects {size}x{size}")
    return evaluate(model, samples, name)


# -- ablation ----------------------------------------------------------------

ABLATION_KEYS = ("ttem", "k", "decoder", "fusion")


def parse_variant(spec: str) -> dict[str, str]:
    """``"ttem=off,k=2"`` -> ``{"ttem": "off", "k": "2"}``; ``"base"`` -> ``{}``."""
    spec = spec.strip()
    if spec in ("", "base"):
        return {}
    out = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"variant entry {part!r} is not key=value")
        key, val = (s.strip() for s in part.split("=", 1))
        if key not in ABLATION_KEYS:
            raise ConfigError(f"unknown variant key {key!r}; allowed: {ABLATION_KEYS}")
        out[key] = val
    return out


@dataclass
class AblationRow:
    variant: str
    seed: int
    report: MetricReport
    final_loss: float


def ablate(
    variants: Iterable[str],
    base: TrainConfig,
    train_samples: list[Sample],
    test_samples: list[Sample],
    seeds: Iterable[int] = (0,),
) -> list[AblationRow]:
    """Train every (variant, seed) pair and score it on ``test_samples``."""
    variants = list(variants)
    configs = {v: apply_overrides(base, parse_variant(v)).validate() for v in variants}
    rows = []
    for v in variants:
        for seed in seeds:
            cfg = replace(configs[v], seed=seed)
            log.info("ablation %s seed %d", v, seed)
            res = train(cfg, train_samples)
            rep = evaluate(res.model, test_samples, name=v)
            rows.append(AblationRow(v, seed, rep, res.losses[-1] if res.losses else float("nan")))
    return rows


def summarize_ablation(rows: list[AblationRow]) -> dict[str, dict[str, float]]:
    """Mean of each metric over seeds, keyed by variant (input order kept)."""
    out: dict[str, dict[str, list[float]]] = {}
    for r in rows:
        d = out.setdefault(r.variant, {"S": [], "F": [], "E": [], "MAE": []})
        for k, v in r.report.scalars().items():
            d[k].append(v)
    return {v: {k: float(np.mean(vals)) for k, vals in d.items()} for v, d in out.items()}


def format_ablation(summary: dict[str, dict[str, float]]) -> str:
    lines = [f"{'variant':<24}{'S':>8}{'F':>8}{'E':>8}{'MAE':>8}"]
    for v, m in summary.items():
        lines.append(f"{v:<24}{m['S']:>8.4f}{m['F']:>8.4f}{m['E']:>8.4f}{m['MAE']:>8.4f}")
    return "\n".join(lines)
