"""Acceptance suite: one verdict line per criterion (see the terminal summary)."""

import os
import time
import zlib
from dataclasses import replace

import numpy as np

from tritrans.config import ModelConfig, preset
from tritrans.data import load_manifest, stack, synth_generate
from tritrans.decoder import fuse_final
from tritrans.dpm import DepthPurification
from tritrans.loss import ppa_loss, total_loss
from tritrans.metrics import (
    adaptive_fmeasure,
    e_measure,
    evaluate_pairs,
    mae,
    pr_curve,
    s_measure,
    thresholds,
)
from tritrans.model import TriTransNet
from tritrans.tensor import Tensor, grad_check, no_grad
from tritrans.trainer import ablate, evaluate, summarize_ablation, train
from tritrans.ttem import TTEM

import oracles
from primitives import PRIMITIVES

# ablation protocol for criterion 9 (desk scale, shortened schedule)
ABLATION_EPOCHS = 15
ABLATION_DECAY_EVERY = 10
ABLATION_SEEDS = range(5)


def test_criterion_1_gradients(accept):
    t0 = time.perf_counter()
    worst_prim, worst_name = 0.0, ""
    for name, make in sorted(PRIMITIVES.items()):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        f, inputs = make(rng)
        err = grad_check(f, inputs, h=1e-4, n_samples=100, rng=rng)
        if err >= worst_prim:
            worst_prim, worst_name = err, name

    model = TriTransNet(preset("desk").model, seed=0).astype(np.float64)
    rgb, depth, gt = (a.astype(np.float64) for a in stack(synth_generate(0, 2, 64)))

    def loss():
        p = model(rgb, depth)
        return total_loss(p.final_logits, p.side_logits, gt)

    full = grad_check(loss, model.parameters(), h=1e-4, n_samples=32, rng=np.random.default_rng(1))
    elapsed = time.perf_counter() - t0
    accept("1", "gradient correctness",
           worst_prim < 1e-4 and full < 1e-3 and elapsed < 120,
           f"worst primitive {worst_name} {worst_prim:.2e} (<1e-4), full desk loss {full:.2e} (<1e-3), "
           f"{len(PRIMITIVES)} primitives, {elapsed:.1f}s (<120s)")


def test_criterion_2_purify_algebra(accept):
    rng = np.random.default_rng(2)
    dpm = DepthPurification(8, 4, rng=rng)
    zero_ok = pinned_ok = 0
    for _ in range(100):
        b, h, w = rng.integers(1, 3), rng.integers(3, 10), rng.integers(3, 10)
        f_r = rng.normal(size=(b, 8, h, w)).astype(np.float32)
        f_d = rng.normal(size=(b, 8, h, w)).astype(np.float32)
        dpm.pin_masks = False
        zero_ok += np.array_equal(dpm(Tensor(f_r), Tensor(np.zeros_like(f_d))).data, f_r)
        dpm.pin_masks = True
        pinned_ok += np.array_equal(dpm(Tensor(f_r), Tensor(f_d)).data, f_d + f_r)
    dpm.pin_masks = False
    accept("2", "purify algebra", zero_ok == 100 and pinned_ok == 100,
           f"zero depth exact {zero_ok}/100, unit masks exact {pinned_ok}/100")


def test_criterion_3_weight_sharing(accept):
    # (a) fixed token count: k=2,3,4 at inputs 128,64,32 all align to 8x8
    census = {k: TriTransNet(ModelConfig(k=k, input_size=s)).census() for k, s in ((2, 128), (3, 64), (4, 32))}
    shared = {k: c["ttem_shared"] for k, c in census.items()}
    per_stream = {k: c["decoder_per_stream"] for k, c in census.items()}
    a_ok = len(set(shared.values())) == 1
    # (b) identical streams
    ttem = TTEM(16, 32, 2, 4, 64, rng=np.random.default_rng(0))
    f = np.random.default_rng(1).normal(size=(2, 16, 8, 8)).astype(np.float32)
    outs = ttem([Tensor(f.copy()) for _ in range(3)])
    b_ok = len({o.data.tobytes() for o in outs}) == 1
    # (c) permutation equivariance with PE zeroed
    t64 = TTEM(16, 32, 2, 4, 64, rng=np.random.default_rng(3)).astype(np.float64)
    t64.pos.data[...] = 0
    z = np.random.default_rng(4).normal(size=(2, 64, 32))
    perm = np.random.default_rng(5).permutation(64)
    with no_grad():
        dev = np.abs(t64.encode(Tensor(z[:, perm])).data - t64.encode(Tensor(z)).data[:, perm]).max()
    c_ok = dev < 1e-5
    accept("3", "weight sharing",
           a_ok and b_ok and c_ok,
           f"(a) ttem census {shared} per-stream decoder {per_stream}; (b) identical={b_ok}; "
           f"(c) max deviation {dev:.1e} (<1e-5)")


def _shapes(cfg: ModelConfig, batch=1):
    model = TriTransNet(cfg, seed=0)
    seen = {}
    embed = model.ttem.embed

    def spy(f):
        z = embed(f)
        seen["tokens"] = z.shape
        return z

    model.ttem.embed = spy
    s = cfg.input_size
    with no_grad():
        p = model(np.zeros((batch, 3, s, s), np.float32), np.zeros((batch, 1, s, s), np.float32))
    outs = [p.final_logits.shape] + [x.shape for x in p.side_logits]
    return seen["tokens"], outs, [a.shape for a in p.aligned]


def test_criterion_4_shape_pipeline(accept):
    details, ok = [], True
    tok, outs, _ = _shapes(preset("paper").model)
    good = tok == (1, 1024, 768) and all(o == (1, 1, 256, 256) for o in outs) and len(outs) == 4
    ok &= good
    details.append(f"paper tokens {tok[1]}x{tok[2]} outputs {outs[0][-1]}^2 x{len(outs)}")
    for size in (64, 96, 128):
        tok, outs, aligned = _shapes(replace(preset("desk").model, input_size=size))
        n = (size // 8) ** 2
        good = (tok == (1, n, 32) and all(o == (1, 1, size, size) for o in outs)
                and all(a == (1, 16, size // 8, size // 8) for a in aligned))
        ok &= good
        details.append(f"desk {size}: N={tok[1]} {'ok' if good else 'BAD'}")
    accept("4", "shape pipeline", ok, "; ".join(details))


def test_criterion_5_sum_before_sigmoid(accept):
    rng = np.random.default_rng(5)
    logits = [np.full((1, 1, 4, 4), 6.0), rng.normal(scale=3, size=(1, 1, 4, 4)), np.full((1, 1, 4, 4), -2.0)]
    _, s = fuse_final([Tensor(x) for x in logits])
    oracle = np.vectorize(oracles.sigmoid)(logits[0] + logits[1] + logits[2])
    mean_of_sig = np.mean([np.vectorize(oracles.sigmoid)(x) for x in logits], axis=0)
    dev = np.abs(s.data - oracle).max()
    gap = np.abs(s.data - mean_of_sig).max()
    accept("5", "sum before sigmoid", dev < 1e-7 and gap > 1e-3,
           f"vs oracle {dev:.1e} (<1e-7), distance from mean of sigmoids {gap:.3f}")


def test_criterion_6_loss_oracle(accept):
    g = (np.add.outer(np.arange(8), np.arange(8)) % 2).astype(np.float64)[None, None]
    x0 = Tensor(np.zeros_like(g))
    dev = abs(ppa_loss(x0, g).item() - oracles.ppa_loss(np.zeros_like(g), g))
    rng = np.random.default_rng(6)
    heads = [Tensor(rng.normal(size=g.shape)) for _ in range(4)]
    parts = sum(ppa_loss(h, g).item() for h in heads)
    add_dev = abs(total_loss(heads[0], heads[1:], g).item() - parts)
    accept("6", "loss oracle", dev < 1e-6 and add_dev < 1e-6,
           f"checkerboard vs loop {dev:.1e} (<1e-6), 1+3 term additivity {add_dev:.1e} (<1e-6)")


def test_criterion_7_metric_oracles(accept):
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(20):
        n = 4 if i % 2 else 8
        S = rng.random((n, n))
        G = (rng.random((n, n)) > 0.6).astype(float)
        G[0, 0] = 1.0
        diffs = [
            abs(mae(S, G) - oracles.mae(S, G)),
            abs(adaptive_fmeasure(S, G) - oracles.fmeasure(S, G)),
            abs(e_measure(S, G) - oracles.emeasure(S, G)),
            abs(s_measure(S, G) - oracles.smeasure(S, G)),
        ]
        pr = pr_curve(S, G)
        for j, t in enumerate(thresholds()[::15]):
            p, r = oracles.pr_counts(S, G, t)
            diffs += [abs(pr[j * 15, 0] - p), abs(pr[j * 15, 1] - r)]
        worst = max(worst, max(diffs))
    gts = [(rng.random((8, 8)) > 0.5).astype(float) for _ in range(3)]
    rep = evaluate_pairs([(g, g) for g in gts])
    ident = abs(rep.MAE) <= 1e-6 and abs(rep.F - 1) <= 1e-6 and abs(rep.S - 1) <= 1e-6
    accept("7", "metric oracles", worst < 1e-6 and ident,
           f"max deviation {worst:.1e} (<1e-6); GT as prediction MAE {rep.MAE:.1e} F {rep.F:.6f} S {rep.S:.6f}")


def test_criterion_8_overfit(accept):
    cfg = preset("desk")
    samples = synth_generate(0, 8, 64)
    t0 = time.perf_counter()
    res = train(cfg, samples)
    elapsed = time.perf_counter() - t0
    rep = evaluate(res.model, samples)
    accept("8", "overfit", res.steps <= 300 and rep.MAE < 0.05 and rep.S > 0.9 and elapsed < 600,
           f"{res.steps} steps, train MAE {rep.MAE:.4f} (<0.05), S {rep.S:.4f} (>0.9), {elapsed:.0f}s (<600s)")


def test_criterion_9_ablation_direction(accept):
    base = replace(preset("desk"), epochs=ABLATION_EPOCHS, lr_decay_every=ABLATION_DECAY_EVERY)
    train_s, test_s = synth_generate(100, 64, 64), synth_generate(200, 16, 64)
    rows = ablate(["base", "ttem=off", "decoder=single", "fusion=add"], base, train_s, test_s, ABLATION_SEEDS)
    m = {v: s["MAE"] for v, s in summarize_ablation(rows).items()}
    checks = {
        "ttem on<=off": m["base"] <= m["ttem=off"],
        "three<=single": m["base"] <= m["decoder=single"],
        "dpm<=add": m["base"] <= m["fusion=add"],
    }
    accept("9", "ablation direction", all(checks.values()),
           " ".join(f"{k}:{'yes' if v else 'NO'}" for k, v in checks.items())
           + " | mean test MAE " + " ".join(f"{v}={x:.4f}" for v, x in m.items()))


def test_criterion_10_determinism(accept, tmp_path):
    cfg = replace(preset("desk"), epochs=3)
    samples = synth_generate(3, 8, 64)
    for d in ("a", "b"):
        train(cfg, samples, tmp_path / d)
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("loss.log", "checkpoint.ttn")}
    accept("10", "determinism", all(same.values()),
           ", ".join(f"{k} {'bitwise equal' if v else 'DIFFERS'}" for k, v in same.items()))


FULLSCALE = os.environ.get("TRITRANS_FULLSCALE_MANIFEST")


def test_criterion_11_fullscale_hook(accept, tmp_path):
    if not FULLSCALE:
        accept.skip("11", "full-scale hook", "set TRITRANS_FULLSCALE_MANIFEST to a converted NJU2K+NLPR manifest")
    cfg = replace(preset("paper"), epochs=1)
    samples = load_manifest(FULLSCALE, cfg.model.input_size)
    res = train(cfg, samples, tmp_path)
    finite = all(np.isfinite(res.losses))
    accept("11", "full-scale hook", finite and res.steps > 0,
           f"{res.steps} steps over {len(samples)} samples, final loss {res.losses[-1]:.4f}")
