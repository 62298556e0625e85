"""Synthetic RGB-D saliency scenes for desk-scale runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .samples import Sample, save_sample, write_manifest

MIN_COVER, MAX_COVER = 0.02, 0.6


def _shape_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = rng.uniform(0.2, 0.8, 2) * size
    ry, rx = rng.uniform(0.08, 0.3, 2) * size
    if rng.random() < 0.5:
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _color_away_from(rng: np.random.Generator, ref: np.ndarray, min_dist: float = 0.35) -> np.ndarray:
    while True:
        c = rng.random(3)
        if np.linalg.norm(c - ref) >= min_dist:
            return c


def synth_sample(rng: np.random.Generator, size: int) -> Sample:
    """1-3 salient shapes, RGB-only distractors, objects nearer in depth."""
    while True:
        masks = [_shape_mask(rng, size) for _ in range(int(rng.integers(1, 4)))]
        gt = np.logical_or.reduce(masks)
        if MIN_COVER <= gt.mean() <= MAX_COVER:
            break
    bg = rng.random(3)
    obj = _color_away_from(rng, bg)
    rgb = np.broadcast_to(bg[:, None, None], (3, size, size)).copy()
    for _ in range(int(rng.integers(0, 3))):
        m = _shape_mask(rng, size)
        rgb[:, m] = _color_away_from(rng, bg, 0.2)[:, None]
    rgb[:, gt] = obj[:, None]
    rgb += rng.normal(0, 0.05, rgb.shape)

    ramp = np.linspace(0.0, 1.0, size)[:, None]
    depth = 0.6 + 0.3 * ramp * np.ones((size, size))
    depth[gt] = rng.uniform(0.15, 0.4)
    depth += rng.normal(0, 0.03, depth.shape)
    return Sample(
        np.clip(rgb, 0, 1).astype(np.float32),
        np.clip(depth, 0, 1)[None].astype(np.float32),
        gt[None].astype(np.float32),
    )


def synth_generate(seed: int, n: int, size: int) -> list[Sample]:
    if size % 32:
        raise ValueError(f"size must be divisible by 32, got {size}")
    out = []
    for i in range(n):
        s = synth_sample(np.random.default_rng([seed, i]), size)
        s.name = f"{i:05d}"
        out.append(s)
    return out


def write_dataset(samples: list[Sample], directory) -> Path:
    """Write samples as PPM/PGM plus a ``manifest`` file; returns its path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = [save_sample(s, d, s.name or f"{i:05d}") for i, s in enumerate(samples)]
    manifest = d / "manifest"
    write_manifest(manifest, rows)
    return manifest
