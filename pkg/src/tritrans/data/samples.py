"""RGB-D samples: loading, resizing, augmentation, manifests."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..tensor.ops import bilinear_matrix
from . import pnm


class DataError(RuntimeError):
    """Missing or unreadable dataset files."""


@dataclass
class Sample:
    rgb: np.ndarray    # [3,H,W] in [0,1]
    depth: np.ndarray  # [1,H,W] in [0,1]
    gt: np.ndarray     # [1,H,W] in {0,1}
    name: str = ""

    @property
    def size(self) -> tuple[int, int]:
        return self.gt.shape[-2:]

    def copy(self) -> "Sample":
        return Sample(self.rgb.copy(), self.depth.copy(), self.gt.copy(), self.name)


def resize_bilinear(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize the last two axes (half-pixel centres)."""
    H, W = img.shape[-2:]
    if (H, W) == tuple(size):
        return img
    mh = bilinear_matrix(H, size[0])
    mw = bilinear_matrix(W, size[1])
    return (mh @ img.astype(np.float64) @ mw.T).astype(img.dtype)


def resize_nearest(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    H, W = img.shape[-2:]
    rows = np.minimum(((np.arange(size[0]) + 0.5) * H / size[0]).astype(int), H - 1)
    cols = np.minimum(((np.arange(size[1]) + 0.5) * W / size[1]).astype(int), W - 1)
    return img[..., rows[:, None], cols[None, :]]


def binarize(gt: np.ndarray) -> np.ndarray:
    return (gt >= 0.5).astype(np.float32)


def load_sample(rgb_path, depth_path, gt_path=None, target_size: int | tuple[int, int] | None = None) -> Sample:
    if isinstance(target_size, int):
        target_size = (target_size, target_size)
    for p in (rgb_path, depth_path, gt_path):
        if p is not None and not Path(p).is_file():
            raise DataError(f"missing file: {p}")
    rgb = pnm.read_normalized(rgb_path)
    if rgb.ndim == 2:
        rgb = np.repeat(rgb[..., None], 3, axis=2)
    rgb = rgb.transpose(2, 0, 1)
    depth = pnm.read_normalized(depth_path)
    if depth.ndim == 3:
        depth = depth.mean(axis=2)
    depth = depth[None]
    if gt_path is not None:
        gt = pnm.read_normalized(gt_path)
        if gt.ndim == 3:
            gt = gt.mean(axis=2)
        gt = gt[None]
    else:
        gt = np.zeros_like(depth)
    size = target_size or rgb.shape[-2:]
    return Sample(
        resize_bilinear(rgb, size),
        resize_bilinear(depth, size),
        binarize(resize_nearest(gt, size)),
        Path(rgb_path).stem,
    )


def save_sample(sample: Sample, directory, stem: str) -> tuple[str, str, str]:
    """Write rgb/depth/gt as 8-bit PPM/PGM; returns paths relative to ``directory``."""
    d = Path(directory)
    for sub in ("rgb", "depth", "gt"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    rel = (f"rgb/{stem}.ppm", f"depth/{stem}.pgm", f"gt/{stem}.pgm")
    pnm.write(d / rel[0], sample.rgb.transpose(1, 2, 0))
    pnm.write(d / rel[1], sample.depth[0])
    pnm.write(d / rel[2], sample.gt[0])
    return rel


# -- augmentation ------------------------------------------------------------

def flip(sample: Sample) -> Sample:
    return Sample(sample.rgb[..., ::-1].copy(), sample.depth[..., ::-1].copy(),
                  sample.gt[..., ::-1].copy(), sample.name)


def rotate(sample: Sample, quarter_turns: int) -> Sample:
    r = lambda a: np.ascontiguousarray(np.rot90(a, quarter_turns, axes=(-2, -1)))  # noqa: E731
    return Sample(r(sample.rgb), r(sample.depth), r(sample.gt), sample.name)


def crop_resize(sample: Sample, box: tuple[int, int, int, int], size: tuple[int, int]) -> Sample:
    """Crop rows [top, bottom) x cols [left, right), then resize back to ``size``."""
    t, b, l, r = box
    c = lambda a: a[..., t:b, l:r]  # noqa: E731
    return Sample(
        resize_bilinear(c(sample.rgb), size),
        resize_bilinear(c(sample.depth), size),
        binarize(resize_nearest(c(sample.gt), size)),
        sample.name,
    )


def augment(sample: Sample, rng: np.random.Generator, max_crop: float = 0.1) -> Sample:
    """Random horizontal flip, quarter-turn rotation and border crop, applied
    identically to all three maps. Output keeps the input size."""
    H, W = sample.size
    out = sample
    if rng.random() < 0.5:
        out = flip(out)
    out = rotate(out, int(rng.integers(4)))
    h, w = out.size
    cuts = rng.uniform(0.0, max_crop, size=4)
    top, bottom = int(cuts[0] * h), h - int(cuts[1] * h)
    left, right = int(cuts[2] * w), w - int(cuts[3] * w)
    return crop_resize(out, (top, bottom, left, right), (H, W))


# -- manifests and batching --------------------------------------------------

def read_manifest(path) -> list[tuple[Path, Path, Path | None]]:
    """Lines of ``rgb<TAB>depth[<TAB>gt]``, relative to the manifest's folder."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest"
    if not path.is_file():
        raise DataError(f"missing manifest: {path}")
    base = path.parent
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise DataError(f"{path}:{lineno}: expected 2 or 3 tab-separated paths")
        rgb, depth = base / parts[0], base / parts[1]
        gt = base / parts[2] if len(parts) == 3 and parts[2] else None
        rows.append((rgb, depth, gt))
    return rows


def write_manifest(path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write("\t".join(str(p) for p in row) + "\n")


def load_manifest(path, size: int | None = None) -> list[Sample]:
    return [load_sample(r, d, g, size) for r, d, g in read_manifest(path)]


def stack(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (np.stack([s.rgb for s in samples]).astype(np.float32),
            np.stack([s.depth for s in samples]).astype(np.float32),
            np.stack([s.gt for s in samples]).astype(np.float32))
