"""Saliency metrics: MAE, adaptive F-measure, adaptive E-measure, S-measure, PR curve.

All functions take a prediction ``S`` in [0, 1] and a binary ground truth
``G`` of the same 2-D shape. Dataset values are unweighted means over images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS = np.spacing(1.0)
BETA2 = 0.3
ALPHA = 0.5
N_THRESHOLDS = 256


def _prep(S, G) -> tuple[np.ndarray, np.ndarray]:
    S = np.asarray(S, dtype=np.float64).squeeze()
    G = np.asarray(G).squeeze() > 0.5
    if S.shape != G.shape:
        raise ValueError(f"prediction {S.shape} and ground truth {G.shape} differ in shape")
    return S, G


def mae(S, G) -> float:
    S, G = _prep(S, G)
    # correctly rounded sum keeps the value independent of summation order
    return math.fsum(np.abs(S - G).ravel()) / S.size


def adaptive_threshold(S: np.ndarray) -> float:
    return min(2.0 * float(S.mean()), 1.0 - EPS)


def adaptive_fmeasure(S, G, beta2: float = BETA2) -> float:
    """F_beta of S binarized at twice its mean; NaN when G has no positives."""
    S, G = _prep(S, G)
    if not G.any():
        return float("nan")
    pred = S >= adaptive_threshold(S)
    tp = np.count_nonzero(pred & G)
    if tp == 0:
        return 0.0
    precision = tp / np.count_nonzero(pred)
    recall = tp / np.count_nonzero(G)
    return float((1 + beta2) * precision * recall / (beta2 * precision + recall))


def e_measure(S, G) -> float:
    """Adaptive enhanced-alignment measure.

    An all-background G scores the fraction of predicted background, an
    all-foreground G the fraction of predicted foreground.
    """
    S, G = _prep(S, G)
    pred = (S >= adaptive_threshold(S)).astype(np.float64)
    gt = G.astype(np.float64)
    if not G.any():
        enhanced = 1.0 - pred
    elif G.all():
        enhanced = pred
    else:
        a_p = pred - pred.mean()
        a_g = gt - gt.mean()
        align = 2.0 * a_p * a_g / (a_p * a_p + a_g * a_g + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


# -- S-measure ---------------------------------------------------------------

def _object_score(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    mu = x.mean()
    sigma = x.std(ddof=1) if x.size > 1 else 0.0
    return float(2.0 * mu / (mu * mu + 1.0 + sigma + EPS))


def _s_object(S: np.ndarray, G: np.ndarray) -> float:
    u = G.mean()
    fg = _object_score(S[G])
    bg = _object_score(1.0 - S[~G])
    return float(u * fg + (1 - u) * bg)


def _centroid(G: np.ndarray) -> tuple[int, int]:
    """1-based split point (x, y) at the rounded foreground centroid."""
    h, w = G.shape
    if not G.any():
        return int(np.round(w / 2)) + 1, int(np.round(h / 2)) + 1
    ys, xs = np.nonzero(G)
    return int(np.round(xs.mean())) + 1, int(np.round(ys.mean())) + 1


def _ssim(S: np.ndarray, G: np.ndarray) -> float:
    n = S.size
    x, y = S.mean(), G.mean()
    denom = max(n - 1, 1)
    sx = ((S - x) ** 2).sum() / denom
    sy = ((G - y) ** 2).sum() / denom
    sxy = ((S - x) * (G - y)).sum() / denom
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    return 1.0 if beta == 0 else 0.0


def _s_region(S: np.ndarray, G: np.ndarray) -> float:
    h, w = G.shape
    x, y = _centroid(G)
    x, y = min(x, w), min(y, h)
    g = G.astype(np.float64)
    blocks = [
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    ]
    score = 0.0
    for rs, cs in blocks:
        sb, gb = S[rs, cs], g[rs, cs]
        if sb.size == 0:
            continue
        score += sb.size / (h * w) * _ssim(sb, gb)
    return score


def s_measure(S, G, alpha: float = ALPHA) -> float:
    S, G = _prep(S, G)
    y = G.mean()
    if y == 0:
        return float(1.0 - S.mean())
    if y == 1:
        return float(S.mean())
    sm = alpha * _s_object(S, G) + (1 - alpha) * _s_region(S, G)
    return float(max(sm, 0.0))


# -- PR curve ----------------------------------------------------------------

def thresholds(n: int = N_THRESHOLDS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def pr_curve(S, G, n: int = N_THRESHOLDS) -> np.ndarray:
    """[n, 2] array of (precision, recall) for S >= t over ``thresholds(n)``.

    Precision is 1 when nothing is predicted; recall is 1 when G is empty.
    """
    S, G = _prep(S, G)
    s = S.ravel()
    g = G.ravel()
    t = thresholds(n)
    order = np.sort(s)
    pos_sorted = np.sort(s[g])
    # counts of values >= t
    n_pred = s.size - np.searchsorted(order, t, side="left")
    n_tp = pos_sorted.size - np.searchsorted(pos_sorted, t, side="left")
    n_pos = int(g.sum())
    precision = np.where(n_pred > 0, n_tp / np.maximum(n_pred, 1), 1.0)
    recall = n_tp / n_pos if n_pos else np.ones_like(t)
    return np.stack([precision, recall], axis=1)


# -- aggregation -------------------------------------------------------------

@dataclass
class MetricReport:
    name: str = "dataset"
    S: float = float("nan")
    F: float = float("nan")
    E: float = float("nan")
    MAE: float = float("nan")
    pr: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    n_images: int = 0

    def scalars(self) -> dict[str, float]:
        return {"S": self.S, "F": self.F, "E": self.E, "MAE": self.MAE}


class MetricAccumulator:
    """Per-image scores, reduced by unweighted mean."""

    def __init__(self, name: str = "dataset"):
        self.name = name
        self._s: list[float] = []
        self._f: list[float] = []
        self._e: list[float] = []
        self._mae: list[float] = []
        self._pr: list[np.ndarray] = []

    def add(self, S, G) -> None:
        self._s.append(s_measure(S, G))
        f = adaptive_fmeasure(S, G)
        if not np.isnan(f):
            self._f.append(f)
        self._e.append(e_measure(S, G))
        self._mae.append(mae(S, G))
        self._pr.append(pr_curve(S, G))

    def report(self) -> MetricReport:
        def avg(v):
            return float(np.mean(v)) if v else float("nan")

        pr = np.mean(self._pr, axis=0) if self._pr else np.zeros((0, 2))
        return MetricReport(self.name, avg(self._s), avg(self._f), avg(self._e), avg(self._mae),
                            pr, len(self._mae))


def evaluate_pairs(pairs, name: str = "dataset") -> MetricReport:
    acc = MetricAccumulator(name)
    for S, G in pairs:
        acc.add(S, G)
    return acc.report()


def format_table(reports: list[MetricReport]) -> str:
    lines = [f"{'dataset':<16}{'S':>8}{'F':>8}{'E':>8}{'MAE':>8}{'n':>6}"]
    for r in reports:
        lines.append(f"{r.name:<16}{r.S:>8.4f}{r.F:>8.4f}{r.E:>8.4f}{r.MAE:>8.4f}{r.n_images:>6d}")
    return "\n".join(lines)


def format_lines(reports: list[MetricReport]) -> str:
    """Machine-readable ``dataset metric value`` lines."""
    out = []
    for r in reports:
        for k, v in r.scalars().items():
            out.append(f"{r.name} {k} {v:.6f}")
    return "\n".join(out)


def write_pr_csv(path, report: MetricReport) -> None:
    t = thresholds(len(report.pr))
    with open(path, "w") as fh:
        fh.write("threshold,precision,recall\n")
        for ti, (p, r) in zip(t, report.pr):
            fh.write(f"{ti:.6f},{p:.6f},{r:.6f}\n")
