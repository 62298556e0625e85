"""TriTransNet assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import Backbone
from .config import ModelConfig
from .decoder import Decoder
from .dpm import AddFusion, DepthPurification
from .nn import Module
from .scale_adjust import ScaleAdjust
from .tensor import ShapeError, Tensor, ops
from .ttem import TTEM


@dataclass
class Prediction:
    final_logits: Tensor
    side_logits: list[Tensor]
    aligned: list[Tensor]
    enhanced: list[Tensor]

    @property
    def saliency(self) -> np.ndarray:
        """S_final as a numpy array in (0, 1)."""
        return ops.sigmoid(self.final_logits).data


def _rng(seed: int, part: int) -> np.random.Generator:
    # one stream per component so ablation switches leave other inits untouched
    return np.random.default_rng([seed, part])


class TriTransNet(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        ch = cfg.channels
        self.rgb_encoder = Backbone(ch, rng=_rng(seed, 1))
        self.depth_encoder = Backbone(ch, rng=_rng(seed, 2))
        fuse_rng = _rng(seed, 3)
        if cfg.fusion == "dpm":
            self.fusion = [DepthPurification(c, cfg.reduction, rng=fuse_rng) for c in ch]
        else:
            self.fusion = [AddFusion() for _ in ch]
        lo = cfg.lowest_level
        self.scale = ScaleAdjust(ch[lo - 1:], cfg.ct, rng=_rng(seed, 4))
        self.ttem = (TTEM(cfg.ct, cfg.embed_dim, cfg.layers, cfg.heads, cfg.tokens,
                          cfg.mlp_ratio, rng=_rng(seed, 5)) if cfg.ttem else None)
        self.decoder = Decoder(cfg.k, ch[0], ch[1], cfg.ct, cfg.decoder, rng=_rng(seed, 6))

    def encode(self, rgb: Tensor, depth: Tensor) -> list[Tensor]:
        """Purified features F_1..F_5."""
        if rgb.shape[1] != 3 or depth.shape[1] not in (1, 3) or rgb.shape[-2:] != depth.shape[-2:] \
                or rgb.shape[0] != depth.shape[0]:
            raise ShapeError("tritransnet", rgb.shape, depth.shape,
                             detail="expected rgb [B,3,H,W] and depth [B,1,H,W]")
        if depth.shape[1] == 1:
            depth = ops.expand_channels(depth, 3)
        f_r = self.rgb_encoder(rgb)
        f_d = self.depth_encoder(depth)
        return [fuse(a, b) for fuse, a, b in zip(self.fusion, f_r, f_d)]

    def forward(self, rgb, depth) -> Prediction:
        rgb = rgb if isinstance(rgb, Tensor) else Tensor(rgb)
        depth = depth if isinstance(depth, Tensor) else Tensor(depth)
        fused = self.encode(rgb, depth)
        aligned = self.scale(fused[self.cfg.lowest_level - 1:])
        enhanced = self.ttem(aligned) if self.ttem is not None else aligned
        final, sides = self.decoder(enhanced, fused[1], fused[0], rgb.shape[-2:])
        return Prediction(final, sides, aligned, enhanced)

    def census(self) -> dict[str, int]:
        """Parameter counts per component."""
        def count(mods):
            seen, n = set(), 0
            for m in mods:
                for p in m.parameters():
                    if id(p) not in seen:
                        seen.add(id(p))
                        n += p.size
            return n

        out = {
            "rgb_encoder": count([self.rgb_encoder]),
            "depth_encoder": count([self.depth_encoder]),
            "fusion": count(self.fusion),
            "scale_adjust": count([self.scale]),
            "ttem_shared": count([self.ttem]) if self.ttem is not None else 0,
            "decoder_per_stream": count(self.decoder.streams[:1]),
            "decoder_total": count([self.decoder]),
        }
        out["total"] = self.num_parameters()
        return out
