"""Geometric, semantic and meteorological encoders fused by FiLM.

Tensors are batch-first: spatial inputs are (B, 1, H, W), the met matrix is
(B, T, N) and the prediction is (B, 1, H, W) in standardized UTCI units.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import SurrogateConfig


def film_modulate(z: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """gamma * z + beta, per channel and uniform over space.

    ``z`` is (C, H, W) or (B, C, H, W); ``gamma`` and ``beta`` are (C,) or (B, C).
    """
    c = z.shape[-3]
    if gamma.shape[-1] != c or beta.shape[-1] != c:
        raise ValueError(f"FiLM channel mismatch: features have {c}, "
                         f"gamma {gamma.shape[-1]}, beta {beta.shape[-1]}")
    return gamma[..., None, None] * z + beta[..., None, None]


def _conv3(cin, cout, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode="replicate")


def _resize(x, size):
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class SelfAttentionBlock(nn.Module):
    """Pre-norm multi-head self-attention plus a GELU MLP, both residual."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(width)
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 2 * width), nn.GELU(), nn.Linear(2 * width, width))

    def forward(self, x):
        b, n, w = x.shape
        h = self.heads
        q, k, v = self.qkv(self.norm1(x)).reshape(b, n, 3, h, w // h).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(w // h), dim=-1)
        x = x + self.out((att @ v).transpose(1, 2).reshape(b, n, w))
        return x + self.mlp(self.norm2(x))


class GeometricEncoder(nn.Module):
    """nDSM -> stem (1->3) -> backbone at H/P -> 1x1 to C -> bilinear upsample."""

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        self.kind = cfg.geo_backbone
        self.patch = cfg.patch
        self.stem = _conv3(1, 3)
        w = cfg.geo_width
        if self.kind == "patch_attention":
            # no positional table: the token grid is restored by reshape, and
            # the encoder stays usable on any tile divisible by the patch
            self.embed = nn.Conv2d(3, w, cfg.patch, stride=cfg.patch)
            self.blocks = nn.ModuleList(SelfAttentionBlock(w, cfg.heads)
                                        for _ in range(cfg.geo_depth))
        else:
            layers, c = [], 3
            for _ in range(int(math.log2(cfg.patch))):
                layers += [_conv3(c, w, stride=2), nn.SiLU()]
                c = w
            for _ in range(cfg.geo_depth):
                layers += [_conv3(c, w), nn.SiLU()]
                c = w
            self.body = nn.Sequential(*layers)
        self.proj = nn.Conv2d(w, cfg.channels, 1)

    def forward(self, x, trace=None):
        size = x.shape[-2:]
        if size[0] % self.patch or size[1] % self.patch:
            raise ValueError(f"tile {tuple(size)} not divisible by patch size {self.patch}")
        s = self.stem(x)
        if self.kind == "patch_attention":
            f = self.embed(s)
            b, w, hp, wp = f.shape
            tok = f.flatten(2).transpose(1, 2)
            for blk in self.blocks:
                tok = blk(tok)
            f = tok.transpose(1, 2).reshape(b, w, hp, wp)
        else:
            f = self.body(s)
        p = self.proj(f)
        out = _resize(p, size)
        if trace is not None:
            trace.update(geo_in=x.shape[1:], geo_stem=s.shape[1:], geo_backbone=f.shape[1:],
                         geo_proj=p.shape[1:], geo_out=out.shape[1:])
        return out


class SemanticEncoder(nn.Module):
    """Land cover -> stem -> parallel full / half / quarter resolution branches.

    Branch widths double at each coarser level. One cross-scale exchange adds
    every other branch (1x1 conv, bilinear resample) to each branch; all
    branches are then resampled to H/4, concatenated and projected to C.
    """

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        nb = cfg.sem_branches
        widths = [cfg.sem_width * 2 ** i for i in range(nb)]
        self.stem = _conv3(1, 3)
        self.down = nn.ModuleList(
            _conv3(3 if i == 0 else widths[i - 1], widths[i], stride=1 if i == 0 else 2)
            for i in range(nb))
        self.exchange = nn.ModuleDict({
            f"{j}to{i}": nn.Conv2d(widths[j], widths[i], 1)
            for i in range(nb) for j in range(nb) if i != j})
        self.post = nn.ModuleList(_conv3(w, w) for w in widths)
        self.proj = nn.Conv2d(sum(widths), cfg.channels, 1)

    def forward(self, x, trace=None):
        size = x.shape[-2:]
        s = self.stem(x)
        feats, h = [], s
        for conv in self.down:
            h = F.silu(conv(h))
            feats.append(h)
        mixed = []
        for i, fi in enumerate(feats):
            acc = fi
            for j, fj in enumerate(feats):
                if i != j:
                    acc = acc + _resize(self.exchange[f"{j}to{i}"](fj), fi.shape[-2:])
            mixed.append(F.silu(self.post[i](acc)))
        quarter = (size[0] // 4, size[1] // 4)
        cat = torch.cat([_resize(m, quarter) for m in mixed], dim=1)
        p = self.proj(cat)
        out = _resize(p, size)
        if trace is not None:
            trace.update(sem_in=x.shape[1:], sem_stem=s.shape[1:],
                         sem_branches=[m.shape[1:] for m in mixed], sem_concat=cat.shape[1:],
                         sem_proj=p.shape[1:], sem_out=out.shape[1:])
        return out


class MetEncoder(nn.Module):
    """Bidirectional LSTM over the hourly rows; forward and backward halves
    are concatenated into a ``met_dim``-wide embedding per hour."""

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        self.n_hours, self.n_met = cfg.n_hours, cfg.n_met
        self.lstm = nn.LSTM(cfg.n_met, cfg.met_dim // 2, batch_first=True, bidirectional=True)
        for name, p in self.lstm.named_parameters():
            if name.startswith("weight_hh"):
                for gate in p.data.chunk(4, 0):
                    nn.init.orthogonal_(gate)

    def forward(self, x, trace=None):
        if tuple(x.shape[-2:]) != (self.n_hours, self.n_met):
            raise ValueError(f"met matrix must be {self.n_hours}x{self.n_met}, "
                             f"got {tuple(x.shape[-2:])}")
        z, _ = self.lstm(x)
        if trace is not None:
            trace.update(met_in=x.shape[1:], met_out=z.shape[1:])
        return z


class FiLMGenerator(nn.Module):
    """One hidden layer mapping the pooled met embedding to (gamma, beta).

    The output layer starts at zero, so gamma = 1 and beta = 0 initially.
    """

    def __init__(self, met_dim: int, hidden: int, channels: int):
        super().__init__()
        self.hidden = nn.Linear(met_dim, hidden)
        self.out = nn.Linear(hidden, 2 * channels)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, z):
        g, b = self.out(F.silu(self.hidden(z))).chunk(2, dim=-1)
        return 1.0 + g, b


class UTCINet(nn.Module):
    """The full surrogate; ablation switches come from the config."""

    def __init__(self, cfg: SurrogateConfig):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.geo = GeometricEncoder(cfg) if cfg.include_geo else None
            self.sem = SemanticEncoder(cfg) if cfg.include_sem else None
            film = cfg.uses_met
            self.met = MetEncoder(cfg) if film else None
            self.film_geo = (FiLMGenerator(cfg.met_dim, cfg.film_hidden, cfg.channels)
                             if film and cfg.include_geo else None)
            self.film_sem = (FiLMGenerator(cfg.met_dim, cfg.film_hidden, cfg.channels)
                             if film and cfg.include_sem else None)
            n_streams = int(cfg.include_geo) + int(cfg.include_sem)
            fw = cfg.fusion_width
            self.fusion = nn.Sequential(_conv3(n_streams * cfg.channels, fw), nn.SiLU(),
                                        _conv3(fw, fw), nn.SiLU())
            self.head = nn.Conv2d(fw, 1, 1)

    def forward(self, ndsm, landcover, met, trace=None):
        streams = []
        cond = None
        if self.met is not None:
            cond = self.met(met, trace).mean(dim=1)
            if trace is not None:
                trace["met_pooled"] = cond.shape[1:]
        if self.geo is not None:
            z = self.geo(ndsm, trace)
            if cond is not None:
                z = film_modulate(z, *self.film_geo(cond))
            streams.append(z)
        if self.sem is not None:
            z = self.sem(landcover, trace)
            if cond is not None:
                z = film_modulate(z, *self.film_sem(cond))
            streams.append(z)
        fused = torch.cat(streams, dim=1)
        out = self.head(self.fusion(fused))
        if trace is not None:
            trace.update(fused=fused.shape[1:], out=out.shape[1:])
        return out

    def shape_chain(self, ndsm, landcover, met) -> dict:
        """Per-sample tensor shapes at each stage of one forward pass."""
        trace: dict = {}
        with torch.no_grad():
            self.forward(ndsm, landcover, met, trace)
        return {k: (tuple(v) if not isinstance(v, list) else [tuple(s) for s in v])
                for k, v in trace.items()}

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        groups: dict = {}
        for name, p in self.named_parameters():
            groups.setdefault(name.split(".")[0], []).append((name, p))
        return groups


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
