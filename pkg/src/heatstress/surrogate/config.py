"""Surrogate network configuration and the ablation variants."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from ..meteo import MET_VARIABLES, N_HOURS

GEO_BACKBONES = ("patch_attention", "conv_stack")
FUSIONS = ("film", "concat")
VARIANTS = ("A1", "A2", "A3", "full")


@dataclass(frozen=True)
class SurrogateConfig:
    """Shapes and switches for :class:`~heatstress.surrogate.network.UTCINet`.

    ``tile`` is the training tile side in cells. The geometric backbone is a
    patch self-attention stack (patch side ``patch``) or a strided conv stack
    whose downsampling factor is also ``patch``. ``sem_width`` is the
    full-resolution branch width; each coarser branch doubles it.
    """

    tile: int = 64
    channels: int = 16
    met_dim: int = 64
    n_hours: int = N_HOURS
    n_met: int = len(MET_VARIABLES)
    geo_backbone: str = "patch_attention"
    patch: int = 16
    geo_width: int = 32
    geo_depth: int = 2
    heads: int = 4
    sem_branches: int = 3
    sem_width: int = 16
    fusion: str = "film"
    fusion_width: int = 32
    film_hidden: int = 64
    include_geo: bool = True
    include_sem: bool = True
    reference_widths: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (self.include_geo or self.include_sem):
            raise ValueError("at least one spatial encoder must be enabled")
        if self.geo_backbone not in GEO_BACKBONES:
            raise ValueError(f"geo_backbone must be one of {GEO_BACKBONES}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}")
        if self.reference_widths and (self.channels != 16 or self.met_dim != 64):
            raise ValueError("reference_widths fixes channels=16 and met_dim=64")
        if self.met_dim % 2:
            raise ValueError("met_dim must be even (two recurrent directions)")
        if not 1 <= self.sem_branches <= 3:
            raise ValueError("sem_branches must be 1, 2 or 3")
        if self.tile % 4:
            raise ValueError("tile must be divisible by 4")
        if self.include_geo:
            if self.patch < 1 or self.tile % self.patch:
                raise ValueError(f"tile {self.tile} not divisible by patch size {self.patch}")
            if self.geo_backbone == "conv_stack" and self.patch & (self.patch - 1):
                raise ValueError("conv_stack needs a power-of-two downsampling factor")
            if self.geo_backbone == "patch_attention" and self.geo_width % self.heads:
                raise ValueError("geo_width must be divisible by heads")

    @classmethod
    def variant(cls, name: str, **overrides) -> "SurrogateConfig":
        """A1 geometric-only, A2 semantic-only, A3 concat fusion, or the full model."""
        flags = {
            "A1": dict(include_sem=False),
            "A2": dict(include_geo=False),
            "A3": dict(fusion="concat"),
            "full": {},
        }
        if name not in flags:
            raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
        return cls(**{**flags[name], **overrides})

    @property
    def uses_met(self) -> bool:
        return self.fusion == "film"

    def with_(self, **kw) -> "SurrogateConfig":
        return replace(self, **kw)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SurrogateConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SurrogateConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
