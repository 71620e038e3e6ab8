"""Encoder configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class GoTConfig:
    """Shapes and widths of the goal-token encoder.

    Stacked frames are folded into ``channels`` (4 RGB frames -> 12).  The
    patch grid is ``grid_rows`` x ``grid_cols``; patches may be rectangular.
    """

    image_h: int = 32
    image_w: int = 32
    channels: int = 12
    grid_rows: int = 8
    grid_cols: int = 8
    embed_dim: int = 64
    heads: int = 4
    blocks: int = 2
    mlp_hidden: int = 128
    goal_hidden: int = 64
    dropout: float = 0.0
    pool: str = "goal"  # 'goal' (token-0 row) or 'mean' (all rows)

    def __post_init__(self):
        if self.image_h <= 0 or self.image_w <= 0 or self.channels <= 0:
            raise ValueError("image dimensions must be positive")
        if self.image_h % self.grid_rows != 0:
            raise ValueError(f"image_h={self.image_h} not divisible by grid_rows={self.grid_rows}")
        if self.image_w % self.grid_cols != 0:
            raise ValueError(f"image_w={self.image_w} not divisible by grid_cols={self.grid_cols}")
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim={self.embed_dim} not divisible by heads={self.heads}")
        if self.blocks < 1:
            raise ValueError("need at least one encoder block")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.pool not in ("goal", "mean"):
            raise ValueError(f"pool must be 'goal' or 'mean', got {self.pool!r}")

    @property
    def patch_h(self) -> int:
        return self.image_h // self.grid_rows

    @property
    def patch_w(self) -> int:
        return self.image_w // self.grid_cols

    @property
    def patch_dim(self) -> int:
        return self.patch_h * self.patch_w * self.channels

    @property
    def num_patches(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def tokens(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    def to_meta(self) -> dict[str, str]:
        return {f"cfg_{f.name}": str(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_meta(cls, meta: dict[str, str]) -> "GoTConfig":
        kwargs = {}
        for f in fields(cls):
            raw = meta[f"cfg_{f.name}"]
            if f.name == "pool":
                kwargs[f.name] = raw
            elif f.name == "dropout":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = int(raw)
        return cls(**kwargs)
