"""Configuration for the toy refinement network and its training loss."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NetConfig:
    """Shape of the toy pipeline. Defaults keep the full-scale topology and
    ratios (4x spatial downscale, LoRA rank/scale) at desk-test size; the
    full-scale numbers (input 256, dim 256, rank 8) are accepted too."""

    input_side: int = 64
    embed_dim: int = 16
    attn_heads: int = 2
    lora_rank: int = 4
    lora_scale: float = 2.0
    groupnorm_groups: int = 4
    seed: int = 1234

    def __post_init__(self):
        if self.input_side % 4 != 0:
            raise ValueError("input_side must be divisible by 4")
        if self.embed_dim % self.attn_heads != 0:
            raise ValueError("embed_dim must be divisible by attn_heads")
        if self.embed_dim % self.groupnorm_groups != 0:
            raise ValueError("embed_dim must be divisible by groupnorm_groups")
        if self.lora_rank < 1:
            raise ValueError("lora_rank must be >= 1")

    @property
    def embed_side(self) -> int:
        return self.input_side // 4


@dataclass(frozen=True)
class LossConfig:
    """Per-round loss: focal_weight * focal + dice, with linearly increasing
    round weights w_t = t + 1 normalized to sum one."""

    focal_weight: float = 20.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    rounds: int = 3
    dice_eps: float = 1.0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    def round_weights(self, n: int | None = None) -> list[float]:
        n = self.rounds if n is None else n
        raw = [t + 1 for t in range(n)]
        total = sum(raw)
        return [w / total for w in raw]
