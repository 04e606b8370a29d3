"""Toy-scale refinement network: scribble/mask encoders, spatial gated
fusion, memory cross-attention and mask decoder with toggleable low-rank
adapters.

The image encoder, mask encoder, memory encoder, attention base projections
and decoder head stand in for a pretrained backbone: they are randomly
initialized from the config seed and frozen. Trainable parts are the
scribble encoder, the fusion module and the adapters.

Everything runs in double precision on tensors shaped (1, C, H, W); all
randomness is drawn from one seeded numpy generator at construction, so two
nets built from the same config are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..raster import Mask, ScribbleMap, as_mask
from .config import NetConfig

DTYPE = torch.float64


class LayerNorm2d(nn.Module):
    """Per-position normalization over channels (channels_first layout)."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=1, keepdim=True)
        var = ((x - mu) ** 2).mean(dim=1, keepdim=True)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return x * self.weight[None, :, None, None] + self.bias[None, :, None, None]


class DownscaleEncoder(nn.Module):
    """Two stride-2 2x2 conv blocks (conv -> channel LayerNorm -> GELU)
    followed by a 1x1 projection: 4x spatial downscale to the embed dim."""

    def __init__(self, in_channels: int, embed_dim: int):
        super().__init__()
        c1 = max(embed_dim // 4, 2)
        c2 = max(embed_dim // 2, 4)
        self.conv1 = nn.Conv2d(in_channels, c1, kernel_size=2, stride=2)
        self.norm1 = LayerNorm2d(c1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=2, stride=2)
        self.norm2 = LayerNorm2d(c2)
        self.proj = nn.Conv2d(c2, embed_dim, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.gelu(self.norm1(self.conv1(x)))
        x = F.gelu(self.norm2(self.conv2(x)))
        return self.proj(x)


class LoraLinear(nn.Module):
    """Frozen base projection plus a toggleable low-rank update:
    y = W x + enabled * scale * B (A x), with B zero at init so the update
    starts as the identity."""

    def __init__(self, d_in: int, d_out: int, rank: int, scale: float,
                 bias: bool = False):
        super().__init__()
        self.base = nn.Linear(d_in, d_out, bias=bias)
        self.base.weight.requires_grad_(False)
        if bias:
            self.base.bias.requires_grad_(False)
        self.lora_a = nn.Parameter(torch.zeros(rank, d_in))
        self.lora_b = nn.Parameter(torch.zeros(d_out, rank))
        self.scale = scale
        self.enabled = True

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.base(x)
        if self.enabled and self.scale != 0.0:
            y = y + self.scale * F.linear(F.linear(x, self.lora_a), self.lora_b)
        return y


class AttentionBlock(nn.Module):
    """Single multi-head attention layer with residual output; the query
    and value projections carry low-rank adapters."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.embed_dim
        self.heads = cfg.attn_heads
        self.q = LoraLinear(d, d, cfg.lora_rank, cfg.lora_scale)
        self.k = nn.Linear(d, d, bias=False)
        self.v = LoraLinear(d, d, cfg.lora_rank, cfg.lora_scale)
        self.out = nn.Linear(d, d, bias=True)
        self.k.weight.requires_grad_(False)
        self.out.weight.requires_grad_(False)
        self.out.bias.requires_grad_(False)

    def forward(self, x: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        n, d = x.shape
        m = kv.shape[0]
        dh = d // self.heads
        q = self.q(x).reshape(n, self.heads, dh).transpose(0, 1)
        k = self.k(kv).reshape(m, self.heads, dh).transpose(0, 1)
        v = self.v(kv).reshape(m, self.heads, dh).transpose(0, 1)
        attn = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(dh), dim=-1)
        mixed = (attn @ v).transpose(0, 1).reshape(n, d)
        return x + self.out(mixed)

    def adapters(self) -> list[LoraLinear]:
        return [self.q, self.v]


class SpatialGatedFusion(nn.Module):
    """Gated residual injection of the latest scribble embedding into the
    query features:

        out = F + alpha * g_h * mix(concat(F, g_h * E))

    where mix is a 1x1 channel reduction (GroupNorm + GELU) followed by a
    7x7 depthwise + 1x1 pointwise block (norm + GELU after the pointwise
    half). alpha starts at zero, so the module opens as an identity."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.embed_dim
        g = cfg.groupnorm_groups
        self.reduce = nn.Conv2d(2 * d, d, kernel_size=1)
        self.reduce_norm = nn.GroupNorm(g, d)
        self.dw = nn.Conv2d(d, d, kernel_size=7, padding=3, groups=d)
        self.pw = nn.Conv2d(d, d, kernel_size=1)
        self.pw_norm = nn.GroupNorm(g, d)
        self.alpha = nn.Parameter(torch.zeros(1))

    def spatial_mix(self, x: torch.Tensor) -> torch.Tensor:
        x = F.gelu(self.reduce_norm(self.reduce(x)))
        return F.gelu(self.pw_norm(self.pw(self.dw(x))))

    def forward(self, feat: torch.Tensor, e_s: torch.Tensor, g_h: float) -> torch.Tensor:
        if feat.shape != e_s.shape:
            raise ValueError(f"feature/embedding shapes differ: "
                             f"{tuple(feat.shape)} vs {tuple(e_s.shape)}")
        if g_h == 0.0:
            return feat
        mixed = self.spatial_mix(torch.cat([feat, g_h * e_s], dim=1))
        return feat + self.alpha * g_h * mixed


class MemoryAttention(nn.Module):
    """Cross-attention of query features against the memory entry, or
    against a zero-initialized no-memory token when the bank is empty."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.attn = AttentionBlock(cfg)
        self.no_mem_embed = nn.Parameter(
            torch.zeros(cfg.embed_dim), requires_grad=False
        )

    def forward(self, f_q: torch.Tensor, memory: torch.Tensor | None) -> torch.Tensor:
        if memory is not None and memory.shape[1] != f_q.shape[1]:
            raise ValueError("memory channel count does not match queries")
        _, d, h, w = f_q.shape
        tokens = f_q.reshape(d, h * w).transpose(0, 1)
        if memory is None:
            kv = self.no_mem_embed[None, :]
        else:
            kv = memory.reshape(memory.shape[1], -1).transpose(0, 1)
        out = self.attn(tokens, kv)
        return out.transpose(0, 1).reshape(1, d, h, w)


class MaskDecoder(nn.Module):
    """One self-attention block over query + dense-prompt tokens, then a
    two-layer pointwise head to single-channel logits."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.embed_dim
        self.attn = AttentionBlock(cfg)
        self.head1 = nn.Linear(d, d)
        self.head2 = nn.Linear(d, 1)
        for p in (self.head1.weight, self.head1.bias,
                  self.head2.weight, self.head2.bias):
            p.requires_grad_(False)

    def forward(self, f_mem: torch.Tensor, e_dense: torch.Tensor) -> torch.Tensor:
        if f_mem.shape != e_dense.shape:
            raise ValueError(f"decoder input shapes differ: "
                             f"{tuple(f_mem.shape)} vs {tuple(e_dense.shape)}")
        _, d, h, w = f_mem.shape
        x = (f_mem + e_dense).reshape(d, h * w).transpose(0, 1)
        y = self.attn(x, x)
        logits = self.head2(F.gelu(self.head1(y)))
        return logits.transpose(0, 1).reshape(1, 1, h, w)


class ToyNet(nn.Module):
    """The full toy pipeline. Frozen stand-ins for the backbone (image,
    mask and memory encoders; attention bases; decoder head) plus the
    trainable additions (scribble encoder, fusion, adapters)."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.image_encoder = DownscaleEncoder(3, d)
        self.scribble_encoder = DownscaleEncoder(2, d)
        self.mask_encoder = DownscaleEncoder(1, d)
        self.sgf = SpatialGatedFusion(cfg)
        self.mem_attn = MemoryAttention(cfg)
        self.decoder = MaskDecoder(cfg)
        self.mem_encoder = nn.Conv2d(d + 1, d, kernel_size=3, padding=1)
        for p in self.image_encoder.parameters():
            p.requires_grad_(False)
        for p in self.mask_encoder.parameters():
            p.requires_grad_(False)
        for p in self.mem_encoder.parameters():
            p.requires_grad_(False)
        self.double()
        self._seed_init(cfg.seed)

    def _seed_init(self, seed: int) -> None:
        """Deterministic init from one numpy stream, in parameter order.

        Norm layers start as identities, all biases at zero, weights as
        gaussians scaled by 1/sqrt(fan_in). The zero-gate additions
        (adapter B, fusion alpha, no-memory token) start at exact zero so
        the extra branches open as identities.
        """
        rng = np.random.default_rng(seed)
        norm_params = set()
        for mod_name, mod in self.named_modules():
            if isinstance(mod, (LayerNorm2d, nn.GroupNorm)):
                norm_params.add(f"{mod_name}.weight")
                norm_params.add(f"{mod_name}.bias")
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name in norm_params:
                    p.fill_(1.0) if name.endswith("weight") else p.zero_()
                elif (name.endswith("lora_b") or name.endswith("no_mem_embed")
                      or name == "sgf.alpha" or name.endswith("bias")):
                    p.zero_()
                else:
                    fan_in = int(np.prod(p.shape[1:])) if p.dim() > 1 else p.shape[0]
                    vals = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=tuple(p.shape))
                    p.copy_(torch.from_numpy(vals))

    # ---- per-module forward ops ----

    def encode_image(self, image_t: torch.Tensor) -> torch.Tensor:
        self._check_input(image_t, 3)
        return self.image_encoder(image_t)

    def scribble_encode(self, s_t: torch.Tensor) -> torch.Tensor:
        """Dense embedding of a two-channel scribble raster; exactly zero
        when the scribble is empty."""
        self._check_input(s_t, 2)
        if not bool((s_t != 0).any()):
            e = self.cfg.embed_side
            return torch.zeros((1, self.cfg.embed_dim, e, e), dtype=DTYPE)
        return self.scribble_encoder(s_t)

    def mask_encode(self, m_t: torch.Tensor | None) -> torch.Tensor:
        """Embedding of the previous round's mask; callers pass None on the
        first round to get the zero prior."""
        if m_t is None:
            e = self.cfg.embed_side
            return torch.zeros((1, self.cfg.embed_dim, e, e), dtype=DTYPE)
        self._check_input(m_t, 1)
        return self.mask_encoder(m_t)

    def memory_encode(self, f_img: torch.Tensor, logits: torch.Tensor) -> torch.Tensor:
        return self.mem_encoder(torch.cat([f_img, logits], dim=1))

    def _check_input(self, t: torch.Tensor, channels: int) -> None:
        s = self.cfg.input_side
        if t.shape != (1, channels, s, s):
            raise ValueError(
                f"expected input of shape (1, {channels}, {s}, {s}), got {tuple(t.shape)}"
            )

    # ---- full round (Track 1 + Track 2 + memory + decode) ----

    def forward_round(
        self,
        f_img: torch.Tensor,
        s_acc_t: torch.Tensor,
        s_latest_t: torch.Tensor,
        prev_mask_t: torch.Tensor | None,
        memory: torch.Tensor | None,
        *,
        use_sgf: bool,
        use_memory: bool,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """One refinement round; returns (logits, new memory entry).

        Track 1: the accumulated scribbles become the dense decoder prompt
        (added to the previous-mask embedding). Track 2: only the latest
        scribble is fused into the memory-attention queries.
        """
        e_acc = self.scribble_encode(s_acc_t)
        e_latest = self.scribble_encode(s_latest_t)
        e_mask = self.mask_encode(prev_mask_t)
        if use_sgf:
            g_h = 1.0 if bool((s_latest_t != 0).any()) else 0.0
            f_q = self.sgf(f_img, e_latest, g_h)
        else:
            f_q = f_img
        f_mem = self.mem_attn(f_q, memory) if use_memory else f_q
        logits = self.decoder(f_mem, e_acc + e_mask)
        new_memory = self.memory_encode(f_img, logits)
        return logits, new_memory

    # ---- parameter bookkeeping ----

    def adapters(self) -> dict[str, LoraLinear]:
        return {
            "mem_attn.q": self.mem_attn.attn.q,
            "mem_attn.v": self.mem_attn.attn.v,
            "decoder.q": self.decoder.attn.q,
            "decoder.v": self.decoder.attn.v,
        }

    def set_adapters_enabled(self, enabled: bool) -> None:
        for a in self.adapters().values():
            a.enabled = enabled

    def trainable_names(self, stage: int) -> list[str]:
        """Stage 1: scribble encoder + decoder adapters. Stage 2 adds the
        fusion module and the memory-attention adapters."""
        if stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        names = [
            n for n, _ in self.named_parameters()
            if n.startswith("scribble_encoder.")
            or (n.startswith("decoder.attn.") and "lora_" in n)
        ]
        if stage == 2:
            names += [
                n for n, _ in self.named_parameters()
                if n.startswith("sgf.")
                or (n.startswith("mem_attn.") and "lora_" in n)
            ]
        return names

    def frozen_names(self) -> list[str]:
        return [n for n, p in self.named_parameters() if not p.requires_grad]


# ---- raster <-> tensor plumbing ----


def scribble_to_tensor(s: ScribbleMap, side: int) -> torch.Tensor:
    """Nearest-neighbor resize of the two channels to (1, 2, side, side)."""
    arr = np.stack([s.positive, s.negative]).astype(np.float64)
    t = torch.from_numpy(arr)[None]
    if s.shape != (side, side):
        t = F.interpolate(t, size=(side, side), mode="nearest")
    return t


def mask_to_tensor(m: Mask, side: int) -> torch.Tensor:
    m = as_mask(m)
    t = torch.from_numpy(m.astype(np.float64))[None, None]
    if m.shape != (side, side):
        t = F.interpolate(t, size=(side, side), mode="nearest")
    return t


def image_to_tensor(image: np.ndarray, side: int) -> torch.Tensor:
    """(h, w, 3) uint8 or float image -> (1, 3, side, side) in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    t = torch.from_numpy(arr.astype(np.float64).transpose(2, 0, 1))[None]
    if t.shape[-2:] != (side, side):
        t = F.interpolate(t, size=(side, side), mode="bilinear", align_corners=False)
    return t


def logits_to_mask(logits: torch.Tensor, out_shape: tuple[int, int],
                   threshold: float = 0.0) -> Mask:
    """Bilinear upscale of (1, 1, e, e) logits to the image resolution,
    binarized at the logit threshold."""
    up = F.interpolate(logits, size=out_shape, mode="bilinear", align_corners=False)
    return (up[0, 0] > threshold).numpy()
