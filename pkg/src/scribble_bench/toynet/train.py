"""Two-stage toy training with unrolled multi-round refinement.

Stage 1 trains the scribble encoder and decoder adapters without memory or
fusion; stage 2 turns both on and adds the fusion module and the
memory-attention adapters. Each step unrolls the full round loop on one
sample, drawing the initial scribble at round 0 and oracle corrections from
the error map afterwards, and optimizes the round-weighted focal+dice loss.

Scribble randomness is derived per (seed, sample, round), never per step,
so revisiting a sample reproduces its prompts exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..raster import channel_max
from ..scribbles import GenParams, ScribbleStyle, corrective_scribbles, generate_scribble
from ..seeding import derive_rng
from ..synth import SynthSample
from .config import LossConfig, NetConfig
from .losses import multi_round_loss
from .net import (
    ToyNet,
    image_to_tensor,
    logits_to_mask,
    mask_to_tensor,
    scribble_to_tensor,
)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    lr: float = 1e-3
    weight_decay: float = 0.01
    rounds: int = 3
    seed: int = 0
    threshold: float = 0.0
    gen: GenParams = field(default_factory=lambda: GenParams(min_component_area=16))
    loss: LossConfig = field(default_factory=LossConfig)


@dataclass
class TrainResult:
    net: ToyNet
    stage: int
    loss_trace: list[float]
    initial_loss: float
    final_loss: float


def _stage_flags(stage: int) -> dict:
    if stage == 1:
        return {"use_sgf": False, "use_memory": False}
    if stage == 2:
        return {"use_sgf": True, "use_memory": True}
    raise ValueError("stage must be 1 or 2")


def unrolled_loss(net: ToyNet, sample: SynthSample, sample_key: int | str,
                  cfg: TrainConfig, *, use_sgf: bool, use_memory: bool,
                  keep_graph: bool = True) -> torch.Tensor:
    """Round-weighted loss of the unrolled refinement loop on one sample.

    Binarized masks (previous-mask prior, oracle corrections) are treated
    as constants; gradients flow through the memory entry and the logits.
    """
    side = net.cfg.input_side
    gt = sample.mask
    with torch.no_grad():
        f_img = net.encode_image(image_to_tensor(sample.image, side))
    target = mask_to_tensor(gt, gt.shape[0]) if gt.shape[0] == gt.shape[1] else None
    if target is None:
        raise ValueError("training samples must be square")

    s0 = generate_scribble(gt, ScribbleStyle.ADAPTIVE, cfg.gen,
                           derive_rng(cfg.seed, "train", sample_key, 0))
    s_acc, s_latest = s0, s0
    prev_t = None
    memory = None
    preds: list[torch.Tensor] = []
    for t in range(cfg.rounds):
        logits, new_memory = net.forward_round(
            f_img,
            scribble_to_tensor(s_acc, side),
            scribble_to_tensor(s_latest, side),
            prev_t,
            memory if use_memory else None,
            use_sgf=use_sgf,
            use_memory=use_memory,
        )
        preds.append(logits)
        if t + 1 < cfg.rounds:
            mask = logits_to_mask(logits.detach(), gt.shape, cfg.threshold)
            corr = corrective_scribbles(
                mask, gt, cfg.gen, derive_rng(cfg.seed, "train", sample_key, t + 1)
            )
            s_acc = channel_max(s_acc, corr)
            s_latest = corr
            prev_t = mask_to_tensor(mask, side)
            memory = new_memory if keep_graph else new_memory.detach()
    return multi_round_loss(preds, target, cfg.loss)


def dataset_loss(net: ToyNet, samples: list[SynthSample], cfg: TrainConfig,
                 stage: int) -> float:
    """Mean unrolled loss over the dataset, no gradients."""
    flags = _stage_flags(stage)
    total = 0.0
    with torch.no_grad():
        for i, s in enumerate(samples):
            total += float(unrolled_loss(net, s, i, cfg, keep_graph=False, **flags))
    return total / len(samples)


def train_toy(stage: int, samples: list[SynthSample], cfg: TrainConfig,
              net: ToyNet | None = None,
              net_cfg: NetConfig | None = None) -> TrainResult:
    """Run one training stage; returns the net, the per-step loss trace and
    the dataset-mean loss before and after."""
    if not samples:
        raise ValueError("training needs at least one sample")
    flags = _stage_flags(stage)
    if net is None:
        net = ToyNet(net_cfg or NetConfig())

    trainable = set(net.trainable_names(stage))
    # Parameters outside this stage's set must not move: drop them from the
    # graph for the duration of the stage.
    suspended: list[torch.nn.Parameter] = []
    for name, p in net.named_parameters():
        if p.requires_grad and name not in trainable:
            p.requires_grad_(False)
            suspended.append(p)
    params = [p for n, p in net.named_parameters() if n in trainable]
    opt = torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    initial = dataset_loss(net, samples, cfg, stage)
    trace: list[float] = []
    try:
        for step in range(cfg.steps):
            sample_idx = step % len(samples)
            opt.zero_grad(set_to_none=True)
            loss = unrolled_loss(net, samples[sample_idx], sample_idx, cfg, **flags)
            value = float(loss.detach())
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            loss.backward()
            opt.step()
            trace.append(value)
    finally:
        for p in suspended:
            p.requires_grad_(True)
    final = dataset_loss(net, samples, cfg, stage)
    return TrainResult(net=net, stage=stage, loss_trace=trace,
                       initial_loss=initial, final_loss=final)


def smoothed(trace: list[float], window: int = 25) -> list[float]:
    """Moving average used to judge the downward trend of a noisy trace."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out = []
    for i in range(len(trace)):
        lo = max(0, i - window + 1)
        out.append(sum(trace[lo : i + 1]) / (i + 1 - lo))
    return out
