"""Training losses: focal + dice per round, combined over unrolled rounds
with linearly increasing weights."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import LossConfig


def downscale_target(target_t: torch.Tensor, side: int) -> torch.Tensor:
    """Nearest-neighbor downscale of a (1, 1, h, w) 0/1 target tensor."""
    if target_t.shape[-2:] == (side, side):
        return target_t
    return F.interpolate(target_t, size=(side, side), mode="nearest")


def focal_loss(logits: torch.Tensor, target: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Mean over pixels of -alpha_t (1 - p_t)^gamma log(p_t), where p_t is
    the predicted probability of the true class."""
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(target.shape)}")
    p = torch.sigmoid(logits)
    p_t = torch.where(target > 0.5, p, 1.0 - p)
    alpha_t = torch.where(
        target > 0.5,
        torch.as_tensor(cfg.focal_alpha, dtype=logits.dtype),
        torch.as_tensor(1.0 - cfg.focal_alpha, dtype=logits.dtype),
    )
    eps = torch.finfo(logits.dtype).tiny
    loss = -alpha_t * (1.0 - p_t) ** cfg.focal_gamma * torch.log(p_t.clamp_min(eps))
    return loss.mean()


def dice_loss(logits: torch.Tensor, target: torch.Tensor,
              eps: float = 1.0) -> torch.Tensor:
    """Soft dice: 1 - (2 sum(p*y) + eps) / (sum(p) + sum(y) + eps)."""
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(target.shape)}")
    p = torch.sigmoid(logits)
    inter = (p * target).sum()
    denom = p.sum() + target.sum()
    return 1.0 - (2.0 * inter + eps) / (denom + eps)


def round_loss(logits: torch.Tensor, target: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    return cfg.focal_weight * focal_loss(logits, target, cfg) + dice_loss(
        logits, target, eps=cfg.dice_eps
    )


def multi_round_loss(preds: list[torch.Tensor], target: torch.Tensor,
                     cfg: LossConfig) -> torch.Tensor:
    """Weighted sum of per-round losses, weights w_t = t + 1 normalized."""
    if not preds:
        raise ValueError("multi_round_loss needs at least one round")
    weights = cfg.round_weights(len(preds))
    total = torch.zeros((), dtype=preds[0].dtype)
    for w, logits in zip(weights, preds):
        tgt = downscale_target(target, logits.shape[-1])
        total = total + w * round_loss(logits, tgt, cfg)
    return total
