"""Dual-track, memory-driven multi-round refinement over a single image.

A session caches the frozen image features once, then each round:

  1. encodes the accumulated scribbles (Track 1, dense decoder prompt),
  2. encodes only the latest correction (Track 2) and fuses it into the
     query features through the gated fusion module,
  3. cross-attends against the single-slot memory bank (a learned
     no-memory token stands in while the bank is empty),
  4. decodes logits from the fused features plus the accumulated-scribble
     and previous-mask embeddings, and
  5. re-encodes the new prediction into the memory slot.

Corrections merge into the accumulated map as they arrive, so Track 1
always sees the full interaction history while Track 2 sees exactly the
newest strokes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from . import maskio
from .raster import Mask, RasterError, ScribbleMap, channel_max
from .toynet import NetConfig, ToyNet
from .toynet.net import (
    image_to_tensor,
    logits_to_mask,
    mask_to_tensor,
    scribble_to_tensor,
)


@dataclass(frozen=True)
class RefineConfig:
    net: NetConfig = field(default_factory=NetConfig)
    use_sgf: bool = True
    use_memory: bool = True
    threshold: float = 0.0  # logit cutoff for binarization

    def ablation_label(self) -> str:
        if self.use_sgf and self.use_memory:
            return "sgf+memory"
        if self.use_sgf:
            return "sgf"
        return "baseline"


@dataclass
class SessionState:
    """Mutable per-image refinement state; one-slot memory bank."""

    f_img: torch.Tensor
    image_shape: tuple[int, int]
    s_acc: ScribbleMap
    s_latest: ScribbleMap
    memory: torch.Tensor | None = None
    prev_mask: Mask | None = None
    t: int = 0


def init_session(image: np.ndarray, s0: ScribbleMap, net: ToyNet,
                 cfg: RefineConfig) -> SessionState:
    """Encode the image once (frozen features) and seed the scribble state."""
    h, w = np.asarray(image).shape[:2]
    if s0.shape != (h, w):
        raise RasterError(f"scribble shape {s0.shape} does not match image ({h}, {w})")
    with torch.no_grad():
        f_img = net.encode_image(image_to_tensor(image, cfg.net.input_side))
    return SessionState(
        f_img=f_img, image_shape=(h, w), s_acc=s0, s_latest=s0
    )


def refine_step(state: SessionState, correction: ScribbleMap | None,
                net: ToyNet, cfg: RefineConfig) -> tuple[Mask, SessionState]:
    """Run one refinement round and advance the session state.

    On the first round the initial scribbles already live in the state and
    ``correction`` must be None; afterwards each call supplies the new
    (possibly empty) correction strokes.
    """
    if state.t == 0:
        if correction is not None:
            raise RasterError("round 0 consumes the initial scribbles; "
                              "corrections start at round 1")
        s_acc, s_latest = state.s_acc, state.s_latest
    else:
        if correction is None:
            raise RasterError("rounds after the first require a correction map "
                              "(it may be empty)")
        if correction.shape != state.image_shape:
            raise RasterError(
                f"correction shape {correction.shape} does not match image "
                f"{state.image_shape}")
        s_acc = channel_max(state.s_acc, correction)
        s_latest = correction

    side = cfg.net.input_side
    with torch.no_grad():
        prev_t = (
            mask_to_tensor(state.prev_mask, side)
            if state.prev_mask is not None
            else None
        )
        logits, new_memory = net.forward_round(
            state.f_img,
            scribble_to_tensor(s_acc, side),
            scribble_to_tensor(s_latest, side),
            prev_t,
            state.memory if cfg.use_memory else None,
            use_sgf=cfg.use_sgf,
            use_memory=cfg.use_memory,
        )
        mask = logits_to_mask(logits, state.image_shape, cfg.threshold)

    new_state = SessionState(
        f_img=state.f_img,
        image_shape=state.image_shape,
        s_acc=s_acc,
        s_latest=s_latest,
        memory=new_memory,
        prev_mask=mask,
        t=state.t + 1,
    )
    return mask, new_state


# ---- session logs (replay / audit) ----


def log_entry(round_index: int, correction: ScribbleMap | None, mask: Mask,
              iou: float | None = None, dice: float | None = None) -> dict:
    entry = {
        "round": round_index,
        "correction": maskio.scribble_to_rle(correction) if correction is not None else None,
        "mask": maskio.mask_to_rle(mask),
    }
    if iou is not None:
        entry["iou"] = iou
    if dice is not None:
        entry["dice"] = dice
    return entry


def dump_log(entries: list[dict]) -> str:
    return json.dumps(entries)


def parse_log(text: str) -> list[dict]:
    entries = json.loads(text)
    if not isinstance(entries, list):
        raise ValueError("session log must be a JSON list")
    return entries
