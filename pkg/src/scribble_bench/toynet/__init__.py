from .config import LossConfig, NetConfig
from .net import (
    AttentionBlock,
    DownscaleEncoder,
    LayerNorm2d,
    LoraLinear,
    MaskDecoder,
    MemoryAttention,
    SpatialGatedFusion,
    ToyNet,
    image_to_tensor,
    logits_to_mask,
    mask_to_tensor,
    scribble_to_tensor,
)
from .losses import dice_loss, downscale_target, focal_loss, multi_round_loss, round_loss
from .serialize import load_params, manifest_to_params, params_to_manifest, save_params

__all__ = [
    "AttentionBlock",
    "DownscaleEncoder",
    "LayerNorm2d",
    "LoraLinear",
    "LossConfig",
    "MaskDecoder",
    "MemoryAttention",
    "NetConfig",
    "SpatialGatedFusion",
    "ToyNet",
    "dice_loss",
    "downscale_target",
    "focal_loss",
    "image_to_tensor",
    "load_params",
    "logits_to_mask",
    "manifest_to_params",
    "mask_to_tensor",
    "multi_round_loss",
    "params_to_manifest",
    "round_loss",
    "save_params",
    "scribble_to_tensor",
]
