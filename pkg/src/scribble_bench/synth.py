"""Synthetic dataset generation: disks, rings, bars and blobs on textured
backgrounds, sized for desk-scale evaluation runs.

Samples can stay in memory (for training) or be written out as PNGs plus a
manifest JSON under the schema used by the evaluation protocol:

    {"name": ..., "samples": [{"id": ..., "image": "...png",
                               "targets": [{"class": ..., "mask": "...png"}]}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import maskio
from .raster import Mask, connected_components
from .seeding import derive_rng

SHAPE_KINDS = ("disk", "ring", "bar", "blob")


@dataclass(frozen=True)
class SynthSample:
    sample_id: str
    kind: str
    image: np.ndarray  # (h, w, 3) uint8
    mask: Mask


def _smooth_noise(rng: np.random.Generator, side: int, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(rng.normal(size=(side, side)), sigma=sigma)


def _shape_mask(kind: str, side: int, rng: np.random.Generator) -> Mask:
    ys, xs = np.mgrid[0:side, 0:side].astype(float)
    cy = rng.uniform(0.32, 0.68) * side
    cx = rng.uniform(0.32, 0.68) * side
    if kind == "disk":
        r = rng.uniform(0.13, 0.26) * side
        return (ys - cy) ** 2 + (xs - cx) ** 2 <= r**2
    if kind == "ring":
        r = rng.uniform(0.16, 0.28) * side
        r_in = rng.uniform(0.45, 0.65) * r
        d2 = (ys - cy) ** 2 + (xs - cx) ** 2
        return (d2 <= r**2) & (d2 > r_in**2)
    if kind == "bar":
        length = rng.uniform(0.45, 0.8) * side
        thick = rng.uniform(0.05, 0.12) * side
        theta = rng.uniform(0.0, np.pi)
        u = np.cos(theta) * (xs - cx) + np.sin(theta) * (ys - cy)
        v = -np.sin(theta) * (xs - cx) + np.cos(theta) * (ys - cy)
        return (np.abs(u) <= length / 2) & (np.abs(v) <= thick / 2)
    if kind == "blob":
        field = _smooth_noise(rng, side, sigma=side / 10.0)
        level = np.quantile(field, rng.uniform(0.85, 0.92))
        m = field >= level
        comps = connected_components(m)
        if comps.count == 0:
            # degenerate draw, fall back to a small disk
            r = 0.15 * side
            return (ys - cy) ** 2 + (xs - cx) ** 2 <= r**2
        largest = int(np.argmax(comps.areas)) + 1
        return comps.labels == largest
    raise ValueError(f"unknown shape kind {kind!r}")


def _render(mask: Mask, rng: np.random.Generator) -> np.ndarray:
    side = mask.shape[0]
    bg = 0.35 + 0.08 * _smooth_noise(rng, side, sigma=4.0)
    fg = 0.72 + 0.08 * _smooth_noise(rng, side, sigma=4.0)
    luma = np.where(mask, fg, bg)
    gradient = np.linspace(-0.04, 0.04, side)[None, :]
    luma = luma + gradient + 0.02 * rng.normal(size=mask.shape)
    tint = rng.uniform(0.85, 1.0, size=3)
    rgb = np.clip(luma[..., None] * tint[None, None, :], 0.0, 1.0)
    return (rgb * 255.0).astype(np.uint8)


def make_sample(kind: str, side: int, seed: int, index: int) -> SynthSample:
    rng = derive_rng(seed, "synth", kind, index)
    mask = _shape_mask(kind, side, rng)
    image = _render(mask, rng)
    return SynthSample(
        sample_id=f"{kind}-{index:03d}", kind=kind, image=image, mask=mask
    )


def generate_samples(n: int, side: int = 96, seed: int = 0,
                     kinds: tuple[str, ...] = SHAPE_KINDS) -> list[SynthSample]:
    """Deterministic sample list cycling through the shape kinds."""
    return [
        make_sample(kinds[i % len(kinds)], side, seed, i // len(kinds))
        for i in range(n)
    ]


def write_manifest(samples: list[SynthSample], out_dir: str | Path,
                   name: str = "synthetic") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        img_path = out_dir / f"{s.sample_id}.png"
        mask_path = out_dir / f"{s.sample_id}_mask.png"
        maskio.save_image_png(s.image, img_path)
        maskio.save_mask_png(s.mask, mask_path)
        entries.append(
            {
                "id": s.sample_id,
                "image": img_path.name,
                "targets": [{"class": s.kind, "mask": mask_path.name}],
            }
        )
    manifest = {"name": name, "samples": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
