"""Mask and scribble-map serialization.

Masks travel as 8-bit single-channel PNGs (nonzero = foreground) or as
run-length JSON: ``{"w": W, "h": H, "runs": [...]}`` where runs alternate
background/foreground pixel counts over the row-major flattening, starting
with background. Scribble maps are a pair of PNGs suffixed ``_pos.png`` /
``_neg.png`` or the JSON form ``{"w": W, "h": H, "pos": [...], "neg": [...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import Mask, RasterError, ScribbleMap, as_mask


def save_mask_png(mask: Mask, path: str | Path) -> None:
    mask = as_mask(mask)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def load_mask_png(path: str | Path) -> Mask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 0


def save_image_png(rgb: np.ndarray, path: str | Path) -> None:
    """Save an (h, w, 3) uint8 image."""
    Image.fromarray(rgb.astype(np.uint8), mode="RGB").save(path)


def load_image_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB")).copy()


def mask_to_runs(mask: Mask) -> list[int]:
    """Alternating background/foreground run lengths, background first."""
    flat = as_mask(mask).ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], changes, [flat.size]))
    runs = [int(b - a) for a, b in zip(edges[:-1], edges[1:])]
    if flat[0]:
        runs.insert(0, 0)  # leading zero-length background run
    return runs


def runs_to_mask(width: int, height: int, runs: list[int]) -> Mask:
    total = sum(runs)
    if total != width * height:
        raise RasterError(f"run lengths sum to {total}, expected {width * height}")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    fg = False
    for r in runs:
        if r < 0:
            raise RasterError("negative run length")
        if fg:
            flat[pos : pos + r] = True
        pos += r
        fg = not fg
    return flat.reshape(height, width)


def mask_to_rle(mask: Mask) -> dict:
    mask = as_mask(mask)
    h, w = mask.shape
    return {"w": w, "h": h, "runs": mask_to_runs(mask)}


def rle_to_mask(obj: dict) -> Mask:
    return runs_to_mask(int(obj["w"]), int(obj["h"]), list(obj["runs"]))


def scribble_to_rle(s: ScribbleMap) -> dict:
    return {
        "w": s.width,
        "h": s.height,
        "pos": mask_to_runs(s.positive),
        "neg": mask_to_runs(s.negative),
    }


def rle_to_scribble(obj: dict) -> ScribbleMap:
    w, h = int(obj["w"]), int(obj["h"])
    return ScribbleMap(
        positive=runs_to_mask(w, h, list(obj["pos"])),
        negative=runs_to_mask(w, h, list(obj["neg"])),
    )


def save_scribble_pngs(s: ScribbleMap, base: str | Path) -> tuple[Path, Path]:
    """Write ``<base>_pos.png`` and ``<base>_neg.png``; returns both paths."""
    base = Path(base)
    pos_path = base.with_name(base.name + "_pos.png")
    neg_path = base.with_name(base.name + "_neg.png")
    save_mask_png(s.positive, pos_path)
    save_mask_png(s.negative, neg_path)
    return pos_path, neg_path


def load_scribble_pngs(base: str | Path) -> ScribbleMap:
    base = Path(base)
    pos = load_mask_png(base.with_name(base.name + "_pos.png"))
    neg = load_mask_png(base.with_name(base.name + "_neg.png"))
    return ScribbleMap(positive=pos, negative=neg)


def save_scribble_json(s: ScribbleMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scribble_to_rle(s)))


def load_scribble_json(path: str | Path) -> ScribbleMap:
    return rle_to_scribble(json.loads(Path(path).read_text()))
