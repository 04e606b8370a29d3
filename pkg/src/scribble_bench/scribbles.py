"""Synthesis of initial and corrective scribbles from ground-truth masks.

Positive strokes are drawn inside target regions using one of three
geometry-aware styles (centerline, wave, contour); negative cross-out
strokes land inside false-positive regions. An adaptive mode picks a style
per connected component from geometric cues. All geometry is perturbed by
smoothed noise to mimic freehand drawing, then clipped back into its source
region so containment always holds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .raster import (
    Mask,
    Polyline,
    RasterError,
    ScribbleMap,
    as_mask,
    connected_components,
    empty_mask,
    rasterize_stroke,
    skeletonize,
    trace_contours,
)


class ScribbleError(ValueError):
    """Raised when scribble synthesis cannot satisfy its contract."""


class TargetTooSmallError(ScribbleError):
    """Target has no component large enough to scribble on."""


class ScribbleStyle(enum.Enum):
    CENTERLINE = "centerline"
    WAVE = "wave"
    CONTOUR = "contour"
    LINE = "line"  # negative strokes only
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class GenParams:
    """Knobs for stroke synthesis. Defaults sized for masks in the
    64..512 px range; everything is overridable."""

    stroke_width: int = 3
    contour_inward_offset: float = 0.25
    wave_amplitude: float = 3.0
    wave_period: float = 24.0
    perturb_sigma: float = 1.5
    min_component_area: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.stroke_width < 1:
            raise ScribbleError("stroke_width must be >= 1")
        if not 0.0 < self.contour_inward_offset < 1.0:
            raise ScribbleError("contour_inward_offset must be in (0, 1)")
        if self.perturb_sigma < 0:
            raise ScribbleError("perturb_sigma must be >= 0")
        if self.min_component_area < 1:
            raise ScribbleError("min_component_area must be >= 1")


@dataclass(frozen=True)
class ErrorMap:
    """Disjoint false-negative / false-positive channels of a prediction."""

    false_negative: Mask  # gt and not pred
    false_positive: Mask  # pred and not gt

    @staticmethod
    def from_masks(pred: Mask, gt: Mask) -> "ErrorMap":
        pred = as_mask(pred)
        gt = as_mask(gt)
        if pred.shape != gt.shape:
            raise RasterError(f"shape mismatch: {pred.shape} vs {gt.shape}")
        return ErrorMap(false_negative=gt & ~pred, false_positive=pred & ~gt)


@dataclass(frozen=True)
class ComponentStats:
    area: int
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    depth_max: float  # max interior distance (canvas border counts as outside)
    aspect: float  # bbox long side / short side
    solidity: float  # area / convex hull area, capped at 1


def component_stats(region: Mask) -> ComponentStats:
    region = as_mask(region)
    ys, xs = np.nonzero(region)
    if ys.size == 0:
        raise ScribbleError("stats of empty component")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    bw, bh = x1 - x0 + 1, y1 - y0 + 1
    depth = interior_depth(region)
    if ys.size < 4:
        solidity = 1.0
    else:
        try:
            hull = ConvexHull(np.stack([xs, ys], axis=1).astype(float))
            solidity = min(1.0, ys.size / max(hull.volume, 1.0))
        except QhullError:  # collinear pixels
            solidity = 1.0
    return ComponentStats(
        area=int(ys.size),
        bbox=(x0, y0, x1, y1),
        depth_max=float(depth.max()),
        aspect=max(bw, bh) / min(bw, bh),
        solidity=solidity,
    )


def interior_depth(region: Mask) -> np.ndarray:
    """Distance to the nearest outside pixel, with the canvas border
    treated as outside."""
    padded = np.pad(as_mask(region), 1)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def select_style(stats: ComponentStats, params: GenParams) -> ScribbleStyle:
    """Geometric-cue style choice: thin or elongated shapes take a
    centerline, large compact ones a contour, the rest a wave."""
    if stats.depth_max <= 2 * params.stroke_width or stats.aspect >= 4.0:
        return ScribbleStyle.CENTERLINE
    if stats.area >= 4 * params.min_component_area and stats.solidity >= 0.7:
        return ScribbleStyle.CONTOUR
    return ScribbleStyle.WAVE


def perturb_stroke(p: Polyline, sigma: float, rng: np.random.Generator) -> Polyline:
    """Displace vertices by smoothed zero-mean noise of scale ``sigma``.

    Noise is low-pass filtered along the polyline so the stroke stays
    smooth, and each displacement is clamped to 3*sigma, keeping the worst
    vertex within 4*sigma of its origin.
    """
    if sigma < 0:
        raise ScribbleError("sigma must be >= 0")
    if sigma == 0:
        return p
    pts = p.points
    noise = rng.normal(0.0, sigma, size=pts.shape)
    mode = "wrap" if p.closed else "nearest"
    smooth = ndimage.gaussian_filter1d(noise, sigma=2.0, axis=0, mode=mode)
    norms = np.hypot(smooth[:, 0], smooth[:, 1])
    cap = 3.0 * sigma
    scale = np.where(norms > cap, cap / np.maximum(norms, 1e-12), 1.0)
    return Polyline(points=pts + smooth * scale[:, None], closed=p.closed, hole=p.hole)


def _skeleton_paths(sk: Mask) -> list[np.ndarray]:
    """Split a thinned mask into ordered pixel paths, starting walks at
    endpoints so strokes run tip to tip; cycles are walked from their
    row-major-first pixel."""
    ys, xs = np.nonzero(sk)
    pixels = set(zip(xs.tolist(), ys.tolist()))
    if not pixels:
        return []
    order = [(int(x), int(y)) for y, x in sorted(zip(ys.tolist(), xs.tolist()))]
    nbr_offsets = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]

    def neighbors(p):
        return [
            (p[0] + dx, p[1] + dy)
            for dx, dy in nbr_offsets
            if (p[0] + dx, p[1] + dy) in pixels
        ]

    degree = {p: len(neighbors(p)) for p in pixels}
    endpoints = [p for p in order if degree[p] <= 1]
    used: set = set()
    paths: list[np.ndarray] = []
    for start in endpoints + order:
        if start in used:
            continue
        used.add(start)
        path = [start]
        cur = start
        while True:
            cands = [n for n in neighbors(cur) if n not in used]
            if not cands:
                break
            cur = cands[0]
            used.add(cur)
            path.append(cur)
        paths.append(np.array(path, dtype=np.float64))
    return paths


def _wave_offset(path: np.ndarray, amplitude: float, period: float,
                 phase: float) -> np.ndarray:
    """Offset centerline vertices sinusoidally along the local normal."""
    if path.shape[0] < 3 or amplitude == 0:
        return path
    seg = np.hypot(*np.diff(path, axis=0).T)
    t = np.concatenate(([0.0], np.cumsum(seg)))
    tangent = np.gradient(path, axis=0)
    tnorm = np.hypot(tangent[:, 0], tangent[:, 1])
    tangent /= np.maximum(tnorm, 1e-12)[:, None]
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    off = amplitude * np.sin(2.0 * np.pi * t / max(period, 1e-6) + phase)
    return path + normal * off[:, None]


def _clip_stroke(stroke: Mask, region: Mask) -> Mask | None:
    """Clip a rasterized stroke into its region; drop strokes that lose
    more than half their pixels."""
    total = int(stroke.sum())
    if total == 0:
        return None
    kept = stroke & region
    if int(kept.sum()) * 2 < total:
        return None
    return kept


def _fallback_dot(region: Mask, width: int) -> Mask:
    depth = np.where(region, interior_depth(region), -1.0)
    iy, ix = np.unravel_index(int(np.argmax(depth)), depth.shape)
    p = Polyline(points=np.array([[ix, iy], [ix, iy]], dtype=np.float64))
    dot = rasterize_stroke(region.shape, p, width) & region
    if not dot.any():  # width-1 dot always survives
        dot = empty_mask(*region.shape)
        dot[iy, ix] = True
    return dot


def _component_strokes(region: Mask, style: ScribbleStyle, params: GenParams,
                       rng: np.random.Generator) -> Mask:
    """Positive strokes for one component, clipped to it."""
    h, w = region.shape
    polylines: list[Polyline] = []
    if style in (ScribbleStyle.CENTERLINE, ScribbleStyle.WAVE):
        paths = _skeleton_paths(skeletonize(region))
        for path in paths:
            if style is ScribbleStyle.WAVE:
                phase = rng.uniform(0.0, 2.0 * np.pi)
                path = _wave_offset(path, params.wave_amplitude,
                                    params.wave_period, phase)
            if path.shape[0] == 1:
                path = np.repeat(path, 2, axis=0)
            polylines.append(Polyline(points=path))
    elif style is ScribbleStyle.CONTOUR:
        depth = interior_depth(region)
        offset = params.contour_inward_offset * float(depth.max())
        inner = depth >= offset
        polylines.extend(p for p in trace_contours(inner) if not p.hole)
    else:
        raise ScribbleError(f"style {style} cannot draw positive strokes")

    out = empty_mask(h, w)
    for poly in polylines:
        poly = perturb_stroke(poly, params.perturb_sigma, rng)
        stroke = rasterize_stroke((h, w), poly, params.stroke_width)
        kept = _clip_stroke(stroke, region)
        if kept is not None:
            out |= kept
    if not out.any():
        out = _fallback_dot(region, params.stroke_width)
    return out


def generate_scribble(gt: Mask, style: ScribbleStyle, params: GenParams,
                      rng: np.random.Generator) -> ScribbleMap:
    """Positive-channel strokes for every qualifying component of ``gt``.

    Every positive pixel lies inside ``gt``; each component with area >=
    ``min_component_area`` receives at least one stroke.
    """
    gt = as_mask(gt)
    if style is ScribbleStyle.LINE:
        raise ScribbleError("line style draws negative strokes only")
    comps = connected_components(gt)
    qualifying = [
        (k, region) for k, region in comps.regions()
        if comps.areas[k - 1] >= params.min_component_area
    ]
    if not qualifying:
        raise TargetTooSmallError("target too small to scribble")
    pos = empty_mask(*gt.shape)
    for _, region in qualifying:
        resolved = style
        if style is ScribbleStyle.ADAPTIVE:
            resolved = select_style(component_stats(region), params)
        pos |= _component_strokes(region, resolved, params, rng)
    return ScribbleMap(positive=pos, negative=empty_mask(*gt.shape))


def _principal_axis(region: Mask) -> np.ndarray:
    ys, xs = np.nonzero(region)
    pts = np.stack([xs, ys], axis=1).astype(float)
    centered = pts - pts.mean(axis=0)
    if pts.shape[0] < 2:
        return np.array([1.0, 0.0])
    cov = centered.T @ centered / pts.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    v = vecs[:, int(np.argmax(vals))]
    n = np.hypot(v[0], v[1])
    return v / n if n > 0 else np.array([1.0, 0.0])


def _march_segment(region: Mask, center: tuple[int, int],
                   direction: np.ndarray) -> np.ndarray:
    """Longest segment through ``center`` along ``direction`` staying
    inside the region."""
    h, w = region.shape
    ends = []
    for sign in (1.0, -1.0):
        t = 0.0
        while True:
            nt = t + 1.0
            x = center[0] + sign * nt * direction[0]
            y = center[1] + sign * nt * direction[1]
            ix, iy = int(round(x)), int(round(y))
            if not (0 <= ix < w and 0 <= iy < h) or not region[iy, ix]:
                break
            t = nt
        ends.append((center[0] + sign * t * direction[0],
                     center[1] + sign * t * direction[1]))
    return np.array(ends, dtype=np.float64)


def generate_negative(region: Mask, params: GenParams,
                      rng: np.random.Generator) -> ScribbleMap:
    """One straight or X-shaped cross-out stroke per component of
    ``region``, drawn through its deepest-interior pixel and clipped to
    the component."""
    region = as_mask(region)
    comps = connected_components(region)
    if comps.count == 0:
        raise ScribbleError("cannot cross out an empty region")
    neg = empty_mask(*region.shape)
    for _, comp in comps.regions():
        depth = np.where(comp, interior_depth(comp), -1.0)
        iy, ix = np.unravel_index(int(np.argmax(depth)), depth.shape)
        center = (int(ix), int(iy))
        stats = component_stats(comp)
        axis = _principal_axis(comp)
        if (stats.area >= 4 * params.min_component_area
                and stats.depth_max >= 2 * params.stroke_width):
            # X shape: two diagonals at +-45 degrees to the principal axis
            rot = np.sqrt(0.5)
            dirs = [
                np.array([axis[0] * rot - axis[1] * rot,
                          axis[0] * rot + axis[1] * rot]),
                np.array([axis[0] * rot + axis[1] * rot,
                          -axis[0] * rot + axis[1] * rot]),
            ]
        else:
            dirs = [axis]
        drew = empty_mask(*region.shape)
        for d in dirs:
            seg = _march_segment(comp, center, d)
            poly = perturb_stroke(Polyline(points=seg), params.perturb_sigma, rng)
            stroke = rasterize_stroke(region.shape, poly, params.stroke_width)
            kept = _clip_stroke(stroke, comp)
            if kept is not None:
                drew |= kept
        if not drew.any():
            drew = _fallback_dot(comp, params.stroke_width)
        neg |= drew
    return ScribbleMap(positive=empty_mask(*region.shape), negative=neg)


def corrective_scribbles(pred: Mask, gt: Mask, params: GenParams,
                         rng: np.random.Generator) -> ScribbleMap:
    """Error-driven correction strokes: positive geometry-aware strokes on
    false-negative components, negative cross-outs on false-positive
    components. Components below ``min_component_area`` are ignored; a
    perfect prediction yields an empty map."""
    err = ErrorMap.from_masks(pred, gt)
    h, w = err.false_negative.shape
    pos = empty_mask(h, w)
    neg = empty_mask(h, w)

    fn_comps = connected_components(err.false_negative)
    if any(a >= params.min_component_area for a in fn_comps.areas):
        pos = generate_scribble(err.false_negative, ScribbleStyle.ADAPTIVE,
                                params, rng).positive

    fp_comps = connected_components(err.false_positive)
    keep_fp = empty_mask(h, w)
    for k, comp in fp_comps.regions():
        if fp_comps.areas[k - 1] >= params.min_component_area:
            keep_fp |= comp
    if keep_fp.any():
        neg = generate_negative(keep_fp, params, rng).negative

    return ScribbleMap(positive=pos, negative=neg)
