"""Dense binary-raster primitives: components, distances, skeletons, contours,
stroke rasterization, and the two-channel scribble map.

Masks are plain ``(h, w)`` boolean numpy arrays in row-major order. All
functions are pure; nothing here mutates its inputs.

Coordinates are ``(x, y)`` with ``x`` = column and ``y`` = row, so a pixel
``(x, y)`` lives at ``mask[y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

Mask = np.ndarray  # bool, shape (h, w)

# 8-connectivity structuring element shared by labeling and morphology.
_STRUCT8 = np.ones((3, 3), dtype=bool)


class RasterError(ValueError):
    """Raised on malformed raster inputs (dimension mismatch, bad geometry)."""


def as_mask(a: np.ndarray) -> Mask:
    """Coerce an array-like to a 2-D boolean mask."""
    m = np.asarray(a)
    if m.ndim != 2:
        raise RasterError(f"mask must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise RasterError(f"mask sides must be >= 1, got shape {m.shape}")
    return m.astype(bool, copy=False)


def empty_mask(height: int, width: int) -> Mask:
    return np.zeros((height, width), dtype=bool)


@dataclass(frozen=True)
class ScribbleMap:
    """Two-channel stroke raster: positive marks the target, negative marks
    background. A pixel carries at most one label."""

    positive: Mask
    negative: Mask

    def __post_init__(self):
        pos = as_mask(self.positive)
        neg = as_mask(self.negative)
        if pos.shape != neg.shape:
            raise RasterError(f"channel shapes differ: {pos.shape} vs {neg.shape}")
        if (pos & neg).any():
            raise RasterError("positive and negative channels overlap")
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negative", neg)

    @property
    def height(self) -> int:
        return self.positive.shape[0]

    @property
    def width(self) -> int:
        return self.positive.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.positive.shape

    def is_empty(self) -> bool:
        return not (self.positive.any() or self.negative.any())

    @staticmethod
    def empty(height: int, width: int) -> "ScribbleMap":
        return ScribbleMap(empty_mask(height, width), empty_mask(height, width))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScribbleMap):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.positive, other.positive)
            and np.array_equal(self.negative, other.negative)
        )


@dataclass(frozen=True)
class LabelComponents:
    """8-connected component labeling. ``labels`` holds 0 for background and
    k in [1, count] for the k-th component, ordered by first pixel met in a
    row-major scan."""

    labels: np.ndarray  # int32 (h, w)
    count: int
    areas: np.ndarray  # int64 (count,)
    bboxes: np.ndarray  # int64 (count, 4) as (x0, y0, x1, y1) inclusive

    def component(self, k: int) -> Mask:
        """Boolean mask of component ``k`` (1-based)."""
        if not 1 <= k <= self.count:
            raise RasterError(f"component id {k} out of range [1, {self.count}]")
        return self.labels == k

    def regions(self):
        """Yield (k, mask) for every component."""
        for k in range(1, self.count + 1):
            yield k, self.labels == k


@dataclass
class Polyline:
    """Ordered stroke geometry in (x, y) pixel coordinates."""

    points: np.ndarray  # float64 (n, 2)
    closed: bool = False
    hole: bool = False  # set on inner boundaries returned by trace_contours

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise RasterError(f"polyline points must be (n, 2), got {pts.shape}")
        n_min = 3 if self.closed else 2
        if pts.shape[0] < n_min:
            raise RasterError(
                f"{'closed' if self.closed else 'open'} polyline needs >= {n_min} points"
            )
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]


def connected_components(mask: Mask) -> LabelComponents:
    """Label 8-connected components, ordered by first row-major pixel."""
    mask = as_mask(mask)
    raw, n = ndimage.label(mask, structure=_STRUCT8)
    if n == 0:
        return LabelComponents(
            labels=raw.astype(np.int32),
            count=0,
            areas=np.zeros(0, dtype=np.int64),
            bboxes=np.zeros((0, 4), dtype=np.int64),
        )
    # Relabel so component ids follow first-encounter order in a row-major scan.
    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids != 0
    order = np.argsort(first[keep])
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[ids[keep][order]] = np.arange(1, n + 1, dtype=np.int32)
    labels = remap[raw]

    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:].astype(np.int64)
    bboxes = np.zeros((n, 4), dtype=np.int64)
    for k, sl in enumerate(ndimage.find_objects(labels)):
        ys, xs = sl
        bboxes[k] = (xs.start, ys.start, xs.stop - 1, ys.stop - 1)
    return LabelComponents(labels=labels, count=n, areas=areas, bboxes=bboxes)


def centroid_in_region(region: Mask) -> tuple[int, int]:
    """Arithmetic-mean pixel of a region, snapped inside if the mean falls
    outside (concave regions): returns the region pixel with maximal interior
    distance, row-major ties first."""
    region = as_mask(region)
    ys, xs = np.nonzero(region)
    if ys.size == 0:
        raise RasterError("centroid of empty region")
    cx = int(np.floor(xs.mean() + 0.5))
    cy = int(np.floor(ys.mean() + 0.5))
    if region[cy, cx]:
        return cx, cy
    depth = ndimage.distance_transform_edt(region)
    iy, ix = np.unravel_index(int(np.argmax(depth)), region.shape)
    return int(ix), int(iy)


def distance_transform(mask: Mask, metric: str = "euclidean") -> np.ndarray:
    """Per-pixel distance to the nearest foreground pixel of ``mask``.

    ``euclidean`` is exact; ``chamfer`` is the 3-4 approximation (weights
    3 orthogonal / 4 diagonal, divided by 3 to land in pixel units).
    All-background input yields +inf everywhere.
    """
    mask = as_mask(mask)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    if metric == "euclidean":
        return ndimage.distance_transform_edt(~mask).astype(np.float64)
    if metric == "chamfer":
        return _chamfer_34(mask)
    raise RasterError(f"unknown metric {metric!r}")


def _chamfer_34(mask: Mask) -> np.ndarray:
    h, w = mask.shape
    big = 3.0 * (h + w) + 10.0
    d = np.where(mask, 0.0, big)
    # forward pass: NW, N, NE, W
    for y in range(h):
        for x in range(w):
            v = d[y, x]
            if x > 0:
                v = min(v, d[y, x - 1] + 3.0)
            if y > 0:
                v = min(v, d[y - 1, x] + 3.0)
                if x > 0:
                    v = min(v, d[y - 1, x - 1] + 4.0)
                if x < w - 1:
                    v = min(v, d[y - 1, x + 1] + 4.0)
            d[y, x] = v
    # backward pass: SE, S, SW, E
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            v = d[y, x]
            if x < w - 1:
                v = min(v, d[y, x + 1] + 3.0)
            if y < h - 1:
                v = min(v, d[y + 1, x] + 3.0)
                if x < w - 1:
                    v = min(v, d[y + 1, x + 1] + 4.0)
                if x > 0:
                    v = min(v, d[y + 1, x - 1] + 4.0)
            d[y, x] = v
    return d / 3.0


def interior_distance(region: Mask) -> np.ndarray:
    """Exact euclidean distance to the nearest background pixel; 0 outside
    the region, >= 1 on region pixels."""
    return ndimage.distance_transform_edt(as_mask(region)).astype(np.float64)


def skeletonize(mask: Mask) -> Mask:
    """Zhang-Suen two-subiteration thinning, run to a fixed point.

    The result is a subset of the input, preserves 8-connectivity of each
    component, and is idempotent (the fixed point thins to itself).

    Plain Zhang-Suen erases some tiny components outright (a 2x2 block
    vanishes in one parallel pass); any component whose skeleton would be
    empty gets its deepest-interior pixel restored instead.
    """
    mask = as_mask(mask)
    img = np.pad(mask, 1).astype(np.uint8)
    while True:
        changed = False
        for subiter in (0, 1):
            p2 = np.roll(img, 1, axis=0)   # N
            p3 = np.roll(p2, -1, axis=1)   # NE
            p4 = np.roll(img, -1, axis=1)  # E
            p5 = np.roll(p4, -1, axis=0)   # SE
            p6 = np.roll(img, -1, axis=0)  # S
            p7 = np.roll(p6, 1, axis=1)    # SW
            p8 = np.roll(img, 1, axis=1)   # W
            p9 = np.roll(p8, 1, axis=0)    # NW
            ring = [p2, p3, p4, p5, p6, p7, p8, p9]
            b = sum(ring)
            a = sum(
                (ring[i] == 0) & (ring[(i + 1) % 8] == 1) for i in range(8)
            )
            if subiter == 0:
                cond = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            delete = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & cond
            if delete.any():
                img[delete] = 0
                changed = True
        if not changed:
            break
    sk = img[1:-1, 1:-1].astype(bool)
    if mask.any():
        comps = connected_components(mask)
        for k, region in comps.regions():
            if not (sk & region).any():
                depth = np.where(region, ndimage.distance_transform_edt(region), -1.0)
                iy, ix = np.unravel_index(int(np.argmax(depth)), depth.shape)
                sk[iy, ix] = True
    return sk


# Moore neighborhood in clockwise screen order starting East: (dx, dy).
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def trace_contours(mask: Mask, include_holes: bool = False) -> list[Polyline]:
    """Moore boundary tracing: one closed polyline per outer component
    boundary, vertices on foreground boundary pixels, counterclockwise
    (positive shoelace area in (x, y) coordinates). With ``include_holes``,
    inner boundaries are appended with ``hole=True``.
    """
    mask = as_mask(mask)
    comps = connected_components(mask)
    out: list[Polyline] = []
    for k, region in comps.regions():
        out.append(_trace_one(region, hole=False))
        if include_holes:
            filled = ndimage.binary_fill_holes(region)
            holes = filled & ~region
            hole_comps = connected_components(holes)
            for _, hole_region in hole_comps.regions():
                # Trace the region pixels adjacent to this hole.
                rim = ndimage.binary_dilation(hole_region, structure=_STRUCT8) & region
                out.append(_trace_one(rim, hole=True))
    return out


def _trace_one(region: Mask, hole: bool) -> Polyline:
    ys, xs = np.nonzero(region)
    first = np.lexsort((xs, ys))[0]
    start = (int(xs[first]), int(ys[first]))
    h, w = region.shape

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(region[y, x])

    # Single pixel: degenerate closed loop on that pixel.
    sx, sy = start
    if not any(fg(sx + dx, sy + dy) for dx, dy in _MOORE):
        pts = np.array([[sx, sy]] * 3, dtype=np.float64)
        return Polyline(points=pts, closed=True, hole=hole)

    def scan(cur, bg_dir):
        # Clockwise Moore scan starting after the backtrack background cell;
        # returns (next pixel, its direction, direction of last bg examined).
        for i in range(1, 9):
            d = (bg_dir + i) % 8
            dx, dy = _MOORE[d]
            nx, ny = cur[0] + dx, cur[1] + dy
            if fg(nx, ny):
                return (nx, ny), d, (bg_dir + i - 1) % 8
        raise RasterError("scan from isolated pixel")  # guarded above

    # start is the row-major-first pixel, so its West cell is background.
    bg_dir = 4
    contour: list[tuple[int, int]] = []
    cur = start
    first_move = None
    limit = 4 * region.size + 8
    while True:
        nxt, d, last_bg = scan(cur, bg_dir)
        if cur == start:
            # Jacob's criterion: closed once the walk repeats its first move.
            if first_move is None:
                first_move = (nxt, d)
            elif (nxt, d) == first_move:
                break
        contour.append(cur)
        bg_cell = (cur[0] + _MOORE[last_bg][0], cur[1] + _MOORE[last_bg][1])
        bg_dir = _MOORE.index((bg_cell[0] - nxt[0], bg_cell[1] - nxt[1]))
        cur = nxt
        if len(contour) > limit:  # safety net, unreachable
            raise RasterError("contour tracing failed to close")
    pts = np.array(contour, dtype=np.float64)
    if pts.shape[0] < 3:
        pts = np.vstack([pts, pts[:1]])  # 2-pixel component -> padded loop
    if _shoelace(pts) < 0:
        pts = pts[::-1].copy()
    return Polyline(points=pts, closed=True, hole=hole)


def _shoelace(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def rasterize_stroke(shape: tuple[int, int], polyline: Polyline, width: int) -> Mask:
    """Set every pixel whose center lies within ``width / 2`` of a polyline
    segment; clipped to the canvas. Degenerate zero-length segments paint a
    dot of the same radius."""
    if width < 1:
        raise RasterError(f"stroke width must be >= 1, got {width}")
    pts = polyline.points
    if pts.shape[0] < 2:
        raise RasterError("polyline with < 2 points cannot be rasterized")
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    radius = width / 2.0
    segs = list(zip(pts[:-1], pts[1:]))
    if polyline.closed:
        segs.append((pts[-1], pts[0]))
    for a, b in segs:
        x0 = max(int(np.floor(min(a[0], b[0]) - radius)), 0)
        x1 = min(int(np.ceil(max(a[0], b[0]) + radius)), w - 1)
        y0 = max(int(np.floor(min(a[1], b[1]) - radius)), 0)
        y1 = min(int(np.ceil(max(a[1], b[1]) + radius)), h - 1)
        if x0 > x1 or y0 > y1:
            continue
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        gx, gy = np.meshgrid(xs, ys)
        d = _segment_distance(gx, gy, a, b)
        out[y0 : y1 + 1, x0 : x1 + 1] |= d <= radius
    return out


def _segment_distance(px: np.ndarray, py: np.ndarray, a, b) -> np.ndarray:
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def channel_max(a: ScribbleMap, b: ScribbleMap) -> ScribbleMap:
    """Per-channel union of two scribble maps. Where the union would label a
    pixel both positive and negative, the latest map ``b`` wins."""
    if a.shape != b.shape:
        raise RasterError(f"scribble map shapes differ: {a.shape} vs {b.shape}")
    pos = (a.positive & ~b.negative) | b.positive
    neg = (a.negative & ~b.positive) | b.negative
    return ScribbleMap(positive=pos, negative=neg)


def dilate(mask: Mask, radius: float) -> Mask:
    """Euclidean dilation by ``radius`` pixels."""
    mask = as_mask(mask)
    if radius <= 0 or not mask.any():
        return mask.copy()
    return ndimage.distance_transform_edt(~mask) <= radius
