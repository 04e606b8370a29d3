"""Pluggable segmentation backends behind one session interface.

Three kinds: the toy refinement network, an exact geodesic seeded
segmenter (gradient-weighted shortest paths from positive vs negative
strokes), and a ground-truth oracle with a scheduled fidelity ramp for
protocol testing. A session consumes scribble maps; point prompts become
single-pixel strokes so one prompt representation serves every backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .raster import Mask, RasterError, ScribbleMap, as_mask, channel_max, empty_mask
from .refine import RefineConfig, SessionState, init_session, refine_step
from .seeding import derive_rng
from .toynet import ToyNet

SEGMENTER_KINDS = ("toynet", "geodesic", "oracle")

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GeodesicParams:
    edge_weight: float = 20.0  # balance of intensity difference vs step length
    connectivity: int = 8

    def __post_init__(self):
        if self.edge_weight < 0:
            raise ValueError("edge_weight must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass(frozen=True)
class OracleParams:
    schedule: tuple[float, ...] = (0.6, 0.85, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not self.schedule:
            raise ValueError("schedule must be non-empty")
        if any(not 0.0 <= f <= 1.0 for f in self.schedule):
            raise ValueError("fidelity values must be in [0, 1]")
        if any(b < a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("fidelity must be non-decreasing across rounds")


def intensity_of(image: np.ndarray) -> np.ndarray:
    """Luma in [0, 1] from an RGB or grayscale image."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr @ _LUMA
    if arr.max() > 1.0:
        arr = arr / 255.0
    return arr


def _grid_graph(intensity: np.ndarray, params: GeodesicParams) -> coo_matrix:
    h, w = intensity.shape
    n = h * w
    idx = np.arange(n).reshape(h, w)
    offsets = [(0, 1, 1.0), (1, 0, 1.0)]
    if params.connectivity == 8:
        s2 = float(np.sqrt(2.0))
        offsets += [(1, 1, s2), (1, -1, s2)]
    rows, cols, weights = [], [], []
    for dy, dx, step in offsets:
        src = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
        dst = (slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
        u = idx[src].ravel()
        v = idx[dst].ravel()
        cost = step * (
            1.0 + params.edge_weight * np.abs(intensity[src] - intensity[dst]).ravel()
        )
        rows.append(u)
        cols.append(v)
        weights.append(cost)
    return coo_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def geodesic_distances(intensity: np.ndarray, seeds: Mask,
                       params: GeodesicParams) -> np.ndarray:
    """Exact shortest-path distance from every pixel to the seed set, with
    edge cost = euclidean step * (1 + edge_weight * |intensity diff|)."""
    seeds = as_mask(seeds)
    if intensity.shape != seeds.shape:
        raise RasterError(
            f"intensity {intensity.shape} and seeds {seeds.shape} differ")
    if not seeds.any():
        return np.full(intensity.shape, np.inf)
    graph = _grid_graph(intensity, params)
    sources = np.flatnonzero(seeds.ravel())
    dist = dijkstra(graph, directed=False, indices=sources, min_only=True)
    return dist.reshape(intensity.shape)


def geodesic_segment(image: np.ndarray, scribbles: ScribbleMap,
                     params: GeodesicParams) -> Mask:
    """Label each pixel by the nearer seed set, ties to positive. Without
    negative seeds everything is foreground; without positive seeds,
    background."""
    intensity = intensity_of(image)
    if intensity.shape != scribbles.shape:
        raise RasterError(
            f"image {intensity.shape} and scribbles {scribbles.shape} differ")
    has_pos = bool(scribbles.positive.any())
    has_neg = bool(scribbles.negative.any())
    if not has_pos:
        return empty_mask(*intensity.shape)
    if not has_neg:
        return np.ones(intensity.shape, dtype=bool)
    d_pos = geodesic_distances(intensity, scribbles.positive, params)
    d_neg = geodesic_distances(intensity, scribbles.negative, params)
    return d_pos <= d_neg


def oracle_segment(gt: Mask, round_index: int, params: OracleParams) -> Mask:
    """Ground truth corrupted to the scheduled fidelity: one eroded patch of
    misses and one dilated patch of spurious foreground, with pixel counts
    fixed by the fidelity so quality is monotone in the schedule."""
    gt = as_mask(gt)
    if round_index < 0:
        raise ValueError("round_index must be >= 0")
    fidelity = params.schedule[min(round_index, len(params.schedule) - 1)]
    area = int(gt.sum())
    budget = int(round((1.0 - fidelity) * area))
    if budget == 0:
        return gt.copy()
    rng = derive_rng(params.seed, "oracle", round_index)
    fn_quota = min(budget // 2, area)
    fp_quota = min(budget - fn_quota, int((~gt).sum()))
    out = gt.copy()
    if fn_quota > 0:
        patch = _grow_patch(gt, fn_quota, rng)
        out &= ~patch
    if fp_quota > 0:
        patch = _grow_patch(~gt, fp_quota, rng)
        out |= patch
    return out


def _grow_patch(allowed: Mask, quota: int, rng: np.random.Generator) -> Mask:
    """BFS-grow a connected patch of exactly ``quota`` pixels inside
    ``allowed``, from a random start; spills to new starts if walled in."""
    h, w = allowed.shape
    remaining = allowed.copy()
    patch = np.zeros_like(allowed)
    grown = 0
    ys, xs = np.nonzero(remaining)
    while grown < quota and ys.size:
        i = int(rng.integers(ys.size))
        frontier = [(int(ys[i]), int(xs[i]))]
        remaining[ys[i], xs[i]] = False
        while frontier and grown < quota:
            y, x = frontier.pop(0)
            patch[y, x] = True
            grown += 1
            for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and remaining[ny, nx]:
                    remaining[ny, nx] = False
                    frontier.append((ny, nx))
        ys, xs = np.nonzero(remaining)
    return patch


# ---- session interface ----


class SegmenterSession:
    """Common contract: feed the initial prompt on the first predict, then
    correction strokes; each predict returns the new mask."""

    kind: str

    @property
    def round(self) -> int:
        raise NotImplementedError

    def predict(self, prompt: ScribbleMap | None) -> Mask:
        raise NotImplementedError


class GeodesicSession(SegmenterSession):
    kind = "geodesic"

    def __init__(self, image: np.ndarray, params: GeodesicParams):
        self._intensity = intensity_of(image)
        self._params = params
        h, w = self._intensity.shape
        self._acc = ScribbleMap.empty(h, w)
        self._round = 0

    @property
    def round(self) -> int:
        return self._round

    @property
    def accumulated(self) -> ScribbleMap:
        return self._acc

    def predict(self, prompt: ScribbleMap | None) -> Mask:
        if prompt is not None:
            self._acc = channel_max(self._acc, prompt)
        mask = geodesic_segment(self._intensity, self._acc, self._params)
        self._round += 1
        return mask


class OracleSession(SegmenterSession):
    kind = "oracle"

    def __init__(self, gt: Mask, params: OracleParams):
        self._gt = as_mask(gt)
        self._params = params
        self._round = 0

    @property
    def round(self) -> int:
        return self._round

    def predict(self, prompt: ScribbleMap | None) -> Mask:
        mask = oracle_segment(self._gt, self._round, self._params)
        self._round += 1
        return mask


class ToyNetSession(SegmenterSession):
    kind = "toynet"

    def __init__(self, image: np.ndarray, net: ToyNet, cfg: RefineConfig):
        self._image = np.asarray(image)
        self._net = net
        self._cfg = cfg
        self._state: SessionState | None = None

    @property
    def round(self) -> int:
        return 0 if self._state is None else self._state.t

    def predict(self, prompt: ScribbleMap | None) -> Mask:
        h, w = self._image.shape[:2]
        if self._state is None:
            s0 = prompt if prompt is not None else ScribbleMap.empty(h, w)
            self._state = init_session(self._image, s0, self._net, self._cfg)
            mask, self._state = refine_step(self._state, None, self._net, self._cfg)
        else:
            corr = prompt if prompt is not None else ScribbleMap.empty(h, w)
            mask, self._state = refine_step(self._state, corr, self._net, self._cfg)
        return mask


def make_session(
    kind: str,
    image: np.ndarray,
    *,
    gt: Mask | None = None,
    geodesic: GeodesicParams | None = None,
    oracle: OracleParams | None = None,
    net: ToyNet | None = None,
    refine_cfg: RefineConfig | None = None,
) -> SegmenterSession:
    if kind == "geodesic":
        return GeodesicSession(image, geodesic or GeodesicParams())
    if kind == "oracle":
        if gt is None:
            raise ValueError("oracle backend needs ground truth")
        return OracleSession(gt, oracle or OracleParams())
    if kind == "toynet":
        if net is None:
            raise ValueError("toynet backend needs network parameters")
        return ToyNetSession(image, net, refine_cfg or RefineConfig(net=net.cfg))
    raise ValueError(f"unknown backend {kind!r}; expected one of {SEGMENTER_KINDS}")


def points_to_scribble(points: list[tuple[int, int, bool]],
                       shape: tuple[int, int]) -> ScribbleMap:
    """Clicks as single-pixel strokes: (x, y, positive) triples."""
    h, w = shape
    pos = empty_mask(h, w)
    neg = empty_mask(h, w)
    for x, y, positive in points:
        if not (0 <= x < w and 0 <= y < h):
            raise RasterError(f"click ({x}, {y}) outside canvas {w}x{h}")
        (pos if positive else neg)[y, x] = True
    return ScribbleMap(positive=pos, negative=neg & ~pos)
