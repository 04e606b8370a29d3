"""Independent brute-force oracles used across the test suite.

Everything here is deliberately naive (flood fill, all-pairs scans,
Bellman-Ford style relaxation) and stays uncoupled from the library
implementations it checks.
"""

from __future__ import annotations

import numpy as np


def flood_fill_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected labeling by BFS flood fill in row-major scan order."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    nxt = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] and labels[y, x] == 0:
                nxt += 1
                stack = [(y, x)]
                labels[y, x] = nxt
                while stack:
                    cy, cx = stack.pop()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx_ = cy + dy, cx + dx
                            if (
                                0 <= ny < h
                                and 0 <= nx_ < w
                                and mask[ny, nx_]
                                and labels[ny, nx_] == 0
                            ):
                                labels[ny, nx_] = nxt
                                stack.append((ny, nx_))
    return labels, nxt


def brute_force_edt(mask: np.ndarray) -> np.ndarray:
    """All-pairs nearest-foreground euclidean distance."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    out = np.full((h, w), np.inf)
    if ys.size == 0:
        return out
    for y in range(h):
        for x in range(w):
            out[y, x] = np.sqrt(((ys - y) ** 2 + (xs - x) ** 2).min())
    return out


def brute_force_stroke(shape: tuple[int, int], pts: np.ndarray, width: int,
                       closed: bool = False) -> np.ndarray:
    """Per-pixel point-to-segment distance test, dist <= width / 2."""
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    segs = list(zip(pts[:-1], pts[1:]))
    if closed:
        segs.append((pts[-1], pts[0]))
    for y in range(h):
        for x in range(w):
            for a, b in segs:
                if _point_segment_distance(x, y, a, b) <= width / 2.0:
                    out[y, x] = True
                    break
    return out


def _point_segment_distance(px, py, a, b) -> float:
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return float(np.hypot(px - ax, py - ay))
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = min(max(t, 0.0), 1.0)
    return float(np.hypot(px - (ax + t * dx), py - (ay + t * dy)))


def zhang_suen_reference(mask: np.ndarray) -> np.ndarray:
    """Textbook per-pixel Zhang-Suen thinning, nested loops, no vectorization."""
    img = mask.astype(np.uint8).copy()
    h, w = img.shape

    def neighbors(y, x):
        def at(yy, xx):
            return int(img[yy, xx]) if 0 <= yy < h and 0 <= xx < w else 0

        return [
            at(y - 1, x), at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
            at(y + 1, x), at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1),
        ]  # P2..P9

    changed = True
    while changed:
        changed = False
        for subiter in (0, 1):
            to_delete = []
            for y in range(h):
                for x in range(w):
                    if not img[y, x]:
                        continue
                    p = neighbors(y, x)
                    b = sum(p)
                    if not (2 <= b <= 6):
                        continue
                    a = sum(
                        1 for i in range(8) if p[i] == 0 and p[(i + 1) % 8] == 1
                    )
                    if a != 1:
                        continue
                    p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
                    if subiter == 0:
                        if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                            continue
                    else:
                        if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                            continue
                    to_delete.append((y, x))
            if to_delete:
                changed = True
                for y, x in to_delete:
                    img[y, x] = 0
    return img.astype(bool)


def grid_shortest_paths(cost_edges, n_nodes: int, sources) -> np.ndarray:
    """Bellman-Ford style relaxation to exact convergence.

    ``cost_edges``: iterable of (u, v, weight); symmetric edges must be
    listed both ways.
    """
    dist = np.full(n_nodes, np.inf)
    for s in sources:
        dist[s] = 0.0
    edges = list(cost_edges)
    for _ in range(n_nodes):
        updated = False
        for u, v, wgt in edges:
            nd = dist[u] + wgt
            if nd < dist[v] - 1e-15:
                dist[v] = nd
                updated = True
        if not updated:
            break
    return dist


def random_blob(rng: np.random.Generator, h: int, w: int, p: float = 0.45,
                smooth: int = 1) -> np.ndarray:
    """Random smooth-ish blob mask for property tests."""
    noise = rng.random((h, w))
    m = noise < p
    for _ in range(smooth):
        # majority vote over the 3x3 neighborhood
        acc = np.zeros((h, w), dtype=int)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                shifted = np.zeros((h, w), dtype=int)
                ys = slice(max(dy, 0), h + min(dy, 0))
                xs = slice(max(dx, 0), w + min(dx, 0))
                ys_src = slice(max(-dy, 0), h + min(-dy, 0))
                xs_src = slice(max(-dx, 0), w + min(-dx, 0))
                shifted[ys, xs] = m[ys_src, xs_src]
                acc += shifted
        m = acc >= 5
    return m
