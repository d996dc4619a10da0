"""Planar point-set reduction with width guarantees, and k-line fitting.

Points are ``(n, 2)`` float arrays. The width of a set is the smallest
extent of its projection over all directions; it is attained perpendicular
to a convex-hull edge, so rotating calipers compute it exactly.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

EPS_MAX = 0.49
CELL_FACTOR = 4.0


class CoresetParameterError(ValueError):
    pass


def as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1 and P.size == 2:
        P = P[None]
    if P.ndim != 2 or P.shape[1] != 2 or len(P) < 1:
        raise ValueError(f"expected a non-empty (n, 2) point array, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise ValueError("point coordinates must be finite")
    return P


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (Andrew's monotone chain), collinear points dropped."""
    P = np.unique(as_points(points), axis=0)
    if len(P) <= 2:
        return P
    pts = [tuple(p) for p in P]
    lower: list[tuple] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull)


def width_direction(points) -> tuple[float, np.ndarray]:
    """Minimum width and the unit direction it is measured along (rotating calipers)."""
    H = convex_hull(points)
    h = len(H)
    if h == 1:
        return 0.0, np.array([0.0, 1.0])
    if h == 2:
        d = (H[1] - H[0]) / np.hypot(*(H[1] - H[0]))
        return 0.0, np.array([-d[1], d[0]])
    best, best_dir = np.inf, None
    j = 1
    for i in range(h):
        a, b = H[i], H[(i + 1) % h]
        edge_len = np.hypot(*(b - a))
        # advance the antipodal pointer while the area (height) keeps growing
        while abs(_cross(a, b, H[(j + 1) % h])) > abs(_cross(a, b, H[j])):
            j = (j + 1) % h
        height = abs(_cross(a, b, H[j])) / edge_len
        if height < best:
            best = height
            best_dir = np.array([-(b - a)[1], (b - a)[0]]) / edge_len
    return float(best), best_dir


def directional_width(points) -> float:
    """Exact minimum width via rotating calipers on the convex hull."""
    return width_direction(points)[0]


def diameter(points) -> float:
    H = convex_hull(points)
    if len(H) == 1:
        return 0.0
    diff = H[:, None, :] - H[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1).max()))


def grid_coreset(points, eps: float) -> np.ndarray:
    """Keep one point per occupied cell of a grid aligned with the width direction.

    The grid axes follow the minimum-width direction and its perpendicular;
    along each axis the cell side is ``eps / 4`` of the set's extent, so at
    most ``(4/eps + 1)^2`` cells are occupied. Sizing both axes from the
    diameter would lose the width guarantee on thin sets. The representative
    of a cell is its lexicographically smallest ``(x, y)`` point, and
    representatives keep their order in ``points``.
    """
    P = as_points(points)
    if not 0.0 < eps <= EPS_MAX:
        raise CoresetParameterError(f"eps must lie in (0, {EPS_MAX}], got {eps}")
    _, normal = width_direction(P)
    frame = P @ np.column_stack([[normal[1], -normal[0]], normal])
    frame -= frame.min(0)
    extent = frame.max(0)
    if not np.any(extent):
        return P[:1].copy()
    side = np.where(extent > 0, eps * extent / CELL_FACTOR, 1.0)
    cells = np.floor(frame / side).astype(np.int64)
    # sort by cell, then x, then y; the first row of each cell run wins
    order = np.lexsort((P[:, 1], P[:, 0], cells[:, 1], cells[:, 0]))
    sc = cells[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(sc[1:] != sc[:-1], axis=1)
    keep = np.sort(order[first])
    return P[keep]


def size_bound(eps: float) -> float:
    return (CELL_FACTOR / eps + 1.0) ** 2


# ---------------------------------------------------------------------------
# k-line fitting
# ---------------------------------------------------------------------------

@dataclass
class LineSegment:
    point: np.ndarray
    direction: np.ndarray
    extent: tuple[float, float]

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "direction": self.direction.tolist(),
                "extent": list(self.extent)}


@dataclass
class LineApprox:
    segments: list[LineSegment]
    cost: float
    labels: np.ndarray
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.segments)

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "cost": self.cost,
                           "segments": [s.to_dict() for s in self.segments]})


def _canonical(direction: np.ndarray) -> np.ndarray:
    d = direction / np.linalg.norm(direction)
    if d[0] < 0 or (d[0] == 0 and d[1] < 0):
        d = -d
    return d


def _fit_line(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line: centroid and principal axis."""
    c = P.mean(0)
    if len(P) < 2:
        return c, np.array([1.0, 0.0])
    Q = P - c
    _, vecs = np.linalg.eigh(Q.T @ Q)
    direction = vecs[:, -1]
    if not np.any(Q):
        direction = np.array([1.0, 0.0])
    return c, _canonical(direction)


def _line_sq_dists(P: np.ndarray, anchors: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    diff = P[:, None, :] - anchors[None, :, :]
    cross = diff[..., 0] * dirs[None, :, 1] - diff[..., 1] * dirs[None, :, 0]
    return cross ** 2


def _lloyd_lines(P, anchors, dirs, max_iters):
    k = len(anchors)
    labels = None
    history = []
    for _ in range(max_iters):
        D = _line_sq_dists(P, anchors, dirs)
        new = D.argmin(1)
        cost = float(D[np.arange(len(P)), new].sum())
        if history and cost >= history[-1] and np.array_equal(new, labels):
            break
        history.append(cost)
        labels = new
        for j in range(k):
            members = P[labels == j]
            if len(members) == 0:
                # re-seed from the worst-covered point, as its own one-point line
                far = int(D[np.arange(len(P)), labels].argmax())
                labels[far] = j
                members = P[far : far + 1]
            anchors[j], dirs[j] = _fit_line(members)
    D = _line_sq_dists(P, anchors, dirs)
    labels = D.argmin(1)
    cost = float(D[np.arange(len(P)), labels].sum())
    if not history or cost < history[-1]:
        history.append(cost)
    return anchors, dirs, labels, history


def kline_fit(points, k: int, seed: int = 0, restarts: int = 10,
              max_iters: int = 100) -> LineApprox:
    """Approximate a point set by ``k`` lines (alternating assign/refit).

    Each restart seeds every line through two random distinct points; the
    best final cost wins, earliest restart on ties.
    """
    P = as_points(points)
    n = len(P)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    if k == n:
        anchors = P.copy()
        dirs = np.tile([1.0, 0.0], (n, 1))
        labels = np.arange(n)
        best = (anchors, dirs, labels, [0.0])
    else:
        best = None
        for _ in range(max(restarts, 1)):
            anchors = np.empty((k, 2))
            dirs = np.empty((k, 2))
            for j in range(k):
                a, b = rng.choice(n, size=2, replace=False)
                anchors[j] = P[a]
                d = P[b] - P[a]
                dirs[j] = _canonical(d) if np.any(d) else (1.0, 0.0)
            run = _lloyd_lines(P, anchors, dirs, max_iters)
            if best is None or run[3][-1] < best[3][-1]:
                best = run
    anchors, dirs, labels, history = best
    segments = []
    for j in range(k):
        members = P[labels == j]
        if len(members):
            t = (members - anchors[j]) @ dirs[j]
            extent = (float(t.min()), float(t.max()))
        else:
            extent = (0.0, 0.0)
        segments.append(LineSegment(anchors[j].copy(), dirs[j].copy(), extent))
    return LineApprox(segments=segments, cost=history[-1], labels=labels, history=history)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def read_points_csv(path: str | os.PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [(float(r[0]), float(r[1])) for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return as_points(rows)


def write_points_csv(path: str | os.PathLike, points) -> None:
    P = as_points(points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for x, y in P.tolist():
            writer.writerow([repr(x), repr(y)])


def mask_points(mask: np.ndarray) -> np.ndarray:
    """Pixel centers of a boolean mask as ``(x, y) = (col, row)`` points."""
    rows, cols = np.nonzero(mask)
    return np.column_stack([cols, rows]).astype(np.float64)
