"""Hausdorff distance between discretized closed subsets of a box.

Sets live in [0, H] x [0, 1] and are compared after normalizing time
by H, so the metric is Euclidean on the unit square regardless of the
horizon. The norm choice is a convention: nothing downstream depends
on the aspect ratio once both sets go through the same normalization.

A PlanarSet stores explicit points and, optionally, vertical interval
columns (t, y_low, y_high) that are expanded to delta-spaced samples
on demand; with both samplings delta-dense, the computed distance is
within delta of the continuum value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree

if TYPE_CHECKING:
    from .spike_limit import LimitGraph
    from .twostate import Path

__all__ = ["PlanarSet", "graph_of", "planar_from_limit", "hausdorff"]

DEFAULT_DELTA = 1e-3

QUERY_CHUNK = 1 << 20


@dataclass
class PlanarSet:
    """Finite sampling of a closed subset of [0, H] x [0, 1]."""

    points: np.ndarray
    columns: np.ndarray
    H: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.columns = np.asarray(self.columns, dtype=float).reshape(-1, 3)
        if self.H < 0:
            raise ValueError("H must be nonnegative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        tol_t = self.delta * max(self.H, 1.0)
        for t, y in ((self.points[:, 0], self.points[:, 1]),
                     (self.columns[:, 0], None)):
            if t.size and (t.min() < -tol_t or t.max() > self.H + tol_t):
                raise ValueError("time coordinates leave the bounding box")
        if self.points.size and (
                self.points[:, 1].min() < -self.delta
                or self.points[:, 1].max() > 1.0 + self.delta):
            raise ValueError("y coordinates leave the bounding box")
        if self.columns.size:
            lo, hi = self.columns[:, 1], self.columns[:, 2]
            if np.any(lo > hi):
                raise ValueError("columns need y_low <= y_high")
            if lo.min() < -self.delta or hi.max() > 1.0 + self.delta:
                raise ValueError("column ends leave the bounding box")

    def is_empty(self) -> bool:
        return self.points.size == 0 and self.columns.size == 0

    def expand(self) -> np.ndarray:
        """All samples in raw coordinates: points plus columns sampled
        every delta in y (endpoints always included)."""
        parts = []
        if self.points.size:
            parts.append(self.points)
        if self.columns.size:
            t, lo, hi = (self.columns[:, 0], self.columns[:, 1],
                         self.columns[:, 2])
            n = np.maximum(np.ceil((hi - lo) / self.delta).astype(np.int64), 1)
            col_of = np.repeat(np.arange(t.size), n)
            offs = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
            frac = offs / n[col_of]
            ys = lo[col_of] + frac * (hi[col_of] - lo[col_of])
            parts.append(np.column_stack([t[col_of], ys]))
            parts.append(np.column_stack([t, hi]))
        return np.concatenate(parts, axis=0)

    def normalized(self) -> np.ndarray:
        """Expanded samples with time scaled into the unit square."""
        pts = self.expand().copy()
        if self.H > 0:
            pts[:, 0] /= self.H
        else:
            pts[:, 0] = 0.0
        return pts


def graph_of(path: Path, delta: float = DEFAULT_DELTA,
             H: float | None = None) -> PlanarSet:
    """Graph {(t, x_t)} of a path as a PlanarSet, resampled so that no
    polyline edge is longer than delta in the normalized box. Original
    vertices are always kept."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    t, x = path.times, path.values
    if H is None:
        H = float(path.info.get("H", t[-1])) if path.info else float(t[-1])
    if t.size == 1:
        return PlanarSet(points=np.column_stack([t, x]),
                         columns=np.empty((0, 3)), H=H, delta=delta)
    tn = t / H if H > 0 else np.zeros_like(t)
    seg = np.hypot(np.diff(tn), np.diff(x))
    n = np.maximum(np.ceil(seg / delta).astype(np.int64), 1)
    edge_of = np.repeat(np.arange(seg.size), n)
    offs = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
    frac = offs / n[edge_of]
    ts = t[edge_of] + frac * (t[edge_of + 1] - t[edge_of])
    xs = x[edge_of] + frac * (x[edge_of + 1] - x[edge_of])
    pts = np.column_stack([
        np.concatenate([ts, t[-1:]]),
        np.concatenate([xs, x[-1:]]),
    ])
    return PlanarSet(points=pts, columns=np.empty((0, 3)), H=H, delta=delta)


def planar_from_limit(graph: LimitGraph,
                      delta: float = DEFAULT_DELTA) -> PlanarSet:
    """PlanarSet of a limit graph: the chain's horizontal segments
    sampled every delta in normalized time, plus the spike and crossing
    columns as interval triples."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    H = graph.H
    starts, ends, states = graph.chain.epochs()
    step = delta * H if H > 0 else delta
    parts = []
    for a, b, s in zip(starts, ends, states):
        m = max(int(np.ceil((b - a) / step)), 1)
        ts = np.linspace(a, b, m + 1)
        parts.append(np.column_stack([ts, np.full(ts.size, float(s))]))
    pts = np.concatenate(parts, axis=0) if parts else np.empty((0, 2))
    return PlanarSet(points=pts, columns=graph.columns, H=H, delta=delta)


def _directed(src: np.ndarray, tree: cKDTree) -> float:
    worst = 0.0
    for start in range(0, src.shape[0], QUERY_CHUNK):
        d, _ = tree.query(src[start:start + QUERY_CHUNK], k=1)
        m = float(np.max(d))
        if m > worst:
            worst = m
    return worst


def hausdorff(A: PlanarSet, B: PlanarSet) -> float:
    """Hausdorff distance in the normalized box: the larger of the two
    directed max-min Euclidean distances, exact for the samplings."""
    if A.is_empty() or B.is_empty():
        raise ValueError("hausdorff needs nonempty sets")
    pa = A.normalized()
    pb = B.normalized()
    ta = cKDTree(pa)
    tb = cKDTree(pb)
    return max(_directed(pa, tb), _directed(pb, ta))
