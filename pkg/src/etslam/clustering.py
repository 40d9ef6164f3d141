"""DBSCAN recognition of extended targets from accumulated map points.

Classic DBSCAN semantics: a point is core iff it has >= min_pts neighbors
within eps (closed ball, itself included).  Clusters are grown from core
points scanned in input order with FIFO expansion, so border points attach
to the first core cluster that reaches them.  Core/noise status is
independent of input order; border labels can differ by permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    eps: float = 0.5
    min_pts: int = 3

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


def dbscan(points: np.ndarray, params: ClusterParams = ClusterParams()) -> np.ndarray:
    """Cluster labels per point; noise is labeled NOISE (-1), ids contiguous from 0."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=int)
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    tree = cKDTree(points)
    neighbors = tree.query_ball_point(points, params.eps)
    core = np.array([len(nb) >= params.min_pts for nb in neighbors])
    labels = np.full(n, NOISE, dtype=int)
    cid = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = cid
        queue = [seed]
        while queue:
            i = queue.pop(0)
            if not core[i]:
                continue
            for j in sorted(neighbors[i]):
                if labels[j] == NOISE:
                    labels[j] = cid
                    queue.append(j)
        cid += 1
    return labels


def cluster_centroids(points: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Arithmetic mean per cluster id (noise excluded), ordered by id."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels)
    if len(labels) != len(points):
        raise ValueError("labels must align with points")
    ids = np.unique(labels[labels != NOISE])
    if ids.size == 0:
        return np.zeros((0, 2))
    return np.stack([points[labels == c].mean(axis=0) for c in ids])


def recovered_target_count(
    centroids: np.ndarray, targets, max_distance: float = 1.0
) -> int:
    """Number of distinct targets claimed by at least one cluster centroid.

    A centroid claims the target whose boundary is nearest, provided that
    distance is below ``max_distance``.
    """
    claimed = set()
    for c in np.atleast_2d(centroids):
        best_id, best_d = None, np.inf
        for tgt in targets:
            d = abs(float(tgt.shape.signed_distance(c[None, :])[0]))
            if d < best_d:
                best_id, best_d = tgt.id, d
        if best_id is not None and best_d <= max_distance:
            claimed.add(best_id)
    return len(claimed)
