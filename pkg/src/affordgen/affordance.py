"""Pluggable per-point affordance prediction over object point clouds.

Three backends cover the ablation conditions: a uniform baseline (generic
grasping, no task semantics), an annotated oracle driven by per-asset part
labels, and a geometric heuristic keyed on canonical phrases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud

BACKENDS = ("uniform", "annotated", "heuristic")

PEAK_RANK_FRACTION = 0.2
PEAK_MIN_POINTS = 10


class MissingAnnotationError(KeyError):
    """Annotated backend queried for a phrase the asset does not annotate."""


@dataclass(frozen=True)
class AffordanceQuery:
    object_id: str
    phrase: str

    def __post_init__(self):
        if not self.phrase:
            raise ValueError("affordance query phrase must be nonempty")


@dataclass(frozen=True)
class AffordanceMap:
    """Scores in [0, 1] aligned index-for-index with a point cloud."""

    scores: np.ndarray
    source_cloud_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValueError("scores must be a finite vector")
        object.__setattr__(self, "scores", np.clip(s, 0.0, 1.0))


def predict(
    backend: str,
    cloud: PointCloud,
    query: AffordanceQuery,
    annotations: dict[str, list[int]] | None = None,
) -> AffordanceMap:
    """Score every cloud point for the queried interaction.

    `annotations` (phrase -> part_id list) comes from the asset library and is
    required by the annotated backend.
    """
    if backend == "uniform":
        return AffordanceMap(np.full(len(cloud), 0.5), query.object_id)
    if backend == "annotated":
        return _predict_annotated(cloud, query, annotations or {})
    if backend == "heuristic":
        return _predict_heuristic(cloud, query)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def _predict_annotated(
    cloud: PointCloud, query: AffordanceQuery, annotations: dict[str, list[int]]
) -> AffordanceMap:
    if query.phrase not in annotations:
        raise MissingAnnotationError(
            f"asset {query.object_id!r} has no annotation for phrase {query.phrase!r}"
        )
    if cloud.part_labels is None:
        raise MissingAnnotationError(f"cloud for {query.object_id!r} carries no part labels")
    target_parts = set(annotations[query.phrase])
    scores = np.where(np.isin(cloud.part_labels, list(target_parts)), 1.0, 0.05)
    # 1-nearest-neighbor blur softens the label boundary
    tree = cKDTree(cloud.points)
    _, idx = tree.query(cloud.points, k=2)
    scores = 0.5 * (scores + scores[idx[:, 1]])
    return AffordanceMap(scores, query.object_id)


def _principal_axis(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - center, full_matrices=False)
    return center, vt[0]


def _radial_distance(points: np.ndarray, center: np.ndarray, axis: np.ndarray) -> np.ndarray:
    rel = points - center
    along = rel @ axis
    return np.linalg.norm(rel - np.outer(along, axis), axis=1)


def _predict_heuristic(cloud: PointCloud, query: AffordanceQuery) -> AffordanceMap:
    pts = cloud.points
    phrase = query.phrase.lower()
    if "handle" in phrase:
        scores = _rule_handle(pts)
    elif "rim" in phrase:
        scores = _rule_rim(pts)
    elif "body" in phrase:
        scores = _rule_body(pts)
    elif "hook" in phrase or "peg" in phrase:
        scores = _rule_slender(pts, cloud.part_labels)
    else:
        return AffordanceMap(
            np.full(len(cloud), 0.5), query.object_id, meta={"fallback": "uniform", "phrase": query.phrase}
        )
    return AffordanceMap(scores, query.object_id)


def _rule_handle(pts: np.ndarray) -> np.ndarray:
    """Thin protrusion: far from the principal axis, sparse local neighborhood."""
    center, axis = _principal_axis(pts)
    radial = _radial_distance(pts, center, axis)
    far = radial > np.percentile(radial, 90.0)
    tree = cKDTree(pts)
    counts = np.asarray(tree.query_ball_point(pts, r=0.01, return_length=True), dtype=float)
    thin = counts < np.median(counts)
    scores = np.where(far & thin, 1.0, np.where(far, 0.5, 0.05))
    return scores


def _rule_rim(pts: np.ndarray) -> np.ndarray:
    """Points within 5 mm of max height, near the top cross-section radius."""
    z = pts[:, 2]
    top = z.max()
    near_top = z >= top - 0.005
    if not near_top.any():
        return np.full(len(pts), 0.05)
    top_pts = pts[near_top]
    cx, cy = top_pts[:, 0].mean(), top_pts[:, 1].mean()
    r_top = float(np.hypot(top_pts[:, 0] - cx, top_pts[:, 1] - cy).mean())
    horiz = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    on_ring = near_top & (np.abs(horiz - r_top) <= 0.1 * max(r_top, 1e-6))
    return np.where(on_ring, 1.0, np.where(near_top, 0.4, 0.05))


def _rule_body(pts: np.ndarray) -> np.ndarray:
    """Lateral surface between 20% and 80% of the height span."""
    z = pts[:, 2]
    lo = z.min() + 0.2 * (z.max() - z.min())
    hi = z.min() + 0.8 * (z.max() - z.min())
    band = (z >= lo) & (z <= hi)
    center, axis = _principal_axis(pts)
    radial = _radial_distance(pts, center, axis)
    lateral = radial >= np.percentile(radial, 40.0)
    return np.where(band & lateral, 1.0, 0.05)


def _rule_slender(pts: np.ndarray, labels: np.ndarray | None) -> np.ndarray:
    """Slender extremal part by per-part bounding-box aspect ratio."""
    if labels is None:
        return _rule_handle(pts)
    best_part, best_aspect = None, 0.0
    for part in np.unique(labels):
        sub = pts[labels == part]
        if len(sub) < 4:
            continue
        extent = np.sort(sub.max(axis=0) - sub.min(axis=0))
        aspect = extent[2] / max(extent[1], 1e-6)
        if aspect > best_aspect:
            best_aspect, best_part = aspect, part
    if best_part is None:
        return _rule_handle(pts)
    return np.where(labels == best_part, 1.0, 0.05)


@dataclass(frozen=True)
class PeakRegion:
    indices: np.ndarray
    centroid: np.ndarray


def peak_region(amap: AffordanceMap, cloud: PointCloud) -> PeakRegion:
    """High-affordance indices plus their centroid for candidate aiming.

    Rank-based: the top 20% of points by score (at least 10), expanded to all
    points tying the maximum — exact invariance under any strictly increasing
    score transform.
    """
    scores = amap.scores
    n = len(cloud)
    if len(scores) != n:
        raise ValueError("affordance map is not aligned to the cloud")
    size = min(n, max(math.ceil(PEAK_RANK_FRACTION * n), PEAK_MIN_POINTS))
    order = np.lexsort((np.arange(n), -scores))
    chosen = order[:size]
    max_ties = np.flatnonzero(scores == scores.max())
    indices = np.union1d(chosen, max_ties)
    centroid = cloud.points[indices].mean(axis=0)
    return PeakRegion(indices, centroid)
