"""Candidate-edge geometry: enumeration, probability scoring, expansion,
top-k selection, and multi-scale feature extraction along edges.

Corners use (x, y) pixel coordinates with x along the width axis.  All
scoring reads a probability map through bilinear interpolation; neighbor
offsets widen each edge into a band so a one-pixel miss does not zero the
score.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Expansion copies are shifted by max + EXPANSION_EPS so every copy ranks
# strictly below the previous one even when the batch maximum is 0.
EXPANSION_EPS = 1e-6

_OFFSETS_4 = ((0, -1), (0, 1), (-1, 0), (1, 0))
_OFFSETS_8 = _OFFSETS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))
_OFFSETS_16 = tuple(
    (dx, dy)
    for dy in range(-2, 3)
    for dx in range(-2, 3)
    if max(abs(dx), abs(dy)) == 2
)


def neighbor_offsets(count: int) -> tuple:
    """Unit-offset translate set: 4 (axis), 8 (adds diagonals), 16 (radius-2 ring)."""
    try:
        return {4: _OFFSETS_4, 8: _OFFSETS_8, 16: _OFFSETS_16}[count]
    except KeyError:
        raise ValueError(f"neighbor count must be 4, 8, or 16, got {count}") from None


@dataclass
class PlanarGraph:
    """Corner coordinates plus an undirected edge set over corner indices."""

    corners: np.ndarray
    edges: set

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(-1, 2)
        normalized = set()
        for (i, j) in self.edges:
            if i == j:
                raise ValueError(f"self-loop on corner {i}")
            if not (0 <= i < len(self.corners) and 0 <= j < len(self.corners)):
                raise ValueError(f"edge ({i}, {j}) out of corner range")
            normalized.add((min(i, j), max(i, j)))
        self.edges = normalized

    @property
    def n_corners(self) -> int:
        return len(self.corners)


@dataclass
class ScoredEdgeSet:
    """Candidate edges with parallel score and expansion-copy-number lists."""

    edges: list
    scores: np.ndarray
    origin: np.ndarray = field(default=None)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.origin is None:
            self.origin = np.zeros(len(self.edges), dtype=np.intp)
        self.origin = np.asarray(self.origin, dtype=np.intp)
        if not (len(self.edges) == len(self.scores) == len(self.origin)):
            raise ValueError("edges, scores, and origin must have equal length")

    def __len__(self) -> int:
        return len(self.edges)

    def to_json(self) -> str:
        return json.dumps(
            {
                "edges": [list(e) for e in self.edges],
                "scores": self.scores.tolist(),
                "origin": self.origin.tolist(),
            }
        )


def enumerate_candidates(corners: np.ndarray) -> list:
    """All N(N-1)/2 unordered corner-index pairs in lexicographic order."""
    n = len(corners)
    if n < 2:
        raise ValueError(f"need at least 2 corners, got {n}")
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def edge_points(c1, c2, count: int) -> np.ndarray:
    """Uniform parametric samples on the segment, both endpoints included."""
    if count < 2:
        raise ValueError(f"need at least 2 points, got {count}")
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    t = np.arange(count, dtype=np.float64) / (count - 1)
    return c1[None, :] + t[:, None] * (c2 - c1)[None, :]


def _bilinear(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a 2-D grid at arrays of in-range points.

    A leading channel axis on the grid is broadcast: (c, h, w) input
    yields (c, len(xs)) output with identical per-point arithmetic.
    """
    h, w = grid.shape[-2], grid.shape[-1]
    x1 = np.minimum(np.floor(xs), w - 2).astype(np.intp) if w > 1 else np.zeros_like(xs, dtype=np.intp)
    y1 = np.minimum(np.floor(ys), h - 2).astype(np.intp) if h > 1 else np.zeros_like(ys, dtype=np.intp)
    x1 = np.maximum(x1, 0)
    y1 = np.maximum(y1, 0)
    x2 = np.minimum(x1 + 1, w - 1)
    y2 = np.minimum(y1 + 1, h - 1)
    wx2 = np.where(x2 > x1, xs - x1, 0.0)
    wy2 = np.where(y2 > y1, ys - y1, 0.0)
    wx1 = 1.0 - wx2
    wy1 = 1.0 - wy2
    return (
        grid[..., y1, x1] * wx1 * wy1
        + grid[..., y1, x2] * wx2 * wy1
        + grid[..., y2, x1] * wx1 * wy2
        + grid[..., y2, x2] * wx2 * wy2
    )


def bilinear_sample(grid: np.ndarray, x: float, y: float) -> float:
    """Interpolate one point; coordinates must satisfy 0 <= x <= w-1, 0 <= y <= h-1."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    h, w = grid.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise ValueError(f"point ({x}, {y}) outside grid {h}x{w}")
    return float(_bilinear(grid, np.asarray([x]), np.asarray([y]))[0])


def _prob_grid(prob_map: np.ndarray) -> np.ndarray:
    prob_map = np.asarray(prob_map, dtype=np.float64)
    if prob_map.ndim == 4:
        if prob_map.shape[0] != 1 or prob_map.shape[1] != 1:
            raise ValueError(f"probability map must be (1, 1, h, w), got {prob_map.shape}")
        prob_map = prob_map[0, 0]
    if prob_map.ndim != 2 or min(prob_map.shape) < 2:
        raise ValueError(f"degenerate probability map shape {prob_map.shape}")
    return prob_map


def score_edge(prob_map: np.ndarray, c1, c2, n_points: int = 64,
               neighbors: int = 4) -> float:
    """Edge score from the probability map.

    Mean of bilinear samples along the edge, averaged with the same mean
    taken after translating both endpoints by each unit neighbor offset.
    Offset sample points are clamped to the image frame.
    """
    grid = _prob_grid(prob_map)
    h, w = grid.shape
    pts = edge_points(c1, c2, n_points)
    offsets = ((0, 0),) + neighbor_offsets(neighbors)
    total = 0.0
    for (dx, dy) in offsets:
        xs = np.clip(pts[:, 0] + dx, 0.0, w - 1.0)
        ys = np.clip(pts[:, 1] + dy, 0.0, h - 1.0)
        total += float(np.mean(_bilinear(grid, xs, ys)))
    return total / len(offsets)


def score_candidates(prob_map: np.ndarray, corners: np.ndarray, candidates: list,
                     n_points: int = 64, neighbors: int = 4) -> ScoredEdgeSet:
    """Score every candidate pair; equals per-edge score_edge calls exactly."""
    corners = np.asarray(corners, dtype=np.float64)
    scores = np.array(
        [
            score_edge(prob_map, corners[i], corners[j], n_points, neighbors)
            for (i, j) in candidates
        ]
    )
    return ScoredEdgeSet(list(candidates), scores)


def expand_scores(edge_set: ScoredEdgeSet, target: int) -> ScoredEdgeSet:
    """Pad (or trim) the candidate list to exactly *target* entries.

    When trimming, the highest-scoring entries survive in their original
    order.  When padding, whole copies of the edge list are appended; copy
    r carries scores shifted down by r * (max(original) + eps) so every
    copy ranks strictly below the previous one, and the final copy is
    truncated to land exactly on the target.
    """
    n = len(edge_set)
    if n == 0:
        raise ValueError("cannot expand an empty edge set")
    if target < n:
        keep = np.sort(top_k(edge_set, target))
        return ScoredEdgeSet(
            [edge_set.edges[i] for i in keep],
            edge_set.scores[keep],
            edge_set.origin[keep],
        )
    edges = list(edge_set.edges)
    scores = [edge_set.scores]
    origin = [np.zeros(n, dtype=np.intp)]
    shift_unit = float(edge_set.scores.max()) + EXPANSION_EPS
    copy = 0
    while len(edges) < target:
        copy += 1
        take = min(n, target - len(edges))
        edges.extend(edge_set.edges[:take])
        scores.append(edge_set.scores[:take] - copy * shift_unit)
        origin.append(np.full(take, copy, dtype=np.intp))
    return ScoredEdgeSet(edges, np.concatenate(scores), np.concatenate(origin))


def top_k(edge_set: ScoredEdgeSet, k: int) -> np.ndarray:
    """Indices of the k largest scores, descending; ties go to lower index."""
    if k > len(edge_set):
        raise ValueError(f"k={k} exceeds {len(edge_set)} candidates")
    order = np.argsort(-edge_set.scores, kind="stable")
    return order[:k]


@dataclass
class EdgeFeature:
    """Per-scale flattened feature vectors sampled along one edge."""

    per_scale: list

    def __post_init__(self):
        self.per_scale = [np.asarray(v, dtype=np.float64).ravel() for v in self.per_scale]

    @property
    def stacked(self) -> np.ndarray:
        return np.stack(self.per_scale)


def extract_edge_features(features: list, c1, c2, frame_side: int = 64) -> EdgeFeature:
    """Sample each scale's feature map along the edge and flatten.

    At a scale with spatial side s, the endpoints are mapped by the factor
    s / frame_side, s points are placed on the edge, and every channel is
    read with bilinear interpolation, giving s * channels values per scale
    (constant across scales by construction).  Flattening is point-major:
    all channels of point 0, then point 1, and so on.
    """
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    for pt in (c1, c2):
        if not (0 <= pt[0] < frame_side and 0 <= pt[1] < frame_side):
            raise ValueError(f"endpoint {tuple(pt)} outside the {frame_side}-pixel frame")
    vectors = []
    for fmap in features:
        fmap = np.asarray(fmap, dtype=np.float64)
        if fmap.ndim == 4:
            fmap = fmap[0]
        side = fmap.shape[1]
        factor = side / frame_side
        pts = edge_points(c1 * factor, c2 * factor, side)
        xs = np.clip(pts[:, 0], 0.0, side - 1.0)
        ys = np.clip(pts[:, 1], 0.0, side - 1.0)
        samples = _bilinear(fmap, xs, ys)  # (channels, points)
        vectors.append(samples.T.ravel())  # point-major flattening
    return EdgeFeature(vectors)


def fuse_features(feature: EdgeFeature, fusion_weights: np.ndarray) -> np.ndarray:
    """Weighted sum of the per-scale vectors: fused = sum_l w_l * v_l."""
    w = np.asarray(fusion_weights, dtype=np.float64)
    stacked = feature.stacked
    if w.shape != (stacked.shape[0],):
        raise ValueError(f"need {stacked.shape[0]} fusion weights, got {w.shape}")
    if not np.isfinite(w).all():
        raise ValueError("fusion weights must be finite")
    return w @ stacked


def fuse_backward(feature: EdgeFeature, fusion_weights: np.ndarray,
                  grad_out: np.ndarray):
    """Gradients of fuse_features w.r.t. the per-scale vectors and weights."""
    w = np.asarray(fusion_weights, dtype=np.float64)
    stacked = feature.stacked
    grad_vectors = w[:, None] * grad_out[None, :]
    grad_w = stacked @ grad_out
    return grad_vectors, grad_w
