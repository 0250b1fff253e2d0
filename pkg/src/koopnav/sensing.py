"""Simulated LiDAR returns, ground/self filtering and Euclidean clustering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ParameterError


@dataclass(frozen=True)
class SensorSpec:
    range: float = 20.0
    noise_sigma: float = 0.01
    rays_per_obstacle: int = 120
    ground_z_cut: float = 0.05
    self_radius_cut: float = 0.5
    link_dist: float = 0.5
    min_size: int = 3

    def __post_init__(self) -> None:
        if not self.range > 0.0:
            raise ParameterError("sensor range must be positive")
        if not self.noise_sigma >= 0.0:
            raise ParameterError("noise_sigma must be non-negative")
        if self.rays_per_obstacle < 0 or self.min_size < 1:
            raise ParameterError("rays_per_obstacle must be >= 0 and min_size >= 1")
        if not self.link_dist > 0.0:
            raise ParameterError("link_dist must be positive")


@dataclass
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    stamp: float = 0.0

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ClusterObservation:
    centroid: np.ndarray
    radius: float
    count: int


def sample_cloud(uav_pos, truth, spec: SensorSpec, rng: np.random.Generator,
                 stamp: float = 0.0) -> PointCloud:
    """Emit noisy returns from the UAV-facing hemisphere of each sphere in range.

    ``truth`` is an iterable of ``(center, radius)`` pairs.
    """
    uav_pos = np.asarray(uav_pos, dtype=float)
    chunks = []
    for center, radius in truth:
        center = np.asarray(center, dtype=float)
        facing = uav_pos - center
        dist = np.linalg.norm(facing)
        if dist > spec.range or spec.rays_per_obstacle == 0:
            continue
        n = rng.standard_normal((spec.rays_per_obstacle, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        if dist > 0.0:
            side = n @ facing
            n[side < 0.0] *= -1.0
        pts = center + radius * n
        if spec.noise_sigma > 0.0:
            pts = pts + spec.noise_sigma * rng.standard_normal(pts.shape)
        chunks.append(pts)
    points = np.vstack(chunks) if chunks else np.empty((0, 3))
    return PointCloud(points, stamp)


def filter_cloud(cloud: PointCloud, uav_pos, spec: SensorSpec) -> PointCloud:
    """Drop ground returns (z below the cut) and returns on the vehicle itself."""
    pts = cloud.points
    keep = pts[:, 2] >= spec.ground_z_cut
    keep &= np.linalg.norm(pts - np.asarray(uav_pos, dtype=float), axis=1) > spec.self_radius_cut
    return PointCloud(pts[keep], cloud.stamp)


def cluster_labels(points: np.ndarray, link_dist: float) -> tuple[int, np.ndarray]:
    """Connected components of the ``distance <= link_dist`` graph."""
    n = len(points)
    if n == 0:
        return 0, np.empty(0, dtype=int)
    pairs = cKDTree(points).query_pairs(link_dist, output_type="ndarray")
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(adj, directed=False)


def cluster(cloud: PointCloud, link_dist: float, min_size: int = 3) -> list[ClusterObservation]:
    """Euclidean clustering with centroid and bounding-sphere radius per cluster.

    Components smaller than ``min_size`` are discarded. Output is ordered by
    centroid (lexicographic) so it does not depend on point order.
    """
    if not link_dist > 0.0:
        raise ParameterError("link_dist must be positive")
    pts = cloud.points
    n_comp, labels = cluster_labels(pts, link_dist)
    out = []
    for c in range(n_comp):
        members = pts[labels == c]
        if len(members) < min_size:
            continue
        centroid = members.mean(axis=0)
        radius = float(np.max(np.linalg.norm(members - centroid, axis=1)))
        out.append(ClusterObservation(centroid, radius, len(members)))
    out.sort(key=lambda ob: tuple(np.round(ob.centroid, 9)))
    return out
