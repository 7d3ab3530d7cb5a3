"""Road-plane detection and LiDAR pose canonicalization.

RANSAC runs over points below the sensor only and rejects hypotheses whose
normal tilts too far from the z-axis; the winning plane is refined by least
squares and the scan is then rotated parallel to it and shifted so the road
sits at a fixed height below the sensor.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPoints, NoPlaneFound
from .sensor import PointCloudScan, RigidTransform

DEFAULT_TARGET_HEIGHT_M = 1.75


@dataclass
class RansacConfig:
    max_iterations: int = 500
    inlier_threshold_m: float = 0.10
    max_tilt_deg: float = 30.0
    seed: int = 0


@dataclass
class PlaneModel:
    """Plane n.p + d = 0 with the normal oriented upward (n.z > 0)."""

    normal: np.ndarray
    d: float
    inlier_count: int
    inlier_threshold_m: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(self.normal)
        if abs(norm - 1.0) > 1e-9:
            self.normal = self.normal / norm
        if self.normal[2] < 0:
            self.normal = -self.normal
            self.d = -self.d

    def distance(self, points):
        return np.abs(points @ self.normal + self.d)


@dataclass
class PoseCorrection:
    rotation: np.ndarray
    translation: np.ndarray
    source_plane: PlaneModel


def _refine_plane(points):
    """Least-squares plane through ``points`` (smallest principal direction)."""
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    normal = vt[-1]
    if normal[2] < 0:
        normal = -normal
    d = -float(normal @ centroid)
    return normal, d


def fit_ground_plane(scan, cfg=None):
    """Constrained RANSAC ground-plane fit over the points below the sensor."""
    cfg = cfg or RansacConfig()
    pts = scan.points if isinstance(scan, PointCloudScan) else np.asarray(scan)
    candidates = pts[pts[:, 2] < 0.0]
    n = candidates.shape[0]
    if n < 3:
        raise InsufficientPoints(f"only {n} points below the sensor")

    rng = np.random.default_rng(cfg.seed)
    cos_max_tilt = np.cos(np.radians(cfg.max_tilt_deg))
    best_count = 0
    best_inliers = None
    best_plane = None

    for _ in range(cfg.max_iterations):
        i, j, k = rng.choice(n, size=3, replace=False)
        normal = np.cross(candidates[j] - candidates[i], candidates[k] - candidates[i])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        normal = normal / norm
        if normal[2] < 0:
            normal = -normal
        if normal[2] < cos_max_tilt:
            continue
        d = -float(normal @ candidates[i])
        dist = np.abs(candidates @ normal + d)
        inliers = dist <= cfg.inlier_threshold_m
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            best_plane = (normal, d)

    if best_inliers is None:
        raise NoPlaneFound(
            f"no hypothesis within {cfg.max_tilt_deg} deg of the z-axis "
            f"after {cfg.max_iterations} iterations"
        )

    normal, d = _refine_plane(candidates[best_inliers])
    if normal[2] < cos_max_tilt:
        normal, d = best_plane  # refinement drifted past the tilt bound
    count = int((np.abs(candidates @ normal + d) <= cfg.inlier_threshold_m).sum())
    return PlaneModel(normal, d, count, cfg.inlier_threshold_m)


def compute_correction(plane, target_height_m=DEFAULT_TARGET_HEIGHT_M):
    """Minimal rotation taking the plane normal to z, then a shift to z = -height."""
    n = plane.normal
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(n, z)
    s = np.linalg.norm(axis)
    c = float(n @ z)
    if s < 1e-15:
        rotation = np.eye(3)
    else:
        k = axis / s
        kx = np.array([
            [0.0, -k[2], k[1]],
            [k[2], 0.0, -k[0]],
            [-k[1], k[0], 0.0],
        ])
        theta = np.arctan2(s, c)
        rotation = np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)
    # rotated plane is z = -d; shift it to z = -target_height
    translation = np.array([0.0, 0.0, plane.d - target_height_m])
    return PoseCorrection(rotation, translation, plane)


def apply_correction(scan, corr):
    """Rigid transform of the scan; labels and intensities pass through."""
    points = scan.points @ corr.rotation.T + corr.translation
    # pose maps new canonical frame to world: world = pose_old(corr^-1(p))
    rot = scan.pose.rotation @ corr.rotation.T
    trans = scan.pose.translation - rot @ corr.translation
    labels = scan.labels.copy() if scan.labels is not None else None
    return PointCloudScan(points, scan.intensity.copy(), labels, RigidTransform(rot, trans))
