"""Analytic synthetic scenes for oracle tests and pipeline fixtures.

Scenes are built from a (possibly tilted) ground plane, vertical wall
rectangles, and oriented boxes that may move between frames. Every sensor
ray is intersected analytically, so ground-truth labels, plane parameters,
and trajectories are exact; Gaussian range noise is applied last.
"""

import json
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import InvalidSpec
from .sensor import PanopticLabels, PointCloudScan, RigidTransform

GROUND_SEMANTIC = 40
WALL_SEMANTIC = 50


@dataclass
class BoxSpec:
    center: np.ndarray
    size: np.ndarray
    yaw_deg: float = 0.0
    semantic_id: int = 10
    instance_id: int = 1
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    intensity: float = 0.8

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if np.any(self.size <= 0):
            raise InvalidSpec("box sizes must be positive")


@dataclass
class WallSpec:
    center: np.ndarray
    normal: np.ndarray
    width: float
    height: float
    semantic_id: int = WALL_SEMANTIC
    intensity: float = 0.55

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        normal = np.asarray(self.normal, dtype=np.float64)
        normal[2] = 0.0  # walls are vertical
        n = np.linalg.norm(normal)
        if n < 1e-12 or self.width <= 0 or self.height <= 0:
            raise InvalidSpec("wall needs a horizontal normal and positive extent")
        self.normal = normal / n


@dataclass
class SyntheticSceneSpec:
    ground_tilt_deg: float = 0.0
    ground_distance_m: float = 1.75
    ground_intensity: float = 0.3
    boxes: List[BoxSpec] = field(default_factory=list)
    walls: List[WallSpec] = field(default_factory=list)
    num_frames: int = 1
    noise_sigma_m: float = 0.0
    intensity_jitter: float = 0.0

    def __post_init__(self):
        if self.num_frames < 1:
            raise InvalidSpec("need at least one frame")
        if self.ground_distance_m <= 0:
            raise InvalidSpec("ground distance must be positive")

    @classmethod
    def from_dict(cls, cfg):
        boxes = [BoxSpec(**b) for b in cfg.get("boxes", [])]
        walls = [WallSpec(**w) for w in cfg.get("walls", [])]
        return cls(
            ground_tilt_deg=float(cfg.get("ground_tilt_deg", 0.0)),
            ground_distance_m=float(cfg.get("ground_distance_m", 1.75)),
            ground_intensity=float(cfg.get("ground_intensity", 0.3)),
            boxes=boxes,
            walls=walls,
            num_frames=int(cfg.get("num_frames", 1)),
            noise_sigma_m=float(cfg.get("noise_sigma_m", 0.0)),
            intensity_jitter=float(cfg.get("intensity_jitter", 0.0)),
        )

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def ground_plane(self):
        """(normal, d) of n.p + d = 0, tilt about the y-axis, below the sensor."""
        t = np.radians(self.ground_tilt_deg)
        normal = np.array([np.sin(t), 0.0, np.cos(t)])
        return normal, self.ground_distance_m


def _ray_directions(sensor):
    elev = np.radians(sensor.elevations_deg)
    az = 2.0 * np.pi * (0.5 - (np.arange(sensor.width) + 0.5) / sensor.width)
    ce, se = np.cos(elev), np.sin(elev)
    ca, sa = np.cos(az), np.sin(az)
    dirs = np.empty((sensor.num_lines, sensor.width, 3))
    dirs[:, :, 0] = ce[:, None] * ca[None, :]
    dirs[:, :, 1] = ce[:, None] * sa[None, :]
    dirs[:, :, 2] = se[:, None] * np.ones_like(ca)[None, :]
    return dirs.reshape(-1, 3)


def _plane_hits(dirs, normal, d):
    denom = dirs @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -d / denom
    t[~np.isfinite(t)] = np.inf
    t[t <= 0] = np.inf
    return t


def _wall_hits(dirs, wall):
    d = -float(wall.normal @ wall.center)
    t = _plane_hits(dirs, wall.normal, d)
    finite = np.isfinite(t)
    if finite.any():
        hits = dirs[finite] * t[finite][:, None]
        u = np.cross(np.array([0.0, 0.0, 1.0]), wall.normal)
        u /= np.linalg.norm(u)
        rel = hits - wall.center
        in_w = np.abs(rel @ u) <= wall.width / 2
        in_h = np.abs(rel[:, 2]) <= wall.height / 2
        keep = in_w & in_h
        sub = t[finite]
        sub[~keep] = np.inf
        t[finite] = sub
    return t


def _box_hits(dirs, center, size, yaw_deg):
    yaw = np.radians(yaw_deg)
    rot = np.array([
        [np.cos(yaw), -np.sin(yaw), 0.0],
        [np.sin(yaw), np.cos(yaw), 0.0],
        [0.0, 0.0, 1.0],
    ])
    o = rot.T @ (-center)
    d = dirs @ rot
    half = size / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    t_near = np.minimum(t1, t2)
    t_far = np.maximum(t1, t2)
    # axis-parallel rays: the slab constrains only if the origin is inside it
    parallel = np.abs(d) < 1e-15
    inside = (np.abs(o) <= half)[None, :]
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
    tmin = t_near.max(axis=1)
    tmax = t_far.min(axis=1)
    t = np.where((tmax >= tmin) & (tmax > 0), np.where(tmin > 0, tmin, np.inf),
                 np.inf)
    return t


def generate_synthetic_scene(spec, sensor, seed=0):
    """Ray-cast the scene per frame; returns (scans, truth dict)."""
    rng = np.random.default_rng(seed)
    dirs = _ray_directions(sensor)
    normal, d_plane = spec.ground_plane()

    scans = []
    box_centers = []
    for frame in range(spec.num_frames):
        hits = [_plane_hits(dirs, normal, d_plane)]
        sems = [np.full(len(dirs), GROUND_SEMANTIC, dtype=np.uint16)]
        insts = [np.zeros(len(dirs), dtype=np.uint16)]
        intens = [np.full(len(dirs), spec.ground_intensity)]

        for wall in spec.walls:
            hits.append(_wall_hits(dirs, wall))
            sems.append(np.full(len(dirs), wall.semantic_id, dtype=np.uint16))
            insts.append(np.zeros(len(dirs), dtype=np.uint16))
            intens.append(np.full(len(dirs), wall.intensity))

        frame_centers = {}
        for box in spec.boxes:
            center = box.center + frame * box.velocity
            frame_centers[(box.semantic_id, box.instance_id)] = center.copy()
            hits.append(_box_hits(dirs, center, box.size, box.yaw_deg))
            sems.append(np.full(len(dirs), box.semantic_id, dtype=np.uint16))
            insts.append(np.full(len(dirs), box.instance_id, dtype=np.uint16))
            intens.append(np.full(len(dirs), box.intensity))
        box_centers.append(frame_centers)

        t_all = np.stack(hits)
        winner = np.argmin(t_all, axis=0)
        t_best = t_all[winner, np.arange(len(dirs))]
        ok = np.isfinite(t_best) & (t_best >= sensor.min_range_m) & \
            (t_best <= sensor.max_range_m)
        if not ok.any():
            raise InvalidSpec("scene produces no returns inside the range limits")
        if spec.noise_sigma_m > 0:
            t_best = t_best + rng.normal(0.0, spec.noise_sigma_m, size=len(dirs))

        pts = dirs[ok] * t_best[ok][:, None]
        sem = np.stack(sems)[winner, np.arange(len(dirs))][ok]
        inst = np.stack(insts)[winner, np.arange(len(dirs))][ok]
        inten = np.stack(intens)[winner, np.arange(len(dirs))][ok]
        if spec.intensity_jitter > 0:
            inten = np.clip(
                inten + rng.normal(0.0, spec.intensity_jitter, size=inten.shape),
                0.0, 1.0)
        scans.append(PointCloudScan(pts, inten, PanopticLabels(sem, inst),
                                    RigidTransform()))

    truth = {
        "plane_normal": normal,
        "plane_d": d_plane,
        "box_centers": box_centers,
        "thing_ids": sorted({b.semantic_id for b in spec.boxes}),
    }
    return scans, truth
