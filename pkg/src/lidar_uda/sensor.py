"""Sensor models and spherical range-image projection.

A scan is projected onto a 5-channel image (range, x, y, z, intensity)
whose height equals the number of scan lines and whose width is a fixed
azimuth binning. Rows are assigned by nearest line elevation so that
non-uniform elevation tables are handled by the same mechanism.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyInput, InvalidSensorModel

RANGE, X, Y, Z, INTENSITY = range(5)


@dataclass(frozen=True)
class SensorModel:
    """LiDAR geometry: per-line elevations plus azimuth and range limits."""

    elevations_deg: np.ndarray
    width: int = 1024
    min_range_m: float = 0.5
    max_range_m: float = 120.0

    def __post_init__(self):
        elev = np.asarray(self.elevations_deg, dtype=np.float64)
        object.__setattr__(self, "elevations_deg", elev)
        self.validate()

    @property
    def num_lines(self):
        return int(self.elevations_deg.shape[0])

    def validate(self):
        elev = self.elevations_deg
        if elev.ndim != 1 or elev.shape[0] < 2:
            raise InvalidSensorModel("need at least 2 scan lines")
        if not np.all(np.diff(elev) < 0):
            raise InvalidSensorModel("elevations must be strictly decreasing")
        if self.width < 8:
            raise InvalidSensorModel("width must be >= 8")
        if not (0.0 < self.min_range_m < self.max_range_m):
            raise InvalidSensorModel("require 0 < min_range_m < max_range_m")

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            cfg = json.load(f)
        return sensor_from_dict(cfg)

    def to_dict(self):
        return {
            "num_lines": self.num_lines,
            "width": self.width,
            "elevations_deg": [float(e) for e in self.elevations_deg],
            "fov_up_deg": float(self.elevations_deg[0]),
            "fov_down_deg": float(self.elevations_deg[-1]),
            "min_range_m": self.min_range_m,
            "max_range_m": self.max_range_m,
        }


def sensor_from_dict(cfg):
    width = int(cfg.get("width", 1024))
    min_r = float(cfg.get("min_range_m", 0.5))
    max_r = float(cfg.get("max_range_m", 120.0))
    elev = cfg.get("elevations_deg")
    if elev is not None:
        return SensorModel(np.asarray(elev, dtype=np.float64), width, min_r, max_r)
    return elevation_table_uniform(
        int(cfg["num_lines"]),
        float(cfg["fov_up_deg"]),
        float(cfg["fov_down_deg"]),
        width=width,
        min_range_m=min_r,
        max_range_m=max_r,
    )


def elevation_table_uniform(num_lines, fov_up_deg, fov_down_deg, width=1024,
                            min_range_m=0.5, max_range_m=120.0):
    """Sensor with ``num_lines`` evenly spaced elevations, fov_up..fov_down inclusive."""
    if num_lines < 2:
        raise InvalidSensorModel("need at least 2 scan lines")
    if not fov_up_deg > fov_down_deg:
        raise InvalidSensorModel("fov_up_deg must exceed fov_down_deg")
    elev = np.linspace(fov_up_deg, fov_down_deg, num_lines)
    return SensorModel(elev, width, min_range_m, max_range_m)


@dataclass
class PanopticLabels:
    """Per-point semantic and instance ids (struct-of-arrays)."""

    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        self.semantic = np.asarray(self.semantic, dtype=np.uint16)
        self.instance = np.asarray(self.instance, dtype=np.uint16)
        if self.semantic.shape != self.instance.shape:
            raise ValueError("semantic/instance shapes differ")

    def __len__(self):
        return int(self.semantic.size)

    def take(self, idx):
        return PanopticLabels(self.semantic[idx], self.instance[idx])

    def copy(self):
        return PanopticLabels(self.semantic.copy(), self.instance.copy())


@dataclass
class RigidTransform:
    """Sensor-to-world pose: p_world = rotation @ p + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation not orthonormal (|R^T R - I| = {err:.2e})")

    def apply(self, points):
        return points @ self.rotation.T + self.translation

    def inverse(self):
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other):
        # self after other: p -> self(other(p))
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass
class PointCloudScan:
    """Points in the sensor frame with intensities, optional labels, and a pose."""

    points: np.ndarray
    intensity: np.ndarray
    labels: Optional[PanopticLabels] = None
    pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.intensity = np.clip(
            np.asarray(self.intensity, dtype=np.float64).reshape(-1), 0.0, 1.0
        )
        n = self.points.shape[0]
        if self.intensity.shape[0] != n:
            raise ValueError("intensity length differs from point count")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("label length differs from point count")

    def __len__(self):
        return int(self.points.shape[0])


@dataclass
class RangeImage:
    """5xHxW projection with validity mask and point provenance.

    Invalid pixels hold the sentinel range -1 and zeros elsewhere.
    """

    channels: np.ndarray
    valid_mask: np.ndarray
    point_index: Optional[np.ndarray] = None
    labels: Optional[PanopticLabels] = None

    @property
    def height(self):
        return int(self.channels.shape[1])

    @property
    def width(self):
        return int(self.channels.shape[2])


def _empty_image(h, w, with_labels):
    channels = np.zeros((5, h, w), dtype=np.float64)
    channels[RANGE] = -1.0
    valid = np.zeros((h, w), dtype=bool)
    index = np.full((h, w), -1, dtype=np.int64)
    labels = None
    if with_labels:
        labels = PanopticLabels(
            np.zeros((h, w), dtype=np.uint16), np.zeros((h, w), dtype=np.uint16)
        )
    return channels, valid, index, labels


def _assign_rows(elev_deg, table_deg):
    """Nearest-elevation row per point; -1 outside the padded elevation band."""
    h = table_deg.shape[0]
    ascending = table_deg[::-1]
    pos = np.searchsorted(ascending, elev_deg)
    lo = np.clip(pos - 1, 0, h - 1)
    hi = np.clip(pos, 0, h - 1)
    pick_hi = np.abs(ascending[hi] - elev_deg) < np.abs(ascending[lo] - elev_deg)
    idx_asc = np.where(pick_hi, hi, lo)
    rows = (h - 1) - idx_asc

    upper = table_deg[0] + 0.5 * (table_deg[0] - table_deg[1])
    lower = table_deg[-1] - 0.5 * (table_deg[-2] - table_deg[-1])
    rows = np.where((elev_deg > upper) | (elev_deg < lower), -1, rows)
    return rows


def project(scan, sensor):
    """Spherical z-buffer projection of a scan onto a 5-channel range image.

    Per-pixel conflicts keep the nearest point; points outside the range
    limits or the padded elevation band are dropped.
    """
    sensor.validate()
    if len(scan) == 0:
        raise EmptyInput("cannot project an empty scan")

    pts = scan.points
    rng = np.linalg.norm(pts, axis=1)
    keep = (rng >= sensor.min_range_m) & (rng <= sensor.max_range_m)

    h, w = sensor.num_lines, sensor.width
    channels, valid, index, labels = _empty_image(h, w, scan.labels is not None)

    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        return RangeImage(channels, valid, index, labels)

    p = pts[idx]
    r = rng[idx]
    azimuth = np.arctan2(p[:, 1], p[:, 0])
    cols = np.floor((0.5 - azimuth / (2.0 * np.pi)) * w).astype(np.int64) % w
    elev = np.degrees(np.arcsin(np.clip(p[:, 2] / r, -1.0, 1.0)))
    rows = _assign_rows(elev, sensor.elevations_deg)

    ok = rows >= 0
    idx, p, r, cols, rows = idx[ok], p[ok], r[ok], cols[ok], rows[ok]
    if idx.size == 0:
        return RangeImage(channels, valid, index, labels)

    # Descending range order: the nearest point is written last and wins.
    order = np.argsort(-r, kind="stable")
    idx, p, r, cols, rows = idx[order], p[order], r[order], cols[order], rows[order]

    channels[RANGE, rows, cols] = r
    channels[X, rows, cols] = p[:, 0]
    channels[Y, rows, cols] = p[:, 1]
    channels[Z, rows, cols] = p[:, 2]
    channels[INTENSITY, rows, cols] = scan.intensity[idx]
    valid[rows, cols] = True
    index[rows, cols] = idx
    if labels is not None:
        labels.semantic[rows, cols] = scan.labels.semantic[idx]
        labels.instance[rows, cols] = scan.labels.instance[idx]
    return RangeImage(channels, valid, index, labels)


def back_project(image):
    """One point per valid pixel, read from the stored x/y/z channels."""
    rows, cols = np.nonzero(image.valid_mask)
    if rows.size == 0:
        raise EmptyInput("range image has no valid pixels")
    points = np.stack(
        [image.channels[c, rows, cols] for c in (X, Y, Z)], axis=1
    )
    intensity = image.channels[INTENSITY, rows, cols]
    labels = None
    if image.labels is not None:
        labels = PanopticLabels(
            image.labels.semantic[rows, cols], image.labels.instance[rows, cols]
        )
    return PointCloudScan(points, intensity, labels)
