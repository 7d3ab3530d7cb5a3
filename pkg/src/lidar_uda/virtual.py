"""Semi-synthetic target-like scans from source data.

Static structure is aggregated into a world-frame map; dynamic instances
are meshed in an angular chart, densified by area-uniform surface sampling
with distance-weighted intensity regression, and the combined cloud is
re-rendered through the target sensor model by z-buffer projection.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import DegenerateInstance, EmptyInput, MissingLabels
from .sensor import PanopticLabels, PointCloudScan, project

DEFAULT_MOTION_THRESHOLD_M = 0.5
DEFAULT_MAX_EDGE_M = 0.5


@dataclass
class AggregatedMap:
    """World-frame points from stuff classes and static instances."""

    points: np.ndarray
    intensity: np.ndarray
    labels: PanopticLabels
    source_scan_index: np.ndarray

    def __len__(self):
        return int(self.points.shape[0])


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise DegenerateInstance("triangle index out of range")

    def areas(self):
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _is_thing(labels, thing_ids):
    if thing_ids is None:
        return labels.instance > 0
    return np.isin(labels.semantic, sorted(thing_ids))


def aggregate_map(scans, motion_threshold_m=DEFAULT_MOTION_THRESHOLD_M,
                  thing_ids=None):
    """Fold scans into a world map, keeping stuff points and static instances.

    An instance is static iff the diameter of its per-scan world centroids
    stays at or below the motion threshold.
    """
    if not scans:
        raise EmptyInput("no scans to aggregate")
    for scan in scans:
        if scan.labels is None:
            raise MissingLabels("aggregation requires panoptic labels")

    centroids = {}
    for s, scan in enumerate(scans):
        world = scan.pose.apply(scan.points)
        thing = _is_thing(scan.labels, thing_ids)
        keys = np.unique(
            scan.labels.semantic[thing].astype(np.int64) << 32
            | scan.labels.instance[thing].astype(np.int64)
        )
        for key in keys.tolist():
            sem = key >> 32
            inst = key & 0xFFFFFFFF
            sel = thing & (scan.labels.semantic == sem) & (scan.labels.instance == inst)
            centroids.setdefault(key, []).append(world[sel].mean(axis=0))

    static = set()
    for key, cs in centroids.items():
        cs = np.asarray(cs)
        diam = 0.0
        if len(cs) > 1:
            diam = np.linalg.norm(cs[:, None] - cs[None, :], axis=2).max()
        if diam <= motion_threshold_m:
            static.add(key)

    pts, inten, sems, insts, srcs = [], [], [], [], []
    for s, scan in enumerate(scans):
        world = scan.pose.apply(scan.points)
        thing = _is_thing(scan.labels, thing_ids)
        keys = (scan.labels.semantic.astype(np.int64) << 32
                | scan.labels.instance.astype(np.int64))
        keep = ~thing | np.isin(keys, sorted(static))
        pts.append(world[keep])
        inten.append(scan.intensity[keep])
        sems.append(scan.labels.semantic[keep])
        insts.append(scan.labels.instance[keep])
        srcs.append(np.full(int(keep.sum()), s, dtype=np.int64))

    points = np.concatenate(pts)
    if points.shape[0] == 0:
        raise EmptyInput("map is empty after motion filtering")
    return AggregatedMap(
        points,
        np.concatenate(inten),
        PanopticLabels(np.concatenate(sems), np.concatenate(insts)),
        np.concatenate(srcs),
    )


def _angular_chart(points, origin):
    rel = points - origin
    r = np.linalg.norm(rel, axis=1)
    if np.any(r < 1e-12):
        r = np.maximum(r, 1e-12)
    az = np.arctan2(rel[:, 1], rel[:, 0])
    # recenter azimuths on the mean direction so instances straddling
    # +-pi stay contiguous in the chart
    mean_dir = np.arctan2(np.sin(az).mean(), np.cos(az).mean())
    az = (az - mean_dir + np.pi) % (2.0 * np.pi) - np.pi
    el = np.arcsin(np.clip(rel[:, 2] / r, -1.0, 1.0))
    return np.column_stack([az, el])


def mesh_dynamic_instance(points, intensity, sensor_origin,
                          max_edge_m=DEFAULT_MAX_EDGE_M):
    """Delaunay triangulation in the (azimuth, elevation) chart seen from the sensor.

    Triangles with any 3D edge longer than ``max_edge_m`` are dropped: the
    angular chart invents faces across depth discontinuities.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    intensity = np.asarray(intensity, dtype=np.float64).ravel()
    if points.shape[0] < 3:
        raise DegenerateInstance(f"{points.shape[0]} points cannot form a mesh")
    chart = _angular_chart(points, np.asarray(sensor_origin, dtype=np.float64))
    try:
        tri = Delaunay(chart)
    except QhullError as exc:
        raise DegenerateInstance(f"degenerate angular chart: {exc}") from exc

    simplices = tri.simplices
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]]
    c = points[simplices[:, 2]]
    edges = np.stack([
        np.linalg.norm(a - b, axis=1),
        np.linalg.norm(b - c, axis=1),
        np.linalg.norm(c - a, axis=1),
    ])
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    keep = (edges.max(axis=0) <= max_edge_m) & (areas > 1e-12)
    if not keep.any():
        raise DegenerateInstance("no triangle survives the edge-length filter")
    return TriangleMesh(points, simplices[keep], intensity)


def sample_mesh(mesh, density_pts_per_m2, seed=0):
    """Area-proportional triangle choice with barycentric-uniform placement."""
    areas = mesh.areas()
    total = float(areas.sum())
    if total <= 0.0 or len(mesh.triangles) == 0:
        raise DegenerateInstance("mesh has no area to sample")
    n = int(round(density_pts_per_m2 * total))
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0)
    rng = np.random.default_rng(seed)
    tri_idx = rng.choice(len(mesh.triangles), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tris = mesh.triangles[tri_idx]
    a = mesh.vertices[tris[:, 0]]
    b = mesh.vertices[tris[:, 1]]
    c = mesh.vertices[tris[:, 2]]
    pts = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    ia = mesh.intensity[tris[:, 0]]
    ib = mesh.intensity[tris[:, 1]]
    ic = mesh.intensity[tris[:, 2]]
    inten = (1.0 - u - v) * ia + u * ib + v * ic
    return pts, inten


def regress_intensity(query, neighbor_points, neighbor_intensity, k=3):
    """Inverse-distance weighted mean of the k nearest neighbor intensities."""
    neighbor_points = np.asarray(neighbor_points, dtype=np.float64).reshape(-1, 3)
    neighbor_intensity = np.asarray(neighbor_intensity, dtype=np.float64).ravel()
    if neighbor_points.shape[0] == 0:
        raise EmptyInput("no neighbors to regress from")
    d = np.linalg.norm(neighbor_points - np.asarray(query, dtype=np.float64), axis=1)
    k = min(k, d.shape[0])
    nearest = np.argpartition(d, k - 1)[:k]
    dn = d[nearest]
    if dn.min() < 1e-9:
        return float(neighbor_intensity[nearest[np.argmin(dn)]])
    w = 1.0 / dn
    return float(np.sum(w * neighbor_intensity[nearest]) / np.sum(w))


def regress_intensity_batch(queries, neighbor_points, neighbor_intensity, k=3):
    """KD-tree variant of :func:`regress_intensity` over many query points."""
    neighbor_points = np.asarray(neighbor_points, dtype=np.float64).reshape(-1, 3)
    neighbor_intensity = np.asarray(neighbor_intensity, dtype=np.float64).ravel()
    if neighbor_points.shape[0] == 0:
        raise EmptyInput("no neighbors to regress from")
    k = min(k, neighbor_points.shape[0])
    tree = cKDTree(neighbor_points)
    d, idx = tree.query(np.asarray(queries, dtype=np.float64), k=k)
    d = np.atleast_2d(d.reshape(len(queries), k))
    idx = np.atleast_2d(idx.reshape(len(queries), k))
    exact = d[:, 0] < 1e-9
    with np.errstate(divide="ignore"):
        w = 1.0 / d
    out = np.where(
        exact,
        neighbor_intensity[idx[:, 0]],
        np.sum(np.where(np.isfinite(w), w, 0.0) * neighbor_intensity[idx], axis=1)
        / np.maximum(np.sum(np.where(np.isfinite(w), w, 0.0), axis=1), 1e-300),
    )
    return out


def render_virtual_scan(amap, dynamic_points, dynamic_intensity, dynamic_labels,
                        virtual_pose, target_sensor):
    """Transform the combined cloud into the virtual sensor frame and project."""
    parts_p = [amap.points] if len(amap) else []
    parts_i = [amap.intensity] if len(amap) else []
    parts_s = [amap.labels.semantic] if len(amap) else []
    parts_n = [amap.labels.instance] if len(amap) else []
    if dynamic_points is not None and len(dynamic_points):
        parts_p.append(np.asarray(dynamic_points, dtype=np.float64))
        parts_i.append(np.asarray(dynamic_intensity, dtype=np.float64))
        parts_s.append(dynamic_labels.semantic)
        parts_n.append(dynamic_labels.instance)
    if not parts_p:
        raise EmptyInput("nothing to render")
    world = np.concatenate(parts_p)
    inv = virtual_pose.inverse()
    local = inv.apply(world)
    scan = PointCloudScan(
        local,
        np.concatenate(parts_i),
        PanopticLabels(np.concatenate(parts_s), np.concatenate(parts_n)),
        virtual_pose,
    )
    return project(scan, target_sensor)
