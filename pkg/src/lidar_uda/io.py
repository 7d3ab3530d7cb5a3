"""Dataset file ingestion: binary scans, packed panoptic labels, pose files.

Scan files are little-endian float32 quadruples (x, y, z, intensity);
label files pack one uint32 per point, semantic id in the low 16 bits and
instance id in the high 16. Pose files carry one row-major 3x4 transform
per line.
"""

import os

import numpy as np

from .errors import CorruptFile, EmptyInput, ShapeMismatch
from .sensor import PanopticLabels, PointCloudScan, RigidTransform

SCAN_RECORD_BYTES = 16
LABEL_RECORD_BYTES = 4


def read_scan(bin_path, label_path=None, pose=None):
    """Load a scan and, when given, its packed panoptic labels."""
    size = os.path.getsize(bin_path)
    if size == 0:
        raise EmptyInput(f"{bin_path} is empty")
    if size % SCAN_RECORD_BYTES != 0:
        raise CorruptFile(
            f"{bin_path}: {size} bytes is not a multiple of {SCAN_RECORD_BYTES}"
        )
    raw = np.fromfile(bin_path, dtype="<f4").reshape(-1, 4)
    labels = read_labels(label_path, raw.shape[0]) if label_path else None
    return PointCloudScan(
        raw[:, :3].astype(np.float64),
        np.clip(raw[:, 3].astype(np.float64), 0.0, 1.0),
        labels,
        pose or RigidTransform(),
    )


def read_labels(label_path, expected_count):
    size = os.path.getsize(label_path)
    if size % LABEL_RECORD_BYTES != 0:
        raise CorruptFile(
            f"{label_path}: {size} bytes is not a multiple of {LABEL_RECORD_BYTES}"
        )
    packed = np.fromfile(label_path, dtype="<u4")
    if packed.shape[0] != expected_count:
        raise ShapeMismatch(
            f"{label_path}: {packed.shape[0]} labels for {expected_count} points"
        )
    return PanopticLabels(
        (packed & 0xFFFF).astype(np.uint16),
        (packed >> 16).astype(np.uint16),
    )


def write_scan(scan, bin_path, label_path=None):
    raw = np.empty((len(scan), 4), dtype="<f4")
    raw[:, :3] = scan.points
    raw[:, 3] = scan.intensity
    raw.tofile(bin_path)
    if label_path is not None:
        if scan.labels is None:
            raise EmptyInput("scan has no labels to write")
        packed = (scan.labels.instance.astype("<u4") << 16) | \
            scan.labels.semantic.astype("<u4")
        packed.tofile(label_path)


def read_poses(path):
    """KITTI-style odometry poses: 12 floats per line, row-major 3x4."""
    poses = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            vals = np.array(line.split(), dtype=np.float64)
            if vals.shape[0] != 12:
                raise CorruptFile(f"{path}:{lineno}: expected 12 values")
            mat = vals.reshape(3, 4)
            poses.append(RigidTransform(mat[:, :3], mat[:, 3]))
    if not poses:
        raise EmptyInput(f"{path} contains no poses")
    return poses


def write_poses(poses, path):
    with open(path, "w") as f:
        for pose in poses:
            mat = np.column_stack([pose.rotation, pose.translation])
            f.write(" ".join(f"{v:.12g}" for v in mat.ravel()) + "\n")


def scan_files_in(directory):
    """Sorted (scan, label-or-None) path pairs under a dataset directory."""
    entries = sorted(p for p in os.listdir(directory) if p.endswith(".bin"))
    pairs = []
    for name in entries:
        stem = name[:-4]
        label = os.path.join(directory, stem + ".label")
        pairs.append((
            os.path.join(directory, name),
            label if os.path.exists(label) else None,
        ))
    return pairs
