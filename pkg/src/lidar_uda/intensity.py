"""Residual intensity transform aligning target intensities with the source.

The transform is a monotone piecewise-linear map m over [0, 1] built by
matching binned empirical CDFs; applying it adds the residual
r(q) = m(q) - q to the intensity channel and clamps back into [0, 1].
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples
from .sensor import INTENSITY, RangeImage

DEFAULT_BINS = 256


@dataclass
class ResidualIntensityMap:
    """Monotone map m encoded by B+1 knots over uniform breakpoints in [0, 1]."""

    knots: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=np.float64)
        if self.knots.ndim != 1 or self.knots.shape[0] < 2:
            raise ValueError("need at least 2 knots")
        if np.any(np.diff(self.knots) < -1e-12):
            raise ValueError("knots must be non-decreasing")

    @property
    def bin_count(self):
        return int(self.knots.shape[0] - 1)

    def mapped(self, q):
        grid = np.linspace(0.0, 1.0, self.knots.shape[0])
        return np.interp(np.asarray(q, dtype=np.float64), grid, self.knots)

    def residual(self, q):
        return self.mapped(q) - np.asarray(q, dtype=np.float64)

    def to_json(self, path):
        payload = {"bins": self.bin_count, "m": [float(v) for v in self.knots]}
        with open(path, "w") as f:
            json.dump(payload, f)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            payload = json.load(f)
        knots = np.asarray(payload["m"], dtype=np.float64)
        if knots.shape[0] != payload["bins"] + 1:
            raise ValueError("knot count does not match bin count")
        return cls(knots)


def estimate_residual_map(target_samples, source_samples, bins=DEFAULT_BINS):
    """Histogram/CDF matching: m = F_source^-1 o F_target on ``bins`` bins."""
    target = np.clip(np.asarray(target_samples, dtype=np.float64).ravel(), 0.0, 1.0)
    source = np.clip(np.asarray(source_samples, dtype=np.float64).ravel(), 0.0, 1.0)
    if target.size < bins or source.size < bins:
        raise InsufficientSamples(
            f"need at least {bins} samples per side, "
            f"got {target.size} target / {source.size} source"
        )
    edges = np.linspace(0.0, 1.0, bins + 1)
    cdf_t = _edge_cdf(target, edges)
    cdf_s = _edge_cdf(source, edges)
    # quantile of the source histogram at the target CDF of each breakpoint
    knots = np.interp(cdf_t, cdf_s, edges)
    knots = np.maximum.accumulate(knots)
    return ResidualIntensityMap(knots)


def _edge_cdf(samples, edges):
    hist, _ = np.histogram(samples, bins=edges)
    cdf = np.concatenate([[0.0], np.cumsum(hist)]) / samples.size
    return cdf


def apply_residual_map(image, rmap):
    """Replace the intensity channel by clamp(I + r(I), 0, 1) at valid pixels."""
    channels = image.channels.copy()
    valid = image.valid_mask
    intensity = channels[INTENSITY][valid]
    channels[INTENSITY][valid] = np.clip(intensity + rmap.residual(intensity), 0.0, 1.0)
    return RangeImage(
        channels,
        image.valid_mask.copy(),
        None if image.point_index is None else image.point_index.copy(),
        None if image.labels is None else image.labels.copy(),
    )


def apply_residual_to_samples(samples, rmap):
    samples = np.asarray(samples, dtype=np.float64)
    return np.clip(samples + rmap.residual(samples), 0.0, 1.0)
