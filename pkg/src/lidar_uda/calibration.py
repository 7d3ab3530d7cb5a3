"""Streaming normalization-statistics recalibration on target data.

Only the first normalization layer needs fresh statistics before inference:
every later layer already sees standardized activations. The full
progressive recalibration is kept as a reference implementation for the
runtime comparison.
"""

import copy
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import EmptyInput, ShapeMismatch


@dataclass
class ChannelStats:
    """Per-channel mean and population variance with an exact parallel merge."""

    mean: np.ndarray
    m2: np.ndarray           # sum of squared deviations from the mean
    count: int

    @property
    def variance(self):
        if self.count == 0:
            raise EmptyInput("no samples accumulated")
        return self.m2 / self.count

    @classmethod
    def empty(cls, channels):
        return cls(np.zeros(channels), np.zeros(channels), 0)

    @classmethod
    def of_batch(cls, batch):
        batch = np.asarray(batch, dtype=np.float64)
        mean = batch.mean(axis=1)
        m2 = ((batch - mean[:, None]) ** 2).sum(axis=1)
        return cls(mean, m2, batch.shape[1])


def merge_stats(left, right):
    """Chan et al. parallel combination; associative within round-off."""
    if left.count == 0:
        return ChannelStats(right.mean.copy(), right.m2.copy(), right.count)
    if right.count == 0:
        return ChannelStats(left.mean.copy(), left.m2.copy(), left.count)
    count = left.count + right.count
    delta = right.mean - left.mean
    mean = left.mean + delta * (right.count / count)
    m2 = left.m2 + right.m2 + delta ** 2 * (left.count * right.count / count)
    return ChannelStats(mean, m2, count)


def stream_stats(batches):
    """One-pass per-channel mean and population variance over C x N blocks."""
    total = None
    for batch in batches:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2:
            raise ShapeMismatch("activation blocks must be C x N")
        if batch.shape[1] == 0:
            continue
        part = ChannelStats.of_batch(batch)
        total = part if total is None else merge_stats(total, part)
    if total is None or total.count == 0:
        raise EmptyInput("activation stream is empty")
    return total


@dataclass
class NormLayer:
    """Simulated normalization layer: y = gamma * (x - mean) / sqrt(var) + beta."""

    stats: ChannelStats
    gamma: np.ndarray
    beta: np.ndarray

    @classmethod
    def identity(cls, channels):
        return cls(
            ChannelStats(np.zeros(channels), np.ones(channels), 1),
            np.ones(channels),
            np.zeros(channels),
        )

    @property
    def channels(self):
        return int(self.stats.mean.shape[0])

    def normalize(self, batch):
        var = self.stats.variance
        denom = np.sqrt(var)
        scale = np.where(denom > 0, self.gamma / np.where(denom > 0, denom, 1.0), 0.0)
        return scale[:, None] * (batch - self.stats.mean[:, None]) + self.beta[:, None]


@dataclass
class NormLayerStack:
    layers: List[NormLayer] = field(default_factory=list)

    def __post_init__(self):
        widths = {layer.channels for layer in self.layers}
        if len(widths) > 1:
            raise ShapeMismatch(f"inconsistent channel counts {sorted(widths)}")

    @classmethod
    def identity(cls, num_layers, channels):
        return cls([NormLayer.identity(channels) for _ in range(num_layers)])

    def __len__(self):
        return len(self.layers)

    def forward(self, batch, upto=None):
        out = np.asarray(batch, dtype=np.float64)
        for layer in self.layers[:upto]:
            out = layer.normalize(out)
        return out


def recalibrate_first(stack, target_batches):
    """Replace the first layer's statistics with fresh target statistics."""
    if len(stack) == 0:
        raise EmptyInput("empty layer stack")
    batches = list(target_batches)
    stats = stream_stats(batches)
    out = copy.deepcopy(stack)
    out.layers[0].stats = stats
    return out


def recalibrate_progressive(stack, target_batches):
    """Full progressive recalibration: one data pass per layer, in order."""
    if len(stack) == 0:
        raise EmptyInput("empty layer stack")
    batches = list(target_batches)
    out = copy.deepcopy(stack)
    for k in range(len(out.layers)):
        stats = stream_stats(out.forward(b, upto=k) for b in batches)
        out.layers[k].stats = stats
    return out


def timed_recalibration(stack, target_batches):
    """Wall-clock comparison of the first-layer shortcut vs the full pass."""
    batches = list(target_batches)
    t0 = time.perf_counter()
    lite = recalibrate_first(stack, batches)
    t_lite = time.perf_counter() - t0
    t0 = time.perf_counter()
    full = recalibrate_progressive(stack, batches)
    t_full = time.perf_counter() - t0
    return lite, full, t_lite, t_full
