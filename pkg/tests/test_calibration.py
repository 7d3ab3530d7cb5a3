"""Streaming statistics against two-pass oracles plus recalibration algebra."""

import numpy as np
import pytest

from lidar_uda.calibration import (
    ChannelStats,
    NormLayer,
    NormLayerStack,
    merge_stats,
    recalibrate_first,
    recalibrate_progressive,
    stream_stats,
    timed_recalibration,
)
from lidar_uda.errors import EmptyInput


def two_pass_oracle(values):
    """Textbook mean and population variance, one channel."""
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, var


def chunked(data, size):
    return [data[:, i:i + size] for i in range(0, data.shape[1], size)]


def test_constant_stream():
    stats = stream_stats([np.full((2, 50), 0.7), np.full((2, 30), 0.7)])
    np.testing.assert_allclose(stats.mean, 0.7)
    np.testing.assert_allclose(stats.variance, 0.0, atol=1e-15)
    assert stats.count == 80


def test_two_elements_textbook():
    stats = stream_stats([np.array([[0.0, 2.0]])])
    mean, var = two_pass_oracle([0.0, 2.0])
    assert stats.mean[0] == pytest.approx(mean) and mean == 1.0
    assert stats.variance[0] == pytest.approx(var) and var == 1.0


def test_large_stream_matches_two_pass():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((3, 100_000))
    stats = stream_stats(chunked(data, 777))
    naive_mean = data.mean(axis=1)
    naive_var = ((data - naive_mean[:, None]) ** 2).mean(axis=1)
    np.testing.assert_allclose(stats.mean, naive_mean, atol=1e-10)
    np.testing.assert_allclose(stats.variance, naive_var, atol=1e-10)


def test_empty_stream_rejected():
    with pytest.raises(EmptyInput):
        stream_stats([])
    with pytest.raises(EmptyInput):
        stream_stats([np.zeros((2, 0))])


def test_merge_associativity():
    rng = np.random.default_rng(1)
    parts = [ChannelStats.of_batch(rng.normal(size=(4, n)))
             for n in (11, 57, 23, 101, 5)]
    left = parts[0]
    for p in parts[1:]:
        left = merge_stats(left, p)
    right = parts[-1]
    for p in parts[-2::-1]:
        right = merge_stats(p, right)
    tree = merge_stats(merge_stats(parts[0], parts[1]),
                       merge_stats(parts[2], merge_stats(parts[3], parts[4])))
    for other in (right, tree):
        np.testing.assert_allclose(left.mean, other.mean, atol=1e-12)
        np.testing.assert_allclose(left.variance, other.variance, atol=1e-12)
        assert left.count == other.count


# --------------------------------------------------------- recalibration

def gaussian_batches(rng, channels, total, chunk, mean=0.0, std=1.0):
    data = rng.normal(mean, std, size=(channels, total))
    return chunked(data, chunk)


def test_single_layer_equals_stream_stats():
    rng = np.random.default_rng(2)
    batches = gaussian_batches(rng, 3, 10_000, 512, mean=2.0, std=3.0)
    stack = NormLayerStack.identity(1, 3)
    lite = recalibrate_first(stack, batches)
    full = recalibrate_progressive(stack, batches)
    want = stream_stats(batches)
    for got in (lite.layers[0].stats, full.layers[0].stats):
        np.testing.assert_allclose(got.mean, want.mean, atol=1e-12)
        np.testing.assert_allclose(got.variance, want.variance, atol=1e-12)


def test_later_layers_untouched():
    rng = np.random.default_rng(3)
    stack = NormLayerStack.identity(5, 2)
    for i, layer in enumerate(stack.layers):
        layer.stats = ChannelStats(np.full(2, float(i)), np.full(2, 1.0 + i), 1)
    before = [(l.stats.mean.copy(), l.stats.m2.copy()) for l in stack.layers]
    out = recalibrate_first(stack, gaussian_batches(rng, 2, 5000, 256))
    for k in range(1, 5):
        assert np.array_equal(out.layers[k].stats.mean, before[k][0])
        assert np.array_equal(out.layers[k].stats.m2, before[k][1])
    assert not np.array_equal(out.layers[0].stats.mean, before[0][0])


def test_target_statistics_recovered():
    rng = np.random.default_rng(4)
    stack = NormLayerStack.identity(3, 4)
    out = recalibrate_first(stack, gaussian_batches(rng, 4, 100_000, 4096,
                                                    mean=3.0, std=2.0))
    np.testing.assert_allclose(out.layers[0].stats.mean, 3.0, atol=0.05)
    np.testing.assert_allclose(out.layers[0].stats.variance, 4.0, atol=0.1)


def test_first_layer_output_standardized():
    rng = np.random.default_rng(5)
    batches = gaussian_batches(rng, 3, 50_000, 1000, mean=-1.5, std=0.7)
    stack = NormLayerStack.identity(2, 3)
    out = recalibrate_first(stack, batches)
    normalized = np.concatenate([out.layers[0].normalize(b) for b in batches], axis=1)
    np.testing.assert_allclose(normalized.mean(axis=1), 0.0, atol=1e-6)
    np.testing.assert_allclose(normalized.var(axis=1), 1.0, atol=1e-6)


def test_progressive_second_layer_sees_standardized_data():
    rng = np.random.default_rng(6)
    batches = gaussian_batches(rng, 2, 100_000, 4096, mean=5.0, std=2.5)
    stack = NormLayerStack.identity(2, 2)
    out = recalibrate_progressive(stack, batches)
    np.testing.assert_allclose(out.layers[1].stats.mean, 0.0, atol=0.05)
    np.testing.assert_allclose(out.layers[1].stats.variance, 1.0, atol=0.05)


def test_affine_parameters_untouched():
    rng = np.random.default_rng(7)
    stack = NormLayerStack.identity(3, 2)
    stack.layers[0].gamma = np.array([2.0, 3.0])
    stack.layers[0].beta = np.array([-1.0, 1.0])
    out = recalibrate_first(stack, gaussian_batches(rng, 2, 2000, 500))
    np.testing.assert_array_equal(out.layers[0].gamma, [2.0, 3.0])
    np.testing.assert_array_equal(out.layers[0].beta, [-1.0, 1.0])


def test_runtime_scales_with_depth():
    rng = np.random.default_rng(8)
    batches = gaussian_batches(rng, 16, 200_000, 8192)
    lite_times, full_times = [], []
    for depth in (1, 4, 16):
        stack = NormLayerStack.identity(depth, 16)
        _, _, t_lite, t_full = timed_recalibration(stack, batches)
        lite_times.append(t_lite)
        full_times.append(t_full)
    assert full_times[2] > full_times[0] * 4  # >= linear growth, with slack
    assert lite_times[2] < full_times[2] * 0.5


def test_norm_layer_zero_variance_guard():
    layer = NormLayer(ChannelStats(np.zeros(1), np.zeros(1), 10),
                      np.ones(1), np.zeros(1))
    out = layer.normalize(np.full((1, 5), 3.0))
    assert np.all(np.isfinite(out))
