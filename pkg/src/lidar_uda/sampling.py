"""Instance-aware feature sampling and the random-to-IAS curriculum.

Every (class, instance) pair contributes a fixed quota of feature-map
elements so small instances are not drowned out by large stuff regions.
Early in training the budget is drawn at random instead, with a linear
schedule shifting it toward instance-aware draws.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, InvalidShape
from .transport import FeatureBatch


@dataclass
class SamplingConfig:
    samples_per_pair: int = 64
    curriculum_total_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_pair < 1:
            raise InvalidShape("samples_per_pair must be >= 1")
        if self.curriculum_total_steps < 1:
            raise InvalidShape("curriculum_total_steps must be >= 1")


@dataclass
class SampleSet:
    """Selected feature-map coordinates with their panoptic tags."""

    rows: np.ndarray
    cols: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    is_thing: np.ndarray
    mode_fraction: float
    ias_count: int = 0

    def __len__(self):
        return int(self.rows.size)


def downsample_labels(semantic, instance, target_h, target_w):
    """Nearest-neighbor label downsampling to feature-map resolution.

    Source index per output cell r is floor((r + 0.5) * H / target_h), i.e.
    round-half-up of the nearest source center.
    """
    semantic = np.asarray(semantic)
    instance = np.asarray(instance)
    h, w = semantic.shape
    if target_h < 1 or target_w < 1:
        raise InvalidShape("target dimensions must be >= 1")
    if target_h > h or target_w > w:
        raise InvalidShape("label downsampling cannot upsample")
    rows = np.minimum((np.arange(target_h) + 0.5) * h // target_h, h - 1).astype(int)
    cols = np.minimum((np.arange(target_w) + 0.5) * w // target_w, w - 1).astype(int)
    return semantic[np.ix_(rows, cols)], instance[np.ix_(rows, cols)]


def _pair_groups(semantic, instance, ignore_id):
    """Flat pixel indices grouped by (semantic, instance), sorted for determinism."""
    sem = semantic.ravel()
    inst = instance.ravel()
    keep = sem != ignore_id
    if not keep.any():
        raise EmptyInput("all pixels carry the ignore label")
    flat = np.nonzero(keep)[0]
    keys = sem[flat].astype(np.int64) << 32 | inst[flat].astype(np.int64)
    order = np.argsort(keys, kind="stable")
    flat = flat[order]
    keys = keys[order]
    bounds = np.nonzero(np.diff(keys))[0] + 1
    return [
        (int(k[0] >> 32), int(k[0] & 0xFFFFFFFF), g)
        for k, g in zip(np.split(keys, bounds), np.split(flat, bounds))
    ]


def _tags_at(semantic, instance, flat_idx, thing_ids):
    sem = semantic.ravel()[flat_idx]
    inst = instance.ravel()[flat_idx]
    if thing_ids is None:
        is_thing = inst > 0
    else:
        is_thing = np.isin(sem, list(thing_ids))
    return sem, inst, is_thing


def _as_sample_set(semantic, instance, flat_idx, thing_ids, mode_fraction, ias_count):
    w = semantic.shape[1]
    sem, inst, is_thing = _tags_at(semantic, instance, flat_idx, thing_ids)
    return SampleSet(flat_idx // w, flat_idx % w, sem, inst, is_thing,
                     mode_fraction, ias_count)


def sample_instance_aware(semantic, instance, cfg, rng, ignore_id=0, thing_ids=None):
    """Fixed quota per (class, instance) pair, without replacement within a pair."""
    semantic = np.asarray(semantic)
    instance = np.asarray(instance)
    chosen = []
    for _, _, pixels in _pair_groups(semantic, instance, ignore_id):
        k = min(cfg.samples_per_pair, pixels.size)
        chosen.append(rng.choice(pixels, size=k, replace=False))
    flat = np.concatenate(chosen)
    return _as_sample_set(semantic, instance, flat, thing_ids, 1.0, len(flat))


def sample_random(semantic, instance, total_count, rng, ignore_id=0, thing_ids=None):
    """Uniform draw without replacement over all non-ignore pixels."""
    semantic = np.asarray(semantic)
    instance = np.asarray(instance)
    sem = semantic.ravel()
    pool = np.nonzero(sem != ignore_id)[0]
    if pool.size == 0:
        raise EmptyInput("all pixels carry the ignore label")
    k = min(int(total_count), pool.size)
    flat = rng.choice(pool, size=k, replace=False) if k else np.empty(0, dtype=np.int64)
    return _as_sample_set(semantic, instance, flat, thing_ids, 0.0, 0)


def curriculum_sample(semantic, instance, step, cfg, rng, ignore_id=0, thing_ids=None):
    """Split the IAS budget between random and instance-aware draws.

    The IAS fraction is p = min(1, step / total_steps); round(p * budget)
    coordinates follow the per-pair quota rules, the remainder is drawn at
    random from the pixels not already selected.
    """
    semantic = np.asarray(semantic)
    instance = np.asarray(instance)
    groups = _pair_groups(semantic, instance, ignore_id)
    budget = sum(min(cfg.samples_per_pair, g.size) for _, _, g in groups)
    p = min(1.0, step / cfg.curriculum_total_steps)
    n_ias = int(round(p * budget))

    ias_pool = []
    for _, _, pixels in groups:
        k = min(cfg.samples_per_pair, pixels.size)
        ias_pool.append(rng.choice(pixels, size=k, replace=False))
    ias_flat = np.concatenate(ias_pool)
    if n_ias < budget:
        ias_flat = rng.choice(ias_flat, size=n_ias, replace=False)

    n_rand = budget - n_ias
    if n_rand > 0:
        sem = semantic.ravel()
        pool = np.nonzero(sem != ignore_id)[0]
        pool = np.setdiff1d(pool, ias_flat, assume_unique=True)
        k = min(n_rand, pool.size)
        rand_flat = rng.choice(pool, size=k, replace=False)
        flat = np.concatenate([ias_flat, rand_flat])
    else:
        flat = ias_flat
    return _as_sample_set(semantic, instance, flat, thing_ids, p, int(n_ias))


def gather_features(feature_map, output_map, samples, scale_id=0):
    """Gather psi/output rows at the sampled coordinates, in sample order."""
    feature_map = np.asarray(feature_map, dtype=np.float64)
    output_map = np.asarray(output_map, dtype=np.float64)
    if len(samples) == 0:
        raise EmptyInput("sample set is empty")
    _, h, w = feature_map.shape
    if output_map.shape[1:] != (h, w):
        raise InvalidShape("feature and output maps disagree on h x w")
    if samples.rows.max() >= h or samples.cols.max() >= w or \
            samples.rows.min() < 0 or samples.cols.min() < 0:
        raise InvalidShape("sample coordinate outside the feature map")
    psi = feature_map[:, samples.rows, samples.cols].T
    outputs = output_map[:, samples.rows, samples.cols].T
    return FeatureBatch(scale_id, psi, outputs, samples.semantic,
                        samples.instance, samples.is_thing)
