"""Panoptic quality, mean IoU, and cross-dataset label remapping.

Segments are matched per class at IoU > 0.5 (which makes the matching
unique); PQ = sum(IoU) / (TP + FP/2 + FN/2) per class, averaged without
weighting. Positions whose ground truth carries the ignore id are removed
from both sides before any counting.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Set

import numpy as np

from .errors import ShapeMismatch, UnmappedLabel


@dataclass
class LabelRemap:
    """Total map source semantic id -> target id (None = ignore)."""

    mapping: Dict[int, Optional[int]]
    things: Set[int]
    ignore_id: int = 0

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            cfg = json.load(f)
        mapping = {int(k): (None if v is None else int(v))
                   for k, v in cfg["mapping"].items()}
        return cls(mapping, set(cfg.get("things", [])),
                   int(cfg.get("ignore_id", 0)))

    def to_json(self, path):
        payload = {
            "mapping": {str(k): v for k, v in self.mapping.items()},
            "things": sorted(self.things),
            "ignore_id": self.ignore_id,
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)

    @classmethod
    def identity(cls, ids, things, ignore_id=0):
        return cls({int(i): int(i) for i in ids}, set(things), ignore_id)


def remap_labels(semantic, instance, remap):
    """Substitute semantic ids; instances survive only for thing targets."""
    semantic = np.asarray(semantic)
    instance = np.asarray(instance)
    present = np.unique(semantic)
    missing = [int(s) for s in present if int(s) not in remap.mapping]
    if missing:
        raise UnmappedLabel(f"no mapping for semantic ids {missing}")
    lut_size = int(present.max()) + 1
    lut = np.full(lut_size, remap.ignore_id, dtype=np.int64)
    for src, tgt in remap.mapping.items():
        if src < lut_size:
            lut[src] = remap.ignore_id if tgt is None else tgt
    new_sem = lut[semantic.astype(np.int64)]
    thing_mask = np.isin(new_sem, sorted(remap.things))
    new_inst = np.where(thing_mask, instance, 0)
    return new_sem.astype(semantic.dtype), new_inst.astype(instance.dtype)


@dataclass
class ClassPQ:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    @property
    def denom(self):
        return self.tp + 0.5 * self.fp + 0.5 * self.fn

    @property
    def pq(self):
        return self.iou_sum / self.denom if self.denom > 0 else 0.0

    @property
    def sq(self):
        return self.iou_sum / self.tp if self.tp > 0 else 0.0

    @property
    def rq(self):
        return self.tp / self.denom if self.denom > 0 else 0.0


@dataclass
class PanopticResult:
    per_class: Dict[int, ClassPQ]
    things: Set[int] = field(default_factory=set)

    def _aggregate(self, classes):
        classes = [c for c in classes if c in self.per_class]
        if not classes:
            return {"pq": 0.0, "sq": 0.0, "rq": 0.0, "n": 0}
        stats = [self.per_class[c] for c in classes]
        return {
            "pq": float(np.mean([s.pq for s in stats])),
            "sq": float(np.mean([s.sq for s in stats])),
            "rq": float(np.mean([s.rq for s in stats])),
            "n": len(classes),
        }

    def summary(self):
        all_ids = sorted(self.per_class)
        thing_ids = [c for c in all_ids if c in self.things]
        stuff_ids = [c for c in all_ids if c not in self.things]
        return {
            "all": self._aggregate(all_ids),
            "things": self._aggregate(thing_ids),
            "stuff": self._aggregate(stuff_ids),
        }


def _segment_keys(sem, inst, things_arr):
    inst = np.where(np.isin(sem, things_arr), inst, 0)
    return sem.astype(np.int64) << 32 | inst.astype(np.int64)


def panoptic_quality(pred_sem, pred_inst, gt_sem, gt_inst, things, ignore_id=0):
    """Per-class and aggregate PQ/SQ/RQ with thing/stuff splits."""
    arrays = [np.asarray(a).ravel() for a in (pred_sem, pred_inst, gt_sem, gt_inst)]
    if len({a.shape for a in arrays}) != 1:
        raise ShapeMismatch("prediction and ground-truth lengths differ")
    ps, pi, gs, gi = arrays
    keep = gs != ignore_id
    ps, pi, gs, gi = ps[keep], pi[keep], gs[keep], gi[keep]
    things_arr = np.asarray(sorted(things), dtype=np.int64)

    gt_keys = _segment_keys(gs, gi, things_arr)
    pred_keys = _segment_keys(ps, pi, things_arr)

    gt_ids, gt_sizes = np.unique(gt_keys, return_counts=True)
    pred_mask = ps != ignore_id
    pred_ids, pred_sizes = np.unique(pred_keys[pred_mask], return_counts=True)
    gt_size = dict(zip(gt_ids.tolist(), gt_sizes.tolist()))
    pred_size = dict(zip(pred_ids.tolist(), pred_sizes.tolist()))

    per_class = {}
    for key in gt_ids:
        per_class.setdefault(int(key >> 32), ClassPQ())
    for key in pred_ids:
        per_class.setdefault(int(key >> 32), ClassPQ())

    matched_gt, matched_pred = set(), set()
    pair_keys = np.stack([gt_keys[pred_mask], pred_keys[pred_mask]], axis=1)
    pairs, inter = np.unique(pair_keys, axis=0, return_counts=True)
    for (gk, pk), n_inter in zip(pairs.tolist(), inter.tolist()):
        if gk >> 32 != pk >> 32:
            continue  # different class, can never match
        union = gt_size[gk] + pred_size[pk] - n_inter
        iou = n_inter / union
        if iou > 0.5:
            cls = per_class[int(gk >> 32)]
            cls.tp += 1
            cls.iou_sum += iou
            matched_gt.add(gk)
            matched_pred.add(pk)

    for key in gt_ids.tolist():
        if key not in matched_gt:
            per_class[int(key >> 32)].fn += 1
    for key in pred_ids.tolist():
        if key not in matched_pred:
            per_class[int(key >> 32)].fp += 1

    return PanopticResult(per_class, set(int(t) for t in things))


@dataclass
class IoUResult:
    per_class: Dict[int, float]
    miou: float


def mean_iou(pred_sem, gt_sem, ignore_id=0):
    """Per-class IoU over non-ignore points, averaged over classes present in GT."""
    ps = np.asarray(pred_sem).ravel()
    gs = np.asarray(gt_sem).ravel()
    if ps.shape != gs.shape:
        raise ShapeMismatch("prediction and ground-truth lengths differ")
    keep = gs != ignore_id
    ps, gs = ps[keep], gs[keep]
    present = np.unique(gs)
    per_class = {}
    for c in present.tolist():
        tp = int(np.sum((ps == c) & (gs == c)))
        fp = int(np.sum((ps == c) & (gs != c)))
        fn = int(np.sum((ps != c) & (gs == c)))
        denom = tp + fp + fn
        per_class[int(c)] = tp / denom if denom else 0.0
    miou = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return IoUResult(per_class, miou)
