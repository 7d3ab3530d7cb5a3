"""End-to-end pipeline: ingest, adapt, solve, calibrate, evaluate, report.

Stages run in a fixed order, each writing its artifacts under the output
directory and contributing a block to a machine-readable JSON report.
Wall-clock numbers live in a separate ``timings`` block so reports stay
byte-identical across runs of the same seed.
"""

import json
import os
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.stats import ks_2samp

from . import plots
from .calibration import NormLayerStack, recalibrate_first, timed_recalibration
from .errors import ConfigError, LidarUdaError, MissingLabels
from .ground import RansacConfig, apply_correction, compute_correction, fit_ground_plane
from .intensity import apply_residual_map, apply_residual_to_samples, estimate_residual_map
from .io import read_scan, scan_files_in, write_poses, write_scan
from .metrics import LabelRemap, mean_iou, panoptic_quality, remap_labels
from .sampling import SamplingConfig, curriculum_sample, downsample_labels, gather_features
from .sensor import INTENSITY, PanopticLabels, elevation_table_uniform, project, sensor_from_dict
from .synth import SyntheticSceneSpec, generate_synthetic_scene
from .tensorio import export_tensor
from .transport import UotConfig, adaptation_loss, cost_matrix, loss_gradient, mask_stuff_thing, solve_unbalanced
from .virtual import (
    aggregate_map,
    mesh_dynamic_instance,
    regress_intensity_batch,
    render_virtual_scan,
    sample_mesh,
)

STAGE_ORDER = ("pose_correct", "virtualize", "intensity_map", "ot", "pdc", "evaluate")


@dataclass
class PipelineConfig:
    raw: dict
    out_dir: str
    seed: int
    stages: dict
    warnings: List[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, cfg):
        if "out_dir" not in cfg:
            raise ConfigError("config needs an out_dir")
        stages = cfg.get("stages", {})
        unknown = set(stages) - set(STAGE_ORDER)
        if unknown:
            raise ConfigError(f"unknown stages {sorted(unknown)}")
        for name, enabled in stages.items():
            if enabled and name not in cfg:
                # every toggled stage must carry its parameter block
                raise ConfigError(f"stage '{name}' enabled but has no block")
        for key in ("source_dir", "target_dir"):
            if key in cfg and not os.path.isdir(cfg[key]):
                raise ConfigError(f"{key} does not exist: {cfg[key]}")
        return cls(cfg, cfg["out_dir"], int(cfg.get("seed", 0)), stages)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def sensor(self, key, default_lines=64):
        block = self.raw.get(key)
        if block is None:
            return elevation_table_uniform(default_lines, 3.0, -25.0, width=512)
        if isinstance(block, str):
            with open(block) as f:
                block = json.load(f)
        return sensor_from_dict(block)


def _stage_rng(seed, stage):
    return np.random.default_rng([seed, STAGE_ORDER.index(stage)])


def _load_scans(cfg, which, seed):
    """Scans from a directory or from an inline synthetic scene block."""
    scene_key = f"{which}_scene"
    dir_key = f"{which}_dir"
    sensor = None
    if scene_key in cfg.raw:
        sensor = cfg.sensor(f"{which}_sensor")
        spec = SyntheticSceneSpec.from_dict(cfg.raw[scene_key])
        scans, truth = generate_synthetic_scene(spec, sensor, seed=seed)
        return scans, truth, sensor
    if dir_key in cfg.raw:
        pairs = scan_files_in(cfg.raw[dir_key])
        scans = [read_scan(b, l) for b, l in pairs]
        return scans, None, cfg.sensor(f"{which}_sensor")
    raise ConfigError(f"config needs {scene_key} or {dir_key}")


def run_pipeline(config):
    """Execute the toggled stages in order and write out_dir/report.json."""
    if isinstance(config, dict):
        config = PipelineConfig.from_dict(config)
    os.makedirs(config.out_dir, exist_ok=True)
    report = {"config": config.raw, "stages": {}, "warnings": []}
    timings = {}
    state = {"config": config}

    for name in STAGE_ORDER:
        if not config.stages.get(name, False):
            continue
        stage_fn = globals()[f"_stage_{name}"]
        t0 = time.perf_counter()
        try:
            report["stages"][name] = stage_fn(config, state, report["warnings"])
        except LidarUdaError as exc:
            exc.args = (f"stage {name}: {exc}",)
            raise
        timings[name] = time.perf_counter() - t0

    report["timings"] = timings
    report["converged"] = all(
        block.get("converged", True) for block in report["stages"].values()
    )
    path = os.path.join(config.out_dir, "report.json")
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    return report


def _ensure_scans(config, state, which):
    key = f"{which}_scans"
    if key not in state:
        scans, truth, sensor = _load_scans(config, which, seed=config.seed)
        state[key] = scans
        state[f"{which}_truth"] = truth
        state[f"{which}_sensor"] = sensor
    return state[key]


# ------------------------------------------------------------------ stages

def _stage_pose_correct(config, state, warnings):
    params = config.raw.get("pose_correct", {})
    ransac = RansacConfig(
        max_iterations=int(params.get("max_iterations", 500)),
        inlier_threshold_m=float(params.get("inlier_threshold_m", 0.10)),
        max_tilt_deg=float(params.get("max_tilt_deg", 30.0)),
        seed=int(params.get("seed", config.seed)),
    )
    target_height = float(params.get("target_height_m", 1.75))
    out_dir = os.path.join(config.out_dir, "pose_correct")
    os.makedirs(out_dir, exist_ok=True)

    block = {}
    for which in ("source", "target"):
        scans = _ensure_scans(config, state, which)
        plane = fit_ground_plane(scans[0], ransac)
        corr = compute_correction(plane, target_height)
        corrected = [apply_correction(s, corr) for s in scans]
        state[f"{which}_scans"] = corrected
        angle = float(np.degrees(np.arccos(
            np.clip((np.trace(corr.rotation) - 1) / 2, -1.0, 1.0))))
        block[which] = {
            "plane_normal": [float(v) for v in plane.normal],
            "plane_d": float(plane.d),
            "inliers": plane.inlier_count,
            "rotation_deg": angle,
            "translation": [float(v) for v in corr.translation],
        }
        for i, scan in enumerate(corrected):
            if scan.labels is not None:
                write_scan(scan, os.path.join(out_dir, f"{which}_{i:04d}.bin"),
                           os.path.join(out_dir, f"{which}_{i:04d}.label"))
            else:
                write_scan(scan, os.path.join(out_dir, f"{which}_{i:04d}.bin"))
        write_poses([s.pose for s in corrected],
                    os.path.join(out_dir, f"{which}_poses.txt"))
    return block


def _stage_virtualize(config, state, warnings):
    params = config.raw.get("virtualize", {})
    density = float(params.get("density_pts_per_m2", 200.0))
    motion_threshold = float(params.get("motion_threshold_m", 0.5))
    max_edge = float(params.get("max_edge_m", 0.5))
    rng = _stage_rng(config.seed, "virtualize")

    scans = _ensure_scans(config, state, "source")
    for scan in scans:
        if scan.labels is None:
            raise MissingLabels("virtualize requires labeled source scans")
    target_sensor = config.sensor("target_sensor", default_lines=32)
    truth = state.get("source_truth") or {}
    thing_ids = set(truth.get("thing_ids", [])) or None

    amap = aggregate_map(scans, motion_threshold, thing_ids)
    static_keys = set(
        (amap.labels.semantic.astype(np.int64) << 32
         | amap.labels.instance.astype(np.int64)).tolist()
    )

    out_dir = os.path.join(config.out_dir, "virtualize")
    os.makedirs(out_dir, exist_ok=True)
    virtual_images = []
    dynamic_counts = []
    for i, scan in enumerate(scans):
        keys = (scan.labels.semantic.astype(np.int64) << 32
                | scan.labels.instance.astype(np.int64))
        if thing_ids is None:
            is_thing = scan.labels.instance > 0
        else:
            is_thing = np.isin(scan.labels.semantic, sorted(thing_ids))
        dynamic = is_thing & ~np.isin(keys, sorted(static_keys))
        dyn_pts, dyn_int, dyn_sem, dyn_inst = [], [], [], []
        for key in np.unique(keys[dynamic]).tolist():
            sel = keys == key
            pts = scan.pose.apply(scan.points[sel])
            inten = scan.intensity[sel]
            try:
                mesh = mesh_dynamic_instance(pts, inten,
                                             scan.pose.translation, max_edge)
                samples, _ = sample_mesh(mesh, density,
                                         seed=int(rng.integers(2 ** 31)))
            except LidarUdaError as exc:
                warnings.append(f"virtualize scan {i} instance {key}: {exc}")
                samples = pts
            if len(samples) == 0:
                samples = pts
            dyn_pts.append(samples)
            dyn_int.append(regress_intensity_batch(samples, pts, inten, k=3))
            dyn_sem.append(np.full(len(samples), key >> 32, dtype=np.uint16))
            dyn_inst.append(np.full(len(samples), key & 0xFFFF, dtype=np.uint16))

        if dyn_pts:
            dynamic_points = np.concatenate(dyn_pts)
            dynamic_intensity = np.concatenate(dyn_int)
            dynamic_labels = PanopticLabels(np.concatenate(dyn_sem),
                                            np.concatenate(dyn_inst))
        else:
            dynamic_points = dynamic_intensity = dynamic_labels = None
        image = render_virtual_scan(amap, dynamic_points, dynamic_intensity,
                                    dynamic_labels, scan.pose, target_sensor)
        virtual_images.append(image)
        dynamic_counts.append(int(dynamic.sum()))
        export_tensor(image.channels.astype("<f8"),
                      os.path.join(out_dir, f"virtual_{i:04d}.luda"))
        export_tensor(image.valid_mask.astype("<u4"),
                      os.path.join(out_dir, f"virtual_{i:04d}_valid.luda"))
        export_tensor(image.labels.semantic.astype("<u4"),
                      os.path.join(out_dir, f"virtual_{i:04d}_sem.luda"))
        export_tensor(image.labels.instance.astype("<u4"),
                      os.path.join(out_dir, f"virtual_{i:04d}_inst.luda"))

    state["virtual_images"] = virtual_images
    plots.save_range_image(os.path.join(out_dir, "virtual_0000.png"),
                           virtual_images[0])
    return {
        "map_points": len(amap),
        "scans": len(scans),
        "output_lines": target_sensor.num_lines,
        "dynamic_points_per_scan": dynamic_counts,
        "valid_pixels": [int(im.valid_mask.sum()) for im in virtual_images],
    }


def _target_images(config, state):
    if "target_images" not in state:
        scans = _ensure_scans(config, state, "target")
        sensor = state.get("target_sensor") or config.sensor("target_sensor", 32)
        state["target_images"] = [project(s, sensor) for s in scans]
    return state["target_images"]


def _source_images(config, state):
    if "virtual_images" in state:
        return state["virtual_images"]
    scans = _ensure_scans(config, state, "source")
    sensor = state.get("source_sensor") or config.sensor("source_sensor", 64)
    return [project(s, sensor) for s in scans]


def _stage_intensity_map(config, state, warnings):
    params = config.raw.get("intensity_map", {})
    bins = int(params.get("bins", 256))
    out_dir = os.path.join(config.out_dir, "intensity_map")
    os.makedirs(out_dir, exist_ok=True)

    source_images = _source_images(config, state)
    target_images = _target_images(config, state)
    source_int = np.concatenate(
        [im.channels[INTENSITY][im.valid_mask] for im in source_images])
    target_int = np.concatenate(
        [im.channels[INTENSITY][im.valid_mask] for im in target_images])

    rmap = estimate_residual_map(target_int, source_int, bins=bins)
    rmap.to_json(os.path.join(out_dir, "map.json"))
    mapped = apply_residual_to_samples(target_int, rmap)
    ks_before = float(ks_2samp(target_int, source_int).statistic)
    ks_after = float(ks_2samp(mapped, source_int).statistic)

    state["target_images"] = [apply_residual_map(im, rmap)
                              for im in target_images]

    plots.save_intensity_histogram(os.path.join(out_dir, "intensity_hist.png"),
                                   source_int, target_int, mapped)
    hist_csv = os.path.join(out_dir, "intensity_hist.csv")
    edges = np.linspace(0, 1, 65)
    with open(hist_csv, "w") as f:
        f.write("bin_left,source,target,mapped\n")
        hs, _ = np.histogram(source_int, bins=edges, density=True)
        ht, _ = np.histogram(target_int, bins=edges, density=True)
        hm, _ = np.histogram(mapped, bins=edges, density=True)
        for k in range(64):
            f.write(f"{edges[k]:.6f},{hs[k]:.6f},{ht[k]:.6f},{hm[k]:.6f}\n")

    return {
        "bins": bins,
        "ks_before": ks_before,
        "ks_after": ks_after,
        "converged": ks_after <= ks_before + 1e-12,
        "samples": [int(target_int.size), int(source_int.size)],
    }


def _class_feature_basis(semantic_id, dim):
    rng = np.random.default_rng([int(semantic_id), 9173])
    return rng.normal(size=dim)


def _synthesize_feature_maps(sem, inst, dim, out_dim, rng, domain_shift=0.0):
    """Gaussian-mixture features per (class, instance) pair at label resolution."""
    h, w = sem.shape
    feature = np.zeros((dim, h, w))
    output = np.zeros((out_dim, h, w))
    for key in np.unique(sem.astype(np.int64) << 32 | inst.astype(np.int64)):
        semantic = int(key >> 32)
        instance = int(key & 0xFFFFFFFF)
        sel = (sem == semantic) & (inst == instance)
        base = _class_feature_basis(semantic, dim)
        inst_off = np.random.default_rng([semantic, instance, 551]).normal(
            scale=0.3, size=dim)
        n = int(sel.sum())
        feature[:, sel] = (base + inst_off + domain_shift)[:, None] \
            + rng.normal(scale=0.1, size=(dim, n))
        logit = np.zeros(out_dim)
        logit[semantic % out_dim] = 2.0
        output[:, sel] = logit[:, None] + rng.normal(scale=0.1, size=(out_dim, n))
    return feature, output


def _stage_ot(config, state, warnings):
    params = config.raw.get("ot", {})
    uot = UotConfig(
        epsilon=float(params.get("epsilon", 0.05)),
        rho=float(params.get("rho", 1.0)),
        max_iterations=int(params.get("max_iterations", 2000)),
        tolerance=float(params.get("tolerance", 1e-8)),
    )
    scales = [int(s) for s in params.get("scales", [4, 8])]
    dim = int(params.get("feature_dim", 8))
    out_dim = int(params.get("output_dim", 4))
    sampling = SamplingConfig(
        samples_per_pair=int(params.get("samples_per_pair", 64)),
        curriculum_total_steps=int(params.get("curriculum_total_steps", 100)),
        seed=config.seed,
    )
    step = int(params.get("curriculum_step", sampling.curriculum_total_steps))
    rng = _stage_rng(config.seed, "ot")
    out_dir = os.path.join(config.out_dir, "ot")
    os.makedirs(out_dir, exist_ok=True)

    source_images = _source_images(config, state)
    target_images = _target_images(config, state)
    src = source_images[0]
    tgt = target_images[0]
    if src.labels is None or tgt.labels is None:
        raise MissingLabels("ot stage needs labeled projections")

    truth = state.get("source_truth") or {}
    thing_ids = set(truth.get("thing_ids", [])) or None

    block = {"scales": {}}
    plans, costs = [], []
    grads_export = {}
    for scale in scales:
        batches = []
        for side, image, shift in (("source", src, 0.0), ("target", tgt, 0.25)):
            full_h, full_w = image.labels.semantic.shape
            sem, ins = downsample_labels(image.labels.semantic,
                                         image.labels.instance,
                                         max(full_h // scale, 1),
                                         max(full_w // scale, 1))
            fmap, omap = _synthesize_feature_maps(sem, ins, dim, out_dim, rng,
                                                  domain_shift=shift)
            samples = curriculum_sample(sem, ins, step, sampling, rng,
                                        ignore_id=0, thing_ids=thing_ids)
            batches.append(gather_features(fmap, omap, samples, scale_id=scale))
        source_batch, target_batch = batches
        cost = cost_matrix(source_batch, target_batch)
        cost = mask_stuff_thing(cost, source_batch.is_thing, target_batch.is_thing)
        plan = solve_unbalanced(cost, cfg=uot)
        grads = loss_gradient(plan, source_batch, target_batch)
        plans.append(plan)
        costs.append(cost)
        grads_export[scale] = grads

        export_tensor(plan.plan, os.path.join(out_dir, f"plan_s{scale}.luda"))
        export_tensor(cost.values, os.path.join(out_dir, f"cost_s{scale}.luda"))
        export_tensor(grads.d_psi_source,
                      os.path.join(out_dir, f"grad_psi_source_s{scale}.luda"))
        export_tensor(grads.d_psi_target,
                      os.path.join(out_dir, f"grad_psi_target_s{scale}.luda"))
        plots.save_plan_heatmap(os.path.join(out_dir, f"plan_s{scale}.png"),
                                plan.plan, title=f"plan at /{scale}")
        plots.write_plan_csv(os.path.join(out_dir, f"plan_s{scale}.csv"),
                             plan.plan)
        block["scales"][str(scale)] = {
            "rows": int(plan.plan.shape[0]),
            "cols": int(plan.plan.shape[1]),
            "converged": bool(plan.converged),
            "iterations": int(plan.iterations_used),
            "total_mass": float(plan.total_mass),
            "mode_fraction": float(min(1.0, step / sampling.curriculum_total_steps)),
        }

    block["adaptation_loss"] = float(adaptation_loss(plans, costs))
    block["converged"] = all(s["converged"] for s in block["scales"].values())
    return block


def _stage_pdc(config, state, warnings):
    params = config.raw.get("pdc", {})
    layers = int(params.get("layers", 8))
    channels = int(params.get("channels", 16))
    total = int(params.get("samples", 200_000))
    chunk = int(params.get("chunk", 8192))
    rng = _stage_rng(config.seed, "pdc")
    out_dir = os.path.join(config.out_dir, "pdc")
    os.makedirs(out_dir, exist_ok=True)

    mean = rng.uniform(-2, 2, size=channels)
    std = rng.uniform(0.5, 2.0, size=channels)
    data = rng.normal(size=(channels, total)) * std[:, None] + mean[:, None]
    batches = [data[:, i:i + chunk] for i in range(0, total, chunk)]

    stack = NormLayerStack.identity(layers, channels)
    lite, _, t_lite, t_full = timed_recalibration(stack, batches)

    stats_payload = {
        "layers": layers,
        "first_layer_mean": [float(v) for v in lite.layers[0].stats.mean],
        "first_layer_var": [float(v) for v in lite.layers[0].stats.variance],
        "true_mean": [float(v) for v in mean],
        "true_var": [float(v) for v in std ** 2],
    }
    with open(os.path.join(out_dir, "stats.json"), "w") as f:
        json.dump(stats_payload, f, indent=2, sort_keys=True)

    mean_err = float(np.abs(lite.layers[0].stats.mean - mean).max())
    return {
        "layers": layers,
        "channels": channels,
        "mean_abs_error": mean_err,
        "speedup_ok": bool(t_lite / t_full <= 1.0 / layers + 0.1),
        "converged": mean_err < 0.1,
    }


def _stage_evaluate(config, state, warnings):
    params = config.raw.get("evaluate", {})
    corruption = float(params.get("corruption", 0.15))
    rng = _stage_rng(config.seed, "evaluate")
    out_dir = os.path.join(config.out_dir, "evaluate")
    os.makedirs(out_dir, exist_ok=True)

    target_images = _target_images(config, state)
    gt_sem = np.concatenate([im.labels.semantic[im.valid_mask]
                             for im in target_images])
    gt_inst = np.concatenate([im.labels.instance[im.valid_mask]
                              for im in target_images])

    truth = state.get("target_truth") or {}
    things = set(truth.get("thing_ids", [])) or set(
        np.unique(gt_sem[gt_inst > 0]).tolist())

    pred_sem = gt_sem.copy()
    pred_inst = gt_inst.copy()
    flip = rng.random(gt_sem.shape[0]) < corruption
    classes = np.unique(gt_sem)
    pred_sem[flip] = rng.choice(classes, size=int(flip.sum()))
    # flipped thing pixels form a separate junk segment instead of leaking
    # into a real instance
    junk = int(gt_inst.max()) + 1
    pred_inst[flip & np.isin(pred_sem, sorted(things))] = junk
    pred_inst[~np.isin(pred_sem, sorted(things))] = 0

    remap_path = params.get("remap")
    if remap_path:
        remap = LabelRemap.from_json(remap_path)
        pred_sem, pred_inst = remap_labels(pred_sem, pred_inst, remap)
        gt_sem, gt_inst = remap_labels(gt_sem, gt_inst, remap)
        things = remap.things

    pq = panoptic_quality(pred_sem, pred_inst, gt_sem, gt_inst, things,
                          ignore_id=0)
    iou = mean_iou(pred_sem, gt_sem, ignore_id=0)
    summary = pq.summary()

    plots.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), pq, iou)
    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        json.dump({"pq": summary, "miou": iou.miou}, f, indent=2, sort_keys=True)

    return {
        "pq": summary["all"]["pq"],
        "sq": summary["all"]["sq"],
        "rq": summary["all"]["rq"],
        "pq_things": summary["things"]["pq"],
        "pq_stuff": summary["stuff"]["pq"],
        "miou": iou.miou,
        "classes": len(pq.per_class),
    }


def default_synthetic_config(out_dir, seed=0):
    """Self-contained desk-scale fixture exercising every stage."""
    return {
        "seed": seed,
        "out_dir": str(out_dir),
        "stages": {name: True for name in STAGE_ORDER},
        "source_sensor": {"num_lines": 64, "width": 512, "elevations_deg": None,
                          "fov_up_deg": 3.0, "fov_down_deg": -25.0,
                          "min_range_m": 0.5, "max_range_m": 120.0},
        "target_sensor": {"num_lines": 32, "width": 512, "elevations_deg": None,
                          "fov_up_deg": 10.0, "fov_down_deg": -30.0,
                          "min_range_m": 0.5, "max_range_m": 120.0},
        "source_scene": {
            "ground_tilt_deg": 3.0,
            "ground_distance_m": 1.55,
            "ground_intensity": 0.3,
            "num_frames": 3,
            "noise_sigma_m": 0.004,
            "intensity_jitter": 0.08,
            "walls": [
                {"center": [16.0, 5.0, 1.0], "normal": [-1.0, 0.2, 0.0],
                 "width": 18.0, "height": 7.0, "intensity": 0.55},
                {"center": [-14.0, -4.0, 1.0], "normal": [1.0, 0.0, 0.0],
                 "width": 14.0, "height": 6.0, "intensity": 0.5},
            ],
            "boxes": [
                {"center": [8.0, -2.0, -0.9], "size": [3.5, 1.8, 1.5],
                 "yaw_deg": 10.0, "semantic_id": 10, "instance_id": 1,
                 "velocity": [1.2, 0.0, 0.0], "intensity": 0.85},
                {"center": [6.0, 3.0, -0.9], "size": [3.5, 1.8, 1.5],
                 "yaw_deg": -25.0, "semantic_id": 10, "instance_id": 2,
                 "velocity": [0.0, 0.0, 0.0], "intensity": 0.75},
            ],
        },
        "target_scene": {
            "ground_tilt_deg": 0.0,
            "ground_distance_m": 1.9,
            "ground_intensity": 0.12,
            "num_frames": 2,
            "noise_sigma_m": 0.004,
            "intensity_jitter": 0.04,
            "walls": [
                {"center": [12.0, 0.0, 1.0], "normal": [-1.0, 0.0, 0.0],
                 "width": 16.0, "height": 6.0, "intensity": 0.3},
            ],
            "boxes": [
                {"center": [7.0, -1.0, -1.2], "size": [3.5, 1.8, 1.5],
                 "yaw_deg": 0.0, "semantic_id": 10, "instance_id": 1,
                 "velocity": [0.0, 0.0, 0.0], "intensity": 0.5},
            ],
        },
        "pose_correct": {"max_iterations": 300, "inlier_threshold_m": 0.08,
                         "max_tilt_deg": 30.0, "target_height_m": 1.75},
        "virtualize": {"density_pts_per_m2": 150.0, "motion_threshold_m": 0.5,
                       "max_edge_m": 0.8},
        "intensity_map": {"bins": 128},
        "ot": {"epsilon": 0.05, "rho": 1.0, "max_iterations": 3000,
               "tolerance": 1e-8, "scales": [4, 8], "feature_dim": 8,
               "output_dim": 4, "samples_per_pair": 32},
        "pdc": {"layers": 8, "channels": 12, "samples": 120_000, "chunk": 8192},
        "evaluate": {"corruption": 0.12},
    }
