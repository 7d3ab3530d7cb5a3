"""Command-line entry point.

Subcommands: synth, pose-correct, virtualize, intensity-map, ot, sample,
pdc, evaluate, run. Exit codes: 0 ok, 2 config error, 3 data error,
4 numerical non-convergence. Errors are reported on stderr as one JSON
object carrying the error name from the shared taxonomy.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import plots
from .calibration import NormLayerStack, recalibrate_first, recalibrate_progressive
from .errors import ConfigError, LidarUdaError, NotConverged
from .ground import RansacConfig, apply_correction, compute_correction, fit_ground_plane
from .intensity import ResidualIntensityMap, apply_residual_to_samples, estimate_residual_map
from .io import read_poses, read_scan, scan_files_in, write_poses, write_scan
from .metrics import LabelRemap, mean_iou, panoptic_quality, remap_labels
from .pipeline import PipelineConfig, default_synthetic_config, run_pipeline
from .sampling import SamplingConfig, curriculum_sample
from .sensor import SensorModel
from .synth import SyntheticSceneSpec, generate_synthetic_scene
from .tensorio import export_tensor, import_tensor
from .transport import CostMatrix, FeatureBatch, TransportPlan, UotConfig, adaptation_loss, cost_matrix, loss_gradient, solve_unbalanced
from .virtual import aggregate_map, mesh_dynamic_instance, regress_intensity_batch, render_virtual_scan, sample_mesh


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _add_ransac_flags(p):
    p.add_argument("--ransac-iters", type=int, default=500)
    p.add_argument("--ransac-inlier-m", type=float, default=0.10)
    p.add_argument("--ransac-max-tilt-deg", type=float, default=30.0)
    p.add_argument("--ransac-seed", type=int, default=0)
    p.add_argument("--target-height-m", type=float, default=1.75)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lidar-uda",
        description="LiDAR unsupervised domain adaptation toolkit",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out")
    parser.add_argument("--config", default=None,
                        help="pipeline config JSON (used by `run`)")
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for interface parity; numpy manages "
                             "its own pools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--sensor", required=True)

    p = sub.add_parser("pose-correct", help="canonicalize scans onto the road plane")
    p.add_argument("--input", required=True, help="dataset directory")
    _add_ransac_flags(p)

    p = sub.add_parser("virtualize",
                       help="render semi-synthetic scans through a target sensor")
    p.add_argument("--source-dir", required=True)
    p.add_argument("--poses", help="optional pose file (default identity)")
    p.add_argument("--target-sensor", required=True)
    p.add_argument("--density", type=float, default=200.0)
    p.add_argument("--motion-threshold-m", type=float, default=0.5)
    p.add_argument("--max-edge-m", type=float, default=0.5)
    p.add_argument("--out-dir")

    p = sub.add_parser("intensity-map", help="estimate or apply a residual map")
    p.add_argument("action", choices=["estimate", "apply"])
    p.add_argument("--target", help="tensor of target intensities")
    p.add_argument("--source", help="tensor of source intensities")
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--map", dest="map_path", help="map JSON (apply)")
    p.add_argument("--input", help="intensity tensor to transform (apply)")

    p = sub.add_parser("ot", help="offline unbalanced OT on serialized batches")
    p.add_argument("action", choices=["cost", "solve", "loss", "grad"])
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--cost", dest="cost_path")
    p.add_argument("--mask")
    p.add_argument("--a", dest="a_path")
    p.add_argument("--b", dest="b_path")
    p.add_argument("--plan")
    p.add_argument("--source-psi")
    p.add_argument("--target-psi")
    p.add_argument("--source-y")
    p.add_argument("--target-y")

    p = sub.add_parser("sample", help="curriculum instance-aware sampling")
    p.add_argument("--labels", required=True, help="semantic tensor (u32 HxW)")
    p.add_argument("--instances", required=True, help="instance tensor (u32 HxW)")
    p.add_argument("--samples-per-pair", type=int, default=64)
    p.add_argument("--curriculum-steps", type=int, default=1)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--ignore-id", type=int, default=0)

    p = sub.add_parser("pdc", help="normalization statistics recalibration")
    p.add_argument("--mode", choices=["lite", "full"], default="lite")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--input", nargs="+", required=True,
                   help="activation tensors (C x N)")

    p = sub.add_parser("evaluate", help="panoptic metrics over label files")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--remap")
    p.add_argument("--things", type=int, nargs="*", default=None)
    p.add_argument("--ignore-id", type=int, default=0)

    p = sub.add_parser("run", help="run the configured pipeline")
    p.add_argument("--config", default=argparse.SUPPRESS,
                   help="pipeline config JSON; omit for the built-in "
                        "synthetic fixture")

    return parser


# ------------------------------------------------------------- commands

def _cmd_synth(args):
    spec = SyntheticSceneSpec.from_json(args.spec)
    sensor = SensorModel.from_json(args.sensor)
    scans, truth = generate_synthetic_scene(spec, sensor, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i, scan in enumerate(scans):
        write_scan(scan, os.path.join(args.out, f"{i:06d}.bin"),
                   os.path.join(args.out, f"{i:06d}.label"))
    write_poses([s.pose for s in scans], os.path.join(args.out, "poses.txt"))
    with open(os.path.join(args.out, "truth.json"), "w") as f:
        json.dump({
            "plane_normal": [float(v) for v in truth["plane_normal"]],
            "plane_d": float(truth["plane_d"]),
            "thing_ids": truth["thing_ids"],
            "frames": len(scans),
        }, f, indent=2, sort_keys=True)
    _emit({"scans": len(scans), "out": args.out})
    return 0


def _cmd_pose_correct(args):
    cfg = RansacConfig(args.ransac_iters, args.ransac_inlier_m,
                       args.ransac_max_tilt_deg, args.ransac_seed)
    pairs = scan_files_in(args.input)
    if not pairs:
        raise ConfigError(f"no .bin scans under {args.input}")
    os.makedirs(args.out, exist_ok=True)
    scans = [read_scan(b, l) for b, l in pairs]
    plane = fit_ground_plane(scans[0], cfg)
    corr = compute_correction(plane, args.target_height_m)
    for i, scan in enumerate(scans):
        out = apply_correction(scan, corr)
        label = os.path.join(args.out, f"{i:06d}.label") if out.labels else None
        write_scan(out, os.path.join(args.out, f"{i:06d}.bin"), label)
    payload = {
        "plane_normal": [float(v) for v in plane.normal],
        "plane_d": float(plane.d),
        "inliers": plane.inlier_count,
        "translation": [float(v) for v in corr.translation],
    }
    with open(os.path.join(args.out, "correction.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    _emit(payload)
    return 0


def _cmd_virtualize(args):
    out_dir = args.out_dir or args.out
    os.makedirs(out_dir, exist_ok=True)
    pairs = scan_files_in(args.source_dir)
    if not pairs:
        raise ConfigError(f"no .bin scans under {args.source_dir}")
    poses = read_poses(args.poses) if args.poses else None
    scans = []
    for i, (b, l) in enumerate(pairs):
        pose = poses[i] if poses else None
        scans.append(read_scan(b, l, pose))
    sensor = SensorModel.from_json(args.target_sensor)
    amap = aggregate_map(scans, args.motion_threshold_m)
    rng = np.random.default_rng(args.seed)

    rendered = 0
    for i, scan in enumerate(scans):
        keys = (scan.labels.semantic.astype(np.int64) << 32
                | scan.labels.instance.astype(np.int64))
        map_keys = set((amap.labels.semantic.astype(np.int64) << 32
                        | amap.labels.instance.astype(np.int64)).tolist())
        dynamic = (scan.labels.instance > 0) & ~np.isin(keys, sorted(map_keys))
        dyn_pts, dyn_int, dyn_sem, dyn_inst = [], [], [], []
        for key in np.unique(keys[dynamic]).tolist():
            sel = keys == key
            pts = scan.pose.apply(scan.points[sel])
            inten = scan.intensity[sel]
            try:
                mesh = mesh_dynamic_instance(pts, inten, scan.pose.translation,
                                             args.max_edge_m)
                samples, _ = sample_mesh(mesh, args.density,
                                         seed=int(rng.integers(2 ** 31)))
            except LidarUdaError:
                samples = pts
            if len(samples) == 0:
                samples = pts
            dyn_pts.append(samples)
            dyn_int.append(regress_intensity_batch(samples, pts, inten))
            dyn_sem.append(np.full(len(samples), key >> 32, dtype=np.uint16))
            dyn_inst.append(np.full(len(samples), key & 0xFFFF, dtype=np.uint16))
        from .sensor import PanopticLabels
        if dyn_pts:
            image = render_virtual_scan(
                amap, np.concatenate(dyn_pts), np.concatenate(dyn_int),
                PanopticLabels(np.concatenate(dyn_sem), np.concatenate(dyn_inst)),
                scan.pose, sensor)
        else:
            image = render_virtual_scan(amap, None, None, None, scan.pose, sensor)
        export_tensor(image.channels, os.path.join(out_dir, f"virtual_{i:06d}.luda"))
        export_tensor(image.valid_mask.astype("<u4"),
                      os.path.join(out_dir, f"virtual_{i:06d}_valid.luda"))
        export_tensor(image.labels.semantic.astype("<u4"),
                      os.path.join(out_dir, f"virtual_{i:06d}_sem.luda"))
        export_tensor(image.labels.instance.astype("<u4"),
                      os.path.join(out_dir, f"virtual_{i:06d}_inst.luda"))
        rendered += 1
    _emit({"rendered": rendered, "map_points": len(amap),
           "output_lines": sensor.num_lines})
    return 0


def _cmd_intensity_map(args):
    if args.action == "estimate":
        if not args.target or not args.source:
            raise ConfigError("estimate needs --target and --source tensors")
        target = import_tensor(args.target).astype(np.float64).ravel()
        source = import_tensor(args.source).astype(np.float64).ravel()
        rmap = estimate_residual_map(target, source, bins=args.bins)
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "map.json")
        rmap.to_json(path)
        mapped = apply_residual_to_samples(target, rmap)
        plots.save_intensity_histogram(
            os.path.join(args.out, "intensity_hist.png"), source, target, mapped)
        _emit({"map": path, "bins": rmap.bin_count})
        return 0
    if not args.map_path or not args.input:
        raise ConfigError("apply needs --map and --input")
    rmap = ResidualIntensityMap.from_json(args.map_path)
    data = import_tensor(args.input).astype(np.float64)
    mapped = apply_residual_to_samples(data, rmap)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "mapped.luda")
    export_tensor(mapped, path)
    _emit({"mapped": path, "count": int(mapped.size)})
    return 0


def _load_batch(psi_path, y_path, scale=0):
    psi = import_tensor(psi_path).astype(np.float64)
    outputs = import_tensor(y_path).astype(np.float64)
    n = psi.shape[0]
    return FeatureBatch(scale, psi, outputs, np.zeros(n, dtype=np.uint16),
                        np.zeros(n, dtype=np.uint16), np.zeros(n, dtype=bool))


def _cmd_ot(args):
    os.makedirs(args.out, exist_ok=True)
    if args.action == "cost":
        for flag in ("source_psi", "target_psi", "source_y", "target_y"):
            if getattr(args, flag) is None:
                raise ConfigError(f"cost needs --{flag.replace('_', '-')}")
        s = _load_batch(args.source_psi, args.source_y)
        t = _load_batch(args.target_psi, args.target_y)
        cost = cost_matrix(s, t)
        path = os.path.join(args.out, "cost.luda")
        export_tensor(cost.values, path)
        _emit({"cost": path, "shape": list(cost.values.shape)})
        return 0

    if args.action == "solve":
        if not args.cost_path:
            raise ConfigError("solve needs --cost")
        values = import_tensor(args.cost_path).astype(np.float64)
        mask = None
        if args.mask:
            mask = import_tensor(args.mask).astype(bool)
        cost = CostMatrix(0, values, mask)
        a = import_tensor(args.a_path).astype(np.float64) if args.a_path else None
        b = import_tensor(args.b_path).astype(np.float64) if args.b_path else None
        cfg = UotConfig(args.eps, args.rho, args.max_iters, args.tol)
        plan = solve_unbalanced(cost, a, b, cfg)
        path = os.path.join(args.out, "plan.luda")
        export_tensor(plan.plan, path)
        plots.save_plan_heatmap(os.path.join(args.out, "plan.png"), plan.plan)
        plots.write_plan_csv(os.path.join(args.out, "plan.csv"), plan.plan)
        _emit({
            "plan": path,
            "converged": bool(plan.converged),
            "iterations": plan.iterations_used,
            "total_mass": plan.total_mass,
        })
        return 0 if plan.converged else NotConverged.exit_code

    if args.action == "loss":
        if not args.plan or not args.cost_path:
            raise ConfigError("loss needs --plan and --cost")
        plan_values = import_tensor(args.plan).astype(np.float64)
        cost_values = import_tensor(args.cost_path).astype(np.float64)
        plan = TransportPlan(0, plan_values, float(plan_values.sum()),
                             np.zeros(plan_values.shape[0]),
                             np.zeros(plan_values.shape[1]), 0, True)
        value = adaptation_loss([plan], [CostMatrix(0, cost_values)])
        _emit({"loss": value})
        return 0

    # grad
    for flag in ("plan", "source_psi", "target_psi", "source_y", "target_y"):
        if getattr(args, flag) is None:
            raise ConfigError(f"grad needs --{flag.replace('_', '-')}")
    plan_values = import_tensor(args.plan).astype(np.float64)
    s = _load_batch(args.source_psi, args.source_y)
    t = _load_batch(args.target_psi, args.target_y)
    plan = TransportPlan(0, plan_values, float(plan_values.sum()),
                         np.zeros(plan_values.shape[0]),
                         np.zeros(plan_values.shape[1]), 0, True)
    grads = loss_gradient(plan, s, t)
    paths = {}
    for name, g in (("grad_psi_source", grads.d_psi_source),
                    ("grad_psi_target", grads.d_psi_target),
                    ("grad_y_source", grads.d_outputs_source),
                    ("grad_y_target", grads.d_outputs_target)):
        path = os.path.join(args.out, f"{name}.luda")
        export_tensor(g, path)
        paths[name] = path
    _emit(paths)
    return 0


def _cmd_sample(args):
    semantic = import_tensor(args.labels).astype(np.uint16)
    instance = import_tensor(args.instances).astype(np.uint16)
    cfg = SamplingConfig(args.samples_per_pair, args.curriculum_steps, args.seed)
    rng = np.random.default_rng(args.seed)
    out = curriculum_sample(semantic, instance, args.step, cfg, rng,
                            ignore_id=args.ignore_id)
    os.makedirs(args.out, exist_ok=True)
    export_tensor(out.rows.astype("<u4"), os.path.join(args.out, "rows.luda"))
    export_tensor(out.cols.astype("<u4"), os.path.join(args.out, "cols.luda"))
    export_tensor(out.semantic.astype("<u4"), os.path.join(args.out, "sem.luda"))
    export_tensor(out.instance.astype("<u4"), os.path.join(args.out, "inst.luda"))
    _emit({
        "count": len(out),
        "mode_fraction": out.mode_fraction,
        "ias_count": out.ias_count,
        "out": args.out,
    })
    return 0


def _cmd_pdc(args):
    batches = [import_tensor(p).astype(np.float64) for p in args.input]
    stack = NormLayerStack.identity(args.layers, batches[0].shape[0])
    recalibrate = recalibrate_first if args.mode == "lite" else recalibrate_progressive
    t0 = time.perf_counter()
    out = recalibrate(stack, batches)
    elapsed = time.perf_counter() - t0
    payload = {
        "mode": args.mode,
        "layers": args.layers,
        "seconds": elapsed,
        "per_layer": [
            {
                "mean": [float(v) for v in layer.stats.mean],
                "variance": [float(v) for v in layer.stats.variance],
            }
            for layer in out.layers
        ],
    }
    _emit(payload)
    return 0


def _cmd_evaluate(args):
    from .io import read_labels

    def load_dir(d):
        files = sorted(p for p in os.listdir(d) if p.endswith(".label"))
        if not files:
            raise ConfigError(f"no .label files under {d}")
        sems, insts = [], []
        for name in files:
            path = os.path.join(d, name)
            count = os.path.getsize(path) // 4
            labels = read_labels(path, count)
            sems.append(labels.semantic)
            insts.append(labels.instance)
        return np.concatenate(sems), np.concatenate(insts)

    pred_sem, pred_inst = load_dir(args.pred_dir)
    gt_sem, gt_inst = load_dir(args.gt_dir)
    things = set(args.things) if args.things is not None else \
        set(np.unique(gt_sem[gt_inst > 0]).tolist())
    if args.remap:
        remap = LabelRemap.from_json(args.remap)
        pred_sem, pred_inst = remap_labels(pred_sem, pred_inst, remap)
        gt_sem, gt_inst = remap_labels(gt_sem, gt_inst, remap)
        things = remap.things
    pq = panoptic_quality(pred_sem, pred_inst, gt_sem, gt_inst, things,
                          ignore_id=args.ignore_id)
    iou = mean_iou(pred_sem, gt_sem, ignore_id=args.ignore_id)
    os.makedirs(args.out, exist_ok=True)
    plots.write_metrics_csv(os.path.join(args.out, "metrics.csv"), pq, iou)
    payload = {"pq": pq.summary(), "miou": iou.miou}
    with open(os.path.join(args.out, "metrics.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    _emit(payload)
    return 0


def _cmd_run(args):
    if args.config:
        config = PipelineConfig.from_json(args.config)
        if args.out != "out":
            config.raw["out_dir"] = args.out
            config.out_dir = args.out
    else:
        config = PipelineConfig.from_dict(
            default_synthetic_config(args.out, seed=args.seed))
    report = run_pipeline(config)
    _emit({"out": config.out_dir,
           "stages": sorted(report["stages"]),
           "converged": report["converged"]})
    return 0 if report["converged"] else NotConverged.exit_code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "synth": _cmd_synth,
        "pose-correct": _cmd_pose_correct,
        "virtualize": _cmd_virtualize,
        "intensity-map": _cmd_intensity_map,
        "ot": _cmd_ot,
        "sample": _cmd_sample,
        "pdc": _cmd_pdc,
        "evaluate": _cmd_evaluate,
        "run": _cmd_run,
    }
    try:
        return handlers[args.command](args)
    except LidarUdaError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return exc.exit_code
    except FileNotFoundError as exc:
        json.dump({"error": "ConfigError", "message": str(exc)},
                  sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return ConfigError.exit_code
    except OSError as exc:
        json.dump({"error": "CorruptFile", "message": str(exc)},
                  sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
