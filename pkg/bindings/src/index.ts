// Bindings for training loops: unbalanced OT (cost, solve, loss, gradient),
// curriculum instance-aware sampling, residual intensity mapping, and
// streaming normalization statistics. All calls are stateless wrappers
// around the primary CLI; input buffers are never mutated.

import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { EmptyInput, ShapeMismatch } from "./errors.js";
import { runCli, withScratchDir } from "./runner.js";
import { Tensor, readTensor, writeTensor } from "./tensor.js";

export { LidarUdaError } from "./errors.js";
export { readTensor, tensor, writeTensor } from "./tensor.js";
export type { Dtype, Tensor, TypedData } from "./tensor.js";

export interface SolveOptions {
  eps?: number;
  rho?: number;
  maxIters?: number;
  tol?: number;
}

export interface SolveResult {
  plan: Tensor;
  converged: boolean;
  iterations: number;
  totalMass: number;
}

export function solveUnbalanced(cost: Tensor, opts: SolveOptions = {},
                                a?: Tensor, b?: Tensor,
                                mask?: Tensor): SolveResult {
  if (cost.shape.length !== 2) {
    throw new ShapeMismatch("cost must be a rank-2 tensor");
  }
  return withScratchDir((dir) => {
    writeTensor(join(dir, "cost.luda"), cost);
    const args = ["--out", dir, "ot", "solve", "--cost", join(dir, "cost.luda"),
                  "--eps", String(opts.eps ?? 0.05),
                  "--rho", String(opts.rho ?? 1.0),
                  "--max-iters", String(opts.maxIters ?? 1000),
                  "--tol", String(opts.tol ?? 1e-6)];
    if (a) {
      writeTensor(join(dir, "a.luda"), a);
      args.push("--a", join(dir, "a.luda"));
    }
    if (b) {
      writeTensor(join(dir, "b.luda"), b);
      args.push("--b", join(dir, "b.luda"));
    }
    if (mask) {
      writeTensor(join(dir, "mask.luda"), mask);
      args.push("--mask", join(dir, "mask.luda"));
    }
    const payload = runCli(args).json;
    return {
      plan: readTensor(join(dir, "plan.luda")),
      converged: payload.converged as boolean,
      iterations: payload.iterations as number,
      totalMass: payload.total_mass as number,
    };
  });
}

export function costMatrix(sourcePsi: Tensor, sourceY: Tensor,
                           targetPsi: Tensor, targetY: Tensor): Tensor {
  return withScratchDir((dir) => {
    writeTensor(join(dir, "ps.luda"), sourcePsi);
    writeTensor(join(dir, "pt.luda"), targetPsi);
    writeTensor(join(dir, "ys.luda"), sourceY);
    writeTensor(join(dir, "yt.luda"), targetY);
    runCli(["--out", dir, "ot", "cost",
            "--source-psi", join(dir, "ps.luda"),
            "--target-psi", join(dir, "pt.luda"),
            "--source-y", join(dir, "ys.luda"),
            "--target-y", join(dir, "yt.luda")]);
    return readTensor(join(dir, "cost.luda"));
  });
}

export function adaptationLoss(plan: Tensor, cost: Tensor): number {
  return withScratchDir((dir) => {
    writeTensor(join(dir, "plan.luda"), plan);
    writeTensor(join(dir, "cost.luda"), cost);
    const { json } = runCli(["--out", dir, "ot", "loss",
                             "--plan", join(dir, "plan.luda"),
                             "--cost", join(dir, "cost.luda")]);
    return json.loss as number;
  });
}

export interface LossGradients {
  dPsiSource: Tensor;
  dPsiTarget: Tensor;
  dYSource: Tensor;
  dYTarget: Tensor;
}

export function lossGradient(plan: Tensor, sourcePsi: Tensor, sourceY: Tensor,
                             targetPsi: Tensor, targetY: Tensor): LossGradients {
  return withScratchDir((dir) => {
    writeTensor(join(dir, "plan.luda"), plan);
    writeTensor(join(dir, "ps.luda"), sourcePsi);
    writeTensor(join(dir, "pt.luda"), targetPsi);
    writeTensor(join(dir, "ys.luda"), sourceY);
    writeTensor(join(dir, "yt.luda"), targetY);
    runCli(["--out", dir, "ot", "grad",
            "--plan", join(dir, "plan.luda"),
            "--source-psi", join(dir, "ps.luda"),
            "--target-psi", join(dir, "pt.luda"),
            "--source-y", join(dir, "ys.luda"),
            "--target-y", join(dir, "yt.luda")]);
    return {
      dPsiSource: readTensor(join(dir, "grad_psi_source.luda")),
      dPsiTarget: readTensor(join(dir, "grad_psi_target.luda")),
      dYSource: readTensor(join(dir, "grad_y_source.luda")),
      dYTarget: readTensor(join(dir, "grad_y_target.luda")),
    };
  });
}

export interface SampleOptions {
  samplesPerPair?: number;
  step?: number;
  totalSteps?: number;
  seed?: number;
  ignoreId?: number;
}

export interface SampleSet {
  rows: Uint32Array;
  cols: Uint32Array;
  semantic: Uint32Array;
  instance: Uint32Array;
  modeFraction: number;
  iasCount: number;
}

export function curriculumSample(semantic: Tensor, instance: Tensor,
                                 opts: SampleOptions = {}): SampleSet {
  if (semantic.shape.length !== 2) {
    throw new ShapeMismatch("label maps must be rank-2 tensors");
  }
  return withScratchDir((dir) => {
    const out = join(dir, "out");
    writeTensor(join(dir, "sem.luda"), semantic);
    writeTensor(join(dir, "inst.luda"), instance);
    const { json } = runCli([
      "--seed", String(opts.seed ?? 0), "--out", out, "sample",
      "--labels", join(dir, "sem.luda"),
      "--instances", join(dir, "inst.luda"),
      "--samples-per-pair", String(opts.samplesPerPair ?? 64),
      "--curriculum-steps", String(opts.totalSteps ?? 1),
      "--step", String(opts.step ?? opts.totalSteps ?? 1),
      "--ignore-id", String(opts.ignoreId ?? 0),
    ]);
    return {
      rows: readTensor(join(out, "rows.luda")).data as Uint32Array,
      cols: readTensor(join(out, "cols.luda")).data as Uint32Array,
      semantic: readTensor(join(out, "sem.luda")).data as Uint32Array,
      instance: readTensor(join(out, "inst.luda")).data as Uint32Array,
      modeFraction: json.mode_fraction as number,
      iasCount: json.ias_count as number,
    };
  });
}

export interface ChannelStats {
  mean: Float64Array;
  variance: Float64Array;
  count: number;
}

export function streamStats(batches: Tensor[]): ChannelStats {
  if (batches.length === 0) {
    throw new EmptyInput("no activation batches");
  }
  for (const batch of batches) {
    if (batch.shape.length !== 2) {
      throw new ShapeMismatch("activation batches must be C x N tensors");
    }
  }
  return withScratchDir((dir) => {
    const paths = batches.map((batch, i) => {
      const path = join(dir, `batch_${i}.luda`);
      writeTensor(path, batch);
      return path;
    });
    const { json } = runCli(["pdc", "--mode", "lite", "--layers", "1",
                             "--input", ...paths]);
    const layers = json.per_layer as Array<{ mean: number[]; variance: number[] }>;
    const count = batches.reduce((n, b) => n + b.shape[1], 0);
    return {
      mean: Float64Array.from(layers[0].mean),
      variance: Float64Array.from(layers[0].variance),
      count,
    };
  });
}

export interface ResidualMap {
  bins: number;
  knots: Float64Array;
}

export function estimateResidualMap(target: Tensor, source: Tensor,
                                    bins = 256): ResidualMap {
  return withScratchDir((dir) => {
    writeTensor(join(dir, "target.luda"), target);
    writeTensor(join(dir, "source.luda"), source);
    runCli(["--out", dir, "intensity-map", "estimate",
            "--target", join(dir, "target.luda"),
            "--source", join(dir, "source.luda"),
            "--bins", String(bins)]);
    const payload = JSON.parse(readFileSync(join(dir, "map.json"), "utf-8"));
    return { bins: payload.bins, knots: Float64Array.from(payload.m) };
  });
}

export function applyResidualMap(samples: Tensor, map: ResidualMap): Float64Array {
  return withScratchDir((dir) => {
    writeTensor(join(dir, "in.luda"), samples);
    const payload = { bins: map.bins, m: Array.from(map.knots) };
    writeFileSync(join(dir, "map.json"), JSON.stringify(payload));
    runCli(["--out", dir, "intensity-map", "apply",
            "--map", join(dir, "map.json"),
            "--input", join(dir, "in.luda")]);
    return readTensor(join(dir, "mapped.luda")).data as Float64Array;
  });
}
