// Toy alternating optimization: a two-layer feature extractor is pulled
// toward a shifted target distribution by repeatedly (1) solving the
// unbalanced transport plan on the current features and (2) taking a
// gradient-descent step on the transport loss with the plan held fixed.
//
// Run with: npx tsx examples/train_toy.ts

import {
  adaptationLoss,
  costMatrix,
  lossGradient,
  solveUnbalanced,
  tensor,
  Tensor,
} from "../src/index.js";

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussian(rand: () => number): () => number {
  return () => {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  };
}

// Row-major matrices as plain arrays.
type Mat = { rows: number; cols: number; data: Float64Array };

function mat(rows: number, cols: number, fill: () => number): Mat {
  return { rows, cols, data: Float64Array.from({ length: rows * cols }, fill) };
}

function matmul(a: Mat, b: Mat): Mat {
  const out = { rows: a.rows, cols: b.cols, data: new Float64Array(a.rows * b.cols) };
  for (let i = 0; i < a.rows; i++) {
    for (let k = 0; k < a.cols; k++) {
      const aik = a.data[i * a.cols + k];
      for (let j = 0; j < b.cols; j++) {
        out.data[i * b.cols + j] += aik * b.data[k * b.cols + j];
      }
    }
  }
  return out;
}

function relu(m: Mat): Mat {
  return { ...m, data: m.data.map((v) => Math.max(0, v)) };
}

function reluMask(m: Mat): Float64Array {
  return m.data.map((v) => (v > 0 ? 1 : 0));
}

function asTensor(m: Mat): Tensor {
  return tensor(Float64Array.from(m.data), [m.rows, m.cols]);
}

// Two-layer extractor: psi = relu(X W1) W2. The classifier head is frozen;
// its outputs stand in for the pre-classification vectors.
const N = 24, IN = 6, HID = 10, FEAT = 5, OUT = 3;
const rand = mulberry32(1234);
const noise = gaussian(rand);

const sourceX = mat(N, IN, noise);
const targetX = mat(N, IN, () => noise() + 0.8); // domain-shifted inputs

let w1 = mat(IN, HID, () => 0.3 * noise());
let w2 = mat(HID, FEAT, () => 0.3 * noise());
const head = mat(FEAT, OUT, () => 0.5 * noise());

function forward(x: Mat) {
  const h = relu(matmul(x, w1));
  const psi = matmul(h, w2);
  const y = matmul(psi, head);
  return { h, psi, y };
}

const lr = 0.02;
const steps = 8;
console.log("step  transport-loss  plan-mass  iterations");
for (let step = 0; step < steps; step++) {
  const src = forward(sourceX);
  const tgt = forward(targetX);

  // (1) solve the plan on the current features
  const cost = costMatrix(asTensor(src.psi), asTensor(src.y),
                          asTensor(tgt.psi), asTensor(tgt.y));
  const solved = solveUnbalanced(cost, { eps: 0.1, rho: 1.0, maxIters: 2000,
                                         tol: 1e-8 });
  const loss = adaptationLoss(solved.plan, cost);
  console.log(`${String(step).padStart(4)}  ${loss.toFixed(6).padStart(14)}  ` +
    `${solved.totalMass.toFixed(4).padStart(9)}  ${solved.iterations}`);

  // (2) gradient step with the plan frozen
  const grads = lossGradient(solved.plan, asTensor(src.psi), asTensor(src.y),
                             asTensor(tgt.psi), asTensor(tgt.y));

  // back-prop d(loss)/d(psi) through psi = relu(x w1) w2 for both domains;
  // the head is frozen so the y-gradient flows through it first
  const updates: Array<{ x: Mat; h: Mat; dPsi: Float64Array; dY: Float64Array }> = [
    { x: sourceX, h: forward(sourceX).h,
      dPsi: grads.dPsiSource.data as Float64Array,
      dY: grads.dYSource.data as Float64Array },
    { x: targetX, h: forward(targetX).h,
      dPsi: grads.dPsiTarget.data as Float64Array,
      dY: grads.dYTarget.data as Float64Array },
  ];
  const dW1 = new Float64Array(IN * HID);
  const dW2 = new Float64Array(HID * FEAT);
  for (const { x, h, dPsi, dY } of updates) {
    // total gradient on psi: direct + through the frozen head
    const g = Float64Array.from(dPsi);
    for (let i = 0; i < N; i++) {
      for (let f = 0; f < FEAT; f++) {
        let acc = 0;
        for (let o = 0; o < OUT; o++) acc += dY[i * OUT + o] * head.data[f * OUT + o];
        g[i * FEAT + f] += acc;
      }
    }
    // dW2 = h^T g
    for (let k = 0; k < HID; k++) {
      for (let f = 0; f < FEAT; f++) {
        let acc = 0;
        for (let i = 0; i < N; i++) acc += h.data[i * HID + k] * g[i * FEAT + f];
        dW2[k * FEAT + f] += acc;
      }
    }
    // dH = g w2^T, gated by relu; dW1 = x^T dH
    const mask = reluMask(matmul(x, w1));
    for (let d = 0; d < IN; d++) {
      for (let k = 0; k < HID; k++) {
        let acc = 0;
        for (let i = 0; i < N; i++) {
          let dh = 0;
          for (let f = 0; f < FEAT; f++) dh += g[i * FEAT + f] * w2.data[k * FEAT + f];
          acc += x.data[i * IN + d] * dh * mask[i * HID + k];
        }
        dW1[d * HID + k] += acc;
      }
    }
  }
  w1 = { ...w1, data: w1.data.map((v, i) => v - lr * dW1[i]) };
  w2 = { ...w2, data: w2.data.map((v, i) => v - lr * dW2[i]) };
}

const final = forward(sourceX);
const finalT = forward(targetX);
const cost = costMatrix(asTensor(final.psi), asTensor(final.y),
                        asTensor(finalT.psi), asTensor(finalT.y));
const solved = solveUnbalanced(cost, { eps: 0.1, rho: 1.0, maxIters: 2000 });
console.log(`final transport loss: ${adaptationLoss(solved.plan, cost).toFixed(6)}`);
