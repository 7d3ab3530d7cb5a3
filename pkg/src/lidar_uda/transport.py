"""Multi-scale feature-space unbalanced optimal transport.

Cost matrices are squared Euclidean distances between feature rows plus
squared distances between pre-classification outputs. Plans come from a
log-domain Sinkhorn scaling with soft (KL-penalized) marginals, which lets
mass be destroyed instead of forcing matches between dissimilar scenes.
Stuff/thing admissibility is enforced as a kernel mask before solving, and
the masked plan is rescaled so its total mass equals the mass an
unconstrained solve places on the admissible support.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyAdmissibleSet,
    InvalidCost,
    InvalidMarginals,
    ShapeMismatch,
)


@dataclass
class FeatureBatch:
    """Sampled feature rows at one scale with their panoptic tags."""

    scale_id: int
    psi: np.ndarray          # (n, D) feature vectors
    outputs: np.ndarray      # (n, K) pre-classification vectors
    semantic: np.ndarray
    instance: np.ndarray
    is_thing: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        self.semantic = np.asarray(self.semantic)
        self.instance = np.asarray(self.instance)
        self.is_thing = np.asarray(self.is_thing, dtype=bool)
        n = self.psi.shape[0]
        if n < 1:
            raise ShapeMismatch("feature batch must have at least one row")
        for name, arr in (("outputs", self.outputs), ("semantic", self.semantic),
                          ("instance", self.instance), ("is_thing", self.is_thing)):
            if arr.shape[0] != n:
                raise ShapeMismatch(f"{name} rows ({arr.shape[0]}) != psi rows ({n})")

    def __len__(self):
        return int(self.psi.shape[0])


@dataclass
class CostMatrix:
    scale_id: int
    values: np.ndarray
    mask: np.ndarray = None  # True = admissible pair

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ShapeMismatch("mask shape differs from cost shape")


@dataclass
class TransportPlan:
    scale_id: int
    plan: np.ndarray
    total_mass: float
    row_residual: np.ndarray   # |row sums - a|
    col_residual: np.ndarray   # |col sums - b|
    iterations_used: int
    converged: bool
    potentials: tuple = None   # (f, g) duals, reusable as warm start


@dataclass
class UotConfig:
    epsilon: float = 0.05
    rho: float = 1.0
    max_iterations: int = 1000
    tolerance: float = 1e-6

    def __post_init__(self):
        if not (self.epsilon > 0 and self.rho > 0):
            raise InvalidMarginals("epsilon and rho must be positive")


def cost_matrix(source, target):
    """Pairwise squared distances of features plus squared distances of outputs."""
    if source.scale_id != target.scale_id:
        raise ShapeMismatch(
            f"scale mismatch: {source.scale_id} vs {target.scale_id}"
        )
    if source.psi.shape[1] != target.psi.shape[1]:
        raise ShapeMismatch("feature dimension D differs between batches")
    if source.outputs.shape[1] != target.outputs.shape[1]:
        raise ShapeMismatch("output dimension K differs between batches")
    c = _sq_dists(source.psi, target.psi) + _sq_dists(source.outputs, target.outputs)
    return CostMatrix(source.scale_id, c)


def _sq_dists(xs, ys):
    # ||x||^2 + ||y||^2 - 2 x.y, clipped against tiny negative round-off
    sq = (
        np.sum(xs * xs, axis=1)[:, None]
        + np.sum(ys * ys, axis=1)[None, :]
        - 2.0 * xs @ ys.T
    )
    return np.maximum(sq, 0.0)


def mask_stuff_thing(cost, source_is_thing, target_is_thing):
    """Mark stuff-vs-thing pairs inadmissible so the solver never couples them."""
    src = np.asarray(source_is_thing, dtype=bool)
    tgt = np.asarray(target_is_thing, dtype=bool)
    if src.shape[0] != cost.values.shape[0] or tgt.shape[0] != cost.values.shape[1]:
        raise ShapeMismatch("tag lengths do not match the cost matrix")
    mask = cost.mask & (src[:, None] == tgt[None, :])
    if not mask.any():
        raise EmptyAdmissibleSet("every source/target pair is stuff-vs-thing")
    return CostMatrix(cost.scale_id, cost.values, mask)


def _logsumexp(a, axis):
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out


def _scaling_iterations(log_k, la, lb, fi, max_iterations, tolerance,
                        lu0=None, lv0=None):
    """Alternating log-domain updates u <- (a / Kv)^fi, v <- (b / K^T u)^fi.

    Convergence is measured on max |d(log u)_i + d(log v)_j|, the largest
    log-change of any plan entry. Near the balanced limit the duals carry a
    neutral translation mode (u scaled up, v scaled down) that never affects
    the plan but decays only at rate fi^2, so the raw scaling-vector change
    alone cannot terminate there.
    """
    n, m = log_k.shape
    lu = np.zeros(n) if lu0 is None else lu0.copy()
    lv = np.zeros(m) if lv0 is None else lv0.copy()
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        lu_prev, lv_prev = lu, lv
        lkv = _logsumexp(log_k + lv[None, :], axis=1)
        lu = np.where(np.isfinite(lkv), fi * (la - lkv), 0.0)
        lktu = _logsumexp(log_k + lu[:, None], axis=0)
        lv = np.where(np.isfinite(lktu), fi * (lb - lktu), 0.0)
        du = lu - lu_prev
        dv = lv - lv_prev
        delta = max(abs(du.max() + dv.max()), abs(du.min() + dv.min()))
        if delta < tolerance:
            converged = True
            break
    return lu, lv, it, converged


def solve_unbalanced(cost, a=None, b=None, cfg=None, warmstart=None):
    """Unbalanced Sinkhorn on the admissible support of ``cost``.

    Marginals default to uniform weights summing to 1 per side. When the
    cost carries a non-trivial mask, an unconstrained solve first sets the
    mass budget on the admissible support, and the masked solve is rescaled
    to preserve that total.
    """
    cfg = cfg or UotConfig()
    c = cost.values
    if not np.all(np.isfinite(c)):
        raise InvalidCost("cost matrix contains NaN or Inf")
    if np.any(c < 0):
        raise InvalidCost("cost matrix must be non-negative")
    n, m = c.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    if a.shape != (n,) or b.shape != (m,):
        raise InvalidMarginals("marginal lengths do not match the cost matrix")
    if np.any(a <= 0) or np.any(b <= 0):
        raise InvalidMarginals("marginals must be strictly positive")

    masked = not cost.mask.all()
    if masked and not cost.mask.any():
        raise EmptyAdmissibleSet("no admissible pairs")

    plan, info = _solve_on_support(c, cost.mask, a, b, cfg, warmstart)
    if masked:
        free_plan, _ = _solve_on_support(c, np.ones_like(cost.mask), a, b, cfg, None)
        target_mass = float(free_plan[cost.mask].sum())
        mass = float(plan.sum())
        if mass > 0.0:
            plan = plan * (target_mass / mass)

    total = float(plan.sum())
    row_res = np.abs(plan.sum(axis=1) - a)
    col_res = np.abs(plan.sum(axis=0) - b)
    return TransportPlan(
        cost.scale_id, plan, total, row_res, col_res,
        info["iterations"], info["converged"], info["potentials"],
    )


def _orientation_key(c, mask, a, b):
    return (c.shape, c.tobytes(), mask.tobytes(), a.tobytes(), b.tobytes())


def _solve_on_support(c, mask, a, b, cfg, warmstart):
    # Canonical orientation: transposed instances reduce to the same solve,
    # so transposing the problem transposes the plan bit-for-bit.
    ct = np.ascontiguousarray(c.T)
    mt = np.ascontiguousarray(mask.T)
    if _orientation_key(ct, mt, b, a) < _orientation_key(c, mask, a, b):
        if warmstart is not None:
            warmstart = (warmstart[1], warmstart[0])
        plan, info = _solve_forward(ct, mt, b, a, cfg, warmstart)
        f, g = info["potentials"]
        info["potentials"] = (g, f)
        return np.ascontiguousarray(plan.T), info
    return _solve_forward(c, mask, a, b, cfg, warmstart)


def _solve_forward(c, mask, a, b, cfg, warmstart):
    eps, rho = cfg.epsilon, cfg.rho
    la, lb = np.log(a), np.log(b)
    # Gibbs kernel anchored to the marginal product (KL form of the entropic
    # term): with zero cost the optimum is exactly outer(a, b).
    log_k = np.where(mask, -c / eps + la[:, None] + lb[None, :], -np.inf)
    fi = rho / (rho + eps)
    lu0 = lv0 = None
    if warmstart is not None:
        f, g = warmstart
        lu0, lv0 = np.asarray(f) / eps, np.asarray(g) / eps
    lu, lv, iters, converged = _scaling_iterations(
        log_k, la, lb, fi, cfg.max_iterations, cfg.tolerance, lu0, lv0
    )
    with np.errstate(over="ignore"):
        plan = np.exp(lu[:, None] + log_k + lv[None, :])
    plan = np.where(mask, plan, 0.0)
    return plan, {
        "iterations": iters,
        "converged": converged,
        "potentials": (eps * lu, eps * lv),
    }


def adaptation_loss(plans, costs):
    """Sum over scales of the Frobenius inner product <plan, cost>."""
    if len(plans) != len(costs):
        raise ShapeMismatch("plan/cost lists differ in length")
    total = 0.0
    for plan, cost in zip(plans, costs):
        if plan.scale_id != cost.scale_id:
            raise ShapeMismatch(
                f"scale mismatch: plan {plan.scale_id} vs cost {cost.scale_id}"
            )
        if plan.plan.shape != cost.values.shape:
            raise ShapeMismatch("plan and cost shapes differ")
        total += float(np.sum(plan.plan * cost.values))
    return total


@dataclass
class LossGradients:
    d_psi_source: np.ndarray
    d_psi_target: np.ndarray
    d_outputs_source: np.ndarray
    d_outputs_target: np.ndarray


def loss_gradient(plan, source, target):
    """Analytic gradient of <plan, cost> w.r.t. features, plan held fixed."""
    pi = plan.plan
    if pi.shape != (len(source), len(target)):
        raise ShapeMismatch("plan shape does not match the batches")
    row = pi.sum(axis=1)
    col = pi.sum(axis=0)

    def grads(xs, ys):
        gs = 2.0 * (row[:, None] * xs - pi @ ys)
        gt = 2.0 * (col[:, None] * ys - pi.T @ xs)
        return gs, gt

    d_psi_s, d_psi_t = grads(source.psi, target.psi)
    d_out_s, d_out_t = grads(source.outputs, target.outputs)
    return LossGradients(d_psi_s, d_psi_t, d_out_s, d_out_t)


def solve_multiscale(batch_pairs, cfg=None, mask_stuff_vs_thing=True):
    """Independent cost -> mask -> solve per scale; scales share nothing."""
    if not batch_pairs:
        raise ShapeMismatch("need at least one scale")
    plans = []
    costs = []
    for source, target in batch_pairs:
        try:
            cost = cost_matrix(source, target)
            if mask_stuff_vs_thing:
                cost = mask_stuff_thing(cost, source.is_thing, target.is_thing)
            plan = solve_unbalanced(cost, cfg=cfg)
        except Exception as exc:
            exc.args = (f"scale {source.scale_id}: {exc}",)
            raise
        plans.append(plan)
        costs.append(cost)
    return plans, costs
