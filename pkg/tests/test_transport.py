"""Unbalanced OT solver against LP, grid-search, and finite-difference oracles."""

import numpy as np
import pytest
from scipy.optimize import linprog

from lidar_uda.errors import (
    EmptyAdmissibleSet,
    InvalidCost,
    InvalidMarginals,
    ShapeMismatch,
)
from lidar_uda.transport import (
    CostMatrix,
    FeatureBatch,
    UotConfig,
    adaptation_loss,
    cost_matrix,
    loss_gradient,
    mask_stuff_thing,
    solve_multiscale,
    solve_unbalanced,
)


# ---------------------------------------------------------------- oracles

def lp_transport_value(c, a, b):
    """Exact balanced OT value by linear programming (simplex on the small LP)."""
    n, m = c.shape
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    res = linprog(c.ravel(), A_eq=a_eq[:-1], b_eq=np.concatenate([a, b])[:-1],
                  bounds=(0, None), method="highs")
    assert res.success
    return res.fun


def scalar_unbalanced_objective(t, c, a, b, eps, rho):
    """1x1 unbalanced objective: cost + KL-anchored entropy + marginal penalties."""
    ent = t * np.log(t / (a * b)) - t + a * b if t > 0 else a * b
    kl_a = t * np.log(t / a) - t + a if t > 0 else a
    kl_b = t * np.log(t / b) - t + b if t > 0 else b
    return c * t + eps * ent + rho * (kl_a + kl_b)


def scalar_grid_argmin(c, a, b, eps, rho):
    ts = np.concatenate([[0.0], np.geomspace(1e-16, 10.0, 400_000)])
    vals = [scalar_unbalanced_objective(t, c, a, b, eps, rho) for t in ts]
    return ts[int(np.argmin(vals))]


def make_batch(rng, scale, n, dim, k, thing_fraction=0.5):
    is_thing = rng.random(n) < thing_fraction
    return FeatureBatch(
        scale_id=scale,
        psi=rng.normal(size=(n, dim)),
        outputs=rng.normal(size=(n, k)),
        semantic=rng.integers(1, 5, size=n),
        instance=np.where(is_thing, rng.integers(1, 4, size=n), 0),
        is_thing=is_thing,
    )


def solve_eps_ladder(cost, a, b, rho, eps_seq=(0.1, 0.01, 0.001),
                     budgets=(200, 300, 600)):
    """Anneal epsilon with warm-started potentials; return the final plan."""
    plan = None
    warm = None
    for eps, max_iter in zip(eps_seq, budgets):
        cfg = UotConfig(epsilon=eps, rho=rho, max_iterations=max_iter,
                        tolerance=1e-8)
        plan = solve_unbalanced(cost, a, b, cfg, warmstart=warm)
        warm = plan.potentials
    return plan


# ----------------------------------------------------------- cost matrix

def test_cost_identical_rows_is_zero():
    batch = FeatureBatch(0, [[1.0, 2.0]], [[0.5]], [1], [0], [False])
    c = cost_matrix(batch, batch)
    assert c.values.shape == (1, 1)
    assert c.values[0, 0] == 0.0


def test_cost_unit_feature_difference():
    s = FeatureBatch(0, [[1.0, 0.0]], [[0.3, 0.3]], [1], [0], [False])
    t = FeatureBatch(0, [[0.0, 1.0]], [[0.3, 0.3]], [1], [0], [False])
    assert cost_matrix(s, t).values[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_cost_unit_output_difference():
    s = FeatureBatch(0, [[0.7, 0.7]], [[1.0, 1.0]], [1], [0], [False])
    t = FeatureBatch(0, [[0.7, 0.7]], [[0.0, 0.0]], [1], [0], [False])
    assert cost_matrix(s, t).values[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_cost_matches_bruteforce():
    rng = np.random.default_rng(3)
    s = make_batch(rng, 1, 5, 4, 3)
    t = make_batch(rng, 1, 7, 4, 3)
    c = cost_matrix(s, t).values
    for i in range(5):
        for j in range(7):
            want = np.sum((s.psi[i] - t.psi[j]) ** 2)
            want += np.sum((s.outputs[i] - t.outputs[j]) ** 2)
            assert c[i, j] == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_cost_dimension_mismatch():
    s = FeatureBatch(0, [[1.0, 0.0]], [[0.0]], [1], [0], [False])
    t = FeatureBatch(0, [[1.0]], [[0.0]], [1], [0], [False])
    with pytest.raises(ShapeMismatch):
        cost_matrix(s, t)
    t2 = FeatureBatch(1, [[1.0, 0.0]], [[0.0]], [1], [0], [False])
    with pytest.raises(ShapeMismatch):
        cost_matrix(s, t2)


# ----------------------------------------------------------------- masks

def test_mask_all_stuff_unchanged():
    c = CostMatrix(0, np.ones((3, 3)))
    masked = mask_stuff_thing(c, [False] * 3, [False] * 3)
    assert masked.mask.all()


def test_mask_single_cross_pair_is_empty():
    c = CostMatrix(0, np.ones((1, 1)))
    with pytest.raises(EmptyAdmissibleSet):
        mask_stuff_thing(c, [False], [True])


def test_mask_mixed_2x2():
    c = CostMatrix(0, np.ones((2, 2)))
    masked = mask_stuff_thing(c, [False, True], [False, True])
    assert masked.mask.tolist() == [[True, False], [False, True]]


# ---------------------------------------------------------------- solver

def test_zero_cost_uniform_gives_outer_product():
    c = CostMatrix(0, np.zeros((2, 2)))
    plan = solve_unbalanced(c, np.array([0.5, 0.5]), np.array([0.5, 0.5]),
                            UotConfig(epsilon=0.05, rho=1.0))
    assert plan.converged
    np.testing.assert_allclose(plan.plan, np.full((2, 2), 0.25), atol=1e-9)


def test_2x2_assignment_matches_lp():
    c = np.array([[0.0, 1.0], [1.0, 0.0]])
    a = b = np.array([0.5, 0.5])
    cfg = UotConfig(epsilon=0.01, rho=100.0, max_iterations=5000, tolerance=1e-10)
    plan = solve_unbalanced(CostMatrix(0, c), a, b, cfg)
    np.testing.assert_allclose(plan.plan, np.diag([0.5, 0.5]), atol=1e-3)


def test_1x1_mass_destroyed():
    cfg = UotConfig(epsilon=0.1, rho=0.1, max_iterations=2000, tolerance=1e-10)
    plan = solve_unbalanced(CostMatrix(0, np.array([[10.0]])),
                            np.array([1.0]), np.array([1.0]), cfg)
    assert plan.total_mass < 0.1


@pytest.mark.parametrize("c,eps,rho", [
    (10.0, 0.1, 0.1),
    (2.0, 0.05, 0.5),
    (0.3, 0.5, 2.0),
])
def test_1x1_matches_grid_search_oracle(c, eps, rho):
    cfg = UotConfig(epsilon=eps, rho=rho, max_iterations=5000, tolerance=1e-12)
    plan = solve_unbalanced(CostMatrix(0, np.array([[c]])),
                            np.array([1.0]), np.array([1.0]), cfg)
    t_star = scalar_grid_argmin(c, 1.0, 1.0, eps, rho)
    assert plan.plan[0, 0] == pytest.approx(t_star, abs=1e-4)


def test_balanced_limit_matches_lp_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n, m = rng.integers(2, 9, size=2)
        c = rng.random((n, m))
        a = np.full(n, 1.0 / n)
        b = np.full(m, 1.0 / m)
        plan = solve_eps_ladder(CostMatrix(0, c), a, b, rho=1e3 * c.max())
        got = float(np.sum(plan.plan * c))
        want = lp_transport_value(c, a, b)
        assert got == pytest.approx(want, rel=1e-3, abs=1e-6)


def test_mass_monotone_in_cost():
    base = np.array([[0.5, 1.0], [1.0, 0.5]])
    a = b = np.array([0.5, 0.5])
    cfg = UotConfig(epsilon=0.05, rho=0.5, max_iterations=5000, tolerance=1e-10)
    prev = solve_unbalanced(CostMatrix(0, base), a, b, cfg).total_mass
    for bump in (0.5, 1.0, 2.0, 4.0):
        c = base.copy()
        c[0, 0] = base[0, 0] + bump
        mass = solve_unbalanced(CostMatrix(0, c), a, b, cfg).total_mass
        assert mass <= prev + 1e-12
        prev = mass


def test_plan_symmetry_under_transpose():
    rng = np.random.default_rng(11)
    c = rng.random((4, 6))
    a = rng.random(4) + 0.1
    b = rng.random(6) + 0.1
    cfg = UotConfig(epsilon=0.05, rho=1.0, max_iterations=3000, tolerance=1e-10)
    p1 = solve_unbalanced(CostMatrix(0, c), a, b, cfg)
    p2 = solve_unbalanced(CostMatrix(0, c.T.copy()), b, a, cfg)
    assert np.array_equal(p1.plan, p2.plan.T)


def test_log_domain_stability_extreme_costs():
    rng = np.random.default_rng(13)
    c = rng.random((6, 6)) * 1e4
    cfg = UotConfig(epsilon=1e-3, rho=1.0, max_iterations=500, tolerance=1e-8)
    plan = solve_unbalanced(CostMatrix(0, c), cfg=cfg)
    assert np.all(np.isfinite(plan.plan))
    assert np.isfinite(plan.total_mass)


def test_masked_plan_zero_on_inadmissible_and_renormalized():
    rng = np.random.default_rng(17)
    for _ in range(5):
        n, m = rng.integers(2, 7, size=2)
        src = rng.random(n) < 0.5
        tgt = rng.random(m) < 0.5
        if not ((src[:, None] == tgt[None, :]).any()):
            continue
        c = CostMatrix(0, rng.random((n, m)))
        masked = mask_stuff_thing(c, src, tgt)
        cfg = UotConfig(epsilon=0.05, rho=1.0, max_iterations=2000, tolerance=1e-9)
        plan = solve_unbalanced(masked, cfg=cfg)
        assert np.all(plan.plan[~masked.mask] == 0.0)
        free = solve_unbalanced(c, cfg=cfg)
        want_mass = float(free.plan[masked.mask].sum())
        assert plan.total_mass == pytest.approx(want_mass, abs=1e-12)


def test_solver_error_taxonomy():
    c = CostMatrix(0, np.array([[np.nan]]))
    with pytest.raises(InvalidCost):
        solve_unbalanced(c, np.array([1.0]), np.array([1.0]))
    ok = CostMatrix(0, np.array([[1.0]]))
    with pytest.raises(InvalidMarginals):
        solve_unbalanced(ok, np.array([0.0]), np.array([1.0]))
    with pytest.raises(InvalidMarginals):
        solve_unbalanced(ok, np.array([1.0, 1.0]), np.array([1.0]))


# ------------------------------------------------------------------ loss

def test_loss_zero_plans():
    plans, costs = solve_multiscale(
        [(FeatureBatch(0, [[0.0]], [[0.0]], [1], [0], [False]),
          FeatureBatch(0, [[0.0]], [[0.0]], [1], [0], [False]))],
        UotConfig(epsilon=0.1, rho=1.0),
    )
    zeroed = [p for p in plans]
    zeroed[0].plan = np.zeros_like(zeroed[0].plan)
    assert adaptation_loss(zeroed, costs) == 0.0


def test_loss_single_product():
    plan = solve_unbalanced(CostMatrix(2, np.array([[3.0]])),
                            np.array([1.0]), np.array([1.0]),
                            UotConfig(epsilon=0.1, rho=1.0))
    plan.plan = np.array([[1.0]])
    assert adaptation_loss([plan], [CostMatrix(2, np.array([[3.0]]))]) == 3.0


def test_loss_matches_bruteforce_double_sum():
    rng = np.random.default_rng(23)
    plans, costs = [], []
    for scale in range(2):
        c = CostMatrix(scale, rng.random((4, 5)))
        plan = solve_unbalanced(c, cfg=UotConfig(epsilon=0.1, rho=1.0))
        plan.plan = rng.random((4, 5))
        plans.append(plan)
        costs.append(c)
    want = 0.0
    for plan, cost in zip(plans, costs):
        for i in range(4):
            for j in range(5):
                want += plan.plan[i, j] * cost.values[i, j]
    assert adaptation_loss(plans, costs) == pytest.approx(want, abs=1e-12)


# ------------------------------------------------------------- gradients

def finite_difference_grads(plan, source, target, step=1e-5):
    """Central differences of <plan, cost(features)> with the plan frozen."""
    def loss(s_psi, t_psi, s_out, t_out):
        s = FeatureBatch(source.scale_id, s_psi, s_out, source.semantic,
                         source.instance, source.is_thing)
        t = FeatureBatch(target.scale_id, t_psi, t_out, target.semantic,
                         target.instance, target.is_thing)
        return float(np.sum(plan.plan * cost_matrix(s, t).values))

    def fd(arrs, which):
        base = [a.copy() for a in arrs]
        grad = np.zeros_like(base[which])
        for idx in np.ndindex(grad.shape):
            hi = [a.copy() for a in base]
            lo = [a.copy() for a in base]
            hi[which][idx] += step
            lo[which][idx] -= step
            grad[idx] = (loss(*hi) - loss(*lo)) / (2 * step)
        return grad

    arrs = [source.psi, target.psi, source.outputs, target.outputs]
    return [fd(arrs, k) for k in range(4)]


def test_gradient_zero_plan():
    rng = np.random.default_rng(29)
    s = make_batch(rng, 0, 3, 2, 2)
    t = make_batch(rng, 0, 4, 2, 2)
    plan = solve_unbalanced(cost_matrix(s, t), cfg=UotConfig(epsilon=0.1, rho=1.0))
    plan.plan = np.zeros_like(plan.plan)
    g = loss_gradient(plan, s, t)
    assert np.all(g.d_psi_source == 0) and np.all(g.d_psi_target == 0)
    assert np.all(g.d_outputs_source == 0) and np.all(g.d_outputs_target == 0)


def test_gradient_single_pair_hand_value():
    s = FeatureBatch(0, [[1.0, 2.0]], [[0.5]], [1], [0], [False])
    t = FeatureBatch(0, [[0.0, 1.0]], [[0.5]], [1], [0], [False])
    plan = solve_unbalanced(cost_matrix(s, t), np.array([1.0]), np.array([1.0]),
                            UotConfig(epsilon=0.1, rho=1.0))
    plan.plan = np.array([[1.0]])
    g = loss_gradient(plan, s, t)
    np.testing.assert_allclose(g.d_psi_source, [[2.0, 2.0]], atol=1e-12)
    np.testing.assert_allclose(g.d_psi_target, [[-2.0, -2.0]], atol=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(31)
    s = make_batch(rng, 0, 6, 3, 2)
    t = make_batch(rng, 0, 7, 3, 2)
    plan = solve_unbalanced(cost_matrix(s, t),
                            cfg=UotConfig(epsilon=0.1, rho=1.0))
    got = loss_gradient(plan, s, t)
    want = finite_difference_grads(plan, s, t)
    for g, w in zip([got.d_psi_source, got.d_psi_target,
                     got.d_outputs_source, got.d_outputs_target], want):
        scale = max(np.abs(w).max(), 1e-8)
        assert np.abs(g - w).max() / scale < 1e-4


# ------------------------------------------------------------ multiscale

def test_multiscale_single_scale_equals_composition():
    rng = np.random.default_rng(37)
    s = make_batch(rng, 0, 5, 3, 2)
    t = make_batch(rng, 0, 6, 3, 2)
    cfg = UotConfig(epsilon=0.05, rho=1.0)
    plans, costs = solve_multiscale([(s, t)], cfg)
    direct_cost = mask_stuff_thing(cost_matrix(s, t), s.is_thing, t.is_thing)
    direct = solve_unbalanced(direct_cost, cfg=cfg)
    assert np.array_equal(plans[0].plan, direct.plan)


def test_multiscale_identical_scales_identical_plans():
    rng = np.random.default_rng(41)
    s = make_batch(rng, 0, 5, 3, 2)
    t = make_batch(rng, 0, 6, 3, 2)
    s2 = FeatureBatch(1, s.psi, s.outputs, s.semantic, s.instance, s.is_thing)
    t2 = FeatureBatch(1, t.psi, t.outputs, t.semantic, t.instance, t.is_thing)
    plans, _ = solve_multiscale([(s, t), (s2, t2)], UotConfig(epsilon=0.05, rho=1.0))
    assert np.array_equal(plans[0].plan, plans[1].plan)


def test_multiscale_matches_sequential_solves():
    rng = np.random.default_rng(43)
    pairs = []
    for scale, n in enumerate([64, 32, 16, 8]):
        pairs.append((make_batch(rng, scale, n, 4, 3),
                      make_batch(rng, scale, n // 2 + 1, 4, 3)))
    cfg = UotConfig(epsilon=0.05, rho=1.0)
    plans, _ = solve_multiscale(pairs, cfg)
    for (s, t), plan in zip(pairs, plans):
        cost = mask_stuff_thing(cost_matrix(s, t), s.is_thing, t.is_thing)
        single = solve_unbalanced(cost, cfg=cfg)
        assert np.array_equal(plan.plan, single.plan)
