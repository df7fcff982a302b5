import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog, minimize

from gbdml.gbd import RunConfig, run_multi_cut, run_single_cut
from gbdml.problem import all_binaries
from gbdml.synthetic import (
    SyntheticInstance,
    SyntheticProblem,
    enumerate_synthetic,
    feasible_mask,
    generate_synthetic,
)


def nlp_primal(inst, y):
    """Generic constrained QP solve; None when the solver finds no feasible point."""
    rhs = inst.b - inst.B @ y
    if np.any((inst.A == 0).all(axis=1) & (rhs < -1e-12)):
        return None
    cons = [{"type": "ineq", "fun": lambda x: rhs - inst.A @ x, "jac": lambda x: -inst.A}]
    best = None
    for start in (np.zeros(inst.n1), np.full(inst.n1, inst.xmax)):
        r = minimize(lambda x: inst.c @ x ** 2, start, jac=lambda x: 2 * inst.c * x, method="SLSQP",
                     bounds=[(0, inst.xmax)] * inst.n1, constraints=cons,
                     options={"ftol": 1e-14, "maxiter": 500})
        if np.all(inst.A @ r.x - rhs <= 1e-9) and (best is None or r.fun < best.fun):
            best = r
    return None if best is None else best.fun + inst.d @ y


def lp_alpha(inst, y):
    """min alpha s.t. A x + B y - b <= alpha, 0 <= x <= xmax, alpha >= 0, with its row duals."""
    n = inst.n1
    cost = np.r_[np.zeros(n), 1.0]
    A_ub = np.c_[inst.A, -np.ones(inst.n_rows)]
    b_ub = inst.b - inst.B @ y
    r = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(0, inst.xmax)] * n + [(None, None)], method="highs")
    return r.fun, -r.ineqlin.marginals


# ---------------------------------------------------------------------------
# generator


def test_zero_infeasible_fraction_gives_no_feasibility_cuts():
    for seed in range(5):
        inst = generate_synthetic(3, 6, 0.0, seed)
        assert feasible_mask(inst).all()
        res = run_multi_cut(SyntheticProblem(inst), RunConfig(mode="multi", pool_size=4))
        assert all(c.is_optimality for c in res.cuts)


@pytest.mark.parametrize("frac", [0.1, 0.25, 0.5])
def test_infeasible_fraction_close_to_target(frac):
    got = np.mean([1 - feasible_mask(generate_synthetic(2, 8, frac, seed)).mean() for seed in range(10)])
    assert got == pytest.approx(frac, abs=0.05)


def test_generator_rows_have_one_negative_entry():
    inst = generate_synthetic(4, 5, 0.3, seed=2)
    assert np.all((inst.A < 0).sum(axis=1) == 1)
    assert np.all(inst.A <= 0)


def test_same_seed_same_instance_and_round_trip():
    a, b = generate_synthetic(3, 5, 0.2, seed=9), generate_synthetic(3, 5, 0.2, seed=9)
    assert a.dumps() == b.dumps()
    again = SyntheticInstance.from_dict(json.loads(a.dumps()))
    assert again.dumps() == a.dumps()
    with pytest.raises(ValueError):
        SyntheticInstance.from_dict({**json.loads(a.dumps()), "problem_kind": "d2d"})


def test_rejects_positive_or_dense_rows():
    with pytest.raises(ValueError):
        SyntheticInstance(1, 1, [1.0], [0.0], [[1.0]], [[0.0]], [0.0])
    with pytest.raises(ValueError):
        SyntheticInstance(2, 1, [1.0, 1.0], [0.0], [[-1.0, -1.0]], [[0.0]], [0.0])


# ---------------------------------------------------------------------------
# primal


def test_hand_case_two_by_two():
    # x0 >= y0 + y1 - 1.2 and x1 >= (0.5 y1 - 0.1) / 2
    inst = SyntheticInstance(2, 2, [1.0, 3.0], [-1.0, -0.5], [[-1.0, 0.0], [0.0, -2.0]],
                             [[1.0, 1.0], [0.0, 0.5]], [1.2, 0.1])
    p = SyntheticProblem(inst)
    r = p.solve_primal(np.array([1, 1]))
    np.testing.assert_allclose(r.x, [0.8, 0.2])
    assert r.objective == pytest.approx(0.64 + 3 * 0.04 - 1.5)
    np.testing.assert_allclose(r.multipliers, [2 * 0.8 / 1.0, 2 * 3 * 0.2 / 2.0])
    r0 = p.solve_primal(np.array([0, 0]))
    np.testing.assert_allclose(r0.x, 0.0)
    np.testing.assert_allclose(r0.multipliers, 0.0)
    assert r0.objective == 0.0


def test_single_active_row_complementary_slackness():
    inst = SyntheticInstance(1, 1, [2.0], [0.0], [[-1.0], [-1.0]], [[1.0], [0.0]], [0.5, -0.1])
    r = SyntheticProblem(inst).solve_primal(np.array([1]))
    assert r.x[0] == pytest.approx(0.5)
    assert r.multipliers[0] > 0 and r.multipliers[1] == 0
    np.testing.assert_allclose(r.multipliers * (r.g_x + inst.B @ [1]), 0.0, atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_primal_matches_generic_solver(seed):
    inst = generate_synthetic(1 + seed % 3, 4, 0.3, seed)
    p = SyntheticProblem(inst)
    for y in all_binaries(4):
        mine = p.solve_primal(y)
        ref = nlp_primal(inst, y.astype(float))
        if ref is None:
            assert not mine.feasible
            continue
        assert mine.feasible
        assert mine.objective == pytest.approx(ref, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 5000))
def test_primal_kkt(seed):
    inst = generate_synthetic(3, 4, 0.3, seed)
    p = SyntheticProblem(inst)
    for y in all_binaries(4):
        r = p.solve_primal(y)
        if not r.feasible:
            continue
        G = r.g_x + inst.B @ y
        assert np.all(G <= 1e-12)
        assert np.all(r.multipliers >= 0)
        np.testing.assert_allclose(r.multipliers * G, 0.0, atol=1e-12)
        grad = 2 * inst.c * r.x + inst.A.T @ r.multipliers
        # interior coordinates are stationary; at x = 0 the gradient may be positive
        assert np.all(np.abs(grad[r.x > 0]) <= 1e-10)
        assert np.all(grad[r.x == 0] >= -1e-12)


# ---------------------------------------------------------------------------
# feasibility


@pytest.mark.parametrize("seed", range(5))
def test_feasibility_alpha_matches_lp(seed):
    inst = generate_synthetic(2, 5, 0.4, seed)
    p = SyntheticProblem(inst)
    for y in all_binaries(5):
        if p.solve_primal(y).feasible:
            continue
        r = p.solve_feasibility(y)
        alpha, duals = lp_alpha(inst, y.astype(float))
        assert r.alpha > 0
        assert r.alpha == pytest.approx(alpha, abs=1e-9)
        assert r.multipliers.sum() == pytest.approx(1.0)
        # dual objective of the LP equals alpha for both multiplier vectors
        for lam in (r.multipliers, duals):
            inner = lam @ (inst.B @ y - inst.b) + np.minimum(lam @ inst.A, 0).sum() * inst.xmax
            assert inner == pytest.approx(alpha, abs=1e-9)


def test_tiny_instance_feasibility_cut_once(tiny_problem):
    res = run_multi_cut(tiny_problem, RunConfig(mode="multi", pool_size=8))
    feas = [c for c in res.cuts if not c.is_optimality]
    assert len(feas) == 1
    assert tuple(feas[0].gen_y) == (1, 1, 1)
    it = feas[0].gen_iteration
    for pool in res.trace.pools[it:]:
        assert (1, 1, 1) not in pool
    opt, y = enumerate_synthetic(tiny_problem)
    assert abs(res.objective - opt) <= 0.005 * abs(opt)


@pytest.mark.parametrize("seed", range(10))
def test_gbd_reaches_enumerated_optimum(seed):
    p = SyntheticProblem(generate_synthetic(2, 6, 0.3, seed))
    opt, _ = enumerate_synthetic(p)
    for res in (run_single_cut(p, RunConfig()), run_multi_cut(p, RunConfig(mode="multi", pool_size=4))):
        assert abs(res.objective - opt) <= 0.005 * max(abs(opt), 1e-9) + 1e-12
