import math

import numpy as np
import pytest

from gbdml.cut_ml import constant_model
from gbdml.d2d import D2DProblem, generate_instance
from gbdml.gbd import (
    NEG_INF,
    BoundsTrace,
    Mode,
    RunConfig,
    build_cut,
    check_bounds,
    compute_gap,
    replay_increments,
    run,
    run_multi_cut,
    run_single_cut,
)
from gbdml.harness import cut_log_text
from gbdml.problem import ModelMismatch, NoFeasibleDiscrete, Stalled, Unbounded
from gbdml.synthetic import SyntheticInstance, SyntheticProblem, generate_synthetic


class PinnedProblem(SyntheticProblem):
    """Synthetic problem whose side constraints admit a single binary vector."""

    def __init__(self, instance, y):
        super().__init__(instance)
        y = np.asarray(y, dtype=float)
        n = len(y)
        self._side = (np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([y, -y]))

    @property
    def side_constraints(self):
        return self._side


@pytest.mark.parametrize(
    "ubd, lbd, expected",
    [(10.0, 10.0, 0.0), (-5.0, -5.02, 0.02 / 5.02), (3.0, NEG_INF, math.inf), (1.0, 0.0, math.inf)],
)
def test_compute_gap_examples(ubd, lbd, expected):
    assert compute_gap(ubd, lbd) == pytest.approx(expected)


def test_gap_example_is_converged_under_half_percent():
    assert compute_gap(-5.0, -5.02) < 0.005


def test_single_cut_within_tolerance_of_oracle(golden_problem, golden):
    res = run_single_cut(golden_problem, RunConfig())
    assert res.status == "converged"
    opt = golden["oracle_objective"]
    assert abs(res.objective - opt) <= 0.005 * abs(opt)
    assert check_bounds(res.trace, 0.005) == []


def test_single_feasible_y_converges_in_two_iterations():
    inst = generate_synthetic(2, 3, 0.0, seed=5)
    y = np.array([1, 0, 1])
    problem = PinnedProblem(inst, y)
    res = run_single_cut(problem, RunConfig())
    assert res.trace.iterations <= 2
    primal = problem.solve_primal(y).objective
    assert res.ubd == pytest.approx(primal)
    assert res.lbd == pytest.approx(primal)


def test_multi_cut_with_pool_of_one_equals_single_cut(golden_problem):
    a = run_single_cut(golden_problem, RunConfig())
    b = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=1))
    assert cut_log_text(a) == cut_log_text(b)
    assert a.trace.ubd == b.trace.ubd and a.trace.lbd == b.trace.lbd


def test_pass_through_model_reproduces_multi_cut(golden_problem):
    multi = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=8))
    ml = run(golden_problem, RunConfig(mode="ml-class", pool_size=8, model=constant_model("classifier", 1.0)))
    assert cut_log_text(multi) == cut_log_text(ml)
    assert ml.filter_stats.discarded_optimality == 0


def test_reject_all_model_falls_back_to_single_cut_sequence():
    problem = D2DProblem(generate_instance(5, 3, seed=4))
    single = run_single_cut(problem, RunConfig())
    ml = run(problem, RunConfig(mode="ml-class", pool_size=8, model=constant_model("classifier", 0.0)))
    kept = [c for c in ml.cuts if c.added]
    # the master sees exactly the single-cut sequence, only the upper bound can close sooner
    assert len(kept) <= len(single.cuts)
    for a, b in zip(kept, single.cuts):
        assert tuple(a.gen_y) == tuple(b.gen_y)
        np.testing.assert_array_equal(a.coeff_y, b.coeff_y)
    assert ml.filter_stats.fallbacks == ml.trace.iterations
    assert abs(ml.objective - single.objective) <= 0.01 * abs(single.objective)


def test_regressor_model_in_classifier_mode_is_rejected(golden_problem):
    with pytest.raises(ModelMismatch):
        run(golden_problem, RunConfig(mode="ml-class", pool_size=2, model=constant_model("regressor", 1.0)))
    model = constant_model("classifier", 1.0)
    model.schema_version = "other/0"
    with pytest.raises(ModelMismatch):
        run(golden_problem, RunConfig(mode="ml-class", pool_size=2, model=model))


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(mode="single", pool_size=2)
    with pytest.raises(ValueError):
        RunConfig(mode="multi", pool_size=0)
    with pytest.raises(ValueError):
        run(D2DProblem(generate_instance(2, 1, seed=0)), RunConfig(mode="ml-reg", pool_size=2))


def test_optimality_cuts_are_tight_and_feasibility_cuts_violated():
    for seed in range(5):
        problem = SyntheticProblem(generate_synthetic(3, 6, 0.4, seed))
        res = run_multi_cut(problem, RunConfig(mode="multi", pool_size=4))
        for cut in res.cuts:
            if cut.is_optimality:
                assert cut.value(cut.gen_y) == pytest.approx(cut.primal_value, rel=1e-6, abs=1e-9)
            else:
                assert cut.value(cut.gen_y) > 0
                # the alpha-shifted form vanishes at its generator
                assert cut.alpha_form_value == pytest.approx(0.0, abs=1e-9)


def test_no_feasible_binary_raises():
    inst = SyntheticInstance(1, 2, [1.0], [0.0, 0.0], [[0.0]], [[0.0, 0.0]], [-1.0])
    with pytest.raises(NoFeasibleDiscrete):
        run_single_cut(SyntheticProblem(inst), RunConfig())


def test_sentinel_lower_bound_after_budget_is_unbounded():
    # y = (0, 0) violates a pure binary row, so the first iteration yields only a feasibility cut
    inst = SyntheticInstance(1, 2, [1.0], [0.0, 0.0], [[0.0]], [[-1.0, -1.0]], [-0.5])
    with pytest.raises(Unbounded):
        run_single_cut(SyntheticProblem(inst), RunConfig(max_iterations=1))


def test_stall_rule_aborts_flat_lower_bound():
    problem = D2DProblem(generate_instance(5, 3, seed=1001))
    res = run_multi_cut(problem, RunConfig(mode="multi", pool_size=8))
    flats = [b == a for a, b in zip(res.trace.lbd, res.trace.lbd[1:])]
    assert any(flats)
    with pytest.raises(Stalled):
        run_multi_cut(problem, RunConfig(mode="multi", pool_size=8, stall_window=1))


def test_iteration_cap_stops_after_one_iteration(golden_problem):
    res = run_single_cut(golden_problem, RunConfig(tolerance=0.0, max_iterations=1))
    assert res.trace.iterations == 1
    assert res.status == "max_iterations"


def test_worker_count_does_not_change_cut_log(golden_problem):
    a = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=8, workers=1))
    b = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=8, workers=4))
    assert cut_log_text(a) == cut_log_text(b)


def test_replay_increments_end_at_run_lower_bounds(golden_problem):
    res = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=8))
    for it, group, etas in replay_increments(golden_problem, res):
        assert len(etas) == len(group) + 1
        assert etas[-1] == pytest.approx(res.trace.eta_star[it - 1], abs=1e-12)
        assert all(b >= a for a, b in zip(etas, etas[1:]))


def test_check_bounds_flags_violations():
    t = BoundsTrace(ubd=[5.0, 6.0], lbd=[1.0, 0.5])
    msgs = check_bounds(t, 0.005)
    assert any("UBD increased" in m for m in msgs)
    assert any("LBD decreased" in m for m in msgs)
    t2 = BoundsTrace(ubd=[1.0], lbd=[2.0])
    assert any("below" in m for m in check_bounds(t2, 0.005))


def test_build_cut_rejects_loose_duals(golden_problem):
    from gbdml.problem import DualityGapTooLarge

    y = golden_problem.initial_y()
    res = golden_problem.solve_primal(y)
    res.multipliers = res.multipliers * 2.0 + 0.1
    with pytest.raises(DualityGapTooLarge):
        build_cut(golden_problem, res, y, 1, 1, -1e12)


def test_modes_enum_values():
    assert [m.value for m in Mode] == ["single", "multi", "ml-class", "ml-reg"]
