"""Generalized Benders decomposition loops.

Three drivers share one iteration skeleton:

* single-cut: one primal solve per iteration at the master's optimum;
* multi-cut: every member of a ranked pool of ``S`` master solutions is
  solved and all resulting cuts enter the master;
* ML-filtered: as multi-cut, but a trained model decides which cuts enter,
  falling back to the rank-1 cut when all are rejected.

A fourth selector (one pool member drawn at random) is used to collect
classifier training data.
"""
from __future__ import annotations

import enum
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .master import DEFAULT_ETA_FLOOR, MasterModel, PoolSolution, solve_master
from .problem import (
    DualityGapTooLarge,
    PrimalResult,
    Problem,
    Stalled,
    Unbounded,
)

NEG_INF = -math.inf
TIGHTNESS_RTOL = 1e-5
ENUMERATION_LIMIT = 200_000
WORKERS_ENV = "GBDML_WORKERS"


class Mode(str, enum.Enum):
    SINGLE_CUT = "single"
    MULTI_CUT = "multi"
    ML_CLASSIFIER = "ml-class"
    ML_REGRESSOR = "ml-reg"


class CutKind(str, enum.Enum):
    OPTIMALITY = "optimality"
    FEASIBILITY = "feasibility"


@dataclass
class Cut:
    """Affine cut in ``y``.

    Optimality: ``eta >= coeff_y.y + const_term``.
    Feasibility: ``0 >= coeff_y.y + const_term``.
    """

    kind: CutKind
    coeff_y: np.ndarray
    const_term: float
    gen_iteration: int
    gen_order: int
    gen_y: np.ndarray
    repeat_count: int = 0
    violation: float = 0.0
    primal_value: float = 0.0
    alpha_form_value: float | None = None
    added: bool = True
    predicted_useful: bool | None = None

    @property
    def is_optimality(self) -> bool:
        return self.kind is CutKind.OPTIMALITY

    def value(self, y: np.ndarray) -> float:
        return float(self.coeff_y @ np.asarray(y, dtype=float) + self.const_term)


@dataclass
class BoundsTrace:
    ubd: list[float] = field(default_factory=list)
    lbd: list[float] = field(default_factory=list)
    eta_star: list[float] = field(default_factory=list)
    cuts_per_iteration: list[int] = field(default_factory=list)
    pools: list[list[tuple[int, ...]]] = field(default_factory=list)
    iterations: int = 0
    cumulative_cuts: int = 0
    master_wallclock: float = 0.0
    primal_wallclock: float = 0.0


@dataclass
class FilterStats:
    kept_optimality: int = 0
    discarded_optimality: int = 0
    kept_feasibility: int = 0
    discarded_feasibility: int = 0
    fallbacks: int = 0

    def record(self, cut: Cut) -> None:
        name = ("kept_" if cut.added else "discarded_") + cut.kind.value
        setattr(self, name, getattr(self, name) + 1)


@dataclass
class RunConfig:
    mode: Mode = Mode.SINGLE_CUT
    pool_size: int = 1
    tolerance: float = 0.005
    max_iterations: int = 10_000
    seed: int = 0
    model: object | None = None
    eta_floor: float = DEFAULT_ETA_FLOOR
    workers: int | None = None
    stall_window: int = 50
    check_tightness: bool = True

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.pool_size < 1:
            raise ValueError("pool_size must be positive")
        if self.mode is Mode.SINGLE_CUT and self.pool_size != 1:
            raise ValueError("single-cut mode requires pool_size=1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class RunResult:
    x: np.ndarray | None
    y: np.ndarray | None
    objective: float
    trace: BoundsTrace
    cuts: list[Cut]
    status: str
    filter_stats: FilterStats
    config: RunConfig

    @property
    def ubd(self) -> float:
        return self.trace.ubd[-1] if self.trace.ubd else math.inf

    @property
    def lbd(self) -> float:
        return self.trace.lbd[-1] if self.trace.lbd else NEG_INF

    def cuts_by_iteration(self) -> dict[int, list[Cut]]:
        out: dict[int, list[Cut]] = {}
        for c in self.cuts:
            out.setdefault(c.gen_iteration, []).append(c)
        return out


def compute_gap(ubd: float, lbd: float) -> float:
    """Relative gap ``|(ubd - lbd) / lbd|``; infinite while undefined."""
    if lbd == NEG_INF or lbd == 0 or math.isnan(lbd) or ubd == math.inf:
        return math.inf
    return abs((ubd - lbd) / lbd)


def build_cut(
    problem: Problem,
    result: PrimalResult,
    y_gen: np.ndarray,
    iteration: int,
    order: int,
    eta_gen: float,
    check: bool = True,
) -> Cut:
    """Cut from the Lagrangian of a solved subproblem.

    Optimality cuts are ``L(x*, y, mu) = f(x*, y) + mu.G(x*, y)``, affine in
    ``y`` by linear separability.  Feasibility cuts use ``lambda.G(x*, y)``
    without the ``-alpha`` shift, which is zero at the generating point and
    would not exclude it; the shifted value is kept for reference.
    """
    y_gen = np.asarray(y_gen, dtype=np.int8)
    mult = result.multipliers
    coeff = problem.coupling.T @ mult
    const = float(mult @ result.g_x)
    yf = y_gen.astype(float)
    if result.feasible:
        coeff = coeff + problem.objective_y
        const += result.f_x
        at_gen = float(coeff @ yf + const)
        if check:
            err = abs(at_gen - result.objective)
            if err > TIGHTNESS_RTOL * max(1.0, abs(result.objective)):
                raise DualityGapTooLarge(
                    f"cut value {at_gen!r} differs from primal objective {result.objective!r}"
                )
        return Cut(
            CutKind.OPTIMALITY, coeff, const, iteration, order, y_gen,
            violation=at_gen - eta_gen, primal_value=result.objective,
        )
    at_gen = float(coeff @ yf + const)
    return Cut(
        CutKind.FEASIBILITY, coeff, const, iteration, order, y_gen,
        violation=at_gen, primal_value=result.alpha,
        alpha_form_value=at_gen - result.alpha * float(mult.sum()),
    )


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def new_master(problem: Problem, eta_floor: float = DEFAULT_ETA_FLOOR) -> MasterModel:
    A, b = problem.side_constraints
    cands = problem.enumerate_discrete()
    if cands is not None and len(cands) > ENUMERATION_LIMIT:
        cands = None
    return MasterModel(problem.n_binary, A, b, eta_floor, cands)


Selector = Callable[[list[PoolSolution], np.random.Generator], list[PoolSolution]]
Judge = Callable[[list[Cut]], list[bool]]


def _select_all(pool, rng):
    return list(pool)


def _select_best(pool, rng):
    return [pool[0]]


def _select_random(pool, rng):
    return [pool[int(rng.integers(len(pool)))]]


def _solve_one(problem: Problem, y: np.ndarray) -> PrimalResult:
    res = problem.solve_primal(y)
    if not res.feasible:
        res = problem.solve_feasibility(y)
    return res


def _gbd_loop(
    problem: Problem,
    config: RunConfig,
    selector: Selector,
    judge: Judge | None = None,
) -> RunResult:
    rng = np.random.default_rng(config.seed)
    master = new_master(problem, config.eta_floor)
    pool = [PoolSolution(np.asarray(problem.initial_y(), dtype=np.int8), config.eta_floor, 1)]
    trace = BoundsTrace()
    stats = FilterStats()
    cuts: list[Cut] = []
    visits: dict[bytes, int] = {}
    ubd, lbd = math.inf, NEG_INF
    best_x = best_y = None
    workers = resolve_workers(config.workers)
    executor = ThreadPoolExecutor(workers) if workers > 1 else None
    status = "max_iterations"
    flat_run = 0
    i = 0
    try:
        while i < config.max_iterations:
            if compute_gap(ubd, lbd) <= config.tolerance or lbd >= ubd:
                status = "converged"
                break
            i += 1
            chosen = selector(pool, rng)

            t0 = time.perf_counter()
            ys = [p.y for p in chosen]
            if executor is not None and len(ys) > 1:
                results = list(executor.map(lambda y: _solve_one(problem, y), ys))
            else:
                results = [_solve_one(problem, y) for y in ys]
            trace.primal_wallclock += time.perf_counter() - t0

            generated = []
            for p, res in zip(chosen, results):
                key = p.y.tobytes()
                cut = build_cut(problem, res, p.y, i, p.rank, p.eta, config.check_tightness)
                cut.repeat_count = visits.get(key, 0)
                visits[key] = cut.repeat_count + 1
                generated.append(cut)
                if res.feasible and res.objective < ubd:
                    ubd = res.objective
                    best_x, best_y = res.x, p.y.copy()

            if judge is not None:
                keep = [bool(k) for k in judge(generated)]
                for cut, k in zip(generated, keep):
                    cut.predicted_useful = k
                if not any(keep):
                    keep = [j == 0 for j in range(len(generated))]
                    stats.fallbacks += 1
            else:
                keep = [True] * len(generated)
            for cut, k in zip(generated, keep):
                cut.added = bool(k)
                stats.record(cut)
                if k:
                    master.add_cut(cut)
            cuts.extend(generated)
            n_added = sum(map(bool, keep))
            trace.cumulative_cuts += n_added
            trace.cuts_per_iteration.append(n_added)

            t0 = time.perf_counter()
            sol = solve_master(master, config.pool_size)
            trace.master_wallclock += time.perf_counter() - t0
            pool = sol.pool
            new_lbd = sol.eta_star if sol.bounded else NEG_INF

            if lbd != NEG_INF and new_lbd <= lbd + 1e-10 * max(1.0, abs(lbd)):
                flat_run += 1
            else:
                flat_run = 0
            lbd = new_lbd
            trace.ubd.append(ubd)
            trace.lbd.append(lbd)
            trace.eta_star.append(sol.eta_star)
            trace.pools.append([tuple(int(v) for v in p.y) for p in sol.pool])
            trace.iterations = i
            if config.stall_window and flat_run >= config.stall_window:
                status = "stalled"
                raise Stalled(f"lower bound flat for {flat_run} iterations at iteration {i}")
        else:
            if compute_gap(ubd, lbd) <= config.tolerance or lbd >= ubd:
                status = "converged"
    finally:
        if executor is not None:
            executor.shutdown()
    if lbd == NEG_INF and status != "converged":
        raise Unbounded("no optimality cut bounded the master within the iteration budget")
    return RunResult(best_x, best_y, ubd, trace, cuts, status, stats, config)


def run_single_cut(problem: Problem, config: RunConfig | None = None) -> RunResult:
    config = config or RunConfig()
    if config.mode is not Mode.SINGLE_CUT:
        raise ValueError("run_single_cut expects mode=single")
    return _gbd_loop(problem, config, _select_best)


def run_multi_cut(problem: Problem, config: RunConfig) -> RunResult:
    return _gbd_loop(problem, config, _select_all)


def run_ml_filtered(problem: Problem, config: RunConfig) -> RunResult:
    model = config.model
    if model is None:
        raise ValueError("ML-filtered mode requires a trained model")
    from .cut_ml import judge_cuts, check_model

    check_model(model, config.mode)
    return _gbd_loop(problem, config, _select_all, lambda cuts: judge_cuts(model, cuts))


def run_random_pop(problem: Problem, config: RunConfig) -> RunResult:
    """Pool of ``S`` requested each iteration, one member used at random."""
    return _gbd_loop(problem, config, _select_random)


def run(problem: Problem, config: RunConfig) -> RunResult:
    if config.mode is Mode.SINGLE_CUT:
        return run_single_cut(problem, config)
    if config.mode is Mode.MULTI_CUT:
        return run_multi_cut(problem, config)
    return run_ml_filtered(problem, config)


def replay_increments(problem: Problem, run_result: RunResult, eta_floor: float | None = None):
    """Re-solve the master after each generated cut of every iteration.

    Starting from the cuts the run had added before iteration ``i``, the
    generated cuts of iteration ``i`` are appended in pool order and the
    master optimum is recomputed after each.  Yields, per iteration, the
    list of cuts and the optimum sequence ``[eta_0, eta_1, ..., eta_|S|]``
    where ``eta_0`` is the value before any of them.
    """
    floor = run_result.config.eta_floor if eta_floor is None else eta_floor
    base = new_master(problem, floor)
    for it, group in sorted(run_result.cuts_by_iteration().items()):
        shadow = base.copy()
        etas = [solve_master(shadow, 1).eta_star]
        for cut in group:
            shadow.add_cut(cut)
            etas.append(solve_master(shadow, 1).eta_star)
        yield it, group, etas
        for cut in group:
            if cut.added:
                base.add_cut(cut)


def check_bounds(trace: BoundsTrace, tolerance: float, slack: float = 1e-9) -> list[str]:
    """Return a list of violations of the bound invariants (empty if none)."""
    problems = []
    for a, b in zip(trace.ubd, trace.ubd[1:]):
        if b > a:
            problems.append(f"UBD increased {a} -> {b}")
    for a, b in zip(trace.lbd, trace.lbd[1:]):
        if b < a:
            problems.append(f"LBD decreased {a} -> {b}")
    for u, l in zip(trace.ubd, trace.lbd):
        if l == NEG_INF or u == math.inf:
            continue
        if u < l - abs(l) * (slack + tolerance):
            problems.append(f"UBD {u} below LBD {l}")
    return problems
