"""Small quadratic MINLPs with infeasible binary assignments.

    min  sum_i c_i x_i^2 + d.y
    s.t. A x + B y - b <= 0,   0 <= x <= xmax,   y binary

Every row of ``A`` has at most one nonzero entry and that entry is negative,
so each row is either a lower bound on a single coordinate,
``x_i >= (B_r.y - b_r) / a_r`` with ``a_r = -A[r, i]``, or a pure binary
constraint.  The primal is then solved coordinate-wise in closed form, and a
binary vector is infeasible exactly when some lower bound exceeds ``xmax`` or
some pure row is violated.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .d2d import SCHEMA
from .problem import PrimalResult, Problem, Status, all_binaries


@dataclass
class SyntheticInstance:
    n1: int
    n2: int
    c: np.ndarray
    d: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    xmax: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(self.n1)
        self.d = np.asarray(self.d, dtype=float).reshape(self.n2)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, self.n1)
        self.B = np.asarray(self.B, dtype=float).reshape(len(self.A), self.n2)
        self.b = np.asarray(self.b, dtype=float).reshape(len(self.A))
        if np.any(self.c <= 0):
            raise ValueError("quadratic weights must be positive")
        if np.any(self.A > 0) or np.any((self.A != 0).sum(axis=1) > 1):
            raise ValueError("each row of A needs at most one nonzero, negative entry")
        if self.xmax <= 0:
            raise ValueError("xmax must be positive")

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "problem_kind": "synthetic",
            "n1": self.n1,
            "n2": self.n2,
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "b": self.b.tolist(),
            "xmax": self.xmax,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticInstance:
        if d.get("schema") != SCHEMA or d.get("problem_kind") != "synthetic":
            raise ValueError("not a synthetic instance document")
        fields = {k: v for k, v in d.items() if k not in ("schema", "problem_kind")}
        return cls(**fields)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def generate_synthetic(n1: int, n2: int, infeasible_fraction: float = 0.25, seed: int = 0,
                       rows_per_coordinate: int = 2) -> SyntheticInstance:
    """Random instance in which about ``infeasible_fraction`` of ``y`` are infeasible.

    Row 0 reads ``w.y - b_0 - a x_0 <= 0`` with ``w > 0``; its offset is chosen
    so that ``x_0 <= xmax`` can absorb ``w.y`` only up to the matching quantile
    of ``w.y`` over all binaries.  The remaining rows put random, always
    satisfiable lower bounds on each coordinate.
    """
    if not 0.0 <= infeasible_fraction < 1.0:
        raise ValueError("infeasible_fraction must lie in [0, 1)")
    if n1 < 1 or n2 < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    xmax = 1.0
    c = rng.uniform(0.5, 2.0, n1)
    d = -rng.uniform(0.2, 1.5, n2)

    w = rng.uniform(0.2, 1.0, n2)
    a0 = rng.uniform(0.5, 1.5)
    ys = all_binaries(n2) if n2 <= 16 else rng.integers(0, 2, (1 << 16, n2))
    load = np.sort(ys @ w)
    if infeasible_fraction == 0.0:
        thr = load[-1] + 1.0
    else:
        j = int(np.floor((1.0 - infeasible_fraction) * (len(load) - 1)))
        above = load[load > load[j]]
        # midway to the next distinct load keeps every y clear of the boundary
        thr = 0.5 * (load[j] + above[0]) if above.size else load[j] + 1.0
    rows_A = [np.eye(n1)[0] * -a0]
    rows_B = [w]
    rows_b = [thr - a0 * xmax]

    for i in range(n1):
        for _ in range(rows_per_coordinate):
            a = rng.uniform(0.5, 1.5)
            Bi = rng.uniform(-1.0, 1.0, n2)
            # lower bound on x_i never exceeds 0.8 xmax
            top = np.clip(Bi, 0.0, None).sum()
            bi = top - 0.8 * a * xmax + rng.uniform(0.0, 0.5)
            rows_A.append(np.eye(n1)[i] * -a)
            rows_B.append(Bi)
            rows_b.append(bi)
    return SyntheticInstance(n1, n2, c, d, np.array(rows_A), np.array(rows_B), np.array(rows_b), xmax, seed)


class SyntheticProblem(Problem):
    def __init__(self, instance: SyntheticInstance):
        self.instance = instance
        self.n_continuous = instance.n1
        self.n_binary = instance.n2
        A = instance.A
        self._col = np.where((A != 0).any(axis=1), np.argmin(A, axis=1), -1)
        self._a = -A[np.arange(len(A)), np.maximum(self._col, 0)] * (self._col >= 0)

    @property
    def side_constraints(self):
        return np.zeros((0, self.n_binary)), np.zeros(0)

    @property
    def objective_y(self):
        return self.instance.d

    @property
    def coupling(self):
        return self.instance.B

    def objective_x(self, x) -> float:
        return float(self.instance.c @ (np.asarray(x) ** 2))

    def constraint_x(self, x) -> np.ndarray:
        return self.instance.A @ np.asarray(x, dtype=float) - self.instance.b

    def solve_primal(self, y) -> PrimalResult:
        return solve_primal_synthetic(self, y)

    def solve_feasibility(self, y) -> PrimalResult:
        return solve_feasibility_synthetic(self, y)


def _row_terms(problem: SyntheticProblem, y):
    inst = problem.instance
    return inst.B @ np.asarray(y, dtype=float) - inst.b


def solve_primal_synthetic(problem: SyntheticProblem, y) -> PrimalResult:
    """Closed-form KKT solution: each ``x_i`` sits at its largest lower bound."""
    inst = problem.instance
    rhs = _row_terms(problem, y)
    col, a = problem._col, problem._a
    mult = np.zeros(inst.n_rows)
    pure = col < 0
    if np.any(rhs[pure] > 0):
        return _infeasible(problem)
    x = np.zeros(inst.n1)
    bind = np.full(inst.n1, -1)
    for r in np.flatnonzero(~pure):
        lo = rhs[r] / a[r]
        i = col[r]
        if lo > x[i]:
            x[i], bind[i] = lo, r
    if np.any(x > inst.xmax * (1.0 + 1e-12)):
        return _infeasible(problem)
    x = np.minimum(x, inst.xmax)
    for i in np.flatnonzero(bind >= 0):
        r = bind[i]
        mult[r] = 2.0 * inst.c[i] * x[i] / a[r]
    f_x = problem.objective_x(x)
    obj = f_x + float(inst.d @ np.asarray(y, dtype=float))
    return PrimalResult(Status.FEASIBLE, x, obj, f_x, problem.constraint_x(x), mult)


def _infeasible(problem: SyntheticProblem) -> PrimalResult:
    inst = problem.instance
    return PrimalResult(
        Status.INFEASIBLE, np.full(inst.n1, np.nan), math.inf, math.inf,
        np.full(inst.n_rows, np.nan), np.zeros(inst.n_rows),
    )


def solve_feasibility_synthetic(problem: SyntheticProblem, y) -> PrimalResult:
    """Minimize the largest row violation over the box.

    All rows decrease in ``x``, so ``x = xmax`` minimizes every row at once;
    ``alpha`` is the largest resulting row value and the normalized multipliers
    spread evenly over the rows attaining it.
    """
    inst = problem.instance
    x = np.full(inst.n1, inst.xmax)
    g_x = problem.constraint_x(x)
    vals = g_x + inst.B @ np.asarray(y, dtype=float)
    alpha = float(vals.max())
    mult = np.zeros(inst.n_rows)
    top = np.flatnonzero(vals >= alpha - 1e-12 * max(1.0, abs(alpha)))
    mult[top] = 1.0 / top.size
    return PrimalResult(Status.INFEASIBLE, x, math.inf, math.inf, g_x, mult, alpha=max(alpha, 0.0))


def enumerate_synthetic(instance: SyntheticInstance | SyntheticProblem):
    """Best ``(objective, y)`` over every binary vector."""
    problem = instance if isinstance(instance, SyntheticProblem) else SyntheticProblem(instance)
    best, best_y = math.inf, None
    for y in all_binaries(problem.n_binary):
        res = problem.solve_primal(y)
        if res.feasible and res.objective < best:
            best, best_y = res.objective, y.copy()
    return best, best_y


def feasible_mask(instance: SyntheticInstance) -> np.ndarray:
    """Feasibility of every binary vector in lexicographic order."""
    problem = SyntheticProblem(instance)
    return np.array([problem.solve_primal(y).feasible for y in all_binaries(instance.n2)])


def tiny_instance() -> SyntheticInstance:
    """Hand-built n1=2, n2=3 instance where only y = (1, 1, 1) is infeasible."""
    return SyntheticInstance(
        n1=2, n2=3,
        c=[1.0, 2.0],
        d=[-1.0, -0.8, -0.6],
        A=[[-1.0, 0.0], [0.0, -1.0]],
        B=[[1.0, 1.0, 1.0], [0.5, 0.0, 0.5]],
        b=[1.5, 0.2],
        xmax=1.0,
    )
