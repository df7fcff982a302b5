"""Exact relaxed master problem over binaries with a ranked solution pool.

The master minimizes ``eta`` over binary ``y`` subject to the side
constraints, the accumulated optimality cuts ``eta >= c.y + c0`` and the
feasibility cuts ``0 >= f.y + f0``.  Because ``eta`` only appears through the
cuts, ``eta*(y)`` is the pointwise maximum of the optimality cuts and the
problem reduces to a search over binaries.  Two exact routes are provided:
dense enumeration over a precomputed candidate set and a depth-first branch
and bound with an S-best incumbent list.
"""
from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field

import numpy as np

from .problem import NoFeasibleDiscrete

DEFAULT_ETA_FLOOR = -1e12
FEAS_RTOL = 1e-9


@dataclass
class PoolSolution:
    y: np.ndarray
    eta: float
    rank: int

    def key(self) -> tuple:
        return (self.eta, tuple(int(v) for v in self.y))


@dataclass
class MasterSolution:
    eta_star: float
    pool: list[PoolSolution]
    bounded: bool
    """False while no optimality cut exists (``eta_star`` is the floor)."""


class _CutStore:
    """Append-only affine rows with a cached stacked view."""

    def __init__(self, n: int):
        self.n = n
        self._coeffs: list[np.ndarray] = []
        self._consts: list[float] = []
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def append(self, coeff: np.ndarray, const: float) -> None:
        self._coeffs.append(np.asarray(coeff, dtype=float).reshape(self.n))
        self._consts.append(float(const))
        self._cache = None

    def __len__(self) -> int:
        return len(self._consts)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._cache is None:
            if self._coeffs:
                self._cache = (np.vstack(self._coeffs), np.asarray(self._consts))
            else:
                self._cache = (np.zeros((0, self.n)), np.zeros(0))
        return self._cache

    def copy(self) -> _CutStore:
        other = _CutStore(self.n)
        other._coeffs = list(self._coeffs)
        other._consts = list(self._consts)
        other._cache = self._cache
        return other


@dataclass
class MasterModel:
    """State of the relaxed master problem.

    ``candidates`` optionally holds every binary satisfying the side
    constraints (lexicographically sorted); when present the solver evaluates
    them densely, otherwise it branches.
    """

    n_binary: int
    side_A: np.ndarray = None
    side_b: np.ndarray = None
    eta_floor: float = DEFAULT_ETA_FLOOR
    candidates: np.ndarray | None = None
    optimality: _CutStore = field(default=None, repr=False)
    feasibility: _CutStore = field(default=None, repr=False)

    def __post_init__(self):
        if self.side_A is None:
            self.side_A = np.zeros((0, self.n_binary))
            self.side_b = np.zeros(0)
        self.side_A = np.asarray(self.side_A, dtype=float).reshape(-1, self.n_binary)
        self.side_b = np.asarray(self.side_b, dtype=float).reshape(-1)
        if self.optimality is None:
            self.optimality = _CutStore(self.n_binary)
        if self.feasibility is None:
            self.feasibility = _CutStore(self.n_binary)

    def add_optimality_cut(self, coeff, const) -> None:
        self.optimality.append(coeff, const)

    def add_feasibility_cut(self, coeff, const) -> None:
        self.feasibility.append(coeff, const)

    def add_cut(self, cut) -> None:
        if cut.is_optimality:
            self.add_optimality_cut(cut.coeff_y, cut.const_term)
        else:
            self.add_feasibility_cut(cut.coeff_y, cut.const_term)

    @property
    def n_cuts(self) -> int:
        return len(self.optimality) + len(self.feasibility)

    def copy(self) -> MasterModel:
        return MasterModel(
            self.n_binary,
            self.side_A,
            self.side_b,
            self.eta_floor,
            self.candidates,
            self.optimality.copy(),
            self.feasibility.copy(),
        )

    def eta_of(self, y: np.ndarray) -> float:
        """``eta*(y)`` for a fixed binary (feasibility is not checked)."""
        C, c0 = self.optimality.arrays()
        if len(c0) == 0:
            return self.eta_floor
        return float(np.max(C @ np.asarray(y, dtype=float) + c0))

    def is_feasible(self, y: np.ndarray) -> bool:
        y = np.asarray(y, dtype=float)
        if self.side_A.size and np.any(self.side_A @ y > self.side_b + 1e-9):
            return False
        F, f0 = self.feasibility.arrays()
        if len(f0) == 0:
            return True
        return bool(np.all(F @ y + f0 <= _feas_tol(F, f0)))

    def dump_csv(self, path) -> None:
        """Write the cut matrix (kind, const, coefficients) for debugging."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "const"] + [f"y{j}" for j in range(self.n_binary)])
            for kind, store in (("optimality", self.optimality), ("feasibility", self.feasibility)):
                C, c0 = store.arrays()
                for row, const in zip(C, c0):
                    w.writerow([kind, repr(float(const))] + [repr(float(v)) for v in row])


def _feas_tol(F: np.ndarray, f0: np.ndarray) -> np.ndarray:
    return FEAS_RTOL * (np.abs(f0) + np.abs(F).sum(axis=1))


def solve_master(model: MasterModel, pool_size: int = 1) -> MasterSolution:
    """Solve the relaxed master and return the ``pool_size`` best binaries.

    The pool is ordered by ``(eta, y lexicographic)``; its first entry is an
    optimal solution.  Raises :class:`NoFeasibleDiscrete` if every binary is
    excluded.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be positive")
    if model.candidates is not None:
        return enumerate_master(model, pool_size)
    return branch_and_bound(model, pool_size)


def enumerate_master(model: MasterModel, pool_size: int = 1) -> MasterSolution:
    cands = model.candidates
    if cands is None:
        from .problem import all_binaries

        cands = all_binaries(model.n_binary)
        if model.side_A.size:
            cands = cands[np.all(cands @ model.side_A.T <= model.side_b + 1e-9, axis=1)]
    Yf = cands.astype(float)
    mask = np.ones(len(cands), dtype=bool)
    F, f0 = model.feasibility.arrays()
    if len(f0):
        mask &= np.all(Yf @ F.T + f0 <= _feas_tol(F, f0), axis=1)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise NoFeasibleDiscrete("master problem is infeasible")
    C, c0 = model.optimality.arrays()
    bounded = len(c0) > 0
    if bounded:
        eta = np.max(Yf[idx] @ C.T + c0, axis=1)
    else:
        eta = np.full(len(idx), model.eta_floor)
    # candidates are lexicographically sorted, so a stable sort breaks ties by y
    order = np.argsort(eta, kind="stable")[:pool_size]
    pool = [
        PoolSolution(cands[idx[j]].astype(np.int8).copy(), float(eta[j]), r + 1)
        for r, j in enumerate(order)
    ]
    return MasterSolution(pool[0].eta, pool, bounded)


def node_bound(model: MasterModel, fixed: list[int], values) -> float:
    """Lower bound on ``eta*`` over all completions of a partial assignment."""
    C, c0 = model.optimality.arrays()
    if len(c0) == 0:
        return model.eta_floor
    free = [j for j in range(model.n_binary) if j not in set(fixed)]
    yf = np.asarray(values, dtype=float)
    return float(np.max(C[:, fixed] @ yf + c0 + np.minimum(C[:, free], 0.0).sum(axis=1)))


def node_infeasible(model: MasterModel, fixed: list[int], values) -> bool:
    """True when no completion can satisfy every feasibility cut and side constraint."""
    free = [j for j in range(model.n_binary) if j not in set(fixed)]
    yf = np.asarray(values, dtype=float)
    A, b = model.side_A, model.side_b
    if len(b) and np.any(A[:, fixed] @ yf + np.minimum(A[:, free], 0.0).sum(axis=1) > b + 1e-9):
        return True
    F, f0 = model.feasibility.arrays()
    if len(f0):
        lo = F[:, fixed] @ yf + f0 + np.minimum(F[:, free], 0.0).sum(axis=1)
        return bool(np.any(lo > _feas_tol(F, f0)))
    return False


def branch_and_bound(model: MasterModel, pool_size: int = 1) -> MasterSolution:
    """Depth-first branch and bound keeping the ``pool_size`` best leaves.

    Node bound: max over optimality cuts of ``const + fixed part + sum of
    negative free coefficients``.  A node is pruned when a feasibility cut or a
    side constraint cannot be satisfied by any completion, or when its bound
    exceeds the current worst pool member.  Ties with the worst member are
    explored so that the lexicographic tie-break matches enumeration.
    """
    n = model.n_binary
    C, c0 = model.optimality.arrays()
    F, f0 = model.feasibility.arrays()
    A, b = model.side_A, model.side_b
    bounded = len(c0) > 0
    ftol = _feas_tol(F, f0) if len(f0) else np.zeros(0)

    allrows = np.vstack([C, F]) if len(c0) + len(f0) else np.zeros((0, n))
    spread = allrows.max(axis=0) - allrows.min(axis=0) if len(allrows) else np.zeros(n)
    # largest coefficient range first, ties by index
    branch_order = sorted(range(n), key=lambda j: (-spread[j], j))

    Cneg = np.minimum(C, 0.0)
    Fneg = np.minimum(F, 0.0)
    Aneg = np.minimum(A, 0.0)

    best: list[tuple] = []  # sorted list of (eta, ytuple)

    def worst():
        return best[-1][0] if len(best) >= pool_size else np.inf

    def visit(depth: int, y: np.ndarray):
        fixed = branch_order[:depth]
        free = branch_order[depth:]
        yf = y[fixed]
        if len(b):
            lo = A[:, fixed] @ yf + Aneg[:, free].sum(axis=1)
            if np.any(lo > b + 1e-9):
                return
        if len(f0):
            lo = F[:, fixed] @ yf + f0 + Fneg[:, free].sum(axis=1)
            if np.any(lo > ftol):
                return
        if bounded:
            bound = float(np.max(C[:, fixed] @ yf + c0 + Cneg[:, free].sum(axis=1)))
        else:
            bound = model.eta_floor
        w = worst()
        # the slack absorbs summation-order noise so exact ties are never pruned
        if bound > w + 1e-12 * max(1.0, abs(w)):
            return
        if depth == n:
            eta = float(np.max(C @ y + c0)) if bounded else model.eta_floor
            if eta > w:
                return
            key = (eta, tuple(int(v) for v in y))
            bisect.insort(best, key)
            if len(best) > pool_size:
                best.pop()
            return
        j = branch_order[depth]
        children = []
        for v in (0, 1):
            child = y.copy()
            child[j] = v
            children.append(child)
        for child in children:
            visit(depth + 1, child)

    visit(0, np.zeros(n, dtype=float))
    if not best:
        raise NoFeasibleDiscrete("master problem is infeasible")
    pool = [PoolSolution(np.array(yt, dtype=np.int8), float(eta), r + 1) for r, (eta, yt) in enumerate(best)]
    return MasterSolution(pool[0].eta, pool, bounded)
