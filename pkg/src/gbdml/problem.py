"""Abstract interface for convex, linearly separable MINLPs.

Every problem handled by the decomposition engine has the form

    min_x,y  f_x(x) + d.y
    s.t.     G_x(x) + B y <= 0,   x in X,   A_side y <= b_side,   y binary

so that, for fixed multipliers, the Lagrangian is affine in ``y``.  Problems
expose ``d`` (``objective_y``), ``B`` (``coupling``) and the side constraints;
the engine builds cuts from the multipliers returned by the subproblem solvers.
Maximization problems are negated by the concrete problem classes.
"""
from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np


class GBDError(Exception):
    """Base class for errors raised by the toolkit."""


class NoFeasibleDiscrete(GBDError):
    """No binary vector satisfies the side constraints and feasibility cuts."""


class Unbounded(GBDError):
    """The lower bound never left the sentinel within the iteration budget."""


class Stalled(GBDError):
    """The lower bound stopped improving."""


class DualityGapTooLarge(GBDError):
    """An optimality cut is not tight at its generating point."""


class ModelMismatch(GBDError):
    """A trained model does not match the feature schema or filtering mode."""


class TooLarge(GBDError):
    """Enumeration requested beyond the configured cap."""


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass
class PrimalResult:
    """Outcome of a primal or feasibility-check solve at a fixed binary vector.

    ``multipliers`` are indexed like the rows of G.  For a feasible solve they
    are the optimal duals of ``G <= 0``; for an infeasible one they are the
    normalized duals (summing to one) of ``G <= alpha``.
    """

    status: Status
    x: np.ndarray
    objective: float
    f_x: float
    g_x: np.ndarray
    multipliers: np.ndarray
    alpha: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


class Problem(ABC):
    """A convex, linearly separable MINLP in internal minimization form."""

    n_continuous: int
    n_binary: int

    @property
    @abstractmethod
    def side_constraints(self) -> tuple[np.ndarray, np.ndarray]:
        """``(A, b)`` with the discrete set defined by ``A y <= b``."""

    @property
    @abstractmethod
    def objective_y(self) -> np.ndarray:
        """Linear objective weights ``d`` on the binaries."""

    @property
    @abstractmethod
    def coupling(self) -> np.ndarray:
        """Matrix ``B`` (rows of G by binaries)."""

    @abstractmethod
    def constraint_x(self, x: np.ndarray) -> np.ndarray:
        """The y-independent part ``G_x(x)`` of the constraint vector."""

    @abstractmethod
    def objective_x(self, x: np.ndarray) -> float:
        """The y-independent part ``f_x(x)`` of the objective."""

    @abstractmethod
    def solve_primal(self, y: np.ndarray) -> PrimalResult:
        ...

    @abstractmethod
    def solve_feasibility(self, y: np.ndarray) -> PrimalResult:
        ...

    def constraints(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.constraint_x(x) + self.coupling @ np.asarray(y, dtype=float)

    def objective(self, x: np.ndarray, y: np.ndarray) -> float:
        return self.objective_x(x) + float(self.objective_y @ np.asarray(y, dtype=float))

    def lagrangian(self, x: np.ndarray, y: np.ndarray, mu: np.ndarray) -> float:
        return self.objective(x, y) + float(mu @ self.constraints(x, y))

    def is_discrete_feasible(self, y: np.ndarray) -> bool:
        A, b = self.side_constraints
        y = np.asarray(y)
        if y.shape != (self.n_binary,) or not np.all((y == 0) | (y == 1)):
            return False
        return bool(np.all(A @ y <= b + 1e-9))

    def enumerate_discrete(self) -> np.ndarray | None:
        """All binaries satisfying the side constraints, lexicographically sorted.

        Returns None when the set is too large to materialize; the master
        solver then falls back to branch and bound.
        """
        if self.n_binary > 20:
            return None
        A, b = self.side_constraints
        grid = all_binaries(self.n_binary)
        if A.size:
            grid = grid[np.all(grid @ A.T <= b + 1e-9, axis=1)]
        return grid

    def initial_y(self) -> np.ndarray:
        """Starting point: the lexicographically smallest feasible binary."""
        cands = self.enumerate_discrete()
        if cands is not None:
            if len(cands) == 0:
                raise NoFeasibleDiscrete("side constraints admit no binary vector")
            return cands[0].astype(np.int8)
        from .master import MasterModel, solve_master

        A, b = self.side_constraints
        sol = solve_master(MasterModel(self.n_binary, A, b), 1)
        return sol.pool[0].y


def all_binaries(n: int) -> np.ndarray:
    """Every 0/1 vector of length n in lexicographic order."""
    codes = np.arange(2**n, dtype=np.int64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes >> shifts) & 1).astype(np.int8)


def lex_sorted(rows: np.ndarray) -> np.ndarray:
    """Sort 0/1 rows lexicographically (first column most significant)."""
    if len(rows) == 0:
        return rows
    order = np.lexsort(rows.T[::-1])
    return rows[order]


@dataclass
class RowLayout:
    """Named row blocks of a constraint vector."""

    names: list[str] = field(default_factory=list)
    offsets: dict[str, slice] = field(default_factory=dict)

    def add(self, name: str, count: int) -> slice:
        start = sum(s.stop - s.start for s in self.offsets.values())
        sl = slice(start, start + count)
        self.offsets[name] = sl
        self.names.append(name)
        return sl

    @property
    def size(self) -> int:
        return sum(s.stop - s.start for s in self.offsets.values())
