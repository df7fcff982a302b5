"""Joint subcarrier and power allocation for D2D pairs underlaying a cell.

``K`` cellular users (CUs) each own one uplink subcarrier; ``L`` D2D pairs
reuse them, at most one pair per subcarrier.  The default objective maximizes
the minimum D2D rate subject to a CU rate floor, per-pair and per-CU power
caps.

At a fixed assignment the CU power on a shared subcarrier is set to the
smallest value meeting its rate floor, which turns the D2D rate on that
subcarrier into the concave single-variable function

    r(p) = log2(1 + a p / (b + c p)),

with ``a = h_D``, ``b = sigma2 (1 + gamma h_CD / h_CB)`` and
``c = gamma h_CD h_DB / h_CB``.  The continuous problem then separates into one
budgeted concave allocation per pair, solved by bisection on the budget
multiplier.

Constraint rows (``G_x(x) + B rho <= 0``), with
``x = (t, s[k,l], p[k,l], pC[k])``:

    epigraph[l]  t - sum_k s[k,l]
    rate[k,l]    s[k,l] - r_kl(p[k,l])
    budget[l]    sum_k p[k,l] - P_D_max
    link[k,l]    s[k,l] - Rmax[k,l] rho[k,l]
    cu_rate[k]   gamma (sigma2 + sum_l p[k,l] h_DB[l]) / h_CB[k] - pC[k]
    cu_cap[k]    pC[k] - P_C_max

The binaries enter only through ``link``, so the Lagrangian evaluated at the
primal optimum is an exact lower-bounding function of ``rho``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .problem import PrimalResult, Problem, RowLayout, Status, TooLarge

LN2 = math.log(2.0)
SCHEMA = "gbdml.instance/1"
OBJECTIVES = ("maxmin", "sum", "weighted")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def cellular_path_loss_db(d_m):
    return 128.1 + 37.6 * np.log10(np.asarray(d_m, dtype=float) / 1000.0)


def d2d_path_loss_db(d_m):
    return 148.0 + 40.0 * np.log10(np.asarray(d_m, dtype=float) / 1000.0)


@dataclass
class D2DParams:
    cell_radius: float = 500.0
    noise_dbm_per_hz: float = -174.0
    bandwidth_hz: float = 180e3
    shadowing_db: float = 10.0
    P_C_max_dbm: float = 20.0
    P_D_max_dbm: float = 20.0
    R_C_min: float = 2.0
    pair_distance: float = 50.0
    min_distance: float = 1.0
    objective_kind: str = "maxmin"

    @property
    def sigma2(self) -> float:
        return 10.0 ** (self.noise_dbm_per_hz / 10.0) * 1e-3 * self.bandwidth_hz


@dataclass
class D2DInstance:
    K: int
    L: int
    h_CB: np.ndarray
    h_DB: np.ndarray
    h_D: np.ndarray
    h_CD: np.ndarray
    sigma2: float
    P_C_max: float
    P_D_max: float
    R_C_min: float
    cell_radius: float = 500.0
    seed: int = 0
    objective_kind: str = "maxmin"
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.h_CB = np.asarray(self.h_CB, dtype=float).reshape(self.K)
        self.h_DB = np.asarray(self.h_DB, dtype=float).reshape(self.L)
        self.h_D = np.asarray(self.h_D, dtype=float).reshape(self.L)
        self.h_CD = np.asarray(self.h_CD, dtype=float).reshape(self.K, self.L)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float).reshape(self.L)
        if self.objective_kind not in OBJECTIVES:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")
        if self.objective_kind == "weighted" and self.weights is None:
            raise ValueError("weighted objective needs weights")
        for name in ("h_CB", "h_DB", "h_D", "h_CD"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be positive")
        if min(self.sigma2, self.P_C_max, self.P_D_max) <= 0:
            raise ValueError("powers and noise must be positive")

    @property
    def gamma(self) -> float:
        return 2.0 ** self.R_C_min - 1.0

    def with_objective(self, kind: str) -> D2DInstance:
        d = self.to_dict()
        d["objective_kind"] = kind
        return D2DInstance.from_dict(d)

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA, "problem_kind": "d2d"}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> D2DInstance:
        if d.get("schema") != SCHEMA or d.get("problem_kind") != "d2d":
            raise ValueError("not a D2D instance document")
        fields = {k: v for k, v in d.items() if k not in ("schema", "problem_kind")}
        return cls(**fields)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)


def _uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=n))
    th = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def generate_instance(K: int, L: int, params: D2DParams | None = None, seed: int = 0,
                      max_draws: int = 1000) -> D2DInstance:
    """Random single-cell topology with log-normal shadowing.

    Links ending at the eNB use the cellular path-loss model, links ending at
    a D2D receiver the D2D model.  Draws in which some CU cannot meet its rate
    floor even without interference are rejected and redrawn.
    """
    if K < 1 or L < 1:
        raise ValueError("K and L must be at least 1")
    params = params or D2DParams()
    rng = np.random.default_rng(seed)
    sigma2 = params.sigma2
    P_C = dbm_to_watt(params.P_C_max_dbm)
    P_D = dbm_to_watt(params.P_D_max_dbm)
    gamma = 2.0 ** params.R_C_min - 1.0
    dmin = params.min_distance
    for _ in range(max_draws):
        cu = _uniform_disc(rng, K, params.cell_radius)
        tx = _uniform_disc(rng, L, params.cell_radius)
        rx = tx + _uniform_disc(rng, L, params.pair_distance)
        d_cb = np.maximum(np.linalg.norm(cu, axis=1), dmin)
        d_db = np.maximum(np.linalg.norm(tx, axis=1), dmin)
        d_d = np.maximum(np.linalg.norm(rx - tx, axis=1), dmin)
        d_cd = np.maximum(np.linalg.norm(cu[:, None, :] - rx[None, :, :], axis=2), dmin)
        sh = params.shadowing_db
        h_CB = 10.0 ** (-(cellular_path_loss_db(d_cb) + sh * rng.standard_normal(K)) / 10.0)
        h_DB = 10.0 ** (-(cellular_path_loss_db(d_db) + sh * rng.standard_normal(L)) / 10.0)
        h_D = 10.0 ** (-(d2d_path_loss_db(d_d) + sh * rng.standard_normal(L)) / 10.0)
        h_CD = 10.0 ** (-(d2d_path_loss_db(d_cd) + sh * rng.standard_normal((K, L))) / 10.0)
        weights = rng.uniform(0.0, 1.0, size=L)
        if np.all(gamma * sigma2 / h_CB <= P_C):
            return D2DInstance(
                K, L, h_CB, h_DB, h_D, h_CD, sigma2, P_C, P_D, params.R_C_min,
                params.cell_radius, seed, params.objective_kind, weights,
            )
    raise RuntimeError("could not draw an instance with feasible CUs")


# ---------------------------------------------------------------------------
# per-subcarrier rate model


@dataclass
class RateModel:
    """Coefficients of ``r_kl(p)`` and per-link power caps, all (K, L)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    cap: np.ndarray
    rmax: np.ndarray
    cu_ok: np.ndarray

    @classmethod
    def from_instance(cls, inst: D2DInstance) -> RateModel:
        g = inst.gamma
        ratio = inst.h_CD / inst.h_CB[:, None]
        a = np.broadcast_to(inst.h_D[None, :], (inst.K, inst.L)).copy()
        b = inst.sigma2 * (1.0 + g * ratio)
        c = g * ratio * inst.h_DB[None, :]
        cu_cap = (inst.P_C_max * inst.h_CB[:, None] / g - inst.sigma2) / inst.h_DB[None, :]
        cap = np.clip(cu_cap, 0.0, inst.P_D_max)
        rmax = rate(a, b, c, cap)
        cu_ok = g * inst.sigma2 / inst.h_CB <= inst.P_C_max
        return cls(a, b, c, cap, rmax, cu_ok)


def rate(a, b, c, p):
    """``log2(1 + a p / (b + c p))``, elementwise."""
    return np.log1p(a * p / (b + c * p)) / LN2


def rate_slope(a, b, c, p):
    return a * b / ((b + (a + c) * p) * (b + c * p) * LN2)


def inverse_slope(a, b, c, nu):
    """Smallest ``p >= 0`` with ``r'(p) = nu`` (0 if ``r'(0) <= nu``)."""
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    q = a * b / (nu * LN2) - b * b
    A2 = c * (a + c)
    B2 = b * (a + 2.0 * c)
    qp = np.maximum(q, 0.0)
    p = 2.0 * qp / (B2 + np.sqrt(B2 * B2 + 4.0 * A2 * qp))
    return np.where(q > 0, p, 0.0)


def allocate_pair(a, b, c, cap, budget):
    """Maximize ``sum_k r_k(p_k)`` s.t. ``sum p <= budget``, ``0 <= p <= cap``.

    Returns ``(p, nu)`` with ``nu`` the budget multiplier (in rate units per
    watt).  Inputs are 1-D arrays over the pair's subcarriers.
    """
    a, b, c, cap = (np.asarray(v, dtype=float) for v in (a, b, c, cap))
    if a.size == 0:
        return np.zeros(0), 0.0
    if cap.sum() <= budget:
        return cap.copy(), 0.0

    def excess(log_nu):
        nu = math.exp(log_nu)
        return float(np.minimum(inverse_slope(a, b, c, nu), cap).sum()) - budget

    hi = float(np.max(rate_slope(a, b, c, 0.0)))
    pos = cap > 0
    lo = float(np.min(rate_slope(a[pos], b[pos], c[pos], cap[pos])))
    lo_log, hi_log = math.log(lo) - 1e-9, math.log(hi)
    if excess(lo_log) < 0:  # pragma: no cover - guarded by the cap sum check
        return cap.copy(), 0.0
    log_nu = brentq(excess, lo_log, hi_log, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    nu = math.exp(log_nu)
    p = np.minimum(inverse_slope(a, b, c, nu), cap)
    total = p.sum()
    if total > budget:
        p *= budget / total
    return p, nu


# ---------------------------------------------------------------------------
# problem wrapper


@dataclass
class D2DPrimalResult(PrimalResult):
    t: float = 0.0
    p_D: np.ndarray = field(default=None)
    p_C: np.ndarray = field(default=None)
    pair_rates: np.ndarray = field(default=None)
    budget_prices: np.ndarray = field(default=None)


class D2DProblem(Problem):
    """Problem (internal minimization of the negated D2D objective)."""

    def __init__(self, instance: D2DInstance):
        self.instance = inst = instance
        K, L = inst.K, inst.L
        self.K, self.L = K, L
        self.rates = RateModel.from_instance(inst)
        self.n_binary = K * L
        self.n_continuous = 1 + 2 * K * L + K
        lay = RowLayout()
        self.rows = {
            "epigraph": lay.add("epigraph", L),
            "rate": lay.add("rate", K * L),
            "budget": lay.add("budget", L),
            "link": lay.add("link", K * L),
            "cu_rate": lay.add("cu_rate", K),
            "cu_cap": lay.add("cu_cap", K),
        }
        self.n_rows = lay.size
        B = np.zeros((self.n_rows, K * L))
        link = self.rows["link"]
        B[link, :] = -np.diag(self.rates.rmax.ravel())
        self._B = B
        A = np.zeros((K, K * L))
        for k in range(K):
            A[k, k * L:(k + 1) * L] = 1.0
        self._side = (A, np.ones(K))
        self._cands = None
        self.weights = (
            np.ones(L) if inst.objective_kind == "sum"
            else (inst.weights if inst.objective_kind == "weighted" else None)
        )

    # -- layout helpers
    def split_x(self, x):
        K, L = self.K, self.L
        t = x[0]
        s = x[1:1 + K * L].reshape(K, L)
        p = x[1 + K * L:1 + 2 * K * L].reshape(K, L)
        pc = x[1 + 2 * K * L:]
        return t, s, p, pc

    def join_x(self, t, s, p, pc):
        return np.concatenate([[t], np.ravel(s), np.ravel(p), np.ravel(pc)])

    # -- Problem interface
    @property
    def side_constraints(self):
        return self._side

    @property
    def objective_y(self):
        return np.zeros(self.n_binary)

    @property
    def coupling(self):
        return self._B

    def objective_x(self, x) -> float:
        t, s, _, _ = self.split_x(x)
        if self.weights is None:
            return -float(t)
        return -float(s.sum(axis=0) @ self.weights)

    def constraint_x(self, x) -> np.ndarray:
        inst, rm = self.instance, self.rates
        t, s, p, pc = self.split_x(x)
        g = np.empty(self.n_rows)
        R = self.rows
        g[R["epigraph"]] = t - s.sum(axis=0)
        g[R["rate"]] = (s - rate(rm.a, rm.b, rm.c, p)).ravel()
        g[R["budget"]] = p.sum(axis=0) - inst.P_D_max
        g[R["link"]] = s.ravel()
        g[R["cu_rate"]] = inst.gamma * (inst.sigma2 + p @ inst.h_DB) / inst.h_CB - pc
        g[R["cu_cap"]] = pc - inst.P_C_max
        return g

    def enumerate_discrete(self):
        if self._cands is None:
            self._cands = assignments(self.K, self.L)
        return self._cands

    def as_rho(self, y) -> np.ndarray:
        rho = np.asarray(y).reshape(self.K, self.L)
        if np.any(rho.sum(axis=1) > 1) or not np.all((rho == 0) | (rho == 1)):
            raise ValueError("each subcarrier can host at most one D2D pair")
        return rho.astype(np.int8)

    def solve_primal(self, y) -> D2DPrimalResult:
        return solve_primal(self, y)

    def solve_feasibility(self, y) -> D2DPrimalResult:
        return solve_feasibility(self, y)


def assignments(K: int, L: int) -> np.ndarray:
    """All assignments with at most one pair per subcarrier, lexicographic."""
    choices = np.vstack([np.zeros(L, dtype=np.int8), np.eye(L, dtype=np.int8)])
    idx = np.indices((L + 1,) * K).reshape(K, -1).T
    rows = choices[idx].reshape(-1, K * L)
    order = np.lexsort(rows.T[::-1])
    return rows[order]


def solve_primal(problem: D2DProblem, y) -> D2DPrimalResult:
    """Optimal powers and multipliers for a fixed subcarrier assignment."""
    inst, rm = problem.instance, problem.rates
    K, L = problem.K, problem.L
    rho = problem.as_rho(y)
    if not np.all(rm.cu_ok):
        return _infeasible_result(problem)

    p = np.zeros((K, L))
    nu = np.zeros(L)
    for l in range(L):
        ks = np.flatnonzero(rho[:, l])
        if ks.size:
            p[ks, l], nu[l] = allocate_pair(rm.a[ks, l], rm.b[ks, l], rm.c[ks, l], rm.cap[ks, l], inst.P_D_max)
    s = np.where(rho == 1, rate(rm.a, rm.b, rm.c, p), 0.0)
    R = s.sum(axis=0)
    t = float(R.min())

    if problem.weights is None:
        tie = R <= t + 1e-12 * max(1.0, abs(t))
        price = tie / tie.sum()
    else:
        price = problem.weights.copy()

    slope0 = rate_slope(rm.a, rm.b, rm.c, 0.0)
    slope_p = rate_slope(rm.a, rm.b, rm.c, p)
    at_cap = (rho == 1) & (p >= rm.cap)
    ratio0 = np.divide(nu[None, :], slope0, out=np.zeros_like(slope0), where=slope0 > 0)
    ratio_p = np.divide(nu[None, :], slope_p, out=np.zeros_like(slope_p), where=slope_p > 0)
    link_share = np.zeros((K, L))
    off = rho == 0
    link_share[off] = np.maximum(0.0, 1.0 - ratio0[off])
    link_share[at_cap] = np.maximum(0.0, 1.0 - ratio_p[at_cap])
    mu_link = price[None, :] * link_share
    mu_rate = price[None, :] - mu_link

    mult = np.zeros(problem.n_rows)
    rows = problem.rows
    if problem.weights is None:
        mult[rows["epigraph"]] = price
    mult[rows["rate"]] = mu_rate.ravel()
    mult[rows["budget"]] = price * nu
    mult[rows["link"]] = mu_link.ravel()

    pc = inst.gamma * (inst.sigma2 + p @ inst.h_DB) / inst.h_CB
    x = problem.join_x(t, s, p, pc)
    f_x = problem.objective_x(x)
    g_x = problem.constraint_x(x)
    return D2DPrimalResult(
        Status.FEASIBLE, x, f_x, f_x, g_x, mult,
        t=t, p_D=p, p_C=pc, pair_rates=R, budget_prices=nu,
    )


def _infeasible_result(problem: D2DProblem) -> D2DPrimalResult:
    inst = problem.instance
    K, L = problem.K, problem.L
    pc = np.full(K, np.nan)
    return D2DPrimalResult(
        Status.INFEASIBLE, np.full(problem.n_continuous, np.nan), math.inf, math.inf,
        np.full(problem.n_rows, np.nan), np.zeros(problem.n_rows),
        p_D=np.zeros((K, L)), p_C=pc,
    )


def solve_feasibility(problem: D2DProblem, y) -> D2DPrimalResult:
    """Minimize the largest constraint violation ``alpha``.

    Only the CU rows can be violated (the D2D rows are satisfied with zero
    D2D power), so ``alpha`` is half the largest gap between a CU's minimum
    interference-free power and its cap, and the multipliers split evenly over
    the ``cu_rate`` and ``cu_cap`` rows of the worst CUs.
    """
    inst = problem.instance
    K, L = problem.K, problem.L
    problem.as_rho(y)
    need = inst.gamma * inst.sigma2 / inst.h_CB
    gaps = 0.5 * (need - inst.P_C_max)
    alpha = max(0.0, float(gaps.max()))
    pc = 0.5 * (need + inst.P_C_max)
    x = problem.join_x(0.0, np.zeros((K, L)), np.zeros((K, L)), pc)
    mult = np.zeros(problem.n_rows)
    if alpha > 0:
        worst = np.flatnonzero(gaps >= gaps.max())
        share = 0.5 / worst.size
        rows = problem.rows
        cu_rate = np.arange(rows["cu_rate"].start, rows["cu_rate"].stop)
        cu_cap = np.arange(rows["cu_cap"].start, rows["cu_cap"].stop)
        mult[cu_rate[worst]] = share
        mult[cu_cap[worst]] = share
    g_x = problem.constraint_x(x)
    return D2DPrimalResult(
        Status.INFEASIBLE, x, math.inf, math.inf, g_x, mult, alpha=alpha,
        p_D=np.zeros((K, L)), p_C=pc,
    )


def enumerate_oracle(instance: D2DInstance | D2DProblem, cap: int = 500_000):
    """Brute-force optimum over every assignment: ``(objective, rho)``.

    The objective is in internal minimization units (negated rate).
    """
    problem = instance if isinstance(instance, D2DProblem) else D2DProblem(instance)
    K, L = problem.K, problem.L
    if (L + 1) ** K > cap:
        raise TooLarge(f"(L+1)^K = {(L + 1) ** K} exceeds cap {cap}")
    best, best_rho = math.inf, None
    for y in problem.enumerate_discrete():
        res = problem.solve_primal(y)
        if res.feasible and res.objective < best:
            best, best_rho = res.objective, y.reshape(K, L).copy()
    return best, best_rho


def load_instance(path) -> D2DInstance:
    with open(path) as fh:
        return D2DInstance.from_dict(json.load(fh))
