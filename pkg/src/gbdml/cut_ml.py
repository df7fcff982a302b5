"""Cut features, training data, learners and metrics for cut filtering.

Every cut is described by five features: the optimality indicator, the
violation at its generating point, how often its generating binary was
visited before, its depth (iteration) and its order in the pool.  Two label
families are collected:

* classifier labels from a randomized single-cut run, comparing lower-bound
  improvements of consecutive iterations against a threshold ``theta``;
* regressor labels ``CR_s``, the share of an iteration's lower-bound
  improvement already reached after its first ``s`` cuts.

The learners (logistic regression, linear SVM, extremely randomized trees,
least squares) are small numpy implementations.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .gbd import (
    Cut,
    Mode,
    RunConfig,
    RunResult,
    new_master,
    replay_increments,
    run_multi_cut,
    run_random_pop,
)
from .master import solve_master
from .problem import GBDError, ModelMismatch, Problem

SCHEMA_VERSION = "gbdml.features/1"
FEATURES = ("indicator", "violation", "repeat", "depth", "order")
CSV_HEADER = FEATURES + ("label", "run_id", "iteration", "s", "schema_version")
RULE_ATOL = 1e-9


class SingleClass(GBDError):
    """Undersampling or training needs both classes."""


class NonConvergence(UserWarning):
    """A gradient method hit its epoch limit."""


# ---------------------------------------------------------------------------
# features and datasets


@dataclass
class FeatureVector:
    indicator: int
    violation: float
    repeat: int
    depth: int
    order: int
    schema_version: str = SCHEMA_VERSION

    @classmethod
    def of(cls, cut: Cut) -> FeatureVector:
        return cls(int(cut.is_optimality), float(cut.violation), int(cut.repeat_count),
                   int(cut.gen_iteration), int(cut.gen_order))

    def as_array(self) -> np.ndarray:
        return np.array([self.indicator, self.violation, self.repeat, self.depth, self.order], dtype=float)


def feature_matrix(cuts: list[Cut]) -> np.ndarray:
    if not cuts:
        return np.zeros((0, len(FEATURES)))
    return np.vstack([FeatureVector.of(c).as_array() for c in cuts])


@dataclass
class CutDataset:
    """Feature rows with labels and provenance (run, iteration, order)."""

    X: np.ndarray
    y: np.ndarray
    run_id: np.ndarray
    iteration: np.ndarray
    s: np.ndarray
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(FEATURES))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.run_id = np.asarray(self.run_id, dtype=int).reshape(-1)
        self.iteration = np.asarray(self.iteration, dtype=int).reshape(-1)
        self.s = np.asarray(self.s, dtype=int).reshape(-1)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> CutDataset:
        idx = np.asarray(idx)
        return CutDataset(self.X[idx], self.y[idx], self.run_id[idx], self.iteration[idx], self.s[idx],
                          self.schema_version)

    @classmethod
    def concat(cls, parts: list[CutDataset]) -> CutDataset:
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("X", "y", "run_id", "iteration", "s")))

    @classmethod
    def empty(cls) -> CutDataset:
        return cls(np.zeros((0, len(FEATURES))), [], [], [], [])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for i in range(len(self)):
                row = self.X[i]
                w.writerow([
                    int(row[0]), repr(float(row[1])), int(row[2]), int(row[3]), int(row[4]),
                    repr(float(self.y[i])), int(self.run_id[i]), int(self.iteration[i]), int(self.s[i]),
                    self.schema_version,
                ])

    @classmethod
    def read_csv(cls, path) -> CutDataset:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ModelMismatch(f"unexpected dataset header {header}")
            rows = list(reader)
        if not rows:
            return cls.empty()
        versions = {r[-1] for r in rows}
        if versions != {SCHEMA_VERSION}:
            raise ModelMismatch(f"dataset schema {sorted(versions)} != {SCHEMA_VERSION}")
        arr = np.array([[float(v) for v in r[:-1]] for r in rows])
        return cls(arr[:, :5], arr[:, 5], arr[:, 6], arr[:, 7], arr[:, 8])


def split_by_run(data: CutDataset, test_fraction: float = 0.3, seed: int = 0) -> tuple[CutDataset, CutDataset]:
    """Hold out whole runs so that no instance contributes to both sides."""
    runs = np.unique(data.run_id)
    rng = np.random.default_rng(seed)
    test_runs = rng.permutation(runs)[: max(1, int(round(test_fraction * len(runs))))]
    mask = np.isin(data.run_id, test_runs)
    return data.subset(np.flatnonzero(~mask)), data.subset(np.flatnonzero(mask))


# ---------------------------------------------------------------------------
# labels


def classifier_labels(ci: list[float], theta: float = 1.0) -> np.ndarray:
    """``BL_i = 1`` iff ``CI_i / CI_{i+1} > theta``; the last entry is 1.

    A zero next improvement counts as an infinite ratio when the current
    improvement is positive; two consecutive zero improvements give 0.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    n = len(ci)
    out = np.zeros(n, dtype=int)
    for i in range(n):
        if i == n - 1:
            out[i] = 1
            continue
        a, b = ci[i], ci[i + 1]
        if b == 0:
            out[i] = int(a > 0)
        else:
            out[i] = int(a / b > theta)
    return out


def regressor_labels(etas: list[float]) -> np.ndarray:
    """``CR_s = (eta_s - eta_0) / (eta_S - eta_0)``, or all ones if no change."""
    etas = np.asarray(etas, dtype=float)
    aci = etas[1:] - etas[0]
    ct = aci[-1]
    if ct == 0:
        return np.ones(len(aci))
    return np.clip(aci / ct, 0.0, 1.0)


def collect_classifier_data(problems: list[Problem], S: int = 8, theta: float = 1.0, seed: int = 0,
                            **config) -> tuple[CutDataset, list[RunResult]]:
    """Randomized runs: a pool of ``S`` is requested and one member used per iteration."""
    parts, runs = [], []
    for j, problem in enumerate(problems):
        cfg = RunConfig(mode=Mode.MULTI_CUT, pool_size=S, seed=seed + j, **config)
        res = run_random_pop(problem, cfg)
        runs.append(res)
        etas = [cfg.eta_floor] + list(res.trace.eta_star)
        ci = np.diff(etas)
        labels = classifier_labels(list(ci), theta)
        X = feature_matrix(res.cuts)
        it = np.array([c.gen_iteration for c in res.cuts])
        s = np.array([c.gen_order for c in res.cuts])
        parts.append(CutDataset(X, labels[: len(res.cuts)], np.full(len(res.cuts), j), it, s))
    return CutDataset.concat(parts), runs


def collect_regressor_data(problems: list[Problem], S: int = 8, seed: int = 0,
                           **config) -> tuple[CutDataset, list[RunResult]]:
    """Multi-cut runs with the master re-solved after each cut of every iteration."""
    if S < 2:
        raise ValueError("regressor data needs S >= 2")
    parts, runs = [], []
    for j, problem in enumerate(problems):
        cfg = RunConfig(mode=Mode.MULTI_CUT, pool_size=S, seed=seed + j, **config)
        res = run_multi_cut(problem, cfg)
        runs.append(res)
        for it, group, etas in replay_increments(problem, res):
            cr = regressor_labels(etas)
            parts.append(CutDataset(
                feature_matrix(group), cr, np.full(len(group), j), np.full(len(group), it),
                np.arange(1, len(group) + 1),
            ))
    return CutDataset.concat(parts), runs


def shadow_label(problem: Problem, run_result: RunResult, rtol: float = 1e-9) -> np.ndarray:
    """Ground-truth usefulness of every cut of a run, in log order.

    Each iteration is replayed on a copy of the master holding the cuts kept
    so far; a cut is useful iff appending it strictly raises the master
    optimum.  The first cut of every iteration is useful by definition.
    """
    base = new_master(problem, run_result.config.eta_floor)
    out = []
    for _, group in sorted(run_result.cuts_by_iteration().items()):
        shadow = base.copy()
        eta = solve_master(shadow, 1).eta_star
        for s, cut in enumerate(group, start=1):
            trial = shadow.copy()
            trial.add_cut(cut)
            new = solve_master(trial, 1).eta_star
            out.append(s == 1 or new > eta + rtol * max(1.0, abs(eta)))
            if cut.added:
                shadow, eta = trial, new
        for cut in group:
            if cut.added:
                base.add_cut(cut)
    return np.array(out, dtype=bool)


def undersample(data: CutDataset, ratio: float = 1.0, seed: int = 0) -> CutDataset:
    """Keep every minority record and ``ratio`` majority records per minority one."""
    labels = data.y.astype(int)
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClass("undersampling needs both classes")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    keep = min(len(majority), int(round(ratio * len(minority))))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(majority, size=keep, replace=False)
    return data.subset(np.sort(np.concatenate([minority, chosen])))


# ---------------------------------------------------------------------------
# preprocessing


def signed_log(v):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.log1p(np.abs(v))


def transform(X: np.ndarray) -> np.ndarray:
    """Compress the violation column, which spans many orders of magnitude."""
    Z = np.array(X, dtype=float, copy=True)
    Z[:, 1] = signed_log(Z[:, 1])
    return Z


@dataclass
class Standardizer:
    """Z-score on every column but the indicator."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, Z: np.ndarray) -> Standardizer:
        mean = Z.mean(axis=0)
        std = Z.std(axis=0)
        std[std == 0] = 1.0
        mean[0], std[0] = 0.0, 1.0
        return cls(mean, std)

    def apply(self, Z):
        return (Z - self.mean) / self.std

    def invert(self, U):
        return U * self.std + self.mean


# ---------------------------------------------------------------------------
# learners


def fit_logistic(U, y, w, l2=1e-4, epochs=20000, tol=1e-6):
    """Weighted, L2-penalized logistic regression.

    Nesterov-accelerated gradient descent with the step set by the Lipschitz
    constant of the gradient, which stays stable when a column is constant
    and therefore collinear with the bias.
    """
    n, d = U.shape
    A = np.hstack([U, np.ones((n, 1))])
    wn = w / w.sum()
    lip = 0.25 * np.linalg.eigvalsh(A.T @ (wn[:, None] * A)).max() + l2
    step = 1.0 / lip
    theta = np.zeros(d + 1)
    prev = theta.copy()
    converged = False

    def grad(th):
        p = 0.5 * (1.0 + np.tanh(0.5 * (A @ th)))
        g = A.T @ (wn * (p - y))
        g[:-1] += l2 * th[:-1]
        return g

    for k in range(1, epochs + 1):
        look = theta + (k - 1.0) / (k + 2.0) * (theta - prev)
        prev = theta
        theta = look - step * grad(look)
        if np.linalg.norm(grad(theta)) < tol:
            converged = True
            break
    return theta[:-1], float(theta[-1]), converged


def fit_linear_svm(U, y, w, l2=1e-3, epochs=5000, tol=1e-5):
    """Weighted hinge loss with an L2 penalty, by subgradient descent.

    Step sizes ``1 / (l2 t)`` with iterate averaging over the second half.
    """
    n, d = U.shape
    A = np.hstack([U, np.ones((n, 1))])
    sgn = 2.0 * y - 1.0
    wn = w / w.sum()
    theta = np.zeros(d + 1)
    avg = np.zeros(d + 1)
    count = 0
    prev = None
    converged = False
    for t in range(1, epochs + 1):
        margin = sgn * (A @ theta)
        active = margin < 1.0
        grad = -(A[active].T @ (wn[active] * sgn[active]))
        grad[:-1] += l2 * theta[:-1]
        theta -= grad / (l2 * t + 1.0)
        if t > epochs // 2:
            avg += theta
            count += 1
            cur = avg / count
            if prev is not None and np.linalg.norm(cur - prev) < tol * max(1.0, np.linalg.norm(cur)):
                converged = True
                break
            prev = cur
    theta = avg / count if count else theta
    return theta[:-1], float(theta[-1]), converged


@dataclass
class Tree:
    """Binary tree in flat arrays; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, Z: np.ndarray) -> np.ndarray:
        node = np.zeros(len(Z), dtype=int)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            f = self.feature[node[idx]]
            go_left = Z[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> Tree:
        return cls(np.array(d["feature"], dtype=int), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=int), np.array(d["right"], dtype=int),
                   np.array(d["value"], dtype=float))


def fit_extra_tree(Z, y, rng, min_leaf=2, max_features=None) -> Tree:
    """One extremely randomized regression tree.

    At each node, every candidate feature gets one threshold drawn uniformly
    between its node minimum and maximum; the split with the largest variance
    reduction wins.  Nodes smaller than ``2 * min_leaf`` or with constant
    labels become leaves holding the mean label.
    """
    n, d = Z.shape
    k = d if max_features is None else max_features
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        yi = y[idx]
        value[node] = float(yi.mean())
        if len(idx) < 2 * min_leaf or np.all(yi == yi[0]):
            continue
        best = None
        feats = rng.permutation(d)[:k]
        base = yi.var() * len(idx)
        for f in feats:
            col = Z[idx, f]
            lo, hi = col.min(), col.max()
            if lo == hi:
                continue
            thr = rng.uniform(lo, hi)
            m = col <= thr
            nl = int(m.sum())
            if nl < min_leaf or len(idx) - nl < min_leaf:
                continue
            score = base - yi[m].var() * nl - yi[~m].var() * (len(idx) - nl)
            if best is None or score > best[0]:
                best = (score, f, thr, m)
        if best is None:
            continue
        _, f, thr, m = best
        feature[node], threshold[node] = int(f), float(thr)
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        stack.append((r, idx[~m]))
        stack.append((l, idx[m]))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))


# ---------------------------------------------------------------------------
# trained models

CLASSIFIER_KINDS = ("logreg", "svm", "constant")
REGRESSOR_KINDS = ("extratrees", "linear", "constant")


@dataclass
class TrainedModel:
    """A fitted cut filter with its preprocessing statistics."""

    task: str
    kind: str
    mean: np.ndarray
    std: np.ndarray
    weights: np.ndarray | None = None
    bias: float = 0.0
    trees: list[Tree] = field(default_factory=list)
    constant: float = 0.0
    converged: bool = True
    seed: int = 0
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        if self.task not in ("classifier", "regressor"):
            raise ValueError(f"unknown task {self.task!r}")
        kinds = CLASSIFIER_KINDS if self.task == "classifier" else REGRESSOR_KINDS
        if self.kind not in kinds:
            raise ValueError(f"unknown {self.task} kind {self.kind!r}")
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)

    @property
    def standardizer(self) -> Standardizer:
        return Standardizer(self.mean, self.std)

    def preprocess(self, X: np.ndarray) -> np.ndarray:
        return self.standardizer.apply(transform(np.atleast_2d(X)))

    def score(self, X: np.ndarray) -> np.ndarray:
        """Classifier: probability-like score in [0,1] (logistic) or margin (SVM).
        Regressor: predicted CR."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "constant":
            return np.full(len(X), self.constant)
        U = self.preprocess(X)
        if self.kind == "logreg":
            return 0.5 * (1.0 + np.tanh(0.5 * (U @ self.weights + self.bias)))
        if self.kind in ("svm", "linear"):
            return U @ self.weights + self.bias
        return np.mean([t.predict(U) for t in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Classifier: 0/1 labels.  Regressor: predictions clamped to [0,1]."""
        sc = self.score(X)
        if self.task == "regressor":
            return np.clip(sc, 0.0, 1.0)
        if self.kind == "svm":
            return (sc > 0).astype(int)
        return (sc > 0.5).astype(int)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "kind": self.kind,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "weights": None if self.weights is None else self.weights.tolist(),
            "bias": self.bias,
            "trees": [t.to_dict() for t in self.trees],
            "constant": self.constant,
            "converged": self.converged,
            "seed": self.seed,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrainedModel:
        d = dict(d)
        d["trees"] = [Tree.from_dict(t) for t in d.get("trees", [])]
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> TrainedModel:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def constant_model(task: str, value: float) -> TrainedModel:
    """Pass-through filters: a fixed score for every cut."""
    return TrainedModel(task, "constant", np.zeros(len(FEATURES)), np.ones(len(FEATURES)), constant=float(value))


def train_classifier(data: CutDataset, kind: str = "logreg", class_weights=(2.0, 1.0), seed: int = 0,
                     **hyper) -> TrainedModel:
    """Fit a linear classifier; ``class_weights`` is ``(useful, useless)``."""
    y = data.y.astype(int)
    if len(np.unique(y)) < 2:
        raise SingleClass("training needs both classes")
    Z = transform(data.X)
    st = Standardizer.fit(Z)
    U = st.apply(Z)
    w = np.where(y == 1, class_weights[0], class_weights[1]).astype(float)
    if kind == "logreg":
        coef, bias, ok = fit_logistic(U, y.astype(float), w, **hyper)
    elif kind == "svm":
        coef, bias, ok = fit_linear_svm(U, y.astype(float), w, **hyper)
    else:
        raise ValueError(f"unknown classifier kind {kind!r}")
    if not ok:
        warnings.warn(f"{kind} did not converge within the epoch limit", NonConvergence, stacklevel=2)
    return TrainedModel("classifier", kind, st.mean, st.std, coef, bias, converged=ok, seed=seed)


def train_regressor(data: CutDataset, kind: str = "extratrees", seed: int = 0, n_trees: int = 100,
                    min_leaf: int = 2, max_features: int | None = None) -> TrainedModel:
    Z = transform(data.X)
    st = Standardizer.fit(Z)
    U = st.apply(Z)
    y = data.y.astype(float)
    if kind == "linear":
        A = np.hstack([U, np.ones((len(U), 1))])
        theta, *_ = np.linalg.lstsq(A, y, rcond=None)
        return TrainedModel("regressor", "linear", st.mean, st.std, theta[:-1], float(theta[-1]), seed=seed)
    if kind != "extratrees":
        raise ValueError(f"unknown regressor kind {kind!r}")
    rng = np.random.default_rng(seed)
    trees = [fit_extra_tree(U, y, rng, min_leaf, max_features) for _ in range(n_trees)]
    return TrainedModel("regressor", "extratrees", st.mean, st.std, trees=trees, seed=seed)


# ---------------------------------------------------------------------------
# filtering


def check_model(model: TrainedModel, mode) -> None:
    if model.schema_version != SCHEMA_VERSION:
        raise ModelMismatch(f"model schema {model.schema_version!r} != {SCHEMA_VERSION!r}")
    mode = Mode(mode)
    want = {Mode.ML_CLASSIFIER: "classifier", Mode.ML_REGRESSOR: "regressor"}.get(mode)
    if want is None:
        raise ModelMismatch(f"mode {mode.value!r} does not use a model")
    if model.task != want:
        raise ModelMismatch(f"mode {mode.value!r} needs a {want}, got a {model.task}")


def predict_useful(model: TrainedModel, features, prev_prediction: float | None = None,
                   order: int | None = None) -> tuple[bool, float]:
    """Judge one cut; returns ``(useful, raw prediction)``.

    For a regressor the cut at pool order ``s > 1`` is useless only when its
    clamped prediction and the previous cut's are both 1 (within 1e-9).
    """
    x = features.as_array() if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
    pred = float(model.predict(x[None, :])[0])
    if model.task == "classifier":
        return bool(pred == 1), pred
    s = int(x[4]) if order is None else order
    if s <= 1 or prev_prediction is None:
        return True, pred
    useless = abs(pred - 1.0) <= RULE_ATOL and abs(prev_prediction - 1.0) <= RULE_ATOL
    return not useless, pred


def judge_cuts(model: TrainedModel, cuts: list[Cut]) -> list[bool]:
    """Verdicts for the cuts of one iteration, in pool order."""
    if not cuts:
        return []
    preds = model.predict(feature_matrix(cuts))
    if model.task == "classifier":
        return [bool(p == 1) for p in preds]
    out = []
    for s, p in enumerate(preds, start=1):
        if s == 1:
            out.append(True)
        else:
            prev = preds[s - 2]
            out.append(not (abs(p - 1.0) <= RULE_ATOL and abs(prev - 1.0) <= RULE_ATOL))
    return out


def recognition_rates(truth: np.ndarray, verdict: np.ndarray) -> tuple[float, float]:
    """Fractions of truly useful cuts judged useful and truly useless judged useless."""
    truth = np.asarray(truth, dtype=bool)
    verdict = np.asarray(verdict, dtype=bool)
    useful = float(np.mean(verdict[truth])) if truth.any() else math.nan
    useless = float(np.mean(~verdict[~truth])) if (~truth).any() else math.nan
    return useful, useless


def run_verdicts(run_result: RunResult) -> np.ndarray:
    """Model verdicts of a run in log order (kept flag when no model was used)."""
    return np.array([c.added if c.predicted_useful is None else c.predicted_useful for c in run_result.cuts],
                    dtype=bool)


# ---------------------------------------------------------------------------
# metrics


def roc_auc(labels, scores) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    labels = np.asarray(labels).astype(bool)
    n1, n0 = labels.sum(), (~labels).sum()
    if n1 == 0 or n0 == 0:
        raise SingleClass("AUC needs both classes")
    r = rankdata(np.asarray(scores, dtype=float))
    return float((r[labels].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc_curve(labels, scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(fpr, tpr, thresholds)`` over every distinct score, highest first."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(l)[distinct]
    fps = (distinct + 1) - tps
    tpr = np.r_[0.0, tps / max(1, l.sum())]
    fpr = np.r_[0.0, fps / max(1, (~l).sum())]
    return fpr, tpr, np.r_[np.inf, s[distinct]]


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination; 1.0 for a perfect fit of constant labels."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot
