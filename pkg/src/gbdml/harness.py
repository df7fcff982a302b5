"""Batch runs, reports and experiment scenarios."""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cut_ml import TrainedModel, recognition_rates, run_verdicts, shadow_label
from .d2d import D2DInstance, D2DParams, D2DProblem, enumerate_oracle, generate_instance
from .gbd import Mode, RunConfig, RunResult, run
from .problem import GBDError, Problem
from .synthetic import SyntheticInstance, SyntheticProblem, enumerate_synthetic, generate_synthetic

TIMING_COLUMNS = ("master_time", "primal_time", "total_time",
                  "mean_master_time", "median_master_time", "mean_primal_time",
                  "median_primal_time", "mean_total_time", "median_total_time", "speedup_vs_multi")


# ---------------------------------------------------------------------------
# instances


def instance_from_dict(d: dict):
    kind = d.get("problem_kind")
    if kind == "d2d":
        return D2DInstance.from_dict(d)
    if kind == "synthetic":
        return SyntheticInstance.from_dict(d)
    raise ValueError(f"unknown problem kind {kind!r}")


def problem_for(instance) -> Problem:
    if isinstance(instance, D2DInstance):
        return D2DProblem(instance)
    if isinstance(instance, SyntheticInstance):
        return SyntheticProblem(instance)
    raise TypeError(f"no problem class for {type(instance).__name__}")


def load_instance(path):
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def instance_paths(args: list[str]) -> list[Path]:
    """Expand directories into their sorted ``*.json`` files."""
    out = []
    for a in args:
        p = Path(a)
        out.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    return out


def oracle_optimum(problem: Problem):
    if isinstance(problem, D2DProblem):
        return enumerate_oracle(problem)
    if isinstance(problem, SyntheticProblem):
        return enumerate_synthetic(problem)
    raise TypeError("no oracle for this problem class")


def write_instances(instances, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, inst in enumerate(instances):
        path = out / f"instance_{i:04d}.json"
        path.write_text(inst.dumps() + "\n")
        paths.append(path)
    return paths


def make_instances(kind: str, count: int, seed: int, K: int = 5, L: int = 3, params: D2DParams | None = None,
                   n1: int = 3, n2: int = 6, infeasible_fraction: float = 0.25):
    """``count`` instances with seeds ``seed, seed + 1, ...``."""
    if kind == "d2d":
        return [generate_instance(K, L, params, seed + i) for i in range(count)]
    if kind == "synthetic":
        return [generate_synthetic(n1, n2, infeasible_fraction, seed + i) for i in range(count)]
    raise ValueError(f"unknown instance kind {kind!r}")


# ---------------------------------------------------------------------------
# runs and reports


@dataclass
class RunRecord:
    instance: str
    mode: str
    S: int
    status: str
    iterations: int = 0
    cumulative_cuts: int = 0
    master_time: float = 0.0
    primal_time: float = 0.0
    ubd: float = math.nan
    lbd: float = math.nan
    oracle: float = math.nan
    kept_optimality: int = 0
    discarded_optimality: int = 0
    kept_feasibility: int = 0
    discarded_feasibility: int = 0
    fallbacks: int = 0
    useful_total: int = 0
    useful_recognized: int = 0
    useless_total: int = 0
    useless_recognized: int = 0
    error: str = ""

    @property
    def total_time(self) -> float:
        return self.master_time + self.primal_time

    @property
    def optimal(self) -> bool:
        if math.isnan(self.oracle):
            return True
        return abs(self.ubd - self.oracle) <= 0.005 * abs(self.oracle) + 1e-12


def record_of(name: str, result: RunResult, truth=None) -> RunRecord:
    st = result.filter_stats
    rec = RunRecord(
        name, result.config.mode.value, result.config.pool_size, result.status,
        result.trace.iterations, result.trace.cumulative_cuts,
        result.trace.master_wallclock, result.trace.primal_wallclock,
        result.ubd, result.lbd,
        kept_optimality=st.kept_optimality, discarded_optimality=st.discarded_optimality,
        kept_feasibility=st.kept_feasibility, discarded_feasibility=st.discarded_feasibility,
        fallbacks=st.fallbacks,
    )
    if truth is not None:
        verdict = run_verdicts(result)
        rec.useful_total = int(truth.sum())
        rec.useful_recognized = int((verdict & truth).sum())
        rec.useless_total = int((~truth).sum())
        rec.useless_recognized = int((~verdict & ~truth).sum())
    return rec


def solve_batch(problems: list[Problem], names: list[str], config: RunConfig, shadow: bool = False,
                oracle: bool = False) -> tuple[list[RunRecord], list[RunResult | None]]:
    """Run every instance; failures are recorded and the batch continues."""
    records, results = [], []
    for name, problem in sorted(zip(names, problems), key=lambda t: t[0]):
        try:
            res = run(problem, config)
        except GBDError as exc:
            records.append(RunRecord(name, config.mode.value, config.pool_size, "error",
                                     error=f"{type(exc).__name__}: {exc}"))
            results.append(None)
            continue
        truth = shadow_label(problem, res) if shadow else None
        rec = record_of(name, res, truth)
        if oracle:
            rec.oracle = float(oracle_optimum(problem)[0])
        records.append(rec)
        results.append(res)
    return records, results


@dataclass
class BenchReport:
    mode: str
    S: int
    runs: int
    failures: int
    mean_iterations: float
    median_iterations: float
    mean_cuts: float
    median_cuts: float
    mean_master_time: float
    median_master_time: float
    mean_primal_time: float
    median_primal_time: float
    mean_total_time: float
    median_total_time: float
    useful_recognition: float = math.nan
    useless_recognition: float = math.nan
    optimal_fraction: float = math.nan
    speedup_vs_multi: float = math.nan
    normalized_iterations: float = math.nan
    normalized_cuts: float = math.nan
    fallbacks: int = 0
    discarded: int = 0

    @classmethod
    def from_records(cls, records: list[RunRecord]) -> BenchReport:
        ok = [r for r in records if r.status != "error"]
        head = records[0] if records else RunRecord("", "", 0, "")

        def agg(values):
            return (statistics.fmean(values), statistics.median(values)) if values else (math.nan, math.nan)

        it = agg([r.iterations for r in ok])
        cu = agg([r.cumulative_cuts for r in ok])
        mt = agg([r.master_time for r in ok])
        pt = agg([r.primal_time for r in ok])
        tt = agg([r.total_time for r in ok])
        ut = sum(r.useful_total for r in ok)
        lt = sum(r.useless_total for r in ok)
        return cls(
            head.mode, head.S, len(records), len(records) - len(ok),
            it[0], it[1], cu[0], cu[1], mt[0], mt[1], pt[0], pt[1], tt[0], tt[1],
            useful_recognition=sum(r.useful_recognized for r in ok) / ut if ut else math.nan,
            useless_recognition=sum(r.useless_recognized for r in ok) / lt if lt else math.nan,
            optimal_fraction=statistics.fmean([r.optimal for r in ok]) if ok else math.nan,
            fallbacks=sum(r.fallbacks for r in ok),
            discarded=sum(r.discarded_optimality + r.discarded_feasibility for r in ok),
        )

    def compare(self, multi: BenchReport | None = None, single: BenchReport | None = None) -> BenchReport:
        """Fill speedup and normalized columns against baseline reports."""
        if multi is not None:
            self.speedup_vs_multi = _ratio(multi.mean_total_time, self.mean_total_time)
            self.normalized_iterations = _ratio(self.mean_iterations, multi.mean_iterations)
        if single is not None:
            self.normalized_cuts = _ratio(self.mean_cuts, single.mean_cuts)
        return self


def _ratio(a: float, b: float) -> float:
    return a / b if b else math.nan


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records_csv(records: list[RunRecord], path, timing: bool = True) -> None:
    names = [f.name for f in fields(RunRecord) if timing or f.name not in TIMING_COLUMNS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            d = asdict(r)
            w.writerow([_fmt(d[n]) for n in names])


def write_reports_csv(reports: list[BenchReport], path, timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(reports_csv_text(reports, timing))


def reports_csv_text(reports: list[BenchReport], timing: bool = True) -> str:
    names = [f.name for f in fields(BenchReport) if timing or f.name not in TIMING_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in reports:
        d = asdict(r)
        w.writerow([_fmt(d[n]) for n in names])
    return buf.getvalue()


def read_reports_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            if k == "mode":
                parsed[k] = v
            elif k in ("S", "runs", "failures", "fallbacks", "discarded"):
                parsed[k] = int(v)
            else:
                parsed[k] = float(v)
        out.append(parsed)
    return out


def format_reports(reports: list[BenchReport], title: str = "") -> str:
    cols = [
        ("mode", "mode", "{}"), ("S", "S", "{}"), ("runs", "runs", "{}"), ("fail", "failures", "{}"),
        ("iters", "mean_iterations", "{:.2f}"), ("iters~", "median_iterations", "{:.1f}"),
        ("cuts", "mean_cuts", "{:.2f}"), ("master s", "mean_master_time", "{:.4f}"),
        ("primal s", "mean_primal_time", "{:.4f}"), ("useful", "useful_recognition", "{:.2%}"),
        ("useless", "useless_recognition", "{:.2%}"), ("optimal", "optimal_fraction", "{:.0%}"),
        ("speedup", "speedup_vs_multi", "{:.2f}x"), ("norm it", "normalized_iterations", "{:.3f}"),
        ("norm cuts", "normalized_cuts", "{:.3f}"),
    ]
    rows = [[h for h, _, _ in cols]]
    for r in reports:
        row = []
        for _, attr, fmt in cols:
            v = getattr(r, attr)
            row.append("-" if isinstance(v, float) and math.isnan(v) else fmt.format(v))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
    lines = [title] if title else []
    for r in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def write_convergence_csv(names: list[str], results: list[RunResult | None], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", "iteration", "ubd", "lbd", "cuts"])
        for name, res in zip(names, results):
            if res is None:
                continue
            for i, (u, l, c) in enumerate(zip(res.trace.ubd, res.trace.lbd, res.trace.cuts_per_iteration), 1):
                w.writerow([name, i, repr(u), repr(l), c])


def cut_log_text(result: RunResult) -> str:
    """Deterministic text form of a run's cut log."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "iteration", "order", "y", "repeat", "violation", "const", "added", "coeff"])
    for c in result.cuts:
        w.writerow([
            c.kind.value, c.gen_iteration, c.gen_order, "".join(str(int(v)) for v in c.gen_y),
            c.repeat_count, repr(float(c.violation)), repr(float(c.const_term)), int(c.added),
            " ".join(repr(float(v)) for v in c.coeff_y),
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# experiment protocols


def compare_modes(problems: list[Problem], names: list[str], S: int = 8, models: dict | None = None,
                  tolerance: float = 0.005, max_iterations: int = 10_000, seed: int = 0,
                  oracle: bool = False) -> dict[str, BenchReport]:
    """Single-cut, multi-cut and each ML mode on one instance set."""
    models = models or {}
    out = {}
    base = dict(tolerance=tolerance, max_iterations=max_iterations, seed=seed)
    single, _ = solve_batch(problems, names, RunConfig(Mode.SINGLE_CUT, 1, **base), oracle=oracle)
    multi, _ = solve_batch(problems, names, RunConfig(Mode.MULTI_CUT, S, **base), oracle=oracle)
    out["single"] = BenchReport.from_records(single)
    out["multi"] = BenchReport.from_records(multi)
    for mode, model in models.items():
        recs, _ = solve_batch(problems, names, RunConfig(Mode(mode), S, model=model, **base), shadow=True,
                              oracle=oracle)
        out[mode] = BenchReport.from_records(recs)
    for rep in out.values():
        rep.compare(out["multi"], out["single"])
    return out


@dataclass
class Scenario:
    name: str
    K: int = 5
    L: int = 3
    params: D2DParams = field(default_factory=D2DParams)


def default_scenarios() -> list[Scenario]:
    return [
        Scenario("base"),
        Scenario("size-4x2", 4, 2),
        Scenario("size-6x3", 6, 3),
        Scenario("radius-750", params=D2DParams(cell_radius=750.0)),
        Scenario("pcmax-23dBm", params=D2DParams(P_C_max_dbm=23.0)),
        Scenario("rcmin-1", params=D2DParams(R_C_min=1.0)),
        Scenario("sum-rate", params=D2DParams(objective_kind="sum")),
        Scenario("weighted-sum-rate", params=D2DParams(objective_kind="weighted")),
    ]


def generalize(model: TrainedModel, scenarios: list[Scenario], count: int = 10, seed: int = 0, S: int = 8,
               oracle: bool = True) -> list[tuple[str, BenchReport]]:
    """Evaluate a trained model on size, parameter and objective variants."""
    mode = "ml-class" if model.task == "classifier" else "ml-reg"
    rows = []
    for sc in scenarios:
        insts = [generate_instance(sc.K, sc.L, sc.params, seed + i) for i in range(count)]
        problems = [D2DProblem(i) for i in insts]
        names = [f"{sc.name}-{i:04d}" for i in range(count)]
        reps = compare_modes(problems, names, S, {mode: model}, seed=seed, oracle=oracle)
        rows.append((sc.name, reps[mode]))
    return rows


def recognition_from_runs(problems, results) -> tuple[float, float]:
    truth, verdict = [], []
    for p, r in zip(problems, results):
        if r is None:
            continue
        truth.append(shadow_label(p, r))
        verdict.append(run_verdicts(r))
    if not truth:
        return math.nan, math.nan
    return recognition_rates(np.concatenate(truth), np.concatenate(verdict))
