"""Command-line entry point: ``gbdml <command> [options]``."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .cut_ml import (
    CutDataset,
    TrainedModel,
    collect_classifier_data,
    collect_regressor_data,
    r2_score,
    roc_auc,
    roc_curve,
    split_by_run,
    train_classifier,
    train_regressor,
    undersample,
)
from .d2d import D2DParams
from .gbd import WORKERS_ENV, Mode, RunConfig


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--S", type=int, default=8, help="solution pool size")
    p.add_argument("--theta", type=float, default=1.0, help="classifier label threshold")
    p.add_argument("--tol", type=float, default=0.005, help="relative bound gap")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--workers", type=int, default=None, help=f"primal solve threads (default ${WORKERS_ENV} or 1)")


def _d2d_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--L", type=int, default=3)
    p.add_argument("--radius", type=float, default=500.0)
    p.add_argument("--pc-max-dbm", type=float, default=20.0)
    p.add_argument("--pd-max-dbm", type=float, default=20.0)
    p.add_argument("--rc-min", type=float, default=2.0)
    p.add_argument("--objective", choices=("maxmin", "sum", "weighted"), default="maxmin")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gbdml", description="Benders decomposition with learned cut filtering")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write random instances")
    _common(g)
    _d2d_params(g)
    g.add_argument("--kind", choices=("d2d", "synthetic"), default="d2d")
    g.add_argument("--count", type=int, default=50)
    g.add_argument("--n1", type=int, default=3)
    g.add_argument("--n2", type=int, default=6)
    g.add_argument("--infeasible-fraction", type=float, default=0.25)
    g.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("solve", help="solve instances and write a report")
    _common(s)
    s.add_argument("instances", nargs="+")
    s.add_argument("--mode", choices=[m.value for m in Mode], default="multi")
    s.add_argument("--model")
    s.add_argument("--oracle", action="store_true", help="also check against enumeration")
    s.add_argument("--out", required=True, help="report path prefix")

    c = sub.add_parser("collect", help="collect a labeled cut dataset")
    _common(c)
    c.add_argument("instances", nargs="+")
    c.add_argument("--task", choices=("class", "reg"), default="class")
    c.add_argument("--out", required=True, help="dataset CSV")

    t = sub.add_parser("train", help="train a cut filter")
    t.add_argument("dataset")
    t.add_argument("--kind", choices=("logreg", "svm", "extratrees", "linear"), default="logreg")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--undersample", type=float, default=1.0, help="majority:minority ratio (0 disables)")
    t.add_argument("--class-weights", default="2:1", help="useful:useless")
    t.add_argument("--test-fraction", type=float, default=0.3, help="runs held out for evaluation")
    t.add_argument("--out", required=True, help="model JSON")

    e = sub.add_parser("eval", help="evaluate a model against multi-cut and single-cut")
    _common(e)
    e.add_argument("instances", nargs="+")
    e.add_argument("--model", required=True)
    e.add_argument("--oracle", action="store_true")
    e.add_argument("--out", required=True, help="report path prefix")

    z = sub.add_parser("generalize", help="evaluate a model on scenario variants")
    _common(z)
    z.add_argument("--model", required=True)
    z.add_argument("--count", type=int, default=10)
    z.add_argument("--scenarios", nargs="*", help="subset of scenario names")
    z.add_argument("--no-oracle", action="store_true")
    z.add_argument("--out", required=True, help="report path prefix")

    o = sub.add_parser("oracle", help="brute-force optimum of each instance")
    o.add_argument("instances", nargs="+")
    o.add_argument("--out", help="CSV output (stdout if omitted)")
    return ap


def _config(args, mode: str, model=None) -> RunConfig:
    S = 1 if mode == Mode.SINGLE_CUT.value else args.S
    return RunConfig(Mode(mode), S, args.tol, args.max_iters, args.seed, model, workers=args.workers)


def _load(paths):
    files = harness.instance_paths(paths)
    problems = [harness.problem_for(harness.load_instance(p)) for p in files]
    return files, problems


def cmd_gen(args) -> int:
    params = D2DParams(cell_radius=args.radius, P_C_max_dbm=args.pc_max_dbm, P_D_max_dbm=args.pd_max_dbm,
                       R_C_min=args.rc_min, objective_kind=args.objective)
    insts = harness.make_instances(args.kind, args.count, args.seed, args.K, args.L, params,
                                   args.n1, args.n2, args.infeasible_fraction)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    paths = harness.write_instances(insts, args.out)
    print(f"wrote {len(paths)} instances to {args.out}")
    return 0


def _write_report(prefix: str, reports, title: str) -> None:
    harness.write_reports_csv(reports, f"{prefix}.csv")
    text = harness.format_reports(reports, title)
    Path(f"{prefix}.txt").write_text(text)
    print(text, end="")


def cmd_solve(args) -> int:
    files, problems = _load(args.instances)
    model = TrainedModel.load(args.model) if args.model else None
    if args.mode in (Mode.ML_CLASSIFIER.value, Mode.ML_REGRESSOR.value) and model is None:
        print("ML modes need --model", file=sys.stderr)
        return 2
    names = [f.stem for f in files]
    ml = args.mode in (Mode.ML_CLASSIFIER.value, Mode.ML_REGRESSOR.value)
    records, results = harness.solve_batch(problems, names, _config(args, args.mode, model), shadow=ml,
                                           oracle=args.oracle)
    harness.write_records_csv(records, f"{args.out}_runs.csv")
    harness.write_convergence_csv([r.instance for r in records], results, f"{args.out}_convergence.csv")
    _write_report(args.out, [harness.BenchReport.from_records(records)], f"mode={args.mode} S={args.S}")
    for r in records:
        if r.error:
            print(f"{r.instance}: {r.error}", file=sys.stderr)
    return 0


def cmd_collect(args) -> int:
    _, problems = _load(args.instances)
    kw = dict(tolerance=args.tol, max_iterations=args.max_iters, workers=args.workers)
    if args.task == "class":
        data, _ = collect_classifier_data(problems, args.S, args.theta, args.seed, **kw)
    else:
        data, _ = collect_regressor_data(problems, args.S, args.seed, **kw)
    data.write_csv(args.out)
    print(f"wrote {len(data)} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    data = CutDataset.read_csv(args.dataset)
    if args.test_fraction > 0:
        train, test = split_by_run(data, args.test_fraction, args.seed)
    else:
        train, test = data, data
    out = Path(args.out)
    if args.kind in ("logreg", "svm"):
        if args.undersample > 0:
            train = undersample(train, args.undersample, args.seed)
        useful, useless = (float(v) for v in args.class_weights.split(":"))
        model = train_classifier(train, args.kind, (useful, useless), args.seed)
        scores = model.score(test.X)
        auc = roc_auc(test.y, scores)
        fpr, tpr, thr = roc_curve(test.y, scores)
        roc_path = out.with_suffix(".roc.csv")
        with open(roc_path, "w") as fh:
            fh.write("fpr,tpr,threshold\n")
            for a, b, c in zip(fpr, tpr, thr):
                fh.write(f"{a!r},{b!r},{c!r}\n")
        print(f"{args.kind}: held-out ROC AUC = {auc:.4f} (curve in {roc_path})")
    else:
        model = train_regressor(train, args.kind, args.seed)
        r2 = r2_score(test.y, model.predict(test.X))
        r2_train = r2_score(train.y, model.predict(train.X))
        print(f"{args.kind}: held-out R2 = {r2:.4f}, training R2 = {r2_train:.4f}")
    model.save(out)
    return 0


def cmd_eval(args) -> int:
    files, problems = _load(args.instances)
    model = TrainedModel.load(args.model)
    mode = "ml-class" if model.task == "classifier" else "ml-reg"
    reps = harness.compare_modes(problems, [f.stem for f in files], args.S, {mode: model}, args.tol,
                                 args.max_iters, args.seed, args.oracle)
    _write_report(args.out, list(reps.values()), f"evaluation of {args.model}")
    return 0


def cmd_generalize(args) -> int:
    model = TrainedModel.load(args.model)
    scenarios = harness.default_scenarios()
    if args.scenarios:
        unknown = set(args.scenarios) - {s.name for s in scenarios}
        if unknown:
            print(f"unknown scenarios: {sorted(unknown)}", file=sys.stderr)
            return 2
        scenarios = [s for s in scenarios if s.name in args.scenarios]
    rows = harness.generalize(model, scenarios, args.count, args.seed, args.S, not args.no_oracle)
    reports = []
    for name, rep in rows:
        rep.mode = f"{name}:{rep.mode}"
        reports.append(rep)
    _write_report(args.out, reports, "generalization")
    return 0


def cmd_oracle(args) -> int:
    files, problems = _load(args.instances)
    lines = ["instance,objective,assignment"]
    for f, p in zip(files, problems):
        obj, y = harness.oracle_optimum(p)
        lines.append(f"{f.stem},{obj!r},{''.join(str(int(v)) for v in np.ravel(y))}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


COMMANDS = {
    "gen": cmd_gen, "solve": cmd_solve, "collect": cmd_collect, "train": cmd_train,
    "eval": cmd_eval, "generalize": cmd_generalize, "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None:
        os.environ[WORKERS_ENV] = str(args.workers)
    return COMMANDS[args.command](args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
