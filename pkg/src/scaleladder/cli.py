"""Configuration-driven experiment runner.

Subcommands
    ladder      dump the per-level schedules (scales, budgets, temperatures,
                candidate-set sizes) as schedules.csv
    decompose   emit residual curves (psi_curves.csv) and the rung
                certificates for the configured target
    sample      draw and persist a dataset (dataset.csv + manifest.json)
    train       run multiscale entropic training; writes dataset, model.json,
                trace.json; honors --stop-after and --resume
    evaluate    measure risks and every bound for a trained model
                (risk_report.json, optional bounds_sweep.csv)
    verify      run the property suites; nonzero exit on any failure
    ratio       print the squared sample-complexity ratio for (r_bar, d)

Every run writes run_manifest.json (the fully resolved config) into its
output directory, and each CSV/JSON report gets a PNG rendering next to it.

Exit codes: 0 success, 1 property failure, 2 configuration error,
3 resource-cap error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import ConfigError, ResolvedExperiment, load_config, resolve_experiment
from .figures import (
    save_psi_curves_figure,
    save_risk_report_figure,
    save_schedules_figure,
    save_sweep_figure,
    save_trace_figure,
)
from .ladder import certify_rungs, psi_curve_rows
from .risk import bound_sweep_rows, build_risk_report, lambda_ratio
from .scales import format_float, generate_dataset, save_dataset
from .stepnet import (
    ENUMERATION_CAP,
    EnumerationTooLargeError,
    enumerate_weight_set,
    load_model,
    save_model,
)
from .training import TrainState, TrainingPlan, train_multiscale_entropic
from .verify import SUITES, run_suites

__all__ = ["main"]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def _prepare_out(exp: ResolvedExperiment, command: str, argv: list[str]) -> Path:
    out = exp.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_manifest.json", {"command": command, "argv": argv, "config": exp.echo})
    return out


def _schedule_rows(exp: ResolvedExperiment) -> list[dict]:
    rows = []
    for k in range(1, exp.ladder.d + 1):
        count = exp.set_sizes[k - 1]
        if count > ENUMERATION_CAP:
            raise EnumerationTooLargeError(
                f"level {k}: candidate set of {count} vectors exceeds the cap of {ENUMERATION_CAP}"
            )
        rows.append(
            {
                "k": k,
                "gamma_k": float(exp.ladder.gamma[k]),
                "rho_k": float(exp.rho[k - 1]),
                "lambda_bar_k": float(exp.schedule.lambda_bar[k - 1]),
                "lambda_k": float(exp.schedule.lambda_cum[k - 1]),
                "W_k_size": count,
            }
        )
    return rows


def cmd_ladder(exp: ResolvedExperiment, argv: list[str]) -> int:
    out = _prepare_out(exp, "ladder", argv)
    rows = _schedule_rows(exp)
    _write_csv(
        out / "schedules.csv",
        ["k", "gamma_k", "rho_k", "lambda_bar_k", "lambda_k", "W_k_size"],
        [[r["k"], r["gamma_k"], r["rho_k"], r["lambda_bar_k"], r["lambda_k"], r["W_k_size"]] for r in rows],
    )
    save_schedules_figure(rows, out / "schedules.png")
    print(f"wrote {out / 'schedules.csv'}")
    return 0


def cmd_decompose(exp: ResolvedExperiment, argv: list[str], points: int) -> int:
    if exp.bundle is None:
        raise ConfigError("decompose needs a target bundle (model.mode='tanh-target')")
    out = _prepare_out(exp, "decompose", argv)
    rows = psi_curve_rows(exp.bundle, exp.ladder.scale_list(), points=points)
    _write_csv(out / "psi_curves.csv", ["k", "x", "psi"], [[k, x, v] for k, x, v in rows])
    save_psi_curves_figure(rows, out / "psi_curves.png")
    certs = certify_rungs(exp.bundle, exp.ladder.scale_list(), grid_n=2000)
    _write_json(
        out / "rung_certificates.json",
        {
            "bundle": exp.bundle.name,
            "m1": exp.bundle.m1,
            "m2": exp.bundle.m2,
            "levels": [c.to_json_dict() for c in certs],
            "all_pass": all(c.passed for c in certs),
        },
    )
    print(f"wrote {out / 'psi_curves.csv'} ({len(rows)} rows)")
    return 0 if all(c.passed for c in certs) else 1


def _make_dataset(exp: ResolvedExperiment):
    return generate_dataset(exp.target_fn, exp.law, exp.n, exp.seed, exp.mode)


def cmd_sample(exp: ResolvedExperiment, argv: list[str]) -> int:
    out = _prepare_out(exp, "sample", argv)
    dataset = _make_dataset(exp)
    save_dataset(dataset, exp.law, out / "dataset.csv", out / "manifest.json")
    print(f"wrote {out / 'dataset.csv'} ({dataset.n} examples)")
    return 0


def cmd_train(exp: ResolvedExperiment, argv: list[str], resume_path: str | None) -> int:
    out = _prepare_out(exp, "train", argv)
    dataset = _make_dataset(exp)
    save_dataset(dataset, exp.law, out / "dataset.csv", out / "manifest.json")
    weight_sets = tuple(enumerate_weight_set(spec) for spec in exp.template.specs)
    plan = TrainingPlan(template=exp.template, weight_sets=weight_sets, schedule=exp.schedule)
    resume = None
    if resume_path is not None:
        resume = TrainState.from_json_dict(json.loads(Path(resume_path).read_text()))
    model, state = train_multiscale_entropic(
        plan, dataset, exp.seed, stop_after=exp.stop_after, resume=resume
    )
    _write_json(out / "trace.json", state.to_json_dict())
    save_trace_figure([t.to_json_dict() for t in state.traces], out / "train_trace.png")
    if model is not None:
        save_model(model, out / "model.json")
        print(f"wrote {out / 'model.json'} (all {len(state.sampled)} levels)")
    else:
        print(f"wrote {out / 'trace.json'} ({len(state.sampled)} of {exp.ladder.d} levels; resume with --resume)")
    return 0


def cmd_evaluate(exp: ResolvedExperiment, argv: list[str], model_path: str | None) -> int:
    out = _prepare_out(exp, "evaluate", argv)
    path = Path(model_path) if model_path else exp.out_dir / "model.json"
    model = load_model(path)
    if model.ladder != exp.ladder:
        raise ConfigError(f"model at {path} was trained on a different ladder than the config")
    report = build_risk_report(
        model,
        exp.reference,
        exp.target_fn,
        exp.law,
        exp.rho,
        exp.set_sizes,
        exp.n,
        exp.c1,
        schedule=exp.schedule,
        slack=exp.slack,
        method=exp.method,
        n_mc=exp.n_mc,
        seed=exp.seed,
    )
    report_dict = report.to_json_dict()
    _write_json(out / "risk_report.json", report_dict)
    save_risk_report_figure(report_dict, out / "risk_report.png")
    if exp.sweep_n:
        rows = bound_sweep_rows(exp.ladder, exp.rho, exp.set_sizes, exp.law.alpha, exp.c1 or 0.0, exp.sweep_n)
        _write_csv(
            out / "bounds_sweep.csv",
            ["n", "d", "beta", "alpha", "chained_opt", "erm", "risk_bound", "lambda_ratio"],
            [
                [r["n"], r["d"], r["beta"], r["alpha"], r["chained_opt"], r["erm"], r["risk_bound"], r["lambda_ratio"]]
                for r in rows
            ],
        )
        save_sweep_figure(rows, out / "bounds_sweep.png")
    print(f"wrote {out / 'risk_report.json'}")
    return 0


def cmd_verify(suite: str, seed: int, out_dir: str | None) -> int:
    names = sorted(SUITES) if suite == "all" else [suite]
    results, ok = run_suites(names, seed=seed)
    for r in results:
        state = "pass" if r.passed else "FAIL"
        print(f"[{state}] {r.suite}/{r.name}: {r.value:.3e} {r.comparison} {r.threshold:.3e}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(
            out / "verify_report.json",
            {"pass": ok, "seed": seed, "checks": [r.to_json_dict() for r in results]},
        )
        print(f"wrote {out / 'verify_report.json'}")
    return 0 if ok else 1


def cmd_ratio(r_bar: float, d: int, out_dir: str | None) -> int:
    value = lambda_ratio(r_bar, d)
    print(f"lambda_ratio(r_bar={format_float(r_bar)}, d={d}) = {format_float(value)}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "ratio.json", {"r_bar": r_bar, "d": d, "lambda_ratio": value})
    return 0


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="experiment config JSON")
    sub.add_argument("--out", default=None, help="output directory (overrides config)")
    sub.add_argument("--seed", type=int, default=None, help="seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scaleladder", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("ladder", "sample"):
        _add_config_flags(sub.add_parser(name))

    p = sub.add_parser("decompose")
    _add_config_flags(p)
    p.add_argument("--points", type=int, default=400, help="grid points per residual curve")

    p = sub.add_parser("train")
    _add_config_flags(p)
    p.add_argument("--stop-after", type=int, default=None, help="train only the first K levels")
    p.add_argument("--resume", default=None, help="trace.json of an interrupted run")

    p = sub.add_parser("evaluate")
    _add_config_flags(p)
    p.add_argument("--model", default=None, help="model.json path (default: <out>/model.json)")

    p = sub.add_parser("verify")
    p.add_argument("--suite", default="all", choices=sorted(SUITES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write verify_report.json here")

    p = sub.add_parser("ratio")
    p.add_argument("--rbar", type=float, required=True, help="radius ratio R/epsilon")
    p.add_argument("--d", type=int, required=True, help="number of levels")
    p.add_argument("--out", default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed, args.out)
        if args.command == "ratio":
            return cmd_ratio(args.rbar, args.d, args.out)
        config = load_config(args.config)
        stop_after = getattr(args, "stop_after", None)
        exp = resolve_experiment(config, seed=args.seed, out_dir=args.out, stop_after=stop_after)
        if args.command == "ladder":
            return cmd_ladder(exp, argv)
        if args.command == "decompose":
            return cmd_decompose(exp, argv, args.points)
        if args.command == "sample":
            return cmd_sample(exp, argv)
        if args.command == "train":
            return cmd_train(exp, argv, args.resume)
        if args.command == "evaluate":
            return cmd_evaluate(exp, argv, args.model)
        raise ConfigError(f"unknown command {args.command!r}")
    except EnumerationTooLargeError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
