"""Experiment configuration: JSON schema, defaults, and resolution.

A config file is a JSON object with the sections below (every key optional
unless marked; defaults in parentheses):

    ladder   epsilon*, beta*, d*
    law      alpha (1.0)
    model    tau (8), eta (0.05)            scalar or per-level list
             rho ("auto")                   "auto" = the norm-budget schedule,
                                            or an explicit per-level list
             span ("auto")                  "auto" = m1 * R, or a number
             base_slope ("f-prime-0")       "f-prime-0" = target's slope at 0,
                                            or a number
             mode ("tanh-target")           "tanh-target" | "planted-teacher"
             bundle ("tanh")                "tanh" | "scaled-sinh"
             bundle_alpha (1.0)             scaled-sinh shape
             constants (null)               {"m1","c1","c2"}; required for
                                            planted mode when rho/span are
                                            "auto" or bounds are evaluated
             teacher_seed (1234)            planted-teacher weight draw
    train    n*, seed (0), lambda ("auto")  "auto" = bound-minimizing gaps,
                                            or an explicit per-level list
             stop_after (null)
    eval     method ("quadrature"), n_mc (100000), trials (1),
             slack ("auto"), sweep_n (null)
    out      directory ("runs/out")

"auto" slack is d * approx_error_bound in tanh-target mode and 0 in
planted-teacher mode. Resolution expands every default and derived
quantity into a flat echo dict; runs write it out as run_manifest.json so
any output directory reproduces bit-exactly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .ladder import DiffeoBundle, scaled_sinh_bundle, tanh_bundle
from .rng import substream
from .scales import PowerLaw, ScaleLadder, build_ladder, power_law
from .stepnet import (
    HierarchicalModel,
    LevelSpec,
    approx_error_bound,
    lattice_ball_count,
    level_norm_budgets,
    random_weight_vector,
    readout_array,
    riemann_reference_model,
)
from .training import ModelTemplate, TemperatureSchedule, temperature_schedule

__all__ = ["ConfigError", "ResolvedExperiment", "load_config", "resolve_experiment", "DEFAULTS"]


class ConfigError(ValueError):
    """The configuration is structurally or semantically invalid."""


DEFAULTS: dict = {
    "ladder": {},
    "law": {"alpha": 1.0},
    "model": {
        "tau": 8,
        "eta": 0.05,
        "rho": "auto",
        "span": "auto",
        "base_slope": "f-prime-0",
        "mode": "tanh-target",
        "bundle": "tanh",
        "bundle_alpha": 1.0,
        "constants": None,
        "teacher_seed": 1234,
    },
    "train": {"seed": 0, "lambda": "auto", "stop_after": None},
    "eval": {"method": "quadrature", "n_mc": 100_000, "trials": 1, "slack": "auto", "sweep_n": None},
    "out": {"directory": "runs/out"},
}

_REQUIRED = {"ladder": ("epsilon", "beta", "d"), "train": ("n",)}


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _merge_defaults(config: dict) -> dict:
    merged = copy.deepcopy(DEFAULTS)
    for section, values in config.items():
        if section not in merged:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in values.items():
            if section in _REQUIRED and key in _REQUIRED[section]:
                merged[section][key] = value
            elif key in merged[section]:
                merged[section][key] = value
            else:
                raise ConfigError(f"unknown key {section}.{key}")
    for section, keys in _REQUIRED.items():
        for key in keys:
            if key not in merged[section]:
                raise ConfigError(f"missing required key {section}.{key}")
    return merged


def _per_level(value, d: int, name: str) -> list:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [value] * d
    if isinstance(value, list):
        if len(value) != d:
            raise ConfigError(f"model.{name} list must have {d} entries")
        return list(value)
    raise ConfigError(f"model.{name} must be a number or a list of {d} numbers")


@dataclass(frozen=True)
class ResolvedExperiment:
    """A config with every default expanded and every object constructed."""

    echo: dict
    ladder: ScaleLadder
    law: PowerLaw
    template: ModelTemplate
    rho: tuple[float, ...]
    set_sizes: tuple[int, ...]
    schedule: TemperatureSchedule
    target_fn: Callable = field(repr=False)
    reference: HierarchicalModel
    c1: float | None
    slack: float
    n: int
    seed: int
    stop_after: int | None
    mode: str
    method: str
    n_mc: int
    trials: int
    sweep_n: tuple[int, ...] | None
    out_dir: Path
    bundle: DiffeoBundle | None = field(default=None, repr=False)


def resolve_experiment(
    config: dict,
    seed: int | None = None,
    out_dir: str | None = None,
    stop_after: int | None = None,
) -> ResolvedExperiment:
    """Validate, expand defaults, and build every object an experiment needs.

    ``seed``, ``out_dir`` and ``stop_after`` override the config when given
    (the CLI flags).
    """
    cfg = _merge_defaults(config)

    lad = cfg["ladder"]
    try:
        ladder = build_ladder(float(lad["epsilon"]), float(lad["beta"]), int(lad["d"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ladder: {exc}") from exc
    d = ladder.d

    try:
        law = power_law(float(cfg["law"]["alpha"]), ladder)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid law: {exc}") from exc

    model_cfg = cfg["model"]
    mode = model_cfg["mode"]
    if mode not in ("tanh-target", "planted-teacher"):
        raise ConfigError(f"unknown model.mode {mode!r}")

    bundle = None
    if mode == "tanh-target":
        if model_cfg["bundle"] == "tanh":
            bundle = tanh_bundle(radius=ladder.radius)
        elif model_cfg["bundle"] == "scaled-sinh":
            bundle = scaled_sinh_bundle(alpha=float(model_cfg["bundle_alpha"]), radius=ladder.radius)
        else:
            raise ConfigError(f"unknown model.bundle {model_cfg['bundle']!r}")

    constants = model_cfg["constants"]
    if constants is not None:
        try:
            m1, c1, c2 = float(constants["m1"]), float(constants["c1"]), float(constants["c2"])
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError("model.constants must provide numeric m1, c1, c2") from exc
    elif bundle is not None:
        m1, c1, c2 = bundle.m1, bundle.c1, bundle.c2
    else:
        m1 = c1 = c2 = None

    taus = [int(t) for t in _per_level(model_cfg["tau"], d, "tau")]
    etas = [float(e) for e in _per_level(model_cfg["eta"], d, "eta")]

    if model_cfg["span"] == "auto":
        if m1 is None:
            raise ConfigError("model.span='auto' needs model.constants or a target bundle")
        span = m1 * ladder.radius
    else:
        span = float(model_cfg["span"])
        if span <= 0:
            raise ConfigError("model.span must be positive")

    if model_cfg["rho"] == "auto":
        if m1 is None:
            raise ConfigError("model.rho='auto' needs model.constants or a target bundle")
        rho = tuple(float(r) for r in level_norm_budgets(ladder, m1, c1, c2, taus, etas))
    else:
        rho = tuple(float(r) for r in _per_level(model_cfg["rho"], d, "rho"))

    base_slope = model_cfg["base_slope"]
    if base_slope == "f-prime-0":
        if bundle is None:
            raise ConfigError("base_slope='f-prime-0' needs a target bundle (tanh-target mode)")
        base_slope = float(bundle.df(0.0))
    else:
        try:
            base_slope = float(base_slope)
        except (TypeError, ValueError) as exc:
            raise ConfigError("model.base_slope must be a number or 'f-prime-0'") from exc

    specs = tuple(
        LevelSpec(tau=taus[k], eta=etas[k], rho=rho[k], span=span) for k in range(d)
    )
    template = ModelTemplate(ladder=ladder, base_slope=base_slope, specs=specs)
    set_sizes = tuple(lattice_ball_count(s.tau + 1, s.budget_units) for s in specs)
    if any(size < 2 for size in set_sizes):
        raise ConfigError(
            f"candidate sets of sizes {set_sizes} are degenerate; raise rho or lower eta"
        )

    train_cfg = cfg["train"]
    n = int(train_cfg["n"])
    if n < 1:
        raise ConfigError("train.n must be at least 1")
    run_seed = int(train_cfg["seed"]) if seed is None else int(seed)
    run_stop = train_cfg["stop_after"] if stop_after is None else stop_after
    if run_stop is not None:
        run_stop = int(run_stop)
        if not 1 <= run_stop <= d:
            raise ConfigError(f"train.stop_after must lie in 1..{d}")

    if train_cfg["lambda"] == "auto":
        schedule = temperature_schedule(ladder, rho, n, set_sizes)
    elif isinstance(train_cfg["lambda"], list):
        if len(train_cfg["lambda"]) != d:
            raise ConfigError(f"train.lambda list must have {d} entries")
        schedule = TemperatureSchedule(tuple(float(v) for v in train_cfg["lambda"]))
    else:
        raise ConfigError("train.lambda must be 'auto' or a list of gaps")

    if mode == "tanh-target":
        reference = riemann_reference_model(bundle, ladder, specs, base_slope=base_slope)
        target_fn = bundle.f
    else:
        teacher_rng = substream(int(model_cfg["teacher_seed"]), "teacher")
        weights = tuple(random_weight_vector(spec, teacher_rng) for spec in specs)
        reference = template.build(weights)
        target_fn = lambda xs: readout_array(reference, np.asarray(xs, dtype=np.float64))

    eval_cfg = cfg["eval"]
    method = eval_cfg["method"]
    if method not in ("quadrature", "monte-carlo"):
        raise ConfigError(f"unknown eval.method {method!r}")
    slack = eval_cfg["slack"]
    if slack == "auto":
        if mode == "tanh-target":
            slack = float(d * max(approx_error_bound(s.tau, s.eta, span, c2) for s in specs))
        else:
            slack = 0.0
    else:
        slack = float(slack)
    sweep_n = eval_cfg["sweep_n"]
    if sweep_n is not None:
        sweep_n = tuple(int(v) for v in sweep_n)

    out_directory = Path(out_dir if out_dir is not None else cfg["out"]["directory"])

    echo = copy.deepcopy(cfg)
    echo["train"]["seed"] = run_seed
    echo["train"]["stop_after"] = run_stop
    echo["out"]["directory"] = str(out_directory)
    echo["resolved"] = {
        "radius": ladder.radius,
        "gamma": [float(g) for g in ladder.gamma],
        "rho": list(rho),
        "span": span,
        "base_slope": base_slope,
        "tau": taus,
        "eta": etas,
        "set_sizes": list(set_sizes),
        "lambda_bar": list(schedule.lambda_bar),
        "lambda": list(schedule.lambda_cum),
        "constants": None if m1 is None else {"m1": m1, "c1": c1, "c2": c2},
        "slack": slack,
    }

    return ResolvedExperiment(
        echo=echo,
        ladder=ladder,
        law=law,
        template=template,
        rho=rho,
        set_sizes=set_sizes,
        schedule=schedule,
        target_fn=target_fn,
        reference=reference,
        c1=c1,
        slack=slack,
        n=n,
        seed=run_seed,
        stop_after=run_stop,
        mode=mode,
        method=method,
        n_mc=int(eval_cfg["n_mc"]),
        trials=int(eval_cfg["trials"]),
        sweep_n=sweep_n,
        out_dir=out_directory,
        bundle=bundle,
    )
