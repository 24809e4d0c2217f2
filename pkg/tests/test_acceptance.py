"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
margins. Every tolerance here is pinned; nothing is calibrated at runtime.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from scaleladder.cli import main as cli_main
from scaleladder.config import resolve_experiment
from scaleladder.ladder import (
    LadderSpec,
    certify_linearization,
    certify_rungs,
    psi,
    psi_domain,
    psi_prime,
    tanh_bundle,
    tanh_psi_closed_form,
)
from scaleladder.risk import (
    chained_risk,
    lambda_ratio,
    optimized_chained_bound,
    powerlaw_factor,
    risk_transfer_check,
)
from scaleladder.rng import substream
from scaleladder.scales import (
    build_ladder,
    generate_dataset,
    power_law,
    sample_power_law,
    scale_indices,
    scale_invariance_check,
    scale_mass,
)
from scaleladder.stepnet import (
    LevelSpec,
    approx_error_bound,
    discretize_weights,
    enumerate_weight_set,
    level_norm_budgets,
    model_to_json_dict,
    random_weight_vector,
    readout_array,
    readout_counted,
    riemann_reference_model,
    riemann_weights,
    step_net_eval,
)
from scaleladder.training import (
    TrainingPlan,
    ModelTemplate,
    congruency_gap,
    temperature_schedule,
    train_multiscale_entropic,
)
from scaleladder.verify import congruency_demo_instance, entropy_suite

REPO = Path(__file__).resolve().parent.parent


def _report(num, name, passed, detail):
    print(f"ACCEPTANCE {num:02d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"criterion {num}: {name}: {detail}"


def test_acceptance_01_lambda_ratio():
    start = time.perf_counter()
    value = lambda_ratio(10.0, 20)
    elapsed = time.perf_counter() - start
    ok = abs(value - 0.2648) <= 5e-4 and elapsed < 1.0
    _report(1, "lambda ratio", ok, f"value={value:.6f} (target 0.2648 +/- 0.0005), {elapsed:.3f}s")


def test_acceptance_02_psi_closed_form_and_figure_data(tmp_path):
    bundle = tanh_bundle(1.0)
    spec = LadderSpec.geometric(2.0, 5)
    worst = 0.0
    for k in range(1, 6):
        g_prev, g_next = spec.scales[k - 1], spec.scales[k]
        lo, hi = psi_domain(bundle, g_prev)
        xs = np.linspace(lo, hi, 1000)
        worst = max(
            worst,
            float(np.max(np.abs(psi(bundle, g_prev, g_next, xs) - tanh_psi_closed_form(g_prev, xs)))),
        )
    cfg = json.loads((REPO / "configs" / "figure1.json").read_text())
    cfg["out"]["directory"] = str(tmp_path / "fig")
    cfg_path = tmp_path / "figure1.json"
    cfg_path.write_text(json.dumps(cfg))
    code = cli_main(["decompose", "--config", str(cfg_path)])
    emitted = (tmp_path / "fig" / "psi_curves.csv").exists()
    ok = worst < 1e-10 and code == 0 and emitted
    _report(2, "tanh residual closed form", ok, f"max|diff|={worst:.3e} (<1e-10), curves emitted={emitted}")


def test_acceptance_03_rung_certificates():
    start = time.perf_counter()
    bundle = tanh_bundle(1.0)
    certs = certify_rungs(bundle, LadderSpec.geometric(2.0, 5), grid_n=4000)
    elapsed = time.perf_counter() - start
    lip_margin = min(c.lip_bound - c.lip_est for c in certs)
    smooth_margin = min(c.smooth_bound - c.smooth_est for c in certs)
    ok = all(c.passed for c in certs) and elapsed < 30.0
    _report(
        3,
        "rung regularity certificates",
        ok,
        f"min lip margin={lip_margin:.3e}, min smooth margin={smooth_margin:.3e}, {elapsed:.2f}s",
    )


def test_acceptance_04_linearization_certificates():
    bundle = tanh_bundle(1.0)
    margins = []
    for gamma in (2.0**-5, 2.0**-3):
        cert = certify_linearization(bundle, gamma, grid_n=4000)
        margins.append(cert.bound - cert.lip_est)
    ok = all(m >= 0 for m in margins)
    _report(4, "dilation linearization certificates", ok, f"margins={[f'{m:.3e}' for m in margins]}")


def test_acceptance_05_congruency_oracle():
    start = time.perf_counter()
    plan, dataset = congruency_demo_instance(d=2, n=8)
    report = congruency_gap(plan, dataset, trials=100, seed=0)
    elapsed = time.perf_counter() - start
    minimality = report.objective_at_star <= report.sampled_objective_min + 1e-10
    ok = report.max_gap < 1e-9 and minimality and elapsed < 10.0
    _report(
        5,
        "congruency oracle (d=2, |W|=3, n=8)",
        ok,
        f"max gap={report.max_gap:.3e} (<1e-9), minimality={minimality}, {elapsed:.2f}s",
    )


def test_acceptance_06_entropy_identities():
    results = {r.name: r for r in entropy_suite(seed=0)}
    checks = [
        ("chain_rule_max_dev", 1e-12),
        ("entropy_combination_max_dev", 1e-12),
        ("gibbs_variational_constancy", 1e-10),
        ("kolmogorov_sandwich_violation", 1e-12),
    ]
    ok = True
    details = []
    for name, threshold in checks:
        r = results[name]
        ok = ok and r.passed and r.threshold == threshold
        details.append(f"{name}={r.value:.2e}")
    _report(6, "entropy-kit identities", ok, ", ".join(details))


def test_acceptance_07_chained_risk_bound():
    start = time.perf_counter()
    cfg = json.loads((REPO / "configs" / "planted_small.json").read_text())
    exp = resolve_experiment(cfg)
    weight_sets = tuple(enumerate_weight_set(spec) for spec in exp.template.specs)
    plan = TrainingPlan(template=exp.template, weight_sets=weight_sets, schedule=exp.schedule)
    bound = optimized_chained_bound(exp.ladder.gamma[1:], exp.rho, exp.set_sizes, exp.n)
    values = []
    for trial in range(50):
        dataset = generate_dataset(exp.target_fn, exp.law, exp.n, 1000 + trial, exp.mode)
        model, _ = train_multiscale_entropic(plan, dataset, seed=trial)
        result = chained_risk(model, exp.reference, exp.target_fn, exp.law, method="quadrature")
        values.append(result.value)
    mean = float(np.mean(values))
    elapsed = time.perf_counter() - start
    ok = mean <= bound and elapsed < 300.0
    _report(
        7,
        "mean chained risk under the optimized schedule",
        ok,
        f"mean={mean:.4f} <= bound={bound:.4f} over 50 trials, {elapsed:.1f}s",
    )


def test_acceptance_08_power_law_sampler():
    ladder = build_ladder(0.1, 2.0, 5)
    law1 = power_law(1.0, ladder)
    n = 10**5
    xs = sample_power_law(law1, n, seed=8)
    ks = scale_indices(xs, ladder)
    tol = 3.0 * math.sqrt(0.2 * 0.8 / n)
    freq_dev = max(abs(float(np.mean(ks == k)) - 0.2) for k in range(1, 6))

    law2 = power_law(2.0, ladder)
    xs2 = sample_power_law(law2, n, seed=9)
    ks2 = scale_indices(xs2, ladder)
    counts = np.array([float(np.sum(ks2 == k)) for k in range(1, 6)])
    ratio_dev = max(
        abs(counts[k + 1] / counts[k] - 0.5) / 0.5 for k in range(4)
    )
    inv_dev = max(scale_invariance_check(law1), scale_invariance_check(law2))
    ok = freq_dev <= tol and ratio_dev <= 0.05 and inv_dev < 1e-12
    _report(
        8,
        "power-law sampler",
        ok,
        f"freq dev={freq_dev:.4f} (<= {tol:.4f}), ratio dev={ratio_dev:.3%} (<=5%), invariance={inv_dev:.1e}",
    )


def test_acceptance_09_step_network_propositions():
    bundle = tanh_bundle(1.0)
    ladder = build_ladder(2.0**-5, 2.0, 5)
    span = bundle.m1 * ladder.radius
    worst_err_margin = math.inf
    worst_norm_margin = math.inf
    worst_plateau_margin = math.inf
    for tau in (8, 32):
        for eta in (0.05, 0.01):
            budgets = level_norm_budgets(ladder, bundle.m1, bundle.c1, bundle.c2, tau, eta)
            for k in range(1, 6):
                g_prev, g_next = float(ladder.gamma[k - 1]), float(ladder.gamma[k])
                rho_k = float(budgets[k - 1])
                spec = LevelSpec(tau=tau, eta=eta, rho=rho_k, span=span)
                a1, a2 = psi_domain(bundle, g_prev)
                continuous = riemann_weights(
                    lambda b: psi_prime(bundle, g_prev, g_next, b),
                    float(psi(bundle, g_prev, g_next, a1)),
                    (a1, a2),
                    spec,
                )
                w = discretize_weights(continuous, eta)
                xs = np.linspace(a1, a2, 2000)
                err = float(np.max(np.abs(step_net_eval(spec, w, xs) - psi(bundle, g_prev, g_next, xs))))
                err_bound = approx_error_bound(tau, eta, span, bundle.c2)
                phi1 = bundle.c1 * ladder.radius * (g_next - g_prev)
                norm_bound = 3 * bundle.m1 * ladder.radius * phi1 + (
                    4 * bundle.m1**2 * ladder.radius**2 / tau
                ) * bundle.c2 + (tau + 1) * eta / 2
                plateau = float(np.max(np.abs(np.cumsum(w.taps))))
                worst_err_margin = min(worst_err_margin, err_bound - err)
                worst_norm_margin = min(worst_norm_margin, norm_bound - w.l1)
                worst_plateau_margin = min(worst_plateau_margin, rho_k - plateau)
    ok = worst_err_margin >= 0 and worst_norm_margin >= 0 and worst_plateau_margin >= 0
    _report(
        9,
        "step-network approximation/norm/output",
        ok,
        f"min margins: err={worst_err_margin:.3e}, norm={worst_norm_margin:.3e}, plateau={worst_plateau_margin:.3e}",
    )


def test_acceptance_10_interruption_prefix_property():
    ladder = build_ladder(0.25, 2.0, 4)
    law = power_law(1.0, ladder)
    etas = [0.5, 1.0, 2.0, 4.0]
    rhos = [2.0, 4.0, 8.0, 16.0]
    specs = tuple(LevelSpec(tau=2, eta=etas[k], rho=rhos[k], span=2.0) for k in range(4))
    template = ModelTemplate(ladder=ladder, base_slope=1.0, specs=specs)
    teacher_rng = substream(77, "teacher")
    teacher = template.build([random_weight_vector(s, teacher_rng) for s in specs])
    target = lambda xs: readout_array(teacher, np.asarray(xs, dtype=np.float64))
    dataset = generate_dataset(target, law, 120, 5, "planted-teacher")
    wsets = tuple(enumerate_weight_set(s) for s in specs)
    schedule = temperature_schedule(ladder, rhos, 120, tuple(len(w) for w in wsets))
    plan = TrainingPlan(template=template, weight_sets=wsets, schedule=schedule)
    full_model, full_state = train_multiscale_entropic(plan, dataset, seed=13)
    full_bytes = json.dumps(model_to_json_dict(full_model)).encode()
    ok = True
    for k in (1, 2, 3):
        _, partial = train_multiscale_entropic(plan, dataset, seed=13, stop_after=k)
        resumed, resumed_state = train_multiscale_entropic(plan, dataset, seed=13, resume=partial)
        ok = ok and json.dumps(model_to_json_dict(resumed)).encode() == full_bytes
        ok = ok and resumed_state == full_state
    _report(10, "interruption/prefix property", ok, "stop at k in {1,2,3} then resume == uninterrupted, byte-exact")


def test_acceptance_11_lazy_inference():
    ladder = build_ladder(0.25, 2.0, 4)
    specs = tuple(LevelSpec(tau=2, eta=0.5, rho=2.0, span=2.0) for _ in range(4))
    template = ModelTemplate(ladder=ladder, base_slope=1.0, specs=specs)
    rng = substream(31, "teacher")
    model = template.build([random_weight_vector(s, rng) for s in specs])
    counts_ok = True
    for k in range(1, 5):
        for frac in (0.0, 0.37, 0.999):
            lo, hi = float(ladder.edges[k - 1]), float(ladder.edges[k])
            x = lo + frac * (hi - lo) * 0.9999
            for sign in (1.0, -1.0):
                _, evals = readout_counted(model, sign * x)
                counts_ok = counts_ok and evals == k
    _report(11, "lazy inference operation count", counts_ok, "exactly k level evaluations for band-k inputs")


def test_acceptance_12_risk_transfer_soft_check():
    bundle = tanh_bundle(0.5)
    ladder = build_ladder(0.0625, 2.0, 3)  # radius 0.5
    law = power_law(5.0, ladder)
    factor = powerlaw_factor(5.0, 2.0, bundle.c1, ladder.radius)
    assert factor > 0, "configuration must have a positive transfer factor"
    tau, eta = 8, 0.05
    budgets = level_norm_budgets(ladder, bundle.m1, bundle.c1, bundle.c2, tau, eta)
    span = bundle.m1 * ladder.radius
    specs = tuple(LevelSpec(tau=tau, eta=eta, rho=float(r), span=span) for r in budgets)
    template = ModelTemplate(ladder=ladder, base_slope=float(bundle.df(0.0)), specs=specs)
    reference = riemann_reference_model(bundle, ladder, specs)
    slack = ladder.d * max(approx_error_bound(tau, eta, span, bundle.c2) for _ in specs)

    ref_readout = lambda xs: readout_array(reference, np.asarray(xs, dtype=np.float64))
    exact_case = risk_transfer_check(reference, reference, ref_readout, law, bundle.c1, slack=0.0)

    rng = substream(2024, "evaluation")
    results = []
    for _ in range(20):
        model = template.build([random_weight_vector(s, rng) for s in specs])
        check = risk_transfer_check(model, reference, bundle.f, law, bundle.c1, slack=slack)
        results.append(check)
    passes = sum(1 for c in results if c.passed)
    for i, c in enumerate(results):
        state = "ok" if c.passed else "VIOLATED"
        print(
            f"    transfer[{i:02d}] {state}: factor*L={c.lhs:.4f} vs chained+slack={c.rhs:.4f} (margin {c.margin:+.4f})"
        )
    ok = exact_case.passed and exact_case.lhs == pytest.approx(0.0, abs=1e-10) and len(results) == 20
    _report(
        12,
        "risk transfer soft check",
        ok,
        f"factor={factor:.4f}, reference case 0<=0 with slack 0, {passes}/20 random settings within slack {slack:.3f}",
    )
