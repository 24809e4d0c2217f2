"""Self-contained property suites behind the ``verify`` subcommand.

Each suite re-runs a family of identities or certificates with seeded
randomness and reports the measured margin against its threshold. They are
the same invariants the test suite pins, packaged so a deployment can check
itself from the command line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import entropy as ek
from .ladder import (
    LadderSpec,
    certify_linearization,
    certify_rungs,
    compose_ladder,
    dilate,
    dilate_inverse,
    linear_bundle,
    psi,
    psi_domain,
    scaled_sinh_bundle,
    tanh_bundle,
    tanh_psi_closed_form,
)
from .risk import (
    erm_risk_bound,
    lambda_ratio,
    optimized_chained_bound,
    powerlaw_factor,
    statistical_risk_bound,
)
from .rng import substream
from .scales import (
    build_ladder,
    generate_dataset,
    power_law,
    sample_power_law,
    scale_indices,
    scale_mass,
    scale_invariance_check,
)
from .stepnet import LevelSpec, LevelWeightSet, WeightVector
from .training import (
    TemperatureSchedule,
    TrainingPlan,
    ModelTemplate,
    congruency_gap,
    gibbs_joint,
    multiscale_objective,
)

__all__ = ["CheckResult", "SUITES", "run_suites", "congruency_demo_instance"]


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: float
    comparison: str = "<="

    def to_json_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "pass": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "comparison": self.comparison,
        }


def _check(suite, name, value, threshold, comparison="<=") -> CheckResult:
    if comparison == "<=":
        passed = value <= threshold
    elif comparison == ">=":
        passed = value >= threshold
    else:
        raise ValueError(comparison)
    return CheckResult(suite, name, bool(passed), float(value), float(threshold), comparison)


def _random_distribution(rng, size) -> ek.DiscreteDistribution:
    probs = rng.dirichlet(np.ones(size)) + 1e-3
    probs = probs / probs.sum()
    return ek.DiscreteDistribution(tuple(range(size)), probs)


def entropy_suite(seed: int = 0) -> list[CheckResult]:
    rng = substream(seed, "evaluation", index=101)
    results = []

    dev = 0.0
    for _ in range(100):
        nx, ny = rng.integers(2, 6), rng.integers(2, 6)
        support = tuple((i, j) for i in range(nx) for j in range(ny))
        p = ek.DiscreteDistribution(support, rng.dirichlet(np.ones(nx * ny)))
        q_probs = rng.dirichlet(np.ones(nx * ny)) + 1e-3
        q = ek.DiscreteDistribution(support, q_probs / q_probs.sum())
        joint = ek.relative_entropy(p, q)
        split = ek.relative_entropy(
            ek.marginal_of_joint(p, 0), ek.marginal_of_joint(q, 0)
        ) + ek.conditional_relative_entropy(
            ek.conditional_of_joint(p, 1), ek.conditional_of_joint(q, 1), ek.marginal_of_joint(p, 0)
        )
        dev = max(dev, abs(joint - split))
    results.append(_check("entropy", "chain_rule_max_dev", dev, 1e-12))

    dev = 0.0
    for _ in range(100):
        size = int(rng.integers(2, 7))
        p = _random_distribution(rng, size)
        q = _random_distribution(rng, size)
        r = _random_distribution(rng, size)
        for lam in (0.25, 0.5, 0.75):
            lhs = lam * ek.relative_entropy(p, q) + (1 - lam) * ek.relative_entropy(p, r)
            rhs = ek.relative_entropy(p, ek.tilted_distribution(q, r, lam)) + (
                1 - lam
            ) * ek.renyi_divergence(q, r, lam)
            dev = max(dev, abs(lhs - rhs))
    results.append(_check("entropy", "entropy_combination_max_dev", dev, 1e-12))

    spread = 0.0
    mean_dev = 0.0
    for _ in range(20):
        size = int(rng.integers(2, 7))
        support = tuple(range(size))
        energies = dict(zip(support, rng.normal(0, 2, size)))
        lam = float(rng.uniform(0.05, 3.0))
        gibbs = ek.gibbs_measure(energies, lam)
        u = ek.uniform(support)
        values = []
        for _ in range(50):
            p = _random_distribution(rng, size)
            e_f = float(np.sum(p.probs * np.asarray([energies[w] for w in support])))
            values.append(
                e_f + lam * ek.relative_entropy(p, u) - lam * ek.relative_entropy(p, gibbs)
            )
        spread = max(spread, max(values) - min(values))
        soft = ek.kolmogorov_mean(np.asarray([energies[w] for w in support]), lam)
        mean_dev = max(mean_dev, abs(values[0] - soft))
    results.append(_check("entropy", "gibbs_variational_constancy", spread, 1e-10))
    results.append(_check("entropy", "gibbs_constant_equals_soft_min", mean_dev, 1e-10))

    worst = 0.0
    for _ in range(1000):
        size = int(rng.integers(1, 9))
        z = rng.normal(0, 3, size)
        lam = float(rng.uniform(0.01, 5.0))
        g = ek.kolmogorov_mean(z, lam)
        low = float(z.min())
        # true bracket for the (1/N)-normalized mean, plus its shifted twin
        worst = max(
            worst,
            low - g,
            g - (low + lam * math.log(size)),
            (low - lam * math.log(size)) - (g - lam * math.log(size)),
            (g - lam * math.log(size)) - low,
        )
    results.append(_check("entropy", "kolmogorov_sandwich_violation", worst, 1e-12))

    dev = 0.0
    for _ in range(50):
        size = int(rng.integers(2, 7))
        support = tuple(range(size))
        values = rng.normal(0, 1, size)
        lam = float(rng.uniform(0.1, 2.0))
        shift = float(rng.normal(0, 10))
        a = ek.gibbs_measure(dict(zip(support, values)), lam)
        b = ek.gibbs_measure(dict(zip(support, values + shift)), lam)
        dev = max(dev, float(np.max(np.abs(a.probs - b.probs))))
    results.append(_check("entropy", "gibbs_shift_invariance", dev, 1e-12))
    return results


def ladder_suite() -> list[CheckResult]:
    results = []
    spec = LadderSpec.geometric(2.0, 5)
    bundles = [tanh_bundle(1.0), scaled_sinh_bundle(1.0, 1.0), linear_bundle(2.0, 1.0)]

    dev = 0.0
    for bundle in bundles:
        xs = np.linspace(-0.999, 0.999, 200) * bundle.radius
        for x in xs:
            dev = max(dev, abs(compose_ladder(bundle, spec, float(x)) - float(bundle.f(x))))
    results.append(_check("ladder", "telescoping_max_dev", dev, 1e-9))

    dev = 0.0
    for bundle in bundles:
        for gamma in (0.25, 0.5, 1.0):
            xs = np.linspace(-0.9, 0.9, 101) * bundle.radius
            back = dilate_inverse(bundle, gamma, dilate(bundle, gamma, xs))
            dev = max(dev, float(np.max(np.abs(back - xs))))
    results.append(_check("ladder", "inverse_consistency_max_dev", dev, 1e-10))

    bundle = tanh_bundle(1.0)
    dev = 0.0
    for k in range(1, 6):
        g_prev, g_next = spec.scales[k - 1], spec.scales[k]
        lo, hi = psi_domain(bundle, g_prev)
        xs = np.linspace(lo, hi, 1000)
        dev = max(dev, float(np.max(np.abs(psi(bundle, g_prev, g_next, xs) - tanh_psi_closed_form(g_prev, xs)))))
    results.append(_check("ladder", "tanh_closed_form_max_dev", dev, 1e-10))

    margin = -math.inf
    for cert in certify_rungs(bundle, spec, grid_n=2000):
        margin = max(margin, cert.lip_est - cert.lip_bound, cert.smooth_est - cert.smooth_bound)
    results.append(_check("ladder", "rung_certificates_worst_excess", margin, 0.0))

    margin = -math.inf
    for gamma in (2.0**-5, 2.0**-3):
        cert = certify_linearization(bundle, gamma, grid_n=2000)
        margin = max(margin, cert.lip_est - cert.bound)
    results.append(_check("ladder", "linearization_worst_excess", margin, 0.0))

    lin = linear_bundle(2.0, 1.0)
    lo, hi = psi_domain(lin, 0.5)
    xs = np.linspace(lo, hi, 500)
    results.append(
        _check("ladder", "linear_psi_is_zero", float(np.max(np.abs(psi(lin, 0.5, 1.0, xs)))), 1e-12)
    )
    return results


def congruency_demo_instance(d: int = 2, n: int = 8, seed: int = 7):
    """The small exact instance used for the congruency oracle: d levels,
    three handpicked candidates per level, tanh labels on a two-band annulus."""
    ladder = build_ladder(0.25, 2.0, d)
    law = power_law(1.0, ladder)
    dataset = generate_dataset(np.tanh, law, n=n, seed=seed, mode="tanh-target")
    spec = LevelSpec(tau=2, eta=0.25, rho=1.0, span=1.5)
    unit_choices = [
        ((0, 0, 0), (2, 0, -1), (-1, 1, 1)),
        ((0, 0, 0), (1, -1, 0), (0, 1, 2)),
        ((0, 0, 0), (-2, 1, 0), (1, 1, -1)),
    ]
    weight_sets = tuple(
        LevelWeightSet(
            spec=spec,
            vectors=tuple(WeightVector(units=u, eta=spec.eta) for u in unit_choices[k % 3]),
        )
        for k in range(d)
    )
    template = ModelTemplate(ladder=ladder, base_slope=1.0, specs=(spec,) * d)
    gaps = tuple(0.6 / (k + 1) for k in range(d))
    plan = TrainingPlan(template=template, weight_sets=weight_sets, schedule=TemperatureSchedule(gaps))
    return plan, dataset


def congruency_suite(seed: int = 0) -> list[CheckResult]:
    results = []
    plan, dataset = congruency_demo_instance(d=2, n=8)
    report = congruency_gap(plan, dataset, trials=100, seed=seed)
    results.append(_check("congruency", "max_gap_d2", report.max_gap, 1e-9))
    results.append(
        _check(
            "congruency",
            "objective_minimality_excess",
            report.objective_at_star - report.sampled_objective_min,
            1e-10,
        )
    )
    plan1, dataset1 = congruency_demo_instance(d=1, n=8)
    report1 = congruency_gap(plan1, dataset1, trials=50, seed=seed)
    results.append(_check("congruency", "max_gap_d1", report1.max_gap, 1e-12))
    return results


def bounds_suite(seed: int = 0) -> list[CheckResult]:
    rng = substream(seed, "evaluation", index=202)
    results = []

    dev = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 6))
        ladder = build_ladder(float(rng.uniform(0.05, 0.5)), float(rng.uniform(1.2, 3.0)), d)
        rho = rng.uniform(0.5, 4.0, d)
        sizes = rng.integers(2, 50, d)
        n = int(rng.integers(1, 10**4))
        alpha = float(rng.uniform(3.0, 9.0))
        c1 = float(rng.uniform(0.01, 0.5))
        factor = powerlaw_factor(alpha, ladder.beta, c1, ladder.radius)
        if factor <= 0:
            continue
        lhs = statistical_risk_bound(ladder, rho, sizes, n, alpha, c1)
        rhs = optimized_chained_bound(ladder.gamma[1:], rho, sizes, n) / factor
        dev = max(dev, abs(lhs - rhs) / max(1.0, abs(rhs)))
    results.append(_check("bounds", "risk_bound_identity_rel_dev", dev, 1e-12))

    results.append(
        _check("bounds", "lambda_ratio_reference_dev", abs(lambda_ratio(10.0, 20) - 0.2648), 5e-4)
    )

    dev = 0.0
    for eps in (0.01, 0.1, 1.0):
        ladder = build_ladder(eps, 10.0 ** (1.0 / 20.0), 20)
        dev = max(dev, abs(lambda_ratio(ladder.radius / ladder.epsilon, 20) - lambda_ratio(10.0, 20)))
    results.append(_check("bounds", "lambda_ratio_scale_free_dev", dev, 1e-9))

    dev = 0.0
    inv_dev = 0.0
    for alpha, d in ((1.0, 3), (2.0, 3), (1.0, 5), (2.5, 5)):
        ladder = build_ladder(0.2, 2.0, d)
        law = power_law(alpha, ladder)
        dev = max(dev, abs(sum(scale_mass(law, k) for k in range(1, d + 1)) - 1.0))
        inv_dev = max(inv_dev, scale_invariance_check(law))
    results.append(_check("bounds", "scale_mass_total_dev", dev, 1e-12))
    results.append(_check("bounds", "scale_invariance_dev", inv_dev, 1e-12))

    ladder = build_ladder(0.1, 2.0, 5)
    law = power_law(1.0, ladder)
    xs = sample_power_law(law, 20_000, seed=seed + 1)
    ks = scale_indices(xs, ladder)
    freq_dev = 0.0
    for k in range(1, 6):
        freq_dev = max(freq_dev, abs(float(np.mean(ks == k)) - 0.2))
    results.append(_check("bounds", "sampler_frequency_dev", freq_dev, 4 * math.sqrt(0.2 * 0.8 / 20_000)))

    results.append(
        _check(
            "bounds",
            "erm_bound_example_dev",
            abs(erm_risk_bound([1.0, 2.0], [math.e, math.e], 100) - 3.0 * math.sqrt(2.0) / 10.0),
            1e-12,
        )
    )
    return results


SUITES = {
    "entropy": entropy_suite,
    "ladder": lambda seed=0: ladder_suite(),
    "congruency": congruency_suite,
    "bounds": bounds_suite,
}


def run_suites(names, seed: int = 0) -> tuple[list[CheckResult], bool]:
    results: list[CheckResult] = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; expected one of {sorted(SUITES)} or 'all'")
        results.extend(SUITES[name](seed=seed))
    return results, all(r.passed for r in results)
