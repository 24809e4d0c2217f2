"""Sequential multiscale entropic training and its exact small-instance oracles.

Training walks the scale bands from smallest to largest. At stage k the
band-k empirical loss of every candidate weight vector (given the already
sampled prefix w_1..w_{k-1}) is

    loss_k(w_1^k) = (1/n) * sum over examples in band k of
                    |gamma_k * h_k(x_i/gamma_k) - y_i|,

normalized by the full sample count n, not the band count. The stage then
samples w_k from the Gibbs distribution proportional to
exp(-loss_k / lambda_k) over the enumerated candidate set, by inverse CDF
in enumeration order. Level k draws from its own RNG substream, so
interrupting after any stage and resuming reproduces the uninterrupted run
exactly.

The joint sampler minimizes

    E[sum_k (loss_k - softmin_k)] - sum_k (lambda_k - lambda_{k+1}) H(W_1^k)

over all joint distributions, where softmin_k is the Kolmogorov mean of the
stage-k candidate losses. ``multiscale_objective`` evaluates that objective
exactly on small product supports and ``congruency_gap`` verifies that the
objective differs from the weighted conditional divergences to the sampled
measure by a constant only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import entropy as ek
from .rng import substream
from .scales import Dataset, ScaleLadder, scale_indices
from .stepnet import (
    HierarchicalModel,
    LevelSpec,
    LevelWeightSet,
    WeightVector,
    step_net_eval,
)

__all__ = [
    "ModelTemplate",
    "TemperatureSchedule",
    "TrainingPlan",
    "LevelTrace",
    "TrainState",
    "temperature_schedule",
    "level_empirical_loss",
    "candidate_losses",
    "kolmogorov_level_loss",
    "gibbs_level_distribution",
    "train_multiscale_entropic",
    "train_erm",
    "level_loss_tensors",
    "gibbs_joint",
    "multiscale_objective",
    "congruency_gap",
    "CongruencyReport",
]

MAX_JOINT_ATOMS = 10**4
GLOBAL_ERM_CAP = 10**7


@dataclass(frozen=True)
class ModelTemplate:
    """Everything about a hierarchical model except the trained weights."""

    ladder: ScaleLadder
    base_slope: float | None
    specs: tuple[LevelSpec, ...]
    base_fn: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.base_slope is None) == (self.base_fn is None):
            raise ValueError("exactly one of base_slope and base_fn is required")
        if len(self.specs) != self.ladder.d:
            raise ValueError(f"need {self.ladder.d} level specs, got {len(self.specs)}")

    def base(self, x):
        if self.base_fn is not None:
            return np.asarray(self.base_fn(x), dtype=np.float64)
        return self.base_slope * np.asarray(x, dtype=np.float64)

    def build(self, weights: Sequence[WeightVector]) -> HierarchicalModel:
        if len(weights) != self.ladder.d:
            raise ValueError("a full model needs one weight vector per level")
        return HierarchicalModel(
            ladder=self.ladder,
            base_slope=self.base_slope,
            base_fn=self.base_fn,
            levels=tuple(zip(self.specs, weights)),
        )


@dataclass(frozen=True)
class TemperatureSchedule:
    """Positive per-stage gaps; stage temperatures are their suffix sums."""

    lambda_bar: tuple[float, ...]

    def __post_init__(self):
        bars = tuple(float(b) for b in self.lambda_bar)
        if not bars:
            raise ValueError("empty schedule")
        if any(b <= 0 for b in bars):
            raise ValueError("every temperature gap must be positive")
        object.__setattr__(self, "lambda_bar", bars)

    @property
    def d(self) -> int:
        return len(self.lambda_bar)

    @property
    def lambda_cum(self) -> tuple[float, ...]:
        """Stage temperatures lambda_k = sum of gaps from k to d (so lambda_{d+1} = 0)."""
        return tuple(np.cumsum(self.lambda_bar[::-1])[::-1])

    def to_json_dict(self) -> dict:
        return {"lambda_bar": list(self.lambda_bar), "lambda": list(self.lambda_cum)}


def temperature_schedule(
    ladder: ScaleLadder, rho: Sequence[float], n: int, set_sizes: Sequence[int]
) -> TemperatureSchedule:
    """The schedule that minimizes the chained-risk bound.

    lambda_bar_k = 2 * gamma_k * rho_k / sqrt(n * sum_{m<=k} log |W_m|).
    """
    if n < 1:
        raise ValueError("need at least one training example")
    sizes = [float(s) for s in set_sizes]
    if len(sizes) != ladder.d or len(rho) != ladder.d:
        raise ValueError("rho and set_sizes must have one entry per level")
    if any(s < 2 for s in sizes):
        raise ValueError("every candidate set needs at least two members")
    log_sums = np.cumsum(np.log(sizes))
    gammas = ladder.gamma[1:]
    bars = 2.0 * gammas * np.asarray(rho, dtype=np.float64) / np.sqrt(n * log_sums)
    return TemperatureSchedule(tuple(bars))


@dataclass(frozen=True)
class TrainingPlan:
    """Template, per-level candidate sets, and the temperature schedule."""

    template: ModelTemplate
    weight_sets: tuple[LevelWeightSet, ...]
    schedule: TemperatureSchedule

    def __post_init__(self):
        if len(self.weight_sets) != self.template.ladder.d:
            raise ValueError("need one candidate set per level")
        if self.schedule.d != self.template.ladder.d:
            raise ValueError("schedule length must equal the level count")
        for spec, ws in zip(self.template.specs, self.weight_sets):
            if ws.spec != spec:
                raise ValueError("candidate sets must share the template's level specs")


def _band_samples(template: ModelTemplate, dataset: Dataset, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaled inputs x_i/gamma_k and labels for the examples in band k."""
    ks = scale_indices(dataset.instances, template.ladder)
    mask = ks == k
    g = float(template.ladder.gamma[k])
    return dataset.instances[mask] / g, dataset.labels[mask]


def _prefix_state(
    template: ModelTemplate, prefix: Sequence[WeightVector], z: np.ndarray
) -> np.ndarray:
    """Advance base values z through the prefix levels."""
    h = np.asarray(template.base(z), dtype=np.float64)
    for spec, w in zip(template.specs, prefix):
        h = h + step_net_eval(spec, w, h)
    return h


def level_empirical_loss(
    template: ModelTemplate, prefix: Sequence[WeightVector], dataset: Dataset
) -> float:
    """Band-k empirical loss of the prefix w_1..w_k (k = prefix length)."""
    k = len(prefix)
    if not 1 <= k <= template.ladder.d:
        raise ValueError(f"prefix length {k} outside 1..{template.ladder.d}")
    z, ys = _band_samples(template, dataset, k)
    if z.size == 0:
        return 0.0
    g = float(template.ladder.gamma[k])
    h = _prefix_state(template, prefix, z)
    return float(np.sum(np.abs(g * h - ys)) / dataset.n)


def candidate_losses(
    template: ModelTemplate,
    prefix: Sequence[WeightVector],
    weight_set: LevelWeightSet,
    dataset: Dataset,
) -> np.ndarray:
    """Stage-(k+1) empirical loss of every candidate, given a length-k prefix."""
    k = len(prefix) + 1
    if k > template.ladder.d:
        raise ValueError("prefix already covers every level")
    z, ys = _band_samples(template, dataset, k)
    n_cand = len(weight_set)
    if z.size == 0:
        return np.zeros(n_cand)
    g = float(template.ladder.gamma[k])
    h = _prefix_state(template, prefix[: k - 1], z)
    active = h[None, :] >= weight_set.spec.breakpoints[:, None]  # (tau, m)
    values = weight_set.value_matrix()  # (c, tau+1)
    nets = values[:, :-1] @ active + values[:, -1:]  # (c, m)
    return np.sum(np.abs(g * (h[None, :] + nets) - ys[None, :]), axis=1) / dataset.n


def kolmogorov_level_loss(
    template: ModelTemplate,
    prefix: Sequence[WeightVector],
    dataset: Dataset,
    lam: float,
    weight_set: LevelWeightSet,
) -> float:
    """Soft minimum of the next stage's candidate losses at temperature lam."""
    losses = candidate_losses(template, prefix, weight_set, dataset)
    return ek.kolmogorov_mean(losses, lam)


def gibbs_level_distribution(
    template: ModelTemplate,
    prefix: Sequence[WeightVector],
    dataset: Dataset,
    lam: float,
    weight_set: LevelWeightSet,
) -> ek.DiscreteDistribution:
    """Gibbs distribution over candidate indices for the next stage.

    The exponent uses the cumulative stage temperature lambda_k, not the
    schedule gap.
    """
    losses = candidate_losses(template, prefix, weight_set, dataset)
    return ek.gibbs_measure(dict(enumerate(losses.tolist())), lam)


@dataclass(frozen=True)
class LevelTrace:
    level: int
    lam: float
    log_partition: float
    chosen_index: int
    chosen_loss: float
    min_loss: float
    set_size: int
    substream: str

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "lambda": self.lam,
            "log_partition": self.log_partition,
            "chosen_index": self.chosen_index,
            "chosen_loss": self.chosen_loss,
            "min_loss": self.min_loss,
            "set_size": self.set_size,
            "substream": self.substream,
        }


@dataclass(frozen=True)
class TrainState:
    """Sampled prefix plus the per-level sampling trace; prefix length <= d."""

    seed: int
    sampled: tuple[WeightVector, ...]
    traces: tuple[LevelTrace, ...]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sampled_units": [list(w.units) for w in self.sampled],
            "etas": [w.eta for w in self.sampled],
            "levels": [t.to_json_dict() for t in self.traces],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainState":
        sampled = tuple(
            WeightVector(units=tuple(units), eta=eta)
            for units, eta in zip(data["sampled_units"], data["etas"])
        )
        traces = tuple(
            LevelTrace(
                level=t["level"],
                lam=t["lambda"],
                log_partition=t["log_partition"],
                chosen_index=t["chosen_index"],
                chosen_loss=t["chosen_loss"],
                min_loss=t["min_loss"],
                set_size=t["set_size"],
                substream=t["substream"],
            )
            for t in data["levels"]
        )
        return cls(seed=data["seed"], sampled=sampled, traces=traces)


def _sample_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw in enumeration order."""
    cum = np.cumsum(probs)
    return int(min(np.searchsorted(cum, u, side="right"), probs.size - 1))


def train_multiscale_entropic(
    plan: TrainingPlan,
    dataset: Dataset,
    seed: int,
    stop_after: int | None = None,
    resume: TrainState | None = None,
) -> tuple[HierarchicalModel | None, TrainState]:
    """Sample w_1, then w_2 | w_1, ... up to min(d, stop_after).

    Level k draws one uniform from the substream (seed, "training", k), so
    the level-k sample is the same whether training stops at k, runs to d,
    or resumes from an earlier state with the same seed. Returns the full
    model once every level is sampled, else None, together with the state.
    """
    d = plan.template.ladder.d
    upto = d if stop_after is None else min(d, int(stop_after))
    if dataset.n < 1:
        raise ValueError("empty dataset")
    sampled: list[WeightVector] = []
    traces: list[LevelTrace] = []
    if resume is not None:
        if resume.seed != seed:
            raise ValueError(f"resume state was sampled under seed {resume.seed}, not {seed}")
        sampled = list(resume.sampled)
        traces = list(resume.traces)
    lambdas = plan.schedule.lambda_cum
    for k in range(len(sampled) + 1, upto + 1):
        wset = plan.weight_sets[k - 1]
        lam = lambdas[k - 1]
        losses = candidate_losses(plan.template, sampled, wset, dataset)
        low = float(losses.min())
        log_partition = float(-low / lam + math.log(np.sum(np.exp(-(losses - low) / lam))))
        weights = np.exp(-(losses - low) / lam)
        probs = weights / weights.sum()
        u = float(substream(seed, "training", index=k).random())
        idx = _sample_index(probs, u)
        sampled.append(wset.vectors[idx])
        traces.append(
            LevelTrace(
                level=k,
                lam=float(lam),
                log_partition=log_partition,
                chosen_index=idx,
                chosen_loss=float(losses[idx]),
                min_loss=low,
                set_size=len(wset),
                substream=f"training/{k}",
            )
        )
    state = TrainState(seed=seed, sampled=tuple(sampled), traces=tuple(traces))
    model = plan.template.build(sampled) if len(sampled) == d else None
    return model, state


def train_erm(
    plan: TrainingPlan,
    dataset: Dataset,
    mode: str = "greedy",
    cap: int = GLOBAL_ERM_CAP,
) -> HierarchicalModel:
    """Empirical risk minimization baseline; ties break by enumeration order.

    "greedy" minimizes each stage loss in sequence; "global" minimizes the
    summed loss over the full product set (capped).
    """
    if mode == "greedy":
        chosen: list[WeightVector] = []
        for k in range(1, plan.template.ladder.d + 1):
            losses = candidate_losses(plan.template, chosen, plan.weight_sets[k - 1], dataset)
            chosen.append(plan.weight_sets[k - 1].vectors[int(np.argmin(losses))])
        return plan.template.build(chosen)
    if mode == "global":
        tensors = level_loss_tensors(plan, dataset, cap=cap)
        total = tensors[0]
        for k in range(1, len(tensors)):
            total = total[..., None] + tensors[k]
        flat_idx = int(np.argmin(total))
        best = np.unravel_index(flat_idx, total.shape)
        weights = [plan.weight_sets[k].vectors[i] for k, i in enumerate(best)]
        return plan.template.build(weights)
    raise ValueError(f"unknown ERM mode {mode!r}")


def level_loss_tensors(plan: TrainingPlan, dataset: Dataset, cap: int = MAX_JOINT_ATOMS) -> list[np.ndarray]:
    """Stage losses for every prefix: tensor k has shape (c_1, ..., c_k)."""
    sizes = [len(ws) for ws in plan.weight_sets]
    if math.prod(sizes) > cap:
        raise ValueError(f"product support of {math.prod(sizes)} atoms exceeds the cap of {cap}")
    tensors: list[np.ndarray] = []
    d = plan.template.ladder.d
    for k in range(1, d + 1):
        shape = tuple(sizes[:k])
        tensor = np.empty(shape)
        for prefix_idx in itertools.product(*(range(c) for c in sizes[: k - 1])):
            prefix = [plan.weight_sets[j].vectors[i] for j, i in enumerate(prefix_idx)]
            tensor[prefix_idx] = candidate_losses(plan.template, prefix, plan.weight_sets[k - 1], dataset)
        tensors.append(tensor)
    return tensors


def _conditional_gibbs_tensors(
    tensors: list[np.ndarray], lambdas: Sequence[float]
) -> list[np.ndarray]:
    """Per-stage Gibbs conditionals P*(w_k | prefix), one tensor per stage."""
    out = []
    for k, tensor in enumerate(tensors):
        shifted = tensor - tensor.min(axis=-1, keepdims=True)
        weights = np.exp(-shifted / lambdas[k])
        out.append(weights / weights.sum(axis=-1, keepdims=True))
    return out


def gibbs_joint(plan: TrainingPlan, dataset: Dataset) -> ek.DiscreteDistribution:
    """The exact sampled joint P* over the product candidate support."""
    tensors = level_loss_tensors(plan, dataset)
    conds = _conditional_gibbs_tensors(tensors, plan.schedule.lambda_cum)
    joint = conds[0]
    for k in range(1, len(conds)):
        joint = joint[..., None] * conds[k]
    sizes = [len(ws) for ws in plan.weight_sets]
    support = tuple(itertools.product(*(range(c) for c in sizes)))
    return ek.DiscreteDistribution(support, joint.reshape(-1))


def _joint_tensor(plan: TrainingPlan, joint: ek.DiscreteDistribution) -> np.ndarray:
    sizes = tuple(len(ws) for ws in plan.weight_sets)
    expected = tuple(itertools.product(*(range(c) for c in sizes)))
    if joint.support != expected:
        raise ValueError("joint must be indexed by candidate-index tuples in product order")
    return joint.probs.reshape(sizes)


def multiscale_objective(
    plan: TrainingPlan, dataset: Dataset, joint: ek.DiscreteDistribution
) -> float:
    """Exact value of the trained objective at an explicit joint distribution.

    E[sum_k (loss_k - softmin_k)] - sum_k (lambda_k - lambda_{k+1}) H(W_1^k),
    with every entropy computed from the joint itself.
    """
    if len(joint) > MAX_JOINT_ATOMS:
        raise ValueError(f"joint with {len(joint)} atoms exceeds the cap of {MAX_JOINT_ATOMS}")
    p = _joint_tensor(plan, joint)
    tensors = level_loss_tensors(plan, dataset)
    lambdas = plan.schedule.lambda_cum
    d = plan.template.ladder.d
    expected_loss = 0.0
    for k in range(1, d + 1):
        prefix_marginal = p.sum(axis=tuple(range(k, d)))
        expected_loss += float(np.sum(prefix_marginal * tensors[k - 1]))
        softmin = np.apply_along_axis(lambda row: ek.kolmogorov_mean(row, lambdas[k - 1]), -1, tensors[k - 1])
        context_marginal = prefix_marginal.sum(axis=-1)
        expected_loss -= float(np.sum(context_marginal * softmin))
    entropy_term = 0.0
    for k in range(1, d + 1):
        prefix_marginal = p.sum(axis=tuple(range(k, d))).reshape(-1)
        h = float(-np.sum(prefix_marginal[prefix_marginal > 0] * np.log(prefix_marginal[prefix_marginal > 0])))
        entropy_term += plan.schedule.lambda_bar[k - 1] * h
    return expected_loss - entropy_term


def _weighted_conditional_divergence(
    plan: TrainingPlan, p: np.ndarray, tensors: list[np.ndarray]
) -> float:
    """sum_k lambda_k D(P_{W_k|W_1^{k-1}} || P*_{W_k|W_1^{k-1}} | P_{W_1^{k-1}})."""
    lambdas = plan.schedule.lambda_cum
    stars = _conditional_gibbs_tensors(tensors, lambdas)
    d = p.ndim
    total = 0.0
    for k in range(1, d + 1):
        upto_k = p.sum(axis=tuple(range(k, d)))  # shape (c_1..c_k)
        context = upto_k.sum(axis=-1)  # shape (c_1..c_{k-1})
        star = stars[k - 1]
        flat_ctx = np.atleast_1d(context.reshape(-1))
        flat_upto = upto_k.reshape(flat_ctx.size, -1)
        flat_star = star.reshape(flat_ctx.size, -1)
        for weight, num, den in zip(flat_ctx, flat_upto, flat_star):
            if weight == 0:
                continue
            cond = num / weight
            mask = cond > 0
            total += lambdas[k - 1] * float(weight * np.sum(cond[mask] * np.log(cond[mask] / den[mask])))
    return total


@dataclass(frozen=True)
class CongruencyReport:
    max_gap: float
    objective_at_star: float
    sampled_objective_min: float
    trials: int

    def to_json_dict(self) -> dict:
        return {
            "max_gap": self.max_gap,
            "objective_at_star": self.objective_at_star,
            "sampled_objective_min": self.sampled_objective_min,
            "trials": self.trials,
        }


def congruency_gap(plan: TrainingPlan, dataset: Dataset, trials: int, seed: int) -> CongruencyReport:
    """Spread of objective(P) - divergence(P) over random joints.

    The difference must be a constant independent of P; the sampled measure
    P* itself serves as the reference point, where the divergence term
    vanishes. Every tenth trial uses a deterministic (Dirac) joint, which
    stays finite because Gibbs conditionals have full support.
    """
    tensors = level_loss_tensors(plan, dataset)
    star = gibbs_joint(plan, dataset)
    objective_star = multiscale_objective(plan, dataset, star)
    sizes = tuple(len(ws) for ws in plan.weight_sets)
    support = star.support
    rng = substream(seed, "evaluation")
    max_gap = 0.0
    min_objective = math.inf
    for t in range(trials):
        if t % 10 == 9:
            probs = np.zeros(len(support))
            probs[int(rng.integers(len(support)))] = 1.0
        else:
            probs = rng.dirichlet(np.ones(len(support)))
        joint = ek.DiscreteDistribution(support, probs)
        objective = multiscale_objective(plan, dataset, joint)
        divergence = _weighted_conditional_divergence(plan, joint.probs.reshape(sizes), tensors)
        max_gap = max(max_gap, abs(objective - divergence - objective_star))
        min_objective = min(min_objective, objective)
    return CongruencyReport(
        max_gap=max_gap,
        objective_at_star=objective_star,
        sampled_objective_min=min_objective,
        trials=trials,
    )
