"""Finite-support probability distributions and entropic primitives.

Everything downstream (Gibbs level sampling, the congruency oracle, the
chained-risk bounds) is built from the handful of operations here: Shannon
entropy, relative entropy, conditional relative entropy, scaled/tilted
(geometric-mixture) distributions, Renyi divergence, Gibbs measures and the
soft-min Kolmogorov mean. All logarithms are natural, so entropies and Gibbs
exponents share a base.

Divergences may legitimately be infinite (absolute continuity failures);
``math.inf`` is returned rather than raising, so bound formulas can
propagate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

__all__ = [
    "DiscreteDistribution",
    "ConditionalDistribution",
    "SupportMismatchError",
    "DegenerateTiltError",
    "entropy",
    "relative_entropy",
    "conditional_relative_entropy",
    "scaled_distribution",
    "tilted_distribution",
    "renyi_divergence",
    "gibbs_measure",
    "kolmogorov_mean",
    "uniform",
    "dirac",
    "marginal_of_joint",
    "conditional_of_joint",
]

_PROB_SUM_TOL = 1e-12


class SupportMismatchError(ValueError):
    """Two distributions were combined over different supports."""


class DegenerateTiltError(ValueError):
    """A geometric mixture collapsed to zero everywhere."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """A probability vector over an ordered tuple of opaque labels.

    Invariants enforced at construction: labels unique, probabilities
    nonnegative and summing to 1 within 1e-12 (the residual is renormalized
    away so stored probabilities sum to 1 exactly up to float rounding).
    Instances are immutable and safe to share across threads.
    """

    support: tuple[Hashable, ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        support = tuple(self.support)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or len(support) != probs.size:
            raise ValueError("support and probs must be 1-D and of equal length")
        if probs.size == 0:
            raise ValueError("empty support")
        if len(set(support)) != len(support):
            raise ValueError("support labels must be unique")
        if np.any(probs < 0):
            raise ValueError("negative probability")
        total = float(probs.sum())
        if abs(total - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        probs = probs / total
        probs.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.support)

    def prob_of(self, label: Hashable) -> float:
        return float(self.probs[self.support.index(label)])

    def to_json_dict(self) -> dict:
        return {"support": list(self.support), "probs": [float(p) for p in self.probs]}

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "DiscreteDistribution":
        return cls(tuple(data["support"]), np.asarray(data["probs"], dtype=np.float64))


@dataclass(frozen=True)
class ConditionalDistribution:
    """One output distribution per conditioning label, over a shared support."""

    given_support: tuple[Hashable, ...]
    rows: tuple[DiscreteDistribution, ...]

    def __post_init__(self):
        given = tuple(self.given_support)
        rows = tuple(self.rows)
        if len(given) != len(rows):
            raise ValueError("one row per conditioning label required")
        if len(set(given)) != len(given):
            raise ValueError("conditioning labels must be unique")
        if rows:
            out = rows[0].support
            if any(r.support != out for r in rows[1:]):
                raise SupportMismatchError("rows must share one output support")
        object.__setattr__(self, "given_support", given)
        object.__setattr__(self, "rows", rows)

    def row(self, label: Hashable) -> DiscreteDistribution:
        return self.rows[self.given_support.index(label)]


def _check_same_support(p: DiscreteDistribution, q: DiscreteDistribution) -> None:
    if p.support != q.support:
        raise SupportMismatchError("distributions are defined on different supports")


def entropy(p: DiscreteDistribution) -> float:
    """Shannon entropy -sum p log p in nats, with the 0 log 0 = 0 convention."""
    probs = p.probs[p.probs > 0]
    return float(-np.sum(probs * np.log(probs)))


def relative_entropy(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """sum p log(p/q) in nats; +inf when p is not absolutely continuous w.r.t. q."""
    _check_same_support(p, q)
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        return math.inf
    pm = p.probs[mask]
    qm = q.probs[mask]
    return float(np.sum(pm * (np.log(pm) - np.log(qm))))


def conditional_relative_entropy(
    p_cond: ConditionalDistribution,
    q_cond: ConditionalDistribution,
    p_x: DiscreteDistribution,
) -> float:
    """Average row divergence sum_x P_X(x) D(P(.|x) || Q(.|x)).

    Rows with P_X(x) = 0 contribute nothing, even when their own divergence
    is infinite.
    """
    if p_cond.given_support != q_cond.given_support or p_cond.given_support != p_x.support:
        raise SupportMismatchError("conditioning supports differ")
    total = 0.0
    for weight, p_row, q_row in zip(p_x.probs, p_cond.rows, q_cond.rows):
        if weight == 0:
            continue
        div = relative_entropy(p_row, q_row)
        if math.isinf(div):
            return math.inf
        total += float(weight) * div
    return total


def scaled_distribution(p: DiscreteDistribution, lam: float) -> DiscreteDistribution:
    """Renormalized p^lam. lam=0 yields the uniform distribution on the full support."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return uniform(p.support)
    weights = p.probs**lam
    return DiscreteDistribution(p.support, weights / weights.sum())


def tilted_distribution(
    p: DiscreteDistribution, q: DiscreteDistribution, lam: float
) -> DiscreteDistribution:
    """Geometric mixture proportional to p^lam q^(1-lam)."""
    _check_same_support(p, q)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    # 0**0 == 1, so the lam=0 and lam=1 endpoints reduce to q and p exactly.
    weights = p.probs**lam * q.probs ** (1.0 - lam)
    total = weights.sum()
    if total == 0:
        raise DegenerateTiltError("geometric mixture vanishes everywhere")
    return DiscreteDistribution(p.support, weights / total)


def renyi_divergence(p: DiscreteDistribution, q: DiscreteDistribution, lam: float) -> float:
    """Renyi divergence of order lam > 0, in nats.

    (1/(lam-1)) log sum p^lam q^(1-lam) for lam != 1; the lam=1 case is the
    relative entropy. Returns +inf when the defining sum has no finite value
    (mass of p outside q's support at lam > 1, or disjoint supports).
    """
    if lam <= 0:
        raise ValueError(f"order must be positive, got {lam}")
    if lam == 1.0:
        return relative_entropy(p, q)
    mask = p.probs > 0
    if lam > 1 and np.any(q.probs[mask] == 0):
        return math.inf
    both = mask & (q.probs > 0)
    if not np.any(both):
        return math.inf
    pm = p.probs[both]
    qm = q.probs[both]
    total = float(np.sum(np.exp(lam * np.log(pm) + (1.0 - lam) * np.log(qm))))
    return math.log(total) / (lam - 1.0)


def gibbs_measure(energies: Mapping[Hashable, float], lam: float) -> DiscreteDistribution:
    """Distribution proportional to exp(-energy/lam) over the energy map's keys.

    Computed with a max-shift so arbitrarily cold temperatures (lam << 1)
    stay finite; adding a constant to all energies leaves the result
    unchanged.
    """
    if lam <= 0:
        raise ValueError(f"temperature must be positive, got {lam}")
    if not energies:
        raise ValueError("empty energy map")
    support = tuple(energies.keys())
    values = np.asarray([energies[w] for w in support], dtype=np.float64)
    shifted = values - values.min()
    weights = np.exp(-shifted / lam)
    probs = weights / weights.sum()
    return DiscreteDistribution(support, probs / probs.sum())


def kolmogorov_mean(z: Sequence[float], lam: float) -> float:
    """Soft minimum -lam log((1/N) sum exp(-z_j/lam)).

    With this (1/N)-normalized form the mean is sandwiched between min(z)
    and min(z) + lam log N, approaching min(z) from above as lam -> 0. (The
    bracket [min - lam log N, min] sometimes quoted for this mean belongs
    to the un-normalized variant, which differs by exactly lam log N.)
    """
    values = np.asarray(z, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty vector")
    if lam <= 0:
        raise ValueError(f"temperature must be positive, got {lam}")
    low = float(values.min())
    return low - lam * math.log(float(np.mean(np.exp(-(values - low) / lam))))


def uniform(support: Sequence[Hashable]) -> DiscreteDistribution:
    labels = tuple(support)
    return DiscreteDistribution(labels, np.full(len(labels), 1.0 / len(labels)))


def dirac(support: Sequence[Hashable], label: Hashable) -> DiscreteDistribution:
    labels = tuple(support)
    probs = np.zeros(len(labels))
    probs[labels.index(label)] = 1.0
    return DiscreteDistribution(labels, probs)


def marginal_of_joint(joint: DiscreteDistribution, axis: int) -> DiscreteDistribution:
    """Marginal over one coordinate of a joint whose labels are tuples."""
    acc: dict[Hashable, float] = {}
    for label, prob in zip(joint.support, joint.probs):
        key = label[axis]
        acc[key] = acc.get(key, 0.0) + float(prob)
    return DiscreteDistribution(tuple(acc.keys()), np.asarray(list(acc.values())))


def conditional_of_joint(joint: DiscreteDistribution, axis: int) -> ConditionalDistribution:
    """Conditional of coordinate ``axis`` given the remaining coordinates.

    Labels of the joint must be tuples; the conditioning label is the tuple
    with coordinate ``axis`` removed (unwrapped when a single coordinate
    remains). Conditioning cells with zero marginal mass get a uniform
    placeholder row; they contribute nothing to any conditional divergence.
    """
    out_labels: list[Hashable] = []
    seen = set()
    for label in joint.support:
        if label[axis] not in seen:
            seen.add(label[axis])
            out_labels.append(label[axis])
    cells: dict[Hashable, dict[Hashable, float]] = {}
    order: list[Hashable] = []
    for label, prob in zip(joint.support, joint.probs):
        rest = tuple(v for i, v in enumerate(label) if i != axis)
        if len(rest) == 1:
            rest = rest[0]
        if rest not in cells:
            cells[rest] = {}
            order.append(rest)
        cells[rest][label[axis]] = cells[rest].get(label[axis], 0.0) + float(prob)
    rows = []
    for rest in order:
        weights = np.asarray([cells[rest].get(lbl, 0.0) for lbl in out_labels])
        total = weights.sum()
        if total == 0:
            rows.append(uniform(out_labels))
        else:
            rows.append(DiscreteDistribution(tuple(out_labels), weights / total))
    return ConditionalDistribution(tuple(order), tuple(rows))
