"""Discretized bounded-norm step networks and the hierarchical model.

Each model level is a two-layer network of Heaviside steps,

    net(x) = sum_j w_j * H(x - b_j) + w_c,      H(0) = 1,

with breakpoints b_j = (-1 + 2j/tau) * span laid uniformly over
(-span, span], weights on the lattice eta*Z, and total l1 norm capped by a
per-level budget rho_k. A level's candidate set is the full lattice l1 ball,
enumerated in lexicographic order so downstream sampling is deterministic.

The hierarchical model stacks d such levels over a linear base map,
h_k = h_{k-1} + net_k(h_{k-1}), and reads its output at the band of the
input: an instance in band k costs exactly k level evaluations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .ladder import DiffeoBundle, psi, psi_domain, psi_prime
from .scales import ScaleLadder, build_ladder, scale_indices

__all__ = [
    "LevelSpec",
    "WeightVector",
    "LevelWeightSet",
    "EnumerationTooLargeError",
    "step_net_eval",
    "riemann_weights",
    "discretize_weights",
    "lattice_ball_count",
    "enumerate_weight_set",
    "random_weight_vector",
    "zero_weights",
    "level_norm_budgets",
    "approx_error_bound",
    "HierarchicalModel",
    "riemann_reference_model",
    "forward_level",
    "readout",
    "readout_counted",
    "readout_array",
    "model_to_json_dict",
    "model_from_json_dict",
    "save_model",
    "load_model",
]

ENUMERATION_CAP = 10**6
_UNIT_TOL = 1e-9


class EnumerationTooLargeError(RuntimeError):
    """A candidate set exceeded the enumeration cap."""


@dataclass(frozen=True)
class LevelSpec:
    """Width tau, lattice step eta, norm budget rho, breakpoint half-range span."""

    tau: int
    eta: float
    rho: float
    span: float

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("width must be at least 2")
        if self.eta <= 0:
            raise ValueError("lattice step must be positive")
        if self.rho < 0:
            raise ValueError("norm budget must be nonnegative")
        if self.span <= 0:
            raise ValueError("breakpoint span must be positive")

    @property
    def breakpoints(self) -> np.ndarray:
        js = np.arange(1, self.tau + 1)
        return (-1.0 + 2.0 * js / self.tau) * self.span

    @property
    def budget_units(self) -> int:
        """floor(rho/eta), with one-ulp forgiveness for exact ratios."""
        return int(math.floor(self.rho / self.eta + _UNIT_TOL))


@dataclass(frozen=True)
class WeightVector:
    """tau tap weights plus a constant, stored as exact integer lattice units."""

    units: tuple[int, ...]
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(int(u) for u in self.units))
        if self.eta <= 0:
            raise ValueError("lattice step must be positive")

    @property
    def values(self) -> np.ndarray:
        return self.eta * np.asarray(self.units, dtype=np.float64)

    @property
    def taps(self) -> np.ndarray:
        return self.values[:-1]

    @property
    def constant(self) -> float:
        return float(self.units[-1]) * self.eta

    @property
    def l1(self) -> float:
        return self.eta * float(sum(abs(u) for u in self.units))

    @property
    def tap_l1(self) -> float:
        return self.eta * float(sum(abs(u) for u in self.units[:-1]))


def zero_weights(spec: LevelSpec) -> WeightVector:
    return WeightVector(units=(0,) * (spec.tau + 1), eta=spec.eta)


def step_net_eval(spec: LevelSpec, w: WeightVector, x):
    """sum_j w_j H(x - b_j) + w_c with the right-continuous step H(0) = 1."""
    xv = np.asarray(x, dtype=np.float64)
    active = xv[..., None] >= spec.breakpoints
    out = active @ w.taps + w.constant
    return float(out) if np.isscalar(x) else out


def riemann_weights(
    psi_prime: Callable[[np.ndarray], np.ndarray],
    psi_at_left: float,
    domain: tuple[float, float],
    spec: LevelSpec,
) -> np.ndarray:
    """Continuous tap/constant weights that Riemann-sample a residual's derivative.

    Tap j gets 2*span*psi'(b_j)/tau when its breakpoint lies inside the open
    domain (a1, a2), zero otherwise; the constant picks up the residual's
    value at the left end. The domain must contain 0 and sit inside
    (-span, span).
    """
    a1, a2 = float(domain[0]), float(domain[1])
    if not a1 < 0.0 < a2:
        raise ValueError("domain must contain 0")
    if a1 < -spec.span or a2 > spec.span:
        raise ValueError("domain must sit inside [-span, span]")
    b = spec.breakpoints
    inside = (b > a1) & (b < a2)
    taps = np.zeros(spec.tau)
    if np.any(inside):
        taps[inside] = 2.0 * spec.span * np.asarray(psi_prime(b[inside]), dtype=np.float64) / spec.tau
    return np.concatenate([taps, [float(psi_at_left)]])


def discretize_weights(values: Sequence[float], eta: float) -> WeightVector:
    """Round each weight to the nearest lattice point, ties away from zero."""
    if eta <= 0:
        raise ValueError("lattice step must be positive")
    v = np.asarray(values, dtype=np.float64)
    units = np.sign(v) * np.floor(np.abs(v) / eta + 0.5)
    return WeightVector(units=tuple(int(u) for u in units), eta=float(eta))


def lattice_ball_count(dim: int, n_units: int) -> int:
    """Number of integer vectors in dimension ``dim`` with l1 norm <= ``n_units``."""
    return sum(
        2**j * math.comb(dim, j) * math.comb(n_units, j) for j in range(0, min(dim, n_units) + 1)
    )


def _lattice_ball(dim: int, budget: int) -> Iterator[tuple[int, ...]]:
    if dim == 0:
        yield ()
        return
    for first in range(-budget, budget + 1):
        for rest in _lattice_ball(dim - 1, budget - abs(first)):
            yield (first,) + rest


@dataclass(frozen=True)
class LevelWeightSet:
    """An ordered, finite candidate set of weight vectors for one level."""

    spec: LevelSpec
    vectors: tuple[WeightVector, ...]

    def __len__(self) -> int:
        return len(self.vectors)

    def value_matrix(self) -> np.ndarray:
        """(n_candidates, tau+1) float matrix of weight values."""
        return np.asarray([w.values for w in self.vectors])


def enumerate_weight_set(spec: LevelSpec, cap: int = ENUMERATION_CAP) -> LevelWeightSet:
    """All lattice vectors with l1 norm within budget, in lexicographic order."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    n_units = spec.budget_units
    dim = spec.tau + 1
    total = lattice_ball_count(dim, n_units)
    if total > cap:
        raise EnumerationTooLargeError(
            f"candidate set has sum_j 2^j C({dim},j) C({n_units},j) = {total} vectors, "
            f"exceeding the cap of {cap}"
        )
    vectors = tuple(WeightVector(units=u, eta=spec.eta) for u in _lattice_ball(dim, n_units))
    return LevelWeightSet(spec=spec, vectors=vectors)


def random_weight_vector(spec: LevelSpec, rng: np.random.Generator) -> WeightVector:
    """A random member of the level's candidate set (not uniform over it)."""
    n_units = spec.budget_units
    total = int(rng.integers(0, n_units + 1))
    dim = spec.tau + 1
    counts = rng.multinomial(total, np.full(dim, 1.0 / dim))
    signs = rng.choice((-1, 1), size=dim)
    return WeightVector(units=tuple(int(s * c) for s, c in zip(signs, counts)), eta=spec.eta)


def level_norm_budgets(
    ladder: ScaleLadder,
    m1: float,
    c1: float,
    c2: float,
    tau,
    eta,
) -> np.ndarray:
    """Per-level budgets rho_k matching the Riemann-network norm guarantee.

    rho_k = 3*m1*c1*R^2*beta^(k-d-1)*(beta-1) + (4*m1^2*R^2/tau_k)*c2
            + (tau_k+1)*eta_k/2.

    ``tau`` and ``eta`` may be scalars (broadcast to every level) or
    per-level sequences of length d.
    """
    taus = np.broadcast_to(np.asarray(tau, dtype=np.float64), (ladder.d,))
    etas = np.broadcast_to(np.asarray(eta, dtype=np.float64), (ladder.d,))
    ks = np.arange(1, ladder.d + 1)
    r = ladder.radius
    geometric = 3.0 * m1 * c1 * r**2 * ladder.beta ** (ks - ladder.d - 1) * (ladder.beta - 1.0)
    curvature = (4.0 * m1**2 * r**2 / taus) * c2
    rounding = (taus + 1.0) * etas / 2.0
    return geometric + curvature + rounding


def approx_error_bound(tau: int, eta: float, span: float, phi2: float) -> float:
    """Worst-case gap between a residual and its discretized step network.

    (tau+1)*eta/2 from weight rounding plus 2*span^2*phi2/tau from the
    Riemann sampling of the derivative (span = m1*R).
    """
    return (tau + 1) * eta / 2.0 + (2.0 * span**2 / tau) * phi2


@dataclass(frozen=True)
class HierarchicalModel:
    """A linear base map plus d near-identity step-network levels.

    ``base_slope`` gives h_0(x) = slope * x; a callable ``base_fn`` may
    replace it (such models do not serialize). Immutable; forward
    evaluation is pure.
    """

    ladder: ScaleLadder
    base_slope: float | None
    levels: tuple[tuple[LevelSpec, WeightVector], ...]
    base_fn: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.base_slope is None) == (self.base_fn is None):
            raise ValueError("exactly one of base_slope and base_fn is required")
        if len(self.levels) != self.ladder.d:
            raise ValueError(f"need {self.ladder.d} levels, got {len(self.levels)}")
        for spec, w in self.levels:
            if len(w.units) != spec.tau + 1:
                raise ValueError("weight vector length must be tau + 1")
            if w.eta != spec.eta:
                raise ValueError("weight lattice step differs from its level spec")
            if w.l1 > spec.rho * (1 + 1e-12) + 1e-12:
                raise ValueError(f"weights exceed the level budget: {w.l1} > {spec.rho}")

    def base(self, x):
        if self.base_fn is not None:
            return self.base_fn(x)
        return self.base_slope * np.asarray(x, dtype=np.float64)


def forward_level(model: HierarchicalModel, k: int, x):
    """h_k(x): the base map advanced through the first k levels."""
    if not 0 <= k <= model.ladder.d:
        raise ValueError(f"level {k} outside 0..{model.ladder.d}")
    xv = np.asarray(x, dtype=np.float64)
    h = np.asarray(model.base(xv), dtype=np.float64)
    for spec, w in model.levels[:k]:
        h = h + step_net_eval(spec, w, h)
    return float(h) if np.isscalar(x) else h


def readout(model: HierarchicalModel, x: float) -> float:
    """Model output at x: gamma_k * h_k(x / gamma_k) for x in band k."""
    return readout_counted(model, x)[0]


def readout_counted(model: HierarchicalModel, x: float) -> tuple[float, int]:
    """Output plus the number of level-network evaluations actually performed."""
    k = int(scale_indices(np.asarray([x]), model.ladder)[0])
    g = float(model.ladder.gamma[k])
    h = float(np.asarray(model.base(x / g), dtype=np.float64))
    evals = 0
    for spec, w in model.levels[:k]:
        h = h + step_net_eval(spec, w, h)
        evals += 1
    return g * h, evals


def readout_array(model: HierarchicalModel, xs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`readout`, grouping instances by band."""
    xv = np.asarray(xs, dtype=np.float64)
    ks = scale_indices(xv, model.ladder)
    out = np.empty_like(xv)
    for k in np.unique(ks):
        mask = ks == k
        g = float(model.ladder.gamma[k])
        out[mask] = g * forward_level(model, int(k), xv[mask] / g)
    return out


def riemann_reference_model(
    bundle: DiffeoBundle,
    ladder: ScaleLadder,
    specs: Sequence[LevelSpec],
    base_slope: float | None = None,
) -> HierarchicalModel:
    """The canonical reference weights: each level Riemann-samples its residual.

    Level k discretizes the step network built from psi_k of the target's
    ladder decomposition; the bounded-norm guarantee keeps every level
    inside its budget. Defaults the base slope to f'(0).
    """
    if len(specs) != ladder.d:
        raise ValueError("need one level spec per ladder level")
    if base_slope is None:
        base_slope = float(bundle.df(0.0))
    levels = []
    for k, spec in enumerate(specs, start=1):
        g_prev = float(ladder.gamma[k - 1])
        g_next = float(ladder.gamma[k])
        a1, a2 = psi_domain(bundle, g_prev)
        continuous = riemann_weights(
            lambda b: psi_prime(bundle, g_prev, g_next, b),
            float(psi(bundle, g_prev, g_next, a1)),
            (a1, a2),
            spec,
        )
        levels.append((spec, discretize_weights(continuous, spec.eta)))
    return HierarchicalModel(ladder=ladder, base_slope=base_slope, levels=tuple(levels))


def model_to_json_dict(model: HierarchicalModel) -> dict:
    """JSON form; weights stay in integer lattice units so nothing is lost."""
    if model.base_fn is not None:
        raise ValueError("models with a callable base map do not serialize")
    return {
        "ladder": {
            "epsilon": model.ladder.epsilon,
            "beta": model.ladder.beta,
            "d": model.ladder.d,
        },
        "base_slope": model.base_slope,
        "levels": [
            {
                "tau": spec.tau,
                "eta": spec.eta,
                "rho": spec.rho,
                "span": spec.span,
                "weights": list(w.units),
            }
            for spec, w in model.levels
        ],
    }


def model_from_json_dict(data: dict) -> HierarchicalModel:
    ladder = build_ladder(data["ladder"]["epsilon"], data["ladder"]["beta"], data["ladder"]["d"])
    levels = []
    for entry in data["levels"]:
        spec = LevelSpec(tau=entry["tau"], eta=entry["eta"], rho=entry["rho"], span=entry["span"])
        levels.append((spec, WeightVector(units=tuple(entry["weights"]), eta=spec.eta)))
    return HierarchicalModel(ladder=ladder, base_slope=data["base_slope"], levels=tuple(levels))


def save_model(model: HierarchicalModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json_dict(model), indent=2) + "\n")


def load_model(path) -> HierarchicalModel:
    return model_from_json_dict(json.loads(Path(path).read_text()))
