"""Scale-band geometry of the instance domain, power-law sampling, datasets.

Instances live in the two-sided annulus eps <= |x| < R with R = eps*beta^d,
partitioned into d geometric bands: band k holds eps*beta^(k-1) <= |x| <
eps*beta^k. The matching scale sequence is gamma_k = beta^(k-d), so band k
is exactly R*gamma_{k-1} <= |x| < R*gamma_k.

The instance distribution is a symmetric bounded power law
q(x) = 1/(C' |x|^alpha) on the annulus, sampled by inverse CDF. Datasets
persist as a CSV of (x, y) pairs at 17 significant digits plus a JSON
manifest carrying every generation parameter, which reproduces the file
byte-for-byte.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .rng import substream

__all__ = [
    "ScaleLadder",
    "PowerLaw",
    "Dataset",
    "build_ladder",
    "scale_of",
    "scale_indices",
    "power_law",
    "density",
    "scale_mass",
    "sample_power_law",
    "sample_power_law_rng",
    "scale_invariance_check",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "format_float",
]

DATASET_MODES = ("tanh-target", "planted-teacher")


def format_float(v: float) -> str:
    """Render a float with 17 significant digits (lossless round-trip)."""
    return f"{float(v):.17g}"


@dataclass(frozen=True)
class ScaleLadder:
    """Geometry (eps, beta, d) with derived radius, scales, and band edges.

    Equality compares the defining triple only; the arrays are derived.
    """

    epsilon: float
    beta: float
    d: int
    radius: float = field(init=False)
    gamma: np.ndarray = field(init=False, repr=False, compare=False)
    edges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.beta <= 1:
            raise ValueError("beta must exceed 1")
        if self.d < 1:
            raise ValueError("need at least one scale band")
        gamma = self.beta ** (np.arange(self.d + 1) - self.d)
        edges = self.epsilon * self.beta ** np.arange(self.d + 1)
        gamma.flags.writeable = False
        edges.flags.writeable = False
        object.__setattr__(self, "radius", float(edges[-1]))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "edges", edges)

    def scale_list(self) -> tuple[float, ...]:
        return tuple(float(g) for g in self.gamma)


def build_ladder(epsilon: float, beta: float, d: int) -> ScaleLadder:
    return ScaleLadder(float(epsilon), float(beta), int(d))


def scale_of(x: float, ladder: ScaleLadder) -> int:
    """The unique band index k in 1..d containing |x|; right-open bands."""
    k = scale_indices(np.asarray([x]), ladder)
    return int(k[0])


def scale_indices(xs: np.ndarray, ladder: ScaleLadder) -> np.ndarray:
    """Vectorized :func:`scale_of`."""
    mags = np.abs(np.asarray(xs, dtype=np.float64))
    ks = np.searchsorted(ladder.edges, mags, side="right")
    if np.any(ks < 1) or np.any(ks > ladder.d):
        bad = mags[(ks < 1) | (ks > ladder.d)][0]
        raise ValueError(f"|x| = {bad} outside the instance domain [{ladder.epsilon}, {ladder.radius})")
    return ks.astype(np.int64)


@dataclass(frozen=True)
class PowerLaw:
    """Symmetric density 1/(C' |x|^alpha) on the ladder's annulus, alpha >= 1."""

    alpha: float
    ladder: ScaleLadder
    normalizer: float = field(init=False)

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("shape parameter must be at least 1")
        eps, r = self.ladder.epsilon, self.ladder.radius
        if self.alpha == 1.0:
            c = 2.0 * math.log(r / eps)
        else:
            c = 2.0 * (eps ** (1.0 - self.alpha) - r ** (1.0 - self.alpha)) / (self.alpha - 1.0)
        object.__setattr__(self, "normalizer", c)


def power_law(alpha: float, ladder: ScaleLadder) -> PowerLaw:
    return PowerLaw(float(alpha), ladder)


def density(law: PowerLaw, x) -> np.ndarray:
    """q(x), zero outside the annulus."""
    mags = np.abs(np.asarray(x, dtype=np.float64))
    inside = (mags >= law.ladder.epsilon) & (mags < law.ladder.radius)
    out = np.zeros_like(mags)
    out[inside] = 1.0 / (law.normalizer * mags[inside] ** law.alpha)
    return float(out) if np.isscalar(x) else out


def scale_mass(law: PowerLaw, k: int) -> float:
    """Exact probability of band k under the power law."""
    if not 1 <= k <= law.ladder.d:
        raise ValueError(f"band index {k} outside 1..{law.ladder.d}")
    a = float(law.ladder.edges[k - 1])
    b = float(law.ladder.edges[k])
    if law.alpha == 1.0:
        seg = math.log(b / a)
    else:
        seg = (a ** (1.0 - law.alpha) - b ** (1.0 - law.alpha)) / (law.alpha - 1.0)
    return 2.0 * seg / law.normalizer


def _magnitude_inverse_cdf(law: PowerLaw, u: np.ndarray) -> np.ndarray:
    eps, r = law.ladder.epsilon, law.ladder.radius
    if law.alpha == 1.0:
        return eps * (r / eps) ** u
    lo = eps ** (1.0 - law.alpha)
    hi = r ** (1.0 - law.alpha)
    return (lo - u * (lo - hi)) ** (1.0 / (1.0 - law.alpha))


def sample_power_law(law: PowerLaw, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws: uniform sign, magnitude by inverse CDF on [eps, R).

    Deterministic given the seed (the "sampling" substream).
    """
    return sample_power_law_rng(law, n, substream(seed, "sampling"))


def sample_power_law_rng(law: PowerLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Like :func:`sample_power_law` but drawing from an explicit generator."""
    if n < 1:
        raise ValueError("need at least one sample")
    mags = _magnitude_inverse_cdf(law, rng.random(n))
    # u < 1 keeps magnitudes below R mathematically; clamp the one-ulp
    # rounding case so band lookup never rejects a legitimate draw.
    mags = np.clip(mags, law.ladder.epsilon, np.nextafter(law.ladder.radius, 0.0))
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return signs * mags


def scale_invariance_check(law: PowerLaw, grid_n: int = 1000) -> float:
    """Max relative deviation of q(x/beta) from beta^alpha q(x).

    Evaluated on points where x and x/beta both lie in the annulus; an
    algebraic identity, so the result should sit at rounding level.
    """
    beta = law.ladder.beta
    lo = law.ladder.epsilon * beta
    hi = law.ladder.radius * (1.0 - 1e-12)
    xs = np.linspace(lo, hi, grid_n)
    q = density(law, xs)
    q_shift = density(law, xs / beta)
    return float(np.max(np.abs(q_shift - beta**law.alpha * q) / q))


@dataclass(frozen=True)
class Dataset:
    """Sampled instances with labels from a declared target, plus provenance."""

    instances: np.ndarray = field(compare=False)
    labels: np.ndarray = field(compare=False)
    seed: int
    mode: str
    ladder: ScaleLadder

    def __post_init__(self):
        xs = np.array(self.instances, dtype=np.float64, copy=True)
        ys = np.array(self.labels, dtype=np.float64, copy=True)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValueError("instances and labels must be matching 1-D arrays")
        if self.mode not in DATASET_MODES:
            raise ValueError(f"unknown dataset mode {self.mode!r}")
        scale_indices(xs, self.ladder)  # every instance must be in-domain
        xs.flags.writeable = False
        ys.flags.writeable = False
        object.__setattr__(self, "instances", xs)
        object.__setattr__(self, "labels", ys)

    @property
    def n(self) -> int:
        return int(self.instances.size)


def generate_dataset(
    target: Callable[[np.ndarray], np.ndarray],
    law: PowerLaw,
    n: int,
    seed: int,
    mode: str,
) -> Dataset:
    """Draw instances from the power law and label them with ``target``."""
    if n < 1:
        raise ValueError("need at least one example")
    xs = sample_power_law(law, n, seed)
    ys = np.asarray(target(xs), dtype=np.float64)
    return Dataset(instances=xs, labels=ys, seed=seed, mode=mode, ladder=law.ladder)


def save_dataset(dataset: Dataset, law: PowerLaw, csv_path, manifest_path) -> None:
    """Write the (x, y) CSV plus the JSON manifest that reproduces it."""
    csv_path, manifest_path = Path(csv_path), Path(manifest_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in zip(dataset.instances, dataset.labels):
            writer.writerow([format_float(x), format_float(y)])
    manifest = {
        "alpha": law.alpha,
        "epsilon": dataset.ladder.epsilon,
        "beta": dataset.ladder.beta,
        "d": dataset.ladder.d,
        "n": dataset.n,
        "seed": dataset.seed,
        "mode": dataset.mode,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(csv_path, manifest_path) -> tuple[Dataset, PowerLaw]:
    """Inverse of :func:`save_dataset`."""
    manifest = json.loads(Path(manifest_path).read_text())
    ladder = build_ladder(manifest["epsilon"], manifest["beta"], manifest["d"])
    law = power_law(manifest["alpha"], ladder)
    xs, ys = [], []
    with Path(csv_path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x", "y"]:
            raise ValueError(f"unexpected dataset header {header!r}")
        for row in reader:
            xs.append(float(row[0]))
            ys.append(float(row[1]))
    dataset = Dataset(
        instances=np.asarray(xs),
        labels=np.asarray(ys),
        seed=manifest["seed"],
        mode=manifest["mode"],
        ladder=ladder,
    )
    return dataset, law
