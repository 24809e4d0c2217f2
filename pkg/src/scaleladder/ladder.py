"""Dilations and ladder decompositions of smooth invertible functions.

A target function f with f(0) = 0 is viewed through dilations
``f_[g](x) = f(g x)/g``; for an increasing sequence of scales
g_0 < g_1 < ... < g_d = 1 it factors exactly as

    f = rung_d o ... o rung_1 o f_[g_0],

where ``rung_k = f_[g_k] o f_[g_{k-1}]^{-1}``. Each rung is near the
identity; its residual ``psi_k = rung_k - id`` is what a hierarchical model
level has to learn. This module evaluates the factorization, the residuals
and their closed form for the tanh target, and produces numerical
certificates that grid estimates of the residuals' Lipschitz and smoothness
constants stay below the analytic budgets

    lip(psi_k) <= C1 * R * (g_k - g_{k-1}),      sup|psi_k''| <= C2,

with C1 = 3*M1*M2 and C2 = M2*(M1^2 + M1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DiffeoBundle",
    "LadderSpec",
    "DomainError",
    "tanh_bundle",
    "linear_bundle",
    "scaled_sinh_bundle",
    "dilate",
    "dilate_inverse",
    "rung",
    "rung_derivative",
    "psi",
    "psi_prime",
    "psi_domain",
    "tanh_psi_closed_form",
    "compose_ladder",
    "estimate_lipschitz",
    "estimate_second_derivative_sup",
    "certify_rungs",
    "certify_linearization",
    "psi_curve_rows",
]

CONSTANT_GRID_N = 100_001
CONSTANT_INFLATION = 1.01
DOMAIN_SHRINK = 1e-9


class DomainError(ValueError):
    """An evaluation point fell outside a function's certified domain."""


@dataclass(frozen=True)
class DiffeoBundle:
    """A target function packaged with derivatives, inverse, and regularity constants.

    ``m1`` bounds |f'| and |(f^-1)'|, ``m2`` bounds |f''| and |(f^-1)''| on
    the relevant grids. The factory constructors compute both by maximizing
    the derivative magnitudes over 1e5-point grids and inflating the result
    by 1%, so that grid lower-bound estimates made elsewhere can never
    exceed them for spurious reasons.

    Callables must be vectorized (accept and return numpy arrays) and
    reentrant.
    """

    name: str
    f: Callable = field(repr=False)
    df: Callable = field(repr=False)
    d2f: Callable = field(repr=False)
    f_inv: Callable = field(repr=False)
    df_inv: Callable = field(repr=False)
    d2f_inv: Callable = field(repr=False)
    m1: float
    m2: float
    radius: float

    def __post_init__(self):
        if abs(float(self.f(0.0))) > 1e-12:
            raise ValueError(f"{self.name}: f(0) must be 0")
        if self.m1 < 1.0:
            raise ValueError(f"{self.name}: m1 = {self.m1} < 1 is impossible for an invertible Lipschitz pair")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def c1(self) -> float:
        return 3.0 * self.m1 * self.m2

    @property
    def c2(self) -> float:
        return self.m2 * (self.m1**2 + self.m1)

    def f_range(self) -> tuple[float, float]:
        """Open interval f((-radius, radius)), as (lo, hi)."""
        a = float(self.f(-self.radius))
        b = float(self.f(self.radius))
        return (min(a, b), max(a, b))


@dataclass(frozen=True)
class LadderSpec:
    """Strictly increasing scale sequence g_0 < g_1 < ... < g_d = 1."""

    scales: tuple[float, ...]

    def __post_init__(self):
        scales = tuple(float(g) for g in self.scales)
        if len(scales) < 2:
            raise ValueError("need at least g_0 and g_d")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError("scales must be strictly increasing")
        if scales[0] <= 0:
            raise ValueError("scales must be positive")
        if abs(scales[-1] - 1.0) > 1e-12:
            raise ValueError(f"top scale must be 1, got {scales[-1]!r}")
        object.__setattr__(self, "scales", scales)

    @property
    def d(self) -> int:
        return len(self.scales) - 1

    @classmethod
    def geometric(cls, beta: float, d: int) -> "LadderSpec":
        """Scales beta^(k-d) for k = 0..d."""
        return cls(tuple(beta ** (k - d) for k in range(d + 1)))


def _as_spec(scales) -> LadderSpec:
    return scales if isinstance(scales, LadderSpec) else LadderSpec(tuple(scales))


def dilate(bundle: DiffeoBundle, gamma: float, x):
    """f(gamma*x)/gamma, the view of f zoomed in by gamma."""
    if not 0 < gamma <= 1:
        raise ValueError(f"scale must lie in (0, 1], got {gamma}")
    arg = gamma * np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arg) >= bundle.radius):
        raise DomainError(f"{bundle.name}: |gamma*x| must stay below radius {bundle.radius}")
    out = bundle.f(arg) / gamma
    return float(out) if np.isscalar(x) else out


def dilate_inverse(bundle: DiffeoBundle, gamma: float, x):
    """f^(-1)(gamma*x)/gamma; inverse of :func:`dilate` at the same scale."""
    if not 0 < gamma <= 1:
        raise ValueError(f"scale must lie in (0, 1], got {gamma}")
    lo, hi = bundle.f_range()
    arg = gamma * np.asarray(x, dtype=np.float64)
    # Chained evaluations can land a rounding error outside the open range;
    # absorb up to a relative 1e-9 and reject anything larger.
    slack = 1e-9 * (hi - lo)
    if np.any(arg <= lo - slack) or np.any(arg >= hi + slack):
        raise DomainError(f"{bundle.name}: gamma*x outside the range of f")
    arg = np.clip(arg, lo + DOMAIN_SHRINK * (hi - lo), hi - DOMAIN_SHRINK * (hi - lo))
    out = bundle.f_inv(arg) / gamma
    return float(out) if np.isscalar(x) else out


def rung(bundle: DiffeoBundle, gamma_prev: float, gamma_next: float, x):
    """One ladder step: the finer dilation composed with the coarser inverse."""
    if gamma_prev > gamma_next:
        raise ValueError("gamma_prev must not exceed gamma_next")
    return dilate(bundle, gamma_next, dilate_inverse(bundle, gamma_prev, x))


def rung_derivative(bundle: DiffeoBundle, gamma_prev: float, gamma_next: float, x):
    """d/dx of :func:`rung`: f'((g_next/g_prev) * f^(-1)(g_prev x)) * (f^(-1))'(g_prev x)."""
    arg = gamma_prev * np.asarray(x, dtype=np.float64)
    inner = bundle.f_inv(arg)
    out = bundle.df((gamma_next / gamma_prev) * inner) * bundle.df_inv(arg)
    return float(out) if np.isscalar(x) else out


def psi(bundle: DiffeoBundle, gamma_prev: float, gamma_next: float, x):
    """Residual of one ladder step against the identity."""
    return rung(bundle, gamma_prev, gamma_next, x) - np.asarray(x, dtype=np.float64)


def psi_prime(bundle: DiffeoBundle, gamma_prev: float, gamma_next: float, x):
    """Derivative of :func:`psi`."""
    return rung_derivative(bundle, gamma_prev, gamma_next, x) - 1.0


def psi_domain(bundle: DiffeoBundle, gamma_prev: float, shrink: float = DOMAIN_SHRINK) -> tuple[float, float]:
    """Domain of the level-k residual: the range of the coarser dilation.

    Shrunk by ``shrink`` at each end so the inverse is never evaluated at
    the boundary.
    """
    if not 0 < gamma_prev < 1:
        raise ValueError("gamma_prev must lie in (0, 1)")
    ends = np.asarray([bundle.f(-gamma_prev * bundle.radius), bundle.f(gamma_prev * bundle.radius)])
    ends = ends / gamma_prev
    lo, hi = float(ends.min()), float(ends.max())
    return lo + shrink, hi - shrink


def tanh_psi_closed_form(gamma_prev: float, x):
    """Residual of a tanh ladder step under the doubling schedule g_k = 2*g_{k-1}.

    Equals -g_{k-1}^2 x^3 / (1 + g_{k-1}^2 x^2); the coarser scale alone
    determines it.
    """
    xv = np.asarray(x, dtype=np.float64)
    out = -(gamma_prev**2) * xv**3 / (1.0 + gamma_prev**2 * xv**2)
    return float(out) if np.isscalar(x) else out


def compose_ladder(bundle: DiffeoBundle, scales, x):
    """Evaluate rung_d o ... o rung_1 o f_[g_0]; telescopes back to f(x)."""
    spec = _as_spec(scales)
    y = dilate(bundle, spec.scales[0], x)
    for g_prev, g_next in zip(spec.scales, spec.scales[1:]):
        y = rung(bundle, g_prev, g_next, y)
    return y


def estimate_lipschitz(g: Callable, lo: float, hi: float, grid_n: int) -> float:
    """Max adjacent-pair slope of g on a uniform grid; a lower bound on lip(g)."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    if grid_n < 2:
        raise ValueError("need at least two grid points")
    xs = np.linspace(lo, hi, grid_n)
    ys = np.asarray(g(xs), dtype=np.float64)
    return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))


def estimate_second_derivative_sup(g: Callable, lo: float, hi: float, grid_n: int) -> float:
    """Max |central second difference| / h^2 with h = (hi-lo)/grid_n.

    For twice-differentiable g every second difference equals g''(xi) at
    some interior xi, so this is a lower bound on sup|g''|.
    """
    if grid_n < 3:
        raise ValueError("need at least three grid points")
    h = (hi - lo) / grid_n
    xs = lo + h * np.arange(1, grid_n)
    ys = np.asarray(g(xs), dtype=np.float64)
    second = ys[2:] - 2.0 * ys[1:-1] + ys[:-2]
    return float(np.max(np.abs(second)) / h**2)


@dataclass(frozen=True)
class RungCertificate:
    level: int
    lip_est: float
    lip_bound: float
    smooth_est: float
    smooth_bound: float

    @property
    def passed(self) -> bool:
        return self.lip_est <= self.lip_bound and self.smooth_est <= self.smooth_bound

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "lip_est": self.lip_est,
            "lip_bound": self.lip_bound,
            "smooth_est": self.smooth_est,
            "smooth_bound": self.smooth_bound,
            "pass": self.passed,
        }


def certify_rungs(bundle: DiffeoBundle, scales, grid_n: int = 2000) -> list[RungCertificate]:
    """Per-level certificates that residual grid estimates respect the analytic budgets."""
    spec = _as_spec(scales)
    out = []
    for k in range(1, spec.d + 1):
        g_prev, g_next = spec.scales[k - 1], spec.scales[k]
        lo, hi = psi_domain(bundle, g_prev)

        def res(x, a=g_prev, b=g_next):
            return psi(bundle, a, b, x)

        lip_est = estimate_lipschitz(res, lo, hi, grid_n)
        smooth_est = estimate_second_derivative_sup(res, lo, hi, grid_n)
        out.append(
            RungCertificate(
                level=k,
                lip_est=lip_est,
                lip_bound=bundle.c1 * bundle.radius * (g_next - g_prev),
                smooth_est=smooth_est,
                smooth_bound=bundle.c2,
            )
        )
    return out


@dataclass(frozen=True)
class LinearizationCertificate:
    gamma: float
    lip_est: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.lip_est <= self.bound

    def to_json_dict(self) -> dict:
        return {"gamma": self.gamma, "lip_est": self.lip_est, "bound": self.bound, "pass": self.passed}


def certify_linearization(bundle: DiffeoBundle, gamma: float, grid_n: int = 2000) -> LinearizationCertificate:
    """Certificate that f_[gamma] minus its tangent at 0 is gamma*M2*R-Lipschitz."""
    slope = float(bundle.df(0.0))
    r = bundle.radius * (1.0 - DOMAIN_SHRINK)

    def drift(x):
        return dilate(bundle, gamma, x) - slope * np.asarray(x, dtype=np.float64)

    est = estimate_lipschitz(drift, -r, r, grid_n)
    return LinearizationCertificate(gamma=gamma, lip_est=est, bound=gamma * bundle.m2 * bundle.radius)


def psi_curve_rows(bundle: DiffeoBundle, scales, points: int = 400) -> list[tuple[int, float, float]]:
    """(level, x, residual) rows for every level, plot- and CSV-ready."""
    spec = _as_spec(scales)
    rows = []
    for k in range(1, spec.d + 1):
        g_prev, g_next = spec.scales[k - 1], spec.scales[k]
        lo, hi = psi_domain(bundle, g_prev)
        xs = np.linspace(lo, hi, points)
        vals = psi(bundle, g_prev, g_next, xs)
        rows.extend((k, float(x), float(v)) for x, v in zip(xs, vals))
    return rows


def _certified_constants(f, df, d2f, f_inv, df_inv, d2f_inv, radius: float) -> tuple[float, float]:
    """Grid-maximized (m1, m2) with 1% inflation, the documented constants oracle."""
    xs = np.linspace(-radius, radius, CONSTANT_GRID_N)
    ylo, yhi = sorted((float(f(-radius)), float(f(radius))))
    ys = np.linspace(ylo, yhi, CONSTANT_GRID_N)
    m1 = max(1.0, float(np.max(np.abs(df(xs)))), float(np.max(np.abs(df_inv(ys)))))
    m2 = max(float(np.max(np.abs(d2f(xs)))), float(np.max(np.abs(d2f_inv(ys)))))
    return CONSTANT_INFLATION * m1, CONSTANT_INFLATION * m2


def _validate_bundle(bundle: DiffeoBundle, grid_n: int = 1001) -> DiffeoBundle:
    xs = np.linspace(-bundle.radius, bundle.radius, grid_n)[1:-1]
    back = bundle.f_inv(bundle.f(xs))
    if np.max(np.abs(back - xs)) > 1e-10:
        raise ValueError(f"{bundle.name}: inverse round-trip exceeds 1e-10")
    return bundle


def tanh_bundle(radius: float = 1.0) -> DiffeoBundle:
    """tanh with atanh inverse on (-radius, radius)."""
    m1, m2 = _certified_constants(
        np.tanh,
        lambda x: 1.0 / np.cosh(x) ** 2,
        lambda x: -2.0 * np.tanh(x) / np.cosh(x) ** 2,
        np.arctanh,
        lambda y: 1.0 / (1.0 - y**2),
        lambda y: 2.0 * y / (1.0 - y**2) ** 2,
        radius,
    )
    return _validate_bundle(
        DiffeoBundle(
            name="tanh",
            f=np.tanh,
            df=lambda x: 1.0 / np.cosh(x) ** 2,
            d2f=lambda x: -2.0 * np.tanh(x) / np.cosh(x) ** 2,
            f_inv=np.arctanh,
            df_inv=lambda y: 1.0 / (1.0 - y**2),
            d2f_inv=lambda y: 2.0 * y / (1.0 - y**2) ** 2,
            m1=m1,
            m2=m2,
            radius=radius,
        )
    )


def linear_bundle(slope: float, radius: float = 1.0) -> DiffeoBundle:
    """slope * x; the trivial oracle with identically zero residuals."""
    if slope == 0:
        raise ValueError("slope must be nonzero")
    c = float(slope)
    m1 = CONSTANT_INFLATION * max(1.0, abs(c), 1.0 / abs(c))
    return _validate_bundle(
        DiffeoBundle(
            name="linear",
            f=lambda x: c * np.asarray(x, dtype=np.float64),
            df=lambda x: np.full_like(np.asarray(x, dtype=np.float64), c),
            d2f=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
            f_inv=lambda y: np.asarray(y, dtype=np.float64) / c,
            df_inv=lambda y: np.full_like(np.asarray(y, dtype=np.float64), 1.0 / c),
            d2f_inv=lambda y: np.zeros_like(np.asarray(y, dtype=np.float64)),
            m1=m1,
            m2=0.0,
            radius=radius,
        )
    )


def scaled_sinh_bundle(alpha: float = 1.0, radius: float = 1.0) -> DiffeoBundle:
    """alpha * sinh(x/alpha); a second curved target for robustness checks."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    a = float(alpha)
    f = lambda x: a * np.sinh(np.asarray(x, dtype=np.float64) / a)
    df = lambda x: np.cosh(np.asarray(x, dtype=np.float64) / a)
    d2f = lambda x: np.sinh(np.asarray(x, dtype=np.float64) / a) / a
    f_inv = lambda y: a * np.arcsinh(np.asarray(y, dtype=np.float64) / a)
    df_inv = lambda y: 1.0 / np.sqrt(1.0 + (np.asarray(y, dtype=np.float64) / a) ** 2)
    d2f_inv = lambda y: -np.asarray(y, dtype=np.float64) / (a**2 * (1.0 + (np.asarray(y, dtype=np.float64) / a) ** 2) ** 1.5)
    m1, m2 = _certified_constants(f, df, d2f, f_inv, df_inv, d2f_inv, radius)
    return _validate_bundle(
        DiffeoBundle(
            name="scaled-sinh",
            f=f,
            df=df,
            d2f=d2f,
            f_inv=f_inv,
            df_inv=df_inv,
            d2f_inv=d2f_inv,
            m1=m1,
            m2=m2,
            radius=radius,
        )
    )
