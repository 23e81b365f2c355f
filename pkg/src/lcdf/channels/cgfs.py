"""Cumulant generating functions of base measures for exponential families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special, stats

from ..errors import DomainError, NumericalError, ValidationError


@dataclass(frozen=True)
class Cgf:
    """psi(theta) = log E exp(theta*y) of a base law, with its derivatives.

    ``expect(g)`` integrates g against the base law and is what the
    Cramer-Rao checks use. ``mean_range`` is the open image of the domain
    under psi'. Missing derivatives fall back to 5-point stencils.
    """

    name: str
    psi: Callable[[float], float]
    domain: tuple
    expect: Callable[[Callable], float]
    mean_range: tuple
    dpsi: Optional[Callable[[float], float]] = None
    d2psi: Optional[Callable[[float], float]] = None
    params: dict = field(default_factory=dict)

    def d1(self, t):
        if self.dpsi is not None:
            return self.dpsi(t)
        h = 1e-4
        f = self.psi
        return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)

    def d2(self, t):
        if self.d2psi is not None:
            return self.d2psi(t)
        h = 1e-4
        f = self.d1
        return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)

    @property
    def mean(self) -> float:
        return float(self.d1(0.0))

    @property
    def variance(self) -> float:
        return float(self.d2(0.0))

    def contains(self, t) -> bool:
        lo, hi = self.domain
        return lo < t < hi

    def validate(self):
        if abs(self.psi(0.0)) > 1e-14:
            raise ValidationError(f"cgf {self.name}: psi(0) must vanish")
        if not self.variance > 0:
            raise ValidationError(f"cgf {self.name}: psi''(0) must be positive")


def theta_of_x(cgf: Cgf, x: float) -> float:
    """Natural parameter whose mean is cgf.mean + x.

    Geometric bracket expansion from 0, bisection down to width 1e-14, then
    two Newton steps. Raises DomainError if no bracket exists.
    """
    target = cgf.mean + float(x)
    tol = 1e-12 * max(1.0, abs(target))
    if x == 0:
        return 0.0
    up = target > cgf.mean
    edge = cgf.domain[1] if up else cgf.domain[0]
    inner, step = 0.0, 1.0
    for _ in range(200):
        outer = inner + step if up else inner - step
        if not cgf.contains(outer):
            outer = 0.5 * (inner + edge)
        val = cgf.d1(outer)
        if math.isfinite(val) and (val >= target if up else val <= target):
            break
        inner, step = outer, 2.0 * step
    else:
        raise DomainError(f"mean {target!r} not reachable by {cgf.name}; searched theta between 0 and {outer!r}")
    lo, hi = (inner, outer) if up else (outer, inner)
    while hi - lo > 1e-14 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if cgf.d1(mid) < target:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    for _ in range(2):
        slope = cgf.d2(t)
        if slope > 0:
            t_new = t - (cgf.d1(t) - target) / slope
            if lo <= t_new <= hi:
                t = t_new
    if abs(cgf.d1(t) - target) > tol:
        raise NumericalError(f"theta inversion for {cgf.name} missed target {target!r}", abs(cgf.d1(t) - target))
    return t


def _quad_expect(pdf, a, b):
    def expect(g):
        val, err = integrate.quad(lambda y: pdf(y) * g(y), a, b, epsabs=1e-14, epsrel=1e-12, limit=400)
        if err > 1e-10 * max(1.0, abs(val)):
            raise NumericalError("base-measure quadrature did not converge", err)
        return val

    return expect


def gaussian_cgf(sigma: float = 1.0) -> Cgf:
    s2 = sigma * sigma
    return Cgf(
        name="gaussian",
        mean_range=(-math.inf, math.inf),
        psi=lambda t: 0.5 * s2 * t * t,
        dpsi=lambda t: s2 * t,
        d2psi=lambda t: s2,
        domain=(-math.inf, math.inf),
        expect=_quad_expect(lambda y: math.exp(-0.5 * y * y / s2) / math.sqrt(2 * math.pi * s2), -12 * sigma, 12 * sigma),
        params={"sigma": sigma},
    )


def bernoulli_cgf(c: float = 0.5) -> Cgf:
    if not 0 < c < 1:
        raise ValidationError("Bernoulli mean must lie in (0, 1)")
    logit = math.log(c) - math.log1p(-c)
    return Cgf(
        name="bernoulli",
        mean_range=(0.0, 1.0),
        psi=lambda t: float(np.logaddexp(math.log1p(-c), math.log(c) + t)),
        dpsi=lambda t: float(special.expit(t + logit)),
        d2psi=lambda t: float(special.expit(t + logit) * special.expit(-(t + logit))),
        domain=(-math.inf, math.inf),
        expect=lambda g: (1 - c) * g(0) + c * g(1),
        params={"c": c},
    )


def poisson_cgf(mu: float = 1.0) -> Cgf:
    if not mu > 0:
        raise ValidationError("Poisson mean must be positive")
    top = int(mu + 40.0 * math.sqrt(mu) + 60)
    ks = np.arange(top + 1)
    pmf = stats.poisson.pmf(ks, mu)

    def expect(g):
        return math.fsum(float(p) * g(int(k)) for k, p in zip(ks, pmf))

    return Cgf(
        name="poisson",
        mean_range=(0.0, math.inf),
        psi=lambda t: mu * math.expm1(t),
        dpsi=lambda t: mu * math.exp(t),
        d2psi=lambda t: mu * math.exp(t),
        domain=(-math.inf, 710.0),
        expect=expect,
        params={"mu": mu},
    )


def exponential_cgf(mean: float = 1.0) -> Cgf:
    if not mean > 0:
        raise ValidationError("mean must be positive")
    return Cgf(
        name="exponential",
        mean_range=(0.0, math.inf),
        psi=lambda t: -math.log1p(-mean * t),
        dpsi=lambda t: mean / (1 - mean * t),
        d2psi=lambda t: mean * mean / (1 - mean * t) ** 2,
        domain=(-math.inf, 1.0 / mean),
        expect=_quad_expect(lambda y: math.exp(-y / mean) / mean, 0.0, 60.0 * mean),
        params={"mean": mean},
    )


BUILTIN = {
    "gaussian": gaussian_cgf,
    "bernoulli": bernoulli_cgf,
    "poisson": poisson_cgf,
    "exponential": exponential_cgf,
}


def from_config(block: dict) -> Cgf:
    block = dict(block)
    name = block.pop("name", None)
    if name not in BUILTIN:
        raise ValidationError(f"unknown cgf {name!r}; choose from {sorted(BUILTIN)}")
    try:
        return BUILTIN[name](**block)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for cgf {name}: {exc}") from None
