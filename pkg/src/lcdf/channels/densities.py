"""Symmetric noise densities for additive channels.

Each density is described by its log-density, which keeps likelihood ratios
finite far in the tails, plus a truncation radius for quadrature chosen from
an analytic tail bound so that the neglected mass (and the neglected part of
the Fisher integrand) is below 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from ..errors import NumericalError, ValidationError

QUAD_OPTS = dict(epsabs=1e-14, epsrel=1e-12, limit=400)


@dataclass(frozen=True)
class Density:
    """A symmetric, strictly positive, smooth density on the real line.

    ``logpdf`` must be vectorised. ``score`` is -p'/p if known in closed
    form; otherwise it is obtained with a 5-point stencil on log p.
    ``resolution`` is the length scale of the sharpest feature, used to size
    quadrature panels.
    """

    name: str
    logpdf: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, tuple], np.ndarray]
    radius: float
    resolution: float
    variance: float
    score: Optional[Callable] = None
    half_mass: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def pdf(self, y):
        return np.exp(self.logpdf(np.asarray(y, dtype=float)))

    def neg_log_derivative(self, y):
        """-p'(y)/p(y)."""
        y = np.asarray(y, dtype=float)
        if self.score is not None:
            return self.score(y)
        h = 1e-5 * self.resolution
        lp = self.logpdf
        return -(lp(y - 2 * h) - 8 * lp(y - h) + 8 * lp(y + h) - lp(y + 2 * h)) / (12 * h)

    def mass_from_zero(self, x: float) -> float:
        """int_0^x p, which is CDF(x) - 1/2 by symmetry."""
        if self.half_mass is not None:
            return float(self.half_mass(x))
        if x == 0:
            return 0.0
        val, err = integrate.quad(self.pdf, 0.0, x, **QUAD_OPTS)
        if err > 1e-11:
            raise NumericalError(f"half-mass quadrature for {self.name} failed", err)
        return val

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.sampler(rng, size)

    def integrate(self, g: Callable, a: float = None, b: float = None, points=None):
        """int_a^b g(y) dy on the truncated domain with an error check."""
        a = -self.radius if a is None else a
        b = self.radius if b is None else b
        pts = sorted({p for p in (0.0, *(points or ())) if a < p < b})
        val, err = integrate.quad(g, a, b, points=pts or None, **QUAD_OPTS)
        if not math.isfinite(val) or err > 1e-10 * max(1.0, abs(val)):
            raise NumericalError(f"quadrature over {self.name} density did not converge", err)
        return val

    def scaled(self, s: float) -> "Density":
        """Law of s*z when z has this density."""
        if not s > 0:
            raise ValidationError("scale must be positive")
        base = self
        score = None if base.score is None else (lambda y: base.score(y / s) / s)
        half = None if base.half_mass is None else (lambda x: base.half_mass(x / s))
        return Density(
            name=f"{base.name}*{s!r}",
            logpdf=lambda y: base.logpdf(y / s) - math.log(s),
            sampler=lambda rng, size: s * base.sampler(rng, size),
            radius=s * base.radius,
            resolution=s * base.resolution,
            variance=s * s * base.variance,
            score=score,
            half_mass=half,
            params={**base.params, "scale": s * base.params.get("scale", 1.0)},
        )

    def validate(self) -> None:
        """Check normalisation (1e-8) and symmetry (1e-12 relative to p(0))."""
        total = self.integrate(self.pdf)
        if abs(total - 1.0) > 1e-8:
            raise ValidationError(f"density {self.name} integrates to {total!r}")
        grid = np.linspace(0.0, self.radius, 97)
        p0 = float(self.pdf(0.0))
        if np.max(np.abs(self.pdf(grid) - self.pdf(-grid))) > 1e-12 * p0:
            raise ValidationError(f"density {self.name} is not symmetric")


def gaussian(sigma: float = 1.0) -> Density:
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    log_norm = -0.5 * math.log(2 * math.pi) - math.log(sigma)
    return Density(
        name="gaussian",
        logpdf=lambda y: log_norm - 0.5 * (np.asarray(y) / sigma) ** 2,
        sampler=lambda rng, size: sigma * rng.standard_normal(size),
        radius=10.0 * sigma,
        resolution=sigma,
        variance=sigma**2,
        score=lambda y: np.asarray(y) / sigma**2,
        half_mass=lambda x: 0.5 * math.erf(x / (sigma * math.sqrt(2))),
        params={"sigma": sigma},
    )


def logistic(scale: float = 1.0) -> Density:
    if not scale > 0:
        raise ValidationError("scale must be positive")

    def logpdf(y):
        a = np.abs(np.asarray(y, dtype=float)) / scale
        return -a - 2.0 * np.log1p(np.exp(-a)) - math.log(scale)

    return Density(
        name="logistic",
        logpdf=logpdf,
        sampler=lambda rng, size: rng.logistic(0.0, scale, size),
        radius=40.0 * scale,
        resolution=scale,
        variance=math.pi**2 * scale**2 / 3.0,
        score=lambda y: np.tanh(np.asarray(y) / (2 * scale)) / scale,
        half_mass=lambda x: 0.5 * math.tanh(x / (2 * scale)),
        params={"scale": scale},
    )


def smoothed_laplace(c: float = 0.5, eps: float = 0.1) -> Density:
    """Laplace density c*exp(-2c|y|) convolved with a N(0, eps^2) kernel.

    Closed form through log Phi; the score is 2c*tanh of half the log-ratio of
    the two one-sided pieces, which tends to 2c*sign(y) as eps -> 0.
    """
    if not (c > 0 and eps > 0):
        raise ValidationError("c and eps must be positive")
    b = 2.0 * c
    shift = b * eps * eps
    const = math.log(b / 2.0) + 0.5 * (b * eps) ** 2

    def pieces(y):
        y = np.asarray(y, dtype=float)
        left = -b * y + special.log_ndtr((y - shift) / eps)
        right = b * y + special.log_ndtr(-(y + shift) / eps)
        return left, right

    def logpdf(y):
        left, right = pieces(y)
        return const + np.logaddexp(left, right)

    def score(y):
        left, right = pieces(y)
        return b * np.tanh(0.5 * (left - right))

    return Density(
        name="smoothed_laplace",
        logpdf=logpdf,
        sampler=lambda rng, size: rng.laplace(0.0, 1.0 / b, size) + eps * rng.standard_normal(size),
        radius=(36.0 + 0.5 * (b * eps) ** 2) / b + 8.0 * eps,
        resolution=min(eps, 1.0 / b),
        variance=2.0 / b**2 + eps**2,
        score=score,
        params={"c": c, "eps": eps},
    )


BUILTIN = {"gaussian": gaussian, "logistic": logistic, "smoothed_laplace": smoothed_laplace}


def from_config(block: dict) -> Density:
    """Build a density from {"name": ..., params..., "scale": optional}."""
    block = dict(block)
    name = block.pop("name", None)
    if name not in BUILTIN:
        raise ValidationError(f"unknown density {name!r}; choose from {sorted(BUILTIN)}")
    scale = block.pop("scale", None)
    try:
        dens = BUILTIN[name](**block)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for density {name}: {exc}") from None
    return dens if scale is None else dens.scaled(float(scale))
