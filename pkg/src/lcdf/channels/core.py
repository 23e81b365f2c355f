"""Scalar channels x -> P_x and the quantities built from them.

Every channel exposes the likelihood ratio L_x(y) = dP_x/dP_0, the overlap
kernel R(x1, x2) = E_0[(L_x1 - 1)(L_x2 - 1)], the Fisher information
F = d^2 R / dx1 dx2 at the origin, and an expectation under the null law
P_0 so that identities can be checked by quadrature.

``overlap`` accepts arrays and broadcasts. Channels whose overlap needs
quadrature evaluate each distinct (x1, x2) pair once, which keeps priors
with a handful of coordinate values (Rademacher-type spikes) cheap.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from ..errors import DomainError, ValidationError
from .cgfs import Cgf, theta_of_x
from .densities import Density


class _Censored:
    """The erasure symbol emitted by a censored channel."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CENSORED"


CENSORED = _Censored()

# above this many distinct pairs, additive overlaps switch from adaptive
# quadrature per pair to one fixed Gauss-Legendre rule shared by all pairs
_DISTINCT_PAIR_LIMIT = 256


class Channel:
    kind = "abstract"
    closed_domain = False

    @property
    def domain(self) -> tuple:
        return (-math.inf, math.inf)

    @property
    def length_scale(self) -> float:
        """Signal scale on which the overlap varies; sets finite-difference steps."""
        return 1.0

    @property
    def degenerate(self) -> bool:
        return self.fisher_information() == 0.0

    def check_signal(self, x):
        lo, hi = self.domain
        x = np.asarray(x, dtype=float)
        if self.closed_domain:
            bad = ~((x >= lo) & (x <= hi))
        else:
            bad = ~((x > lo) & (x < hi))
        if np.any(bad):
            raise DomainError(f"signal {x[bad].ravel()[0]!r} outside the {self.kind} channel domain {self.domain}")
        return x

    def overlap(self, x1, x2):
        x1, x2 = np.broadcast_arrays(self.check_signal(x1), self.check_signal(x2))
        out = self._overlap(x1, x2)
        return float(out) if out.ndim == 0 else out

    def _overlap(self, x1, x2):
        raise NotImplementedError

    def likelihood_ratio(self, x, y):
        raise NotImplementedError

    def fisher_information(self) -> float:
        raise NotImplementedError

    def score_unnormalized(self, y):
        """d L_x(y) / dx at x = 0."""
        raise NotImplementedError

    def null_expectation(self, g) -> float:
        """E_{P_0} g(y)."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


def _distinct_pairs(x1, x2):
    """Distinct unordered pairs among (x1, x2) and the map back to positions."""
    values, codes = np.unique(np.concatenate([x1.ravel(), x2.ravel()]), return_inverse=True)
    codes = np.asarray(codes).ravel()
    c1, c2 = codes[: x1.size], codes[x1.size :]
    key = np.minimum(c1, c2) * len(values) + np.maximum(c1, c2)
    keys, inverse = np.unique(key, return_inverse=True)
    pairs = np.stack([values[keys // len(values)], values[keys % len(values)]], axis=1)
    return pairs, np.asarray(inverse).ravel()


def _by_distinct_pairs(x1, x2, scalar_fn, distinct=None):
    """Apply a scalar symmetric kernel once per distinct unordered pair."""
    pairs, inverse = _distinct_pairs(x1, x2) if distinct is None else distinct
    vals = np.array([scalar_fn(float(p), float(q)) for p, q in pairs])
    return vals[inverse].reshape(x1.shape)


class AdditiveChannel(Channel):
    """y = x + z with z drawn from a symmetric density."""

    kind = "additive"

    def __init__(self, density: Density, validate: bool = True):
        if validate:
            density.validate()
        self.density = density

    @property
    def length_scale(self):
        return min(1.0, self.density.resolution)

    def _log_ratio(self, x, y):
        lp = self.density.logpdf
        return lp(np.asarray(y) - x) - lp(np.asarray(y))

    def likelihood_ratio(self, x, y):
        self.check_signal(x)
        return np.exp(self._log_ratio(x, y))

    def _cached_pair_overlap(self, x1, x2):
        cache = self.__dict__.setdefault("_pair_cache", {})
        if (x1, x2) not in cache:
            cache[(x1, x2)] = self._pair_overlap(x1, x2)
        return cache[(x1, x2)]

    def _pair_overlap(self, x1, x2):
        if x1 == 0.0 or x2 == 0.0:
            return 0.0
        d = self.density
        reach = d.radius + abs(x1) + abs(x2)

        def integrand(y):
            return d.pdf(y) * np.expm1(self._log_ratio(x1, y)) * np.expm1(self._log_ratio(x2, y))

        return d.integrate(integrand, -reach, reach, points=(x1, x2, x1 + x2))

    def _overlap(self, x1, x2):
        if x1.ndim == 0:
            return np.asarray(self._pair_overlap(float(min(x1, x2)), float(max(x1, x2))))
        distinct = _distinct_pairs(x1, x2)
        if len(distinct[0]) <= _DISTINCT_PAIR_LIMIT:
            return _by_distinct_pairs(x1, x2, self._cached_pair_overlap, distinct)
        return self.overlap_fixed_rule(x1, x2)

    def overlap_fixed_rule(self, x1, x2, nodes_per_panel: int = 16):
        """Overlap for many pairs at once from one composite Gauss-Legendre rule.

        R(x1, x2) = sum_k w_k p(y_k) g(x1, y_k) g(x2, y_k) with g = L - 1, so the
        work is one row of g per distinct signal value.
        """
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        d = self.density
        reach = d.radius + 2.0 * float(max(np.max(np.abs(x1)), np.max(np.abs(x2))))
        width = 0.5 * d.resolution
        panels = max(8, int(math.ceil(2 * reach / width)))
        gx, gw = np.polynomial.legendre.leggauss(nodes_per_panel)
        edges = np.linspace(-reach, reach, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        y = (mid[:, None] + half[:, None] * gx).ravel()
        w = (half[:, None] * gw).ravel() * d.pdf(y)
        values, inverse = np.unique(np.concatenate([x1.ravel(), x2.ravel()]), return_inverse=True)
        g = np.expm1(d.logpdf(y[None, :] - values[:, None]) - d.logpdf(y)[None, :])
        i1 = inverse[: x1.size]
        i2 = inverse[x1.size :]
        out = np.einsum("ik,ik,k->i", g[i1], g[i2], w)
        return out.reshape(x1.shape)

    def fisher_information(self) -> float:
        return self._fisher

    @cached_property
    def _fisher(self) -> float:
        d = self.density
        return d.integrate(lambda y: d.pdf(y) * d.neg_log_derivative(y) ** 2)

    def score_unnormalized(self, y):
        return self.density.neg_log_derivative(y)

    def null_expectation(self, g) -> float:
        d = self.density
        return d.integrate(lambda y: d.pdf(y) * g(y))

    def describe(self):
        return {"kind": self.kind, "density": {"name": self.density.name, **self.density.params}}


class ExponentialFamilyChannel(Channel):
    """P_x is the member of the natural exponential family with mean mu + x."""

    kind = "expfam"

    def __init__(self, cgf: Cgf):
        cgf.validate()
        self.cgf = cgf
        self._theta_cache: dict = {}

    @cached_property
    def domain(self):
        lo, hi = self.cgf.mean_range
        return (lo - self.cgf.mean, hi - self.cgf.mean)

    def theta(self, x: float) -> float:
        x = float(x)
        if x not in self._theta_cache:
            self.check_signal(x)
            self._theta_cache[x] = theta_of_x(self.cgf, x)
        return self._theta_cache[x]

    def likelihood_ratio(self, x, y):
        t = self.theta(x)
        return np.exp(t * np.asarray(y, dtype=float) - self.cgf.psi(t))

    def _pair_overlap(self, x1, x2):
        if x1 == 0.0 or x2 == 0.0:
            return 0.0
        t1, t2 = self.theta(x1), self.theta(x2)
        if not self.cgf.contains(t1 + t2):
            return math.inf
        psi = self.cgf.psi
        return math.expm1(psi(t1 + t2) - psi(t1) - psi(t2))

    def _overlap(self, x1, x2):
        if x1.ndim == 0:
            return np.asarray(self._pair_overlap(float(min(x1, x2)), float(max(x1, x2))))
        return _by_distinct_pairs(x1, x2, self._pair_overlap)

    def fisher_information(self) -> float:
        return 1.0 / self.cgf.variance

    def score_unnormalized(self, y):
        return (np.asarray(y, dtype=float) - self.cgf.mean) / self.cgf.variance

    def null_expectation(self, g) -> float:
        return self.cgf.expect(g)

    def describe(self):
        return {"kind": self.kind, "cgf": {"name": self.cgf.name, **self.cgf.params}}


class BernoulliChannel(Channel):
    """y ~ Bernoulli(c + x); the signal may sit on the closed interval [-c, 1-c]."""

    kind = "bernoulli"
    closed_domain = True

    def __init__(self, c: float = 0.5):
        if not 0 < c < 1:
            raise ValidationError("Bernoulli base mean must lie in (0, 1)")
        self.c = float(c)

    @property
    def domain(self):
        return (-self.c, 1.0 - self.c)

    def likelihood_ratio(self, x, y):
        x = self.check_signal(x)
        y = np.asarray(y)
        return np.where(y == 1, (self.c + x) / self.c, (1.0 - self.c - x) / (1.0 - self.c))

    def _overlap(self, x1, x2):
        return x1 * x2 / (self.c * (1.0 - self.c))

    def fisher_information(self) -> float:
        return 1.0 / (self.c * (1.0 - self.c))

    def score_unnormalized(self, y):
        return np.where(np.asarray(y) == 1, 1.0 / self.c, -1.0 / (1.0 - self.c))

    def null_expectation(self, g) -> float:
        return (1.0 - self.c) * g(0) + self.c * g(1)

    def describe(self):
        return {"kind": self.kind, "c": self.c}


class CensoredChannel(Channel):
    """Each observation is independently replaced by CENSORED with probability eta."""

    kind = "censored"

    def __init__(self, inner: Channel, eta: float):
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"censoring probability must lie in [0, 1], got {eta!r}")
        self.inner = inner
        self.eta = float(eta)

    @property
    def domain(self):
        return self.inner.domain

    @property
    def closed_domain(self):
        return self.inner.closed_domain

    @property
    def length_scale(self):
        return self.inner.length_scale

    def likelihood_ratio(self, x, y):
        if y is CENSORED:
            self.check_signal(x)
            return 1.0
        return self.inner.likelihood_ratio(x, y)

    def _overlap(self, x1, x2):
        return (1.0 - self.eta) * np.asarray(self.inner._overlap(x1, x2))

    def fisher_information(self) -> float:
        return (1.0 - self.eta) * self.inner.fisher_information()

    def score_unnormalized(self, y):
        if y is CENSORED:
            return 0.0
        return self.inner.score_unnormalized(y)

    def null_expectation(self, g) -> float:
        kept = self.inner.null_expectation(g) if self.eta < 1 else 0.0
        return self.eta * g(CENSORED) + (1.0 - self.eta) * kept

    def describe(self):
        return {**self.inner.describe(), "censor_eta": self.eta}


def sign_output(y):
    """Quantiser used by quantized channels; zero maps to +1."""
    return np.where(np.asarray(y) >= 0, 1.0, -1.0)


class QuantizedChannel(Channel):
    """Only the sign of an additive observation is kept."""

    kind = "quantized"

    def __init__(self, inner: AdditiveChannel):
        if not isinstance(inner, AdditiveChannel):
            raise ValidationError("quantize needs an additive channel with a symmetric density")
        self.inner = inner
        self._mass_cache: dict = {}

    @property
    def length_scale(self):
        return self.inner.length_scale

    def _mass(self, x: float) -> float:
        if x not in self._mass_cache:
            self._mass_cache[x] = self.inner.density.mass_from_zero(x)
        return self._mass_cache[x]

    def likelihood_ratio(self, x, y):
        x = float(self.check_signal(x))
        m = self._mass(x)
        return np.where(sign_output(y) > 0, 1.0 + 2.0 * m, 1.0 - 2.0 * m)

    def _overlap(self, x1, x2):
        # 2*A1*A2 + 2*B1*B2 - 1 with A = 1/2 + m, B = 1/2 - m collapses to 4*m1*m2
        if x1.ndim == 0:
            return np.asarray(4.0 * self._mass(float(x1)) * self._mass(float(x2)))
        values, inverse = np.unique(np.concatenate([x1.ravel(), x2.ravel()]), return_inverse=True)
        m = np.array([self._mass(float(v)) for v in values])
        return (4.0 * m[inverse[: x1.size]] * m[inverse[x1.size :]]).reshape(x1.shape)

    def fisher_information(self) -> float:
        return 4.0 * float(self.inner.density.pdf(0.0)) ** 2

    def score_unnormalized(self, y):
        return 2.0 * float(self.inner.density.pdf(0.0)) * sign_output(y)

    def null_expectation(self, g) -> float:
        return 0.5 * (g(1.0) + g(-1.0))

    def describe(self):
        return {**self.inner.describe(), "quantize": True}


# ---- operations ----------------------------------------------------------


def make_additive(density: Density) -> AdditiveChannel:
    return AdditiveChannel(density)


def make_exponential_family(cgf: Cgf) -> ExponentialFamilyChannel:
    return ExponentialFamilyChannel(cgf)


def bernoulli(c: float = 0.5) -> BernoulliChannel:
    return BernoulliChannel(c)


def censor(channel: Channel, eta: float) -> CensoredChannel:
    return CensoredChannel(channel, eta)


def quantize(channel: Channel) -> QuantizedChannel:
    return QuantizedChannel(channel)


def likelihood_ratio(channel: Channel, x, y):
    return channel.likelihood_ratio(x, y)


def overlap(channel: Channel, x1, x2):
    return channel.overlap(x1, x2)


def fisher_information(channel: Channel) -> float:
    return channel.fisher_information()


def fisher_information_fd(channel: Channel, h: float) -> float:
    """Central mixed second difference of the overlap at the origin."""
    R = channel.overlap
    return (R(h, h) - R(h, -h) - R(-h, h) + R(-h, -h)) / (4.0 * h * h)


def fisher_information_extrapolated(channel: Channel, h: float = None) -> float:
    """Richardson extrapolation of fisher_information_fd over h and h/2."""
    h = 1e-2 * channel.length_scale if h is None else h
    coarse = fisher_information_fd(channel, h)
    fine = fisher_information_fd(channel, h / 2)
    return (4.0 * fine - coarse) / 3.0


def mixed_third_derivative_fd(channel: Channel, h: float = None) -> float:
    """d^3 R / dx1^2 dx2 at the origin, central differences extrapolated in h."""
    h = 1e-2 * channel.length_scale if h is None else h

    def stencil(s):
        R = channel.overlap
        return (R(s, s) - 2 * R(0.0, s) + R(-s, s) - R(s, -s) + 2 * R(0.0, -s) - R(-s, -s)) / (2 * s**3)

    return (4.0 * stencil(h / 2) - stencil(h)) / 3.0


def score_unnormalized(channel: Channel, y):
    return channel.score_unnormalized(y)


def local_fisher_score(channel: Channel, y):
    """(1/F) dL_x(y)/dx at x = 0; mean zero with variance 1/F under P_0."""
    F = channel.fisher_information()
    if F == 0.0:
        raise DomainError("channel is degenerate (zero Fisher information)")
    return channel.score_unnormalized(y) / F


def from_config(block: dict) -> Channel:
    """Build a channel from the JSON channel block.

    {"kind": "additive", "density": {...}} | {"kind": "expfam", "cgf": {...}}
    | {"kind": "bernoulli", "c": 0.5}, with optional "censor_eta" and
    "quantize" applied quantize-first.
    """
    from . import cgfs, densities

    if not isinstance(block, dict):
        raise ValidationError("channel block must be an object")
    kind = block.get("kind")
    if kind == "additive":
        if "density" not in block:
            raise ValidationError("additive channel needs a density block")
        ch = AdditiveChannel(densities.from_config(block["density"]))
    elif kind == "expfam":
        if "cgf" not in block:
            raise ValidationError("expfam channel needs a cgf block")
        ch = ExponentialFamilyChannel(cgfs.from_config(block["cgf"]))
    elif kind == "bernoulli":
        ch = BernoulliChannel(float(block.get("c", 0.5)))
    else:
        raise ValidationError(f"unknown channel kind {kind!r}")
    if block.get("quantize"):
        ch = QuantizedChannel(ch)
    if block.get("censor_eta") is not None:
        ch = CensoredChannel(ch, float(block["censor_eta"]))
    return ch
