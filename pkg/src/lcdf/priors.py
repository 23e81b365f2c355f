"""Signal priors: iid spike laws, spiked matrix and tensor vectorisations,
dilution, and an empirical audit of the norm assumptions.

Every prior draws batches through ``sample_many(rng, m)`` returning an
(m, N) array. Structured priors also draw the latent vector x and can
compute inner products <X1, X2> directly from latents, which avoids
materialising C(n, q) coordinates when only overlaps are needed.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, ValidationError
from .rng import as_generator

# ---- spike laws ------------------------------------------------------------


@dataclass(frozen=True)
class SpikeLaw:
    """A bounded law on R with mean 0 and variance 1.

    Discrete laws are stored as (atoms, probs); ``uniform_pm`` is the
    continuous uniform law on [-sqrt(3), sqrt(3)].
    """

    kind: str
    atoms: tuple = ()
    probs: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "uniform_pm":
            return
        a = np.array(self.atoms, dtype=float)
        p = np.array(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError(f"{self.kind}: probabilities must sum to 1")
        if abs(p @ a) > 1e-12 or abs(p @ a**2 - 1.0) > 1e-12:
            raise ValidationError(f"{self.kind}: law must have mean 0 and variance 1")

    @property
    def bound(self) -> float:
        if self.kind == "uniform_pm":
            return math.sqrt(3.0)
        return float(np.max(np.abs(self.atoms)))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform_pm":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        if self.kind == "rademacher":
            return rng.integers(0, 2, size).astype(float) * 2.0 - 1.0
        idx = rng.choice(len(self.atoms), size=size, p=np.array(self.probs))
        return np.asarray(self.atoms, dtype=float)[idx]

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def rademacher() -> SpikeLaw:
    return SpikeLaw("rademacher", (-1.0, 1.0), (0.5, 0.5))


def sparse_rademacher(s: float) -> SpikeLaw:
    if not 0 < s <= 1:
        raise ValidationError("sparsity s must lie in (0, 1]")
    a = 1.0 / math.sqrt(s)
    return SpikeLaw("sparse_rademacher", (-a, 0.0, a), (s / 2, 1.0 - s, s / 2), {"s": s})


def uniform_pm() -> SpikeLaw:
    return SpikeLaw("uniform_pm")


def two_point(p: float) -> SpikeLaw:
    """Mass p at sqrt((1-p)/p) and 1-p at -sqrt(p/(1-p))."""
    if not 0 < p < 1:
        raise ValidationError("p must lie in (0, 1)")
    return SpikeLaw("two_point", (math.sqrt((1 - p) / p), -math.sqrt(p / (1 - p))), (p, 1 - p), {"p": p})


SPIKE_LAWS = {"rademacher": rademacher, "sparse_rademacher": sparse_rademacher, "uniform_pm": uniform_pm, "two_point": two_point}


def spike_law_from_config(block) -> SpikeLaw:
    if isinstance(block, str):
        block = {"kind": block}
    block = dict(block or {"kind": "rademacher"})
    kind = block.pop("kind", None)
    if kind not in SPIKE_LAWS:
        raise ValidationError(f"unknown spike law {kind!r}; choose from {sorted(SPIKE_LAWS)}")
    try:
        return SPIKE_LAWS[kind](**block)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for spike law {kind}: {exc}") from None


# ---- priors ----------------------------------------------------------------


class Prior:
    """Base class. Subclasses set ``N`` and implement ``sample_many``."""

    N: int
    declared_A = None
    structure = "abstract"

    def sample_many(self, rng: np.random.Generator, m: int) -> np.ndarray:
        raise NotImplementedError

    def sample_latent(self, rng: np.random.Generator, m: int) -> np.ndarray:
        """Whatever compact object determines a draw; default is the draw itself."""
        return self.sample_many(rng, m)

    def expand(self, latent: np.ndarray) -> np.ndarray:
        return latent

    def inner_products(self, lat1: np.ndarray, lat2: np.ndarray) -> np.ndarray:
        """<X1, X2> row by row from two batches of latents."""
        return np.einsum("ij,ij->i", self.expand(lat1), self.expand(lat2))

    def describe(self) -> dict:
        return {"kind": self.structure, "N": self.N}


class IIDPrior(Prior):
    """N independent coordinates, each ``scale`` times a draw from ``law``."""

    structure = "iid"

    def __init__(self, law: SpikeLaw, N: int, scale: float = 1.0):
        if N < 1:
            raise ValidationError("N must be at least 1")
        self.law, self.N, self.scale = law, int(N), float(scale)
        self.declared_A = abs(self.scale) * law.bound

    def sample_many(self, rng, m):
        return self.scale * self.law.sample(rng, (m, self.N))

    def describe(self):
        return {"kind": "iid", "N": self.N, "scale": self.scale, "pi": self.law.describe()}


class FinitePrior(Prior):
    """A prior with finitely many support vectors (useful for exact checks)."""

    structure = "finite"

    def __init__(self, support, probs=None):
        self.support = np.atleast_2d(np.asarray(support, dtype=float))
        k, self.N = self.support.shape
        self.probs = np.full(k, 1.0 / k) if probs is None else np.asarray(probs, dtype=float)
        if self.probs.shape != (k,) or np.any(self.probs < 0) or abs(self.probs.sum() - 1) > 1e-12:
            raise ValidationError("support probabilities must be non-negative and sum to 1")
        self.declared_A = float(np.max(np.abs(self.support)))

    def sample_many(self, rng, m):
        return self.support[rng.choice(len(self.probs), size=m, p=self.probs)]


class SpikedMatrixPrior(Prior):
    """Upper triangle (i < j, row-major) of (lambda / sqrt n) x x^T with x ~ law^n."""

    structure = "spiked_matrix"

    def __init__(self, n: int, lam: float, law: SpikeLaw):
        if n < 2:
            raise DomainError("spiked matrix prior needs n >= 2")
        if not lam > 0:
            raise DomainError("lambda must be positive")
        self.n, self.lam, self.law = int(n), float(lam), law
        self.N = self.n * (self.n - 1) // 2
        self.rows, self.cols = np.triu_indices(self.n, 1)
        self.declared_A = self.lam * law.bound**2 / math.sqrt(self.n)

    def sample_latent(self, rng, m):
        return self.law.sample(rng, (m, self.n))

    def expand(self, latent):
        latent = np.atleast_2d(latent)
        return (self.lam / math.sqrt(self.n)) * latent[:, self.rows] * latent[:, self.cols]

    def sample_many(self, rng, m):
        return self.expand(self.sample_latent(rng, m))

    def inner_products(self, lat1, lat2):
        z = np.atleast_2d(lat1) * np.atleast_2d(lat2)
        return (self.lam**2 / (2 * self.n)) * (z.sum(axis=1) ** 2 - (z**2).sum(axis=1))

    def describe(self):
        return {"kind": "spiked_matrix", "n": self.n, "lambda": self.lam, "pi": self.law.describe(), "N": self.N}


class SpikedTensorPrior(Prior):
    """Entries lambda n^{-q/4} x_{i1}...x_{iq} over i1 < ... < iq, lexicographic."""

    structure = "spiked_tensor"

    def __init__(self, n: int, q: int, lam: float, law: SpikeLaw):
        if q < 3:
            raise DomainError("spiked tensor prior needs q >= 3")
        if n < q:
            raise DomainError(f"spiked tensor prior needs n >= q, got n={n}, q={q}")
        if not lam > 0:
            raise DomainError("lambda must be positive")
        self.n, self.q, self.lam, self.law = int(n), int(q), float(lam), law
        self.N = math.comb(self.n, self.q)
        self.coef = self.lam * self.n ** (-self.q / 4)
        self.declared_A = self.coef * law.bound**self.q
        self._index = None

    @property
    def index(self) -> np.ndarray:
        if self._index is None:
            self._index = np.array(list(itertools.combinations(range(self.n), self.q)), dtype=np.intp)
        return self._index

    def sample_latent(self, rng, m):
        return self.law.sample(rng, (m, self.n))

    def expand(self, latent):
        latent = np.atleast_2d(latent)
        return self.coef * np.prod(latent[:, self.index], axis=2)

    def sample_many(self, rng, m):
        return self.expand(self.sample_latent(rng, m))

    def inner_products(self, lat1, lat2):
        # sum over q-subsets of prod z_i is the q-th elementary symmetric polynomial
        z = np.atleast_2d(lat1) * np.atleast_2d(lat2)
        e = np.zeros((z.shape[0], self.q + 1))
        e[:, 0] = 1.0
        for j in range(self.n):
            e[:, 1:] += z[:, j, None] * e[:, :-1].copy()
        return self.coef**2 * e[:, self.q]

    def describe(self):
        return {"kind": "spiked_tensor", "n": self.n, "q": self.q, "lambda": self.lam, "pi": self.law.describe(), "N": self.N}


class DilutedPrior(Prior):
    """Each coordinate of the inner prior repeated k times and divided by sqrt(k)."""

    structure = "diluted"

    def __init__(self, inner: Prior, k: int):
        if k < 1:
            raise ValidationError("dilution factor k must be at least 1")
        self.inner, self.k = inner, int(k)
        self.N = inner.N * self.k
        self.declared_A = None if inner.declared_A is None else inner.declared_A / math.sqrt(self.k)

    def sample_latent(self, rng, m):
        return self.inner.sample_latent(rng, m)

    def expand(self, latent):
        return np.repeat(self.inner.expand(latent), self.k, axis=1) / math.sqrt(self.k)

    def sample_many(self, rng, m):
        return self.expand(self.sample_latent(rng, m))

    def inner_products(self, lat1, lat2):
        return self.inner.inner_products(lat1, lat2)

    def describe(self):
        return {**self.inner.describe(), "dilute_k": self.k, "N": self.N}


class TruncatedPrior(Prior):
    """Zero out draws that break a sup-norm bound or the scaled k-norm bounds.

    ``bounds`` maps k to B_k and requires ||x||_k <= B_k N^{1/k - 1/4}.
    """

    structure = "truncated"

    def __init__(self, inner: Prior, A: float = None, bounds: dict = None):
        self.inner, self.A, self.bounds = inner, A, dict(bounds or {})
        self.N = inner.N
        self.declared_A = A if A is not None else inner.declared_A

    def _keep(self, X):
        ok = np.ones(len(X), dtype=bool)
        if self.A is not None:
            ok &= np.max(np.abs(X), axis=1) <= self.A
        for k, B in self.bounds.items():
            ok &= np.sum(np.abs(X) ** k, axis=1) ** (1.0 / k) <= B * self.N ** (1.0 / k - 0.25)
        return ok

    def sample_many(self, rng, m):
        X = self.inner.sample_many(rng, m)
        return np.where(self._keep(X)[:, None], X, 0.0)

    def describe(self):
        return {"kind": "truncated", "inner": self.inner.describe(), "A": self.A, "bounds": self.bounds}


# ---- constructors and operations ------------------------------------------


def make_spiked_matrix_prior(n: int, lam: float, law: SpikeLaw) -> SpikedMatrixPrior:
    return SpikedMatrixPrior(n, lam, law)


def make_spiked_tensor_prior(n: int, q: int, lam: float, law: SpikeLaw) -> SpikedTensorPrior:
    return SpikedTensorPrior(n, q, lam, law)


def dilute(prior: Prior, k: int) -> Prior:
    return prior if k == 1 else DilutedPrior(prior, k)


def sample(prior: Prior, seed) -> np.ndarray:
    """One draw, deterministic in the seed."""
    return prior.sample_many(as_generator(seed), 1)[0]


NORM_ORDERS = (2, 4, 6, 8, 10, 12)


@dataclass
class AssumptionReport:
    """Empirical sup-norm and scaled k-norm statistics over a batch of draws.

    ``B[k]`` is the max over draws of ||x||_k N^{1/4 - 1/k}; a prior with
    N-independent bounds keeps these O(1) as N grows.
    """

    N: int
    samples: int
    A_emp: float
    B: dict
    declared_A: float = None
    limit: float = None

    @property
    def passes_sup_norm(self) -> bool:
        return self.declared_A is None or self.A_emp <= self.declared_A * (1 + 1e-12)

    @property
    def passes_norm_bounds(self) -> bool:
        return all(v <= self.limit for v in self.B.values())

    @property
    def passes(self) -> bool:
        return self.passes_sup_norm and self.passes_norm_bounds

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "samples": self.samples,
            "A_emp": self.A_emp,
            "declared_A": self.declared_A,
            "B": {str(k): v for k, v in self.B.items()},
            "limit": self.limit,
            "sup_norm": "PASS" if self.passes_sup_norm else "FAIL",
            "norm_bounds": "PASS" if self.passes_norm_bounds else "FAIL",
        }


def check_assumptions(prior: Prior, samples: int, seed, limit: float = 2.0) -> AssumptionReport:
    """Audit the sup-norm and the scaled k-norm bounds on ``samples`` draws.

    ``limit`` is the B_k value above which the norm-bound check fails; at a
    single N this can only flag priors whose statistic is already large, so
    use ``norm_growth`` across several sizes to detect growth in N.
    """
    if samples < 1:
        raise ValidationError("samples must be at least 1")
    X = prior.sample_many(as_generator(seed), samples)
    N = X.shape[1]
    absX = np.abs(X)
    B = {k: float(np.max(np.sum(absX**k, axis=1) ** (1.0 / k)) * N ** (0.25 - 1.0 / k)) for k in NORM_ORDERS}
    return AssumptionReport(N, samples, float(absX.max()), B, prior.declared_A, limit)


def norm_growth(priors, samples: int, seed) -> dict:
    """Log-log slope of each B_k statistic against N over a family of priors."""
    reports = [check_assumptions(p, samples, seed) for p in priors]
    logN = np.log([r.N for r in reports])
    out = {}
    for k in NORM_ORDERS:
        vals = np.log([r.B[k] for r in reports])
        out[k] = float(np.polyfit(logN, vals, 1)[0])
    return out


def overlap_ks_test(inner: Prior, diluted: Prior, draws: int, seed, digits: int = 10):
    """Two-sample KS test between <x1, x2> under two priors, independent streams.

    Overlaps are computed from the expanded vectors and rounded to ``digits``
    decimals, so atoms of a discrete overlap law are not split by rounding.
    """
    from .rng import stream

    def overlaps(prior, idx):
        rng = stream(seed, idx)
        X1 = prior.sample_many(rng, draws)
        X2 = prior.sample_many(rng, draws)
        return np.round(np.einsum("ij,ij->i", X1, X2), digits)

    return stats.ks_2samp(overlaps(inner, 0), overlaps(diluted, 1))


def from_config(block: dict) -> Prior:
    """Prior from the JSON prior block."""
    if not isinstance(block, dict):
        raise ValidationError("prior block must be an object")
    kind = block.get("kind")
    law = spike_law_from_config(block.get("pi", {"kind": "rademacher"}))
    try:
        if kind == "iid":
            prior = IIDPrior(law, int(block["N"]), float(block.get("scale", 1.0)))
        elif kind == "spiked_matrix":
            prior = SpikedMatrixPrior(int(block["n"]), float(block["lambda"]), law)
        elif kind == "spiked_tensor":
            prior = SpikedTensorPrior(int(block["n"]), int(block["q"]), float(block["lambda"]), law)
        elif kind == "finite":
            prior = FinitePrior(block["support"], block.get("probs"))
        else:
            raise ValidationError(f"unknown prior kind {kind!r}")
    except KeyError as exc:
        raise ValidationError(f"prior block of kind {kind!r} is missing {exc}") from None
    if block.get("dilute_k"):
        prior = dilute(prior, int(block["dilute_k"]))
    if prior.N > 5_000_000:
        warnings.warn(f"prior has {prior.N} coordinates; sampling will be slow")
    return prior
