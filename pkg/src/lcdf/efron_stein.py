"""Exact Efron-Stein calculus on small finite product spaces.

Functions on Omega_1 x ... x Omega_N are dense numpy arrays of shape
``model.shape``; their C-order ravel is the mixed-radix table. Internally,
functions that do not depend on some coordinates are kept with size-1 axes
there and broadcast on demand, which is what makes the 2^|T| inclusion-
exclusion sums affordable.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .advantage import esp_prefix_sums
from .errors import DomainError, ValidationError

MAX_STATES = 2**20
MAX_SUBSET = 20
MAX_SUPPORT = 4096


@dataclass
class DiscreteLVM:
    """Product null Q = Q_1 x ... x Q_N and a finite mixture of product laws.

    ``channel[i]`` has shape (S, |Omega_i|): row s is P_{i, x_s}. Signal s
    has prior probability ``signal_probs[s]``.
    """

    null: list
    signal_probs: np.ndarray
    channel: list
    alphabets: list = None
    signals: list = field(default=None, repr=False)

    def __post_init__(self):
        self.null = [np.asarray(q, dtype=float) for q in self.null]
        self.channel = [np.atleast_2d(np.asarray(c, dtype=float)) for c in self.channel]
        self.signal_probs = np.asarray(self.signal_probs, dtype=float)
        if self.alphabets is None:
            self.alphabets = [list(range(len(q))) for q in self.null]
        if len(self.channel) != len(self.null) or not self.null:
            raise ValidationError("need one null pmf and one channel table per coordinate")
        if math.prod(len(q) for q in self.null) > MAX_STATES:
            raise ValidationError(f"state count exceeds the cap of {MAX_STATES}")
        if len(self.signal_probs) > MAX_SUPPORT:
            raise ValidationError(f"signal support exceeds {MAX_SUPPORT}")
        _check_pmf(self.signal_probs, "signal prior")
        for i, (q, c) in enumerate(zip(self.null, self.channel)):
            _check_pmf(q, f"null pmf {i}")
            if np.any(q <= 0):
                raise ValidationError(f"null pmf {i} must be strictly positive")
            if c.shape != (len(self.signal_probs), len(q)):
                raise ValidationError(f"channel table {i} has shape {c.shape}, expected {(len(self.signal_probs), len(q))}")
            for row in c:
                _check_pmf(row, f"channel pmf at coordinate {i}")

    @property
    def N(self) -> int:
        return len(self.null)

    @property
    def shape(self) -> tuple:
        return tuple(len(q) for q in self.null)

    def restrict(self, coords) -> "DiscreteLVM":
        """The marginal model of the coordinates in ``coords`` (kept in order)."""
        coords = sorted(coords)
        return DiscreteLVM(
            [self.null[i] for i in coords],
            self.signal_probs,
            [self.channel[i] for i in coords],
            [self.alphabets[i] for i in coords],
            self.signals,
        )

    def to_json(self) -> dict:
        return {
            "alphabets": self.alphabets,
            "null_pmfs": [q.tolist() for q in self.null],
            "signals": [
                {"prob": float(p), "channel_pmfs": [c[s].tolist() for c in self.channel]}
                for s, p in enumerate(self.signal_probs)
            ],
        }

    @classmethod
    def from_json(cls, doc) -> "DiscreteLVM":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        try:
            null = doc["null_pmfs"]
            sigs = doc["signals"]
            probs = [s["prob"] for s in sigs]
            channel = [[s["channel_pmfs"][i] for s in sigs] for i in range(len(null))]
        except (KeyError, IndexError, TypeError) as exc:
            raise ValidationError(f"malformed model document: {exc!r}") from None
        alphabets = doc.get("alphabets")
        if alphabets is not None and [len(a) for a in alphabets] != [len(q) for q in null]:
            raise ValidationError("alphabet sizes do not match the null pmfs")
        return cls(null, probs, channel, alphabets, [s.get("x") for s in sigs])


def _check_pmf(p, what):
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-14 * max(1, len(p)):
        raise ValidationError(f"{what} must be a non-negative vector summing to 1")


def random_model(rng: np.random.Generator, max_N=4, max_alphabet=3, max_support=6) -> DiscreteLVM:
    """A random small model with strictly positive null pmfs."""
    N = int(rng.integers(1, max_N + 1))
    sizes = rng.integers(2, max_alphabet + 1, size=N)
    S = int(rng.integers(1, max_support + 1))

    def pmf(k):
        p = rng.dirichlet(np.ones(k))
        p = np.maximum(p, 1e-3)
        return p / p.sum()

    null = [pmf(k) for k in sizes]
    channel = [np.array([pmf(k) for _ in range(S)]) for k in sizes]
    return DiscreteLVM(null, pmf(S), channel)


# ---- averaging and projections ---------------------------------------------


def _avg(model, f, T):
    """Integrate out coordinates T under Q, keeping size-1 axes."""
    for i in T:
        w = model.null[i].reshape([-1 if j == i else 1 for j in range(model.N)])
        f = np.sum(f * w, axis=i, keepdims=True)
    return f


def _full(model, f):
    return np.array(np.broadcast_to(f, model.shape))


def _check_subset(model, T):
    T = tuple(sorted(set(T)))
    if any(i < 0 or i >= model.N for i in T):
        raise DomainError(f"coordinate set {T} not contained in range({model.N})")
    return T


def expectation(model, f) -> float:
    return float(np.asarray(_avg(model, np.asarray(f, dtype=float), range(model.N))).reshape(-1)[0])


def inner(model, f, g) -> float:
    return expectation(model, np.asarray(f) * np.asarray(g))


def avg_operator(model: DiscreteLVM, f, T) -> np.ndarray:
    """Conditional expectation of f given the coordinates outside T."""
    T = _check_subset(model, T)
    return _full(model, _avg(model, np.asarray(f, dtype=float), T))


def _complement(model, S):
    return tuple(i for i in range(model.N) if i not in S)


def project_hat(model: DiscreteLVM, f, T) -> np.ndarray:
    """Orthogonal projection onto the Efron-Stein component of T.

    Inclusion-exclusion sum over S subset of T of (-1)^{|T|-|S|} Avg over
    the complement of S.
    """
    T = _check_subset(model, T)
    if len(T) > MAX_SUBSET:
        raise DomainError(f"|T| = {len(T)} exceeds {MAX_SUBSET}; 2^|T| terms refused")
    f = np.asarray(f, dtype=float)
    out = np.zeros(model.shape)
    for r in range(len(T) + 1):
        sign = (-1.0) ** (len(T) - r)
        for S in itertools.combinations(T, r):
            out = out + sign * _avg(model, f, _complement(model, S))
    return out


def project_hat_product(model: DiscreteLVM, f, T) -> np.ndarray:
    """Same projection as a product of commuting operators (I - Avg_i) and Avg_j."""
    T = _check_subset(model, T)
    g = _avg(model, np.asarray(f, dtype=float), _complement(model, T))
    for i in T:
        g = g - _avg(model, g, (i,))
    return _full(model, g)


def _gbinom(a: int, b: int) -> int:
    """Binomial coefficient extended to a = -1, where C(-1, b) = (-1)^b."""
    if b < 0:
        return 0
    if a == -1:
        return (-1) ** b
    return math.comb(a, b) if a >= 0 else 0


def project_leq(model: DiscreteLVM, f, D: int, method: str = "components") -> np.ndarray:
    """Projection onto functions of coordinate degree at most D.

    ``components`` sums project_hat over |T| <= D; ``binomial`` uses
    sum_{|T|<=D} (-1)^{D-|T|} C(N-|T|-1, D-|T|) Avg over the complement of T.
    """
    if not 0 <= D <= model.N:
        raise DomainError(f"degree must lie in [0, {model.N}]")
    f = np.asarray(f, dtype=float)
    N = model.N
    if method == "binomial":
        out = np.zeros(model.shape)
        for t in range(D + 1):
            coef = (-1) ** (D - t) * _gbinom(N - t - 1, D - t)
            if coef == 0:
                continue
            for T in itertools.combinations(range(N), t):
                out = out + coef * _avg(model, f, _complement(model, T))
        return out
    if method != "components":
        raise ValidationError(f"unknown projection method {method!r}")
    marg = _marginals(model, f, D)
    out = np.zeros(model.shape)
    for T in marg:
        out = out + _hat_from_marginals(marg, T)
    return out


def _marginals(model, f, D):
    """Avg over the complement of S for every |S| <= D, as compact arrays."""
    return {S: _avg(model, f, _complement(model, S)) for t in range(D + 1) for S in itertools.combinations(range(model.N), t)}


def _hat_from_marginals(marg, T):
    out = 0.0
    for r in range(len(T) + 1):
        sign = (-1.0) ** (len(T) - r)
        for S in itertools.combinations(T, r):
            out = out + sign * marg[S]
    return out


# ---- likelihood ratio quantities -------------------------------------------


def likelihood_vector(model: DiscreteLVM) -> np.ndarray:
    """L(y) = sum_s pi_s prod_i P_{i,s}(y_i) / Q_i(y_i) over all outcomes."""
    ratios = [c / q for c, q in zip(model.channel, model.null)]
    L = np.zeros(model.shape)
    for s, p in enumerate(model.signal_probs):
        term = np.array(p)
        for r in ratios:
            term = np.multiply.outer(term, r[s])
        L += term
    if np.max(L) > 1e6:
        warnings.warn("likelihood ratio exceeds 1e6; exact comparisons may lose digits")
    return L


def cadv_exact(model: DiscreteLVM, D: int) -> float:
    """Norm of the degree-D projection of the likelihood ratio (not squared)."""
    L = likelihood_vector(model)
    P = project_leq(model, L, min(D, model.N))
    return math.sqrt(inner(model, P, P))


def overlap_matrices(model: DiscreteLVM) -> list:
    """R_i[s, t] = sum_y P_{i,s}(y) P_{i,t}(y) / Q_i(y) - 1 for each coordinate."""
    return [(c / q) @ c.T - 1.0 for c, q in zip(model.channel, model.null)]


def cadv_formula_exact(model: DiscreteLVM, D: int) -> float:
    """Square root of E over signal pairs of the subset-product sum of overlaps."""
    S = len(model.signal_probs)
    if S * S > 4 * 10**6:
        raise DomainError("signal support too large for pair enumeration")
    R = np.stack([m.ravel() for m in overlap_matrices(model)], axis=1)
    w = np.outer(model.signal_probs, model.signal_probs).ravel()
    vals = esp_prefix_sums(R, min(D, model.N))
    return math.sqrt(math.fsum(w * vals))


def chi_square(model: DiscreteLVM) -> float:
    L = likelihood_vector(model)
    return inner(model, L, L) - 1.0


def chi2_decomposition(model: DiscreteLVM) -> dict:
    """Squared norm of each Efron-Stein component of L, keyed by non-empty T."""
    if model.N > MAX_SUBSET:
        raise DomainError("too many coordinates for a full decomposition")
    L = likelihood_vector(model)
    marg = _marginals(model, L, model.N)
    out = {}
    for T in marg:
        if T:
            h = _hat_from_marginals(marg, T)
            out[T] = inner(model, _full(model, h), _full(model, h))
    return out


def mean_field_lcdlr(model: DiscreteLVM, D: int) -> np.ndarray:
    """Degree-D projection of L from marginal likelihood ratios of sub-models.

    Uses sum_{|T|<=D} (-1)^{D-|T|} C(N-|T|-1, D-|T|) L_T where L_T is the
    likelihood ratio of the model restricted to T, computed from its own
    channel tables rather than by averaging L.
    """
    N = model.N
    if not 0 <= D <= N:
        raise DomainError(f"degree must lie in [0, {N}]")
    out = np.zeros(model.shape)
    for t in range(D + 1):
        coef = (-1) ** (D - t) * _gbinom(N - t - 1, D - t)
        if coef == 0:
            continue
        for T in itertools.combinations(range(N), t):
            out = out + coef * marginal_likelihood(model, T)
    return out


def marginal_likelihood(model: DiscreteLVM, T) -> np.ndarray:
    """Likelihood ratio of the T-restricted model, broadcast over all outcomes."""
    T = _check_subset(model, T)
    if not T:
        return np.ones(model.shape)
    sub = likelihood_vector(model.restrict(T))
    shape = [model.shape[i] if i in T else 1 for i in range(model.N)]
    return _full(model, sub.reshape(shape))


def load_bundled_model() -> DiscreteLVM:
    """The small three-coordinate model shipped with the package."""
    from importlib import resources

    text = resources.files("lcdf").joinpath("data/tiny_model.json").read_text()
    return DiscreteLVM.from_json(json.loads(text))
