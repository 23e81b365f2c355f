"""Monte Carlo estimators of the coordinate advantage and its Gaussian proxy.

All estimators draw the same pairs (x1, x2) for a given (prior, seed,
trials, chunk): chunk t of the trials uses random stream t of the seed and
draws x1 then x2 from it. Comparing estimators on one seed is therefore a
paired comparison.

    subset_formula  mean over pairs of sum_{d<=D} e_d(R(x1_i, x2_i))
    exp_bound       mean over pairs of trunc_exp(sum_i R(x1_i, x2_i), D)
    univ            mean over pairs of trunc_exp(<x1, x2> / sigma2, D)
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .rng import stream
from .truncexp import trunc_exp_array

CHUNK = 2048
TAIL_FRACTION = 1e-3
TAIL_TOLERANCE = 0.2


def esp_prefix_sums(R: np.ndarray, D: int) -> np.ndarray:
    """Row-wise sum_{d=0}^{D} e_d(R_row) for a 2-d array R.

    Dynamic program e_d <- e_d + R_i e_{d-1} over coordinates, with a Kahan
    compensation term per degree. D larger than the row length is clamped,
    which is exact because e_d vanishes there.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if D < 0:
        raise DomainError("degree must be non-negative")
    m, N = R.shape
    D = min(int(D), N)
    e = np.zeros((m, D + 1))
    comp = np.zeros((m, D + 1))
    e[:, 0] = 1.0
    for i in range(N):
        r = R[:, i]
        for d in range(D, 0, -1):
            y = r * e[:, d - 1] - comp[:, d]
            t = e[:, d] + y
            comp[:, d] = (t - e[:, d]) - y
            e[:, d] = t
    return e.sum(axis=1)


def esp_prefix_sum(R, D: int) -> float:
    """Sum of elementary symmetric polynomials e_0(R) + ... + e_D(R)."""
    R = np.asarray(R, dtype=float).ravel()
    return float(esp_prefix_sums(R[None, :], D)[0])


@dataclass
class AdvantageEstimate:
    mean: float
    std_error: float
    trials: int
    D: int
    estimator: str
    diagnostics: dict = field(default_factory=dict)
    values: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "D": self.D,
            "trials": self.trials,
            "mean": self.mean,
            "std_error": self.std_error,
            "diagnostics": self.diagnostics,
        }


@dataclass
class _Moments:
    """Count, mean and centred sum of squares; merged with Chan's update."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, v: np.ndarray) -> "_Moments":
        mu = float(np.mean(v)) if len(v) else 0.0
        return cls(len(v), mu, float(np.sum((v - mu) ** 2)))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.count + other.count
        if n == 0:
            return _Moments()
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return _Moments(n, mean, m2)


def _run_chunks(prior, trials, seed, threads, per_chunk):
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    if seed is None:
        raise ValidationError("a seed is required")
    sizes = [CHUNK] * (trials // CHUNK)
    if trials % CHUNK:
        sizes.append(trials % CHUNK)

    def task(t):
        rng = stream(seed, t)
        lat1 = prior.sample_latent(rng, sizes[t])
        lat2 = prior.sample_latent(rng, sizes[t])
        return per_chunk(lat1, lat2)

    if threads and threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(task, range(len(sizes))))
    else:
        parts = [task(t) for t in range(len(sizes))]
    return parts


def _summarise(parts, D, estimator) -> AdvantageEstimate:
    moments = _Moments()
    for v in parts:
        moments = moments.merge(_Moments.of(v))
    values = np.concatenate(parts)
    m = moments.count
    std_error = math.sqrt(moments.m2 / (m - 1) / m) if m > 1 else 0.0
    diagnostics = {"finite": bool(np.all(np.isfinite(values)))}
    drop = int(TAIL_FRACTION * m)
    if drop >= 1:
        trimmed = float(np.mean(np.sort(values)[: m - drop]))
        diagnostics["trimmed_mean"] = trimmed
        diagnostics["tail_unstable"] = bool(abs(trimmed - moments.mean) > TAIL_TOLERANCE * abs(moments.mean))
    return AdvantageEstimate(moments.mean, std_error, m, int(D), estimator, diagnostics, values)


def _overlap_rows(prior, channel, lat1, lat2):
    X1 = prior.expand(lat1)
    X2 = prior.expand(lat2)
    try:
        return np.asarray(channel.overlap(X1, X2), dtype=float)
    except DomainError as exc:
        bad = np.flatnonzero(~_in_domain(channel, np.concatenate([X1.ravel(), X2.ravel()])))
        coord = int(bad[0] % prior.N) if len(bad) else None
        raise DomainError(f"{exc} (coordinate {coord})") from None


def _in_domain(channel, x):
    lo, hi = channel.domain
    return (x >= lo) & (x <= hi) if channel.closed_domain else (x > lo) & (x < hi)


def cadv_mc(prior, channel, D: int, trials: int, seed, threads: int = 1) -> AdvantageEstimate:
    """Subset-product estimate of the squared coordinate advantage at degree D."""
    if D == 0:
        if trials < 1 or seed is None:
            raise ValidationError("need trials >= 1 and a seed")
        return AdvantageEstimate(1.0, 0.0, trials, 0, "subset_formula", {"finite": True}, np.ones(trials))

    def per_chunk(lat1, lat2):
        return esp_prefix_sums(_overlap_rows(prior, channel, lat1, lat2), D)

    return _summarise(_run_chunks(prior, trials, seed, threads, per_chunk), D, "subset_formula")


def _require_even(D):
    if D < 0 or D % 2:
        raise DomainError(f"this estimator needs a non-negative even degree, got {D}")


def cadv_exp_bound_mc(prior, channel, D: int, trials: int, seed, threads: int = 1) -> AdvantageEstimate:
    """Estimate of E trunc_exp(sum_i R(x1_i, x2_i), D), an upper bound on the subset formula."""
    _require_even(D)

    def per_chunk(lat1, lat2):
        return trunc_exp_array(_overlap_rows(prior, channel, lat1, lat2).sum(axis=1), D)

    return _summarise(_run_chunks(prior, trials, seed, threads, per_chunk), D, "exp_bound")


def univ_mc(prior, sigma2: float, D: int, trials: int, seed, threads: int = 1) -> AdvantageEstimate:
    """Estimate of E trunc_exp(<x1, x2> / sigma2, D), the Gaussian-channel value."""
    _require_even(D)
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")

    def per_chunk(lat1, lat2):
        return trunc_exp_array(prior.inner_products(lat1, lat2) / sigma2, D)

    return _summarise(_run_chunks(prior, trials, seed, threads, per_chunk), D, "univ")


def paired_difference(a: AdvantageEstimate, b: AdvantageEstimate) -> tuple:
    """Mean of a - b over shared pairs and its standard error."""
    if a.values is None or b.values is None or len(a.values) != len(b.values):
        raise ValidationError("paired comparison needs per-trial values from the same stream")
    diff = a.values - b.values
    m = len(diff)
    se = float(np.std(diff, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return float(np.mean(diff)), se


@dataclass
class UniversalityReport:
    cadv: AdvantageEstimate
    univ_D: AdvantageEstimate
    univ_D_minus_2: AdvantageEstimate
    fisher: float
    audit_passed: bool

    @property
    def ratio(self) -> float:
        return self.cadv.mean / self.univ_D.mean

    @property
    def ratio_std_error(self) -> float:
        """Delta-method standard error of the ratio from the paired values."""
        a, b = self.cadv.values, self.univ_D.values
        r = self.ratio
        resid = (a - r * b) / self.univ_D.mean
        return float(np.std(resid, ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0

    @property
    def margin(self) -> float:
        """univ_D - univ_{D-2}: the growth that the lower sandwich bound needs."""
        return self.univ_D.mean - self.univ_D_minus_2.mean

    def to_dict(self) -> dict:
        return {
            "fisher_information": self.fisher,
            "audit_passed": self.audit_passed,
            "cadv": self.cadv.to_dict(),
            "univ_D": self.univ_D.to_dict(),
            "univ_D_minus_2": self.univ_D_minus_2.to_dict(),
            "ratio_cadv_univ_D": self.ratio,
            "ratio_std_error": self.ratio_std_error,
            "ratio_univ_D_minus_2_univ_D": self.univ_D_minus_2.mean / self.univ_D.mean,
            "margin_univ_D_minus_univ_D_minus_2": self.margin,
        }


def universality_report(prior, channel, D: int, trials: int, seed, threads: int = 1) -> UniversalityReport:
    """Paired cadv, Univ_D and Univ_{D-2} at sigma2 = 1/F on one seed."""
    from .priors import check_assumptions

    _require_even(D)
    if D < 2:
        raise DomainError("universality report needs D >= 2")
    audit = check_assumptions(prior, min(trials, 200), seed)
    if not audit.passes:
        warnings.warn("prior fails the norm-assumption audit; the sandwich bounds need not apply")
    F = channel.fisher_information()
    return UniversalityReport(
        cadv=cadv_mc(prior, channel, D, trials, seed, threads),
        univ_D=univ_mc(prior, 1.0 / F, D, trials, seed, threads),
        univ_D_minus_2=univ_mc(prior, 1.0 / F, D - 2, trials, seed, threads),
        fisher=F,
        audit_passed=audit.passes,
    )


def binomial_lower_bound_holds(k: int, t: int) -> bool:
    """Exact check of C(k, t) >= k^t / t! * exp(-t^2 / k) for 1 <= t <= k/2.

    The comparison is done in integers: exp(-t^2/k) is bracketed from above
    by a rational upper bound so a True answer is rigorous.
    """
    if not (1 <= t and 2 * t <= k):
        raise DomainError("need 1 <= t <= k/2")
    from fractions import Fraction

    lhs = Fraction(math.comb(k, t))
    base = Fraction(k**t, math.factorial(t))
    return lhs >= base * _exp_neg_upper(Fraction(t * t, k))


def _exp_neg_upper(a) -> "Fraction":
    """Rational upper bound on exp(-a) for rational a >= 0, within 1e-15 relative."""
    from fractions import Fraction

    # exp(-a) = 1 / exp(a) and partial sums of exp(a) bound it from below
    total, term, n = Fraction(1), Fraction(1), 0
    while True:
        n += 1
        term = term * a / n
        total += term
        if term < total * Fraction(1, 10**15):
            return 1 / total
