"""Quick invariant checks across all modules, run by ``lcdf selftest``."""

from __future__ import annotations

import math
import time

import numpy as np

from . import advantage, efron_stein, priors, spectral, truncexp
from . import channels as ch
from .channels import cgfs, densities


def _fisher_table():
    worst = abs(ch.make_additive(densities.gaussian()).fisher_information() - 1.0)
    worst = max(worst, abs(ch.bernoulli(0.5).fisher_information() - 4.0))
    q = ch.quantize(ch.make_additive(densities.gaussian()))
    worst = max(worst, abs(q.fisher_information() - 2.0 / math.pi))
    base = ch.make_additive(densities.logistic())
    for eta in (0.1, 0.5, 0.9):
        worst = max(worst, abs(ch.censor(base, eta).fisher_information() - (1 - eta) * base.fisher_information()))
    return worst < 1e-6, worst


def _expfam_identity():
    worst = 0.0
    for cgf in (cgfs.gaussian_cgf(), cgfs.bernoulli_cgf(0.3), cgfs.poisson_cgf(2.0)):
        c = ch.make_exponential_family(cgf)
        F = c.fisher_information()
        worst = max(worst, abs(F * cgf.variance - 1.0), abs(ch.fisher_information_extrapolated(c) - F) / F)
    return worst < 1e-4, worst


def _dual_path():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        m = efron_stein.random_model(rng)
        for D in range(m.N + 1):
            a, b = efron_stein.cadv_exact(m, D), efron_stein.cadv_formula_exact(m, D)
            worst = max(worst, abs(a - b) / b)
    return worst < 1e-10, worst


def _projections():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(10):
        m = efron_stein.random_model(rng)
        f = rng.standard_normal(m.shape)
        total = sum(efron_stein.project_hat(m, f, T) for T in _subsets(m.N))
        worst = max(worst, float(np.max(np.abs(total - f))))
        h = efron_stein.project_hat(m, f, (0,))
        worst = max(worst, float(np.max(np.abs(efron_stein.project_hat(m, h, (0,)) - h))))
    return worst < 1e-10, worst


def _subsets(N):
    import itertools

    return [T for r in range(N + 1) for T in itertools.combinations(range(N), r)]


def _truncexp():
    worst = 0.0
    for x, D in ((-20.0, 40), (-5.0, 10), (3.0, 6), (-50.0, 200)):
        ref = truncexp.trunc_exp_oracle(x, D)
        worst = max(worst, abs(truncexp.trunc_exp(x, D) - ref) / ref)
    return worst < 1e-10, worst


def _binomial():
    ok = all(advantage.binomial_lower_bound_holds(k, t) for k in range(2, 33) for t in range(1, k // 2 + 1))
    return ok, None


def _small_advantage():
    prior = priors.FinitePrior([[0.25]])
    est = advantage.cadv_mc(prior, ch.bernoulli(0.5), 1, 16, seed=0)
    return abs(est.mean - 1.25) < 1e-12, abs(est.mean - 1.25)


def _spectral():
    M = np.ones((3, 3)) - np.eye(3)
    err = abs(spectral.top_eigenvalue(M) - 2.0)
    cfg = spectral.SpikedMatrixConfig(300, 0.0, densities.gaussian())
    obs = spectral.sample_spiked_matrix(cfg, 1)
    sym = float(np.max(np.abs(obs.Y - obs.Y.T)))
    edge = spectral.top_eigenvalue(obs.Y) / math.sqrt(300)
    return err < 1e-10 and sym == 0.0 and 1.7 < edge < 2.2, err


CHECKS = {
    "fisher_table": _fisher_table,
    "exponential_family_identity": _expfam_identity,
    "exact_dual_path": _dual_path,
    "efron_stein_projections": _projections,
    "truncated_exponential_oracle": _truncexp,
    "binomial_lower_bound": _binomial,
    "single_coordinate_advantage": _small_advantage,
    "spectral_basics": _spectral,
}


def run_selftest() -> list:
    """Run every check; each entry has name, passed, max error (if any) and seconds."""
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            passed, err = fn()
            detail = None
        except Exception as exc:  # a crash is a failed check, reported not raised
            passed, err, detail = False, None, f"{type(exc).__name__}: {exc}"
        results.append({"name": name, "passed": bool(passed), "max_error": err, "error": detail,
                        "seconds": time.perf_counter() - t0})
    return results
