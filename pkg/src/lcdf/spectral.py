"""Spiked Wigner simulations: corruption, entrywise transforms and top eigenvalues.

Observation model: Y = (lam / sqrt(n)) x x^T + W with W symmetric, i.i.d.
density-p entries above the diagonal and a zero diagonal. Censoring hides a
symmetric random pattern of entries (tracked by a boolean mask, stored as
exact zeros); quantization replaces entries by their sign with sign(0) = +1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .channels import AdditiveChannel, Density, sign_output
from .errors import DomainError, NumericalError, ValidationError
from .priors import SpikeLaw, rademacher
from .rng import as_generator, stream

CORRUPTIONS = ("none", "censor", "quantize")
MAX_DIM = 4000
DENSE_FALLBACK_DIM = 1000
DIRECT_DIM = 200


@dataclass(frozen=True)
class SpikedMatrixConfig:
    n: int
    lam: float
    density: Density
    spike_law: SpikeLaw = field(default_factory=rademacher)
    corruption: str = "none"
    eta: float = 0.0
    zero_diagonal: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if not self.lam >= 0:
            raise ValidationError("lambda must be non-negative")
        if self.corruption not in CORRUPTIONS:
            raise ValidationError(f"corruption must be one of {CORRUPTIONS}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError("eta must lie in [0, 1]")
        if self.corruption != "censor" and self.eta != 0.0:
            raise ValidationError("eta is only meaningful with censoring")

    def with_(self, **changes) -> "SpikedMatrixConfig":
        fields = dict(n=self.n, lam=self.lam, density=self.density, spike_law=self.spike_law,
                      corruption=self.corruption, eta=self.eta, zero_diagonal=self.zero_diagonal)
        fields.update(changes)
        if fields["corruption"] != "censor":
            fields["eta"] = 0.0
        return SpikedMatrixConfig(**fields)

    def describe(self) -> dict:
        return {
            "n": self.n,
            "lambda": self.lam,
            "density": self.density.name,
            "density_params": self.density.params,
            "spike_law": self.spike_law.describe(),
            "corruption": self.corruption,
            "eta": self.eta,
            "zero_diagonal": self.zero_diagonal,
        }


@dataclass
class SpikedObservation:
    Y: np.ndarray
    x: np.ndarray
    censored: Optional[np.ndarray] = None


@dataclass
class SpectralTrial:
    key: tuple
    lambda_max_over_sqrt_n: float
    trace_power: Optional[float]
    config: dict


def _symmetric_from_upper(n, values, diag=None):
    M = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    M[iu] = values
    M = M + M.T
    if diag is not None:
        M[np.diag_indices(n)] = diag
    return M


def sample_spiked_matrix(config: SpikedMatrixConfig, seed) -> SpikedObservation:
    """One draw of the (possibly corrupted) spiked matrix."""
    rng = as_generator(seed)
    n = config.n
    x = config.spike_law.sample(rng, n)
    m = n * (n - 1) // 2
    iu = np.triu_indices(n, 1)
    upper = config.density.sample(rng, m) + (config.lam / math.sqrt(n)) * x[iu[0]] * x[iu[1]]
    diag = None
    if not config.zero_diagonal:
        diag = config.density.sample(rng, n) + (config.lam / math.sqrt(n)) * x * x
    censored = None
    if config.corruption == "quantize":
        upper = sign_output(upper)
        diag = None if diag is None else sign_output(diag)
    elif config.corruption == "censor":
        hide = rng.random(m) < config.eta
        upper = np.where(hide, 0.0, upper)
        censored = _symmetric_from_upper(n, hide.astype(float)) > 0
        if diag is not None:
            hide_d = rng.random(n) < config.eta
            diag = np.where(hide_d, 0.0, diag)
            censored[np.diag_indices(n)] = hide_d
    return SpikedObservation(_symmetric_from_upper(n, upper, diag), x, censored)


def apply_score_transform(Y, density: Density, censored=None) -> np.ndarray:
    """Entrywise -p'/p, with censored entries sent to exactly 0."""
    f = np.asarray(density.neg_log_derivative(np.asarray(Y, dtype=float)), dtype=float)
    if censored is not None:
        f = np.where(censored, 0.0, f)
    return f


def statistic_matrix(obs: SpikedObservation, config: SpikedMatrixConfig) -> np.ndarray:
    """The matrix whose spectrum is inspected: raw signs when quantized, scores otherwise."""
    if config.corruption == "quantize":
        return obs.Y
    return apply_score_transform(obs.Y, config.density, obs.censored)


def _check_symmetric(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("expected a square matrix")
    if not np.array_equal(M, M.T):
        raise ValidationError("matrix is not exactly symmetric")
    if M.shape[0] > MAX_DIM:
        raise DomainError(f"dimension {M.shape[0]} exceeds {MAX_DIM}")
    return M


def top_eigenvalue(M, rtol: float = 1e-8) -> float:
    """Largest (algebraic) eigenvalue of a symmetric matrix.

    Lanczos with a fixed start vector; the residual |Mv - theta v| is checked
    against rtol * |M|_2. Small matrices go straight to a dense solver, and
    dense is also the fallback up to dimension 1000.
    """
    M = _check_symmetric(M)
    n = M.shape[0]
    if n <= DIRECT_DIM:
        return float(linalg.eigvalsh(M, subset_by_index=[n - 1, n - 1])[0])
    v0 = stream(0, n).standard_normal(n)
    residual = math.inf
    try:
        vals, vecs = eigsh(M, k=1, which="LA", v0=v0, tol=1e-12, maxiter=20 * n)
        theta, v = float(vals[0]), vecs[:, 0]
        scale = max(abs(theta), float(np.max(np.abs(M))), 1e-300)
        residual = float(np.linalg.norm(M @ v - theta * v))
        if residual <= rtol * scale:
            return theta
    except (ArpackNoConvergence, ArpackError):
        pass
    if n <= DENSE_FALLBACK_DIM:
        return float(linalg.eigvalsh(M, subset_by_index=[n - 1, n - 1])[0])
    raise NumericalError("top eigenvalue did not converge", residual)


def fisher_of(density: Density) -> float:
    return AdditiveChannel(density, validate=False).fisher_information()


def eigenvalue_threshold(lam: float, F: float) -> float:
    """sqrt(F) + lam F / 2 + 1 / (2 lam): midway between bulk edge and outlier."""
    if not lam > 0:
        raise DomainError("threshold needs lambda > 0")
    return math.sqrt(F) + 0.5 * lam * F + 0.5 / lam


def eigenvalue_test(Y, lam: float, density: Density, censored=None, fisher: float = None) -> str:
    """'planted' if the top eigenvalue of f(Y)/sqrt(n) clears the threshold, else 'null'."""
    F = fisher_of(density) if fisher is None else fisher
    f = apply_score_transform(Y, density, censored)
    stat = top_eigenvalue(f) / math.sqrt(f.shape[0])
    return "planted" if stat > eigenvalue_threshold(lam, F) else "null"


def trace_power_statistic(Y, density: Density, D: int, censored=None) -> float:
    """Tr((f(Y)/sqrt(n))^D) for even D, from the eigenvalues."""
    f = _check_symmetric(apply_score_transform(Y, density, censored))
    n = f.shape[0]
    if D < 0 or D % 2 or D > n:
        raise DomainError("D must be even with 0 <= D <= n")
    ev = linalg.eigvalsh(f / math.sqrt(n))
    return math.fsum(ev**D)


def run_trial(config: SpikedMatrixConfig, seed, key=(), trace_D: int = None) -> SpectralTrial:
    """Draw, transform and summarise one matrix; ``key`` selects the sub-stream."""
    rng = stream(seed, *key) if key else as_generator(seed)
    obs = sample_spiked_matrix(config, rng)
    M = statistic_matrix(obs, config)
    lmax = top_eigenvalue(M) / math.sqrt(config.n)
    tp = None
    if trace_D is not None:
        ev = linalg.eigvalsh(M / math.sqrt(config.n))
        tp = math.fsum(ev**trace_D)
    return SpectralTrial(tuple(key), lmax, tp, config.describe())


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(np.mean(v)), se


def run_trials(config, trials: int, seed, key=(), threads: int = 1) -> np.ndarray:
    """n^{-1/2} lambda_max over ``trials`` independent sub-streams (key + (t,))."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")

    def one(t):
        return run_trial(config, seed, (*key, t)).lambda_max_over_sqrt_n

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, range(trials))))
    return np.array([one(t) for t in range(trials)])


SCAN_COLUMNS = ("lambda", "eta", "n", "trials", "mean_lmax", "stderr_lmax", "bulk_edge_estimate")


@dataclass
class PhaseScan:
    rows: list
    metadata: dict

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCAN_COLUMNS)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SCAN_COLUMNS])


def predicted_threshold(config: SpikedMatrixConfig) -> float:
    """Conjectured critical lambda for the given corruption."""
    if config.corruption == "quantize":
        return 1.0 / (2.0 * float(config.density.pdf(0.0)))
    F = fisher_of(config.density)
    if config.eta >= 1.0:
        return math.inf
    return 1.0 / math.sqrt((1.0 - config.eta) * F)


def phase_scan(base: SpikedMatrixConfig, lambda_grid, trials: int, seed, etas=None, threads: int = 1) -> PhaseScan:
    """Mean and standard error of n^{-1/2} lambda_max over a (eta, lambda) grid.

    For each eta the bulk edge is estimated from separate lambda = 0 draws.
    The finite-n transition estimate is the first grid lambda whose mean
    exceeds bulk edge + 3 bulk standard deviations.
    """
    lambda_grid = [float(v) for v in lambda_grid]
    if not lambda_grid:
        raise ValidationError("lambda grid must be non-empty")
    if etas is None:
        etas = [base.eta]
    rows, per_eta = [], []
    for i, eta in enumerate(etas):
        cfg = base.with_(eta=float(eta))
        bulk = run_trials(cfg.with_(lam=0.0), trials, seed, (1, i), threads)
        edge, bulk_sd = float(np.mean(bulk)), float(np.std(bulk, ddof=1)) if trials > 1 else 0.0
        transition = None
        for j, lam in enumerate(lambda_grid):
            vals = run_trials(cfg.with_(lam=lam), trials, seed, (0, i, j), threads)
            mean, se = _mean_se(vals)
            rows.append({"lambda": lam, "eta": cfg.eta, "n": cfg.n, "trials": trials,
                         "mean_lmax": mean, "stderr_lmax": se, "bulk_edge_estimate": edge})
            if transition is None and mean > edge + 3.0 * bulk_sd:
                transition = lam
        per_eta.append({"eta": cfg.eta, "bulk_sd": bulk_sd, "transition_estimate": transition,
                        "predicted_threshold": predicted_threshold(cfg)})
    probe = base.corruption in ("censor", "quantize")
    metadata = {
        "config": base.describe(),
        "statistic": "raw sign matrix" if base.corruption == "quantize" else "score-transformed matrix",
        "conjecture_probe": probe,
        "note": "numerical evidence for a conjectured limit, not a verified constant" if probe else None,
        "per_eta": per_eta,
    }
    return PhaseScan(rows, metadata)


def monotone_within(rows, sigmas: float = 2.0) -> bool:
    """True if mean_lmax never drops by more than ``sigmas`` joint standard errors along the rows."""
    for a, b in zip(rows, rows[1:]):
        joint = math.hypot(a["stderr_lmax"], b["stderr_lmax"])
        if b["mean_lmax"] < a["mean_lmax"] - sigmas * joint:
            return False
    return True


def config_from_block(block: dict) -> tuple:
    """(base config, lambda grid, etas) from a phase-scan config block."""
    from .channels import densities
    from .priors import spike_law_from_config

    try:
        n = int(block["n"])
        grid = list(block.get("lambda_grid", [block.get("lambda", 0.0)]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad spectral block: {exc!r}") from None
    corruption = block.get("corruption", "none")
    eta = block.get("eta", 0.0)
    etas = list(eta) if isinstance(eta, (list, tuple)) else [eta]
    density = densities.from_config(block.get("density", {"name": "gaussian"}))
    law = spike_law_from_config(block.get("spike_law", "rademacher"))
    base = SpikedMatrixConfig(n=n, lam=float(grid[0]) if grid else 0.0, density=density, spike_law=law,
                              corruption=corruption, eta=float(etas[0]) if corruption == "censor" else 0.0,
                              zero_diagonal=bool(block.get("zero_diagonal", True)))
    if corruption != "censor":
        etas = [0.0]
    return base, grid, [float(e) for e in etas]
