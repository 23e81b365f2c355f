import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from lcdf import channels as ch
from lcdf.channels import cgfs, densities
from lcdf.errors import DomainError, ValidationError


def builtin_channels():
    g = ch.make_additive(densities.gaussian())
    return {
        "gaussian": g,
        "logistic": ch.make_additive(densities.logistic()),
        "smoothed_laplace": ch.make_additive(densities.smoothed_laplace(0.5, 0.1)),
        "expfam_gaussian": ch.make_exponential_family(cgfs.gaussian_cgf()),
        "expfam_bernoulli": ch.make_exponential_family(cgfs.bernoulli_cgf(0.3)),
        "expfam_poisson": ch.make_exponential_family(cgfs.poisson_cgf(2.0)),
        "expfam_exponential": ch.make_exponential_family(cgfs.exponential_cgf(1.0)),
        "bernoulli": ch.bernoulli(0.5),
        "quantized_gaussian": ch.quantize(g),
        "censored_gaussian": ch.censor(g, 0.3),
        "censored_quantized": ch.censor(ch.quantize(g), 0.5),
    }


CHANNELS = builtin_channels()
NAMES = sorted(CHANNELS)


def small_signal(channel, u):
    """Map u in [-1, 1] into the channel's signal domain, away from its edges."""
    lo, hi = channel.domain
    r = min(0.4, 0.4 * hi if math.isfinite(hi) else 0.4, 0.4 * -lo if math.isfinite(lo) else 0.4)
    return u * r


# ---- closed-form examples ---------------------------------------------------


def test_gaussian_overlap_closed_form():
    g = CHANNELS["gaussian"]
    assert g.overlap(0.5, 0.2) == pytest.approx(math.expm1(0.1), abs=1e-8)
    xs = np.linspace(-1.5, 1.5, 7)
    X1, X2 = np.meshgrid(xs, xs)
    np.testing.assert_allclose(g.overlap(X1, X2), np.expm1(X1 * X2), atol=1e-8)


def test_bernoulli_overlap_and_ratio():
    b = CHANNELS["bernoulli"]
    assert b.overlap(0.1, 0.3) == pytest.approx(0.12, abs=1e-15)
    assert float(b.likelihood_ratio(0.25, 1)) == pytest.approx(1.5)


def test_censored_overlap_scaling():
    g = CHANNELS["gaussian"]
    assert ch.censor(g, 0.5).overlap(0.5, 0.2) == pytest.approx(0.5 * math.expm1(0.1), abs=1e-9)
    assert ch.censor(g, 0.4).overlap(0.5, 0.2) == pytest.approx(0.6 * math.expm1(0.1), abs=1e-9)
    assert ch.censor(g, 0.0).overlap(0.5, 0.2) == pytest.approx(g.overlap(0.5, 0.2), abs=1e-15)


def test_fully_censored_is_degenerate():
    c = ch.censor(CHANNELS["gaussian"], 1.0)
    assert c.degenerate
    assert c.fisher_information() == 0.0
    assert c.overlap(0.3, 0.7) == 0.0
    with pytest.raises(DomainError):
        ch.local_fisher_score(c, 0.5)


@pytest.mark.parametrize("eta", [-0.1, 1.5])
def test_censor_rejects_bad_eta(eta):
    with pytest.raises(DomainError):
        ch.censor(CHANNELS["gaussian"], eta)


def test_quantize_needs_additive():
    with pytest.raises(ValidationError):
        ch.quantize(CHANNELS["bernoulli"])


def test_quantized_gaussian_ratio_and_overlap():
    q = CHANNELS["quantized_gaussian"]
    phi = special.ndtr(0.3)
    assert float(q.likelihood_ratio(0.3, 1.0)) == pytest.approx(2 * phi, rel=1e-12)
    assert float(q.likelihood_ratio(0.3, -1.0)) == pytest.approx(2 * (1 - phi), rel=1e-12)
    assert float(q.likelihood_ratio(0.3, 1.0)) == pytest.approx(1.23582, abs=5e-6)
    assert q.overlap(0.0, 0.0) == 0.0
    assert q.overlap(0.0, 0.7) == 0.0
    # E_0[L1 L2] - 1 with both outputs equally likely
    a, b = 0.4, -0.9
    direct = 0.5 * (2 * special.ndtr(a) * 2 * special.ndtr(b) + 2 * special.ndtr(-a) * 2 * special.ndtr(-b)) - 1
    assert q.overlap(a, b) == pytest.approx(direct, abs=1e-14)
    assert float(ch.sign_output(0.0)) == 1.0


def test_likelihood_ratio_at_zero_signal():
    g = CHANNELS["gaussian"]
    np.testing.assert_array_equal(g.likelihood_ratio(0.0, np.linspace(-3, 3, 11)), 1.0)


def test_signal_outside_domain():
    with pytest.raises(DomainError):
        CHANNELS["bernoulli"].overlap(0.7, 0.1)
    with pytest.raises(DomainError):
        CHANNELS["expfam_poisson"].overlap(-2.5, 0.1)


# ---- Fisher information ------------------------------------------------------


@pytest.mark.parametrize(
    "name, expected, tol",
    [("gaussian", 1.0, 1e-10), ("bernoulli", 4.0, 0.0), ("quantized_gaussian", 2 / math.pi, 1e-12),
     ("expfam_poisson", 0.5, 1e-12), ("censored_gaussian", 0.7, 1e-10)],
)
def test_fisher_values(name, expected, tol):
    assert abs(CHANNELS[name].fisher_information() - expected) <= tol


def test_censor_composition():
    base = CHANNELS["logistic"]
    c = ch.censor(ch.censor(base, 0.2), 0.35)
    assert c.fisher_information() == pytest.approx(0.8 * 0.65 * base.fisher_information(), abs=1e-12)


def test_logistic_fisher_closed_form():
    s = 1.7
    c = ch.make_additive(densities.logistic(s))
    assert c.fisher_information() == pytest.approx(1 / (3 * s * s), rel=1e-10)


@pytest.mark.parametrize("name", NAMES)
def test_finite_difference_fisher(name):
    c = CHANNELS[name]
    assert abs(c.fisher_information() - ch.fisher_information_extrapolated(c)) <= 1e-5


def test_plain_finite_difference_step():
    assert ch.fisher_information_fd(CHANNELS["gaussian"], 1e-3) == pytest.approx(1.0, abs=1e-5)
    assert ch.fisher_information_fd(CHANNELS["bernoulli"], 1e-3) == pytest.approx(4.0, abs=1e-5)
    assert ch.fisher_information_fd(CHANNELS["expfam_poisson"], 1e-3) == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize("name", NAMES)
def test_third_mixed_derivative_vanishes(name):
    assert abs(ch.mixed_third_derivative_fd(CHANNELS[name])) <= 1e-4


@pytest.mark.parametrize("name", NAMES)
def test_cramer_rao_saturation(name):
    c = CHANNELS[name]
    F = c.fisher_information()
    assert abs(c.null_expectation(lambda y: ch.local_fisher_score(c, y))) <= 1e-8
    assert c.null_expectation(lambda y: ch.local_fisher_score(c, y) ** 2) == pytest.approx(1 / F, abs=1e-6)


def test_gaussian_score_is_identity():
    y = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(ch.score_unnormalized(CHANNELS["gaussian"], y), y)


@pytest.mark.parametrize("name", ["gaussian", "logistic", "smoothed_laplace"])
def test_unit_variance_densities_have_fisher_at_least_one(name):
    d = densities.from_config({"name": name})
    unit = d.scaled(1 / math.sqrt(d.variance))
    assert ch.make_additive(unit).fisher_information() >= 1 - 1e-10


# ---- smoothed Laplace family -----------------------------------------------


@pytest.mark.parametrize("y", [-2.0, -0.3, 0.0, 0.05, 1.1, 4.0])
def test_smoothed_laplace_matches_convolution(y):
    c, eps = 0.5, 0.2
    b = 2 * c
    d = densities.smoothed_laplace(c, eps)

    def integrand(u):
        return 0.5 * b * math.exp(-b * abs(y - u)) * math.exp(-0.5 * (u / eps) ** 2) / (eps * math.sqrt(2 * math.pi))

    ref, _ = integrate.quad(integrand, -12 * eps, 12 * eps, points=[y] if abs(y) < 12 * eps else None, epsabs=1e-14, epsrel=1e-12)
    assert float(d.pdf(y)) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("eps", [0.3, 0.1, 0.03])
def test_smoothed_laplace_fisher_below_limit(eps):
    c = 0.5
    F = ch.make_additive(densities.smoothed_laplace(c, eps)).fisher_information()
    assert 0 < F <= 4 * c * c


def test_smoothed_laplace_quantization_ratio_tends_to_one():
    ratios = []
    for eps in (0.3, 0.1, 0.03, 0.01):
        add = ch.make_additive(densities.smoothed_laplace(0.5, eps))
        ratios.append(ch.quantize(add).fisher_information() / add.fisher_information())
    assert all(r <= 1 + 1e-9 for r in ratios)
    assert ratios == sorted(ratios)
    assert ratios[-1] > 0.97


# ---- densities and cgfs -----------------------------------------------------


@pytest.mark.parametrize("name", sorted(densities.BUILTIN))
def test_density_normalised_and_symmetric(name):
    d = densities.from_config({"name": name})
    d.validate()
    assert d.integrate(d.pdf) == pytest.approx(1.0, abs=1e-8)


def test_asymmetric_density_rejected():
    g = densities.gaussian()
    skew = densities.Density("skew", lambda y: g.logpdf(y) + np.log1p(0.1 * np.tanh(y)), g.sampler, 10.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        ch.make_additive(skew)


@pytest.mark.parametrize("cgf", [cgfs.gaussian_cgf(), cgfs.bernoulli_cgf(0.3), cgfs.poisson_cgf(2.0), cgfs.exponential_cgf(1.5)])
def test_cgf_invariants(cgf):
    cgf.validate()
    assert cgf.psi(0.0) == 0.0
    ts = np.linspace(-0.5, 0.5, 11)
    d1 = [cgf.d1(t) for t in ts]
    assert all(b > a for a, b in zip(d1, d1[1:]))
    assert cgf.expect(lambda y: 1.0) == pytest.approx(1.0, abs=1e-10)
    assert cgf.expect(lambda y: y) == pytest.approx(cgf.mean, abs=1e-9)


def test_theta_inversion_examples():
    assert cgfs.theta_of_x(cgfs.gaussian_cgf(), 0.37) == pytest.approx(0.37, abs=1e-13)
    assert cgfs.theta_of_x(cgfs.poisson_cgf(2.0), 1.0) == pytest.approx(math.log(1.5), abs=1e-12)
    for c in (cgfs.bernoulli_cgf(0.3), cgfs.poisson_cgf(1.0), cgfs.exponential_cgf(2.0)):
        assert cgfs.theta_of_x(c, 0.0) == 0.0


def test_theta_inversion_unreachable():
    with pytest.raises(DomainError):
        cgfs.theta_of_x(cgfs.bernoulli_cgf(0.5), 0.6)


def test_expfam_closed_forms():
    e = CHANNELS["expfam_gaussian"]
    assert e.overlap(0.5, 0.2) == pytest.approx(math.expm1(0.1), rel=1e-12)
    half = ch.make_exponential_family(cgfs.bernoulli_cgf(0.5))
    for a, b in [(0.1, 0.3), (-0.2, 0.4), (0.45, -0.45)]:
        assert half.overlap(a, b) == pytest.approx(4 * a * b, abs=1e-12)


def test_config_blocks():
    c = ch.from_config({"kind": "additive", "density": {"name": "gaussian"}, "quantize": True, "censor_eta": 0.25})
    assert c.fisher_information() == pytest.approx(0.75 * 2 / math.pi, rel=1e-12)
    with pytest.raises(ValidationError):
        ch.from_config({"kind": "telepathy"})
    with pytest.raises(ValidationError):
        ch.from_config({"kind": "additive", "density": {"name": "gaussian", "colour": 3}})


# ---- property tests on the overlap kernel ------------------------------------

unit = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(NAMES), unit, unit)
def test_overlap_symmetric_zero_row_nonneg_diagonal(name, u1, u2):
    c = CHANNELS[name]
    x1, x2 = small_signal(c, u1), small_signal(c, u2)
    assert abs(c.overlap(x1, x2) - c.overlap(x2, x1)) <= 1e-10
    assert abs(c.overlap(x1, 0.0)) <= 1e-10
    assert abs(c.overlap(0.0, x1)) <= 1e-10
    assert c.overlap(x1, x1) >= -1e-10


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["gaussian", "logistic", "smoothed_laplace"]), unit, unit)
def test_fixed_rule_matches_adaptive(name, u1, u2):
    c = CHANNELS[name]
    x1, x2 = small_signal(c, u1), small_signal(c, u2)
    assert float(c.overlap_fixed_rule(np.array([x1]), np.array([x2]))[0]) == pytest.approx(c.overlap(x1, x2), abs=1e-10)
