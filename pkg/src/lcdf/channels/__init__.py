"""Scalar channels, noise densities and cumulant generating functions."""

from .cgfs import Cgf, bernoulli_cgf, exponential_cgf, gaussian_cgf, poisson_cgf, theta_of_x
from .core import (
    CENSORED,
    AdditiveChannel,
    BernoulliChannel,
    CensoredChannel,
    Channel,
    ExponentialFamilyChannel,
    QuantizedChannel,
    bernoulli,
    censor,
    fisher_information,
    fisher_information_extrapolated,
    fisher_information_fd,
    from_config,
    likelihood_ratio,
    local_fisher_score,
    make_additive,
    make_exponential_family,
    mixed_third_derivative_fd,
    overlap,
    quantize,
    score_unnormalized,
    sign_output,
)
from .densities import Density, gaussian, logistic, smoothed_laplace
