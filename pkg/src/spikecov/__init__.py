"""Inference for high-dimensional spiked sample covariance matrices.

Estimators for the top population spike, the L4 norm of spiked population
eigenvectors and population spectral moments; a two-sample covariance
equality test combining the largest eigenvalue with a linear spectral
statistic; and Monte Carlo tools to check the underlying limit theorems.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DegenerateSpectrumError,
    DomainError,
    InputError,
    NotDistantSpikeError,
    NotPSDError,
    NumericError,
    ParseError,
    SpikecovError,
    UnstableEstimateError,
)
from .estimators import (
    MomentEstimates,
    NuRoots,
    SpikeEstimates,
    ThetaWeights,
    alpha1_hat,
    estimate,
    gamma4_hat,
    l4_estimate,
    moment_estimators,
    nu_roots,
    psi_prime_hat,
    spike_estimates,
    theta_weights,
)
from .kernels import BACKEND
from .linalg import SampleSpectrum, eigh_descending, matrix_sqrt_psd, sample_covariance, sample_spectrum
from .models import (
    CovarianceModel,
    EntryDistribution,
    SpikeTruths,
    build_model,
    draw_sample,
    g_covariance,
    get_distribution,
    model_from_json,
    psi_n,
    psi_prime_n,
    spike_truths,
    true_l4,
)
from .twosample import SamplePlugins, TestResult, p_value, sample_plugins, sigma_lin_from_moments, two_sample_test
