"""Two-sample test of covariance equality from the top spike and a linear spectral statistic.

The combined statistic is ``T = M^2 + L1^2`` where ``M`` compares the largest
sample eigenvalues and ``L1`` compares ``sum_{i>=2} f(lam_i)``, ``f(x) = x + x^2``.
Under equality both are asymptotically N(0, 1) and independent, so T is
approximately chi-square with two degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError, UnstableEstimateError
from .estimators import (
    effective_eigenvalues,
    gamma4_hat,
    l4_estimate,
    moment_estimators,
    alpha1_hat,
    psi_prime_hat,
)
from .linalg import as_data_matrix, sample_spectrum

__all__ = [
    "SamplePlugins",
    "TestResult",
    "lss",
    "sigma_lin_from_moments",
    "sample_plugins",
    "two_sample_test",
    "p_value",
]


def lss(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return x + x * x


def sigma_lin_from_moments(r: ArrayLike, c: float, gamma4: float) -> float:
    """Asymptotic variance of ``tr S + tr S^2`` given population moments ``r_1..r_4``."""
    r1, r2, r3, r4 = np.asarray(r, dtype=np.float64)
    gauss = (
        8 * c * r4
        + 16 * c**2 * r3 * r1
        + 8 * c * r3
        + 8 * c**3 * r2 * r1**2
        + 8 * c**2 * r2 * r1
        + 4 * c**2 * r2**2
        + 2 * c * r2
    )
    kurt = 4 * c * r4 + 8 * c**2 * r3 * r1 + 4 * c * r3 + 4 * c**3 * r2 * r1**2 + 4 * c**2 * r2 * r1 + c * r2
    return float(gauss + (gamma4 - 3.0) * kurt)


@dataclass(frozen=True)
class SamplePlugins:
    n: int
    p: int
    c: float
    lambda1: float
    alpha_hat: float
    psi_prime_hat: float
    l4_hat: float
    gamma4_hat: float
    a: tuple[float, float, float, float]
    a_excl: tuple[float, float, float, float]
    sigma_spi_sq: float
    sigma_lin_sq: float
    sigma_lin1_sq: float
    lss_full: float
    lss_excl: float

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["a"] = list(self.a)
        d["a_excl"] = list(self.a_excl)
        return d


def sample_plugins(data: ArrayLike) -> SamplePlugins:
    """Run the single-sample estimators and assemble the variance plug-ins."""
    y = as_data_matrix(data)
    n, p = y.shape
    if n < 5 or p < 2:
        raise InputError(f"need n >= 5 and p >= 2, got n={n}, p={p}")
    cov, spec = sample_spectrum(y)
    c = p / n
    lam = effective_eigenvalues(spec.eigenvalues, n)
    l1 = float(lam[0])
    alpha = alpha1_hat(lam, c)
    dpsi = psi_prime_hat(lam, c)
    l4, _, _, _ = l4_estimate(0, spec)
    mom = gamma4_hat(y, cov, spec)
    g4 = mom.gamma4_hat

    s_excl = mom.s - l1 ** np.arange(1, 5) / p
    a_excl = moment_estimators(s_excl, c)

    spi = (g4 - 3.0) * alpha**2 * dpsi**2 * l4 + 2.0 * alpha**2 * dpsi
    lin = sigma_lin_from_moments(mom.a, c, g4)
    lin1 = sigma_lin_from_moments(a_excl, c, g4)
    for name, v in (("sigma_spi^2", spi), ("sigma_lin^2", lin), ("sigma_lin1^2", lin1)):
        if not v > 0:
            raise UnstableEstimateError(f"estimated {name} = {v:.4g} is not positive")

    f = lss(lam)
    return SamplePlugins(
        n=n,
        p=p,
        c=c,
        lambda1=l1,
        alpha_hat=alpha,
        psi_prime_hat=dpsi,
        l4_hat=l4,
        gamma4_hat=g4,
        a=tuple(float(v) for v in mom.a),  # type: ignore[arg-type]
        a_excl=tuple(float(v) for v in a_excl),  # type: ignore[arg-type]
        sigma_spi_sq=spi,
        sigma_lin_sq=lin,
        sigma_lin1_sq=lin1,
        lss_full=float(np.sum(f)),
        lss_excl=float(np.sum(f[1:])),
    )


def p_value(stat: float, kind: Literal["normal", "chi2"]) -> float:
    """Two-sided standard normal or chi-square(2) upper-tail p-value."""
    if not math.isfinite(stat):
        raise InputError("statistic must be finite")
    if kind == "normal":
        return math.erfc(abs(stat) / math.sqrt(2.0))
    if kind == "chi2":
        return math.exp(-max(stat, 0.0) / 2.0)
    raise InputError(f"unknown p-value kind {kind!r}")


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    m_stat: float
    l_stat: float
    l1_stat: float
    t_stat: float
    p_m: float
    p_l: float
    p_l1: float
    p_t: float
    plugins: tuple[SamplePlugins, SamplePlugins]

    def to_json(self) -> dict[str, Any]:
        return {
            "M": self.m_stat,
            "L": self.l_stat,
            "L1": self.l1_stat,
            "T": self.t_stat,
            "p_M": self.p_m,
            "p_L": self.p_l,
            "p_L1": self.p_l1,
            "p_T": self.p_t,
            "plugins": {"sample1": self.plugins[0].to_json(), "sample2": self.plugins[1].to_json()},
        }


def combine(a: SamplePlugins, b: SamplePlugins) -> TestResult:
    """Form the statistics from two samples' plug-ins."""
    if a.p != b.p:
        raise InputError(f"dimension mismatch: {a.p} vs {b.p}")
    m = (a.lambda1 - b.lambda1) / math.sqrt(a.sigma_spi_sq / a.n + b.sigma_spi_sq / b.n)
    # mean of tr S^2 shifts by p (c1 - c2) r1^2 between unequal sample sizes
    kappa = 0.0
    if a.n != b.n:
        a1 = (a.n * a.a[0] + b.n * b.a[0]) / (a.n + b.n)
        kappa = a.p * (a.c - b.c) * a1**2
    l_full = (a.lss_full - b.lss_full - kappa) / math.sqrt(a.sigma_lin_sq + b.sigma_lin_sq)
    l_excl = (a.lss_excl - b.lss_excl - kappa) / math.sqrt(a.sigma_lin1_sq + b.sigma_lin1_sq)
    t = m * m + l_excl * l_excl
    return TestResult(
        m_stat=m,
        l_stat=l_full,
        l1_stat=l_excl,
        t_stat=t,
        p_m=p_value(m, "normal"),
        p_l=p_value(l_full, "normal"),
        p_l1=p_value(l_excl, "normal"),
        p_t=p_value(t, "chi2"),
        plugins=(a, b),
    )


def two_sample_test(data1: ArrayLike, data2: ArrayLike) -> TestResult:
    y1 = as_data_matrix(data1)
    y2 = as_data_matrix(data2)
    if y1.shape[1] != y2.shape[1]:
        raise InputError(f"dimension mismatch: {y1.shape[1]} vs {y2.shape[1]}")
    return combine(sample_plugins(y1), sample_plugins(y2))
