"""Population covariance models, entry distributions and theoretical spike quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, InputError, NotDistantSpikeError

__all__ = [
    "CovarianceModel",
    "EntryDistribution",
    "SpikeTruths",
    "DEFAULT_O1",
    "build_model",
    "model_from_json",
    "get_distribution",
    "register_distribution",
    "psi_n",
    "psi_prime_n",
    "spike_truths",
    "g_covariance",
    "true_l4",
    "make_rng",
    "draw_sample",
]

ORTHO_TOL = 1e-10


def _default_o1() -> NDArray[np.float64]:
    q, r = np.linalg.qr(np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    return q * np.sign(np.diag(r))


DEFAULT_O1 = _default_o1()


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Spiked population covariance ``U diag(spikes..., nonspiked...) U^T``.

    ``spikes`` holds ``(value, multiplicity)`` pairs in strictly descending
    order; column ``j`` of ``transform`` is the eigenvector of the ``j``-th
    entry of :attr:`eigenvalues`.
    """

    p: int
    spikes: tuple[tuple[float, int], ...]
    nonspiked: NDArray[np.float64]
    transform: NDArray[np.float64] | None = None
    model_id: int | str = "custom"
    o1: NDArray[np.float64] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        spikes = tuple((float(a), int(m)) for a, m in self.spikes)
        object.__setattr__(self, "spikes", spikes)
        ns = np.asarray(self.nonspiked, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "nonspiked", ns)
        k = sum(m for _, m in spikes)
        if self.p < 1 or k + ns.size != self.p:
            raise InputError(f"spike multiplicities ({k}) plus non-spiked count ({ns.size}) must equal p={self.p}")
        if any(m < 1 for _, m in spikes):
            raise InputError("spike multiplicities must be positive")
        values = [a for a, _ in spikes]
        if any(b >= a for a, b in zip(values, values[1:])):
            raise InputError("spike values must be strictly descending")
        if not np.all(np.isfinite(ns)) or np.any(ns <= 0) or any(a <= 0 for a in values):
            raise InputError("all eigenvalues must be positive and finite")
        if ns.size and values and values[-1] <= ns.max():
            raise InputError("spikes must exceed every non-spiked eigenvalue")
        if self.transform is not None:
            u = np.asarray(self.transform, dtype=np.float64)
            if u.shape != (self.p, self.p):
                raise InputError(f"transform must be {self.p}x{self.p}")
            if np.max(np.abs(u.T @ u - np.eye(self.p))) > ORTHO_TOL:
                raise InputError("transform is not orthogonal")
            object.__setattr__(self, "transform", u)

    @property
    def n_spiked(self) -> int:
        return sum(m for _, m in self.spikes)

    @cached_property
    def eigenvalues(self) -> NDArray[np.float64]:
        head = [a for a, m in self.spikes for _ in range(m)]
        return np.concatenate([np.asarray(head, dtype=np.float64), self.nonspiked])

    @property
    def offsets(self) -> list[int]:
        """Column offset of each spike group within :attr:`eigenvalues`."""
        out, r = [], 0
        for _, m in self.spikes:
            out.append(r)
            r += m
        return out

    def eigvecs(self) -> NDArray[np.float64]:
        return np.eye(self.p) if self.transform is None else self.transform

    def spike_vectors(self, i: int) -> NDArray[np.float64]:
        """Population eigenvectors (as columns) of spike group ``i``."""
        r = self.offsets[i]
        m = self.spikes[i][1]
        return self.eigvecs()[:, r : r + m]

    def covariance(self) -> NDArray[np.float64]:
        lam = self.eigenvalues
        if self.transform is None:
            return np.diag(lam)
        u = self.transform
        s = (u * lam) @ u.T
        return 0.5 * (s + s.T)

    @cached_property
    def sqrt_factor(self) -> NDArray[np.float64] | None:
        """Symmetric square root, or ``None`` when the model is diagonal."""
        if self.transform is None:
            return None
        u = self.transform
        r = (u * np.sqrt(self.eigenvalues)) @ u.T
        return 0.5 * (r + r.T)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "id": self.model_id,
            "p": self.p,
            "spikes": [[a, m] for a, m in self.spikes],
            "nonspiked": self.nonspiked.tolist(),
            "o1": None if self.o1 is None else np.asarray(self.o1).reshape(-1).tolist(),
        }
        if self.model_id == "custom" and self.transform is not None and self.o1 is None:
            doc["transform"] = self.transform.reshape(-1).tolist()
        return doc


def _embed_o1(p: int, o1: ArrayLike) -> NDArray[np.float64]:
    block = np.asarray(o1, dtype=np.float64).reshape(3, 3)
    if np.max(np.abs(block.T @ block - np.eye(3))) > ORTHO_TOL:
        raise InputError("O1 block is not orthogonal")
    u = np.eye(p)
    u[:3, :3] = block
    return u


_MIN_P = {1: 1, 2: 11, 3: 3, 4: 3, 5: 11}


def build_model(model_id: int, p: int, o1: ArrayLike | None = None) -> CovarianceModel:
    """One of the five reference models.

    1. ``diag(8, 1, ..., 1)``
    2. ``diag(6, 2 x 10, 1, ..., 1)``
    3. ``O_p diag(12, d_2..d_p) O_p^T`` with ``d_i = 3 - 1.5 (i-1)/p``
    4. ``O_p diag(15, d_2..d_p) O_p^T`` with ``d_i = 3 - 2 (i-1)/p``
    5. ``diag(12, 2 x 10, 1, ..., 1)``

    ``O_p`` embeds the 3x3 orthogonal ``o1`` (default :data:`DEFAULT_O1`) in
    the top-left corner of the identity.
    """
    if model_id not in _MIN_P:
        raise InputError(f"unknown model id {model_id!r}; expected 1..5")
    p = int(p)
    if p < _MIN_P[model_id]:
        raise InputError(f"model {model_id} needs p >= {_MIN_P[model_id]}, got {p}")
    i = np.arange(2, p + 1)
    if model_id == 1:
        return CovarianceModel(p, ((8.0, 1),), np.ones(p - 1), model_id=1)
    if model_id in (2, 5):
        top = 6.0 if model_id == 2 else 12.0
        return CovarianceModel(p, ((top, 1), (2.0, 10)), np.ones(p - 11), model_id=model_id)
    block = DEFAULT_O1 if o1 is None else np.asarray(o1, dtype=np.float64).reshape(3, 3)
    u = _embed_o1(p, block)
    if model_id == 3:
        d = 3.0 - 1.5 * (i - 1) / p
        return CovarianceModel(p, ((12.0, 1),), d, transform=u, model_id=3, o1=block)
    d = 3.0 - 2.0 * (i - 1) / p
    return CovarianceModel(p, ((15.0, 1),), d, transform=u, model_id=4, o1=block)


def model_from_json(doc: dict[str, Any]) -> CovarianceModel:
    """Inverse of :meth:`CovarianceModel.to_json`.

    Preset ids need only ``id`` and ``p`` (plus an optional ``o1``).
    """
    mid = doc.get("id", "custom")
    o1 = doc.get("o1")
    if mid != "custom":
        try:
            mid = int(mid)
        except (TypeError, ValueError) as exc:
            raise InputError(f"model id must be 1..5 or 'custom', got {mid!r}") from exc
        if "p" not in doc:
            raise InputError("model document needs 'p'")
        return build_model(mid, int(doc["p"]), o1)
    try:
        p = int(doc["p"])
        spikes = tuple((float(a), int(m)) for a, m in doc["spikes"])
        nonspiked = np.asarray(doc["nonspiked"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"custom model needs 'p', 'spikes' and 'nonspiked': {exc}") from exc
    transform = None
    if o1 is not None:
        transform = _embed_o1(p, o1)
        o1 = np.asarray(o1, dtype=np.float64).reshape(3, 3)
    elif doc.get("transform") is not None:
        transform = np.asarray(doc["transform"], dtype=np.float64).reshape(p, p)
    return CovarianceModel(p, spikes, nonspiked, transform=transform, model_id="custom", o1=o1)


# ---------------------------------------------------------------- distributions

Sampler = Callable[[np.random.Generator, tuple[int, ...]], NDArray[np.float64]]


@dataclass(frozen=True)
class EntryDistribution:
    """Mean-zero, unit-variance law for the standardized entries."""

    kind: str
    gamma4: float
    sampler: Sampler = field(repr=False, compare=False)

    def sample(self, rng: np.random.Generator, shape: tuple[int, ...]) -> NDArray[np.float64]:
        return self.sampler(rng, shape)


def _t10(rng: np.random.Generator, shape: tuple[int, ...]) -> NDArray[np.float64]:
    return rng.standard_t(10, size=shape) / math.sqrt(5.0 / 4.0)


def _rademacher(rng: np.random.Generator, shape: tuple[int, ...]) -> NDArray[np.float64]:
    return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0


_DISTRIBUTIONS: dict[str, EntryDistribution] = {
    "normal": EntryDistribution("normal", 3.0, lambda rng, shape: rng.standard_normal(shape)),
    # fourth moment of t_nu / sqrt(nu/(nu-2)) is 3(nu-2)/(nu-4)
    "t10": EntryDistribution("t10", 3.0 * 8.0 / 6.0, _t10),
    "rademacher": EntryDistribution("rademacher", 1.0, _rademacher),
}
_ALIASES = {"gaussian": "normal", "standard-normal": "normal", "scaled-t10": "t10", "t": "t10"}


def register_distribution(name: str, sampler: Sampler, gamma4: float) -> EntryDistribution:
    """Add a custom unit-variance entry law under ``name``."""
    if gamma4 < 1.0:
        raise InputError("a unit-variance law has fourth moment >= 1")
    dist = EntryDistribution(name, float(gamma4), sampler)
    _DISTRIBUTIONS[name] = dist
    return dist


def get_distribution(name: str | EntryDistribution) -> EntryDistribution:
    if isinstance(name, EntryDistribution):
        return name
    key = _ALIASES.get(name, name)
    try:
        return _DISTRIBUTIONS[key]
    except KeyError:
        raise InputError(f"unknown distribution {name!r}; known: {sorted(_DISTRIBUTIONS)}") from None


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed``."""
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]  # type: ignore[arg-type]
    if any(s < 0 for s in entropy):
        raise InputError("seeds must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def draw_sample(
    model: CovarianceModel,
    n: int,
    dist: str | EntryDistribution = "normal",
    seed: int | Sequence[int] = 0,
) -> NDArray[np.float64]:
    """``n`` observations ``y_i = Sigma^{1/2} q_i`` as the rows of an n x p matrix."""
    if n < 1:
        raise InputError("n must be positive")
    d = get_distribution(dist)
    q = d.sample(make_rng(seed), (n, model.p))
    root = model.sqrt_factor
    if root is None:
        return q * np.sqrt(model.eigenvalues)
    return q @ root


# ---------------------------------------------------------------- spike theory


def _check_domain(alpha: float, t: NDArray[np.float64]) -> None:
    if alpha == 0.0:
        raise DomainError("psi is undefined at 0")
    if t.size and t.min() <= alpha <= t.max():
        raise DomainError(f"alpha={alpha} lies inside the non-spiked range [{t.min()}, {t.max()}]")


def psi_n(alpha: float, nonspiked: ArrayLike, n: int) -> float:
    """``alpha + (alpha/n) sum_j t_j / (alpha - t_j)`` over the non-spiked eigenvalues."""
    t = np.asarray(nonspiked, dtype=np.float64).reshape(-1)
    _check_domain(alpha, t)
    return float(alpha + alpha / n * np.sum(t / (alpha - t)))


def psi_prime_n(alpha: float, nonspiked: ArrayLike, n: int, check: bool = True) -> float:
    """Derivative of :func:`psi_n`; raises unless the spike is distant (positive derivative)."""
    t = np.asarray(nonspiked, dtype=np.float64).reshape(-1)
    _check_domain(alpha, t)
    d = float(1.0 - np.sum((t / (alpha - t)) ** 2) / n)
    if check and d <= 0.0:
        raise NotDistantSpikeError(f"psi'(alpha={alpha}) = {d:.4g} <= 0: spike is not distant")
    return d


@dataclass(frozen=True)
class SpikeTruths:
    """Finite-n theoretical quantities for the simple spikes of a model."""

    spike_index: tuple[int, ...]
    alpha: NDArray[np.float64]
    theta: NDArray[np.float64]
    psi_prime: NDArray[np.float64]
    sigma_sq: NDArray[np.float64]
    sigma_cross: NDArray[np.float64]
    l4_true: NDArray[np.float64]
    n: int
    gamma4: float

    def to_json(self) -> dict[str, Any]:
        return {
            "spike_index": list(self.spike_index),
            "alpha": self.alpha.tolist(),
            "theta": self.theta.tolist(),
            "psi_prime": self.psi_prime.tolist(),
            "sigma_sq": self.sigma_sq.tolist(),
            "sigma_cross": self.sigma_cross.tolist(),
            "l4_true": self.l4_true.tolist(),
            "n": self.n,
            "gamma4": self.gamma4,
        }


def true_l4(model: CovarianceModel, i: int = 0) -> float:
    """``sum_j u_ij^4`` for the eigenvector of simple spike group ``i``."""
    if model.spikes[i][1] != 1:
        raise InputError(f"spike {i} has multiplicity {model.spikes[i][1]}")
    u = model.spike_vectors(i)[:, 0]
    return float(np.sum(u**4))


def spike_truths(model: CovarianceModel, n: int, gamma4: float) -> SpikeTruths:
    """Centering ``theta_i = psi_n(alpha_i)`` and limiting (co)variances of the simple spikes.

    Spikes with multiplicity above one are skipped; see :func:`g_covariance`.
    """
    idx = tuple(i for i, (_, m) in enumerate(model.spikes) if m == 1)
    if not idx:
        raise InputError("model has no simple spikes")
    t = model.nonspiked
    alpha = np.array([model.spikes[i][0] for i in idx])
    theta = np.array([psi_n(a, t, n) for a in alpha])
    dpsi = np.array([psi_prime_n(a, t, n) for a in alpha])
    u = np.column_stack([model.spike_vectors(i)[:, 0] for i in idx])
    u2 = u**2
    overlap = u2.T @ u2
    w = alpha * dpsi / theta
    cross = (gamma4 - 3.0) * np.outer(w, w) * overlap
    var = cross.diagonal() + 2.0 * alpha**2 * dpsi / theta**2
    np.fill_diagonal(cross, var)
    return SpikeTruths(idx, alpha, theta, dpsi, var.copy(), cross, overlap.diagonal().copy(), int(n), float(gamma4))


def g_covariance(
    model: CovarianceModel, i: int, k1: int, l1: int, k2: int, l2: int, n: int, gamma4: float
) -> float:
    """Covariance of entries ``(k1, l1)`` and ``(k2, l2)`` of the limiting Gaussian matrix for spike group ``i``.

    Indices are 0-based within the group's multiplicity.
    """
    alpha, m = model.spikes[i]
    for k in (k1, l1, k2, l2):
        if not 0 <= k < m:
            raise InputError(f"index {k} out of range for spike multiplicity {m}")
    psi = psi_n(alpha, model.nonspiked, n)
    dpsi = psi_prime_n(alpha, model.nonspiked, n)
    u = model.spike_vectors(i)
    a, b, c, d = u[:, k1], u[:, l1], u[:, k2], u[:, l2]
    base = alpha**2 * dpsi / psi**2
    fourth = float(np.sum(a * b * c * d))
    pairs = (a @ c) * (b @ d) + (a @ d) * (c @ b)
    return float((gamma4 - 3.0) * base * dpsi * fourth + base * pairs)
