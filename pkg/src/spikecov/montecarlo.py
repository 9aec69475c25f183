"""Monte Carlo replication engine: test size and power, estimator quality, CLT and independence checks.

Every replication is a pure function of ``(config, cell, r)``: its random
streams are keyed by ``(seed, model key, p, r, sample)``, so results do not
depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import InputError, NumericError
from .estimators import alpha1_hat, effective_eigenvalues, gamma4_hat, l4_estimate, psi_prime_hat
from .linalg import eigh_descending, sample_covariance
from .models import (
    CovarianceModel,
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
from .twosample import lss, sample_plugins, combine

__all__ = [
    "ExperimentConfig",
    "McCell",
    "McTable",
    "default_workers",
    "resolve_model",
    "run_size",
    "run_power",
    "run_estimator_quality",
    "collect_spike_lss",
    "run_clt_check",
    "run_independence_check",
    "run_multiplicity_check",
]

TEST_STATISTICS = ("T", "M", "L", "L1")
ESTIMATOR_STATISTICS = ("l4_hat", "alpha_hat", "psi_prime_hat", "gamma4_hat")
MAX_FAILURE_RATE = 0.01

ModelSpec = int | dict


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SPIKECOV_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec = 1
    model_b: ModelSpec | None = None
    p_grid: tuple[int, ...] = (100,)
    n1: int = 100
    n2: int | None = None
    dist: str = "normal"
    reps: int = 500
    level: float = 0.05
    seed: int = 0
    statistics: tuple[str, ...] = ()
    o1: tuple[float, ...] | None = None
    workers: int = field(default_factory=default_workers)

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise InputError("reps must be at least 1")
        if not 0.0 < self.level < 1.0:
            raise InputError("level must lie in (0, 1)")
        if not self.p_grid:
            raise InputError("p grid must be nonempty")
        if self.n1 < 1 or (self.n2 is not None and self.n2 < 1):
            raise InputError("sample sizes must be positive")
        object.__setattr__(self, "p_grid", tuple(int(p) for p in self.p_grid))
        object.__setattr__(self, "statistics", tuple(self.statistics))
        get_distribution(self.dist)

    @property
    def sizes(self) -> tuple[int, int]:
        return self.n1, self.n1 if self.n2 is None else self.n2

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["p_grid"] = list(self.p_grid)
        d["statistics"] = list(self.statistics)
        d["o1"] = None if self.o1 is None else list(self.o1)
        return d


def resolve_model(spec: ModelSpec, p: int, o1: Sequence[float] | None = None) -> CovarianceModel:
    if isinstance(spec, CovarianceModel):
        return spec
    if isinstance(spec, dict):
        doc = dict(spec)
        doc.setdefault("p", p)
        if o1 is not None and doc.get("o1") is None and doc.get("id", "custom") != "custom":
            doc["o1"] = list(o1)
        return model_from_json(doc)
    return build_model(int(spec), p, o1)


def _model_key(spec: ModelSpec) -> int:
    return int(spec) if isinstance(spec, int) else 0


def _label(spec: ModelSpec) -> str:
    return str(spec) if isinstance(spec, int) else str(spec.get("id", "custom"))


@dataclass(frozen=True)
class McCell:
    model: str
    p: int
    n: int
    dist: str
    statistic: str
    value: float
    mcse: float
    reps: int
    failures: int = 0

    @property
    def valid(self) -> bool:
        return self.failures < MAX_FAILURE_RATE * self.reps or self.failures == 0


CSV_FIELDS = ("model", "p", "n", "dist", "statistic", "value", "mcse", "R", "failures")


def _fmt(x: Any) -> str:
    return format(x, ".17g") if isinstance(x, float) else str(x)


@dataclass
class McTable:
    cells: list[McCell] = field(default_factory=list)

    def get(self, statistic: str, p: int | None = None, model: str | None = None) -> McCell:
        for c in self.cells:
            if c.statistic == statistic and (p is None or c.p == p) and (model is None or c.model == model):
                return c
        raise KeyError((statistic, p, model))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for c in self.cells:
            w.writerow([_fmt(v) for v in (c.model, c.p, c.n, c.dist, c.statistic, c.value, c.mcse, c.reps, c.failures)])
        return buf.getvalue()

    def to_json(self) -> dict[str, Any]:
        return {"cells": [{**asdict(c), "valid": c.valid} for c in self.cells]}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "McTable":
        return cls([McCell(**{k: v for k, v in c.items() if k != "valid"}) for c in doc["cells"]])


def _map(fn: Callable[[Any], Any], items: Iterable[Any], workers: int) -> list[Any]:
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _rate_cell(label: str, p: int, n: int, dist: str, stat: str, hits: int, ok: int, reps: int) -> McCell:
    rate = hits / ok if ok else float("nan")
    mcse = math.sqrt(rate * (1.0 - rate) / ok) if ok else float("nan")
    return McCell(label, p, n, dist, stat, rate, mcse, reps, reps - ok)


# ---------------------------------------------------------------- size / power


def _test_rep(args: tuple[ExperimentConfig, int, int]) -> dict[str, bool] | None:
    cfg, p, r = args
    n1, n2 = cfg.sizes
    spec_b = cfg.model if cfg.model_b is None else cfg.model_b
    ma = resolve_model(cfg.model, p, cfg.o1)
    mb = resolve_model(spec_b, p, cfg.o1)
    key = _model_key(cfg.model) * 16 + _model_key(spec_b)
    y1 = draw_sample(ma, n1, cfg.dist, (cfg.seed, key, p, r, 0))
    y2 = draw_sample(mb, n2, cfg.dist, (cfg.seed, key, p, r, 1))
    try:
        res = combine(sample_plugins(y1), sample_plugins(y2))
    except NumericError:
        return None
    return {
        "T": res.p_t < cfg.level,
        "M": res.p_m < cfg.level,
        "L": res.p_l < cfg.level,
        "L1": res.p_l1 < cfg.level,
    }


def _run_tests(cfg: ExperimentConfig, label: str) -> McTable:
    stats = cfg.statistics or TEST_STATISTICS
    unknown = set(stats) - set(TEST_STATISTICS)
    if unknown:
        raise InputError(f"unknown test statistics {sorted(unknown)}")
    table = McTable()
    for p in cfg.p_grid:
        outcomes = _map(_test_rep, [(cfg, p, r) for r in range(cfg.reps)], cfg.workers)
        good = [o for o in outcomes if o is not None]
        for s in stats:
            hits = sum(o[s] for o in good)
            table.cells.append(_rate_cell(label, p, cfg.n1, cfg.dist, s, hits, len(good), cfg.reps))
    return table


def run_size(cfg: ExperimentConfig) -> McTable:
    """Empirical rejection rates with both samples drawn from ``cfg.model``."""
    if cfg.model_b is not None and cfg.model_b != cfg.model:
        raise InputError("size runs use a single null model")
    return _run_tests(replace(cfg, model_b=None), _label(cfg.model))


def run_power(cfg: ExperimentConfig) -> McTable:
    """Empirical rejection rates with sample 1 from ``cfg.model`` and sample 2 from ``cfg.model_b``."""
    if cfg.model_b is None or cfg.model_b == cfg.model:
        raise InputError("power runs need two distinct models")
    return _run_tests(cfg, f"{_label(cfg.model)}vs{_label(cfg.model_b)}")


# ---------------------------------------------------------------- estimator quality


def _estimator_rep(args: tuple[ExperimentConfig, int, int]) -> dict[str, float] | None:
    cfg, p, r = args
    stats = cfg.statistics or ESTIMATOR_STATISTICS
    model = resolve_model(cfg.model, p, cfg.o1)
    n = cfg.n1
    y = draw_sample(model, n, cfg.dist, (cfg.seed, _model_key(cfg.model), p, r, 0))
    s = sample_covariance(y)
    out: dict[str, float] = {}
    try:
        if "l4_hat" in stats or "gamma4_hat" in stats:
            spec = eigh_descending(s, n)
            lam = spec.eigenvalues
        else:
            lam = np.linalg.eigvalsh(s)[::-1]
        lam = effective_eigenvalues(lam, n)
        if "l4_hat" in stats:
            out["l4_hat"] = l4_estimate(0, spec)[0]
        if "alpha_hat" in stats:
            out["alpha_hat"] = alpha1_hat(lam, p / n)
        if "psi_prime_hat" in stats:
            out["psi_prime_hat"] = psi_prime_hat(lam, p / n)
        if "gamma4_hat" in stats:
            out["gamma4_hat"] = gamma4_hat(y, s, spec).gamma4_hat
    except NumericError:
        return None
    return out


def _truth_for(stat: str, model: CovarianceModel, n: int, gamma4: float) -> float:
    alpha = model.spikes[0][0]
    if stat == "l4_hat":
        return true_l4(model, 0)
    if stat == "alpha_hat":
        return alpha
    if stat == "psi_prime_hat":
        return psi_prime_n(alpha, model.nonspiked, n, check=False)
    return gamma4


def run_estimator_quality(cfg: ExperimentConfig) -> McTable:
    """Mean and variance of the selected estimators next to their population targets.

    Cells per statistic ``s``: ``s:mean`` (mcse = sd/sqrt(R)), ``s:var``
    (sample variance, 0 when R = 1) and ``s:true``.
    """
    stats = cfg.statistics or ESTIMATOR_STATISTICS
    unknown = set(stats) - set(ESTIMATOR_STATISTICS)
    if unknown:
        raise InputError(f"unknown estimator statistics {sorted(unknown)}")
    cfg = replace(cfg, statistics=tuple(stats))
    gamma4 = get_distribution(cfg.dist).gamma4
    label = _label(cfg.model)
    table = McTable()
    for p in cfg.p_grid:
        model = resolve_model(cfg.model, p, cfg.o1)
        outcomes = _map(_estimator_rep, [(cfg, p, r) for r in range(cfg.reps)], cfg.workers)
        good = [o for o in outcomes if o is not None]
        fails = cfg.reps - len(good)
        for s in stats:
            x = np.array([o[s] for o in good])
            k = x.size
            mean = float(x.mean()) if k else float("nan")
            var = float(x.var(ddof=1)) if k > 1 else 0.0
            sd = math.sqrt(var)
            table.cells.append(McCell(label, p, cfg.n1, cfg.dist, f"{s}:mean", mean, sd / math.sqrt(max(k, 1)), cfg.reps, fails))
            # mcse of a sample variance, normal-theory approximation
            table.cells.append(McCell(label, p, cfg.n1, cfg.dist, f"{s}:var", var, var * math.sqrt(2.0 / max(k - 1, 1)), cfg.reps, fails))
            table.cells.append(McCell(label, p, cfg.n1, cfg.dist, f"{s}:true", _truth_for(s, model, cfg.n1, gamma4), 0.0, cfg.reps, 0))
    return table


# ---------------------------------------------------------------- CLT and independence


@dataclass(frozen=True)
class SpikeLssDraws:
    """Per-replication normalized spikes and linear spectral statistics."""

    spikes: NDArray[np.float64]  # R x K, sqrt(n)(lam_i - theta_i)/theta_i
    lss_excl: NDArray[np.float64]  # sum_{i>=2} f(lam_i)
    lss_full: NDArray[np.float64]
    theta: NDArray[np.float64]
    positions: tuple[int, ...]


def _spike_rep(args: tuple[ExperimentConfig, int, int, tuple[int, ...], NDArray[np.float64]]) -> tuple[NDArray[np.float64], float, float]:
    cfg, p, r, pos, theta = args
    model = resolve_model(cfg.model, p, cfg.o1)
    n = cfg.n1
    y = draw_sample(model, n, cfg.dist, (cfg.seed, _model_key(cfg.model), p, r, 0))
    lam = np.linalg.eigvalsh(sample_covariance(y))[::-1]
    x = math.sqrt(n) * (lam[list(pos)] - theta) / theta
    f = lss(lam)
    return x, float(np.sum(f[1:])), float(np.sum(f))


def collect_spike_lss(cfg: ExperimentConfig) -> SpikeLssDraws:
    """Draw ``cfg.reps`` samples at ``p = cfg.p_grid[0]`` and record spike and LSS statistics."""
    p = cfg.p_grid[0]
    model = resolve_model(cfg.model, p, cfg.o1)
    truths = spike_truths(model, cfg.n1, get_distribution(cfg.dist).gamma4)
    offs = model.offsets
    pos = tuple(offs[i] for i in truths.spike_index)
    rows = _map(_spike_rep, [(cfg, p, r, pos, truths.theta) for r in range(cfg.reps)], cfg.workers)
    return SpikeLssDraws(
        spikes=np.array([r[0] for r in rows]).reshape(cfg.reps, len(pos)),
        lss_excl=np.array([r[1] for r in rows]),
        lss_full=np.array([r[2] for r in rows]),
        theta=truths.theta,
        positions=pos,
    )


def run_clt_check(cfg: ExperimentConfig, draws: SpikeLssDraws | None = None) -> dict[str, Any]:
    """Compare the empirical law of ``sqrt(n)(lam_i - theta_i)/theta_i`` with its limiting N(0, sigma_i^2)."""
    p = cfg.p_grid[0]
    model = resolve_model(cfg.model, p, cfg.o1)
    truths = spike_truths(model, cfg.n1, get_distribution(cfg.dist).gamma4)
    d = draws if draws is not None else collect_spike_lss(cfg)
    R = d.spikes.shape[0]
    spikes = []
    for k, idx in enumerate(truths.spike_index):
        x = d.spikes[:, k]
        var = float(x.var(ddof=1)) if R > 1 else 0.0
        s2 = float(truths.sigma_sq[k])
        spikes.append(
            {
                "spike": idx,
                "alpha": float(truths.alpha[k]),
                "theta": float(truths.theta[k]),
                "mean": float(x.mean()),
                "mean_tolerance": 3.0 * math.sqrt(s2 / R),
                "variance": var,
                "sigma_sq": s2,
                "variance_ratio": var / s2,
            }
        )
    pairs = []
    K = len(truths.spike_index)
    for a in range(K):
        for b in range(a + 1, K):
            cov = float(np.cov(d.spikes[:, a], d.spikes[:, b])[0, 1]) if R > 1 else 0.0
            pairs.append({"spikes": [truths.spike_index[a], truths.spike_index[b]], "covariance": cov, "sigma_ij": float(truths.sigma_cross[a, b])})
    return {"model": _label(cfg.model), "p": p, "n": cfg.n1, "dist": cfg.dist, "reps": R, "spikes": spikes, "pairs": pairs}


def _corr_band(x: NDArray[np.float64], z: NDArray[np.float64]) -> dict[str, Any]:
    R = x.size
    if R < 2 or x.std() == 0 or z.std() == 0:
        return {"corr": 0.0, "lower": -1.0, "upper": 1.0, "low_confidence": True}
    r = float(np.clip(np.corrcoef(x, z)[0, 1], -1.0, 1.0))
    if R <= 3 or abs(r) == 1.0:
        return {"corr": r, "lower": -1.0, "upper": 1.0, "low_confidence": True}
    h = 1.959963984540054 / math.sqrt(R - 3)
    zr = math.atanh(r)
    return {"corr": r, "lower": math.tanh(zr - h), "upper": math.tanh(zr + h), "low_confidence": R < 30}


def run_independence_check(cfg: ExperimentConfig, draws: SpikeLssDraws | None = None) -> dict[str, Any]:
    """Correlation of the normalized top spike with the LSS with and without ``lam_1``."""
    d = draws if draws is not None else collect_spike_lss(cfg)
    x = d.spikes[:, 0]
    return {
        "model": _label(cfg.model),
        "p": cfg.p_grid[0],
        "n": cfg.n1,
        "dist": cfg.dist,
        "reps": x.size,
        "excluded": _corr_band(x, d.lss_excl),
        "full": _corr_band(x, d.lss_full),
    }


def _gaussian_matrix_eigs(cov: NDArray[np.float64], m: int, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
    w, v = np.linalg.eigh(cov)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((size, cov.shape[0])) @ root.T
    iu = np.triu_indices(m)
    g = np.zeros((size, m, m))
    g[:, iu[0], iu[1]] = z
    g = g + np.triu(g, 1).transpose(0, 2, 1)
    return np.linalg.eigvalsh(g)[:, ::-1]


def _group_rep(args: tuple[ExperimentConfig, int, int, int, int, float]) -> NDArray[np.float64]:
    cfg, p, r, off, m, theta = args
    model = resolve_model(cfg.model, p, cfg.o1)
    n = cfg.n1
    y = draw_sample(model, n, cfg.dist, (cfg.seed, _model_key(cfg.model), p, r, 0))
    lam = np.linalg.eigvalsh(sample_covariance(y))[::-1]
    return math.sqrt(n) * (lam[off : off + m] - theta) / theta


def run_multiplicity_check(cfg: ExperimentConfig, group: int = 1) -> dict[str, Any]:
    """Slow, optional: compare a multiple spike's normalized sample eigenvalues with eigenvalues of
    the limiting Gaussian matrix whose entry covariances come from :func:`g_covariance`.
    """
    from scipy.stats import ks_2samp

    p = cfg.p_grid[0]
    model = resolve_model(cfg.model, p, cfg.o1)
    alpha, m = model.spikes[group]
    g4 = get_distribution(cfg.dist).gamma4
    theta = psi_n(alpha, model.nonspiked, cfg.n1)
    psi_prime_n(alpha, model.nonspiked, cfg.n1)
    iu = list(zip(*np.triu_indices(m)))
    cov = np.array([[g_covariance(model, group, k1, l1, k2, l2, cfg.n1, g4) for k2, l2 in iu] for k1, l1 in iu])
    sample = np.array(_map(_group_rep, [(cfg, p, r, model.offsets[group], m, theta) for r in range(cfg.reps)], cfg.workers))
    limit = _gaussian_matrix_eigs(cov, m, cfg.reps, np.random.default_rng([cfg.seed, 7]))
    out: dict[str, Any] = {"model": _label(cfg.model), "p": p, "n": cfg.n1, "group": group, "multiplicity": m}
    qs = [0.1, 0.5, 0.9]
    for name, col in (("largest", 0), ("smallest", m - 1)):
        ks = ks_2samp(sample[:, col], limit[:, col])
        out[name] = {
            "sample_quantiles": np.quantile(sample[:, col], qs).tolist(),
            "limit_quantiles": np.quantile(limit[:, col], qs).tolist(),
            "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
        }
    gaps_s = sample[:, 0] - sample[:, m - 1]
    gaps_l = limit[:, 0] - limit[:, m - 1]
    out["spread"] = {"sample_quantiles": np.quantile(gaps_s, qs).tolist(), "limit_quantiles": np.quantile(gaps_l, qs).tolist()}
    return out
