from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest

from spikecov.errors import InputError
from spikecov.models import build_model, true_l4
from spikecov.montecarlo import (
    CSV_FIELDS,
    ExperimentConfig,
    McCell,
    McTable,
    collect_spike_lss,
    run_clt_check,
    run_estimator_quality,
    run_independence_check,
    run_multiplicity_check,
    run_power,
    run_size,
)


def _cfg(**kw):
    base = dict(model=1, p_grid=(30,), n1=60, reps=12, seed=3, workers=1)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(InputError):
        _cfg(reps=0)
    with pytest.raises(InputError):
        _cfg(level=1.5)
    with pytest.raises(InputError):
        _cfg(dist="cauchy")
    with pytest.raises(InputError):
        _cfg(p_grid=())
    assert _cfg(n2=90).sizes == (60, 90)


def test_size_table_deterministic():
    a = run_size(_cfg())
    b = run_size(_cfg())
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != run_size(_cfg(seed=4)).to_csv()


def test_parallel_matches_serial():
    a = run_size(_cfg(reps=8, workers=1))
    b = run_size(_cfg(reps=8, workers=2))
    assert a.to_csv() == b.to_csv()


def test_replications_are_order_independent():
    # replication r is a pure function of (config, r): a longer run extends a shorter one
    from spikecov.montecarlo import _test_rep

    cfg = _cfg(reps=6)
    forward = [_test_rep((cfg, 30, r)) for r in range(6)]
    backward = [_test_rep((cfg, 30, r)) for r in reversed(range(6))][::-1]
    assert forward == backward


def test_single_replication_rate_is_binary():
    t = run_size(_cfg(reps=1))
    for c in t.cells:
        assert c.value in (0.0, 1.0)
        assert c.reps == 1


def test_rate_cell_carries_mcse():
    t = run_size(_cfg(reps=20))
    c = t.get("T", 30, "1")
    assert c.mcse == pytest.approx(math.sqrt(c.value * (1 - c.value) / 20))
    assert c.failures == 0 and c.valid


def test_power_labels_and_validation():
    t = run_power(_cfg(model=1, model_b=2, reps=4, statistics=("T",)))
    assert [c.statistic for c in t.cells] == ["T"]
    assert t.cells[0].model == "1vs2"
    with pytest.raises(InputError):
        run_power(_cfg(model=1, model_b=1))
    with pytest.raises(InputError):
        run_size(_cfg(model_b=2))
    with pytest.raises(InputError):
        run_size(_cfg(statistics=("Q",)))


def test_power_detects_large_spike_gap():
    t = run_power(_cfg(model=1, model_b=2, p_grid=(40,), n1=100, reps=30, statistics=("T",)))
    assert t.get("T").value > 0.8


def test_estimator_table_cells():
    t = run_estimator_quality(_cfg(model=4, reps=6))
    for s in ("l4_hat", "alpha_hat", "psi_prime_hat", "gamma4_hat"):
        for suffix in ("mean", "var", "true"):
            t.get(f"{s}:{suffix}")
    assert t.get("l4_hat:true").value == pytest.approx(true_l4(build_model(4, 30)))
    assert t.get("alpha_hat:true").value == 15.0
    assert t.get("gamma4_hat:true").value == 3.0


def test_estimator_single_replication_variance_zero():
    t = run_estimator_quality(_cfg(reps=1, statistics=("alpha_hat",)))
    assert t.get("alpha_hat:var").value == 0.0


def test_failure_marking():
    assert McCell("1", 10, 10, "normal", "T", 0.05, 0.01, 500, 4).valid
    assert not McCell("1", 10, 10, "normal", "T", 0.05, 0.01, 500, 5).valid


def test_csv_schema_and_round_trip():
    t = run_size(_cfg(reps=5))
    rows = list(csv.reader(io.StringIO(t.to_csv())))
    assert tuple(rows[0]) == CSV_FIELDS == ("model", "p", "n", "dist", "statistic", "value", "mcse", "R", "failures")
    for row, cell in zip(rows[1:], t.cells):
        assert float(row[5]) == cell.value
        assert float(row[6]) == cell.mcse
    back = McTable.from_json(t.to_json())
    assert back.to_csv() == t.to_csv()


def test_clt_report_structure():
    cfg = _cfg(model=1, p_grid=(40,), n1=80, reps=30)
    rep = run_clt_check(cfg)
    (s,) = rep["spikes"]
    assert s["spike"] == 0 and s["alpha"] == 8.0
    assert s["mean_tolerance"] == pytest.approx(3 * math.sqrt(s["sigma_sq"] / 30))
    assert s["variance_ratio"] == pytest.approx(s["variance"] / s["sigma_sq"])


def test_clt_reports_spike_pairs():
    doc = {"id": "custom", "p": 30, "spikes": [[20.0, 1], [9.0, 1]], "nonspiked": [1.0] * 28}
    rep = run_clt_check(_cfg(model=doc, reps=10))
    assert len(rep["spikes"]) == 2
    (pair,) = rep["pairs"]
    assert pair["spikes"] == [0, 1] and pair["sigma_ij"] == 0.0


def test_independence_degenerate_two_reps():
    rep = run_independence_check(_cfg(reps=2))
    for key in ("excluded", "full"):
        assert -1.0 <= rep[key]["corr"] <= 1.0
        assert rep[key]["low_confidence"]


def test_clt_and_independence_share_draws():
    cfg = _cfg(reps=10)
    d = collect_spike_lss(cfg)
    assert run_clt_check(cfg, d) == run_clt_check(cfg)
    assert run_independence_check(cfg, d) == run_independence_check(cfg)
    np.testing.assert_allclose(d.lss_full - d.lss_excl > 0, True)


@pytest.mark.slow
def test_multiplicity_group_matches_gaussian_matrix_limit():
    cfg = _cfg(model=2, p_grid=(100,), n1=400, reps=300, seed=17)
    rep = run_multiplicity_check(cfg, group=1)
    assert rep["multiplicity"] == 10
    for key in ("largest", "smallest"):
        assert 0.0 <= rep[key]["ks_statistic"] <= 1.0
    # the spike sits close to the bulk edge, so only the group's spread is expected to match at n=400
    med_s, med_l = rep["spread"]["sample_quantiles"][1], rep["spread"]["limit_quantiles"][1]
    assert abs(med_s / med_l - 1.0) < 0.1
