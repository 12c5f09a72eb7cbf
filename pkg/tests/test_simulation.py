import json
import math

import numpy as np
import pytest

from gpe.distributions import chi2_1_ppf
from gpe.simulation import (DGP_NAMES, DgpSpec, EstimatorResult, make_beta, power_curve,
                            run_mc, sample_replication, splitmix64, summarize)


def test_cns_range_and_literal():
    b = make_beta(DgpSpec("CnS", 100, 75))
    assert b[0] == 2.0 and b[-1] == pytest.approx(4.0)
    lit = make_beta(DgpSpec("CnS", 100, 75, cns_literal=True))
    assert lit[-1] == pytest.approx(6.0)


def test_ds1_beta():
    b = make_beta(DgpSpec("DS1", 100, 75))
    np.testing.assert_array_equal(b, np.r_[np.ones(5), np.zeros(70)])
    assert float(b.sum() / math.sqrt(75)) == pytest.approx(0.57735, abs=1e-5)


def test_das2_perturbation_max():
    b = make_beta(DgpSpec("DaS2", 400, 75))
    assert chi2_1_ppf(0.95) == pytest.approx(3.8415, abs=1e-4)
    assert (b - (np.arange(75) < 5)).max() == pytest.approx(3.8415 / 28.284, abs=1e-4)


@pytest.mark.parametrize("name", DGP_NAMES)
def test_every_design_builds(name):
    b = make_beta(DgpSpec(name, 100, 75))
    assert b.shape == (75,) and np.all(np.isfinite(b))


def test_name_normalization_and_errors():
    assert DgpSpec("d-s1", 10, 5).name == "DS1"
    assert DgpSpec("cas2", 10, 5).name == "CaS2"
    with pytest.raises(ValueError, match="valid names"):
        DgpSpec("unknown", 10, 5)


def test_error_families():
    assert DgpSpec("CnS", 10, 5).error_family == "chisq"
    assert DgpSpec("CaS1", 10, 5).error_family == "chisq"
    assert DgpSpec("CaS2", 10, 5).error_family == "normal"
    assert DgpSpec("DS1", 10, 5).error_family == "normal"


def test_replication_deterministic():
    spec = DgpSpec("CnS", 50, 10)
    a, b = sample_replication(spec, 99), sample_replication(spec, 99)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.theta_true == pytest.approx(a.beta_true.sum() / math.sqrt(10), abs=1e-12)


def test_ar1_correlation():
    rep = sample_replication(DgpSpec("DS1", 100_000, 3), 1)
    assert np.corrcoef(rep.X[:, 0], rep.X[:, 1])[0, 1] == pytest.approx(0.5, abs=0.01)
    assert np.corrcoef(rep.X[:, 0], rep.X[:, 2])[0, 1] == pytest.approx(0.25, abs=0.01)


def test_conditional_error_scale():
    rep = sample_replication(DgpSpec("DS1", 400_000, 2), 2)
    eps = rep.y - rep.X @ rep.beta_true
    near = np.abs(rep.X[:, 0]) < 0.05
    assert eps[near].std() == pytest.approx(math.sqrt(0.5), abs=0.05)


def test_splitmix_distinct():
    keys = {splitmix64(0, r) for r in range(1000)}
    assert len(keys) == 1000
    assert splitmix64(1, 0) != splitmix64(0, 0)


def _res(theta, se, mnb, size, status="ok"):
    return EstimatorResult("gpe", theta_hat=theta, se=se, mnb=mnb, model_size=size, status=status)


def test_summary_metrics_by_hand():
    rs = [_res(1.1, 0.05, 0.2, 2), _res(0.8, 0.1, 0.4, 3), _res(1.0, 0.1, 0.3, 4),
          _res(math.nan, math.nan, math.nan, 0, status="failed: x")]
    s = summarize(rs, 1.0, "gpe")
    assert s.MnB == pytest.approx(0.3)
    assert s.MAD == pytest.approx(0.1)
    assert s.RMSE == pytest.approx(math.sqrt((0.01 + 0.04 + 0.0) / 3))
    # |1.1-1|/0.05 = 2 rejects, |0.8-1|/0.1 = 2 rejects, 0 does not
    assert s.Rej == pytest.approx(2 / 3)
    assert s.med_model_size == 3
    assert (s.n_ok, s.n_failed) == (3, 1)


def test_single_rep_report_equals_replication():
    rep = run_mc(DgpSpec("DS1", 60, 8), ("gpe",), reps=1, base_seed=3, keep_records=True)
    row, rec = rep.row("gpe"), rep.replication_records[0]
    assert row.MAD == pytest.approx(abs(rec["theta_hat"] - float(np.sum(make_beta(rep.dgp)) / math.sqrt(8))))
    assert row.med_model_size == rec["model_size"]


def test_run_mc_all_estimators_and_outputs():
    rep = run_mc(DgpSpec("DS1", 60, 8), ("gpe", "plasso", "ols", "oracle_ols", "oracle_gpe"),
                 reps=3, base_seed=4)
    assert rep.n_failed == 0
    d = json.loads(rep.to_json())
    assert d["generator"] and d["dgp"]["error_family"] == "normal"
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("estimator,MnB") and len(lines) == 6
    assert "Rej." in rep.format_table()


def test_run_mc_invalid():
    with pytest.raises(ValueError):
        run_mc(DgpSpec("DS1", 60, 8), ("nope",), reps=1)
    with pytest.raises(ValueError):
        run_mc(DgpSpec("DS1", 60, 8), ("gpe",), reps=0)


def test_ols_infeasible_rows_are_counted():
    rep = run_mc(DgpSpec("DS1", 40, 50), ("ols",), reps=2)
    assert rep.row("ols").n_infeasible == 2 and rep.n_failed == 0


def test_jobs_do_not_change_results():
    spec = DgpSpec("CaS2", 50, 10)
    a = run_mc(spec, ("gpe", "plasso"), reps=4, base_seed=5, jobs=1)
    b = run_mc(spec, ("gpe", "plasso"), reps=4, base_seed=5, jobs=2)
    assert a.to_json() == b.to_json()


def test_power_curve_h0_matches_size_and_grid_checks():
    spec = DgpSpec("DS1", 60, 8)
    rows = power_curve(spec, [0.0, 0.2, 0.4], reps=4, base_seed=6)
    assert [r[1] for r in rows] == [0.0, 0.2, 0.4]
    size = run_mc(spec, ("gpe",), reps=4, base_seed=6).row("gpe").Rej
    assert rows[0][2] == pytest.approx(size)
    with pytest.raises(ValueError):
        power_curve(spec, [0.5], reps=1)
