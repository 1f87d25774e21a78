from datetime import datetime

import numpy as np
import pytest

from gridsettle.data import fixture_path
from gridsettle.errors import DataFormatError
from gridsettle.scenario_engine import (
    ScenarioSet,
    empirical_moments,
    load_scenarios,
    max_trace,
    median_trace,
    percentile_trace,
    truth_trace,
    weighted_percentile,
)


def test_weighted_percentile_uniform_midpoints():
    v = np.array([10.0, 20.0, 30.0, 40.0])
    w = np.full(4, 0.25)
    # mass midpoints sit at 12.5/37.5/62.5/87.5% -> q50 interpolates 20..30
    assert weighted_percentile(v, w, 50.0) == pytest.approx(25.0)
    assert weighted_percentile(v, w, 25.0) == pytest.approx(15.0)
    assert weighted_percentile(v, w, 0.0) == 10.0
    assert weighted_percentile(v, w, 100.0) == 40.0
    assert weighted_percentile(v, w, 37.5) == 20.0


def test_weighted_percentile_unsorted_and_weighted():
    v = np.array([3.0, 1.0, 2.0])
    w = np.array([0.25, 0.5, 0.25])
    # sorted (1,2,3) with centers 25/62.5/87.5%
    assert weighted_percentile(v, w, 50.0) == pytest.approx(1.0 + (0.25 / 0.375))
    assert weighted_percentile(v, w, 62.5) == 2.0


def test_weighted_percentile_range_check():
    with pytest.raises(ValueError):
        weighted_percentile(np.array([1.0]), np.array([1.0]), 101.0)


def test_percentile_trace_hits_scenario_rows(case5_scenarios):
    sset = case5_scenarios["g_wind"]
    # 10 uniform scenarios: q25 mass midpoint lands exactly on the 3rd row,
    # q75 on the 8th; the fan is comonotone so rows are sorted everywhere
    ordered = np.sort(sset.traces, axis=0)
    assert np.allclose(percentile_trace(sset, 25.0), ordered[2])
    assert np.allclose(percentile_trace(sset, 75.0), ordered[7])
    assert np.allclose(median_trace(sset), 0.5 * (ordered[4] + ordered[5]))
    assert np.allclose(max_trace(sset), ordered[-1])


def test_truth_trace_copies(case5_scenarios):
    sset = case5_scenarios["g_wind"]
    tt = truth_trace(sset, "s03")
    assert tt.generator == "g_wind"
    assert np.array_equal(tt.trace, sset.trace("s03"))
    tt.trace[0] = -1.0
    assert sset.trace("s03")[0] != -1.0


def test_unknown_truth_id(case5_scenarios):
    with pytest.raises(KeyError):
        case5_scenarios["g_wind"].trace("s99")


def test_hour_values(case5, case5_scenarios):
    sset = case5_scenarios["g_wind"]
    h = case5.hour_index[43]
    vals = sset.hour_values(h)
    assert vals.shape == (10,)
    assert vals.max() == pytest.approx(148.5)


def test_empirical_moments_two_points():
    mean, cov = empirical_moments(np.array([[10.0, 10.0], [30.0, 50.0]]))
    assert np.allclose(mean, [20.0, 30.0])
    assert np.allclose(cov, [[100.0, 200.0], [200.0, 400.0]])


def test_empirical_moments_weighted_oracle():
    x = np.array([[0.0], [10.0]])
    w = np.array([0.75, 0.25])
    mean, cov = empirical_moments(x, w)
    assert mean[0] == pytest.approx(2.5)
    # E[x^2] - mean^2 = 25 - 6.25
    assert cov[0, 0] == pytest.approx(18.75)


def test_empirical_moments_single_sample():
    mean, cov = empirical_moments(np.array([[3.0, 4.0]]))
    assert np.allclose(mean, [3.0, 4.0])
    assert np.allclose(cov, 0.0)


def test_scenario_set_validation():
    idx = (datetime(2020, 7, 17),)
    with pytest.raises(ValueError, match="sum to 1"):
        ScenarioSet(
            generator="w",
            scenario_ids=("a", "b"),
            probabilities=np.array([0.5, 0.2]),
            traces=np.zeros((2, 1)),
            hour_index=idx,
        )
    with pytest.raises(ValueError, match="one trace per"):
        ScenarioSet(
            generator="w",
            scenario_ids=("a",),
            probabilities=np.array([1.0]),
            traces=np.zeros((2, 1)),
            hour_index=idx,
        )


def test_load_scenarios_inconsistent_probability(tmp_path, case5):
    rows = ["gen_id,scenario_id,timestamp,available_mw,probability"]
    for i, ts in enumerate(case5.hour_index):
        p = "0.9" if i == 5 else "1.0"
        rows.append(f"g_wind,s01,{ts.isoformat()},1.0,{p}")
    f = tmp_path / "s.csv"
    f.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataFormatError, match="inconsistent probability"):
        load_scenarios(f, case5)


def test_load_scenarios_missing_hour(tmp_path, case5):
    rows = ["gen_id,scenario_id,timestamp,available_mw"]
    for ts in case5.hour_index[:-1]:
        rows.append(f"g_wind,s01,{ts.isoformat()},1.0")
    f = tmp_path / "s.csv"
    f.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataFormatError):
        load_scenarios(f, case5)


def test_load_scenarios_case5_probabilities(case5_scenarios):
    sset = case5_scenarios["g_wind"]
    assert np.allclose(sset.probabilities, 0.1)
    assert sset.scenario_ids == tuple(f"s{i:02d}" for i in range(1, 11))
