from datetime import datetime, timedelta

import numpy as np
import pytest

from conftest import T0, hours, make_gen, single_bus
from gridsettle.data import fixture_path
from gridsettle.errors import DataFormatError
from gridsettle.grid_model import (
    Branch,
    Bus,
    Category,
    LoadProfile,
    PowerSystem,
    category_capacity,
    load_system,
    save_system,
    validate_system,
)
from gridsettle.scenario_engine import load_scenarios


def test_case5_shape(case5):
    assert case5.bus_ids == ("b1", "b2", "b3", "b4", "b5")
    assert len(case5.branches) == 6
    assert case5.gen_ids == ("g_coal", "g_cc", "g_ct", "g_wind")
    assert len(case5.hour_index) == 50
    assert case5.reference_bus == "b1"
    assert case5.generator("g_wind").variable
    assert [g.id for g in case5.wind_generators()] == ["g_wind"]


def test_case5_load_matrix(case5):
    lm = case5.load_matrix
    assert lm.shape == (5, 50)
    # b1 and b5 carry no load
    assert np.all(lm[0] == 0.0) and np.all(lm[4] == 0.0)
    assert lm[:, 19].sum() == pytest.approx(204.0)
    sl = case5.load_slice(T0 + timedelta(hours=24), 26)
    assert sl.shape == (5, 26)
    assert np.array_equal(sl, lm[:, 24:])


def test_rts_like_fleet_totals(rts_like):
    caps = category_capacity(rts_like)
    expected = {
        Category.COAL: (2317.0, 16),
        Category.GAS_CC: (3550.0, 10),
        Category.WIND: (2508.0, 4),
        Category.GAS_CT: (1485.0, 27),
        Category.HYDRO: (950.0, 19),
        Category.NUCLEAR: (400.0, 1),
        Category.OIL_CT: (240.0, 12),
        Category.OIL_STEAM: (84.0, 7),
    }
    assert caps == expected
    assert len(rts_like.generators) == 96
    assert sum(mw for mw, _ in caps.values()) == pytest.approx(11534.0)


def test_rts_like_scenarios_load(rts_like):
    sets = load_scenarios(fixture_path("rts_like") / "scenarios.csv", rts_like)
    assert sorted(sets) == ["wd01", "wd02", "wd03", "wd04"]
    for s in sets.values():
        assert s.n_scenarios == 10
        # no probability column -> uniform weights
        assert np.allclose(s.probabilities, 0.1)


def test_roundtrip(tmp_path, case5):
    save_system(case5, tmp_path / "copy")
    back = load_system(tmp_path / "copy")
    assert back.bus_ids == case5.bus_ids
    assert back.generators == case5.generators
    assert back.branches == case5.branches
    assert back.hour_index == case5.hour_index
    assert np.array_equal(back.load_matrix, case5.load_matrix)


def test_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="not found"):
        load_system(tmp_path / "nope")


def test_missing_column(tmp_path, case5):
    save_system(case5, tmp_path)
    (tmp_path / "buses.csv").write_text("bus_id\nb1\n")
    with pytest.raises(DataFormatError, match="missing columns"):
        load_system(tmp_path)


def test_bad_number(tmp_path, case5):
    save_system(case5, tmp_path)
    text = (tmp_path / "branches.csv").read_text().replace("0.1,400", "abc,400")
    (tmp_path / "branches.csv").write_text(text)
    with pytest.raises(DataFormatError, match="expected a number"):
        load_system(tmp_path)


def test_bad_bool(tmp_path, case5):
    save_system(case5, tmp_path)
    text = (tmp_path / "generators.csv").read_text().replace("true,false,false", "yep,false,false")
    (tmp_path / "generators.csv").write_text(text)
    with pytest.raises(DataFormatError, match="true/false"):
        load_system(tmp_path)


def test_bad_timestamp(tmp_path, case5):
    save_system(case5, tmp_path)
    text = (tmp_path / "loads.csv").read_text().replace("2020-07-17T00:00:00", "yesterday", 1)
    (tmp_path / "loads.csv").write_text(text)
    with pytest.raises(DataFormatError, match="ISO-8601"):
        load_system(tmp_path)


def test_unknown_category(tmp_path, case5):
    save_system(case5, tmp_path)
    text = (tmp_path / "generators.csv").read_text().replace("gas_cc", "fusion")
    (tmp_path / "generators.csv").write_text(text)
    with pytest.raises(DataFormatError, match="unknown category"):
        load_system(tmp_path)


def test_validate_duplicate_bus():
    sysm = PowerSystem(
        buses=(Bus("n1", "a"), Bus("n1", "b")),
        branches=(),
        generators=(make_gen("g", "n1", 10.0, 50.0),),
        loads=(LoadProfile("n1", (10.0,)),),
        hour_index=hours(1),
    )
    report = validate_system(sysm)
    assert any("duplicate id" in v for v in report.violations)


def test_validate_branch_endpoints():
    sysm = PowerSystem(
        buses=(Bus("n1", "a"), Bus("n2", "b")),
        branches=(
            Branch("l1", "n1", "n1", 0.1, 100.0),
            Branch("l2", "n1", "nX", -0.1, 100.0),
        ),
        generators=(make_gen("g", "n1", 10.0, 50.0),),
        loads=(LoadProfile("n1", (10.0,)),),
        hour_index=hours(1),
    )
    v = validate_system(sysm).violations
    assert any("endpoints must differ" in s for s in v)
    assert any("unknown bus" in s for s in v)
    assert any("reactance" in s for s in v)


def test_validate_generator_rules():
    bad = make_gen("g", "n1", 10.0, 50.0, pmin=60.0)
    sysm = PowerSystem(
        buses=(Bus("n1", "a"),),
        branches=(),
        generators=(bad,),
        loads=(LoadProfile("n1", (10.0,)),),
        hour_index=hours(1),
    )
    assert any("p_min <= p_max" in s for s in validate_system(sysm).violations)


def test_validate_non_committable_needs_zero_commitment_data():
    bad = make_gen("g", "n1", 10.0, 50.0, startup=100.0)
    sysm = PowerSystem(
        buses=(Bus("n1", "a"),),
        branches=(),
        generators=(bad,),
        loads=(LoadProfile("n1", (10.0,)),),
        hour_index=hours(1),
    )
    assert any("non-committable" in s for s in validate_system(sysm).violations)


def test_validate_variable_needs_zero_pmin():
    bad = make_gen("g", "n1", 0.0, 50.0, pmin=5.0, variable=True)
    sysm = PowerSystem(
        buses=(Bus("n1", "a"),),
        branches=(),
        generators=(bad,),
        loads=(LoadProfile("n1", (10.0,)),),
        hour_index=hours(1),
    )
    assert any("variable unit" in s for s in validate_system(sysm).violations)


def test_validate_hour_gap():
    idx = (T0, T0 + timedelta(hours=2))
    sysm = PowerSystem(
        buses=(Bus("n1", "a"),),
        branches=(),
        generators=(make_gen("g", "n1", 10.0, 50.0),),
        loads=(LoadProfile("n1", (10.0, 10.0)),),
        hour_index=idx,
    )
    assert any("1h progression" in s for s in validate_system(sysm).violations)


def test_validate_load_length():
    sysm = PowerSystem(
        buses=(Bus("n1", "a"),),
        branches=(),
        generators=(make_gen("g", "n1", 10.0, 50.0),),
        loads=(LoadProfile("n1", (10.0,)),),
        hour_index=hours(2),
    )
    assert any("values for 2 hours" in s for s in validate_system(sysm).violations)


def test_scenarios_reject_above_nameplate(tmp_path, case5):
    src = (fixture_path("case5") / "scenarios.csv").read_text()
    src = src.replace("g_wind,s10,2020-07-18T19:00:00,148.5", "g_wind,s10,2020-07-18T19:00:00,250")
    p = tmp_path / "scenarios.csv"
    p.write_text(src)
    with pytest.raises(DataFormatError, match="nameplate"):
        load_scenarios(p, case5)


def test_scenarios_reject_unknown_generator(tmp_path, case5):
    p = tmp_path / "scenarios.csv"
    p.write_text("gen_id,scenario_id,timestamp,available_mw\ng_aeolus,s01,2020-07-17T00:00:00,5\n")
    with pytest.raises(DataFormatError, match="g_aeolus"):
        load_scenarios(p, case5)
