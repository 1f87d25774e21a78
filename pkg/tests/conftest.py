"""Shared fixtures and small system builders used across the test modules."""

from datetime import datetime, timedelta

import numpy as np
import pytest

from gridsettle.data import fixture_path
from gridsettle.grid_model import (
    Branch,
    Bus,
    Category,
    Generator,
    LoadProfile,
    PowerSystem,
    load_system,
    validate_system,
)
from gridsettle.market_core import BranchBoundSolver, UnitState
from gridsettle.scenario_engine import load_scenarios

T0 = datetime(2020, 7, 17)


def hours(n, start=T0):
    return tuple(start + timedelta(hours=i) for i in range(n))


def make_gen(
    gid,
    bus,
    c1,
    pmax,
    *,
    c2=0.0,
    c0=0.0,
    pmin=0.0,
    ramp=None,
    committable=False,
    fast_start=False,
    variable=False,
    startup=0.0,
    shutdown=0.0,
    min_up=0,
    min_down=0,
    category=Category.GAS_CT,
):
    return Generator(
        id=gid,
        bus=bus,
        category=category,
        p_min=pmin,
        p_max=pmax,
        ramp=pmax if ramp is None else ramp,
        cost_quadratic=c2,
        cost_linear=c1,
        cost_constant=c0,
        startup_cost=startup,
        shutdown_cost=shutdown,
        min_up=min_up,
        min_down=min_down,
        committable=committable,
        fast_start=fast_start,
        variable=variable,
    )


def single_bus(gens, loads, n_hours=None):
    """One-bus system: no network, pure merit order."""
    n = len(loads) if n_hours is None else n_hours
    sysm = PowerSystem(
        buses=(Bus("n1", "only"),),
        branches=(),
        generators=tuple(gens),
        loads=(LoadProfile("n1", tuple(loads)),),
        hour_index=hours(n),
    )
    report = validate_system(sysm)
    assert report.ok, report.violations
    return sysm


def two_bus(line_cap, load=80.0, c1_far=10.0, c1_near=50.0):
    """Cheap unit behind a line, expensive unit at the load bus."""
    sysm = PowerSystem(
        buses=(Bus("n1", "far"), Bus("n2", "near")),
        branches=(Branch("ln", "n1", "n2", 0.1, line_cap),),
        generators=(
            make_gen("ga", "n1", c1_far, 100.0),
            make_gen("gb", "n2", c1_near, 100.0),
        ),
        loads=(LoadProfile("n2", (load,)),),
        hour_index=hours(1),
    )
    report = validate_system(sysm)
    assert report.ok, report.violations
    return sysm


def online_state(system, dispatch=0.0):
    return {g.id: UnitState(1, 1, dispatch) for g in system.generators}


@pytest.fixture(scope="session")
def solver():
    return BranchBoundSolver()


@pytest.fixture(scope="session")
def case5():
    return load_system(fixture_path("case5"))


@pytest.fixture(scope="session")
def case5_scenarios(case5):
    return load_scenarios(fixture_path("case5") / "scenarios.csv", case5)


@pytest.fixture(scope="session")
def rts_like():
    return load_system(fixture_path("rts_like"))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
