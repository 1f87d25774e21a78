"""Two-settlement simulation: chained day-ahead clearings over a look-ahead
horizon, then rolling real-time re-dispatch against a revealed truth trace.

Day-ahead runs once per simulated day over ``da_horizon_h`` hours with only
the first ``da_binding_h`` settling; the next day chains off the binding
end state.  Real-time rolls an ``rt_horizon_h`` window forward in
``rt_step_h`` steps, holding slow units to the day-ahead commitment (the
following day's schedule where a window crosses midnight), re-pricing each
window, and keeping only the leading step of every solve.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from typing import Mapping, MutableMapping

import numpy as np

from ..errors import ConfigError, GridsettleError, InfeasibleProblemError
from ..grid_model import PowerSystem
from ..risk_offers import PriceDistribution, RiskConfig, build_risk_offers, percentile_offer
from ..scenario_engine import ScenarioSet
from .solver import BranchBoundSolver, SolverContract
from .types import CommitmentSchedule, MarketResult, OfferCurve, Stage, UnitState
from .uc import SHED_PRICE, build_uc_problem, extract_lmps, solve_uc


@dataclass(frozen=True)
class MarketParams:
    da_horizon_h: int = 26
    da_binding_h: int = 24
    rt_horizon_h: int = 3
    rt_step_h: int = 1
    k_segments: int = 10
    rel_gap: float = 1e-6
    shed_price: float = SHED_PRICE

    def __post_init__(self):
        if min(self.da_horizon_h, self.rt_horizon_h, self.rt_step_h) < 1:
            raise ConfigError("horizons and step must be positive")
        if not 1 <= self.da_binding_h <= self.da_horizon_h:
            raise ConfigError("binding hours must fit inside the day-ahead horizon")
        if self.rt_step_h > self.rt_horizon_h:
            raise ConfigError("real-time step cannot exceed the window length")


@dataclass(frozen=True)
class StrategyConfig:
    """How the variable generators offer: a percentile cap or a CVaR level."""

    mode: str
    percentile: float | None = None
    beta: float | None = None
    n_price_samples: int = 100

    def __post_init__(self):
        if self.mode == "centralized":
            if self.percentile is None or not 0.0 <= self.percentile <= 100.0:
                raise ConfigError("centralized strategy needs a percentile in [0, 100]")
        elif self.mode == "risk_aware":
            if self.beta is None or not 0.0 <= self.beta < 1.0:
                raise ConfigError("risk_aware strategy needs beta in [0, 1)")
        else:
            raise ConfigError(f"unknown strategy mode {self.mode!r}")

    @property
    def label(self) -> str:
        if self.mode == "centralized":
            return f"q{self.percentile:g}"
        return f"beta{self.beta:g}"


@dataclass(frozen=True)
class SimulationRun:
    """One strategy evaluated against one truth scenario."""

    strategy: str
    truth_id: str
    seed: int
    days: tuple[datetime, ...]
    day_ahead: tuple[MarketResult, ...]
    real_time: tuple[MarketResult, ...]
    wind_offers: Mapping[str, OfferCurve]


def cold_start(system: PowerSystem) -> dict[str, UnitState]:
    """Committable units off long enough to restart freely; the rest online."""
    out: dict[str, UnitState] = {}
    for gen in system.generators:
        if gen.committable:
            out[gen.id] = UnitState(0, max(gen.min_down, 1), 0.0)
        else:
            out[gen.id] = UnitState(1, 1, 0.0)
    return out


def simulated_days(system: PowerSystem, params: MarketParams) -> tuple[datetime, ...]:
    """Midnights whose full day-ahead horizon fits in the load index."""
    idx = system.hour_index
    return tuple(
        h
        for i, h in enumerate(idx)
        if (h.hour, h.minute) == (0, 0) and i + params.da_horizon_h <= len(idx)
    )


def end_state(
    result: MarketResult, initial: Mapping[str, UnitState], upto: int
) -> dict[str, UnitState]:
    """Per-unit state after consuming the first ``upto`` hours of a result."""
    status = result.commitments.status
    out: dict[str, UnitState] = {}
    for g, gen_id in enumerate(result.gen_ids):
        s = int(status[g, upto - 1])
        run = 1
        t = upto - 2
        while t >= 0 and int(status[g, t]) == s:
            run += 1
            t -= 1
        if t < 0 and int(initial[gen_id].status) == s:
            run += initial[gen_id].hours_in_state
        out[gen_id] = UnitState(s, run, float(result.dispatch[g, upto - 1]))
    return out


def full_offer_set(
    system: PowerSystem, wind_offers: Mapping[str, OfferCurve]
) -> dict[str, OfferCurve]:
    """Strategy offers for the variable units, static cost curves elsewhere."""
    hours = tuple(system.hour_index)
    out: dict[str, OfferCurve] = {}
    for gen in system.generators:
        if gen.id in wind_offers:
            out[gen.id] = wind_offers[gen.id]
        else:
            out[gen.id] = OfferCurve.from_generator(gen, hours)
    return out


def run_day_ahead(
    system: PowerSystem,
    offers: Mapping[str, OfferCurve],
    day: datetime,
    initial_state: Mapping[str, UnitState],
    *,
    solver: SolverContract,
    params: MarketParams = MarketParams(),
) -> MarketResult:
    """Clear one day-ahead horizon and price its binding hours."""
    i = system.hour_pos.get(day)
    if i is None or i + params.da_horizon_h > len(system.hour_index):
        raise GridsettleError(
            f"day-ahead horizon starting {day.isoformat()} is not covered by the loads"
        )
    hours = tuple(system.hour_index[i : i + params.da_horizon_h])
    loads = system.load_matrix[:, i : i + params.da_horizon_h]
    problem = build_uc_problem(
        system,
        offers,
        loads,
        hours,
        initial_state,
        k_segments=params.k_segments,
        shed_price=params.shed_price,
    )
    result = solve_uc(
        problem,
        solver,
        stage=Stage.DAY_AHEAD,
        binding=params.da_binding_h,
        rel_gap=params.rel_gap,
    )
    lmps = extract_lmps(problem, result.commitments, solver)
    lmps[:, result.binding :] = np.nan
    return replace(result, lmps=lmps)


def run_real_time(
    system: PowerSystem,
    offers: Mapping[str, OfferCurve],
    truth_caps: Mapping[str, np.ndarray],
    day: datetime,
    da_status_by_hour: Mapping[datetime, np.ndarray],
    initial_state: Mapping[str, UnitState],
    *,
    solver: SolverContract,
    params: MarketParams = MarketParams(),
) -> MarketResult:
    """Roll balancing windows across one day and assemble the realized hours.

    ``truth_caps`` maps each variable generator to its revealed availability
    over the full load index; ``da_status_by_hour`` carries the commitment
    every non-fast-start unit is held to.
    """
    pos = system.hour_pos.get(day)
    if pos is None:
        raise GridsettleError(f"day {day.isoformat()} is not in the load horizon")
    idx = system.hour_index
    n_bind = params.da_binding_h
    if pos + n_bind + params.rt_horizon_h - params.rt_step_h > len(idx):
        raise GridsettleError(
            f"balancing windows for {day.isoformat()} run past the load horizon"
        )
    day_hours = tuple(idx[pos : pos + n_bind])
    gens = system.generators
    G, N, L = len(gens), len(system.buses), len(system.branches)

    dispatch = np.zeros((G, n_bind))
    status = np.zeros((G, n_bind), dtype=np.int8)
    lmps = np.zeros((N, n_bind))
    shed = np.zeros((N, n_bind))
    angles = np.zeros((N, n_bind))
    flows = np.zeros((L, n_bind))
    objective = 0.0

    state = dict(initial_state)
    init_status_day = np.array([state[g.id].status for g in gens], dtype=np.int8)

    for h0 in range(0, n_bind, params.rt_step_h):
        i = pos + h0
        W = params.rt_horizon_h
        hours = tuple(idx[i : i + W])
        loads = system.load_matrix[:, i : i + W]

        window_offers = dict(offers)
        for gen_id, cap in truth_caps.items():
            window_offers[gen_id] = (
                offers[gen_id].window(hours[0], W).with_quantity_cap(cap[i : i + W])
            )

        fixed: dict[str, np.ndarray] = {}
        for g, gen in enumerate(gens):
            if gen.committable and not gen.fast_start:
                try:
                    fixed[gen.id] = np.array(
                        [da_status_by_hour[h][g] for h in hours], dtype=float
                    )
                except KeyError as exc:
                    raise GridsettleError(
                        f"no day-ahead commitment covering {exc.args[0]}"
                    ) from None

        problem = build_uc_problem(
            system,
            window_offers,
            loads,
            hours,
            state,
            k_segments=params.k_segments,
            shed_price=params.shed_price,
            fixed_status=fixed,
        )
        try:
            if problem.lp.binary_idx.size:
                sol = solver.solve_milp(problem.lp, rel_gap=params.rel_gap)
            else:
                sol = solver.solve_lp(problem.lp)
        except InfeasibleProblemError as exc:
            raise InfeasibleProblemError(
                f"balancing window at {hours[0].isoformat()} is infeasible: {exc}"
            ) from exc

        x = sol.x
        w_status = problem.status_from(x)
        w_sched = CommitmentSchedule.from_status(
            problem.gen_ids,
            hours,
            w_status,
            np.array([state[g.id].status for g in gens], dtype=np.int8),
        )
        w_lmps = extract_lmps(problem, w_sched, solver)
        w_dispatch = problem.dispatch_from(x)

        take = min(params.rt_step_h, n_bind - h0)
        for k in range(take):
            col = h0 + k
            dispatch[:, col] = w_dispatch[:, k]
            status[:, col] = w_status[:, k]
            lmps[:, col] = w_lmps[:, k]
            shed[:, col] = problem.shed_from(x)[:, k]
            angles[:, col] = problem.angles_from(x)[:, k]
            flows[:, col] = problem.flows_from(x)[:, k]
            objective += problem.hour_cost(x, k)
            for g, gen in enumerate(gens):
                prev = state[gen.id]
                s = int(w_status[g, k])
                held = prev.hours_in_state + 1 if prev.status == s else 1
                state[gen.id] = UnitState(s, held, float(w_dispatch[g, k]))

    commitments = CommitmentSchedule.from_status(
        system.gen_ids, day_hours, status, init_status_day
    )
    return MarketResult(
        stage=Stage.REAL_TIME,
        hours=day_hours,
        binding=n_bind,
        gen_ids=system.gen_ids,
        bus_ids=system.bus_ids,
        branch_ids=system.branch_ids,
        dispatch=dispatch,
        commitments=commitments,
        flows=flows,
        angles=angles,
        lmps=lmps,
        shed=shed,
        objective=objective,
    )


def build_strategy_offers(
    system: PowerSystem,
    scenario_sets: Mapping[str, ScenarioSet],
    strategy: StrategyConfig,
    seed: int,
    price_dists: Mapping[str, PriceDistribution] | None = None,
) -> dict[str, OfferCurve]:
    """Materialize the wind offer curves a strategy calls for."""
    if strategy.mode == "centralized":
        return {
            gid: percentile_offer(sset, strategy.percentile)
            for gid, sset in scenario_sets.items()
        }
    if price_dists is None:
        raise ConfigError(
            "risk_aware offers need an estimated price distribution; "
            "run the estimation pass first"
        )
    cfg = RiskConfig(
        beta=strategy.beta,
        n_price_samples=strategy.n_price_samples,
        rng_seed=seed,
    )
    return build_risk_offers(system, scenario_sets, price_dists, cfg)


def simulate_two_settlement(
    system: PowerSystem,
    scenario_sets: Mapping[str, ScenarioSet],
    strategy: StrategyConfig,
    truth_id: str,
    seed: int,
    *,
    price_dists: Mapping[str, PriceDistribution] | None = None,
    wind_offers: Mapping[str, OfferCurve] | None = None,
    solver: SolverContract | None = None,
    params: MarketParams = MarketParams(),
    da_cache: MutableMapping[str, tuple[MarketResult, ...]] | None = None,
) -> SimulationRun:
    """Run both settlement stages for one strategy against one truth trace.

    The day-ahead chain never sees the truth, so when ``da_cache`` is shared
    across truth scenarios each strategy's day-ahead solves happen once.
    Precomputed ``wind_offers`` skip the (seeded, deterministic) offer
    construction; results are identical either way.
    """
    solver = solver or BranchBoundSolver()
    if wind_offers is None:
        wind_offers = build_strategy_offers(
            system, scenario_sets, strategy, seed, price_dists
        )
    offers = full_offer_set(system, wind_offers)
    days = simulated_days(system, params)
    if not days:
        raise GridsettleError(
            "load horizon too short: no midnight fits a full day-ahead horizon"
        )

    da_results: tuple[MarketResult, ...] | None = None
    if da_cache is not None:
        da_results = da_cache.get(strategy.label)
    if da_results is None:
        chain: list[MarketResult] = []
        state = cold_start(system)
        for day in days:
            res = run_day_ahead(
                system, offers, day, state, solver=solver, params=params
            )
            chain.append(res)
            state = end_state(res, state, params.da_binding_h)
        da_results = tuple(chain)
        if da_cache is not None:
            da_cache[strategy.label] = da_results

    # Later binding schedules overwrite earlier look-ahead stubs.
    da_status_by_hour: dict[datetime, np.ndarray] = {}
    for res in da_results:
        for t, h in enumerate(res.hours):
            da_status_by_hour[h] = res.commitments.status[:, t]

    truth_caps = {
        gid: sset.trace(truth_id) for gid, sset in scenario_sets.items()
    }

    rt_results: list[MarketResult] = []
    state = cold_start(system)
    for day in days:
        rt = run_real_time(
            system,
            offers,
            truth_caps,
            day,
            da_status_by_hour,
            state,
            solver=solver,
            params=params,
        )
        rt_results.append(rt)
        state = end_state(rt, state, params.da_binding_h)

    return SimulationRun(
        strategy=strategy.label,
        truth_id=truth_id,
        seed=seed,
        days=days,
        day_ahead=da_results,
        real_time=tuple(rt_results),
        wind_offers=dict(wind_offers),
    )
