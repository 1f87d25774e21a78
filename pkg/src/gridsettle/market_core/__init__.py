"""Market clearing: problem construction, solvers, and the two-settlement loop."""
from .types import CommitmentSchedule, MarketResult, OfferCurve, Stage, UnitState
from .solver import (
    BranchBoundSolver,
    HighsLpSolver,
    HighsMilpSolver,
    LinearProgram,
    LpSolution,
    MilpSolution,
    SolverContract,
)
from .pwl import base_cost, linearized_cost, segment_breakpoints, segment_widths_and_slopes
from .uc import SHED_PRICE, UcProblem, build_uc_problem, extract_lmps, solve_uc
from .orchestrate import (
    MarketParams,
    SimulationRun,
    StrategyConfig,
    build_strategy_offers,
    cold_start,
    end_state,
    full_offer_set,
    run_day_ahead,
    run_real_time,
    simulate_two_settlement,
    simulated_days,
)
