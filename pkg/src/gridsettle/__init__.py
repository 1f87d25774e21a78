"""Two-settlement electricity market simulation with risk-aware wind offers.

The package splits into the grid/scenario data model, a mixed-binary
clearing engine with LMP extraction, offer construction (percentile caps
and CVaR-optimized curves), settlement accounting, and a batch experiment
runner exposed through the ``gridsettle`` command.
"""
from .errors import (
    ConfigError,
    DataFormatError,
    GridsettleError,
    InfeasibleProblemError,
    UnboundedProblemError,
)
from .grid_model import (
    Branch,
    Bus,
    Category,
    Generator,
    LoadProfile,
    PowerSystem,
    ValidationReport,
    category_capacity,
    load_system,
    save_system,
    validate_system,
)
from .scenario_engine import (
    ScenarioSet,
    TruthTrace,
    empirical_moments,
    load_scenarios,
    max_trace,
    median_trace,
    percentile_trace,
    truth_trace,
    weighted_percentile,
)
from .market_core import (
    BranchBoundSolver,
    CommitmentSchedule,
    HighsLpSolver,
    HighsMilpSolver,
    LinearProgram,
    MarketParams,
    MarketResult,
    OfferCurve,
    SimulationRun,
    SolverContract,
    Stage,
    StrategyConfig,
    UcProblem,
    UnitState,
    build_uc_problem,
    cold_start,
    extract_lmps,
    run_day_ahead,
    run_real_time,
    simulate_two_settlement,
    solve_uc,
)
from .risk_offers import (
    HourOffer,
    PriceDistribution,
    ProfitSample,
    RiskConfig,
    build_risk_offers,
    cvar,
    cvar_min_form,
    dispatched_quantity,
    estimate_price_distribution,
    optimize_offer,
    percentile_offer,
    profit_samples,
    sample_prices,
    value_at_risk,
)
from .settlement import CategorySummary, SettlementRecord, aggregate, settle
from .experiment import ExperimentConfig, parse_config, run_experiment

__version__ = "0.1.0"
