"""Experiment configuration, strategy sweeps, and the output file tree.

A sweep evaluates each configured strategy (percentile caps or CVaR betas)
against every truth scenario, settles each run, and writes one directory
per (strategy, truth) plus sweep-level files: price_dist.csv and offers.csv
for the risk-aware pipeline, summary.csv with category statistics, and
gen_categories.csv so reports can be rebuilt from the tree alone.

Determinism: offers are seeded, runs are pure, rows are emitted in fixed
orders, and floats are written with 6 decimals.  The summary is aggregated
from the same 6-decimal values that land in settlement.csv, so re-deriving
it from the files reproduces it exactly.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataFormatError, GridsettleError
from .grid_model import PowerSystem, load_system
from .market_core.orchestrate import (
    MarketParams,
    SimulationRun,
    StrategyConfig,
    simulate_two_settlement,
)
from .market_core.solver import BranchBoundSolver, SolverContract
from .market_core.types import MarketResult, OfferCurve
from .risk_offers import (
    HourOffer,
    PriceDistribution,
    RiskConfig,
    estimate_price_distribution,
    offer_curve_from_hourly,
    optimize_generator_hours,
    percentile_offer,
)
from .scenario_engine import ScenarioSet, load_scenarios
from .settlement import CategorySummary, SettlementRecord, aggregate, settle

_CONFIG_KEYS = {
    "system_path",
    "scenarios_path",
    "mode",
    "percentile",
    "beta",
    "da_horizon_h",
    "rt_horizon_h",
    "rt_step_h",
    "n_price_samples",
    "pwl_segments",
    "rng_seed",
    "output_dir",
    "truth_scenarios",
}

PLOT_POINTS = 33  # samples per offer polyline


@dataclass(frozen=True)
class ExperimentConfig:
    system_path: Path
    scenarios_path: Path
    mode: str
    output_dir: Path
    percentile: tuple[float, ...] = ()
    beta: tuple[float, ...] = ()
    da_horizon_h: int = 26
    rt_horizon_h: int = 3
    rt_step_h: int = 1
    n_price_samples: int = 100
    pwl_segments: int = 10
    rng_seed: int = 0
    truth_scenarios: tuple[str, ...] = ()  # empty means all

    def __post_init__(self):
        if self.mode not in ("centralized", "risk_aware"):
            raise ConfigError(f"mode must be centralized or risk_aware, got {self.mode!r}")
        if self.mode == "centralized" and not self.percentile:
            raise ConfigError("centralized mode needs at least one percentile")
        if self.mode == "risk_aware" and not self.beta:
            raise ConfigError("risk_aware mode needs at least one beta")
        if min(self.da_horizon_h, self.rt_horizon_h, self.rt_step_h) < 1:
            raise ConfigError("horizons must be positive")
        if self.n_price_samples < 1 or self.pwl_segments < 1:
            raise ConfigError("sample and segment counts must be positive")

    def market_params(self) -> MarketParams:
        return MarketParams(
            da_horizon_h=self.da_horizon_h,
            rt_horizon_h=self.rt_horizon_h,
            rt_step_h=self.rt_step_h,
            k_segments=self.pwl_segments,
        )

    def strategies(self) -> list[StrategyConfig]:
        if self.mode == "centralized":
            return [
                StrategyConfig(mode="centralized", percentile=q) for q in self.percentile
            ]
        return [
            StrategyConfig(
                mode="risk_aware", beta=b, n_price_samples=self.n_price_samples
            )
            for b in self.beta
        ]


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read a flat ``key = value`` config file.

    Lines starting with ``#`` and blank lines are skipped; list values are
    comma separated; relative paths resolve against the config file's
    directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}, line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}, line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{path}, line {lineno}: duplicate key {key!r}")
        raw[key] = value

    for required in ("system_path", "scenarios_path", "mode", "output_dir"):
        if required not in raw:
            raise ConfigError(f"{path}: missing required key {required!r}")

    def floats(key: str) -> tuple[float, ...]:
        if key not in raw or not raw[key]:
            return ()
        try:
            return tuple(float(v.strip()) for v in raw[key].split(","))
        except ValueError:
            raise ConfigError(f"{path}: {key} must be a comma-separated number list") from None

    def integer(key: str, default: int) -> int:
        if key not in raw:
            return default
        try:
            return int(raw[key])
        except ValueError:
            raise ConfigError(f"{path}: {key} must be an integer") from None

    base = path.parent

    def respath(key: str) -> Path:
        p = Path(raw[key])
        return p if p.is_absolute() else base / p

    truths: tuple[str, ...] = ()
    if raw.get("truth_scenarios", "all").strip().lower() != "all":
        truths = tuple(v.strip() for v in raw["truth_scenarios"].split(",") if v.strip())

    return ExperimentConfig(
        system_path=respath("system_path"),
        scenarios_path=respath("scenarios_path"),
        mode=raw["mode"].strip(),
        output_dir=respath("output_dir"),
        percentile=floats("percentile"),
        beta=floats("beta"),
        da_horizon_h=integer("da_horizon_h", 26),
        rt_horizon_h=integer("rt_horizon_h", 3),
        rt_step_h=integer("rt_step_h", 1),
        n_price_samples=integer("n_price_samples", 100),
        pwl_segments=integer("pwl_segments", 10),
        rng_seed=integer("rng_seed", 0),
        truth_scenarios=truths,
    )


def load_inputs(cfg: ExperimentConfig) -> tuple[PowerSystem, dict[str, ScenarioSet]]:
    system = load_system(cfg.system_path)
    sets = load_scenarios(cfg.scenarios_path, system)
    return system, sets


def resolve_truths(
    cfg: ExperimentConfig, scenario_sets: Mapping[str, ScenarioSet]
) -> tuple[str, ...]:
    ids_per_set = {tuple(s.scenario_ids) for s in scenario_sets.values()}
    if len(ids_per_set) != 1:
        raise GridsettleError(
            "truth selection needs all generators to share one scenario id set"
        )
    available = ids_per_set.pop()
    if not cfg.truth_scenarios:
        return available
    for tid in cfg.truth_scenarios:
        if tid not in available:
            raise ConfigError(f"unknown truth scenario {tid!r}")
    return cfg.truth_scenarios


def worker_count() -> int:
    env = os.environ.get("GRIDSETTLE_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("GRIDSETTLE_THREADS must be an integer") from None
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------- formatting

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _round6(x: float) -> float:
    # round through the 6-decimal text form so files and summary agree exactly
    return float(f"{x:.6f}")


def _ts(h: datetime) -> str:
    return h.isoformat()


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ------------------------------------------------------------------- writers

def write_price_dist_csv(path: Path, dists: Mapping[str, PriceDistribution]) -> None:
    rows = []
    for gid in sorted(dists):
        d = dists[gid]
        for t, h in enumerate(d.hours):
            rows.append(
                [
                    gid,
                    _ts(h),
                    _fmt(d.mean[t, 0]),
                    _fmt(d.mean[t, 1]),
                    _fmt(d.cov[t, 0, 0]),
                    _fmt(d.cov[t, 1, 1]),
                    _fmt(d.cov[t, 0, 1]),
                ]
            )
    _write_csv(
        path,
        ["gen_id", "timestamp", "mean_da", "mean_rt", "var_da", "var_rt", "cov_da_rt"],
        rows,
    )


def read_price_dist_csv(path: Path) -> dict[str, PriceDistribution]:
    """Load estimated price moments back from disk.

    The 6-decimal rounding in the file can nudge a borderline covariance
    slightly indefinite, so the off-diagonal is clamped to the PSD bound
    |cov| <= sqrt(var_da * var_rt) on the way in.
    """
    if not path.is_file():
        raise GridsettleError(
            f"missing price distribution {path}; run estimate-prices first"
        )
    per_gen: dict[str, list[tuple[datetime, float, float, float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for i, row in enumerate(reader, start=2):
            try:
                per_gen.setdefault(row["gen_id"], []).append(
                    (
                        datetime.fromisoformat(row["timestamp"]),
                        float(row["mean_da"]),
                        float(row["mean_rt"]),
                        float(row["var_da"]),
                        float(row["var_rt"]),
                        float(row["cov_da_rt"]),
                    )
                )
            except (KeyError, TypeError, ValueError):
                raise DataFormatError(
                    "malformed price distribution row", file=str(path), line=i
                ) from None
    out: dict[str, PriceDistribution] = {}
    for gid, entries in per_gen.items():
        entries.sort(key=lambda e: e[0])
        hours = tuple(e[0] for e in entries)
        mean = np.array([[e[1], e[2]] for e in entries])
        cov = np.zeros((len(entries), 2, 2))
        for t, (_, _, _, va, vr, c) in enumerate(entries):
            bound = float(np.sqrt(max(va, 0.0) * max(vr, 0.0)))
            c = float(np.clip(c, -bound, bound))
            cov[t] = [[max(va, 0.0), c], [c, max(vr, 0.0)]]
        out[gid] = PriceDistribution(generator=gid, hours=hours, mean=mean, cov=cov)
    return out


def write_offers_csv(
    path: Path, hourly_by_beta: Mapping[float, Mapping[str, Sequence[HourOffer]]]
) -> None:
    """Optimizer output per generator-hour-beta; carried hours (no CVaR) are
    skipped since nothing was optimized there."""
    rows = []
    for beta in hourly_by_beta:
        per_gen = hourly_by_beta[beta]
        for gid in sorted(per_gen):
            for off in per_gen[gid]:
                if np.isnan(off.cvar_value):
                    continue
                rows.append(
                    [
                        gid,
                        _ts(off.hour),
                        _fmt(off.a),
                        _fmt(off.b),
                        _fmt(off.q_max),
                        f"{beta:g}",
                        _fmt(off.cvar_value),
                    ]
                )
    _write_csv(
        path,
        ["gen_id", "timestamp", "a", "b", "q_max_mw", "beta", "cvar_value"],
        rows,
    )


def write_run_dir(
    run_dir: Path,
    run: SimulationRun,
    records: Sequence[SettlementRecord],
) -> None:
    """Per-run CSVs: dispatch, prices, commitments, and settlement."""

    def gen_hour_rows(results: Sequence[MarketResult], arr_name: str):
        for res in results:
            arr = getattr(res, arr_name)
            for g, gid in enumerate(res.gen_ids):
                for t in range(res.binding):
                    yield [gid, _ts(res.hours[t]), _fmt(arr[g, t])]

    def bus_hour_rows(results: Sequence[MarketResult]):
        for res in results:
            for n, bid in enumerate(res.bus_ids):
                for t in range(res.binding):
                    yield [bid, _ts(res.hours[t]), _fmt(res.lmps[n, t])]

    def commitment_rows(results: Sequence[MarketResult]):
        for res in results:
            sched = res.commitments
            for g, gid in enumerate(res.gen_ids):
                for t in range(res.binding):
                    yield [
                        gid,
                        _ts(res.hours[t]),
                        int(sched.status[g, t]),
                        int(sched.startup[g, t]),
                        int(sched.shutdown[g, t]),
                    ]

    _write_csv(
        run_dir / "dispatch_da.csv",
        ["gen_id", "timestamp", "mw"],
        gen_hour_rows(run.day_ahead, "dispatch"),
    )
    _write_csv(
        run_dir / "dispatch_rt.csv",
        ["gen_id", "timestamp", "mw"],
        gen_hour_rows(run.real_time, "dispatch"),
    )
    _write_csv(
        run_dir / "lmps_da.csv",
        ["bus_id", "timestamp", "usd_per_mwh"],
        bus_hour_rows(run.day_ahead),
    )
    _write_csv(
        run_dir / "lmps_rt.csv",
        ["bus_id", "timestamp", "usd_per_mwh"],
        bus_hour_rows(run.real_time),
    )
    _write_csv(
        run_dir / "commitments.csv",
        ["gen_id", "timestamp", "status", "startup", "shutdown"],
        commitment_rows(run.day_ahead),
    )
    _write_csv(
        run_dir / "commitments_rt.csv",
        ["gen_id", "timestamp", "status", "startup", "shutdown"],
        commitment_rows(run.real_time),
    )
    _write_csv(
        run_dir / "settlement.csv",
        ["gen_id", "timestamp", "da_mw", "rt_mw", "da_lmp", "rt_lmp", "revenue_usd"],
        (
            [
                rec.generator,
                _ts(rec.hour),
                _fmt(rec.da_dispatch),
                _fmt(rec.rt_dispatch),
                _fmt(rec.da_lmp),
                _fmt(rec.rt_lmp),
                _fmt(rec.revenue),
            ]
            for rec in records
        ),
    )


def rounded_records(records: Sequence[SettlementRecord]) -> list[SettlementRecord]:
    """Records as they read back from settlement.csv (6-decimal values)."""
    return [
        replace(
            rec,
            da_dispatch=_round6(rec.da_dispatch),
            rt_dispatch=_round6(rec.rt_dispatch),
            da_lmp=_round6(rec.da_lmp),
            rt_lmp=_round6(rec.rt_lmp),
            revenue=_round6(rec.revenue),
        )
        for rec in records
    ]


def write_summary_csv(
    path: Path,
    summaries: Sequence[tuple[str, Sequence[CategorySummary]]],
) -> None:
    rows = []
    for label, cats in summaries:
        for s in cats:
            rows.append(
                [
                    s.category.value,
                    label,
                    _fmt(s.redispatch_gwh),
                    _fmt(s.payment_mean / 1000.0),
                    _fmt(s.payment_std / 1000.0),
                ]
            )
    _write_csv(
        path,
        [
            "category",
            "strategy",
            "redispatch_gwh_mean",
            "payment_mean_kusd",
            "payment_std_kusd",
        ],
        rows,
    )


def write_gen_categories_csv(path: Path, system: PowerSystem) -> None:
    _write_csv(
        path,
        ["gen_id", "category", "bus_id"],
        ([g.id, g.category.value, g.bus] for g in system.generators),
    )


# ------------------------------------------------------------------ pipeline

def estimate_distributions(
    system: PowerSystem,
    scenario_sets: Mapping[str, ScenarioSet],
    cfg: ExperimentConfig,
    solver: SolverContract,
) -> dict[str, PriceDistribution]:
    """Median-offer centralized runs over every truth, reduced to moments."""
    strategy = StrategyConfig(mode="centralized", percentile=50.0)
    offers = {
        gid: percentile_offer(scenario_sets[gid], 50.0) for gid in sorted(scenario_sets)
    }
    cache: dict[str, tuple[MarketResult, ...]] = {}
    runs = [
        simulate_two_settlement(
            system,
            scenario_sets,
            strategy,
            tid,
            cfg.rng_seed,
            wind_offers=offers,
            solver=solver,
            params=cfg.market_params(),
            da_cache=cache,
        )
        for tid in resolve_truths(cfg, scenario_sets)
    ]
    return estimate_price_distribution(runs, system)


def _strategy_offers(
    cfg: ExperimentConfig,
    system: PowerSystem,
    scenario_sets: Mapping[str, ScenarioSet],
    dists: Mapping[str, PriceDistribution] | None,
) -> tuple[
    dict[str, dict[str, OfferCurve]],
    dict[float, dict[str, list[HourOffer]]],
]:
    """Wind offer curves per strategy label, plus raw optimizer output."""
    curves: dict[str, dict[str, OfferCurve]] = {}
    hourly_by_beta: dict[float, dict[str, list[HourOffer]]] = {}
    hours = tuple(system.hour_index)
    for strat in cfg.strategies():
        if strat.mode == "centralized":
            curves[strat.label] = {
                gid: percentile_offer(scenario_sets[gid], strat.percentile)
                for gid in sorted(scenario_sets)
            }
        else:
            rcfg = RiskConfig(
                beta=strat.beta,
                n_price_samples=cfg.n_price_samples,
                rng_seed=cfg.rng_seed,
            )
            per_gen = {
                gid: optimize_generator_hours(
                    scenario_sets[gid], dists[gid], rcfg, hours
                )
                for gid in sorted(scenario_sets)
            }
            hourly_by_beta[strat.beta] = per_gen
            curves[strat.label] = {
                gid: offer_curve_from_hourly(gid, hours, hl)
                for gid, hl in per_gen.items()
            }
    return curves, hourly_by_beta


def run_experiment(cfg: ExperimentConfig) -> list[tuple[str, list[CategorySummary]]]:
    """Full sweep: strategies x truths, settled, written under output_dir."""
    system, scenario_sets = load_inputs(cfg)
    truths = resolve_truths(cfg, scenario_sets)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    solver = BranchBoundSolver()
    params = cfg.market_params()

    dists: dict[str, PriceDistribution] | None = None
    if cfg.mode == "risk_aware":
        dists = estimate_distributions(system, scenario_sets, cfg, solver)
        write_price_dist_csv(out / "price_dist.csv", dists)
        # Optimize against the file-rounded moments so `run` and `offers`
        # commands agree to the last digit.
        dists = read_price_dist_csv(out / "price_dist.csv")

    curves, hourly_by_beta = _strategy_offers(cfg, system, scenario_sets, dists)
    if hourly_by_beta:
        write_offers_csv(out / "offers.csv", hourly_by_beta)

    workers = worker_count()
    summaries: list[tuple[str, list[CategorySummary]]] = []
    for strat in cfg.strategies():
        cache: dict[str, tuple[MarketResult, ...]] = {}

        def run_one(tid: str) -> list[SettlementRecord]:
            run = simulate_two_settlement(
                system,
                scenario_sets,
                strat,
                tid,
                cfg.rng_seed,
                wind_offers=curves[strat.label],
                solver=solver,
                params=params,
                da_cache=cache,
            )
            records = settle(run, system)
            write_run_dir(out / strat.label / f"truth_{tid}", run, records)
            return rounded_records(records)

        # First truth runs alone to fill the shared day-ahead cache.
        per_run = [run_one(truths[0])]
        rest = truths[1:]
        if rest:
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    per_run.extend(pool.map(run_one, rest))
            else:
                per_run.extend(run_one(tid) for tid in rest)
        summaries.append((strat.label, aggregate(per_run, system)))

    write_summary_csv(out / "summary.csv", summaries)
    write_gen_categories_csv(out / "gen_categories.csv", system)
    return summaries
