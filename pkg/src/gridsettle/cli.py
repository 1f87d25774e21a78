"""Batch command-line interface.

Subcommands: ``run`` (full strategy x truth sweep), ``estimate-prices``
(centralized median pre-pass to price_dist.csv), ``offers`` (offer tables
and plot-ready polylines), and ``report`` (category x strategy matrices
re-derived from a finished output tree).  Exit codes: 0 success, 1 runtime
error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridsettleError
from .experiment import (
    PLOT_POINTS,
    ExperimentConfig,
    _fmt,
    _strategy_offers,
    _ts,
    _write_csv,
    estimate_distributions,
    load_inputs,
    parse_config,
    read_price_dist_csv,
    run_experiment,
    write_offers_csv,
    write_price_dist_csv,
)
from .market_core.solver import BranchBoundSolver
from .risk_offers import cell_seed, cvar, profit_samples, sample_prices, value_at_risk


def cmd_run(cfg: ExperimentConfig) -> None:
    summaries = run_experiment(cfg)
    n_rows = sum(len(cats) for _, cats in summaries)
    print(f"wrote {cfg.output_dir / 'summary.csv'} ({n_rows} category rows)")


def cmd_estimate_prices(cfg: ExperimentConfig) -> None:
    system, scenario_sets = load_inputs(cfg)
    dists = estimate_distributions(system, scenario_sets, cfg, BranchBoundSolver())
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / "price_dist.csv"
    write_price_dist_csv(path, dists)
    print(f"wrote {path} ({len(dists)} generators)")


def _polyline_rows(label: str, gen_id: str, hour: datetime, a: float, b: float, q_max: float):
    qs = np.linspace(0.0, q_max, PLOT_POINTS)
    for q in qs:
        yield [gen_id, _ts(hour), label, _fmt(q), _fmt(2.0 * a * q + b)]


def cmd_offers(cfg: ExperimentConfig) -> None:
    """Emit offers.csv, per-hour marginal-price polylines, and (for the
    risk-aware mode) the sorted profit CDF behind one optimized cell."""
    system, scenario_sets = load_inputs(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    if cfg.mode == "centralized":
        curves, _ = _strategy_offers(cfg, system, scenario_sets, None)
        offer_rows = []
        plot_rows = []
        for strat in cfg.strategies():
            per_gen = curves[strat.label]
            for gid in sorted(per_gen):
                curve = per_gen[gid]
                for t, hour in enumerate(curve.hours):
                    offer_rows.append(
                        [gid, _ts(hour), _fmt(0.0), _fmt(0.0), _fmt(curve.q_max[t]), "", ""]
                    )
                    plot_rows.extend(
                        _polyline_rows(strat.label, gid, hour, 0.0, 0.0, curve.q_max[t])
                    )
        _write_csv(
            out / "offers.csv",
            ["gen_id", "timestamp", "a", "b", "q_max_mw", "beta", "cvar_value"],
            offer_rows,
        )
        _write_csv(
            out / "offer_curves_plotdata.csv",
            ["gen_id", "timestamp", "strategy", "quantity_mw", "marginal_price_usd_per_mwh"],
            plot_rows,
        )
        print(f"wrote {out / 'offers.csv'} and polylines for {len(cfg.percentile)} percentiles")
        return

    dists = read_price_dist_csv(out / "price_dist.csv")
    _, hourly_by_beta = _strategy_offers(cfg, system, scenario_sets, dists)
    write_offers_csv(out / "offers.csv", hourly_by_beta)

    plot_rows = []
    for beta, per_gen in hourly_by_beta.items():
        label = f"beta{beta:g}"
        for gid in sorted(per_gen):
            for off in per_gen[gid]:
                plot_rows.extend(
                    _polyline_rows(label, gid, off.hour, off.a, off.b, off.q_max)
                )
    _write_csv(
        out / "offer_curves_plotdata.csv",
        ["gen_id", "timestamp", "strategy", "quantity_mw", "marginal_price_usd_per_mwh"],
        plot_rows,
    )

    # Profit-CDF illustration at the widest scenario fan among priced hours.
    pick: tuple[float, str, datetime] | None = None
    for gid in sorted(scenario_sets):
        sset = scenario_sets[gid]
        for hour in dists[gid].hours:
            values = sset.hour_values(hour)
            spread = float(values.max() - values.min())
            if pick is None or spread > pick[0]:
                pick = (spread, gid, hour)
    profile_rows = []
    if pick is not None:
        _, gid, hour = pick
        sset = scenario_sets[gid]
        hour_list = list(system.hour_index)
        t = hour_list.index(hour)
        wind = np.column_stack([sset.traces[:, t], sset.probabilities])
        for beta, per_gen in hourly_by_beta.items():
            off = per_gen[gid][t]
            prices = sample_prices(
                dists[gid], hour, cfg.n_price_samples, cell_seed(cfg.rng_seed, gid, hour)
            )
            samples = profit_samples(off.a, off.b, off.q_max, prices, wind)
            profits = np.array([s.profit for s in samples])
            weights = np.array([s.probability for s in samples])
            order = np.argsort(profits, kind="stable")
            var = value_at_risk(profits, beta, weights)
            cv = cvar(profits, beta, weights)
            cum = 0.0
            for i in order:
                cum += weights[i]
                profile_rows.append(
                    [
                        f"{beta:g}",
                        gid,
                        _ts(hour),
                        _fmt(cum),
                        _fmt(profits[i]),
                        _fmt(var),
                        _fmt(cv),
                    ]
                )
    _write_csv(
        out / "cvar_profile.csv",
        ["beta", "gen_id", "timestamp", "cum_probability", "profit_usd", "var_usd", "cvar_usd"],
        profile_rows,
    )
    print(
        f"wrote {out / 'offers.csv'}, polylines, and profit profile for "
        f"{len(cfg.beta)} betas"
    )


def _read_rows(path: Path) -> list[dict[str, str]]:
    import csv

    if not path.is_file():
        raise GridsettleError(f"missing {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(output_dir: Path) -> None:
    """Rebuild the category x strategy matrices from run directories and
    verify they reproduce summary.csv exactly."""
    out = Path(output_dir)
    summary_rows = _read_rows(out / "summary.csv")
    if not summary_rows:
        raise GridsettleError(f"{out / 'summary.csv'} has no rows")
    category_of = {
        row["gen_id"]: row["category"] for row in _read_rows(out / "gen_categories.csv")
    }

    strategies: list[str] = []
    categories: list[str] = []
    for row in summary_rows:
        if row["strategy"] not in strategies:
            strategies.append(row["strategy"])
        if row["category"] not in categories:
            categories.append(row["category"])

    # Re-aggregate every strategy from its run directories.
    recomputed: dict[tuple[str, str], tuple[str, str, str]] = {}
    for label in strategies:
        strat_dir = out / label
        run_dirs = sorted(strat_dir.glob("truth_*"))
        if not run_dirs:
            raise GridsettleError(f"no run directories under {strat_dir}")
        energy = {c: [] for c in categories}
        pay = {c: [] for c in categories}
        for run_dir in run_dirs:
            e_run = {c: 0.0 for c in categories}
            p_run = {c: 0.0 for c in categories}
            for row in _read_rows(run_dir / "settlement.csv"):
                cat = category_of.get(row["gen_id"])
                if cat is None:
                    raise GridsettleError(
                        f"{run_dir}: generator {row['gen_id']} missing from gen_categories.csv"
                    )
                e_run[cat] += float(row["rt_mw"]) - float(row["da_mw"])
                p_run[cat] += float(row["revenue_usd"])
            for c in categories:
                energy[c].append(e_run[c])
                pay[c].append(p_run[c])
        for c in categories:
            e = np.asarray(energy[c])
            p = np.asarray(pay[c])
            recomputed[(c, label)] = (
                _fmt(float(e.mean()) / 1000.0),
                _fmt(float(p.mean()) / 1000.0),
                _fmt(float(p.std()) / 1000.0),
            )

    for row in summary_rows:
        key = (row["category"], row["strategy"])
        got = recomputed.get(key)
        want = (
            row["redispatch_gwh_mean"],
            row["payment_mean_kusd"],
            row["payment_std_kusd"],
        )
        if got != want:
            raise GridsettleError(
                f"summary.csv row {key} does not match the run directories: "
                f"file {want}, recomputed {got}"
            )

    matrices = {
        "redispatch_gwh_mean": 0,
        "payment_mean_kusd": 1,
        "payment_std_kusd": 2,
    }
    for name, col in matrices.items():
        print(f"\n{name} by category and strategy")
        header = f"{'category':<12}" + "".join(f"{s:>16}" for s in strategies)
        print(header)
        csv_rows = []
        totals = np.zeros(len(strategies))
        for c in categories:
            vals = [recomputed[(c, label)][col] for label in strategies]
            totals += np.array([float(v) for v in vals])
            print(f"{c:<12}" + "".join(f"{v:>16}" for v in vals))
            csv_rows.append([c, *vals])
        total_strs = [_fmt(v) for v in totals]
        print(f"{'total':<12}" + "".join(f"{v:>16}" for v in total_strs))
        csv_rows.append(["total", *total_strs])
        _write_csv(out / f"report_{name}.csv", ["category", *strategies], csv_rows)
    print(f"\nsummary.csv verified against {len(strategies)} strategies")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridsettle",
        description="Two-settlement market simulation with risk-aware wind offers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("run", "run the configured strategy sweep and write the output tree"),
        ("estimate-prices", "run the centralized median pre-pass and write price_dist.csv"),
        ("offers", "write offer tables and plot-ready polylines"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("-c", "--config", required=True, help="path to the config file")
    p = sub.add_parser("report", help="rebuild summary matrices from an output tree")
    p.add_argument("-o", "--output-dir", required=True, help="sweep output directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            cmd_report(Path(args.output_dir))
        else:
            cfg = parse_config(args.config)
            if args.command == "run":
                cmd_run(cfg)
            elif args.command == "estimate-prices":
                cmd_estimate_prices(cfg)
            else:
                cmd_offers(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GridsettleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
