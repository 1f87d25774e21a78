"""Weighted availability scenarios for variable generators.

A :class:`ScenarioSet` holds the hourly availability traces of one wind unit
together with scenario probabilities.  Queries cover weighted percentiles
(used to cap conservative offers), the per-hour maximum (the cap for
risk-priced offers), truth-trace selection, and weighted first/second
moments used for price distribution estimation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .grid_model import PowerSystem

PROBABILITY_TOL = 1e-9


@dataclass(frozen=True)
class ScenarioSet:
    """Weighted hourly availability scenarios for one generator."""

    generator: str
    scenario_ids: tuple[str, ...]
    probabilities: np.ndarray  # (M,)
    traces: np.ndarray  # (M, T) MW
    hour_index: tuple[datetime, ...]

    def __post_init__(self):
        if len(self.scenario_ids) != self.traces.shape[0]:
            raise ValueError("one trace per scenario id required")
        if self.traces.shape[1] != len(self.hour_index):
            raise ValueError("trace length must match hour index")
        if np.any(self.probabilities <= 0):
            raise ValueError("scenario probabilities must be strictly positive")
        if abs(float(self.probabilities.sum()) - 1.0) > PROBABILITY_TOL:
            raise ValueError("scenario probabilities must sum to 1")

    @property
    def n_scenarios(self) -> int:
        return len(self.scenario_ids)

    def trace(self, scenario_id: str) -> np.ndarray:
        try:
            i = self.scenario_ids.index(scenario_id)
        except ValueError:
            raise KeyError(
                f"generator {self.generator}: unknown scenario {scenario_id!r}"
            ) from None
        return self.traces[i]

    def hour_values(self, hour: datetime) -> np.ndarray:
        """Scenario values at one timestamp."""
        t = self.hour_index.index(hour)
        return self.traces[:, t]


@dataclass(frozen=True)
class TruthTrace:
    """The availability trace revealed at real-time clearing."""

    generator: str
    trace: np.ndarray


def load_scenarios(path: str | Path, system: PowerSystem) -> dict[str, ScenarioSet]:
    """Read ``scenarios.csv`` rows into per-generator scenario sets.

    Columns: ``gen_id,scenario_id,timestamp,available_mw[,probability]``.
    Hours must exactly cover ``system.hour_index``; probabilities default to
    uniform ``1/M`` when the column is absent or empty.  Values above a
    unit's nameplate, unknown generators, and misaligned hours raise
    :class:`DataFormatError`.
    """
    path = Path(path)
    if not path.is_file():
        raise DataFormatError("file not found", file=path)
    per_gen: dict[str, dict[str, dict[datetime, float]]] = {}
    probs: dict[tuple[str, str], float | None] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {
            "gen_id",
            "scenario_id",
            "timestamp",
            "available_mw",
        }.issubset(reader.fieldnames):
            raise DataFormatError(
                "columns gen_id,scenario_id,timestamp,available_mw required",
                file=path,
                line=1,
            )
        has_prob = "probability" in reader.fieldnames
        for row in reader:
            line = reader.line_num
            gen_id = row["gen_id"].strip()
            if gen_id not in system.gen_index:
                raise DataFormatError(
                    f"unknown generator {gen_id!r}", file=path, line=line, column="gen_id"
                )
            gen = system.generator(gen_id)
            try:
                ts = datetime.fromisoformat(row["timestamp"])
            except ValueError:
                raise DataFormatError(
                    f"bad timestamp {row['timestamp']!r}",
                    file=path,
                    line=line,
                    column="timestamp",
                ) from None
            if ts not in system.hour_pos:
                raise DataFormatError(
                    f"timestamp {ts.isoformat()} outside the system hour index",
                    file=path,
                    line=line,
                    column="timestamp",
                )
            try:
                mw = float(row["available_mw"])
            except ValueError:
                raise DataFormatError(
                    f"expected a number, got {row['available_mw']!r}",
                    file=path,
                    line=line,
                    column="available_mw",
                ) from None
            if mw < 0 or mw > gen.p_max + 1e-9:
                raise DataFormatError(
                    f"{mw} MW outside [0, nameplate {gen.p_max}] for {gen_id}",
                    file=path,
                    line=line,
                    column="available_mw",
                )
            sid = row["scenario_id"].strip()
            per_gen.setdefault(gen_id, {}).setdefault(sid, {})[ts] = mw
            if has_prob:
                raw = (row.get("probability") or "").strip()
                p = float(raw) if raw else None
                prev = probs.get((gen_id, sid))
                if prev is not None and p is not None and abs(prev - p) > PROBABILITY_TOL:
                    raise DataFormatError(
                        f"inconsistent probability for {gen_id}/{sid}",
                        file=path,
                        line=line,
                        column="probability",
                    )
                probs[(gen_id, sid)] = p if p is not None else prev

    if not per_gen:
        raise DataFormatError("no scenario rows", file=path)

    out: dict[str, ScenarioSet] = {}
    for gen_id, by_scenario in per_gen.items():
        sids = tuple(sorted(by_scenario))
        traces = np.empty((len(sids), len(system.hour_index)))
        for i, sid in enumerate(sids):
            series = by_scenario[sid]
            for t, ts in enumerate(system.hour_index):
                if ts not in series:
                    raise DataFormatError(
                        f"{gen_id}/{sid} missing hour {ts.isoformat()}", file=path
                    )
                traces[i, t] = series[ts]
        raw_probs = [probs.get((gen_id, sid)) for sid in sids]
        if any(p is None for p in raw_probs):
            if not all(p is None for p in raw_probs):
                raise DataFormatError(
                    f"generator {gen_id}: probability given for only some scenarios",
                    file=path,
                )
            p_arr = np.full(len(sids), 1.0 / len(sids))
        else:
            p_arr = np.asarray(raw_probs, dtype=float)
            if abs(float(p_arr.sum()) - 1.0) > 1e-6:
                raise DataFormatError(
                    f"generator {gen_id}: probabilities sum to {p_arr.sum()}", file=path
                )
            p_arr = p_arr / p_arr.sum()
        out[gen_id] = ScenarioSet(
            generator=gen_id,
            scenario_ids=sids,
            probabilities=p_arr,
            traces=traces,
            hour_index=system.hour_index,
        )
    return out


def weighted_percentile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Weighted empirical inverse CDF with linear interpolation.

    Sample points sit at the midpoints of their cumulative weight mass;
    queries outside the covered range clamp to the extreme order statistics,
    so ``q=0`` and ``q=100`` return the exact min and max.
    """
    if not 0.0 <= q <= 100.0:
        raise ValueError("percentile must lie in [0, 100]")
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    w = w / w.sum()
    cum = np.cumsum(w)
    centers = cum - w / 2.0
    return float(np.interp(q / 100.0, centers, v))


def percentile_trace(scenario_set: ScenarioSet, q: float) -> np.ndarray:
    """Per-hour weighted percentile of the scenario fan."""
    traces = scenario_set.traces
    out = np.empty(traces.shape[1])
    for t in range(traces.shape[1]):
        out[t] = weighted_percentile(traces[:, t], scenario_set.probabilities, q)
    return out


def max_trace(scenario_set: ScenarioSet) -> np.ndarray:
    """Per-hour maximum across scenarios (equals the 100th percentile)."""
    return scenario_set.traces.max(axis=0)


def median_trace(scenario_set: ScenarioSet) -> np.ndarray:
    return percentile_trace(scenario_set, 50.0)


def truth_trace(scenario_set: ScenarioSet, scenario_id: str) -> TruthTrace:
    """Designate one member scenario as the realized availability."""
    return TruthTrace(
        generator=scenario_set.generator,
        trace=scenario_set.trace(scenario_id).copy(),
    )


def empirical_moments(
    samples: np.ndarray | list, weights: np.ndarray | list | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean vector and population covariance matrix.

    ``samples`` is an ``(n, d)`` array (or list of equal-length vectors);
    the covariance is normalized by the total weight, symmetrized against
    round-off, and zero for a single sample.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("at least one sample required")
    n = x.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError("one weight per sample required")
        w = w / w.sum()
    mean = w @ x
    centered = x - mean
    cov = centered.T @ (centered * w[:, None])
    cov = (cov + cov.T) / 2.0
    return mean, cov
