"""Two-settlement payments and category-level statistics.

Each generator-hour is paid its day-ahead dispatch at the day-ahead price
plus the real-time deviation at the real-time price, both taken at the
generator's bus.  Category summaries reduce per-run totals across truth
scenarios with population moments.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .errors import GridsettleError
from .grid_model import CATEGORY_ORDER, Category, PowerSystem
from .market_core.orchestrate import SimulationRun


@dataclass(frozen=True)
class SettlementRecord:
    generator: str
    hour: datetime
    da_dispatch: float
    rt_dispatch: float
    da_lmp: float
    rt_lmp: float
    revenue: float


@dataclass(frozen=True)
class CategorySummary:
    category: Category
    redispatch_gwh: float
    payment_mean: float
    payment_std: float


def settle(run: SimulationRun, system: PowerSystem) -> list[SettlementRecord]:
    """One record per generator and binding hour of the run.

    revenue = da_lmp * da_dispatch + rt_lmp * (rt_dispatch - da_dispatch),
    evaluated exactly as written so the reconstruction identity is
    bit-exact.
    """
    records: list[SettlementRecord] = []
    for da, rt in zip(run.day_ahead, run.real_time):
        if da.binding_hours != rt.hours[: rt.binding]:
            raise GridsettleError(
                "day-ahead and real-time stages cover different binding hours"
            )
        bus_row = [
            da.bus_ids.index(system.generator(gid).bus) for gid in da.gen_ids
        ]
        for g, gid in enumerate(da.gen_ids):
            n = bus_row[g]
            for t, hour in enumerate(da.binding_hours):
                da_p = float(da.dispatch[g, t])
                rt_p = float(rt.dispatch[g, t])
                da_l = float(da.lmps[n, t])
                rt_l = float(rt.lmps[n, t])
                records.append(
                    SettlementRecord(
                        generator=gid,
                        hour=hour,
                        da_dispatch=da_p,
                        rt_dispatch=rt_p,
                        da_lmp=da_l,
                        rt_lmp=rt_l,
                        revenue=da_l * da_p + rt_l * (rt_p - da_p),
                    )
                )
    return records


def aggregate(
    per_run_records: Sequence[Sequence[SettlementRecord]], system: PowerSystem
) -> list[CategorySummary]:
    """Category rows: mean redispatch energy and payment moments across runs.

    Redispatch is the mean over runs of the summed (rt - da) energy in GWh;
    payments are the mean and population standard deviation over runs of
    the summed revenue.
    """
    if not per_run_records:
        raise GridsettleError("aggregate needs at least one settled run")
    categories = [
        c for c in CATEGORY_ORDER if any(g.category == c for g in system.generators)
    ]
    by_gen = {g.id: g.category for g in system.generators}
    out: list[CategorySummary] = []
    for cat in categories:
        energy = np.zeros(len(per_run_records))
        pay = np.zeros(len(per_run_records))
        for r, records in enumerate(per_run_records):
            for rec in records:
                if by_gen[rec.generator] == cat:
                    energy[r] += rec.rt_dispatch - rec.da_dispatch
                    pay[r] += rec.revenue
        out.append(
            CategorySummary(
                category=cat,
                redispatch_gwh=float(energy.mean()) / 1000.0,
                payment_mean=float(pay.mean()),
                payment_std=float(pay.std()),
            )
        )
    return out
