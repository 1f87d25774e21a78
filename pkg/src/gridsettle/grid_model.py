"""Power system domain model and CSV ingestion.

A :class:`PowerSystem` is an immutable description of a transmission network
(buses, branches), a generator fleet, and hourly bus loads over a simulation
window.  Systems are normally loaded from a directory of four CSV files
(``buses.csv``, ``branches.csv``, ``generators.csv``, ``loads.csv``) via
:func:`load_system`, which guarantees referential integrity and all the
invariants checked by :func:`validate_system`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataFormatError

HOUR = timedelta(hours=1)


class Category(str, Enum):
    """Generator fleet category."""

    COAL = "coal"
    GAS_CC = "gas_cc"
    GAS_CT = "gas_ct"
    HYDRO = "hydro"
    NUCLEAR = "nuclear"
    OIL_CT = "oil_ct"
    OIL_STEAM = "oil_steam"
    WIND = "wind"


#: Canonical category ordering used in reports.
CATEGORY_ORDER = tuple(Category)


@dataclass(frozen=True)
class Bus:
    id: str
    name: str


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    reactance_pu: float
    capacity_mw: float


@dataclass(frozen=True)
class Generator:
    """One generating unit with its quadratic cost and commitment data.

    The variable cost of running at ``p`` MW for one hour is
    ``cost_quadratic * p**2 + cost_linear * p + cost_constant`` dollars;
    ``cost_quadratic >= 0`` keeps the curve convex.  Units with
    ``committable=False`` are always online.  ``variable=True`` marks
    weather-driven units whose hourly availability comes from scenario data
    rather than the static ``p_max`` nameplate.
    """

    id: str
    bus: str
    category: Category
    p_min: float
    p_max: float
    ramp: float
    cost_quadratic: float
    cost_linear: float
    cost_constant: float
    startup_cost: float
    shutdown_cost: float
    min_up: int
    min_down: int
    committable: bool
    fast_start: bool
    variable: bool


@dataclass(frozen=True)
class LoadProfile:
    """Hourly demand at one bus, aligned with the owning system's hour index."""

    bus: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class PowerSystem:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[LoadProfile, ...]
    hour_index: tuple[datetime, ...]

    @cached_property
    def bus_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def gen_ids(self) -> tuple[str, ...]:
        return tuple(g.id for g in self.generators)

    @cached_property
    def branch_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.branches)

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def gen_index(self) -> dict[str, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @cached_property
    def hour_pos(self) -> dict[datetime, int]:
        return {t: i for i, t in enumerate(self.hour_index)}

    @cached_property
    def reference_bus(self) -> str:
        """Angle reference: the lowest bus id."""
        return min(self.bus_ids)

    def generator(self, gen_id: str) -> Generator:
        return self.generators[self.gen_index[gen_id]]

    def wind_generators(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.variable)

    @cached_property
    def load_matrix(self) -> np.ndarray:
        """Bus-by-hour demand in MW, zero where a bus has no load profile."""
        out = np.zeros((len(self.buses), len(self.hour_index)))
        for lp in self.loads:
            out[self.bus_index[lp.bus], :] = lp.values
        return out

    def load_slice(self, start: datetime, n_hours: int) -> np.ndarray:
        i = self.hour_pos[start]
        return self.load_matrix[:, i : i + n_hours]


@dataclass
class ValidationReport:
    """Outcome of checking a system's invariants."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def validate_system(system: PowerSystem) -> ValidationReport:
    """Check every structural invariant of ``system``.

    Always returns a report; an empty one means the system is well-formed.
    """
    report = ValidationReport()
    seen_buses: set[str] = set()
    for bus in system.buses:
        if bus.id in seen_buses:
            report.add(f"bus {bus.id}: duplicate id")
        seen_buses.add(bus.id)

    seen: set[str] = set()
    for br in system.branches:
        if br.id in seen:
            report.add(f"branch {br.id}: duplicate id")
        seen.add(br.id)
        if br.from_bus == br.to_bus:
            report.add(f"branch {br.id}: endpoints must differ")
        for end in (br.from_bus, br.to_bus):
            if end not in seen_buses:
                report.add(f"branch {br.id}: unknown bus {end}")
        if not br.reactance_pu > 0:
            report.add(f"branch {br.id}: reactance must be strictly positive")
        if br.capacity_mw < 0:
            report.add(f"branch {br.id}: negative capacity")

    seen = set()
    for g in system.generators:
        if g.id in seen:
            report.add(f"generator {g.id}: duplicate id")
        seen.add(g.id)
        if g.bus not in seen_buses:
            report.add(f"generator {g.id}: unknown bus {g.bus}")
        if g.p_min < 0 or g.p_max < g.p_min:
            report.add(f"generator {g.id}: requires 0 <= p_min <= p_max")
        if g.ramp < 0:
            report.add(f"generator {g.id}: negative ramp")
        if g.cost_quadratic < 0:
            report.add(f"generator {g.id}: non-convex cost (quadratic term < 0)")
        if g.cost_constant < 0:
            report.add(f"generator {g.id}: negative fixed cost")
        if g.startup_cost < 0 or g.shutdown_cost < 0:
            report.add(f"generator {g.id}: negative startup/shutdown cost")
        if g.min_up < 0 or g.min_down < 0:
            report.add(f"generator {g.id}: negative min up/down time")
        if not g.committable and (
            g.startup_cost != 0 or g.shutdown_cost != 0 or g.min_up != 0 or g.min_down != 0
        ):
            report.add(
                f"generator {g.id}: non-committable unit must have zero "
                "startup/shutdown cost and min up/down time"
            )
        if g.variable and g.p_min != 0:
            report.add(f"generator {g.id}: variable unit must have zero p_min")

    n_hours = len(system.hour_index)
    for prev, cur in zip(system.hour_index, system.hour_index[1:]):
        if cur - prev != HOUR:
            report.add(f"hour index not a strict 1h progression at {cur.isoformat()}")
            break
    load_buses: set[str] = set()
    for lp in system.loads:
        if lp.bus in load_buses:
            report.add(f"load at bus {lp.bus}: duplicate profile")
        load_buses.add(lp.bus)
        if lp.bus not in seen_buses:
            report.add(f"load profile references unknown bus {lp.bus}")
        if len(lp.values) != n_hours:
            report.add(
                f"load at bus {lp.bus}: {len(lp.values)} values for {n_hours} hours"
            )
        if any(v < 0 for v in lp.values):
            report.add(f"load at bus {lp.bus}: negative demand")
    return report


# --- CSV ingestion ---------------------------------------------------------

BUS_COLUMNS = ("bus_id", "name")
BRANCH_COLUMNS = ("branch_id", "from_bus", "to_bus", "reactance_pu", "capacity_mw")
GENERATOR_COLUMNS = (
    "gen_id",
    "bus_id",
    "category",
    "pmin_mw",
    "pmax_mw",
    "ramp_mw_per_h",
    "c2",
    "c1",
    "c0",
    "startup_cost",
    "shutdown_cost",
    "min_up_h",
    "min_down_h",
    "committable",
    "fast_start",
    "variable",
)
LOAD_COLUMNS = ("bus_id", "timestamp", "load_mw")

_BOOL_VALUES = {"true": True, "1": True, "false": False, "0": False}


def _read_rows(path: Path, columns: tuple[str, ...]):
    if not path.is_file():
        raise DataFormatError("file not found", file=path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError("empty file, header row required", file=path)
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise DataFormatError(
                f"missing columns {missing}", file=path, line=1
            )
        for row in reader:
            yield reader.line_num, row


def _parse_float(row, key, path, line, minimum=None):
    raw = row[key]
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataFormatError(
            f"expected a number, got {raw!r}", file=path, line=line, column=key
        ) from None
    if not np.isfinite(value):
        raise DataFormatError(
            f"non-finite value {raw!r}", file=path, line=line, column=key
        )
    if minimum is not None and value < minimum:
        raise DataFormatError(
            f"value {value} below minimum {minimum}", file=path, line=line, column=key
        )
    return value


def _parse_int(row, key, path, line, minimum=0):
    raw = row[key]
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise DataFormatError(
            f"expected an integer, got {raw!r}", file=path, line=line, column=key
        ) from None
    if value < minimum:
        raise DataFormatError(
            f"value {value} below minimum {minimum}", file=path, line=line, column=key
        )
    return value


def _parse_bool(row, key, path, line):
    raw = str(row[key]).strip().lower()
    if raw not in _BOOL_VALUES:
        raise DataFormatError(
            f"expected true/false, got {row[key]!r}", file=path, line=line, column=key
        )
    return _BOOL_VALUES[raw]


def _parse_timestamp(row, key, path, line):
    try:
        return datetime.fromisoformat(row[key])
    except (TypeError, ValueError):
        raise DataFormatError(
            f"expected an ISO-8601 timestamp, got {row[key]!r}",
            file=path,
            line=line,
            column=key,
        ) from None


def load_system(root_path: str | Path) -> PowerSystem:
    """Load and validate a :class:`PowerSystem` from a fixture directory.

    ``root_path`` must contain ``buses.csv``, ``branches.csv``,
    ``generators.csv``, and ``loads.csv``.  Raises :class:`DataFormatError`
    on any missing file, malformed row, unresolvable reference, or invariant
    violation; the returned system always passes :func:`validate_system`.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise DataFormatError("system directory not found", file=root)

    buses = []
    path = root / "buses.csv"
    for line, row in _read_rows(path, BUS_COLUMNS):
        buses.append(Bus(id=row["bus_id"].strip(), name=row["name"].strip()))
    if not buses:
        raise DataFormatError("no buses", file=path)

    branches = []
    path = root / "branches.csv"
    for line, row in _read_rows(path, BRANCH_COLUMNS):
        branches.append(
            Branch(
                id=row["branch_id"].strip(),
                from_bus=row["from_bus"].strip(),
                to_bus=row["to_bus"].strip(),
                reactance_pu=_parse_float(row, "reactance_pu", path, line),
                capacity_mw=_parse_float(row, "capacity_mw", path, line),
            )
        )

    generators = []
    path = root / "generators.csv"
    for line, row in _read_rows(path, GENERATOR_COLUMNS):
        raw_cat = row["category"].strip()
        try:
            category = Category(raw_cat)
        except ValueError:
            raise DataFormatError(
                f"unknown category {raw_cat!r}", file=path, line=line, column="category"
            ) from None
        generators.append(
            Generator(
                id=row["gen_id"].strip(),
                bus=row["bus_id"].strip(),
                category=category,
                p_min=_parse_float(row, "pmin_mw", path, line),
                p_max=_parse_float(row, "pmax_mw", path, line),
                ramp=_parse_float(row, "ramp_mw_per_h", path, line),
                cost_quadratic=_parse_float(row, "c2", path, line),
                cost_linear=_parse_float(row, "c1", path, line),
                cost_constant=_parse_float(row, "c0", path, line),
                startup_cost=_parse_float(row, "startup_cost", path, line),
                shutdown_cost=_parse_float(row, "shutdown_cost", path, line),
                min_up=_parse_int(row, "min_up_h", path, line),
                min_down=_parse_int(row, "min_down_h", path, line),
                committable=_parse_bool(row, "committable", path, line),
                fast_start=_parse_bool(row, "fast_start", path, line),
                variable=_parse_bool(row, "variable", path, line),
            )
        )
        g = generators[-1]
        if g.cost_quadratic < 0:
            raise DataFormatError(
                "non-convex cost (c2 < 0)", file=path, line=line, column="c2"
            )
    if not generators:
        raise DataFormatError("no generators", file=path)

    path = root / "loads.csv"
    per_bus: dict[str, dict[datetime, float]] = {}
    stamps: set[datetime] = set()
    for line, row in _read_rows(path, LOAD_COLUMNS):
        bus = row["bus_id"].strip()
        ts = _parse_timestamp(row, "timestamp", path, line)
        mw = _parse_float(row, "load_mw", path, line, minimum=0.0)
        slot = per_bus.setdefault(bus, {})
        if ts in slot:
            raise DataFormatError(
                f"duplicate load for bus {bus} at {ts.isoformat()}",
                file=path,
                line=line,
            )
        slot[ts] = mw
        stamps.add(ts)
    if not per_bus:
        raise DataFormatError("no load rows", file=path)

    hour_index = tuple(sorted(stamps))
    for bus, series in per_bus.items():
        missing = [t for t in hour_index if t not in series]
        if missing:
            raise DataFormatError(
                f"bus {bus} missing load at {missing[0].isoformat()}", file=path
            )
    loads = tuple(
        LoadProfile(bus=bus, values=tuple(per_bus[bus][t] for t in hour_index))
        for bus in sorted(per_bus)
    )

    system = PowerSystem(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        loads=loads,
        hour_index=hour_index,
    )
    report = validate_system(system)
    if not report.ok:
        raise DataFormatError(
            "invalid system: " + "; ".join(report.violations), file=root
        )
    return system


def save_system(system: PowerSystem, root_path: str | Path) -> None:
    """Write ``system`` back out in the same CSV schema ``load_system`` reads."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)

    def fmt(x: float) -> str:
        return format(x, "g") if x != int(x) else str(int(x))

    with (root / "buses.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BUS_COLUMNS)
        for b in system.buses:
            w.writerow([b.id, b.name])
    with (root / "branches.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BRANCH_COLUMNS)
        for br in system.branches:
            w.writerow([br.id, br.from_bus, br.to_bus, fmt(br.reactance_pu), fmt(br.capacity_mw)])
    with (root / "generators.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(GENERATOR_COLUMNS)
        for g in system.generators:
            w.writerow(
                [
                    g.id,
                    g.bus,
                    g.category.value,
                    fmt(g.p_min),
                    fmt(g.p_max),
                    fmt(g.ramp),
                    fmt(g.cost_quadratic),
                    fmt(g.cost_linear),
                    fmt(g.cost_constant),
                    fmt(g.startup_cost),
                    fmt(g.shutdown_cost),
                    g.min_up,
                    g.min_down,
                    str(g.committable).lower(),
                    str(g.fast_start).lower(),
                    str(g.variable).lower(),
                ]
            )
    with (root / "loads.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOAD_COLUMNS)
        for lp in system.loads:
            for ts, mw in zip(system.hour_index, lp.values):
                w.writerow([lp.bus, ts.isoformat(), fmt(mw)])


def category_capacity(system: PowerSystem) -> dict[Category, tuple[float, int]]:
    """Total nameplate MW and unit count per category."""
    out: dict[Category, tuple[float, int]] = {}
    for g in system.generators:
        mw, n = out.get(g.category, (0.0, 0))
        out[g.category] = (mw + g.p_max, n + 1)
    return out
