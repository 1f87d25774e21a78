"""Domain types shared by the market clearing engine."""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum

import numpy as np

from ..grid_model import Generator


class Stage(str, Enum):
    DAY_AHEAD = "day_ahead"
    REAL_TIME = "real_time"


@dataclass(frozen=True)
class OfferCurve:
    """Hourly quadratic marginal-cost offer for one generator.

    The marginal price at output ``q`` in hour ``t`` is ``2*a[t]*q + b[t]``;
    ``c[t]`` is the fixed hourly cost incurred while online, and dispatch is
    bounded to ``[q_min[t], q_max[t]]``.  ``a`` must be non-negative so the
    clearing objective stays convex.
    """

    generator: str
    hours: tuple[datetime, ...]
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray

    def __post_init__(self):
        n = len(self.hours)
        for name in ("a", "b", "c", "q_min", "q_max"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"offer curve field {name} must have {n} entries")
            object.__setattr__(self, name, arr)
        if np.any(self.a < 0):
            raise ValueError(f"offer for {self.generator}: quadratic term must be >= 0")
        if np.any(self.q_min < 0) or np.any(self.q_max < self.q_min):
            raise ValueError(
                f"offer for {self.generator}: requires 0 <= q_min <= q_max"
            )

    @classmethod
    def from_generator(cls, gen: Generator, hours: tuple[datetime, ...]) -> "OfferCurve":
        """Constant-in-time offer reflecting the unit's static cost curve."""
        n = len(hours)
        return cls(
            generator=gen.id,
            hours=tuple(hours),
            a=np.full(n, gen.cost_quadratic),
            b=np.full(n, gen.cost_linear),
            c=np.full(n, gen.cost_constant),
            q_min=np.full(n, gen.p_min),
            q_max=np.full(n, gen.p_max),
        )

    def window(self, start: datetime, n_hours: int) -> "OfferCurve":
        """Restrict the curve to ``n_hours`` starting at ``start``."""
        try:
            i = self.hours.index(start)
        except ValueError:
            raise KeyError(
                f"offer for {self.generator} does not cover {start.isoformat()}"
            ) from None
        if i + n_hours > len(self.hours):
            raise KeyError(
                f"offer for {self.generator} covers only "
                f"{len(self.hours) - i} hours from {start.isoformat()}"
            )
        sl = slice(i, i + n_hours)
        return replace(
            self,
            hours=self.hours[sl],
            a=self.a[sl],
            b=self.b[sl],
            c=self.c[sl],
            q_min=self.q_min[sl],
            q_max=self.q_max[sl],
        )

    def with_quantity_cap(self, q_max: np.ndarray) -> "OfferCurve":
        """Replace the per-hour quantity cap (used when truth is revealed)."""
        cap = np.asarray(q_max, dtype=float)
        return replace(self, q_max=cap, q_min=np.minimum(self.q_min, cap))


@dataclass(frozen=True)
class CommitmentSchedule:
    """Binary on/off schedule with startup/shutdown indicators.

    Indicators are always reconstructed from status transitions, so
    ``startup[g, t] == max(0, status[g, t] - status[g, t-1])`` holds exactly
    (the hour before the schedule comes from ``initial_status``).
    """

    gen_ids: tuple[str, ...]
    hours: tuple[datetime, ...]
    status: np.ndarray  # (G, T) int8
    startup: np.ndarray
    shutdown: np.ndarray

    @classmethod
    def from_status(
        cls,
        gen_ids: tuple[str, ...],
        hours: tuple[datetime, ...],
        status: np.ndarray,
        initial_status: np.ndarray,
    ) -> "CommitmentSchedule":
        status = np.asarray(status, dtype=np.int8)
        prev = np.concatenate(
            [np.asarray(initial_status, dtype=np.int8)[:, None], status[:, :-1]], axis=1
        )
        delta = status.astype(np.int16) - prev.astype(np.int16)
        return cls(
            gen_ids=tuple(gen_ids),
            hours=tuple(hours),
            status=status,
            startup=np.maximum(delta, 0).astype(np.int8),
            shutdown=np.maximum(-delta, 0).astype(np.int8),
        )

    def status_of(self, gen_id: str) -> np.ndarray:
        return self.status[self.gen_ids.index(gen_id)]


@dataclass(frozen=True)
class MarketResult:
    """Dispatch, commitments, flows, angles, and prices for one clearing stage.

    Arrays are indexed ``[entity, hour]`` following ``gen_ids`` /
    ``bus_ids`` / ``branch_ids`` order over the solved ``hours``.  Only the
    first ``binding`` hours settle; LMP columns beyond them are NaN.
    """

    stage: Stage
    hours: tuple[datetime, ...]
    binding: int
    gen_ids: tuple[str, ...]
    bus_ids: tuple[str, ...]
    branch_ids: tuple[str, ...]
    dispatch: np.ndarray
    commitments: CommitmentSchedule
    flows: np.ndarray
    angles: np.ndarray
    lmps: np.ndarray
    shed: np.ndarray
    objective: float

    @property
    def binding_hours(self) -> tuple[datetime, ...]:
        return self.hours[: self.binding]

    def dispatch_of(self, gen_id: str) -> np.ndarray:
        return self.dispatch[self.gen_ids.index(gen_id)]

    def lmp_at(self, bus_id: str) -> np.ndarray:
        return self.lmps[self.bus_ids.index(bus_id)]


@dataclass(frozen=True)
class UnitState:
    """Commitment status, time spent in it, and dispatch entering a horizon."""

    status: int
    hours_in_state: int
    dispatch: float
