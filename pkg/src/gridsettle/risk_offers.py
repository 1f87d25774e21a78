"""Wind offer construction: percentile caps and CVaR-optimal curves.

The risk-aware path follows three steps: estimate a per-hour Gaussian over
(day-ahead, real-time) price pairs from centralized median-offer runs,
sample that distribution jointly with the wind scenario fan, and pick the
quadratic offer coefficients (a, b) maximizing the CVaR of hourly profit by
exhaustive grid search with local refinement.  Everything is seeded and the
per-cell RNG split is stable, so serial and parallel sweeps agree exactly.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, GridsettleError
from .grid_model import PowerSystem
from .market_core.types import OfferCurve
from .scenario_engine import ScenarioSet, empirical_moments, percentile_trace

_SEED_MASK = (1 << 63) - 1


def cell_seed(root_seed: int, gen_id: str, hour: datetime) -> int:
    """Stable per-(generator, hour) RNG seed split from the root seed."""
    digest = hashlib.blake2b(
        f"{gen_id}|{hour.isoformat()}".encode(), digest_size=8
    ).digest()
    return (int(root_seed) ^ int.from_bytes(digest, "big")) & _SEED_MASK


@dataclass(frozen=True)
class RiskConfig:
    """Search settings for the CVaR offer optimizer.

    When ``a_bounds`` / ``b_bounds`` are omitted they are derived from the
    sampled prices: b up to the largest day-ahead draw, a up to the slope
    that prices the final MW before ``q_floor`` of output at that price.
    Both ceilings are floored at 1.0 so an all-zero price distribution
    still leaves the grid searchable.
    """

    beta: float
    n_price_samples: int = 100
    rng_seed: int = 0
    a_bounds: tuple[float, float] | None = None
    b_bounds: tuple[float, float] | None = None
    grid_points: int = 40
    refine_rounds: int = 3
    refine_points: int = 15
    q_floor: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if self.n_price_samples < 1:
            raise ConfigError("n_price_samples must be at least 1")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be at least 2")
        if self.a_bounds is not None and self.a_bounds[0] < 0:
            raise ConfigError("a search bounds must start at or above 0")
        if self.q_floor <= 0:
            raise ConfigError("q_floor must be positive")


@dataclass(frozen=True)
class PriceDistribution:
    """Per-hour mean and covariance of (day-ahead, real-time) prices."""

    generator: str
    hours: tuple[datetime, ...]
    mean: np.ndarray  # (T, 2)
    cov: np.ndarray  # (T, 2, 2)

    def __post_init__(self):
        T = len(self.hours)
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (T, 2) or cov.shape != (T, 2, 2):
            raise ValueError("price distribution arrays do not match the hour count")
        if np.abs(cov - cov.transpose(0, 2, 1)).max() > 1e-9:
            raise ValueError("price covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def hour_pos(self, hour: datetime) -> int:
        try:
            return self.hours.index(hour)
        except ValueError:
            raise KeyError(
                f"price distribution for {self.generator} does not cover "
                f"{hour.isoformat()}"
            ) from None


@dataclass(frozen=True)
class ProfitSample:
    probability: float
    da_price: float
    rt_price: float
    wind_available: float
    dispatched: float
    shortfall: float
    profit: float


@dataclass(frozen=True)
class HourOffer:
    """Optimizer output for one generator-hour."""

    hour: datetime
    a: float
    b: float
    q_max: float
    cvar_value: float


def percentile_offer(scenario_set: ScenarioSet, q: float) -> OfferCurve:
    """Zero-price offer capped at the q-th percentile of the scenario fan."""
    hours = scenario_set.hour_index
    n = len(hours)
    zeros = np.zeros(n)
    return OfferCurve(
        generator=scenario_set.generator,
        hours=tuple(hours),
        a=zeros.copy(),
        b=zeros.copy(),
        c=zeros.copy(),
        q_min=zeros.copy(),
        q_max=percentile_trace(scenario_set, q),
    )


def _normalized_weights(n: int, weights: Sequence[float] | None) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative and sum to a positive value")
    return w / w.sum()


def cvar(values: Iterable[float], beta: float, weights: Sequence[float] | None = None) -> float:
    """Expected profit over the worst (1-beta) probability mass.

    Sorts ascending and averages the leading tail, splitting the boundary
    atom fractionally; beta=0 reduces to the plain weighted mean.
    """
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size == 0:
        raise ValueError("cvar of an empty sample set")
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    w = _normalized_weights(v.size, weights)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    tail = 1.0 - beta
    cum = np.cumsum(w)
    taken = np.minimum(w, np.maximum(0.0, tail - (cum - w)))
    return float((v @ taken) / tail)


def value_at_risk(
    values: Iterable[float], beta: float, weights: Sequence[float] | None = None
) -> float:
    """Profit quantile at cumulative probability 1-beta (the tail boundary)."""
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size == 0:
        raise ValueError("value at risk of an empty sample set")
    w = _normalized_weights(v.size, weights)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, (1.0 - beta) - 1e-12))
    return float(v[min(idx, v.size - 1)])


def cvar_min_form(
    values: Iterable[float], beta: float, weights: Sequence[float] | None = None
) -> float:
    """CVaR via the variational form: -min over alpha of the loss objective.

    The minimum over alpha of ``alpha + E[(loss - alpha)+] / (1-beta)`` with
    ``loss = -profit`` is attained at a sample point, so scanning sample
    losses as candidates is exact.  Kept as an independent cross-check of
    the sort-based ``cvar``.
    """
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size == 0:
        raise ValueError("cvar of an empty sample set")
    w = _normalized_weights(v.size, weights)
    loss = -v
    alphas = loss[:, None]  # candidates along axis 0
    objective = alphas[:, 0] + (w * np.maximum(loss[None, :] - alphas, 0.0)).sum(axis=1) / (
        1.0 - beta
    )
    return float(-objective.min())


def dispatched_quantity(a, b, da_price, q_max):
    """Merit-order outcome of a quadratic offer at a given clearing price.

    ``clip((price - b) / (2a), 0, q_max)``; the a=0 limit dispatches the
    full cap whenever the price reaches b (ties included, by convention).
    Broadcasts over array arguments.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    price = np.asarray(da_price, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (price - b) / (2.0 * a)
    step = np.where(price >= b, q_max, 0.0)
    d = np.where(a == 0, step, d)
    out = np.clip(d, 0.0, q_max)
    if out.ndim == 0:
        return float(out)
    return out


def profit_samples(
    a: float,
    b: float,
    q_max: float,
    price_samples,
    wind_values,
) -> list[ProfitSample]:
    """Joint profit distribution of an offer over prices x wind outcomes.

    ``price_samples`` rows are (da, rt) with uniform probability or
    (da, rt, probability); ``wind_values`` rows are (mw, probability).
    The two sources are combined as an independent product.
    """
    prices = np.atleast_2d(np.asarray(price_samples, dtype=float))
    if prices.shape[1] == 2:
        prices = np.column_stack([prices, np.full(prices.shape[0], 1.0 / prices.shape[0])])
    wind = np.atleast_2d(np.asarray(wind_values, dtype=float))
    out: list[ProfitSample] = []
    for da, rt, pw in prices:
        d = float(dispatched_quantity(a, b, da, q_max))
        for mw, ww in wind:
            short = max(0.0, d - mw)
            out.append(
                ProfitSample(
                    probability=float(pw * ww),
                    da_price=float(da),
                    rt_price=float(rt),
                    wind_available=float(mw),
                    dispatched=d,
                    shortfall=short,
                    profit=float(da * d - rt * short),
                )
            )
    return out


def sample_prices(
    dist: PriceDistribution, hour: datetime, n: int, seed: int
) -> np.ndarray:
    """Draw n (da, rt) pairs from the hour's Gaussian, each with mass 1/n.

    The covariance is symmetrized and negative eigenvalues are clipped at
    zero before factorization, so a moment matrix that is PSD only up to
    rounding still samples cleanly.
    """
    if n < 1:
        raise ValueError("need at least one price sample")
    t = dist.hour_pos(hour)
    cov = 0.5 * (dist.cov[t] + dist.cov[t].T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() < -1e-9:
        raise ValueError(
            f"price covariance for {dist.generator} at {hour.isoformat()} "
            "is not positive semidefinite"
        )
    scale = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    z = np.random.default_rng(seed).standard_normal((n, 2))
    return dist.mean[t] + z @ scale.T


def _cvar_rows(profits: np.ndarray, weights: np.ndarray, beta: float) -> np.ndarray:
    """CVaR of each row of a (rows, samples) profit matrix, shared weights."""
    order = np.argsort(profits, axis=1, kind="stable")
    v = np.take_along_axis(profits, order, axis=1)
    w = weights[order]
    tail = 1.0 - beta
    cum = np.cumsum(w, axis=1)
    taken = np.minimum(w, np.maximum(0.0, tail - (cum - w)))
    return (v * taken).sum(axis=1) / tail


def _grid_cvar(
    a_vals: np.ndarray,
    b_vals: np.ndarray,
    q_max: float,
    prices: np.ndarray,
    wind_v: np.ndarray,
    wind_w: np.ndarray,
    beta: float,
) -> np.ndarray:
    """CVaR surface over the (a, b) grid, vectorized over every sample."""
    da = prices[:, 0]
    rt = prices[:, 1]
    d = dispatched_quantity(
        a_vals[:, None, None], b_vals[None, :, None], da[None, None, :], q_max
    )
    short = np.maximum(d[..., None] - wind_v, 0.0)
    profit = da[None, None, :, None] * d[..., None] - rt[None, None, :, None] * short
    flat = profit.reshape(a_vals.size * b_vals.size, -1)
    joint_w = (np.full(da.size, 1.0 / da.size)[:, None] * wind_w[None, :]).ravel()
    return _cvar_rows(flat, joint_w, beta).reshape(a_vals.size, b_vals.size)


def optimize_offer(
    scenario_set: ScenarioSet,
    dist: PriceDistribution,
    config: RiskConfig,
    hour: datetime,
) -> HourOffer:
    """Best (a, b) for one hour by grid search with local refinement.

    The quantity cap is the highest scenario value for the hour.  Ties on
    the grid resolve to the first cell in scan order (a-major, both axes
    ascending), and refinement only replaces the incumbent on a strict
    improvement, so results are deterministic for a given seed.
    """
    wind_v = scenario_set.hour_values(hour)
    wind_w = scenario_set.probabilities
    q_max = float(wind_v.max())
    prices = sample_prices(
        dist, hour, config.n_price_samples,
        cell_seed(config.rng_seed, scenario_set.generator, hour),
    )

    lam_hi = max(float(prices[:, 0].max()), 1.0)
    a_lo, a_hi = config.a_bounds if config.a_bounds else (0.0, lam_hi / (2.0 * config.q_floor))
    b_lo, b_hi = config.b_bounds if config.b_bounds else (0.0, lam_hi)

    a_vals = np.linspace(a_lo, a_hi, config.grid_points)
    b_vals = np.linspace(b_lo, b_hi, config.grid_points)
    surface = _grid_cvar(a_vals, b_vals, q_max, prices, wind_v, wind_w, config.beta)
    flat_best = int(np.argmax(surface))
    i, j = divmod(flat_best, b_vals.size)
    best_a, best_b = float(a_vals[i]), float(b_vals[j])
    best_val = float(surface[i, j])

    step_a = a_vals[1] - a_vals[0] if a_vals.size > 1 else 0.0
    step_b = b_vals[1] - b_vals[0] if b_vals.size > 1 else 0.0
    for _ in range(config.refine_rounds):
        if step_a == 0.0 and step_b == 0.0:
            break
        a_vals = np.linspace(
            max(a_lo, best_a - step_a), min(a_hi, best_a + step_a), config.refine_points
        )
        b_vals = np.linspace(
            max(b_lo, best_b - step_b), min(b_hi, best_b + step_b), config.refine_points
        )
        surface = _grid_cvar(a_vals, b_vals, q_max, prices, wind_v, wind_w, config.beta)
        flat = int(np.argmax(surface))
        i, j = divmod(flat, b_vals.size)
        if float(surface[i, j]) > best_val:
            best_a, best_b = float(a_vals[i]), float(b_vals[j])
            best_val = float(surface[i, j])
        step_a = a_vals[1] - a_vals[0] if a_vals.size > 1 else 0.0
        step_b = b_vals[1] - b_vals[0] if b_vals.size > 1 else 0.0

    return HourOffer(hour=hour, a=best_a, b=best_b, q_max=q_max, cvar_value=best_val)


def estimate_price_distribution(
    runs: Sequence, system: PowerSystem
) -> dict[str, PriceDistribution]:
    """Per-hour price moments at each variable generator's bus.

    Collects the binding-hour (da, rt) LMP pair from every run (one per
    truth scenario) and reduces them with ``empirical_moments``, giving one
    distribution per variable generator.
    """
    if not runs:
        raise ValueError("need at least one run to estimate prices")
    hours0: tuple[datetime, ...] | None = None
    out: dict[str, PriceDistribution] = {}
    for gen in system.generators:
        if not gen.variable:
            continue
        n = system.bus_index[gen.bus]
        samples_per_hour: dict[datetime, list[tuple[float, float]]] = {}
        for run in runs:
            for da_res, rt_res in zip(run.day_ahead, run.real_time):
                rt_pos = {h: t for t, h in enumerate(rt_res.hours)}
                for t, h in enumerate(da_res.binding_hours):
                    pair = (
                        float(da_res.lmps[n, t]),
                        float(rt_res.lmps[n, rt_pos[h]]),
                    )
                    samples_per_hour.setdefault(h, []).append(pair)
        hours = tuple(sorted(samples_per_hour))
        if hours0 is None:
            hours0 = hours
        elif hours != hours0:
            raise GridsettleError("runs do not share a common hour index")
        mean = np.zeros((len(hours), 2))
        cov = np.zeros((len(hours), 2, 2))
        for t, h in enumerate(hours):
            mean[t], cov[t] = empirical_moments(np.asarray(samples_per_hour[h]))
        out[gen.id] = PriceDistribution(generator=gen.id, hours=hours, mean=mean, cov=cov)
    return out


def optimize_generator_hours(
    scenario_set: ScenarioSet,
    dist: PriceDistribution,
    config: RiskConfig,
    hours: Sequence[datetime],
) -> list[HourOffer]:
    """Run the hourly optimizer across ``hours``, reusing the last optimized
    coefficients for hours past the estimated price range (the trailing
    look-ahead stubs), with the cap still tracking the scenario maximum."""
    offers: list[HourOffer] = []
    last: HourOffer | None = None
    for hour in hours:
        try:
            dist.hour_pos(hour)
        except KeyError:
            cap = float(scenario_set.hour_values(hour).max())
            carried = last or HourOffer(hour, 0.0, 0.0, cap, 0.0)
            offers.append(HourOffer(hour, carried.a, carried.b, cap, float("nan")))
            continue
        last = optimize_offer(scenario_set, dist, config, hour)
        offers.append(last)
    return offers


def offer_curve_from_hourly(
    gen_id: str, hours: Sequence[datetime], hourly: Sequence[HourOffer]
) -> OfferCurve:
    """Assemble per-hour optimizer output into one OfferCurve (c=0, q_min=0)."""
    n = len(hourly)
    return OfferCurve(
        generator=gen_id,
        hours=tuple(hours),
        a=np.array([h.a for h in hourly]),
        b=np.array([h.b for h in hourly]),
        c=np.zeros(n),
        q_min=np.zeros(n),
        q_max=np.array([h.q_max for h in hourly]),
    )


def build_risk_offers(
    system: PowerSystem,
    scenario_sets: Mapping[str, ScenarioSet],
    dists: Mapping[str, PriceDistribution],
    config: RiskConfig,
) -> dict[str, OfferCurve]:
    """CVaR-optimal OfferCurves for every generator with a scenario fan."""
    out: dict[str, OfferCurve] = {}
    hours = tuple(system.hour_index)
    for gen_id in sorted(scenario_sets):
        if gen_id not in dists:
            raise GridsettleError(f"no price distribution for generator {gen_id}")
        hourly = optimize_generator_hours(
            scenario_sets[gen_id], dists[gen_id], config, hours
        )
        out[gen_id] = offer_curve_from_hourly(gen_id, hours, hourly)
    return out
