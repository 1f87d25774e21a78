"""Unit commitment with DC power flow, posed as a sparse mixed-binary LP.

Variable blocks, in column order: dispatch ``p[g,t]``, cost segments
``seg[g,t,k]``, commitment ``u[g,t]``, startup ``su[g,t]``, shutdown
``sd[g,t]``, bus angles ``theta[n,t]``, branch flows ``f[l,t]``, and load
shedding ``shed[n,t]``.  Equality rows come in a fixed order with the bus
balance block first, so balance duals (the LMPs) occupy the leading
``N*T`` positions of the dual vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from ..errors import GridsettleError
from ..grid_model import PowerSystem
from .pwl import base_cost, segment_widths_and_slopes
from .solver import LinearProgram, SolverContract
from .types import CommitmentSchedule, MarketResult, OfferCurve, Stage, UnitState

SHED_PRICE = 10_000.0  # $/MWh on the per-bus slack, far above any offer


@dataclass
class UcProblem:
    """A built clearing instance plus the index maps to unpack solutions."""

    lp: LinearProgram
    hours: tuple[datetime, ...]
    gen_ids: tuple[str, ...]
    bus_ids: tuple[str, ...]
    branch_ids: tuple[str, ...]
    k_segments: int
    committable: np.ndarray
    initial_status: np.ndarray
    p_cols: np.ndarray
    seg_cols: np.ndarray
    u_cols: np.ndarray
    su_cols: np.ndarray
    sd_cols: np.ndarray
    theta_cols: np.ndarray
    flow_cols: np.ndarray
    shed_cols: np.ndarray

    @property
    def n_balance_rows(self) -> int:
        return len(self.bus_ids) * len(self.hours)

    def dispatch_from(self, x: np.ndarray) -> np.ndarray:
        return x[self.p_cols]

    def status_from(self, x: np.ndarray) -> np.ndarray:
        return np.round(x[self.u_cols]).astype(np.int8)

    def flows_from(self, x: np.ndarray) -> np.ndarray:
        return x[self.flow_cols]

    def angles_from(self, x: np.ndarray) -> np.ndarray:
        return x[self.theta_cols]

    def shed_from(self, x: np.ndarray) -> np.ndarray:
        return x[self.shed_cols]

    def hour_cost(self, x: np.ndarray, t: int) -> float:
        """Objective contribution of hour ``t`` (segments, online, su/sd, shed)."""
        cols = np.concatenate(
            [
                self.seg_cols[:, t, :].ravel(),
                self.u_cols[:, t],
                self.su_cols[:, t],
                self.sd_cols[:, t],
                self.shed_cols[:, t],
            ]
        )
        return float(self.lp.c[cols] @ x[cols])


def build_uc_problem(
    system: PowerSystem,
    offers: Mapping[str, OfferCurve],
    loads: np.ndarray,
    hours: tuple[datetime, ...],
    initial_state: Mapping[str, UnitState],
    *,
    k_segments: int = 10,
    shed_price: float = SHED_PRICE,
    fixed_status: Mapping[str, np.ndarray] | None = None,
) -> UcProblem:
    """Assemble the commitment-and-dispatch problem over ``hours``.

    ``loads`` is a bus-by-hour MW matrix aligned with ``system.bus_ids``.
    Every generator needs an offer covering the horizon.  ``fixed_status``
    pins the commitment of listed generators to a given 0/1 pattern, which
    is how the balancing stage holds slow units to the day-ahead schedule.
    """
    gens = system.generators
    G, T = len(gens), len(hours)
    N, L = len(system.buses), len(system.branches)
    K = k_segments
    if loads.shape != (N, T):
        raise GridsettleError(f"load matrix must be {(N, T)}, got {loads.shape}")
    fixed_status = fixed_status or {}

    # Per-generator hourly offer data.
    qmin = np.zeros((G, T))
    qmax = np.zeros((G, T))
    widths = np.zeros((G, T, K))
    slopes = np.zeros((G, T, K))
    online_cost = np.zeros((G, T))
    for g, gen in enumerate(gens):
        if gen.id not in offers:
            raise GridsettleError(f"no offer for generator {gen.id}")
        try:
            off = offers[gen.id].window(hours[0], T)
        except KeyError as exc:
            raise GridsettleError(str(exc)) from None
        if off.hours != tuple(hours):
            raise GridsettleError(
                f"offer hours for {gen.id} do not line up with the horizon"
            )
        if np.any(off.q_min > off.q_max):
            raise GridsettleError(f"offer for {gen.id} has q_min above q_max")
        qmin[g], qmax[g] = off.q_min, off.q_max
        for t in range(T):
            widths[g, t], slopes[g, t] = segment_widths_and_slopes(
                off.a[t], off.b[t], off.q_min[t], off.q_max[t], K
            )
            online_cost[g, t] = base_cost(off.a[t], off.b[t], off.c[t], off.q_min[t])

    # Column layout.
    p0 = 0
    s0 = p0 + G * T
    u0 = s0 + G * T * K
    su0 = u0 + G * T
    sd0 = su0 + G * T
    th0 = sd0 + G * T
    f0 = th0 + N * T
    sh0 = f0 + L * T
    n_vars = sh0 + N * T

    gt = np.arange(G * T).reshape(G, T)
    nt = np.arange(N * T).reshape(N, T)
    p_cols = p0 + gt
    seg_cols = s0 + (gt[:, :, None] * K + np.arange(K))
    u_cols = u0 + gt
    su_cols = su0 + gt
    sd_cols = sd0 + gt
    theta_cols = th0 + nt
    flow_cols = f0 + np.arange(L * T).reshape(L, T)
    shed_cols = sh0 + nt

    c = np.zeros(n_vars)
    c[seg_cols.ravel()] = slopes.ravel()
    c[u_cols.ravel()] = online_cost.ravel()
    c[shed_cols.ravel()] = shed_price
    lb = np.zeros(n_vars)
    ub = np.full(n_vars, np.inf)
    ub[p_cols] = qmax
    ub[seg_cols.ravel()] = widths.ravel()
    lb[theta_cols.ravel()] = -np.inf

    committable = np.array([g.committable for g in gens])
    init_status = np.zeros(G, dtype=np.int8)
    for g, gen in enumerate(gens):
        if gen.id not in initial_state:
            raise GridsettleError(f"no initial state for generator {gen.id}")
        st = initial_state[gen.id]
        init_status[g] = 1 if st.status else 0
        if not gen.committable:
            if not st.status:
                raise GridsettleError(
                    f"non-committable generator {gen.id} must enter the horizon online"
                )
            lb[u_cols[g]] = 1.0
            ub[u_cols[g]] = 1.0
            ub[su_cols[g]] = 0.0
            ub[sd_cols[g]] = 0.0
        else:
            ub[u_cols[g]] = 1.0
            ub[su_cols[g]] = 1.0
            ub[sd_cols[g]] = 1.0
            # Remaining min-up/min-down obligations carried in from before
            # the horizon become forced bounds on the leading hours.
            if st.status and st.hours_in_state < gen.min_up:
                lb[u_cols[g, : gen.min_up - st.hours_in_state]] = 1.0
            if not st.status and st.hours_in_state < gen.min_down:
                ub[u_cols[g, : gen.min_down - st.hours_in_state]] = 0.0

    for gen_id, pattern in fixed_status.items():
        g = system.gen_index[gen_id]
        pat = np.asarray(pattern, dtype=float)
        if pat.shape != (T,):
            raise GridsettleError(
                f"fixed status for {gen_id} must cover all {T} hours"
            )
        lb[u_cols[g]] = pat
        ub[u_cols[g]] = pat

    binary_idx = u_cols[
        [g for g, gen in enumerate(gens) if gen.committable and gen.id not in fixed_status]
    ].ravel()

    # Reference bus angle pinned to zero.
    ref = system.bus_index[system.reference_bus]
    lb[theta_cols[ref]] = 0.0
    ub[theta_cols[ref]] = 0.0
    for l, br in enumerate(system.branches):
        lb[flow_cols[l]] = -br.capacity_mw
        ub[flow_cols[l]] = br.capacity_mw

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add(r, cc, v):
        r, cc, v = np.broadcast_arrays(
            np.atleast_1d(np.asarray(r, dtype=int)),
            np.atleast_1d(np.asarray(cc, dtype=int)),
            np.atleast_1d(np.asarray(v, dtype=float)),
        )
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append(v.ravel())

    # Equality block 1: bus balance, rows [0, N*T).
    b_eq = [loads.ravel()]
    gens_at = {n: [] for n in range(N)}
    for g, gen in enumerate(gens):
        gens_at[system.bus_index[gen.bus]].append(g)
    for n in range(N):
        r = nt[n]
        for g in gens_at[n]:
            add(r, p_cols[g], np.ones(T))
        add(r, shed_cols[n], np.ones(T))
    for l, br in enumerate(system.branches):
        add(nt[system.bus_index[br.to_bus]], flow_cols[l], np.ones(T))
        add(nt[system.bus_index[br.from_bus]], flow_cols[l], -np.ones(T))

    # Equality block 2: flow definition f = (theta_from - theta_to) / x.
    fd0 = N * T
    for l, br in enumerate(system.branches):
        r = fd0 + np.arange(T) + l * T
        inv_x = 1.0 / br.reactance_pu
        add(r, flow_cols[l], np.ones(T))
        add(r, theta_cols[system.bus_index[br.from_bus]], -inv_x * np.ones(T))
        add(r, theta_cols[system.bus_index[br.to_bus]], inv_x * np.ones(T))
    b_eq.append(np.zeros(L * T))

    # Equality block 3: p = u * q_min + sum of segments.
    pd0 = fd0 + L * T
    for g in range(G):
        r = pd0 + gt[g]
        add(r, p_cols[g], np.ones(T))
        add(r, u_cols[g], -qmin[g])
        for k in range(K):
            add(r, seg_cols[g, :, k], -np.ones(T))
    b_eq.append(np.zeros(G * T))

    # Equality block 4: u_t - u_{t-1} = su_t - sd_t.
    sl0 = pd0 + G * T
    b_sulink = np.zeros(G * T)
    for g in range(G):
        r = sl0 + gt[g]
        add(r, u_cols[g], np.ones(T))
        add(r[1:], u_cols[g, :-1], -np.ones(T - 1))
        add(r, su_cols[g], -np.ones(T))
        add(r, sd_cols[g], np.ones(T))
        b_sulink[g * T] = float(init_status[g])
    b_eq.append(b_sulink)
    n_eq = sl0 + G * T

    a_eq = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_eq, n_vars),
    ).tocsr()

    # Inequalities.
    rows, cols, vals = [], [], []
    b_ub: list[float] = []
    r = 0

    def seq() -> np.ndarray:
        nonlocal r
        out = np.arange(T) + r
        r += T
        return out

    for g, gen in enumerate(gens):
        rr = seq()  # p <= q_max * u
        add(rr, p_cols[g], np.ones(T))
        add(rr, u_cols[g], -qmax[g])
        b_ub.extend([0.0] * T)
        rr = seq()  # p >= q_min * u
        add(rr, p_cols[g], -np.ones(T))
        add(rr, u_cols[g], qmin[g])
        b_ub.extend([0.0] * T)

        p_prev = float(initial_state[gen.id].dispatch)
        rr = seq()  # ramp up
        add(rr, p_cols[g], np.ones(T))
        add(rr[1:], p_cols[g, :-1], -np.ones(T - 1))
        b_ub.extend([gen.ramp + (p_prev if t == 0 else 0.0) for t in range(T)])
        rr = seq()  # ramp down
        add(rr, p_cols[g], -np.ones(T))
        add(rr[1:], p_cols[g, :-1], np.ones(T - 1))
        b_ub.extend([gen.ramp - (p_prev if t == 0 else 0.0) for t in range(T)])

        if gen.committable and gen.min_up > 1:
            for t in range(T):
                lo = max(0, t - gen.min_up + 1)
                add(r, su_cols[g, lo : t + 1], np.ones(t + 1 - lo))
                add(r, u_cols[g, t], -1.0)
                b_ub.append(0.0)
                r += 1
        if gen.committable and gen.min_down > 1:
            for t in range(T):
                lo = max(0, t - gen.min_down + 1)
                add(r, sd_cols[g, lo : t + 1], np.ones(t + 1 - lo))
                add(r, u_cols[g, t], 1.0)
                b_ub.append(1.0)
                r += 1

    a_ub = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(r, n_vars),
    ).tocsr()

    lp = LinearProgram(
        c=c,
        a_eq=a_eq,
        b_eq=np.concatenate(b_eq),
        a_ub=a_ub,
        b_ub=np.asarray(b_ub),
        lb=lb,
        ub=ub,
        binary_idx=binary_idx,
    )
    return UcProblem(
        lp=lp,
        hours=tuple(hours),
        gen_ids=system.gen_ids,
        bus_ids=system.bus_ids,
        branch_ids=system.branch_ids,
        k_segments=K,
        committable=committable,
        initial_status=init_status,
        p_cols=p_cols,
        seg_cols=seg_cols,
        u_cols=u_cols,
        su_cols=su_cols,
        sd_cols=sd_cols,
        theta_cols=theta_cols,
        flow_cols=flow_cols,
        shed_cols=shed_cols,
    )


def solve_uc(
    problem: UcProblem,
    solver: SolverContract,
    *,
    stage: Stage = Stage.DAY_AHEAD,
    binding: int | None = None,
    rel_gap: float = 1e-6,
) -> MarketResult:
    """Clear the built problem and unpack the solution.

    LMP columns are left NaN; prices come from ``extract_lmps`` against the
    returned commitment schedule.
    """
    if problem.lp.binary_idx.size:
        sol = solver.solve_milp(problem.lp, rel_gap=rel_gap)
    else:
        sol = solver.solve_lp(problem.lp)
    status = problem.status_from(sol.x)
    T = len(problem.hours)
    commitments = CommitmentSchedule.from_status(
        problem.gen_ids, problem.hours, status, problem.initial_status
    )
    return MarketResult(
        stage=stage,
        hours=problem.hours,
        binding=T if binding is None else binding,
        gen_ids=problem.gen_ids,
        bus_ids=problem.bus_ids,
        branch_ids=problem.branch_ids,
        dispatch=problem.dispatch_from(sol.x),
        commitments=commitments,
        flows=problem.flows_from(sol.x),
        angles=problem.angles_from(sol.x),
        lmps=np.full((len(problem.bus_ids), T), np.nan),
        shed=problem.shed_from(sol.x),
        objective=float(sol.objective),
    )


def extract_lmps(
    problem: UcProblem, commitments: CommitmentSchedule, solver: SolverContract
) -> np.ndarray:
    """Bus-by-hour prices with the commitment pattern held fixed.

    Pins every committable unit's status to ``commitments``, re-solves the
    continuous program, and reads the duals of the balance rows.
    """
    lo, hi = problem.lp.lb.copy(), problem.lp.ub.copy()
    for g, gen_id in enumerate(problem.gen_ids):
        if problem.committable[g]:
            pat = commitments.status[commitments.gen_ids.index(gen_id)].astype(float)
            lo[problem.u_cols[g]] = pat
            hi[problem.u_cols[g]] = pat
    sol = solver.solve_lp(problem.lp, lo, hi)
    N, T = len(problem.bus_ids), len(problem.hours)
    return sol.eq_duals[: N * T].reshape(N, T).copy()
