"""Linear and mixed-binary solver layer.

Clearing problems are posed as sparse minimization LPs with an optional set
of binary columns.  ``HighsLpSolver`` wraps scipy's HiGHS interface for the
relaxations and dual extraction; binaries are handled by an explicit
best-first branch-and-bound (``BranchBoundSolver``) so node order, branching
rule, and tie-breaks are pinned down and reproducible.  ``HighsMilpSolver``
delegates the binary search to HiGHS instead and is kept as a cross-check.
"""
from __future__ import annotations

import heapq
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, milp, LinearConstraint, Bounds

from ..errors import GridsettleError, InfeasibleProblemError, UnboundedProblemError

INTEGRALITY_TOL = 1e-6


@dataclass
class LinearProgram:
    """min c@x  s.t.  a_eq@x = b_eq,  a_ub@x <= b_ub,  lb <= x <= ub.

    ``binary_idx`` lists columns restricted to {0, 1}; an empty list makes
    the problem a plain LP.
    """

    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix | None
    b_ub: np.ndarray | None
    lb: np.ndarray
    ub: np.ndarray
    binary_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    objective: float
    eq_duals: np.ndarray


@dataclass(frozen=True)
class MilpSolution:
    x: np.ndarray
    objective: float
    best_bound: float
    gap: float
    nodes: int


class SolverContract(ABC):
    """What the clearing engine needs from any optimization backend."""

    @abstractmethod
    def solve_lp(
        self,
        lp: LinearProgram,
        lb: np.ndarray | None = None,
        ub: np.ndarray | None = None,
    ) -> LpSolution:
        """Solve the continuous relaxation, optionally under tighter bounds.

        Returns the optimum with duals for the equality rows.  Raises
        ``InfeasibleProblemError`` / ``UnboundedProblemError`` accordingly.
        """

    @abstractmethod
    def solve_milp(self, lp: LinearProgram, rel_gap: float = 1e-6) -> MilpSolution:
        """Solve with the binary restrictions enforced to within ``rel_gap``."""


class HighsLpSolver(SolverContract):
    """scipy/HiGHS backend for the continuous relaxations."""

    def solve_lp(self, lp, lb=None, ub=None):
        lo = lp.lb if lb is None else lb
        hi = lp.ub if ub is None else ub
        res = linprog(
            lp.c,
            A_eq=lp.a_eq,
            b_eq=lp.b_eq,
            A_ub=lp.a_ub,
            b_ub=lp.b_ub,
            bounds=np.column_stack([lo, hi]),
            method="highs",
        )
        if res.status == 2:
            raise InfeasibleProblemError("linear program is infeasible")
        if res.status == 3:
            raise UnboundedProblemError("linear program is unbounded")
        if res.status != 0:
            raise GridsettleError(f"linear solver failed: {res.message}")
        return LpSolution(
            x=res.x,
            objective=float(res.fun),
            eq_duals=np.asarray(res.eqlin.marginals, dtype=float),
        )

    def solve_milp(self, lp, rel_gap=1e-6):
        raise NotImplementedError("use BranchBoundSolver or HighsMilpSolver")


class BranchBoundSolver(HighsLpSolver):
    """Best-first branch and bound over the binary commitment columns.

    Nodes are explored in lowest-relaxation-bound order; branching picks the
    most fractional binary (lowest column index on ties).  Before the main
    loop a single rounding dive tries to seed an incumbent.  Any integral
    candidate is re-solved with its binaries pinned so the reported dispatch
    and objective are exact, not within-tolerance.
    """

    def __init__(self, node_limit: int = 500_000):
        self.node_limit = node_limit

    def solve_milp(self, lp, rel_gap=1e-6):
        bin_idx = np.asarray(lp.binary_idx, dtype=int)
        if bin_idx.size == 0:
            sol = self.solve_lp(lp)
            return MilpSolution(sol.x, sol.objective, sol.objective, 0.0, 1)

        root = self.solve_lp(lp)  # infeasible root propagates
        nodes = 1
        incumbent: LpSolution | None = None

        def fractional(x: np.ndarray) -> np.ndarray:
            return np.abs(x[bin_idx] - np.round(x[bin_idx]))

        def pin_and_polish(values: np.ndarray) -> LpSolution | None:
            """Fix binaries at the given 0/1 pattern and re-solve exactly."""
            lo, hi = lp.lb.copy(), lp.ub.copy()
            lo[bin_idx] = values
            hi[bin_idx] = values
            try:
                return self.solve_lp(lp, lo, hi)
            except InfeasibleProblemError:
                return None

        def accept(candidate: LpSolution | None) -> None:
            nonlocal incumbent
            if candidate is not None and (
                incumbent is None or candidate.objective < incumbent.objective
            ):
                incumbent = candidate

        if fractional(root.x).max() <= INTEGRALITY_TOL:
            accept(pin_and_polish(np.round(root.x[bin_idx])))
            if incumbent is not None:
                return MilpSolution(
                    incumbent.x, incumbent.objective, root.objective, 0.0, nodes
                )
        else:
            # Rounding dive to seed an incumbent: nearest values first, then
            # everything-on, which is feasible whenever capacity is the issue.
            accept(pin_and_polish(np.round(root.x[bin_idx])))
            if incumbent is None:
                accept(pin_and_polish(np.ceil(root.x[bin_idx] - INTEGRALITY_TOL)))
            nodes += 2

        # Heap entries: (bound, insertion order, lb, ub, relaxation solution).
        heap: list[tuple[float, int, np.ndarray, np.ndarray, LpSolution]] = []
        seq = 0
        heapq.heappush(heap, (root.objective, seq, lp.lb.copy(), lp.ub.copy(), root))

        def cutoff() -> float:
            if incumbent is None:
                return np.inf
            return incumbent.objective - rel_gap * max(1.0, abs(incumbent.objective))

        best_bound = root.objective
        while heap:
            bound, _, lo, hi, relax = heapq.heappop(heap)
            best_bound = bound
            if bound >= cutoff():
                # Best-first order: every remaining node is at least as bad.
                break
            frac = fractional(relax.x)
            if frac.max() <= INTEGRALITY_TOL:
                accept(pin_and_polish(np.round(relax.x[bin_idx])))
                continue
            branch_col = bin_idx[int(np.argmax(frac))]
            for fixed in (0.0, 1.0):
                child_lo, child_hi = lo.copy(), hi.copy()
                child_lo[branch_col] = fixed
                child_hi[branch_col] = fixed
                nodes += 1
                if nodes > self.node_limit:
                    raise GridsettleError(
                        f"branch and bound exceeded {self.node_limit} nodes"
                    )
                try:
                    child = self.solve_lp(lp, child_lo, child_hi)
                except InfeasibleProblemError:
                    continue
                if child.objective < cutoff():
                    seq += 1
                    heapq.heappush(
                        heap, (child.objective, seq, child_lo, child_hi, child)
                    )
        else:
            best_bound = incumbent.objective if incumbent is not None else best_bound

        if incumbent is None:
            raise InfeasibleProblemError("no integer-feasible commitment exists")
        best_bound = min(best_bound, incumbent.objective)
        gap = (incumbent.objective - best_bound) / max(1.0, abs(incumbent.objective))
        return MilpSolution(
            incumbent.x, incumbent.objective, best_bound, max(gap, 0.0), nodes
        )


class HighsMilpSolver(HighsLpSolver):
    """HiGHS branch and cut, used to cross-check the in-tree search."""

    def solve_milp(self, lp, rel_gap=1e-6):
        integrality = np.zeros(lp.n_vars)
        integrality[lp.binary_idx] = 1
        constraints = [LinearConstraint(lp.a_eq, lp.b_eq, lp.b_eq)]
        if lp.a_ub is not None:
            constraints.append(
                LinearConstraint(lp.a_ub, -np.inf, lp.b_ub)
            )
        res = milp(
            lp.c,
            constraints=constraints,
            bounds=Bounds(lp.lb, lp.ub),
            integrality=integrality,
            options={"mip_rel_gap": rel_gap},
        )
        if res.status == 2:
            raise InfeasibleProblemError("mixed-integer program is infeasible")
        if res.status != 0:
            raise GridsettleError(f"mixed-integer solver failed: {res.message}")
        # Re-solve with binaries pinned so the dispatch matches LP precision.
        lo, hi = lp.lb.copy(), lp.ub.copy()
        rounded = np.round(res.x[lp.binary_idx])
        lo[lp.binary_idx] = rounded
        hi[lp.binary_idx] = rounded
        polished = self.solve_lp(lp, lo, hi)
        bound = float(res.mip_dual_bound) if res.mip_dual_bound is not None else polished.objective
        gap = (polished.objective - bound) / max(1.0, abs(polished.objective))
        return MilpSolution(polished.x, polished.objective, bound, max(gap, 0.0), -1)
