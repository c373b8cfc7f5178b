"""Exact maximization of pure integer linear programs.

The LP relaxation engine is a bounded-variable two-phase primal simplex
working on the computational form ``A x - r = 0`` (one ranged slack per
row), with a dense explicit basis inverse that is refactorized
periodically.  Cold starts get one signed artificial per row for phase
1; warm starts reuse a previous basis and repair bound violations with a
composite (artificial-free) phase 1.  Pivot selection is deterministic:
largest reduced cost, lowest index on ties, switching to Bland's
lowest-index rule while degenerate pivots persist.

Integer optimality comes from best-bound branch-and-bound on the most
fractional variable; each child node warm-starts from its parent's
optimal basis.  Everything is single-threaded and deterministic:
identical programs yield identical incumbents and node counts.

Tolerances (fixed): LP feasibility 1e-7, integrality 1e-6, pruning gap
1e-9.
"""

from __future__ import annotations

import heapq
import math
import time as _time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

from .encode import IntegerProgram
from .errors import SolverError

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6
PRUNE_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_TOL = 1e-10
BLAND_AFTER = 30
REFRESH_EVERY = 200

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class MilpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"


@dataclass
class LpSolution:
    status: LpStatus
    values: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray | None = None
    var_status: np.ndarray | None = None
    # final basis inverse and its update age, kept for warm-starting
    # children (internal)
    inverse: np.ndarray | None = field(default=None, repr=False)
    inverse_age: int = 0


@dataclass(frozen=True)
class SolveLimits:
    max_nodes: int | None = None
    time_limit: float | None = None


@dataclass
class MilpResult:
    status: MilpStatus
    values: np.ndarray | None
    objective: float
    nodes_explored: int
    bound: float


class _Prepared:
    """Program preprocessed into arrays and the fixed matrix
    ``G = [A | -I | I]`` over (structural, slack, artificial) columns."""

    def __init__(self, program: IntegerProgram):
        self.n = program.n_variables
        self.obj = np.array([v.objective for v in program.variables], dtype=float)
        self.base_lower = np.array([v.lower for v in program.variables], dtype=float)
        self.base_upper = np.array([v.upper for v in program.variables], dtype=float)
        if self.n and not np.all(np.isfinite(self.base_lower)):
            raise SolverError("all variable lower bounds must be finite")

        row_lower: list[float] = []
        row_upper: list[float] = []
        entries_r: list[int] = []
        entries_c: list[int] = []
        entries_v: list[float] = []
        self.constant_rows_ok = True
        for row in program.rows:
            lower = -math.inf if row.lower is None else row.lower
            upper = math.inf if row.upper is None else row.upper
            if lower > upper:
                self.constant_rows_ok = False
                continue
            if not row.coeffs:
                if not lower <= 0.0 <= upper:
                    self.constant_rows_ok = False
                continue
            index = len(row_lower)
            row_lower.append(lower)
            row_upper.append(upper)
            for var, coef in row.coeffs:
                entries_r.append(index)
                entries_c.append(var)
                entries_v.append(coef)
        self.m = len(row_lower)
        self.row_lower = np.array(row_lower, dtype=float)
        self.row_upper = np.array(row_upper, dtype=float)
        self.A = sp.csr_matrix(
            (entries_v, (entries_r, entries_c)), shape=(self.m, self.n)
        )
        m = self.m
        eye = sp.identity(m, format="csc")
        self.G = sp.hstack([self.A.tocsc(), -eye, eye], format="csc")
        self.GT = self.G.T.tocsr()
        self.K = self.n + 2 * m
        self.integer_mask = np.ones(self.n, dtype=bool)


class _Unbounded(Exception):
    pass


class _NumericalTrouble(Exception):
    pass


class _Simplex:
    """One bounded-variable simplex run over fixed structure G with
    per-run bounds.  ``warm`` restarts from a previous
    (basis, status, inverse) triple taken from a solve on the same
    structure; the inverse may be None, forcing a refactorization."""

    def __init__(self, prep: _Prepared, lower: np.ndarray, upper: np.ndarray,
                 hint: np.ndarray | None, warm=None):
        self.prep = prep
        m, n, K = prep.m, prep.n, prep.K
        self.L = np.concatenate([lower, prep.row_lower, np.zeros(m)])
        self.U = np.concatenate([upper, prep.row_upper, np.zeros(m)])
        self.z = np.zeros(K)
        self.status = np.full(K, AT_LOWER, dtype=np.int8)
        self.iterations = 0
        self.degenerate_run = 0
        self.bland = False
        self.used_artificials = False

        self.inverse_age = 0
        if warm is not None:
            basis, status, inverse, age = warm
            self.basis = basis.copy()
            self.status = status.copy()
            nonbasic = np.ones(K, dtype=bool)
            nonbasic[self.basis] = False
            at_upper = nonbasic & (self.status == AT_UPPER)
            at_lower = nonbasic & (self.status == AT_LOWER)
            self.z[at_lower] = self.L[at_lower]
            self.z[at_upper] = self.U[at_upper]
            if not np.all(np.isfinite(self.z[at_lower])) or not np.all(
                np.isfinite(self.z[at_upper])
            ):
                raise _NumericalTrouble("warm status pins a variable at an infinite bound")
            if inverse is not None:
                self.Binv = inverse.copy()
                self.inverse_age = age
                self._recompute_basics()
            else:
                self.refactorize()
            return

        # Cold start: structural variables on the finite bound nearest
        # the hint, slacks on their nearest bound, one artificial per
        # unsatisfiable row.
        self.used_artificials = True
        x0 = lower.copy()
        if hint is not None:
            snap = np.where(
                np.isfinite(upper) & (np.abs(hint - upper) < np.abs(hint - lower)),
                upper, lower,
            )
            x0 = snap
        self.z[:n] = x0
        self.status[:n] = np.where(x0 == upper, AT_UPPER, AT_LOWER)

        activity = prep.A.dot(x0) if n else np.zeros(m)
        basis = np.empty(m, dtype=np.int64)
        for i in range(m):
            slack, artificial = n + i, n + m + i
            lo, hi = prep.row_lower[i], prep.row_upper[i]
            if lo <= activity[i] <= hi:
                basis[i] = slack
                self.z[slack] = activity[i]
                self.status[slack] = BASIC
            else:
                bound = lo if activity[i] < lo else hi
                self.z[slack] = bound
                self.status[slack] = AT_LOWER if bound == lo else AT_UPPER
                residual = bound - activity[i]
                basis[i] = artificial
                self.z[artificial] = residual
                self.status[artificial] = BASIC
                if residual >= 0:
                    self.U[artificial] = math.inf
                else:
                    self.L[artificial] = -math.inf
        self.basis = basis
        self.zB = self.z[basis].copy()
        self.Binv = np.diag(np.where(basis < n + m, -1.0, 1.0))

    def refactorize(self) -> None:
        prep = self.prep
        B = prep.G[:, self.basis].toarray()
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise _NumericalTrouble("singular basis") from exc
        self.inverse_age = 0
        self._recompute_basics()

    def _recompute_basics(self) -> None:
        z_nb = self.z.copy()
        z_nb[self.basis] = 0.0
        rhs = -self.prep.G.dot(z_nb)
        self.zB = self.Binv.dot(rhs)
        self.z[self.basis] = self.zB

    def ftran(self, j: int) -> np.ndarray:
        start, end = self.prep.G.indptr[j], self.prep.G.indptr[j + 1]
        rows = self.prep.G.indices[start:end]
        vals = self.prep.G.data[start:end]
        return self.Binv[:, rows].dot(vals)

    def _select(self, zeta: np.ndarray, enterable: np.ndarray) -> int | None:
        can_rise = (self.status == AT_LOWER) & enterable & (zeta > DUAL_TOL)
        can_fall = (self.status == AT_UPPER) & enterable & (zeta < -DUAL_TOL)
        eligible = (can_rise | can_fall) & self._movable
        if not eligible.any():
            return None
        if self.bland:
            return int(np.flatnonzero(eligible)[0])
        scores = np.where(eligible, np.abs(zeta), -1.0)
        return int(np.argmax(scores))

    def _refresh_caches(self, cost: np.ndarray) -> None:
        self._bl = self.L[self.basis].copy()
        self._bu = self.U[self.basis].copy()
        self._cb = cost[self.basis].copy()
        self._cost = cost
        # fixed variables can never move; keeping them out of the
        # entering candidates prevents zero-step bound-flip loops
        self._movable = self.U > self.L

    def _apply_step(self, q: int, sigma: float, w: np.ndarray, d: np.ndarray,
                    step: float, pos: int | None) -> None:
        """Move the entering variable by ``step``; ``pos=None`` flips it
        to its other bound, otherwise the basic at ``pos`` leaves."""
        if pos is None:
            self.z[q] += sigma * step
            self.status[q] = AT_UPPER if self.status[q] == AT_LOWER else AT_LOWER
            self.zB += d * step
        else:
            pivot = w[pos]
            leaving = int(self.basis[pos])
            self.zB += d * step
            entering_value = self.z[q] + sigma * step
            if d[pos] > 0:
                self.z[leaving], self.status[leaving] = self.U[leaving], AT_UPPER
            else:
                self.z[leaving], self.status[leaving] = self.L[leaving], AT_LOWER
            self.basis[pos] = q
            self.status[q] = BASIC
            self.zB[pos] = entering_value
            self._bl[pos] = self.L[q]
            self._bu[pos] = self.U[q]
            self._cb[pos] = self._cost[q]
            self.Binv[pos, :] /= pivot
            row = self.Binv[pos, :].copy()
            w_rest = w.copy()
            w_rest[pos] = 0.0
            # fused rank-1 update: Binv -= outer(w_rest, Binv[pos])
            updated = dger(-1.0, row, w_rest, a=self.Binv.T, overwrite_a=1)
            if not np.shares_memory(updated, self.Binv):  # pragma: no cover
                self.Binv = np.ascontiguousarray(updated.T)
            self.inverse_age += 1
        self.iterations += 1
        if step <= DEGENERATE_TOL:
            self.degenerate_run += 1
            if self.degenerate_run > BLAND_AFTER:
                self.bland = True
        else:
            self.degenerate_run = 0
            self.bland = False
        if self.inverse_age >= REFRESH_EVERY:
            self.refactorize()

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self._cb.dot(self.Binv)
        return cost - self.prep.GT.dot(y)

    def run(self, cost: np.ndarray, enterable: np.ndarray, max_iterations: int) -> None:
        """Standard bounded simplex to optimality of a fixed cost vector
        from a bound-feasible basis.  Reduced costs are maintained by
        pivot updates and recomputed at refactorizations and before
        declaring optimality."""
        prep = self.prep
        self._refresh_caches(cost)
        zeta = self._reduced_costs(cost)
        while True:
            if self.iterations >= max_iterations:
                raise SolverError("simplex iteration limit exceeded")
            q = self._select(zeta, enterable)
            if q is None:
                zeta = self._reduced_costs(cost)  # confirm against drift
                q = self._select(zeta, enterable)
                if q is None:
                    return
            sigma = 1.0 if self.status[q] == AT_LOWER else -1.0
            w = self.ftran(q)
            d = -sigma * w

            t_basic = np.full(prep.m, math.inf)
            rising = d > PIVOT_TOL
            falling = d < -PIVOT_TOL
            with np.errstate(invalid="ignore"):
                t_basic[rising] = (self._bu[rising] - self.zB[rising]) / d[rising]
                t_basic[falling] = (self._bl[falling] - self.zB[falling]) / d[falling]
            np.clip(t_basic, 0.0, None, out=t_basic)
            span = self.U[q] - self.L[q]
            t_enter = span if math.isfinite(span) else math.inf
            t_min = float(t_basic.min()) if prep.m else math.inf
            if math.isinf(min(t_min, t_enter)):
                raise _Unbounded()
            if t_enter <= t_min:
                self._apply_step(q, sigma, w, d, t_enter, None)
                continue
            ties = np.flatnonzero(t_basic <= t_min + 1e-12)
            pos = int(ties[np.argmin(self.basis[ties])])
            if abs(w[pos]) < PIVOT_TOL:
                self.refactorize()
                zeta = self._reduced_costs(cost)
                continue
            alpha_row = prep.GT.dot(self.Binv[pos, :])
            theta = zeta[q] / w[pos]
            leaving = int(self.basis[pos])
            self._apply_step(q, sigma, w, d, t_min, pos)
            if self.inverse_age == 0:  # refactorized inside the step
                zeta = self._reduced_costs(cost)
            else:
                zeta = zeta - theta * alpha_row
                zeta[q] = 0.0
                zeta[leaving] = -theta

    def run_dual(self, cost: np.ndarray, enterable: np.ndarray,
                 budget: int) -> bool | None:
        """Dual simplex from a dual-feasible basis (a parent node's
        optimum, or the slack basis when every objective coefficient
        points at its starting bound): drives out bound violations while
        keeping reduced costs sign-feasible, so reaching primal
        feasibility certifies optimality.  Returns True on success,
        False when the program is primal infeasible, None to request the
        primal fallback."""
        prep = self.prep
        self._refresh_caches(cost)
        zeta = self._reduced_costs(cost)
        # fixed variables impose no dual sign condition: they can never move
        at_lower = (self.status == AT_LOWER) & self._movable
        at_upper = (self.status == AT_UPPER) & self._movable
        if (zeta[at_lower & enterable] > 1e-6).any() or (
            zeta[at_upper & enterable] < -1e-6
        ).any():
            return None  # not dual feasible; use the primal path
        pivots = 0
        while True:
            below = self.zB - self._bl
            above = self.zB - self._bu
            worst_low = float(below.min(initial=0.0))
            worst_high = float(above.max(initial=0.0))
            if worst_low >= -FEASIBILITY_TOL and worst_high <= FEASIBILITY_TOL:
                return True
            if pivots >= budget:
                return None
            pivots += 1
            if -worst_low >= worst_high:
                pos = int(np.argmin(below))
                target = self._bl[pos]
                leaving_to = AT_LOWER
            else:
                pos = int(np.argmax(above))
                target = self._bu[pos]
                leaving_to = AT_UPPER
            delta = target - self.zB[pos]  # >0 below, <0 above

            alpha = prep.GT.dot(self.Binv[pos, :])
            sigma = np.where(self.status == AT_LOWER, 1.0, -1.0)
            # entering must push zB[pos] toward its violated bound
            push = -sigma * alpha
            candidates = (
                ((self.status == AT_LOWER) | (self.status == AT_UPPER))
                & enterable
                & self._movable
                & (push * np.sign(delta) > PIVOT_TOL)
            )
            if not candidates.any():
                return False  # dual unbounded: no way to repair the row
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(candidates, np.abs(zeta) / np.abs(alpha), math.inf)
            best = float(ratios.min())
            ties = np.flatnonzero(ratios <= best + 1e-12)
            q = int(ties[0])
            span = self.U[q] - self.L[q]
            step = delta / (-sigma[q] * alpha[q])
            if step < 0:
                return None  # numerical sign slip; fall back
            if math.isfinite(span) and step > span + 1e-12:
                # bound flip: partial repair without a basis change
                w = self.ftran(q)
                self.z[q] += sigma[q] * span
                self.status[q] = AT_UPPER if self.status[q] == AT_LOWER else AT_LOWER
                self.zB += (-sigma[q] * span) * w
                self.iterations += 1
                continue
            w = self.ftran(q)
            if abs(w[pos]) < PIVOT_TOL:
                self.refactorize()
                continue
            theta = zeta[q] / alpha[q]
            entering_value = self.z[q] + sigma[q] * step
            leaving = int(self.basis[pos])
            self.zB += (-sigma[q] * step) * w
            self.z[leaving] = target
            self.status[leaving] = leaving_to
            self.basis[pos] = q
            self.status[q] = BASIC
            self.zB[pos] = entering_value
            self._bl[pos] = self.L[q]
            self._bu[pos] = self.U[q]
            self._cb[pos] = cost[q]
            pivot = w[pos]
            self.Binv[pos, :] /= pivot
            row = self.Binv[pos, :].copy()
            w_rest = w.copy()
            w_rest[pos] = 0.0
            updated = dger(-1.0, row, w_rest, a=self.Binv.T, overwrite_a=1)
            if not np.shares_memory(updated, self.Binv):  # pragma: no cover
                self.Binv = np.ascontiguousarray(updated.T)
            zeta = zeta - theta * alpha
            zeta[q] = 0.0
            zeta[leaving] = -theta
            self.iterations += 1
            self.inverse_age += 1
            if self.inverse_age >= REFRESH_EVERY:
                self.refactorize()
                zeta = self._reduced_costs(cost)

    def solution_vector(self) -> np.ndarray:
        full = self.z.copy()
        full[self.basis] = self.zB
        return full


def _verify_primal(prep: _Prepared, x: np.ndarray, lower: np.ndarray,
                   upper: np.ndarray) -> bool:
    if prep.n:
        if np.any(x < lower - FEASIBILITY_TOL * (1 + np.abs(lower))):
            return False
        finite = np.isfinite(upper)
        if np.any(x[finite] > upper[finite] + FEASIBILITY_TOL * (1 + np.abs(upper[finite]))):
            return False
    if prep.m:
        activity = prep.A.dot(x)
        slack = FEASIBILITY_TOL * (1 + np.abs(activity))
        if np.any(activity < prep.row_lower - slack):
            return False
        if np.any(activity > prep.row_upper + slack):
            return False
    return True


def _dual_start(prep: _Prepared, lower: np.ndarray, upper: np.ndarray):
    """Slack basis plus a bound assignment that is dual feasible, when
    one exists: each variable sits on the bound its objective
    coefficient points away from."""
    n, m = prep.n, prep.m
    place_upper = prep.obj > 0
    if np.any(place_upper & ~np.isfinite(upper)):
        return None
    status = np.full(prep.K, AT_LOWER, dtype=np.int8)
    status[:n][place_upper] = AT_UPPER
    basis = np.arange(n, n + m, dtype=np.int64)
    status[basis] = BASIC
    return basis, status, (-np.eye(m) if m else np.zeros((0, 0))), 0


def _solve_relaxation(prep: _Prepared, lower: np.ndarray, upper: np.ndarray,
                      hint: np.ndarray | None = None, warm=None) -> LpSolution:
    if not prep.constant_rows_ok:
        return LpSolution(LpStatus.INFEASIBLE, np.zeros(prep.n), -math.inf, 0)
    if prep.n and np.any(lower > upper + 1e-12):
        return LpSolution(LpStatus.INFEASIBLE, np.zeros(prep.n), -math.inf, 0)
    if prep.n == 0:
        return LpSolution(LpStatus.OPTIMAL, np.zeros(0), 0.0, 0)

    m, n, K = prep.m, prep.n, prep.K
    max_iterations = 50_000 + 60 * (m + n)
    dual_budget = min(max_iterations, 400 + m)
    dual_started = False
    if warm is None and hint is None:
        started = _dual_start(prep, lower, upper)
        if started is not None:
            warm = started
            dual_started = True
            dual_budget = min(max_iterations, 2_000 + 4 * (m + n))
    try:
        state = _Simplex(prep, lower, upper, hint, warm=warm)
    except _NumericalTrouble:
        warm = None
        state = _Simplex(prep, lower, upper, hint, warm=None)

    enterable = np.ones(K, dtype=bool)
    enterable[n + m:] = False  # artificials only ever leave the basis
    phase2_cost = np.zeros(K)
    phase2_cost[:n] = prep.obj
    try:
        if not state.used_artificials:
            outcome = state.run_dual(phase2_cost, enterable, dual_budget)
            if outcome is None or outcome is False:
                # Rebuild cold: the artificial two-phase path settles
                # both stalls and infeasibility verdicts for real.
                warm = None
                state = _Simplex(prep, lower, upper, hint, warm=None)
        if state.used_artificials:
            phase1_cost = np.zeros(K)
            phase1_cost[n + m:] = np.where(state.z[n + m:] >= 0, -1.0, 1.0)
            infeasibility = float(np.abs(state.z[n + m:]).sum())
            if infeasibility > FEASIBILITY_TOL:
                state.run(phase1_cost, enterable, max_iterations)
                state.refactorize()
                full = state.solution_vector()
                infeasibility = float(np.abs(full[n + m:]).sum())
                if infeasibility > FEASIBILITY_TOL * (1 + math.sqrt(m)):
                    return LpSolution(LpStatus.INFEASIBLE, np.zeros(n), -math.inf,
                                      state.iterations)
            # Pin the artificials for phase 2.
            state.L[n + m:] = 0.0
            state.U[n + m:] = 0.0
        state.bland = False
        state.degenerate_run = 0
        state.run(phase2_cost, enterable, max_iterations)
    except _Unbounded:
        return LpSolution(LpStatus.UNBOUNDED, np.zeros(n), math.inf, state.iterations)
    except _NumericalTrouble:
        if warm is None or dual_started:
            raise SolverError("simplex hit a numerical failure") from None
        return _solve_relaxation(prep, lower, upper, hint, warm=None)

    if state.inverse_age > 30:
        state.refactorize()
    else:
        state._recompute_basics()
    full = state.solution_vector()
    x = full[:n]
    if not _verify_primal(prep, x, lower, upper):
        if state.inverse_age > 0:
            state.refactorize()
            full = state.solution_vector()
            x = full[:n]
        if not _verify_primal(prep, x, lower, upper):
            if warm is not None and not dual_started:
                return _solve_relaxation(prep, lower, upper, hint, warm=None)
            raise SolverError("simplex lost primal feasibility; numerical failure")
    objective = float(prep.obj.dot(x))
    return LpSolution(LpStatus.OPTIMAL, x, objective, state.iterations,
                      basis=state.basis.copy(), var_status=state.status.copy(),
                      inverse=state.Binv, inverse_age=state.inverse_age)


def solve_lp(
    program: IntegerProgram,
    extra_bounds: dict[int, tuple[float, float]] | None = None,
    start_hint: np.ndarray | None = None,
) -> LpSolution:
    """Optimal basic solution of the linear relaxation.  ``extra_bounds``
    tightens individual variable bounds (used by branch-and-bound)."""
    prep = _Prepared(program)
    lower = prep.base_lower.copy()
    upper = prep.base_upper.copy()
    for index, (lo, hi) in (extra_bounds or {}).items():
        lower[index] = max(lower[index], lo)
        upper[index] = min(upper[index], hi)
    return _solve_relaxation(prep, lower, upper, start_hint)


@dataclass(order=True)
class _Node:
    sort_bound: float
    counter: int
    lower: np.ndarray = field(compare=False)
    upper: np.ndarray = field(compare=False)
    warm: tuple | None = field(compare=False, default=None)


def solve_milp(
    program: IntegerProgram,
    limits: SolveLimits | None = None,
    start_hint: np.ndarray | None = None,
) -> MilpResult:
    """Provably optimal integral solution via best-bound branch-and-bound.

    Branches on the most fractional variable (ties to the lowest index)
    into floor/ceiling children; prunes at ``incumbent + 1e-9``; returns
    TIMEOUT with the incumbent and the best remaining bound when the
    node or time budget runs out."""
    limits = limits or SolveLimits()
    prep = _Prepared(program)
    deadline = None if limits.time_limit is None else _time.monotonic() + limits.time_limit

    incumbent: np.ndarray | None = None
    incumbent_obj = -math.inf
    nodes = 0
    counter = 0
    heap: list[_Node] = [
        _Node(-math.inf, 0, prep.base_lower.copy(), prep.base_upper.copy(), None)
    ]

    def open_bound() -> float:
        return max((-node.sort_bound for node in heap), default=-math.inf)

    while heap:
        if limits.max_nodes is not None and nodes >= limits.max_nodes:
            return MilpResult(MilpStatus.TIMEOUT, incumbent, incumbent_obj, nodes,
                              max(incumbent_obj, open_bound()))
        if deadline is not None and _time.monotonic() > deadline:
            return MilpResult(MilpStatus.TIMEOUT, incumbent, incumbent_obj, nodes,
                              max(incumbent_obj, open_bound()))
        node = heapq.heappop(heap)
        if -node.sort_bound <= incumbent_obj + PRUNE_TOL:
            continue
        relax = _solve_relaxation(prep, node.lower, node.upper,
                                  hint=start_hint if nodes == 0 else None,
                                  warm=node.warm)
        nodes += 1
        if relax.status is LpStatus.UNBOUNDED:
            raise SolverError("unbounded relaxation; the program is malformed")
        if relax.status is LpStatus.INFEASIBLE:
            continue
        if relax.objective <= incumbent_obj + PRUNE_TOL:
            continue
        values = relax.values
        fractional = np.abs(values - np.round(values))
        fractional[~prep.integer_mask] = 0.0
        j = int(np.argmax(fractional))
        if fractional[j] <= INTEGRALITY_TOL:
            candidate = np.round(values)
            candidate[~prep.integer_mask] = values[~prep.integer_mask]
            if not _verify_primal(prep, candidate, node.lower, node.upper):
                raise SolverError("rounded incumbent violates the program; "
                                  "coefficients too large for the integrality tolerance")
            objective = float(prep.obj.dot(candidate))
            if objective > incumbent_obj:
                incumbent = candidate
                incumbent_obj = objective
            continue
        warm = None
        if relax.basis is not None:
            # children share one read-only inverse; each solve copies it
            inverse = relax.inverse if prep.m <= 3000 else None
            warm = (relax.basis, relax.var_status, inverse, relax.inverse_age)
        for child in ("floor", "ceiling"):
            child_lower, child_upper = node.lower.copy(), node.upper.copy()
            if child == "floor":
                child_upper[j] = math.floor(values[j])
            else:
                child_lower[j] = math.ceil(values[j])
            counter += 1
            heapq.heappush(heap, _Node(-relax.objective, counter,
                                       child_lower, child_upper, warm))

    if incumbent is None:
        return MilpResult(MilpStatus.INFEASIBLE, None, -math.inf, nodes, -math.inf)
    return MilpResult(MilpStatus.OPTIMAL, incumbent, incumbent_obj, nodes, incumbent_obj)
