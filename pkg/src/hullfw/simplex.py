"""Dense bounded-variable simplex for small linear programs.

Solves ``min <d, x>`` subject to linear rows and variable bounds.  Every row
``a x (sense) b`` is written as ``a x + s = b`` with a slack ``s`` whose bounds
encode the sense.  Cold solves run a two-phase primal simplex; re-solves after
bound changes start from the previous optimal basis and run a dual simplex,
which is how the MILP engine visits its branch-and-bound nodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
_REFACTOR_EVERY = 40

_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LinearProgram:
    """``min <objective, x>`` over ``{A x (senses) rhs, lower <= x <= upper}``.

    ``senses`` holds one of ``"<="``, ``">="`` or ``"="`` per row.
    """

    objective: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.senses = tuple(self.senses)
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        m = self.A.shape[0]
        if self.rhs.shape[0] != m or len(self.senses) != m:
            raise ValueError("row data has inconsistent lengths")
        if self.lower.shape[0] != n or self.upper.shape[0] != n:
            raise ValueError("bound vectors must match the objective dimension")
        for s in self.senses:
            if s not in ("<=", ">=", "="):
                raise ValueError(f"unknown row sense {s!r}")

    @classmethod
    def from_rows(cls, objective, rows, lower, upper) -> "LinearProgram":
        """Build from a list of ``(coefficients, sense, rhs)`` triples."""
        n = len(objective)
        if rows:
            A = np.array([np.asarray(a, dtype=float) for a, _, _ in rows])
            if A.shape[1] != n:
                raise ValueError("row length does not match the dimension")
        else:
            A = np.zeros((0, n))
        return cls(objective, A, [s for _, s, _ in rows], [b for _, _, b in rows], lower, upper)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def with_objective(self, objective) -> "LinearProgram":
        return LinearProgram(objective, self.A, self.senses, self.rhs, self.lower, self.upper)

    def with_bounds(self, lower, upper) -> "LinearProgram":
        return LinearProgram(self.objective, self.A, self.senses, self.rhs, lower, upper)

    def row_residuals(self, x: np.ndarray) -> np.ndarray:
        """Constraint violation per row (zero when satisfied)."""
        ax = self.A @ x
        viol = np.zeros(self.n_rows)
        for i, s in enumerate(self.senses):
            if s == "<=":
                viol[i] = max(ax[i] - self.rhs[i], 0.0)
            elif s == ">=":
                viol[i] = max(self.rhs[i] - ax[i], 0.0)
            else:
                viol[i] = abs(ax[i] - self.rhs[i])
        return viol


@dataclass
class LpSolution:
    status: LpStatus
    point: Optional[np.ndarray] = None
    value: float = float("nan")
    is_vertex: bool = False
    iterations: int = 0
    warm_started: bool = False
    reduced_costs: Optional[np.ndarray] = None


def _slack_bounds(senses, active) -> tuple[np.ndarray, np.ndarray]:
    m = len(senses)
    lo = np.empty(m)
    hi = np.empty(m)
    for i, s in enumerate(senses):
        if active is not None and not active[i]:
            lo[i], hi[i] = -np.inf, np.inf
        elif s == "<=":
            lo[i], hi[i] = 0.0, np.inf
        elif s == ">=":
            lo[i], hi[i] = -np.inf, 0.0
        else:
            lo[i], hi[i] = 0.0, 0.0
    return lo, hi


@dataclass
class _Basis:
    basic: np.ndarray
    status: np.ndarray
    sigma: np.ndarray = field(repr=False)


class SimplexSolver:
    """Simplex state bound to one LP structure (rows and objective).

    Bounds on structural variables may change between calls; rows listed in
    ``active`` can be switched on and off, which turns their slack into a free
    variable.  One solve at a time per instance.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        m, n = lp.n_rows, lp.n_vars
        self.m, self.n = m, n
        self._ncols = n + 2 * m
        self._basis: Optional[_Basis] = None
        self.solves = 0
        self.pivots = 0

    # -- public ---------------------------------------------------------------

    def solve(self, lower=None, upper=None, active=None) -> LpSolution:
        """Cold two-phase solve."""
        lo, hi = self._bounds(lower, upper, active)
        self.solves += 1
        return self._cold(lo, hi)

    def resolve_with_bounds(self, lower, upper, active=None, basis: Optional[_Basis] = None) -> LpSolution:
        """Solve with new bounds, warm-starting from ``basis`` or the last optimal basis."""
        lo, hi = self._bounds(lower, upper, active)
        self.solves += 1
        start = basis if basis is not None else self._basis
        if start is not None:
            sol = self._warm(lo, hi, start)
            if sol is not None:
                return sol
        return self._cold(lo, hi)

    def snapshot(self) -> Optional[_Basis]:
        """The current optimal basis, for later use as a warm start."""
        if self._basis is None:
            return None
        b = self._basis
        return _Basis(b.basic.copy(), b.status.copy(), b.sigma.copy())

    # -- internals ------------------------------------------------------------

    def _bounds(self, lower, upper, active):
        lp = self.lp
        lower = lp.lower if lower is None else np.asarray(lower, dtype=float)
        upper = lp.upper if upper is None else np.asarray(upper, dtype=float)
        if lower.shape[0] != self.n or upper.shape[0] != self.n:
            raise ValueError("bound vectors must match the LP dimension")
        if active is not None and len(active) != self.m:
            raise ValueError("row activity mask must match the number of rows")
        slo, shi = _slack_bounds(lp.senses, active)
        # artificial columns exist but are pinned to zero outside phase one
        lo = np.concatenate([lower, slo, np.zeros(self.m)])
        hi = np.concatenate([upper, shi, np.zeros(self.m)])
        return lo, hi

    def _full_matrix(self, sigma: np.ndarray) -> np.ndarray:
        m = self.m
        return np.hstack([self.lp.A, np.eye(m), np.diag(sigma)])

    def _cost(self, phase_one: bool) -> np.ndarray:
        c = np.zeros(self._ncols)
        if phase_one:
            c[self.n + self.m:] = 1.0
        else:
            c[: self.n] = self.lp.objective
        return c

    def _cold(self, lo: np.ndarray, hi: np.ndarray) -> LpSolution:
        n, m = self.n, self.m
        if np.any(lo > hi + FEAS_TOL):
            self._basis = None
            return LpSolution(LpStatus.INFEASIBLE)
        status = np.full(self._ncols, _AT_LOWER, dtype=int)
        xval = np.zeros(self._ncols)
        for j in range(n + m):
            if np.isfinite(lo[j]):
                status[j], xval[j] = _AT_LOWER, lo[j]
            elif np.isfinite(hi[j]):
                status[j], xval[j] = _AT_UPPER, hi[j]
            else:
                status[j], xval[j] = _FREE, 0.0
        resid = self.lp.rhs - self.lp.A @ xval[:n]
        sigma = np.ones(m)
        basic = np.empty(m, dtype=int)
        art_lo = lo.copy()
        art_hi = hi.copy()
        need_phase_one = False
        for i in range(m):
            s = n + i
            if lo[s] - FEAS_TOL <= resid[i] <= hi[s] + FEAS_TOL:
                basic[i] = s
                status[s] = _BASIC
                xval[s] = resid[i]
            else:
                # slack sits at its nearest bound; an artificial absorbs the rest
                target = lo[s] if resid[i] < lo[s] else hi[s]
                xval[s] = target
                status[s] = _AT_LOWER if target == lo[s] else _AT_UPPER
                r = resid[i] - target
                sigma[i] = 1.0 if r >= 0 else -1.0
                a = n + m + i
                basic[i] = a
                status[a] = _BASIC
                art_hi[a] = np.inf
                need_phase_one = True
        for i in range(m):
            a = n + m + i
            if basic[i] != a:
                status[a] = _AT_LOWER
                xval[a] = 0.0

        state = _Tableau(self, basic, status, xval, sigma)
        iters = 0
        if need_phase_one:
            res = state.primal(self._cost(True), art_lo, art_hi)
            iters += state.iterations
            if res == "unbounded" or state.objective(self._cost(True)) > FEAS_TOL * max(1.0, m):
                self._basis = None
                return LpSolution(LpStatus.INFEASIBLE, iterations=iters)
            state.pin_artificials(lo, hi)
        res = state.primal(self._cost(False), lo, hi)
        iters = state.iterations
        self.pivots += iters
        if res == "unbounded":
            self._basis = None
            return LpSolution(LpStatus.UNBOUNDED, iterations=iters)
        return self._finish(state, lo, hi, iters, warm=False)

    def _warm(self, lo, hi, basis: _Basis) -> Optional[LpSolution]:
        if np.any(lo > hi + FEAS_TOL):
            return LpSolution(LpStatus.INFEASIBLE, warm_started=True)
        try:
            state = _Tableau.from_basis(self, basis, lo, hi, self._cost(False))
        except np.linalg.LinAlgError:
            return None
        if state is None:
            return None
        res = state.dual(self._cost(False), lo, hi)
        if res == "infeasible":
            self.pivots += state.iterations
            return LpSolution(LpStatus.INFEASIBLE, iterations=state.iterations, warm_started=True)
        if res != "optimal":
            return None
        res = state.primal(self._cost(False), lo, hi)
        self.pivots += state.iterations
        if res == "unbounded":
            self._basis = None
            return LpSolution(LpStatus.UNBOUNDED, iterations=state.iterations, warm_started=True)
        return self._finish(state, lo, hi, state.iterations, warm=True)

    def _finish(self, state: "_Tableau", lo, hi, iters, warm) -> LpSolution:
        state.refactor()
        x = state.xval[: self.n].copy()
        # clean round-off against bounds
        x = np.minimum(np.maximum(x, lo[: self.n]), hi[: self.n])
        # slack b - Ax must respect the slack bounds; switched-off rows have free slacks
        slack = self.lp.rhs - self.lp.A @ x
        n, m = self.n, self.m
        resid = np.maximum(lo[n:n + m] - slack, slack - hi[n:n + m])
        if resid.size and resid.max() > 1e2 * FEAS_TOL:
            # numerical trouble; one more refactor-based cleanup cannot help,
            # report infeasible rather than return a bad point
            self._basis = None
            return LpSolution(LpStatus.INFEASIBLE, iterations=iters, warm_started=warm)
        self._basis = _Basis(state.basic.copy(), state.status.copy(), state.sigma.copy())
        value = float(self.lp.objective @ x)
        d = state.reduced_costs(self._cost(False))[: self.n]
        d[state.status[: self.n] == _BASIC] = 0.0
        return LpSolution(LpStatus.OPTIMAL, x, value, True, iters, warm, d)


class _Tableau:
    """Explicit ``B^-1 [A | I | diag(sigma)]`` with basic values."""

    def __init__(self, owner: SimplexSolver, basic, status, xval, sigma):
        self.owner = owner
        self.basic = np.asarray(basic, dtype=int)
        self.status = status
        self.xval = xval
        self.sigma = sigma
        self.full = owner._full_matrix(sigma)
        self.iterations = 0
        self._since_refactor = 0
        self.refactor()

    @classmethod
    def from_basis(cls, owner: SimplexSolver, basis: _Basis, lo, hi, cost) -> Optional["_Tableau"]:
        status = basis.status.copy()
        xval = np.zeros(owner._ncols)
        self = cls.__new__(cls)
        self.owner = owner
        self.basic = basis.basic.copy()
        self.status = status
        self.xval = xval
        self.sigma = basis.sigma.copy()
        self.full = owner._full_matrix(self.sigma)
        self.iterations = 0
        self._since_refactor = 0
        self._factor()
        d = self.reduced_costs(cost)
        # place nonbasic variables so that the basis stays dual feasible
        for j in range(owner._ncols):
            if status[j] == _BASIC:
                continue
            fl, fh = np.isfinite(lo[j]), np.isfinite(hi[j])
            if lo[j] == hi[j]:
                status[j], xval[j] = _AT_LOWER, lo[j]
            elif d[j] > OPT_TOL:
                if not fl:
                    return None
                status[j], xval[j] = _AT_LOWER, lo[j]
            elif d[j] < -OPT_TOL:
                if not fh:
                    return None
                status[j], xval[j] = _AT_UPPER, hi[j]
            elif status[j] == _AT_UPPER and fh:
                xval[j] = hi[j]
            elif fl:
                status[j], xval[j] = _AT_LOWER, lo[j]
            elif fh:
                status[j], xval[j] = _AT_UPPER, hi[j]
            else:
                status[j], xval[j] = _FREE, 0.0
        self._basic_values()
        return self

    # -- linear algebra -------------------------------------------------------

    def _factor(self):
        B = self.full[:, self.basic]
        self.T = np.linalg.solve(B, self.full)
        self.beta = np.linalg.solve(B, self.owner.lp.rhs)

    def _basic_values(self):
        nb = self.status != _BASIC
        self.xval[self.basic] = self.beta - self.T[:, nb] @ self.xval[nb]

    def refactor(self):
        self._factor()
        self._basic_values()
        self._since_refactor = 0

    def reduced_costs(self, cost):
        return cost - cost[self.basic] @ self.T

    def objective(self, cost) -> float:
        return float(cost @ self.xval)

    def _pivot(self, r: int, j: int):
        piv = self.T[r, j]
        self.T[r] /= piv
        self.beta[r] /= piv
        col = self.T[:, j].copy()
        col[r] = 0.0
        self.T -= np.outer(col, self.T[r])
        self.beta -= col * self.beta[r]
        self.basic[r] = j
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            try:
                self._factor()
                self._since_refactor = 0
            except np.linalg.LinAlgError:
                pass

    def pin_artificials(self, lo, hi):
        """After phase one: fix artificials at zero, pivoting basic ones out when possible."""
        n, m = self.owner.n, self.owner.m
        for r in range(m):
            k = self.basic[r]
            if k < n + m:
                continue
            row = self.T[r, : n + m]
            cand = [j for j in range(n + m) if self.status[j] != _BASIC and abs(row[j]) > 1e-7]
            if cand:
                j = max(cand, key=lambda c: (abs(row[c]), -c))
                self.status[k] = _AT_LOWER
                self.xval[k] = 0.0
                self._pivot(r, j)
                self.status[j] = _BASIC
        for k in range(n + m, n + 2 * m):
            if self.status[k] != _BASIC:
                self.status[k] = _AT_LOWER
                self.xval[k] = 0.0
        self.refactor()

    # -- primal simplex -------------------------------------------------------

    def primal(self, cost, lo, hi) -> str:
        owner = self.owner
        m = owner.m
        bland = False
        degenerate = 0
        limit = 5 * (m + owner.n)
        max_iter = 50 * (m + owner._ncols) + 1000
        for _ in range(max_iter):
            d = self.reduced_costs(cost)
            movable = (self.status != _BASIC) & (hi > lo)
            inc = movable & ((self.status == _AT_LOWER) | (self.status == _FREE)) & (d < -OPT_TOL)
            dec = movable & ((self.status == _AT_UPPER) | (self.status == _FREE)) & (d > OPT_TOL)
            elig = np.flatnonzero(inc | dec)
            if elig.size == 0:
                self.refactor()
                d = self.reduced_costs(cost)
                inc = movable & ((self.status == _AT_LOWER) | (self.status == _FREE)) & (d < -OPT_TOL)
                dec = movable & ((self.status == _AT_UPPER) | (self.status == _FREE)) & (d > OPT_TOL)
                elig = np.flatnonzero(inc | dec)
                if elig.size == 0:
                    return "optimal"
            if bland:
                j = int(elig[0])
            else:
                j = int(elig[np.argmax(np.abs(d[elig]))])
            direction = 1.0 if inc[j] else -1.0
            alpha = direction * self.T[:, j]
            xb = self.xval[self.basic]
            lb = lo[self.basic]
            ub = hi[self.basic]
            theta = hi[j] - lo[j]
            row = -1
            best_piv = 0.0
            for r in range(m):
                a = alpha[r]
                if a > PIVOT_TOL and np.isfinite(lb[r]):
                    t = max((xb[r] - lb[r]) / a, 0.0)
                elif a < -PIVOT_TOL and np.isfinite(ub[r]):
                    t = max((ub[r] - xb[r]) / (-a), 0.0)
                else:
                    continue
                if t < theta - 1e-12:
                    theta, row, best_piv = t, r, abs(a)
                elif row >= 0 and t <= theta + 1e-12:
                    if bland:
                        if self.basic[r] < self.basic[row]:
                            theta, row, best_piv = min(t, theta), r, abs(a)
                    elif abs(a) > best_piv:
                        theta, row, best_piv = min(t, theta), r, abs(a)
            if not np.isfinite(theta):
                return "unbounded"
            degenerate = degenerate + 1 if theta <= FEAS_TOL else 0
            if degenerate > limit:
                bland = True
            if row < 0:
                # bound flip
                self.xval[j] = hi[j] if direction > 0 else lo[j]
                self.status[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                self._basic_values()
                self.iterations += 1
                continue
            leaving = self.basic[row]
            a = alpha[row]
            if a > 0:
                self.status[leaving], self.xval[leaving] = _AT_LOWER, lb[row]
            else:
                self.status[leaving], self.xval[leaving] = _AT_UPPER, ub[row]
            self.xval[j] = self.xval[j] + direction * theta
            self._pivot(row, j)
            self.status[j] = _BASIC
            self._basic_values()
        return "iteration_limit"

    # -- dual simplex ---------------------------------------------------------

    def dual(self, cost, lo, hi) -> str:
        owner = self.owner
        max_iter = 50 * (owner.m + owner._ncols) + 1000
        for _ in range(max_iter):
            xb = self.xval[self.basic]
            lb = lo[self.basic]
            ub = hi[self.basic]
            below = lb - xb
            above = xb - ub
            infeas = np.maximum(below, above)
            r = int(np.argmax(infeas))
            if infeas[r] <= FEAS_TOL:
                return "optimal"
            d = self.reduced_costs(cost)
            row = self.T[r]
            nb = (self.status != _BASIC) & (hi > lo)
            if below[r] > above[r]:
                # basic var must increase
                up_ok = nb & ((self.status == _AT_LOWER) | (self.status == _FREE)) & (row < -PIVOT_TOL)
                dn_ok = nb & ((self.status == _AT_UPPER) | (self.status == _FREE)) & (row > PIVOT_TOL)
                target, leave_status = lb[r], _AT_LOWER
            else:
                up_ok = nb & ((self.status == _AT_LOWER) | (self.status == _FREE)) & (row > PIVOT_TOL)
                dn_ok = nb & ((self.status == _AT_UPPER) | (self.status == _FREE)) & (row < -PIVOT_TOL)
                target, leave_status = ub[r], _AT_UPPER
            elig = np.flatnonzero(up_ok | dn_ok)
            if elig.size == 0:
                return "infeasible"
            ratios = np.abs(d[elig]) / np.abs(row[elig])
            best = ratios.min()
            ties = elig[ratios <= best + 1e-12]
            j = int(ties[np.argmax(np.abs(row[ties]))])
            leaving = self.basic[r]
            self.status[leaving] = leave_status
            self.xval[leaving] = target
            self._pivot(r, j)
            self.status[j] = _BASIC
            self._basic_values()
        return "iteration_limit"


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` from scratch."""
    return SimplexSolver(lp).solve()


def resolve_with_bounds(lp: LinearProgram, lower, upper, solver: Optional[SimplexSolver] = None) -> LpSolution:
    """Solve ``lp`` with substituted bounds.

    When ``solver`` already holds an optimal basis for the same rows, the solve
    warm-starts from it with the dual simplex.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape[0] != lp.n_vars or upper.shape[0] != lp.n_vars:
        raise ValueError("bound vectors must match the LP dimension")
    if np.any(lower > upper):
        return LpSolution(LpStatus.INFEASIBLE)
    if solver is None or solver.lp is not lp:
        solver = SimplexSolver(lp)
        solver.solve()
    return solver.resolve_with_bounds(lower, upper)
