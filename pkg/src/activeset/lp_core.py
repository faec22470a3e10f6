"""Dense linear programs: a deterministic simplex solver and a vertex oracle.

Every problem is stored in the form

    minimize    c @ x
    subject to  E @ x == e
                A @ x <= b

with ``x`` free. Variable bounds are folded into ``A``/``b`` when the
instance is built, so that binding-row bookkeeping only has to deal with
one kind of inequality.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalBreakdown, TooLarge

FEAS_TOL = 1e-6
PIVOT_TOL = 1e-9
BREAKDOWN_TOL = 1e-12


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


def _as_matrix(a, ncols):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


@dataclass(frozen=True, eq=False)
class LpInstance:
    cost: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=float).ravel()
        n = c.size
        if n < 1:
            raise DimensionMismatch("an LP needs at least one variable")
        E = _as_matrix(self.eq_matrix, n)
        A = _as_matrix(self.ineq_matrix, n)
        e = np.asarray(self.eq_rhs, dtype=float).ravel()
        b = np.asarray(self.ineq_rhs, dtype=float).ravel()
        if E.shape[1] != n or A.shape[1] != n:
            raise DimensionMismatch(
                f"constraint matrices must have {n} columns, got {E.shape[1]} and {A.shape[1]}"
            )
        if E.shape[0] != e.size:
            raise DimensionMismatch(f"{E.shape[0]} equality rows but {e.size} right-hand sides")
        if A.shape[0] != b.size:
            raise DimensionMismatch(f"{A.shape[0]} inequality rows but {b.size} right-hand sides")
        if A.shape[0] and np.any(np.all(A == 0.0, axis=1)):
            bad = np.flatnonzero(np.all(A == 0.0, axis=1)).tolist()
            raise DimensionMismatch(f"inequality rows {bad} have no nonzero coefficient")
        for name, arr in (("cost", c), ("eq_matrix", E), ("eq_rhs", e),
                          ("ineq_matrix", A), ("ineq_rhs", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def build(cls, cost, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None, upper=None):
        """Assemble an instance, folding finite variable bounds into the inequality rows.

        Bound rows are appended after the general inequalities: first ``-x_i <= -lower_i``
        for every finite lower bound, then ``x_i <= upper_i`` for every finite upper bound.
        """
        c = np.asarray(cost, dtype=float).ravel()
        n = c.size
        A = _as_matrix(A_ub if A_ub is not None else [], n)
        b = np.asarray(b_ub if b_ub is not None else [], dtype=float).ravel()
        E = _as_matrix(A_eq if A_eq is not None else [], n)
        e = np.asarray(b_eq if b_eq is not None else [], dtype=float).ravel()
        rows, rhs = [A], [b]
        eye = np.eye(n)
        if lower is not None:
            lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
            idx = np.flatnonzero(np.isfinite(lo))
            rows.append(-eye[idx])
            rhs.append(-lo[idx])
        if upper is not None:
            up = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
            idx = np.flatnonzero(np.isfinite(up))
            rows.append(eye[idx])
            rhs.append(up[idx])
        return cls(c, E, e, np.vstack(rows), np.concatenate(rhs))

    @property
    def n(self):
        return self.cost.size

    @property
    def m(self):
        return self.ineq_rhs.size

    @property
    def p(self):
        return self.eq_rhs.size

    def objective(self, x):
        return float(self.cost @ np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    point: np.ndarray
    objective: float
    ineq_slacks: np.ndarray
    iterations: int = 0

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    worst_violation: float
    violating_indices: list = field(default_factory=list)


def scaled_violations(instance: LpInstance, point) -> tuple[np.ndarray, np.ndarray]:
    """Row-scaled violations of equalities (absolute residual) and inequalities (positive part)."""
    x = np.asarray(point, dtype=float).ravel()
    if x.size != instance.n:
        raise DimensionMismatch(f"point has length {x.size}, instance has {instance.n} variables")
    eq = np.abs(instance.eq_matrix @ x - instance.eq_rhs) / np.maximum(1.0, np.abs(instance.eq_rhs))
    ineq = np.maximum(0.0, instance.ineq_matrix @ x - instance.ineq_rhs)
    ineq = ineq / np.maximum(1.0, np.abs(instance.ineq_rhs))
    return eq, ineq


def check_feasibility(instance: LpInstance, point, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Check ``point`` against every row of ``instance``.

    Violations are divided by ``max(1, |rhs|)`` row-wise. Indices in the report
    count inequality rows first (``0..m-1``) and then equality rows (``m..m+p-1``).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    eq, ineq = scaled_violations(instance, point)
    allv = np.concatenate([ineq, eq])
    worst = float(allv.max()) if allv.size else 0.0
    bad = np.flatnonzero(allv > tol).tolist()
    return FeasibilityReport(feasible=worst <= tol, worst_violation=worst, violating_indices=bad)


class _Tableau:
    """Dense simplex tableau over split free variables, slacks and artificials.

    Columns: ``x+`` (n), ``x-`` (n), slacks (m), artificials. The last row holds
    reduced costs and the last column the basic values.
    """

    def __init__(self, instance: LpInstance):
        n, m, p = instance.n, instance.m, instance.p
        A, b = instance.ineq_matrix, instance.ineq_rhs
        E, e = instance.eq_matrix, instance.eq_rhs
        # row equilibration; the feasible set is unchanged
        if m:
            s = np.abs(A).max(axis=1)
            A, b = A / s[:, None], b / s
        if p:
            s = np.abs(E).max(axis=1)
            s[s == 0.0] = 1.0
            E, e = E / s[:, None], e / s
        R = m + p
        self.n, self.m, self.R = n, m, R
        rows = np.zeros((R, 2 * n + m))
        rows[:m, :n] = A
        rows[:m, n:2 * n] = -A
        rows[:m, 2 * n:] = np.eye(m)
        rows[m:, :n] = E
        rows[m:, n:2 * n] = -E
        rhs = np.concatenate([b, e])
        flip = rhs < 0
        rows[flip] *= -1.0
        rhs[flip] *= -1.0
        # a slack can start basic only on a non-flipped inequality row
        needs_art = np.ones(R, dtype=bool)
        needs_art[:m] = flip[:m]
        art_rows = np.flatnonzero(needs_art)
        self.n_art = art_rows.size
        self.art_start = 2 * n + m
        N = self.art_start + self.n_art
        T = np.zeros((R + 1, N + 1))
        T[:R, :2 * n + m] = rows
        T[art_rows, self.art_start + np.arange(self.n_art)] = 1.0
        T[:R, -1] = rhs
        basis = np.empty(R, dtype=np.int64)
        basis[:m] = 2 * n + np.arange(m)
        basis[art_rows] = self.art_start + np.arange(self.n_art)
        self.T = T
        self.basis = basis
        self.iterations = 0
        self.rhs_scale = max(1.0, float(np.abs(rhs).max())) if R else 1.0

    def is_free(self, col):
        return col < 2 * self.n

    def pivot(self, r, q):
        T = self.T
        piv = T[r, q]
        if abs(piv) < BREAKDOWN_TOL:
            raise NumericalBreakdown(f"pivot magnitude {abs(piv):.3e} below {BREAKDOWN_TOL:g}")
        T[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, q] = 0.0
        T[r, q] = 1.0
        self.basis[r] = q
        self.iterations += 1
        self._fix_free_signs()

    def _fix_free_signs(self):
        # a basic x+ with negative value is re-expressed through its x- twin
        n = self.n
        T = self.T
        for r in np.flatnonzero(self.basis < 2 * n):
            if T[r, -1] < 0.0:
                j = self.basis[r]
                twin = j + n if j < n else j - n
                T[r] *= -1.0
                T[r, twin] = 1.0
                T[-1, j] = 0.0
                T[-1, twin] = 0.0
                self.basis[r] = twin

    def ratio_row(self, q):
        """Bland ratio test: minimum ratio, ties broken by the smallest basic index.

        Rows holding a split free variable never block. Returns None when unbounded.
        """
        T = self.T
        R = self.R
        colq = T[:R, q]
        cand = (colq > PIVOT_TOL) & (self.basis >= 2 * self.n)
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return None
        ratios = np.maximum(T[idx, -1], 0.0) / colq[idx]
        best = ratios.min()
        ties = idx[ratios <= best + 1e-12 * (1.0 + best)]
        return int(ties[np.argmin(self.basis[ties])])

    def run(self, allowed):
        """Iterate Bland's rule over columns in ``allowed`` until optimal or unbounded."""
        T = self.T
        limit = 50 * (T.shape[0] + T.shape[1]) + 1000
        for _ in range(limit):
            d = T[-1, :-1]
            cand = np.flatnonzero((d < -PIVOT_TOL) & allowed)
            if cand.size == 0:
                return True
            q = int(cand[0])
            r = self.ratio_row(q)
            if r is None:
                return False
            self.pivot(r, q)
        raise NumericalBreakdown("simplex iteration limit reached")

    def set_objective(self, costs):
        T = self.T
        R = self.R
        T[-1] = 0.0
        T[-1, :costs.size] = costs
        cb = T[-1, self.basis].copy()
        T[-1] -= cb @ T[:R]

    def values(self):
        vals = np.zeros(self.T.shape[1] - 1)
        vals[self.basis] = self.T[:self.R, -1]
        return vals


def _failed(instance, status, it):
    nan = np.full(instance.n, np.nan)
    obj = -np.inf if status is Status.UNBOUNDED else np.nan
    return LpSolution(status, nan, obj, np.full(instance.m, np.nan), it)


def solve_lp(instance: LpInstance) -> LpSolution:
    """Solve ``instance`` with the two-phase primal simplex method and Bland's rule.

    The returned point is a basic feasible solution, hence a vertex whenever the
    feasible polyhedron has one. Identical inputs give bit-identical outputs.
    """
    if not isinstance(instance, LpInstance):
        raise DimensionMismatch("solve_lp expects an LpInstance")
    n = instance.n
    tab = _Tableau(instance)
    ncols = tab.T.shape[1] - 1
    allowed = np.ones(ncols, dtype=bool)

    if tab.n_art:
        phase1 = np.zeros(ncols)
        phase1[tab.art_start:] = 1.0
        tab.set_objective(phase1)
        tab.run(allowed)
        if -tab.T[-1, -1] > 1e-9 * tab.rhs_scale:
            return _failed(instance, Status.INFEASIBLE, tab.iterations)
        _drive_out_artificials(tab)
        allowed[tab.art_start:] = False

    costs = np.zeros(ncols)
    costs[:n] = instance.cost
    costs[n:2 * n] = -instance.cost
    tab.set_objective(costs)
    if not tab.run(allowed):
        return _failed(instance, Status.UNBOUNDED, tab.iterations)
    _crossover(tab, allowed)

    vals = tab.values()
    x = vals[:n] - vals[n:2 * n]
    x = x + 0.0  # normalise -0.0
    slacks = instance.ineq_rhs - instance.ineq_matrix @ x
    eqv, inv = scaled_violations(instance, x)
    worst = max(eqv.max(initial=0.0), inv.max(initial=0.0))
    if worst > FEAS_TOL:
        raise NumericalBreakdown(f"simplex point violates constraints by {worst:.3e}")
    return LpSolution(Status.OPTIMAL, x, float(instance.cost @ x), slacks, tab.iterations)


def _drive_out_artificials(tab: _Tableau):
    T = tab.T
    r = 0
    while r < tab.R:
        if tab.basis[r] >= tab.art_start:
            row = T[r, :tab.art_start]
            cols = np.flatnonzero(np.abs(row) > PIVOT_TOL)
            if cols.size:
                tab.pivot(r, int(cols[0]))
            else:
                # redundant constraint row
                tab.T = T = np.delete(T, r, axis=0)
                tab.basis = np.delete(tab.basis, r)
                tab.R -= 1
                continue
        r += 1


def _crossover(tab: _Tableau, allowed):
    """Pivot nonbasic free variables into the basis at zero reduced cost.

    Leaves the objective unchanged and turns the optimal point into a vertex
    when the polyhedron is pointed.
    """
    n = tab.n
    for j in range(n):
        basic = set(tab.basis.tolist())
        if j in basic or j + n in basic:
            continue
        for q in (j, j + n):
            if abs(tab.T[-1, q]) > PIVOT_TOL or not allowed[q]:
                continue
            r = tab.ratio_row(q)
            if r is not None:
                tab.pivot(r, q)
                break


def enumerate_vertices(instance: LpInstance, tol: float = 1e-9):
    """Every basic feasible point of ``instance`` with its objective.

    Brute force over combinations of inequality rows completing the equality
    rows to rank ``n``. Sorted by objective, then lexicographically by point.
    """
    n, m, p = instance.n, instance.m, instance.p
    if n > 12 or m + p > 24:
        raise TooLarge(f"vertex enumeration guard exceeded (n={n}, m+p={m + p})")
    E, e = instance.eq_matrix, instance.eq_rhs
    A, b = instance.ineq_matrix, instance.ineq_rhs
    rank_e = np.linalg.matrix_rank(E) if p else 0
    need = n - rank_e
    found = []
    for combo in itertools.combinations(range(m), need):
        rows = np.vstack([E, A[list(combo)]]) if p else A[list(combo)]
        rhs = np.concatenate([e, b[list(combo)]])
        if rows.shape[0] == 0:
            x = np.zeros(n)
        else:
            if np.linalg.matrix_rank(rows) < n:
                continue
            x, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
        eqv, inv = scaled_violations(instance, x)
        if eqv.max(initial=0.0) > tol or inv.max(initial=0.0) > tol:
            continue
        if any(np.max(np.abs(x - y)) <= tol for y, _ in found):
            continue
        found.append((x, float(instance.cost @ x)))
    found.sort(key=lambda t: (t[1], tuple(t[0])))
    return found
