"""Bounded-variable linear programming: a dense revised simplex plus an
optional HiGHS (scipy) backend behind the same problem/solution contract.

The dense solver is the reference implementation and the dual/KKT oracle for
the cut-separation propositions; the HiGHS path carries the large master and
extensive-form LPs where dense pivoting would dominate runtime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
_REFACTOR_EVERY = 256
_BLAND_AFTER = 600  # consecutive degenerate pivots before Bland's rule kicks in

# `auto` backend: problems at most this many rows*cols stay on the dense
# path; beyond that HiGHS wins by orders of magnitude
_DENSE_CELLS = 2_000


class LpError(ValueError):
    """Malformed LP input."""


class LpBreakdown(RuntimeError):
    """Numerical failure (singular basis, stalled pivoting)."""


@dataclass
class LpProblem:
    """maximize c.v  s.t.  a_ub v <= b_ub,  a_eq v = f,  lb <= v <= ub."""

    c: np.ndarray
    a_ub: object = None   # dense array or scipy sparse, rows match b_ub
    b_ub: np.ndarray = None
    a_eq: object = None
    b_eq: np.ndarray = None
    lb: np.ndarray = None  # -inf allowed
    ub: np.ndarray = None  # +inf allowed
    name: str = ""

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        if self.lb is None:
            self.lb = np.zeros(n)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LpError("bound vectors must match the objective length")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise LpError("bounds must not be NaN")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise LpError("lower bounds must be < +inf and upper bounds > -inf")
        if np.any(self.lb > self.ub + 1e-12):
            raise LpError("lower bound exceeds upper bound")
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float)
        for a, b, label in ((self.a_ub, self.b_ub, "a_ub"), (self.a_eq, self.b_eq, "a_eq")):
            if b.size and a is None:
                raise LpError(f"{label} missing for its right-hand side")
            if a is not None and a.shape != (b.size, n):
                raise LpError(f"{label} has inconsistent shape")
        if not np.all(np.isfinite(self.c)):
            raise LpError("objective coefficients must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m_ub(self) -> int:
        return self.b_ub.size

    @property
    def m_eq(self) -> int:
        return self.b_eq.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = None
    objective: float = np.nan
    duals_ub: np.ndarray = None
    duals_eq: np.ndarray = None
    reduced_costs: np.ndarray = None
    iterations: int = 0
    backend: str = "dense"


def _dense(a):
    if a is None:
        return None
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


class _DenseSimplex:
    """Two-phase primal revised simplex with variable bounds.

    Variables are [structural | slacks for <= rows | artificials]; all rows
    are kept as equalities. The basis inverse is held explicitly and
    refactorized periodically. Dantzig pricing switches to Bland's rule after
    a run of degenerate steps, which guarantees finiteness.
    """

    AT_LB, AT_UB, BASIC, FREE = 0, 1, 2, 3

    def __init__(self, p: LpProblem):
        self.p = p
        n, m1, m2 = p.n, p.m_ub, p.m_eq
        self.m = m1 + m2
        self.nt = n + m1
        rows = []
        if m1:
            rows.append(np.hstack([_dense(p.a_ub), np.eye(m1)]))
        if m2:
            rows.append(np.hstack([_dense(p.a_eq), np.zeros((m2, m1))]))
        self.A = np.vstack(rows) if rows else np.zeros((0, self.nt))
        self.b = np.concatenate([p.b_ub, p.b_eq])
        self.lb = np.concatenate([p.lb, np.zeros(m1), np.zeros(self.m)])
        self.ub = np.concatenate([p.ub, np.full(m1, np.inf), np.full(self.m, np.inf)])
        self.iterations = 0

    def col(self, j):
        if j < self.nt:
            return self.A[:, j]
        return self.art_cols[:, j - self.nt]

    def solve(self) -> LpSolution:
        m, nt = self.m, self.nt
        if m == 0:
            return self._solve_unconstrained()
        # start with every real variable at a finite bound (0 for free ones)
        self.status = np.empty(nt + m, dtype=np.int8)
        self.x = np.zeros(nt + m)
        for j in range(nt):
            if np.isfinite(self.lb[j]):
                self.status[j], self.x[j] = self.AT_LB, self.lb[j]
            elif np.isfinite(self.ub[j]):
                self.status[j], self.x[j] = self.AT_UB, self.ub[j]
            else:
                self.status[j], self.x[j] = self.FREE, 0.0
        resid = self.b - self.A @ self.x[:nt]
        sigma = np.where(resid >= 0.0, 1.0, -1.0)
        self.art_cols = np.diag(sigma)
        self.basis = np.arange(nt, nt + m)
        self.status[nt:] = self.BASIC
        self.x[nt:] = np.abs(resid)
        self.binv = np.diag(sigma)  # diagonal sign matrix is its own inverse

        # phase 1: maximize minus the artificial mass
        c1 = np.zeros(nt + m)
        c1[nt:] = -1.0
        self._iterate(c1, phase=1)
        infeas = float(self.x[nt:].sum())
        if infeas > FEAS_TOL * (1.0 + np.abs(self.b).sum()):
            return LpSolution(status=INFEASIBLE, iterations=self.iterations)
        self._expel_artificials()
        self.lb[nt:] = self.ub[nt:] = 0.0
        self.x[nt:][self.status[nt:] != self.BASIC] = 0.0

        c2 = np.zeros(nt + m)
        c2[: self.p.n] = self.p.c
        unbounded = self._iterate(c2, phase=2)
        if unbounded:
            return LpSolution(status=UNBOUNDED, iterations=self.iterations)
        return self._extract(c2)

    def _solve_unconstrained(self):
        x = np.where(self.p.c > 0, self.p.ub[: self.p.n], self.p.lb[: self.p.n])
        x = np.where(self.p.c == 0, np.where(np.isfinite(self.p.lb), self.p.lb, 0.0), x)
        if np.any(~np.isfinite(x) & (self.p.c != 0)):
            return LpSolution(status=UNBOUNDED)
        x = np.where(np.isfinite(x), x, 0.0)
        return LpSolution(
            status=OPTIMAL, x=x, objective=float(self.p.c @ x),
            duals_ub=np.zeros(0), duals_eq=np.zeros(0), reduced_costs=self.p.c.copy(),
        )

    def _refactor(self):
        cols = np.empty((self.m, self.m))
        for i, j in enumerate(self.basis):
            cols[:, i] = self.col(j)
        try:
            self.binv = np.linalg.inv(cols)
        except np.linalg.LinAlgError as e:
            raise LpBreakdown("singular basis during refactorization") from e
        nonbasic_part = self.b - self._nonbasic_rhs()
        self.x[self.basis] = self.binv @ nonbasic_part

    def _nonbasic_rhs(self):
        mask = np.ones(self.nt + self.m, dtype=bool)
        mask[self.basis] = False
        idx = np.flatnonzero(mask[: self.nt])
        out = self.A[:, idx] @ self.x[idx]
        art = np.flatnonzero(mask[self.nt :])
        for i in art:
            out += self.art_cols[:, i] * self.x[self.nt + i]
        return out

    def _expel_artificials(self):
        """Pivot zero-valued basic artificials out; redundant rows keep a
        fixed artificial in the basis."""
        for pos in range(self.m):
            j = self.basis[pos]
            if j < self.nt:
                continue
            row = self.binv[pos] @ self.A  # tableau row over real columns
            cands = np.flatnonzero(np.abs(row) > 1e-7)
            cands = [k for k in cands if self.status[k] != self.BASIC]
            if not cands:
                continue
            e = cands[0]
            self._pivot(pos, e, self.binv @ self.col(e))
            self.status[e] = self.BASIC
            self.status[j] = self.AT_LB
            self.x[j] = 0.0

    def _iterate(self, c, phase):
        degen_run = 0
        bland = False
        cap = 20_000 + 60 * (self.m + self.nt)
        while True:
            self.iterations += 1
            if self.iterations > cap:
                raise LpBreakdown("pivot limit exceeded")
            if self.iterations % _REFACTOR_EVERY == 0:
                self._refactor()
            y = c[self.basis] @ self.binv
            d = c[: self.nt] - y @ self.A
            d_art = c[self.nt :] - y @ self.art_cols
            dall = np.concatenate([d, d_art])
            stat = self.status
            with np.errstate(invalid="ignore"):
                fixed = self.ub - self.lb <= 1e-14
            up = (stat == self.AT_LB) & (dall > DUAL_TOL) & ~fixed
            dn = (stat == self.AT_UB) & (dall < -DUAL_TOL) & ~fixed
            fr = (stat == self.FREE) & (np.abs(dall) > DUAL_TOL)
            eligible = np.flatnonzero(up | dn | fr)
            if eligible.size == 0:
                return False
            if bland:
                e = int(eligible[0])
            else:
                e = int(eligible[np.argmax(np.abs(dall[eligible]))])
            s = 1.0 if (stat[e] == self.AT_LB or (stat[e] == self.FREE and dall[e] > 0)) else -1.0
            w = self.binv @ self.col(e)
            t, leave_pos, leave_to = self._ratio(e, s, w)
            if t is None:
                if phase == 1:  # bounded by construction
                    raise LpBreakdown("phase-1 subproblem reported unbounded")
                return True
            if t <= 1e-12:
                degen_run += 1
                if degen_run > _BLAND_AFTER:
                    bland = True
            else:
                degen_run = 0
            self.x[e] += s * t
            if t > 0:
                self.x[self.basis] -= s * t * w
            if leave_pos is None:  # bound-to-bound move of the entering variable
                self.status[e] = self.AT_UB if s > 0 else self.AT_LB
                continue
            self._pivot(leave_pos, e, w, leave_to)

    def _ratio(self, e, s, w):
        delta = s * w
        vals = self.x[self.basis]
        lo = self.lb[self.basis]
        hi = self.ub[self.basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(
                delta > PIVOT_TOL,
                (vals - lo) / np.where(delta > PIVOT_TOL, delta, 1.0),
                np.where(
                    delta < -PIVOT_TOL,
                    (hi - vals) / np.where(delta < -PIVOT_TOL, -delta, 1.0),
                    np.inf,
                ),
            )
        lim = np.where(np.isnan(lim), np.inf, np.maximum(lim, 0.0))
        rng = self.ub[e] - self.lb[e]
        t_flip = rng if np.isfinite(rng) else np.inf
        pos = int(np.argmin(lim)) if lim.size else None
        t_piv = lim[pos] if lim.size else np.inf
        if t_piv >= np.inf and t_flip >= np.inf:
            return None, None, None
        if lim.size:
            # deterministic tie-break on the leaving variable: smallest index
            ties = np.flatnonzero(lim <= t_piv + 1e-15)
            pos = int(ties[np.argmin(self.basis[ties])])
            t_piv = float(lim[pos])
        if t_flip < t_piv - 1e-15:
            return float(t_flip), None, None
        leave_to = self.AT_LB if delta[pos] > 0 else self.AT_UB
        return float(t_piv), pos, leave_to

    def _pivot(self, pos, e, w, leave_to=None):
        wp = w[pos]
        if abs(wp) < PIVOT_TOL:
            self._refactor()
            w = self.binv @ self.col(e)
            wp = w[pos]
            if abs(wp) < PIVOT_TOL:
                raise LpBreakdown("pivot element below tolerance")
        leaving = self.basis[pos]
        if leave_to is not None:
            self.status[leaving] = leave_to
            self.x[leaving] = self.lb[leaving] if leave_to == self.AT_LB else self.ub[leaving]
        self.basis[pos] = e
        self.status[e] = self.BASIC
        self.binv[pos, :] /= wp
        others = np.arange(self.m) != pos
        self.binv[others, :] -= np.outer(w[others], self.binv[pos, :])

    def _extract(self, c):
        self._refactor()
        y = c[self.basis] @ self.binv
        x = self.x[: self.p.n].copy()
        # scrub float fuzz on variables sitting at their bounds
        with np.errstate(invalid="ignore"):
            at_lb = np.isfinite(self.p.lb) & (np.abs(x - self.p.lb) < 1e-9)
            at_ub = np.isfinite(self.p.ub) & (np.abs(x - self.p.ub) < 1e-9)
        x[at_lb] = self.p.lb[at_lb]
        x[at_ub] = self.p.ub[at_ub]
        duals_ub = y[: self.p.m_ub].copy()
        duals_eq = y[self.p.m_ub :].copy()
        d = self.p.c - self._struct_at(y)
        return LpSolution(
            status=OPTIMAL,
            x=x,
            objective=float(self.p.c @ x),
            duals_ub=duals_ub,
            duals_eq=duals_eq,
            reduced_costs=d,
            iterations=self.iterations,
        )

    def _struct_at(self, y):
        return y @ self.A[:, : self.p.n]


def _solve_highs(p: LpProblem) -> LpSolution:
    res = linprog(
        c=-p.c,
        A_ub=p.a_ub if p.m_ub else None,
        b_ub=p.b_ub if p.m_ub else None,
        A_eq=p.a_eq if p.m_eq else None,
        b_eq=p.b_eq if p.m_eq else None,
        bounds=np.column_stack([p.lb, p.ub]),
        method="highs",
    )
    if res.status == 2:
        return LpSolution(status=INFEASIBLE, backend="highs")
    if res.status == 3:
        return LpSolution(status=UNBOUNDED, backend="highs")
    if res.status != 0:
        raise LpBreakdown(f"HiGHS failure: {res.message}")
    duals_ub = -np.asarray(res.ineqlin.marginals) if p.m_ub else np.zeros(0)
    duals_eq = -np.asarray(res.eqlin.marginals) if p.m_eq else np.zeros(0)
    d = p.c.astype(float).copy()
    if p.m_ub:
        d -= (sp.csr_matrix(p.a_ub).T @ duals_ub) if sp.issparse(p.a_ub) else _dense(p.a_ub).T @ duals_ub
    if p.m_eq:
        d -= (sp.csr_matrix(p.a_eq).T @ duals_eq) if sp.issparse(p.a_eq) else _dense(p.a_eq).T @ duals_eq
    return LpSolution(
        status=OPTIMAL,
        x=np.asarray(res.x, dtype=float),
        objective=float(p.c @ res.x),
        duals_ub=duals_ub,
        duals_eq=duals_eq,
        reduced_costs=d,
        iterations=int(res.nit),
        backend="highs",
    )


def solve_lp(p: LpProblem, backend: str = "auto") -> LpSolution:
    """Solve an LpProblem; statuses are returned, numerical breakdown raises.

    backend: "dense" (own revised simplex), "highs" (scipy), or "auto"
    (dense for small problems, HiGHS above a size threshold).
    """
    if backend == "auto":
        cells = (p.m_ub + p.m_eq + 1) * (p.n + 1)
        backend = "dense" if cells <= _DENSE_CELLS and not sp.issparse(p.a_ub) else "highs"
    if backend == "dense":
        if sp.issparse(p.a_ub) or sp.issparse(p.a_eq):
            p = LpProblem(c=p.c, a_ub=_dense(p.a_ub), b_ub=p.b_ub,
                          a_eq=_dense(p.a_eq), b_eq=p.b_eq, lb=p.lb, ub=p.ub, name=p.name)
        return _DenseSimplex(p).solve()
    if backend == "highs":
        return _solve_highs(p)
    raise LpError(f"unknown backend {backend!r}")


def verify_kkt(p: LpProblem, s: LpSolution, feas_tol: float = FEAS_TOL,
               cs_tol: float = 1e-7, gap_tol: float = 1e-6) -> bool:
    """True iff s is a certified optimum of p: primal and dual feasibility,
    complementary slackness, bound-sign conditions, and matching objectives."""
    if s.status != OPTIMAL or s.x is None:
        return False
    x = np.asarray(s.x, dtype=float)
    scale = 1.0 + float(np.max(np.abs(p.c), initial=0.0))
    if np.any(x < p.lb - feas_tol) or np.any(x > p.ub + feas_tol):
        return False
    slack = np.zeros(0)
    if p.m_ub:
        slack = p.b_ub - np.asarray((p.a_ub @ x)).ravel()
        if np.any(slack < -feas_tol * (1.0 + np.abs(p.b_ub))):
            return False
    if p.m_eq:
        res = np.asarray((p.a_eq @ x)).ravel() - p.b_eq
        if np.any(np.abs(res) > feas_tol * (1.0 + np.abs(p.b_eq))):
            return False
    y_ub = np.asarray(s.duals_ub, dtype=float) if p.m_ub else np.zeros(0)
    y_eq = np.asarray(s.duals_eq, dtype=float) if p.m_eq else np.zeros(0)
    if p.m_ub and np.any(y_ub < -feas_tol * scale):
        return False
    d = p.c.astype(float).copy()
    if p.m_ub:
        d -= np.asarray((sp.csr_matrix(p.a_ub).T @ y_ub)).ravel() if sp.issparse(p.a_ub) else _dense(p.a_ub).T @ y_ub
    if p.m_eq:
        d -= np.asarray((sp.csr_matrix(p.a_eq).T @ y_eq)).ravel() if sp.issparse(p.a_eq) else _dense(p.a_eq).T @ y_eq
    fin_lb, fin_ub = np.isfinite(p.lb), np.isfinite(p.ub)
    at_lb = fin_lb & (x <= np.where(fin_lb, p.lb, 0.0) + 1e-7 * (1.0 + np.abs(np.where(fin_lb, p.lb, 0.0))))
    at_ub = fin_ub & (x >= np.where(fin_ub, p.ub, 0.0) - 1e-7 * (1.0 + np.abs(np.where(fin_ub, p.ub, 0.0))))
    tol = 1e-6 * scale
    if np.any(d[~at_lb & ~at_ub] > tol) or np.any(d[~at_lb & ~at_ub] < -tol):
        return False
    if np.any(d[at_lb & ~at_ub] > tol):
        return False
    if np.any(d[at_ub & ~at_lb] < -tol):
        return False
    if p.m_ub and np.any(np.abs(y_ub * slack) > cs_tol * scale * (1.0 + np.abs(p.b_ub)) * (1.0 + np.abs(y_ub))):
        return False
    bound_term = np.where(d > 0, np.where(np.isfinite(p.ub), p.ub, 0.0) * np.maximum(d, 0.0),
                          np.where(np.isfinite(p.lb), p.lb, 0.0) * np.minimum(d, 0.0))
    dual_obj = float(y_ub @ p.b_ub) + float(y_eq @ p.b_eq) + float(bound_term.sum())
    primal_obj = float(p.c @ x)
    return abs(primal_obj - dual_obj) <= gap_tol * (1.0 + abs(primal_obj))


def write_lp_text(p: LpProblem) -> str:
    """Debug dump in LP-format-style algebra."""
    def term(c, j):
        return f"{c:+.12g} v{j}"

    lines = [f"\\ {p.name}" if p.name else "\\ lp", "Maximize", " obj: " + " ".join(
        term(c, j) for j, c in enumerate(p.c) if c != 0.0)]
    lines.append("Subject To")
    a_ub, a_eq = _dense(p.a_ub), _dense(p.a_eq)
    for i in range(p.m_ub):
        row = " ".join(term(c, j) for j, c in enumerate(a_ub[i]) if c != 0.0) or "0 v0"
        lines.append(f" c{i}: {row} <= {p.b_ub[i]:.12g}")
    for i in range(p.m_eq):
        row = " ".join(term(c, j) for j, c in enumerate(a_eq[i]) if c != 0.0) or "0 v0"
        lines.append(f" e{i}: {row} = {p.b_eq[i]:.12g}")
    lines.append("Bounds")
    for j in range(p.n):
        lines.append(f" {p.lb[j]:.12g} <= v{j} <= {p.ub[j]:.12g}")
    lines.append("End")
    return "\n".join(lines)
