"""Benders cut machinery: closed-form integer duals, the knapsack-form
subproblem with beta weights, closed-form fractional duals, chain-rule cut
assembly, and the Stage-1 iterative loop with optional stabilization.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import simplex as sx
from .apps import round_to_feasible
from .model import CAOP, FLOP, MSMFLP, Instance, argmax_by_keys, sample_objective, scenario_values

STAGE1_ITERATION_CAP = 500
_BETA_FILL_TOL = 1e-9


class BendersError(RuntimeError):
    pass


@dataclass(frozen=True)
class BendersCut:
    """Affine upper bound theta_i <= intercept + coeffs . x for one scenario."""

    scenario: int
    intercept: float
    coeffs: np.ndarray

    def value(self, x) -> float:
        return float(self.intercept + self.coeffs @ np.asarray(x, dtype=float))

    def key(self) -> tuple:
        return (self.scenario, round(self.intercept, 10), np.round(self.coeffs, 10).tobytes())


@dataclass
class StabilizerConfig:
    """In-out style smoothing of the Stage-1 iterate toward a center point."""

    enabled: bool = False
    center: np.ndarray = None   # None -> per-application default
    rho0: float = 0.5
    increment: float = 0.05
    cap: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho0 <= 1.0 or not 0.0 < self.cap <= 1.0:
            raise ValueError("stabilizer steps must lie in (0, 1]")


@dataclass
class Stage1Result:
    cuts: list
    upper_bound: float
    lower_bound: float
    x_frac: np.ndarray
    best_x: np.ndarray
    iterations: int
    stabilizer_trace: list = field(default_factory=list)
    converged: bool = True


# ---------------------------------------------------------------------------
# integer separation (closed-form dual of the choice subproblem)

def integer_dual(x, i: int, inst: Instance):
    """Closed-form optimal dual (lambda, mu row, nu row) of the per-scenario
    choice subproblem at an integer feasible x."""
    x = np.asarray(x, dtype=float)
    u = inst.scenarios.u[i]
    r = inst.scenarios.r[i]
    offered = np.flatnonzero(x > 0.5)
    if offered.size == 0:
        raise BendersError("empty offer set")
    jstar = int(offered[argmax_by_keys(u[None, offered], r[None, offered])[0]])
    lam = float(r[jstar])
    mu = np.zeros_like(r)
    others = offered[offered != jstar]
    if others.size:
        mu[jstar] = max(float(r[others].max()) - lam, 0.0)
    nu = np.zeros_like(r)
    unoffered = x <= 0.5
    shade = np.where(u[jstar] > u, mu[jstar], 0.0)
    nu[unoffered] = np.maximum(r - lam - shade, 0.0)[unoffered]
    return lam, mu, nu


def integer_cut(x, i: int, inst: Instance) -> BendersCut:
    """Benders cut theta_i <= lambda + sum(mu) + (nu - mu) . x, tight at x."""
    lam, mu, nu = integer_dual(x, i, inst)
    return BendersCut(scenario=i, intercept=lam + float(mu.sum()), coeffs=nu - mu)


def integer_cuts_batch(x, inst: Instance):
    """Vectorized integer cuts for every scenario at one integer x.

    Returns (intercepts, coeff matrix, phi) where phi is the per-scenario
    subproblem value (the chosen reward).
    """
    x = np.asarray(x, dtype=float)
    u, r = inst.scenarios.u, inst.scenarios.r
    n, J = u.shape
    offered = np.flatnonzero(x > 0.5)
    if offered.size == 0:
        raise BendersError("empty offer set")
    pos = argmax_by_keys(u[:, offered], r[:, offered])
    jstar = offered[pos]
    rows = np.arange(n)
    lam = r[rows, jstar]
    r_off = r[:, offered].copy()
    r_off[rows, pos] = -np.inf
    best_other = r_off.max(axis=1) if offered.size > 1 else np.full(n, -np.inf)
    mu_star = np.maximum(best_other - lam, 0.0)
    mu_star[~np.isfinite(best_other)] = 0.0
    shade = np.where(u[rows, jstar][:, None] > u, mu_star[:, None], 0.0)
    nu = np.maximum(r - lam[:, None] - shade, 0.0)
    nu[:, offered] = 0.0
    coeffs = nu
    coeffs[rows, jstar] -= mu_star  # mu lives only at jstar
    intercepts = lam + mu_star
    return intercepts, coeffs, lam.copy()


# ---------------------------------------------------------------------------
# fractional separation via the knapsack reformulation

def beta_weights(x, i: int, inst: Instance) -> np.ndarray:
    """beta_ij = min(x_j, min_{k: u_ik > u_ij} (1 - x_k)) for scenario i."""
    return beta_weights_batch(x, inst, rows=np.array([i]))[0]


def beta_weights_batch(x, inst: Instance, rows=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = inst.scenarios.u if rows is None else inst.scenarios.u[rows]
    n, J = u.shape
    order = np.argsort(-u, axis=1, kind="stable")
    x_sorted = x[order]
    # prefix max of x over strictly-higher-utility options
    blocked = np.empty((n, J))
    running = np.zeros(n)
    for t in range(J):
        blocked[:, t] = running
        running = np.maximum(running, x_sorted[:, t])
    beta_sorted = np.minimum(x_sorted, 1.0 - blocked)
    beta = np.empty_like(beta_sorted)
    np.put_along_axis(beta, order, beta_sorted, axis=1)
    return beta


def knapsack_dual(beta, i: int, inst: Instance):
    """Closed-form dual of the unit-capacity LP knapsack with item values
    r_i and weights beta: price at the critical item, eta the excess values."""
    beta = np.asarray(beta, dtype=float)
    r = inst.scenarios.r[i]
    order = np.argsort(-r, kind="stable")
    cum = np.cumsum(beta[order])
    filled = cum >= 1.0 - _BETA_FILL_TOL
    if not filled.any():
        raise BendersError("subproblem underfilled: sum(beta) < 1")
    crit = order[int(filled.argmax())]
    lam = float(r[crit])
    eta = np.maximum(r - lam, 0.0)
    return lam, eta


def knapsack_value(beta, i: int, inst: Instance) -> float:
    lam, eta = knapsack_dual(beta, i, inst)
    return lam + float(eta @ beta)


def fractional_cut(x, i: int, inst: Instance) -> BendersCut:
    """Chain-rule Benders cut from the knapsack dual at a fractional x."""
    cuts = fractional_cuts_batch(x, inst, rows=np.array([i]))
    return cuts[0]


def fractional_cuts_batch(x, inst: Instance, rows=None):
    """Fractional cuts for the selected scenarios (all when rows is None).

    For every item with positive eta, the binding branch of the beta min is
    charged: the x_j branch when beta_ij equals x_j (preferred on ties),
    otherwise the blocking option k* with the largest x among
    higher-utility options (lowest index on ties).
    """
    x = np.asarray(x, dtype=float)
    scen = inst.scenarios
    if rows is None:
        rows = np.arange(scen.n)
    u = scen.u[rows]
    r = scen.r[rows]
    n, J = u.shape

    order = np.argsort(-u, axis=1, kind="stable")
    x_sorted = x[order]
    blocked = np.empty((n, J))
    block_arg = np.zeros((n, J), dtype=np.int64)
    running = np.zeros(n)
    run_arg = np.zeros(n, dtype=np.int64)
    for t in range(J):
        blocked[:, t] = running
        block_arg[:, t] = run_arg
        cand = order[:, t]
        # strictly greater keeps the earliest (lowest-index) maximizer among
        # equal x values because ties are then resolved by index order below
        better = (x_sorted[:, t] > running) | (
            (x_sorted[:, t] == running) & (cand < run_arg)
        )
        running = np.where(better, x_sorted[:, t], running)
        run_arg = np.where(better, cand, run_arg)
    beta_sorted = np.minimum(x_sorted, 1.0 - blocked)
    beta = np.empty_like(beta_sorted)
    np.put_along_axis(beta, order, beta_sorted, axis=1)
    kstar = np.empty_like(block_arg)
    np.put_along_axis(kstar, order, block_arg, axis=1)
    has_blocker = np.empty_like(beta, dtype=bool)
    np.put_along_axis(has_blocker, order, np.arange(J)[None, :] > 0, axis=1)

    r_order = np.argsort(-r, axis=1, kind="stable")
    cum = np.cumsum(np.take_along_axis(beta, r_order, axis=1), axis=1)
    filled = cum >= 1.0 - _BETA_FILL_TOL
    if not filled[:, -1].all():
        raise BendersError("subproblem underfilled: sum(beta) < 1")
    crit_pos = filled.argmax(axis=1)
    crit = np.take_along_axis(r_order, crit_pos[:, None], axis=1)[:, 0]
    lam = r[np.arange(n), crit]
    eta = np.maximum(r - lam[:, None], 0.0)

    # branch attribution: exact float comparison is safe because the min
    # returns one of its operands bitwise
    x_branch = beta == x[None, :]
    mu_mask = (eta > 0.0) & ~x_branch & has_blocker
    nu = np.where((eta > 0.0) & x_branch, eta, 0.0)

    cuts = []
    for t in range(n):
        coeffs = nu[t].copy()
        inter = lam[t]
        mj = np.flatnonzero(mu_mask[t])
        if mj.size:
            charges = eta[t, mj]
            inter += charges.sum()
            np.subtract.at(coeffs, kstar[t, mj], charges)
        cuts.append(BendersCut(scenario=int(rows[t]), intercept=float(inter), coeffs=coeffs))
    return cuts


def knapsack_values_batch(x, inst: Instance, rows=None) -> np.ndarray:
    """Knapsack-subproblem optima for the selected scenarios at x."""
    x = np.asarray(x, dtype=float)
    scen = inst.scenarios
    if rows is None:
        rows = np.arange(scen.n)
    beta = beta_weights_batch(x, inst, rows=rows)
    r = scen.r[rows]
    order = np.argsort(-r, axis=1, kind="stable")
    cum = np.cumsum(np.take_along_axis(beta, order, axis=1), axis=1)
    filled = cum >= 1.0 - _BETA_FILL_TOL
    if not filled[:, -1].all():
        raise BendersError("subproblem underfilled: sum(beta) < 1")
    pos = filled.argmax(axis=1)
    crit = np.take_along_axis(order, pos[:, None], axis=1)[:, 0]
    lam = r[np.arange(len(rows)), crit]
    eta = np.maximum(r - lam[:, None], 0.0)
    return lam + (eta * beta).sum(axis=1)


# ---------------------------------------------------------------------------
# Stage 1: iterative cutting on the box relaxation

def _add_violated(master, cuts, x_bar, theta, mrv) -> int:
    added = 0
    for cut in cuts:
        viol = theta[cut.scenario] - cut.value(x_bar)
        if viol > mrv * max(1.0, abs(theta[cut.scenario])):
            added += master.add_cut(cut)
    return added


def default_stabilizer_center(inst: Instance) -> np.ndarray:
    """Interior point of conv(Omega): fixed options at 1, the rest sharing
    the cardinality mass uniformly."""
    space = inst.space
    J = space.n_options
    x = np.zeros(J)
    fixed = sorted(space.fixed_ones)
    for j in fixed:
        x[j] = 1.0
    card = _cardinality(space)
    free = [j for j in range(J) if j not in space.fixed_ones]
    if free:
        x[free] = max(card - len(fixed), 0.0) / len(free)
    return x


def _cardinality(space) -> float:
    """Total offer mass implied by the all-ones row of the decision space."""
    for c, rhs in list(space.eq) + list(space.ineq):
        if np.allclose(c, 1.0):
            return float(rhs)
    return float(max(len(space.fixed_ones), 1))


class MasterProblem:
    """LP relaxation of the planner's master: variables x then theta.

    Cut rows whose dual stays zero for several consecutive solves are purged
    from the LP once the row count passes a floor (they may be re-separated
    later); every master optimum remains a valid upper bound either way, and
    the engine's reported bounds are running minima over solves.
    """

    PURGE_FLOOR = 2000      # keep at least this many cut rows before purging
    PURGE_AGE = 12          # consecutive slack solves before a row may go

    def __init__(self, inst: Instance, backend: str = "auto", purge: bool = True):
        self.inst = inst
        space = inst.space
        self.J = space.n_options
        self.N = inst.n_scenarios
        self.backend = backend
        self.purge = purge
        self.c = np.concatenate([np.zeros(self.J), np.full(self.N, 1.0 / self.N)])
        self.theta_lb = inst.scenarios.r.min(axis=1)
        self.theta_ub = inst.scenarios.r.max(axis=1)
        self.rows_a = []      # structural <= rows on x
        self.rows_b = []
        for cf, rhs in space.ineq:
            self.rows_a.append(np.concatenate([cf, np.zeros(self.N)]))
            self.rows_b.append(rhs)
        self.eq_a = []
        self.eq_b = []
        for cf, rhs in space.eq:
            self.eq_a.append(np.concatenate([cf, np.zeros(self.N)]))
            self.eq_b.append(rhs)
        self.cut_rows = []    # (scenario, coeffs, intercept)
        self._ages = []
        self._seen = set()
        self.total_cuts_added = 0
        self.x_lb = np.zeros(self.J)
        self.x_ub = np.ones(self.J)
        for j in space.fixed_ones:
            self.x_lb[j] = 1.0

    def add_cut(self, cut: BendersCut) -> bool:
        key = cut.key()
        if key in self._seen:
            return False
        self._seen.add(key)
        self.cut_rows.append((cut.scenario, cut.coeffs.astype(float), float(cut.intercept)))
        self._ages.append(0)
        self.total_cuts_added += 1
        return True

    @property
    def n_cuts(self) -> int:
        return len(self.cut_rows)

    def _cut_matrix(self):
        J, N = self.J, self.N
        n_cuts = len(self.cut_rows)
        if n_cuts == 0:
            return None, np.zeros(0)
        coeff_block = np.vstack([-c for _, c, _ in self.cut_rows])
        theta_cols = np.fromiter((i for i, _, _ in self.cut_rows), dtype=np.int64, count=n_cuts)
        b = np.fromiter((b for _, _, b in self.cut_rows), dtype=float, count=n_cuts)
        theta_block = sp.csr_matrix(
            (np.ones(n_cuts), (np.arange(n_cuts), theta_cols)), shape=(n_cuts, N)
        )
        a = sp.hstack([sp.csr_matrix(coeff_block), theta_block], format="csr")
        return a, b

    def _maybe_purge(self, sol):
        if not self.purge or sol.status != sx.OPTIMAL or not self.cut_rows:
            return
        offset = len(self.rows_a)
        duals = sol.duals_ub[offset:]
        for k in range(len(self._ages)):
            self._ages[k] = 0 if duals[k] > 1e-12 else self._ages[k] + 1
        if len(self.cut_rows) <= self.PURGE_FLOOR:
            return
        keep = [k for k, age in enumerate(self._ages) if age < self.PURGE_AGE]
        if len(keep) == len(self.cut_rows):
            return
        dropped = set(range(len(self.cut_rows))) - set(keep)
        for k in dropped:
            i, coeffs, intercept = self.cut_rows[k]
            self._seen.discard(BendersCut(i, intercept, coeffs).key())
        self.cut_rows = [self.cut_rows[k] for k in keep]
        self._ages = [self._ages[k] for k in keep]

    def solve(self, x_lb=None, x_ub=None) -> sx.LpSolution:
        J, N = self.J, self.N
        n_rows = len(self.rows_a) + len(self.cut_rows)
        lb = np.concatenate([self.x_lb if x_lb is None else x_lb, self.theta_lb])
        ub = np.concatenate([self.x_ub if x_ub is None else x_ub, self.theta_ub])
        a_eq = np.vstack(self.eq_a) if self.eq_a else None
        b_eq = np.asarray(self.eq_b) if self.eq_a else None
        dense_ok = (n_rows + 1) * (J + N + 1) <= sx._DENSE_CELLS and self.backend != "highs"
        if dense_ok:
            a_ub = np.zeros((n_rows, J + N))
            b_ub = np.zeros(n_rows)
            for k, (a, b) in enumerate(zip(self.rows_a, self.rows_b)):
                a_ub[k] = a
                b_ub[k] = b
            k = len(self.rows_a)
            for i, coeffs, intercept in self.cut_rows:
                a_ub[k, :J] = -coeffs
                a_ub[k, J + i] = 1.0
                b_ub[k] = intercept
                k += 1
        else:
            cut_a, cut_b = self._cut_matrix()
            parts, rhs = [], []
            if self.rows_a:
                parts.append(sp.csr_matrix(np.vstack(self.rows_a)))
                rhs.append(np.asarray(self.rows_b, dtype=float))
            if cut_a is not None:
                parts.append(cut_a)
                rhs.append(cut_b)
            a_ub = sp.vstack(parts, format="csr") if parts else None
            b_ub = np.concatenate(rhs) if rhs else None
        p = sx.LpProblem(c=self.c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq,
                         lb=lb, ub=ub, name="master")
        sol = sx.solve_lp(p, backend=self.backend if not dense_ok else "dense")
        self._maybe_purge(sol)
        return sol


def stage1(inst: Instance, rho: float, stabilizer: StabilizerConfig = None,
           mrv: float = 1e-5, iteration_cap: int = STAGE1_ITERATION_CAP,
           master: MasterProblem = None, backend: str = "auto",
           deadline: float = None) -> Stage1Result:
    """Iterative Benders on the box relaxation: separate fractional cuts for
    violated scenarios until |UB - LB| / LB <= rho.

    LB comes from rounding the iterate to a feasible decision and evaluating
    it exactly; UB is the master optimum, nonincreasing as cuts accumulate.
    """
    stab = stabilizer or StabilizerConfig(enabled=False)
    master = master or MasterProblem(inst, backend=backend)
    x_center = None
    rho_t = stab.rho0
    trace = []
    ub = np.inf
    lb = -np.inf
    best_x = None
    x_bar = None
    converged = False
    iters = 0
    for iters in range(1, iteration_cap + 1):
        sol = master.solve()
        if sol.status != sx.OPTIMAL:
            raise BendersError(f"stage-1 master is {sol.status}")
        ub = min(ub, sol.objective)
        x_bar = sol.x[: master.J]
        theta = sol.x[master.J :]
        if stab.enabled:
            if x_center is None:
                x_center = np.asarray(stab.center, dtype=float) if stab.center is not None \
                    else default_stabilizer_center(inst)
            x_sep = rho_t * x_bar + (1.0 - rho_t) * x_center
            x_center = (x_center + x_sep) / 2.0
            trace.append(rho_t)
            rho_t = min(rho_t + stab.increment, stab.cap)
        else:
            x_sep = x_bar
        x_round = round_to_feasible(inst.space.app_tag, x_sep, inst.space)
        cand = sample_objective(x_round, inst)
        if cand > lb:
            lb, best_x = cand, x_round
        gap = abs(ub - lb) / max(abs(lb), 1e-9)
        if gap <= rho or abs(ub - lb) <= 1e-12:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
        added = _add_violated(master, fractional_cuts_batch(x_sep, inst), x_bar, theta, mrv)
        if added == 0 and stab.enabled and not np.array_equal(x_sep, x_bar):
            # stabilized point produced no cut separating the raw iterate
            added = _add_violated(master, fractional_cuts_batch(x_bar, inst), x_bar, theta, mrv)
        if added == 0:
            converged = gap <= rho
            break
    else:  # pragma: no cover - loop exits via break in practice
        pass
    if iters >= iteration_cap and not converged:
        warnings.warn("stage 1 hit its iteration cap before reaching tolerance")
    return Stage1Result(
        cuts=[BendersCut(i, b, a) for (i, a, b) in master.cut_rows],
        upper_bound=float(ub),
        lower_bound=float(lb),
        x_frac=x_bar,
        best_x=best_x,
        iterations=iters,
        stabilizer_trace=trace,
        converged=converged,
    )
