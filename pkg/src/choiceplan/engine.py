"""Branch-and-cut solver for the sampled planning MILP.

Two exact methods plus an oracle: `sbbd` runs the two-stage Benders scheme
(Stage-1 cut pool, then best-bound branch and bound with lazy integer cuts,
fractional cuts at the root, and periodic heuristic separation), `extensive`
does plain branch and bound on the full LP with choice variables, and `enum`
is exhaustive enumeration. Incumbent objectives always come from the exact
sample objective, never from the epigraph variables.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import simplex as sx
from .apps import AppError, round_to_feasible
from .benders import (BendersCut, BendersError, MasterProblem, StabilizerConfig,
                      fractional_cuts_batch, integer_cuts_batch, stage1)
from .model import (CAOP, Instance, ModelError, enumerate_feasible, sample_objective,
                    scenario_values)

OPTIMAL = "optimal"
TIME_LIMIT = "time_limit"
INFEASIBLE = "infeasible"

_PRUNE_TOL = 1e-9
_INT_SEP_TOL = 1e-9      # absolute theta violation closed at integer nodes
_ROOT_PASS_CAP = 50
_INT_ROUND_CAP = 200
OPTIMAL_OGAP_PCT = 0.01  # an instance counts as solved when ogap is below this


class EngineError(RuntimeError):
    pass


class SizeCapError(EngineError):
    """Problem exceeds a configured size cap."""


@dataclass
class SolveConfig:
    method: str = "sbbd"            # sbbd | extensive | enum
    time_limit: float = 3600.0
    mrv: float = 1e-5
    heuristic_period: int = 200
    int_tol: float = 1e-6
    stage1_rho: float = None        # None -> 1e-2 for CAOP, 1e-4 otherwise
    stabilizer: StabilizerConfig = None
    seed: int = 0
    extensive_cap: int = 1_000_000  # max scenarios * options for `extensive`
    enum_cap: int = 24
    lp_backend: str = "auto"

    def __post_init__(self):
        if self.time_limit <= 0 or self.heuristic_period <= 0:
            raise EngineError("limits must be positive")
        if self.method not in ("sbbd", "extensive", "enum"):
            raise EngineError(f"unknown method {self.method!r}")


@dataclass
class SolveStats:
    t_seconds: float = 0.0
    n_nodes: int = 0
    n_cuts: int = 0
    rgap_percent: float = 0.0
    ogap_percent: float = 0.0


@dataclass
class Solution:
    x: np.ndarray = None
    objective: float = float("-inf")
    bound: float = float("inf")
    status: str = OPTIMAL
    stats: SolveStats = field(default_factory=SolveStats)


def default_stage1_rho(app_tag: str) -> float:
    return 1e-2 if app_tag == CAOP else 1e-4


def branch_select(x_frac, int_tol: float = 1e-6) -> int:
    """Most fractional coordinate (|x_j - 0.5| minimal), ties to lowest index."""
    x = np.asarray(x_frac, dtype=float)
    frac = np.abs(x - np.round(x)) > int_tol
    if not frac.any():
        raise EngineError("branch_select called on an integral point")
    scores = np.where(frac, np.abs(x - 0.5), np.inf)
    return int(np.argmin(scores))


def check_choice_uniqueness(x, inst: Instance, tol: float = 1e-12) -> bool:
    """The relaxed choice variables are integral at x iff every scenario's
    utility argmax over the offer set is unique."""
    offered = np.flatnonzero(np.asarray(x) > 0.5)
    u = inst.scenarios.u[:, offered]
    top = u.max(axis=1, keepdims=True)
    return bool(np.all((u >= top - tol).sum(axis=1) == 1))


def _gap_pct(bound: float, value: float) -> float:
    if not np.isfinite(bound) or not np.isfinite(value):
        return float("inf")
    if abs(bound) < 1e-12:
        return 0.0 if abs(value) < 1e-12 else float("inf")
    return (bound - value) / abs(bound) * 100.0


def _finish(x, objective, bound, status, t0, nodes, cuts, z_root) -> Solution:
    rgap = _gap_pct(z_root, objective) if z_root is not None else 0.0
    ogap = _gap_pct(bound, objective)
    if status != INFEASIBLE and ogap < OPTIMAL_OGAP_PCT:
        status = OPTIMAL
    return Solution(
        x=x,
        objective=objective,
        bound=bound,
        status=status,
        stats=SolveStats(
            t_seconds=time.perf_counter() - t0,
            n_nodes=nodes,
            n_cuts=cuts,
            rgap_percent=max(rgap, 0.0),
            ogap_percent=max(ogap, 0.0),
        ),
    )


class _Incumbent:
    def __init__(self, inst, int_tol):
        self.inst = inst
        self.int_tol = int_tol
        self.x = None
        self.value = float("-inf")

    def offer(self, x, value=None):
        x = np.asarray(x)
        if value is None:
            value = sample_objective(x, self.inst)
        if value > self.value + 1e-12:
            if not check_choice_uniqueness(x, self.inst):
                raise EngineError("non-integral choice at incumbent: tied utilities")
            self.x = np.round(np.asarray(x, dtype=float)).astype(np.int64)
            self.value = float(value)
        return value


def solve(inst: Instance, cfg: SolveConfig = None) -> Solution:
    cfg = cfg or SolveConfig()
    if cfg.method == "sbbd":
        return solve_sbbd(inst, cfg)
    if cfg.method == "extensive":
        return solve_extensive(inst, cfg)
    return solve_enum(inst, cfg)


def solve_enum(inst: Instance, cfg: SolveConfig = None) -> Solution:
    cfg = cfg or SolveConfig(method="enum")
    t0 = time.perf_counter()
    best_x, best_v, count = None, -np.inf, 0
    for x in enumerate_feasible(inst.space, cap=cfg.enum_cap):
        count += 1
        v = sample_objective(x, inst)
        if v > best_v:
            best_x, best_v = x, v
    if best_x is None:
        return _finish(None, float("-inf"), float("inf"), INFEASIBLE, t0, count, 0, None)
    return _finish(best_x, best_v, best_v, OPTIMAL, t0, count, 0, None)


# ---------------------------------------------------------------------------
# SBBD: stage 1 + branch and cut on the Benders master

def _integral(x, tol):
    return bool(np.all(np.abs(x - np.round(x)) <= tol))


def _sbbd_heuristic(master, inst, x_bar, theta, mrv, inc) -> int:
    """Round the fractional point, refresh the incumbent, and add the integer
    cuts at the rounded point that cut off (x_bar, theta)."""
    try:
        x_round = round_to_feasible(inst.space.app_tag, x_bar, inst.space)
    except AppError:
        return 0
    inc.offer(x_round)
    intercepts, coeffs, _ = integer_cuts_batch(x_round, inst)
    values_at_bar = intercepts + coeffs @ x_bar
    viol = theta - values_at_bar
    added = 0
    for i in np.flatnonzero(viol > mrv * np.maximum(1.0, np.abs(theta))):
        added += master.add_cut(BendersCut(int(i), float(intercepts[i]), coeffs[i].copy()))
    return added


def _settle_integer_node(master, inst, bounds, sol, inc, int_tol):
    """Lazy integer separation at a node whose LP solution is integral.

    Returns (sol, outcome) with outcome one of "settled" (theta matches the
    exact subproblem values: fathom), "fractional" (LP moved away; keep
    processing), "infeasible".
    """
    x_lb, x_ub = bounds
    for _ in range(_INT_ROUND_CAP):
        x_bar = sol.x[: master.J]
        theta = sol.x[master.J :]
        if not _integral(x_bar, int_tol):
            return sol, "fractional"
        xi = np.round(x_bar).astype(np.int64)
        phi = scenario_values(xi, inst)
        inc.offer(xi, float(phi.mean()))
        viol = theta - phi
        idx = np.flatnonzero(viol > _INT_SEP_TOL)
        if idx.size == 0:
            return sol, "settled"
        intercepts, coeffs, _ = integer_cuts_batch(xi, inst)
        added = 0
        for i in idx:
            added += master.add_cut(BendersCut(int(i), float(intercepts[i]), coeffs[i].copy()))
        if added == 0:
            return sol, "settled"
        sol = master.solve(x_lb, x_ub)
        if sol.status != sx.OPTIMAL:
            return sol, "infeasible"
    return sol, "fractional"  # round cap: branch even though x looks integral


def solve_sbbd(inst: Instance, cfg: SolveConfig = None) -> Solution:
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit
    rho = cfg.stage1_rho if cfg.stage1_rho is not None else default_stage1_rho(inst.space.app_tag)
    master = MasterProblem(inst, backend=cfg.lp_backend)
    try:
        s1 = stage1(inst, rho=rho, stabilizer=cfg.stabilizer, mrv=cfg.mrv,
                    master=master, deadline=deadline)
    except BendersError as e:
        if "infeasible" in str(e):
            return _finish(None, float("-inf"), float("inf"), INFEASIBLE, t0, 0, 0, None)
        raise
    inc = _Incumbent(inst, cfg.int_tol)
    if s1.best_x is not None:
        inc.offer(s1.best_x, s1.lower_bound)
    J = master.J
    root_bounds = (master.x_lb.copy(), master.x_ub.copy())

    # root cut passes: fractional + heuristic separation until quiescent
    z_root = s1.upper_bound
    sol = None
    settled_root = False
    for _ in range(_ROOT_PASS_CAP):
        sol = master.solve()
        if sol.status != sx.OPTIMAL:
            return _finish(None, float("-inf"), float("inf"), INFEASIBLE, t0, 0,
                           master.total_cuts_added, None)
        z_root = sol.objective
        x_bar, theta = sol.x[:J], sol.x[J:]
        if time.perf_counter() > deadline:
            break
        if _integral(x_bar, cfg.int_tol):
            sol, outcome = _settle_integer_node(master, inst, root_bounds, sol, inc, cfg.int_tol)
            z_root = sol.objective if sol.status == sx.OPTIMAL else z_root
            if outcome == "settled":
                settled_root = True
                break
            continue
        added = 0
        for cut in fractional_cuts_batch(x_bar, inst):
            viol = theta[cut.scenario] - cut.value(x_bar)
            if viol > cfg.mrv * max(1.0, abs(theta[cut.scenario])):
                added += master.add_cut(cut)
        added += _sbbd_heuristic(master, inst, x_bar, theta, cfg.mrv, inc)
        if added == 0:
            break

    nodes = 1
    if settled_root:
        return _finish(inc.x, inc.value, z_root, OPTIMAL, t0, nodes, master.total_cuts_added, z_root)

    # best-bound tree on the master; heap keys are parent LP bounds
    seq = 0
    heap = []
    heapq.heappush(heap, (-z_root, seq, root_bounds[0], root_bounds[1]))
    timed_out = False
    while heap:
        if time.perf_counter() > deadline:
            timed_out = True
            break
        neg_bound, _, x_lb, x_ub = heapq.heappop(heap)
        if -neg_bound <= inc.value + _PRUNE_TOL:
            continue
        sol = master.solve(x_lb, x_ub)
        if sol.status != sx.OPTIMAL:
            continue
        if sol.objective <= inc.value + _PRUNE_TOL:
            continue
        nodes += 1
        x_bar, theta = sol.x[:J], sol.x[J:]
        if _integral(x_bar, cfg.int_tol):
            sol, outcome = _settle_integer_node(master, inst, (x_lb, x_ub), sol, inc, cfg.int_tol)
            if outcome in ("settled", "infeasible"):
                continue
            if sol.objective <= inc.value + _PRUNE_TOL:
                continue
            x_bar, theta = sol.x[:J], sol.x[J:]
        if nodes % cfg.heuristic_period == 0:
            added = _sbbd_heuristic(master, inst, x_bar, theta, cfg.mrv, inc)
            for cut in fractional_cuts_batch(x_bar, inst):
                viol = theta[cut.scenario] - cut.value(x_bar)
                if viol > cfg.mrv * max(1.0, abs(theta[cut.scenario])):
                    master.add_cut(cut)
        if _integral(x_bar, cfg.int_tol):
            # integer-round cap was hit; split the box on any still-free
            # variable so the children make progress
            free = np.flatnonzero(x_lb < x_ub)
            if free.size == 0:
                continue
            j = int(free[0])
        else:
            j = branch_select(x_bar, cfg.int_tol)
        seq += 1
        down_ub = x_ub.copy()
        down_ub[j] = 0.0
        heapq.heappush(heap, (-sol.objective, seq, x_lb, down_ub))
        seq += 1
        up_lb = x_lb.copy()
        up_lb[j] = 1.0
        heapq.heappush(heap, (-sol.objective, seq, up_lb, x_ub))

    open_bounds = [-b for (b, _, _, _) in heap]
    if timed_out:
        bound = max([inc.value] + open_bounds + ([z_root] if not open_bounds else []))
        return _finish(inc.x, inc.value, bound, TIME_LIMIT, t0, nodes, master.total_cuts_added, z_root)
    if inc.x is None:
        return _finish(None, float("-inf"), float("inf"), INFEASIBLE, t0, nodes,
                       master.total_cuts_added, z_root)
    return _finish(inc.x, inc.value, inc.value, OPTIMAL, t0, nodes, master.total_cuts_added, z_root)


# ---------------------------------------------------------------------------
# extensive form: branch and bound over the full LP with choice variables

class _ExtensiveLp:
    """Sparse LP of the sampled MILP; x columns first, then y_{ij} row-major."""

    def __init__(self, inst: Instance, include_ranking: bool = True):
        space = inst.space
        scen = inst.scenarios
        N, J = scen.n, space.n_options
        self.N, self.J = N, J
        ny = N * J
        self.c = np.concatenate([np.zeros(J), (scen.r / N).ravel()])
        rows_d, rows_i, rows_j, rhs = [], [], [], []

        def add_row(cols, vals, b):
            k = len(rhs)
            rows_i.extend([k] * len(cols))
            rows_j.extend(cols)
            rows_d.extend(vals)
            rhs.append(b)

        for cf, r0 in space.ineq:
            nz = np.flatnonzero(cf)
            add_row(nz.tolist(), cf[nz].tolist(), float(r0))
        for i in range(N):
            base = J + i * J
            for j in range(J):
                add_row([base + j, j], [1.0, -1.0], 0.0)  # y_ij <= x_j
        if include_ranking:
            for i in range(N):
                u = scen.u[i]
                order = np.argsort(u, kind="stable")  # ascending utility
                below = []
                for t, k in enumerate(order):
                    if t > 0:
                        cols = [J + i * J + int(jj) for jj in order[:t]]
                        add_row(cols + [int(k)], [1.0] * t + [1.0], 1.0)
        self.a_ub = sp.csr_matrix(
            (rows_d, (rows_i, rows_j)), shape=(len(rhs), J + ny)
        )
        self.b_ub = np.asarray(rhs, dtype=float)

        e_d, e_i, e_j, e_rhs = [], [], [], []
        k = 0
        for cf, r0 in space.eq:
            nz = np.flatnonzero(cf)
            e_i.extend([k] * nz.size)
            e_j.extend(nz.tolist())
            e_d.extend(cf[nz].tolist())
            e_rhs.append(float(r0))
            k += 1
        for i in range(N):
            cols = list(range(J + i * J, J + i * J + J))
            e_i.extend([k] * J)
            e_j.extend(cols)
            e_d.extend([1.0] * J)
            e_rhs.append(1.0)
            k += 1
        self.a_eq = sp.csr_matrix((e_d, (e_i, e_j)), shape=(k, J + ny))
        self.b_eq = np.asarray(e_rhs, dtype=float)
        self.x_lb = np.zeros(J)
        self.x_ub = np.ones(J)
        for j in space.fixed_ones:
            self.x_lb[j] = 1.0

    def solve(self, x_lb=None, x_ub=None) -> sx.LpSolution:
        ny = self.N * self.J
        lb = np.concatenate([self.x_lb if x_lb is None else x_lb, np.zeros(ny)])
        ub = np.concatenate([self.x_ub if x_ub is None else x_ub, np.ones(ny)])
        p = sx.LpProblem(c=self.c, a_ub=self.a_ub, b_ub=self.b_ub,
                         a_eq=self.a_eq, b_eq=self.b_eq, lb=lb, ub=ub, name="extensive")
        return sx.solve_lp(p, backend="highs")


def solve_extensive(inst: Instance, cfg: SolveConfig = None, include_ranking: bool = True) -> Solution:
    """Branch and bound on x over the full LP with the choice variables.

    `include_ranking=False` solves the reduced formulation without the
    utility-ranking rows (exact for cooperative instances)."""
    cfg = cfg or SolveConfig(method="extensive")
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit
    if inst.n_scenarios * inst.space.n_options > cfg.extensive_cap:
        raise SizeCapError(
            f"{inst.n_scenarios} x {inst.space.n_options} exceeds the extensive-form cap")
    lp = _ExtensiveLp(inst, include_ranking=include_ranking)
    J = lp.J
    inc = _Incumbent(inst, cfg.int_tol)
    z_root = None
    nodes = 0
    seq = 0
    heap = [(-np.inf, seq, lp.x_lb.copy(), lp.x_ub.copy())]
    timed_out = False
    while heap:
        if time.perf_counter() > deadline:
            timed_out = True
            break
        neg_bound, _, x_lb, x_ub = heapq.heappop(heap)
        if -neg_bound <= inc.value + _PRUNE_TOL:
            continue
        sol = lp.solve(x_lb, x_ub)
        if sol.status != sx.OPTIMAL:
            if z_root is None and sol.status == sx.INFEASIBLE:
                return _finish(None, float("-inf"), float("inf"), INFEASIBLE,
                               t0, nodes, 0, None)
            continue
        nodes += 1
        if z_root is None:
            z_root = sol.objective
        if sol.objective <= inc.value + _PRUNE_TOL:
            continue
        x_bar = sol.x[:J]
        if _integral(x_bar, cfg.int_tol):
            xi = np.round(x_bar).astype(np.int64)
            y = sol.x[J:]
            if np.any(np.abs(y - np.round(y)) > 1e-6):
                raise EngineError("fractional choice variables at an integer decision")
            v = inc.offer(xi)
            if abs(v - sol.objective) > 1e-6 * (1.0 + abs(v)):
                raise EngineError("LP value disagrees with the exact objective at an integer point")
            continue
        j = branch_select(x_bar, cfg.int_tol)
        seq += 1
        down_ub = x_ub.copy()
        down_ub[j] = 0.0
        heapq.heappush(heap, (-sol.objective, seq, x_lb, down_ub))
        seq += 1
        up_lb = x_lb.copy()
        up_lb[j] = 1.0
        heapq.heappush(heap, (-sol.objective, seq, up_lb, x_ub))

    open_bounds = [-b for (b, _, _, _) in heap if np.isfinite(b)]
    if timed_out:
        bound = max([inc.value] + open_bounds + ([z_root] if z_root is not None else []))
        return _finish(inc.x, inc.value, bound, TIME_LIMIT, t0, nodes, 0, z_root)
    if inc.x is None:
        return _finish(None, float("-inf"), float("inf"), INFEASIBLE, t0, nodes, 0, z_root)
    return _finish(inc.x, inc.value, inc.value, OPTIMAL, t0, nodes, 0, z_root)
