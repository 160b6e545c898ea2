"""Core problem representation: decision polyhedron, realized scenarios,
per-scenario choice evaluation, the sample objective, cooperative-scenario
analysis, and the brute-force enumeration oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CAOP = "CAOP"
FLOP = "FLoP"
MSMFLP = "MSMFLP"
GENERIC = "GENERIC"
APP_TAGS = (CAOP, FLOP, MSMFLP, GENERIC)

ENUMERATION_CAP = 24  # free binary variables; 2^24 evaluations is desk-scale
FEAS_TOL = 1e-9

# Utilities closer than this within one scenario row get a deterministic
# jitter of column_index * _TIE_STEP so argmax choices are unambiguous.
_TIE_TOL = 1e-12
_TIE_STEP = 1e-9


class ModelError(ValueError):
    """Invalid decision, instance, or enumeration request."""


@dataclass(frozen=True)
class DecisionSpace:
    """Binary polyhedron {x : c x <= d, h x = g, x_j = 1 for fixed j}."""

    n_options: int
    ineq: tuple = ()       # ((coeff row, rhs), ...)
    eq: tuple = ()
    fixed_ones: frozenset = frozenset()
    app_tag: str = GENERIC
    groups: tuple = ()     # FLoP: per-facility option index groups

    def __post_init__(self):
        if self.n_options < 1:
            raise ModelError("n_options must be >= 1")
        if self.app_tag not in APP_TAGS:
            raise ModelError(f"unknown app_tag {self.app_tag!r}")
        object.__setattr__(self, "fixed_ones", frozenset(int(j) for j in self.fixed_ones))
        if any(j < 0 or j >= self.n_options for j in self.fixed_ones):
            raise ModelError("fixed index out of range")
        ineq = tuple((np.asarray(c, dtype=float), float(r)) for c, r in self.ineq)
        eq = tuple((np.asarray(c, dtype=float), float(r)) for c, r in self.eq)
        for c, _ in ineq + eq:
            if c.shape != (self.n_options,):
                raise ModelError("constraint row length must equal n_options")
        object.__setattr__(self, "ineq", ineq)
        object.__setattr__(self, "eq", eq)
        object.__setattr__(self, "groups", tuple(tuple(int(j) for j in g) for g in self.groups))

    @property
    def n_free(self) -> int:
        return self.n_options - len(self.fixed_ones)

    def is_feasible(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_options,):
            return False
        if np.any(np.abs(x - np.round(x)) > tol) or np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        return self.relaxed_feasible(x, tol)

    def relaxed_feasible(self, x, tol: float = FEAS_TOL) -> bool:
        """Membership in the box relaxation (0 <= x <= 1 plus all rows)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        if any(abs(x[j] - 1.0) > tol for j in self.fixed_ones):
            return False
        for c, r in self.ineq:
            if float(c @ x) > r + tol * (1.0 + abs(r)):
                return False
        for c, r in self.eq:
            if abs(float(c @ x) - r) > tol * (1.0 + abs(r)):
                return False
        return True


def repair_utility_ties(u: np.ndarray, tol: float = _TIE_TOL, step: float = _TIE_STEP):
    """Return (utilities, repaired row indices) with per-row distinct entries.

    Rows containing a pair closer than `tol` get column_index * step added to
    every entry, which preserves ranks outside the tied pairs.
    """
    u = np.array(u, dtype=float)
    n, m = u.shape
    jitter = np.arange(m) * step
    repaired = []
    for _ in range(4):
        s = np.sort(u, axis=1)
        gaps = np.min(np.diff(s, axis=1), axis=1) if m > 1 else np.full(n, np.inf)
        bad = np.flatnonzero(gaps <= tol)
        if bad.size == 0:
            return u, repaired
        u[bad] += jitter
        repaired.extend(int(i) for i in bad)
    raise ModelError("could not repair utility ties")


@dataclass(frozen=True)
class ScenarioSet:
    """Realized utility and reward matrices, one row per scenario."""

    u: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if u.ndim != 2 or u.shape != r.shape:
            raise ModelError("u and r must be matrices of identical shape")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(r))):
            raise ModelError("scenario entries must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def n_options(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class Instance:
    space: DecisionSpace
    scenarios: ScenarioSet
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenarios.n_options != self.space.n_options:
            raise ModelError("scenario columns must match n_options")

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.n


def make_instance(space, u, r, provenance=None, repair_ties=True) -> Instance:
    """Assemble an Instance, repairing utility ties and recording the repair."""
    prov = dict(provenance or {})
    if repair_ties:
        u, repaired = repair_utility_ties(np.asarray(u, dtype=float))
        if repaired:
            prov["tie_repaired_rows"] = repaired
    return Instance(space=space, scenarios=ScenarioSet(u=u, r=r), provenance=prov)


def _offered_indices(x, space: DecisionSpace) -> np.ndarray:
    x = np.asarray(x)
    offered = np.flatnonzero(x > 0.5)
    if offered.size == 0:
        raise ModelError("empty offer set")
    return offered


def argmax_by_keys(primary: np.ndarray, secondary: np.ndarray) -> np.ndarray:
    """Row-wise argmax of `primary`, ties by larger `secondary`, then by
    lower column index. Inputs are (n, k); returns positions in [0, k)."""
    top = primary.max(axis=1, keepdims=True)
    cand = primary >= top
    sec = np.where(cand, secondary, -np.inf)
    top2 = sec.max(axis=1, keepdims=True)
    cand &= sec >= top2
    return cand.argmax(axis=1)  # first True = lowest index


def chosen_options(x, scen: ScenarioSet, space: DecisionSpace) -> np.ndarray:
    """Per-scenario chosen option under the rank-list rule (utility argmax on
    the offer set; ties by higher reward then lower index)."""
    offered = _offered_indices(x, space)
    pos = argmax_by_keys(scen.u[:, offered], scen.r[:, offered])
    return offered[pos]


def choose(x, i: int, inst: Instance):
    """Chosen (option, reward) for scenario i under decision x."""
    scen = inst.scenarios
    if not 0 <= i < scen.n:
        raise ModelError("scenario index out of range")
    offered = _offered_indices(x, inst.space)
    row = ScenarioSet(u=scen.u[i : i + 1], r=scen.r[i : i + 1])
    j = int(offered[argmax_by_keys(row.u[:, offered], row.r[:, offered])[0]])
    return j, float(scen.r[i, j])


def scenario_values(x, inst: Instance) -> np.ndarray:
    """phi_i(x) for every scenario: the realized reward of the chosen option."""
    scen = inst.scenarios
    chosen = chosen_options(x, scen, inst.space)
    return scen.r[np.arange(scen.n), chosen]


def sample_objective(x, inst: Instance) -> float:
    """Sample-average objective (1/N) sum_i r_{i, chosen(i)}."""
    return float(scenario_values(x, inst).mean())


def cooperative_fraction(x, inst: Instance) -> float:
    """Share of scenarios whose reward-argmax offered option is also the
    utility-argmax offered option (the cooperative set)."""
    scen = inst.scenarios
    offered = _offered_indices(x, inst.space)
    by_u = argmax_by_keys(scen.u[:, offered], scen.r[:, offered])
    by_r = argmax_by_keys(scen.r[:, offered], scen.u[:, offered])
    return float(np.mean(by_u == by_r))


def enumerate_feasible(space: DecisionSpace, cap: int = ENUMERATION_CAP):
    """Yield every feasible 0/1 decision exactly once, in lexicographic order
    (earlier index more significant)."""
    if space.n_free > cap:
        raise ModelError(f"{space.n_free} free variables exceed the enumeration cap {cap}")
    free = [j for j in range(space.n_options) if j not in space.fixed_ones]
    base = np.zeros(space.n_options, dtype=np.int64)
    for j in space.fixed_ones:
        base[j] = 1
    k = len(free)
    a_ineq = np.vstack([c for c, _ in space.ineq]) if space.ineq else None
    b_ineq = np.array([r for _, r in space.ineq])
    a_eq = np.vstack([c for c, _ in space.eq]) if space.eq else None
    b_eq = np.array([r for _, r in space.eq])
    x = base.copy()
    for code in range(1 << k):
        for t in range(k):
            # bit t of `code` drives free[t]; first free index most significant
            x[free[t]] = (code >> (k - 1 - t)) & 1
        xf = x.astype(float)
        if a_ineq is not None and np.any(a_ineq @ xf > b_ineq + FEAS_TOL * (1 + np.abs(b_ineq))):
            continue
        if a_eq is not None and np.any(np.abs(a_eq @ xf - b_eq) > FEAS_TOL * (1 + np.abs(b_eq))):
            continue
        yield x.copy()


def enumerate_optimal(inst: Instance, cap: int = ENUMERATION_CAP):
    """Exhaustive optimum of the sample objective; ties keep the
    lexicographically smallest decision."""
    best_x, best_v = None, -np.inf
    for x in enumerate_feasible(inst.space, cap=cap):
        v = sample_objective(x, inst)
        if v > best_v:
            best_x, best_v = x, v
    if best_x is None:
        raise ModelError("decision space is empty")
    return best_x, float(best_v)
