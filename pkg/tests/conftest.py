"""Shared fixtures: the 3-option worked instance, random small-instance
factories per application family, and LP oracles for the per-scenario choice
subproblem and its duals (solved with the dense simplex)."""

import numpy as np
import pytest

from choiceplan import apps
from choiceplan import model as md
from choiceplan import simplex as sx


@pytest.fixture
def e1():
    """Worked toy: 3 options (0 = outside), 2 scenarios, x0 fixed, x1+x2 <= 1."""
    space = md.DecisionSpace(
        n_options=3, ineq=[([0.0, 1.0, 1.0], 1.0)], fixed_ones={0}, app_tag=md.GENERIC
    )
    u = np.array([[0.0, 2.0, 1.0], [0.0, 1.0, 3.0]])
    r = np.array([[0.0, 5.0, 8.0], [0.0, 5.0, 8.0]])
    return md.make_instance(space, u, r)


def random_params(family, seed, max_j=12, n_max=100, tau_max=4):
    """Small random parameter set of a given application family."""
    rng = np.random.default_rng(seed)
    n_scen = int(rng.integers(10, n_max + 1))
    if family == "caop":
        flavor = seed % 4
        n_prod = int(rng.integers(3, max_j))
        tau = int(rng.integers(1, min(tau_max, n_prod) + 1))
        if flavor == 0:
            return apps.CaopProbitParams(
                n_products=n_prod, tau=tau, noise_variance=float(rng.uniform(50, 200)),
                instance_seed=seed + 1, scenario_seed=seed + 1000, n_scenarios=n_scen)
        if flavor == 1:
            return apps.CaopExponomialParams(
                n_products=n_prod, gamma=float((tau + 1) / (n_prod + 1)),
                sigma_r=float(rng.uniform(0.2, 0.5)), sigma_u=float(rng.uniform(0.5, 3.0)),
                instance_seed=seed + 1, scenario_seed=seed + 1000, n_scenarios=n_scen)
        if flavor == 2:
            return apps.CaopKappaParams(
                n_options=n_prod + 1, kappa=float(rng.choice([-1.0, 0.0, 1.0])), tau=tau,
                instance_seed=seed + 1, scenario_seed=seed + 1000, n_scenarios=n_scen)
        return apps.CaopMmnlParams(
            n_products=n_prod, tau=tau, r_bar=float(rng.choice([10.0, 100.0])),
            dispersion=float(rng.choice([2.0, 4.0])),
            instance_seed=seed + 1, scenario_seed=seed + 1000, n_scenarios=n_scen)
    if family == "flop":
        combos = [(2, 2), (2, 3), (2, 4), (2, 5), (3, 2), (3, 3)]
        n_fac, n_lev = combos[seed % len(combos)]
        tau = int(rng.integers(1, min(tau_max, n_fac) + 1))
        return apps.FlopParams(
            n_facilities=n_fac, n_levels=n_lev, tau=tau,
            instance_seed=seed + 1, scenario_seed=seed + 1000, n_scenarios=n_scen)
    if family == "msmflp":
        n_fac = int(rng.integers(4, max_j + 1))
        tau = int(rng.integers(1, min(tau_max, n_fac - 1) + 1))
        return apps.MsmflpParams(
            n_facilities=n_fac, tau=tau, outside=float(rng.uniform(3, 20)),
            instance_seed=seed + 1, scenario_seed=seed + 1000, n_scenarios=n_scen)
    raise ValueError(family)


def random_instance(family, seed, **kw):
    return apps.generate(random_params(family, seed, **kw))


def random_feasible_fraction(space, rng, n_mix=4):
    """Random point of conv(Omega): a convex combination of feasible
    integer decisions."""
    pool = []
    for x in md.enumerate_feasible(space):
        pool.append(x)
        if len(pool) >= 200:
            break
    picks = rng.integers(0, len(pool), size=min(n_mix, len(pool)))
    w = rng.random(picks.size)
    w /= w.sum()
    return np.sum([wi * pool[k] for wi, k in zip(w, picks)], axis=0)


# ---------------------------------------------------------------------------
# LP oracles for the choice subproblem family

def sp_lp_problem(x, i, inst):
    """The per-scenario choice LP: max r.y, sum y = 1, y <= x, ranking rows."""
    u = inst.scenarios.u[i]
    r = inst.scenarios.r[i]
    J = u.size
    x = np.asarray(x, dtype=float)
    a_ub = np.zeros((2 * J, J))
    b_ub = np.zeros(2 * J)
    a_ub[:J] = np.eye(J)
    b_ub[:J] = x
    for k in range(J):
        a_ub[J + k, u < u[k]] = 1.0
        b_ub[J + k] = 1.0 - x[k]
    return sx.LpProblem(c=r, a_ub=a_ub, b_ub=b_ub,
                        a_eq=np.ones((1, J)), b_eq=np.array([1.0]),
                        lb=np.zeros(J), ub=np.full(J, np.inf))


def sp_lp_value(x, i, inst):
    sol = sx.solve_lp(sp_lp_problem(x, i, inst), backend="dense")
    assert sol.status == sx.OPTIMAL
    return sol.objective


def dsp_lp_value(x, i, inst):
    """Optimum of the dual subproblem solved directly as an LP: variables
    (lambda free, mu >= 0, nu >= 0), one row per option."""
    u = inst.scenarios.u[i]
    r = inst.scenarios.r[i]
    J = u.size
    x = np.asarray(x, dtype=float)
    nv = 1 + 2 * J  # lambda, mu_0..mu_{J-1}, nu_0..nu_{J-1}
    a_ub = np.zeros((J, nv))
    for j in range(J):
        a_ub[j, 0] = -1.0
        a_ub[j, 1 + J + j] = -1.0
        a_ub[j, 1:1 + J][u > u[j]] = -1.0
    b_ub = -r
    c = np.zeros(nv)
    c[0] = -1.0
    c[1:1 + J] = -(1.0 - x)
    c[1 + J:] = -x
    lb = np.concatenate([[-np.inf], np.zeros(2 * J)])
    p = sx.LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, lb=lb, ub=np.full(nv, np.inf))
    sol = sx.solve_lp(p, backend="dense")
    assert sol.status == sx.OPTIMAL
    return -sol.objective


def nsp_lp_problem(beta, i, inst):
    """Knapsack-form subproblem with the bound rows kept explicit so their
    duals line up with eta."""
    r = inst.scenarios.r[i]
    J = r.size
    return sx.LpProblem(c=r, a_ub=np.eye(J), b_ub=np.asarray(beta, dtype=float),
                        a_eq=np.ones((1, J)), b_eq=np.array([1.0]),
                        lb=np.zeros(J), ub=np.full(J, np.inf))


def nsp_lp_value(beta, i, inst):
    sol = sx.solve_lp(nsp_lp_problem(beta, i, inst), backend="dense")
    assert sol.status == sx.OPTIMAL
    return sol.objective
