"""Application instance generators, per-application rounding heuristics, the
MMNL closed-form objective, and large-sample true-objective estimation.

Each parameter set is a frozen dataclass with an instance seed (static data:
rewards, deterministic utilities, geography) and a scenario seed (the sampled
uncertainty). Generators share their scenario process with `evaluate_true`,
which streams fresh Monte Carlo scenarios in fixed-size chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .model import (CAOP, FLOP, GENERIC, MSMFLP, DecisionSpace, Instance,
                    argmax_by_keys, make_instance)
from .sampling import LHS, MCS, DistributionSpec, inverse_cdf, lhs_probabilities, rng_from

MMNL_SENTINEL = -1e9           # stands in for ln(0) when a product is switched off
EVAL_CHUNK = 32768             # evaluate_true streams scenarios in chunks this size
_MIN_SQ_DIST = 1e-12

# substream keys: (app, purpose); purposes: 0 static, 1.. scenario blocks, 100+ eval chunks
_APP_KEYS = {"caop_exponomial": 1, "caop_mmnl": 2, "caop_probit": 3,
             "caop_kappa": 4, "flop": 5, "msmflp": 6}


class AppError(ValueError):
    pass


def _draw(rng, spec: DistributionSpec, size):
    u = np.clip(rng.random(size), 1e-15, 1.0 - 1e-15)
    return inverse_cdf(spec, u)


def _block(scheme, rng, spec, n, d):
    """One scenario block: LHS-stratified or plain Monte Carlo draws."""
    if scheme == LHS:
        return inverse_cdf(spec, lhs_probabilities(rng, n, d))
    if scheme == MCS:
        return _draw(rng, spec, (n, d))
    raise AppError(f"unknown sampling scheme {scheme!r}")


def _caop_space(n_options: int, cardinality: float) -> DecisionSpace:
    ones = np.ones(n_options)
    return DecisionSpace(
        n_options=n_options,
        ineq=((ones, float(cardinality)),),
        fixed_ones=frozenset({0}),
        app_tag=CAOP,
    )


# ---------------------------------------------------------------------------
# CAOP under the exponomial choice model (utility V_a - exp noise)

@dataclass(frozen=True)
class CaopExponomialParams:
    n_products: int
    gamma: float = 0.3
    sigma_r: float = 0.2
    sigma_u: float = 1.0
    zeta: float = 1.0
    instance_seed: int = 1
    scenario_seed: int = 1
    n_scenarios: int = 300
    scheme: str = LHS

    def __post_init__(self):
        if self.n_products < 1 or not 0 < self.gamma <= 1:
            raise AppError("need n_products >= 1 and 0 < gamma <= 1")
        if min(self.sigma_r, self.sigma_u, self.zeta) <= 0:
            raise AppError("sigma_r, sigma_u, zeta must be > 0")

    _key = "caop_exponomial"

    @property
    def n_options(self):
        return self.n_products + 1

    def space(self):
        return _caop_space(self.n_options, self.gamma * self.n_options)


@lru_cache(maxsize=128)
def _exponomial_static(p: CaopExponomialParams):
    rng = rng_from(p.instance_seed, _APP_KEYS[p._key], 0)
    rewards = np.zeros(p.n_options)
    rewards[1:] = _draw(rng, DistributionSpec.lognormal(0.0, p.sigma_r), p.n_products)
    v = np.zeros(p.n_options)
    v[1:] = -np.sort(-_draw(rng, DistributionSpec.normal(1.0, p.sigma_u), p.n_products))
    return v, rewards


def _exponomial_scenarios(p: CaopExponomialParams, rng, n, scheme):
    v, rewards = _exponomial_static(p)
    xi = _block(scheme, rng, DistributionSpec.exponential(p.zeta), n, p.n_options)
    u = v[None, :] - xi
    return u, np.broadcast_to(rewards, u.shape)


# ---------------------------------------------------------------------------
# CAOP under the mixed multinomial logit model

@dataclass(frozen=True)
class CaopMmnlParams:
    n_products: int
    tau: int
    r_bar: float = 10.0
    dispersion: float = 2.0
    instance_seed: int = 1
    scenario_seed: int = 1
    n_scenarios: int = 500
    scheme: str = LHS

    def __post_init__(self):
        if self.r_bar < 1 or self.dispersion <= 0:
            raise AppError("need r_bar >= 1 and dispersion > 0")
        if not 1 <= self.tau <= self.n_products:
            raise AppError("tau must lie in [1, n_products]")

    _key = "caop_mmnl"

    @property
    def n_options(self):
        return self.n_products + 1

    @property
    def theta2(self):
        # sqrt(e^{t2^2/2} - 1) = D  =>  t2 = sqrt(2 ln(1 + D^2))
        return math.sqrt(2.0 * math.log1p(self.dispersion**2))

    @property
    def theta1(self):
        return math.log(10.0) - self.theta2**2 / 2.0

    def space(self):
        return _caop_space(self.n_options, self.tau + 1)


@lru_cache(maxsize=128)
def _mmnl_static(p: CaopMmnlParams):
    rng = rng_from(p.instance_seed, _APP_KEYS[p._key], 0)
    psi = np.abs(_draw(rng, DistributionSpec.normal(0.0, 1.0), p.n_products))
    alpha = psi / psi.sum()
    rewards = np.zeros(p.n_options)
    rewards[1:] = _draw(rng, DistributionSpec.uniform(1.0, p.r_bar), p.n_products)
    return alpha, rewards


def _mmnl_ideal_utilities(p: CaopMmnlParams, bern, gam):
    """V_ia = ln(alpha_a * bern_ia) + t1 + t2 * gam_ia, sentinel when off."""
    alpha, _ = _mmnl_static(p)
    v = np.log(alpha)[None, :] + p.theta1 + p.theta2 * gam
    return np.where(bern > 0.5, v, MMNL_SENTINEL)


def _mmnl_scenarios(p: CaopMmnlParams, rng, n, scheme):
    _, rewards = _mmnl_static(p)
    a = p.n_products
    bern = _block(scheme, rng, DistributionSpec.bernoulli(0.5), n, a)
    gam = _block(scheme, rng, DistributionSpec.normal(0.0, 1.0), n, a)
    eps = _block(scheme, rng, DistributionSpec.gumbel(0.0, 1.0), n, p.n_options)
    u = np.empty((n, p.n_options))
    u[:, 0] = eps[:, 0]
    u[:, 1:] = _mmnl_ideal_utilities(p, bern, gam) + eps[:, 1:]
    return u, np.broadcast_to(rewards, u.shape)


def mmnl_segments(p: CaopMmnlParams, n_segments: int, seed: int) -> np.ndarray:
    """Ideal-utility draws V_ia (segments x products) without Gumbel noise,
    for the closed-form objective."""
    rng = rng_from(seed, _APP_KEYS[p._key], 50)
    bern = _draw(rng, DistributionSpec.bernoulli(0.5), (n_segments, p.n_products))
    gam = _draw(rng, DistributionSpec.normal(0.0, 1.0), (n_segments, p.n_products))
    return _mmnl_ideal_utilities(p, bern, gam)


def mmnl_closed_objective(x, v_segments: np.ndarray, rewards) -> float:
    """Exact expected revenue sum_a R_a x_a e^{V_ia} / (sum_a x_a e^{V_ia} + 1)
    averaged over segments; overflow-guarded by a max shift.

    `x` and `rewards` cover the products only (the outside option has weight
    e^0 accounted in the denominator).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v_segments, dtype=float)
    r = np.asarray(rewards, dtype=float)
    if v.ndim != 2 or v.shape[1] != x.size or r.size != x.size:
        raise AppError("segment matrix, x, and rewards disagree on product count")
    offered = x > 0.5
    if not offered.any():
        return 0.0
    vo = v[:, offered]
    shift = np.maximum(vo.max(axis=1), 0.0)
    w = np.exp(vo - shift[:, None])
    denom = w.sum(axis=1) + np.exp(-shift)
    numer = w @ r[offered]
    return float(np.mean(numer / denom))


# ---------------------------------------------------------------------------
# CAOP under the multinomial probit model

@dataclass(frozen=True)
class CaopProbitParams:
    n_products: int
    tau: int
    noise_variance: float = 100.0
    instance_seed: int = 1
    scenario_seed: int = 1
    n_scenarios: int = 300
    scheme: str = LHS

    def __post_init__(self):
        if self.noise_variance <= 0:
            raise AppError("noise variance must be > 0")
        if not 1 <= self.tau <= self.n_products:
            raise AppError("tau must lie in [1, n_products]")

    _key = "caop_probit"

    @property
    def n_options(self):
        return self.n_products + 1

    def space(self):
        return _caop_space(self.n_options, self.tau + 1)


@lru_cache(maxsize=128)
def _probit_static(p: CaopProbitParams):
    rng = rng_from(p.instance_seed, _APP_KEYS[p._key], 0)
    v = np.empty(p.n_options)
    v[0] = 50.0
    v[1:] = _draw(rng, DistributionSpec.uniform(0.0, 100.0), p.n_products)
    rewards = np.zeros(p.n_options)
    rewards[1:] = _draw(rng, DistributionSpec.uniform(0.0, 100.0), p.n_products)
    return v, rewards


def _probit_scenarios(p: CaopProbitParams, rng, n, scheme):
    v, rewards = _probit_static(p)
    xi = _block(scheme, rng, DistributionSpec.normal(0.0, p.noise_variance), n, p.n_options)
    return v[None, :] + xi, np.broadcast_to(rewards, (n, p.n_options))


# ---------------------------------------------------------------------------
# CAOP with tunable reward-utility correlation (V_j = kappa R_j + b_j)

@dataclass(frozen=True)
class CaopKappaParams:
    n_options: int
    kappa: float
    tau: int
    instance_seed: int = 1
    scenario_seed: int = 1
    n_scenarios: int = 300
    scheme: str = LHS

    def __post_init__(self):
        if self.n_options < 2:
            raise AppError("need at least the outside option plus one product")
        if not 1 <= self.tau <= self.n_options - 1:
            raise AppError("tau must lie in [1, n_options - 1]")

    _key = "caop_kappa"

    @property
    def n_products(self):
        return self.n_options - 1

    def space(self):
        return _caop_space(self.n_options, self.tau + 1)


@lru_cache(maxsize=128)
def _kappa_static(p: CaopKappaParams):
    rng = rng_from(p.instance_seed, _APP_KEYS[p._key], 0)
    rewards = np.zeros(p.n_options)
    rewards[1:] = _draw(rng, DistributionSpec.lognormal(0.0, 0.2), p.n_products)
    b = _draw(rng, DistributionSpec.normal(1.0, 1.0), p.n_products)
    v = np.zeros(p.n_options)
    v[1:] = p.kappa * rewards[1:] + b
    return v, rewards


def _kappa_scenarios(p: CaopKappaParams, rng, n, scheme):
    v, rewards = _kappa_static(p)
    xi = _block(scheme, rng, DistributionSpec.exponential(1.0), n, p.n_options)
    return v[None, :] - xi, np.broadcast_to(rewards, (n, p.n_options))


# ---------------------------------------------------------------------------
# FLoP: facility location with discrete pricing levels

@dataclass(frozen=True)
class FlopParams:
    n_facilities: int
    tau: int
    n_levels: int = 10
    budget: float = 10.0
    instance_seed: int = 1
    scenario_seed: int = 1
    n_scenarios: int = 300
    scheme: str = LHS

    def __post_init__(self):
        if self.n_facilities < 1 or self.n_levels < 1:
            raise AppError("need facilities and levels")
        if not 1 <= self.tau <= self.n_facilities:
            raise AppError("tau must lie in [1, n_facilities]")

    _key = "flop"

    @property
    def n_options(self):
        return self.n_facilities * self.n_levels + 1

    def groups(self):
        L = self.n_levels
        return tuple(tuple(range(a * L + 1, a * L + L + 1)) for a in range(self.n_facilities))

    def space(self):
        J = self.n_options
        ones = np.ones(J)
        ineq = []
        for g in self.groups():
            row = np.zeros(J)
            row[list(g)] = 1.0
            ineq.append((row, 1.0))
        return DecisionSpace(
            n_options=J,
            ineq=tuple(ineq),
            eq=((ones, float(self.tau + 1)),),
            fixed_ones=frozenset({0}),
            app_tag=FLOP,
            groups=self.groups(),
        )


@lru_cache(maxsize=128)
def _flop_static(p: FlopParams):
    rng = rng_from(p.instance_seed, _APP_KEYS[p._key], 0)
    coords = _draw(rng, DistributionSpec.uniform(0.0, 20.0), (p.n_facilities, 2))
    prices = np.arange(1, p.n_levels + 1, dtype=float)  # s_l = l
    rewards = np.zeros(p.n_options)
    rewards[1:] = np.tile(prices, p.n_facilities)
    return coords, prices, rewards


def _flop_scenarios(p: FlopParams, rng, n, scheme):
    coords, prices, rewards = _flop_static(p)
    pts = _block(scheme, rng, DistributionSpec.uniform(0.0, 20.0), n, 2)
    d = np.hypot(pts[:, 0:1] - coords[None, :, 0], pts[:, 1:2] - coords[None, :, 1])
    u = np.empty((n, p.n_options))
    u[:, 0] = -p.budget
    cost = d[:, :, None] + prices[None, None, :]
    u[:, 1:] = -cost.reshape(n, -1)
    return u, np.broadcast_to(rewards, u.shape)


# ---------------------------------------------------------------------------
# MSMFLP: market-share-maximizing facility location (partially binary rule)

@dataclass(frozen=True)
class MsmflpParams:
    n_facilities: int
    tau: int
    outside: float = 10.0
    instance_seed: int = 1
    scenario_seed: int = 1
    n_scenarios: int = 500
    scheme: str = LHS

    def __post_init__(self):
        if self.outside < 0:
            raise AppError("outside utility must be >= 0")
        if not 1 <= self.tau <= self.n_facilities:
            raise AppError("tau must lie in [1, n_facilities]")

    _key = "msmflp"

    @property
    def n_options(self):
        return self.n_facilities

    def space(self):
        ones = np.ones(self.n_facilities)
        return DecisionSpace(
            n_options=self.n_facilities,
            eq=((ones, float(self.tau)),),
            app_tag=MSMFLP,
        )


@lru_cache(maxsize=128)
def _msmflp_static(p: MsmflpParams):
    rng = rng_from(p.instance_seed, _APP_KEYS[p._key], 0)
    coords = _draw(rng, DistributionSpec.uniform(0.0, 20.0), (p.n_facilities, 2))
    attract = _draw(rng, DistributionSpec.uniform(1.0, 20.0), p.n_facilities)
    return coords, attract


def _msmflp_scenarios(p: MsmflpParams, rng, n, scheme):
    coords, attract = _msmflp_static(p)
    pts = _block(scheme, rng, DistributionSpec.normal(10.0, 100.0 / 3.0), n, 2)
    d2 = (pts[:, 0:1] - coords[None, :, 0]) ** 2 + (pts[:, 1:2] - coords[None, :, 1]) ** 2
    u = attract[None, :] / np.maximum(d2, _MIN_SQ_DIST)
    r = u / (u + p.outside)
    return u, r


# ---------------------------------------------------------------------------
# shared surface

AppParams = (CaopExponomialParams, CaopMmnlParams, CaopProbitParams,
             CaopKappaParams, FlopParams, MsmflpParams)

_SCENARIO_FNS = {
    CaopExponomialParams: _exponomial_scenarios,
    CaopMmnlParams: _mmnl_scenarios,
    CaopProbitParams: _probit_scenarios,
    CaopKappaParams: _kappa_scenarios,
    FlopParams: _flop_scenarios,
    MsmflpParams: _msmflp_scenarios,
}


def scenario_matrices(params, seed: int, n: int, scheme: str):
    """Realized (u, r) for n scenarios drawn from the app's process."""
    fn = _SCENARIO_FNS[type(params)]
    rng = rng_from(seed, _APP_KEYS[params._key], 1)
    u, r = fn(params, rng, n, scheme)
    return np.ascontiguousarray(u), np.ascontiguousarray(r)


def generate(params) -> Instance:
    """Build the sampled instance for an application parameter set."""
    u, r = scenario_matrices(params, params.scenario_seed, params.n_scenarios, params.scheme)
    prov = {
        "generator": params._key,
        "params": {k: v for k, v in params.__dict__.items()},
    }
    return make_instance(params.space(), u, r, provenance=prov)


def with_scenario_seed(params, seed: int, n_scenarios: int = None):
    kw = {"scenario_seed": int(seed)}
    if n_scenarios is not None:
        kw["n_scenarios"] = int(n_scenarios)
    return replace(params, **kw)


gen_caop_exponomial = generate
gen_caop_mmnl = generate
gen_caop_probit = generate
gen_caop_kappa = generate
gen_flop = generate
gen_msmflp = generate


def round_to_feasible(app_tag: str, x_frac, space: DecisionSpace) -> np.ndarray:
    """Greedy transform of a fractional assignment into a feasible decision.

    CAOP keeps the largest tau+1 entries (outside always offered), FLoP opens
    the tau facilities with the largest per-facility maximum at that argmax
    level, MSMFLP keeps the largest tau entries. Ties go to the lower index.
    """
    x_frac = np.asarray(x_frac, dtype=float)
    if x_frac.shape != (space.n_options,):
        raise AppError("fractional point has the wrong length")
    if np.any(x_frac < -1e-9) or np.any(x_frac > 1 + 1e-9):
        raise AppError("fractional point must lie in [0, 1]")
    if any(x_frac[j] < 1 - 1e-9 for j in space.fixed_ones):
        raise AppError("fractional point must respect fixed options")
    integral = np.abs(x_frac - np.round(x_frac)) <= 1e-9
    if integral.all():
        xi = np.round(x_frac).astype(np.int64)
        if space.is_feasible(xi):
            return xi
    x = np.zeros(space.n_options, dtype=np.int64)
    if space.app_tag != app_tag:
        raise AppError(f"space is tagged {space.app_tag}, got {app_tag}")
    if app_tag == CAOP:
        card = int(math.floor(_card_rhs(space) + 1e-9))
        order = np.argsort(-x_frac, kind="stable")
        keep = [0] + [int(j) for j in order if j != 0][: card - 1]
        x[keep] = 1
    elif app_tag == FLOP:
        t_vals, k_idx = [], []
        for g in space.groups:
            g = np.asarray(g)
            pos = int(np.argmax(x_frac[g]))
            t_vals.append(x_frac[g][pos])
            k_idx.append(int(g[pos]))
        top = np.argsort(-np.asarray(t_vals), kind="stable")[: _flop_tau(space)]
        x[0] = 1
        x[[k_idx[a] for a in top]] = 1
    elif app_tag == MSMFLP:
        tau = int(round(_card_rhs(space)))
        order = np.argsort(-x_frac, kind="stable")
        x[order[:tau]] = 1
    elif app_tag == GENERIC:
        x = _round_generic(x_frac, space)
    else:
        raise AppError(f"unknown app_tag {app_tag!r}")
    if not space.is_feasible(x):
        raise AppError("rounding produced an infeasible point")
    return x


def _card_rhs(space: DecisionSpace) -> float:
    for c, rhs in list(space.eq) + list(space.ineq):
        if np.allclose(c, 1.0):
            return float(rhs)
    raise AppError("no cardinality row in decision space")


def _flop_tau(space: DecisionSpace) -> int:
    return int(round(_card_rhs(space))) - 1


def _round_generic(x_frac, space: DecisionSpace) -> np.ndarray:
    """Fixed options first, then greedily admit by descending fraction while
    every constraint stays satisfiable; one all-ones equality row is treated
    as a cardinality target."""
    x = np.zeros(space.n_options, dtype=np.int64)
    for j in space.fixed_ones:
        x[j] = 1
    order = np.argsort(-x_frac, kind="stable")
    target = None
    for c, rhs in space.eq:
        if np.allclose(c, 1.0):
            target = int(round(rhs))
    for j in order:
        if x[j]:
            continue
        if target is not None and int(x.sum()) >= target:
            break
        trial = x.copy()
        trial[j] = 1
        ok = all(float(c @ trial) <= rhs + 1e-9 for c, rhs in space.ineq)
        if ok and target is None:
            ok = all(float(c @ trial) <= rhs + 1e-9 for c, rhs in space.eq)
        if ok:
            x = trial
    if not space.is_feasible(x):
        raise AppError("generic rounding failed to reach feasibility")
    return x


def _chosen_rewards(u: np.ndarray, r: np.ndarray, offered: np.ndarray) -> np.ndarray:
    pos = argmax_by_keys(u[:, offered], r[:, offered])
    return r[np.arange(u.shape[0]), offered[pos]]


def evaluate_true(params, x, n_prime: int, seed: int):
    """Large-sample estimate of the true expected reward of x.

    Streams n_prime fresh Monte Carlo scenarios from the app's process and
    returns (mean, estimator variance sum (Q - mean)^2 / (n' (n'-1))).
    """
    values = evaluate_true_many(params, [x], n_prime, seed)
    return values[0]


def evaluate_true_many(params, xs, n_prime: int, seed: int):
    """Evaluate several decisions on one common scenario stream.

    Returns a list of (mean, estimator_variance) tuples, one per decision.
    """
    if n_prime < 2:
        raise AppError("n_prime must be >= 2 for variance estimation")
    fn = _SCENARIO_FNS[type(params)]
    offered = []
    for x in xs:
        x = np.asarray(x)
        off = np.flatnonzero(x > 0.5)
        if off.size == 0:
            raise AppError("empty offer set")
        offered.append(off)
    sums = np.zeros(len(xs))
    sumsqs = np.zeros(len(xs))
    done = 0
    chunk_idx = 0
    while done < n_prime:
        m = min(EVAL_CHUNK, n_prime - done)
        rng = rng_from(seed, _APP_KEYS[params._key], 100 + chunk_idx)
        u, r = fn(params, rng, m, MCS)
        for t, off in enumerate(offered):
            q = _chosen_rewards(u, np.asarray(r), off)
            sums[t] += q.sum()
            sumsqs[t] += (q * q).sum()
        done += m
        chunk_idx += 1
    means = sums / n_prime
    # sum (Q - mean)^2 = sum Q^2 - n mean^2, guarded against float cancellation
    ss = np.maximum(sumsqs - n_prime * means**2, 0.0)
    variances = ss / (n_prime * (n_prime - 1))
    return list(zip(means.tolist(), variances.tolist()))
