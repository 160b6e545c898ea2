"""Statistical validation of solution quality: replicated sample optima, the
large-sample lower bound, their variances, and the relative-gap report with
its one-sided confidence adjustment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .apps import evaluate_true_many, generate, with_scenario_seed
from .sampling import standard_normal_quantile

GAP_CSV_HEADER = "v_hat,v_bar,sigma,delta_pct,delta_alpha_pct"


class SaaError(ValueError):
    pass


@dataclass
class Replication:
    value: float          # sample optimum v_N^m
    x: np.ndarray
    scenario_seed: int


@dataclass
class GapReport:
    v_bar: float
    s2_vbar: float
    v_hat: float
    s2_vhat: float
    sigma2: float
    delta_percent: float
    delta_alpha_percent: float
    alpha: float
    m: int
    n: int
    n_prime: int
    best_x: np.ndarray = None
    best_replication: int = -1
    per_replication: list = field(default_factory=list)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    def to_json(self) -> dict:
        return {
            "v_bar": self.v_bar,
            "s2_vbar": self.s2_vbar,
            "v_hat": self.v_hat,
            "s2_vhat": self.s2_vhat,
            "sigma2": self.sigma2,
            "sigma": self.sigma,
            "delta_percent": self.delta_percent,
            "delta_alpha_percent": self.delta_alpha_percent,
            "alpha": self.alpha,
            "m": self.m,
            "n": self.n,
            "n_prime": self.n_prime,
            "best_replication": self.best_replication,
            "best_x": None if self.best_x is None else [int(v) for v in self.best_x],
            "per_replication": self.per_replication,
        }

    def csv_row(self) -> str:
        return (f"{self.v_hat:.6g},{self.v_bar:.6g},{self.sigma:.6g},"
                f"{self.delta_percent:.4f},{self.delta_alpha_percent:.4f}")


def z_score(alpha: float) -> float:
    """Standard-normal quantile at alpha (z_score(0.95) ~ 1.6449)."""
    if not 0.0 < alpha < 1.0:
        raise SaaError("alpha must lie strictly inside (0, 1)")
    return float(standard_normal_quantile(alpha))


def replicate_solve(params, n: int, m: int, base_seed: int,
                    cfg: engine.SolveConfig = None) -> list:
    """Solve m independent sampled instances (scenario seeds base+1..base+m,
    instance data unchanged) and collect their optima and solutions."""
    if m < 2:
        raise SaaError("variance estimation needs at least M = 2 replications")
    cfg = cfg or engine.SolveConfig()
    out = []
    for k in range(1, m + 1):
        seed = int(base_seed) + k
        inst = generate(with_scenario_seed(params, seed, n_scenarios=n))
        sol = engine.solve(inst, cfg)
        if sol.status == engine.INFEASIBLE or sol.x is None:
            raise SaaError(f"replication with scenario seed {seed} failed: {sol.status}")
        out.append(Replication(value=float(sol.objective), x=sol.x, scenario_seed=seed))
    return out


def estimate_gap(replications, params, n_prime: int, alpha: float,
                 eval_seed: int) -> GapReport:
    """Combine replication optima with a common large-sample evaluation into
    the relative gap Delta and its alpha-level upper bound Delta_alpha."""
    if not replications:
        raise SaaError("no replications given")
    if not 0.0 < alpha < 1.0:
        raise SaaError("alpha must lie strictly inside (0, 1)")
    m = len(replications)
    values = np.array([rep.value for rep in replications])
    v_bar = float(values.mean())
    s2_vbar = float(((values - v_bar) ** 2).sum() / (m * (m - 1))) if m > 1 else 0.0

    keys = [tuple(int(v) for v in rep.x) for rep in replications]
    unique = {}
    for key in keys:
        unique.setdefault(key, len(unique))
    xs = [np.array(k, dtype=np.int64) for k in unique]
    evals = evaluate_true_many(params, xs, n_prime, eval_seed)
    per_rep = [evals[unique[k]] for k in keys]
    best = int(np.argmax([v for v, _ in per_rep]))
    v_hat, s2_vhat = per_rep[best]
    sigma2 = s2_vbar + s2_vhat
    sigma = float(np.sqrt(sigma2))
    denom = abs(v_hat) if abs(v_hat) > 1e-12 else 1e-12
    delta = (v_bar - v_hat) / denom * 100.0
    delta_alpha = delta + z_score(alpha) * sigma / denom * 100.0
    return GapReport(
        v_bar=v_bar,
        s2_vbar=s2_vbar,
        v_hat=float(v_hat),
        s2_vhat=float(s2_vhat),
        sigma2=float(sigma2),
        delta_percent=float(delta),
        delta_alpha_percent=float(delta_alpha),
        alpha=float(alpha),
        m=m,
        n=int(getattr(params, "n_scenarios", 0)),
        n_prime=int(n_prime),
        best_x=replications[best].x,
        best_replication=best,
        per_replication=[{"value": rep.value, "true_estimate": float(v)}
                         for rep, (v, _) in zip(replications, per_rep)],
    )


def gap_report_from_values(v_bar: float, v_hat: float, sigma: float,
                           alpha: float = 0.95, m: int = 0, n: int = 0,
                           n_prime: int = 0) -> GapReport:
    """Pure-arithmetic report from already-computed estimators (no solving)."""
    denom = abs(v_hat) if abs(v_hat) > 1e-12 else 1e-12
    delta = (v_bar - v_hat) / denom * 100.0
    delta_alpha = delta + z_score(alpha) * sigma / denom * 100.0
    return GapReport(
        v_bar=v_bar, s2_vbar=float(sigma) ** 2, v_hat=v_hat, s2_vhat=0.0,
        sigma2=float(sigma) ** 2, delta_percent=float(delta),
        delta_alpha_percent=float(delta_alpha), alpha=alpha, m=m, n=n,
        n_prime=n_prime,
    )


def run_validation(params, n: int, m: int, alpha: float, n_prime: int,
                   cfg: engine.SolveConfig = None, base_seed: int = 0,
                   eval_seed: int = 777) -> GapReport:
    reps = replicate_solve(params, n, m, base_seed, cfg)
    return estimate_gap(reps, params, n_prime, alpha, eval_seed)


def write_report(report: GapReport, json_path=None, csv_path=None):
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(report.to_json(), fh, indent=2)
    if csv_path is not None:
        with open(csv_path, "w") as fh:
            fh.write(GAP_CSV_HEADER + "\n" + report.csv_row() + "\n")
