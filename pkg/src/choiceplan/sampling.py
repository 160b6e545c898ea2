"""Seeded random-variate generation: Monte Carlo and Latin Hypercube draws.

Everything goes through one inverse-CDF transform so that MCS and LHS share
the same marginals and every matrix is reproducible from (spec, n, d, seed).
The generator is numpy's PCG64, a named permutation-based 64-bit stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

MCS = "mcs"
LHS = "lhs"

# Inverse transforms are evaluated on probabilities clipped to this open
# interval; 1e-15 keeps every quantile finite in float64.
_P_EPS = 1e-15

_EULER_GAMMA = 0.5772156649015329


class SamplingError(ValueError):
    """Invalid distribution parameters or probabilities."""


@dataclass(frozen=True)
class DistributionSpec:
    """A univariate distribution, identified by kind plus its parameters."""

    kind: str
    params: tuple

    _FIELDS = {
        "uniform": ("lo", "hi"),
        "normal": ("mean", "variance"),
        "gumbel": ("location", "scale"),
        "exponential": ("rate",),
        "lognormal": ("location", "scale"),
        "bernoulli": ("p",),
    }

    def __post_init__(self):
        if self.kind not in self._FIELDS:
            raise SamplingError(f"unknown distribution kind {self.kind!r}")
        want = len(self._FIELDS[self.kind])
        if len(self.params) != want:
            raise SamplingError(f"{self.kind} takes {want} parameter(s)")
        p = tuple(float(v) for v in self.params)
        if not all(math.isfinite(v) for v in p):
            raise SamplingError("distribution parameters must be finite")
        object.__setattr__(self, "params", p)
        k = self.kind
        if k == "uniform" and not p[1] > p[0]:
            raise SamplingError("uniform needs hi > lo")
        if k == "normal" and p[1] < 0:
            raise SamplingError("normal variance must be >= 0")
        if k in ("gumbel", "lognormal") and not p[1] > 0:
            raise SamplingError(f"{k} scale must be > 0")
        if k == "exponential" and not p[0] > 0:
            raise SamplingError("exponential rate must be > 0")
        if k == "bernoulli" and not 0.0 <= p[0] <= 1.0:
            raise SamplingError("bernoulli p must lie in [0, 1]")

    # convenience constructors
    @staticmethod
    def uniform(lo, hi):
        return DistributionSpec("uniform", (lo, hi))

    @staticmethod
    def normal(mean, variance):
        return DistributionSpec("normal", (mean, variance))

    @staticmethod
    def gumbel(location, scale):
        return DistributionSpec("gumbel", (location, scale))

    @staticmethod
    def exponential(rate):
        return DistributionSpec("exponential", (rate,))

    @staticmethod
    def lognormal(location, scale):
        return DistributionSpec("lognormal", (location, scale))

    @staticmethod
    def bernoulli(p):
        return DistributionSpec("bernoulli", (p,))

    def mean(self) -> float:
        """Analytic mean."""
        a = self.params
        return {
            "uniform": lambda: 0.5 * (a[0] + a[1]),
            "normal": lambda: a[0],
            "gumbel": lambda: a[0] + _EULER_GAMMA * a[1],
            "exponential": lambda: 1.0 / a[0],
            "lognormal": lambda: math.exp(a[0] + 0.5 * a[1] ** 2),
            "bernoulli": lambda: a[0],
        }[self.kind]()

    def variance(self) -> float:
        """Analytic variance."""
        a = self.params
        return {
            "uniform": lambda: (a[1] - a[0]) ** 2 / 12.0,
            "normal": lambda: a[1],
            "gumbel": lambda: math.pi**2 * a[1] ** 2 / 6.0,
            "exponential": lambda: 1.0 / a[0] ** 2,
            "lognormal": lambda: (math.exp(a[1] ** 2) - 1.0)
            * math.exp(2.0 * a[0] + a[1] ** 2),
            "bernoulli": lambda: a[0] * (1.0 - a[0]),
        }[self.kind]()

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        d.update(zip(self._FIELDS[self.kind], self.params))
        return d

    @staticmethod
    def from_json(d: dict) -> "DistributionSpec":
        kind = d.get("kind")
        if kind not in DistributionSpec._FIELDS:
            raise SamplingError(f"unknown distribution kind {kind!r}")
        try:
            params = tuple(d[f] for f in DistributionSpec._FIELDS[kind])
        except KeyError as e:
            raise SamplingError(f"missing parameter {e.args[0]!r} for {kind}") from e
        return DistributionSpec(kind, params)


@dataclass(frozen=True)
class SampleMatrix:
    """An n-by-d block of realized draws plus the recipe that produced it."""

    values: np.ndarray
    seed: int
    scheme: str

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def standard_normal_quantile(p):
    """Inverse standard-normal CDF (rational approximation, |err| << 1e-9)."""
    return ndtri(p)


def inverse_cdf(spec: DistributionSpec, p):
    """Evaluate F^-1 of `spec` at probability (array) p, p strictly in (0,1).

    Bernoulli maps p <= 1-p_param to 0 and the rest to 1, so a uniform input
    yields ones with probability p_param.
    """
    parr = np.asarray(p, dtype=float)
    if np.any(parr <= 0.0) or np.any(parr >= 1.0):
        raise SamplingError("probabilities must lie strictly inside (0, 1)")
    a = spec.params
    k = spec.kind
    if k == "uniform":
        out = a[0] + parr * (a[1] - a[0])
    elif k == "normal":
        out = a[0] + math.sqrt(a[1]) * standard_normal_quantile(parr)
    elif k == "gumbel":
        out = a[0] - a[1] * np.log(-np.log(parr))
    elif k == "exponential":
        out = -np.log1p(-parr) / a[0]
    elif k == "lognormal":
        out = np.exp(a[0] + a[1] * standard_normal_quantile(parr))
    elif k == "bernoulli":
        out = (parr > 1.0 - a[0]).astype(float)
    else:  # pragma: no cover - kinds validated at construction
        raise SamplingError(f"unknown kind {k!r}")
    if np.isscalar(p):
        return float(out)
    return out


def rng_from(seed: int, *keys: int) -> np.random.Generator:
    """Deterministic PCG64 stream keyed by a base seed plus integer subkeys."""
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise SamplingError("seeds and stream keys must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _clip_probs(u: np.ndarray) -> np.ndarray:
    return np.clip(u, _P_EPS, 1.0 - _P_EPS)


def sample_mcs(spec: DistributionSpec, n: int, d: int, seed: int) -> SampleMatrix:
    """n-by-d i.i.d. draws via inverse transform of PCG64 uniforms."""
    if n < 1 or d < 1:
        raise SamplingError("n and d must be >= 1")
    rng = rng_from(seed)
    u = _clip_probs(rng.random((n, d)))
    values = inverse_cdf(spec, u)
    return SampleMatrix(values=values, seed=int(seed), scheme=MCS)


def lhs_probabilities(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Stratified probability points: one uniform point per 1/n stratum and
    dimension, strata shuffled independently per dimension."""
    p = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        p[:, j] = (perm + rng.random(n)) / n
    return _clip_probs(p)


def sample_lhs(spec: DistributionSpec, n: int, d: int, seed: int) -> SampleMatrix:
    """Latin Hypercube draws: per dimension, [0,1) splits into n equal strata
    holding exactly one point each, mapped through the inverse CDF."""
    if n < 1 or d < 1:
        raise SamplingError("n and d must be >= 1")
    rng = rng_from(seed)
    values = inverse_cdf(spec, lhs_probabilities(rng, n, d))
    return SampleMatrix(values=values, seed=int(seed), scheme=LHS)


def sample(spec: DistributionSpec, n: int, d: int, seed: int, scheme: str) -> SampleMatrix:
    if scheme == MCS:
        return sample_mcs(spec, n, d, seed)
    if scheme == LHS:
        return sample_lhs(spec, n, d, seed)
    raise SamplingError(f"unknown sampling scheme {scheme!r}")
