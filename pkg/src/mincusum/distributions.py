"""Observation densities used to build pre- and post-change laws.

Only two observation spaces are supported: the real line (unit-variance
Gaussians) and {0, 1} (Bernoulli).  Every distribution can evaluate its exact
log-density, draw i.i.d. samples from a numpy ``Generator`` and serialize to a
``{kind, parameters}`` record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
BERNOULLI_EPS = 1e-9
MC_KL_SAMPLES = 100_000


class SupportError(ValueError):
    """Observation outside the support of a discrete distribution."""


class InfiniteDivergence(ValueError):
    """KL divergence between distributions with mismatched supports."""


class Distribution:
    kind: str = "abstract"

    def log_density(self, x):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def to_record(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(Distribution):
    """Unit-variance normal with mean ``mu``."""

    mu: float = 0.0
    kind = "gaussian"

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"Gaussian mean must be finite, got {self.mu}")
        object.__setattr__(self, "mu", float(self.mu))

    def log_density(self, x):
        z = np.asarray(x, dtype=float) - self.mu
        out = -LOG_SQRT_2PI - 0.5 * z * z
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return self.mu + rng.standard_normal(size)

    def mean(self):
        return self.mu

    def to_record(self):
        return {"kind": self.kind, "parameters": {"mu": self.mu}}


@dataclass(frozen=True)
class Bernoulli(Distribution):
    """Bernoulli on {0, 1}.

    ``p`` must lie in ``[1e-9, 1 - 1e-9]`` so every log-likelihood ratio is
    finite; anything else is rejected.
    """

    p: float
    kind = "bernoulli"

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 < p < 1.0:
            raise ValueError(f"Bernoulli parameter must lie in (0, 1), got {p}")
        if p < BERNOULLI_EPS or p > 1.0 - BERNOULLI_EPS:
            raise ValueError(
                f"Bernoulli parameter {p} is closer than {BERNOULLI_EPS} to the boundary"
            )
        object.__setattr__(self, "p", p)

    def log_density(self, x):
        arr = np.asarray(x)
        if not np.all((arr == 0) | (arr == 1)):
            raise SupportError(f"Bernoulli observation outside {{0, 1}}: {x!r}")
        out = np.where(arr == 1, math.log(self.p), math.log1p(-self.p))
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        u = rng.random(size)
        return (u < self.p).astype(float) if size is not None else float(u < self.p)

    def mean(self):
        return self.p

    def to_record(self):
        return {"kind": self.kind, "parameters": {"p": self.p}}


@dataclass(frozen=True)
class ExponentialFamily1D:
    """One-parameter natural exponential family ``h(x) exp(gamma x - phi(gamma))``.

    ``domain`` is the (closed or open, possibly infinite) interval where the
    cumulant ``phi`` is finite.  ``dphi`` is the derivative of ``phi``; it is
    needed for closed-form KL numbers.
    """

    name: str
    base: Distribution
    phi: Callable[[float], float] = field(compare=False)
    dphi: Callable[[float], float] = field(compare=False)
    domain: tuple[float, float] = (-math.inf, math.inf)

    def contains(self, gamma: float) -> bool:
        lo, hi = self.domain
        return math.isfinite(gamma) and lo <= gamma <= hi

    def check(self, gamma: float) -> None:
        if not self.contains(gamma):
            raise ValueError(f"gamma={gamma} outside the domain {self.domain} of {self.name}")

    def to_record(self) -> dict:
        return {"family": self.name}


def _bernoulli_phi(g: float) -> float:
    # log((1 + e^g) / 2), written to avoid overflow
    return float(np.logaddexp(0.0, g)) - math.log(2.0)


def _gaussian_phi(g: float) -> float:
    return 0.5 * g * g


def _identity(g: float) -> float:
    return g


def _expit(g: float) -> float:
    return float(expit(g))


def gaussian_family() -> ExponentialFamily1D:
    return ExponentialFamily1D(
        name="gaussian",
        base=Gaussian(0.0),
        phi=_gaussian_phi,
        dphi=_identity,
    )


def bernoulli_family() -> ExponentialFamily1D:
    return ExponentialFamily1D(
        name="bernoulli",
        base=Bernoulli(0.5),
        phi=_bernoulli_phi,
        dphi=_expit,
    )


FAMILIES = {"gaussian": gaussian_family, "bernoulli": bernoulli_family}


@dataclass(frozen=True)
class Tilted(Distribution):
    """Generic tilt ``h_gamma`` of a user family; density evaluation only."""

    family: ExponentialFamily1D
    gamma: float
    kind = "exponential-family-tilt"

    def log_density(self, x):
        arr = np.asarray(x, dtype=float)
        out = (
            np.asarray(self.family.base.log_density(arr))
            + self.gamma * arr
            - self.family.phi(self.gamma)
        )
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        raise NotImplementedError(f"no sampler for tilts of family {self.family.name!r}")

    def mean(self):
        return self.family.dphi(self.gamma)

    def to_record(self):
        return {"kind": self.kind, "parameters": {"family": self.family.name, "gamma": self.gamma}}


def tilt(fam: ExponentialFamily1D, gamma: float) -> Distribution:
    """Member ``h_gamma`` of ``fam``.

    The built-in families return closed-form members: ``N(gamma, 1)`` for the
    Gaussian family and ``Bernoulli(expit(gamma))`` for the Bernoulli one.
    """
    fam.check(gamma)
    if fam.name == "gaussian":
        return Gaussian(gamma)
    if fam.name == "bernoulli":
        return Bernoulli(float(expit(gamma)))
    return Tilted(fam, float(gamma))


def kl_divergence(p: Distribution, q: Distribution, rng=None, n_samples=MC_KL_SAMPLES):
    """KL(p || q) in nats.

    Closed forms are used for Gaussian and Bernoulli pairs.  Any other pair
    falls back to a Monte Carlo average of ``log p - log q`` under ``p`` and
    returns ``(value, standard_error)`` instead of a bare float.
    """
    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        return 0.5 * (p.mu - q.mu) ** 2
    if isinstance(p, Bernoulli) and isinstance(q, Bernoulli):
        a, b = p.p, q.p
        return a * math.log(a / b) + (1.0 - a) * (math.log1p(-a) - math.log1p(-b))
    if {type(p), type(q)} == {Gaussian, Bernoulli}:
        raise InfiniteDivergence(f"{p.kind} and {q.kind} live on different supports")
    rng = np.random.default_rng(0) if rng is None else rng
    x = p.sample(rng, n_samples)
    lr = np.asarray(p.log_density(x)) - np.asarray(q.log_density(x))
    if not np.all(np.isfinite(lr)):
        raise InfiniteDivergence("log-likelihood ratio is infinite on the support of p")
    return float(lr.mean()), float(lr.std(ddof=1) / math.sqrt(n_samples))


def log_mgf_llr(num: Distribution, den: Distribution, law: Distribution, theta: float) -> float:
    """``log E_law[exp(theta * (log num(X) - log den(X)))]`` for one coordinate.

    Exact for Gaussian and Bernoulli triples; raises otherwise.
    """
    if all(isinstance(d, Gaussian) for d in (num, den, law)):
        # log num - log den = a x + c
        a = num.mu - den.mu
        c = -0.5 * (num.mu ** 2 - den.mu ** 2)
        return theta * (a * law.mu + c) + 0.5 * (theta * a) ** 2
    if all(isinstance(d, Bernoulli) for d in (num, den, law)):
        l1 = math.log(num.p) - math.log(den.p)
        l0 = math.log1p(-num.p) - math.log1p(-den.p)
        return float(
            logsumexp([theta * l1, theta * l0], b=[law.p, 1.0 - law.p])
        )
    raise NotImplementedError(
        f"no closed-form cumulant for ({num.kind}, {den.kind}, {law.kind})"
    )


def from_record(record: dict) -> Distribution:
    """Inverse of ``Distribution.to_record``."""
    try:
        kind = record["kind"]
        params = record.get("parameters", {})
    except (KeyError, TypeError) as exc:
        raise ValueError(f"distribution record needs 'kind' and 'parameters': {record!r}") from exc
    if kind == "gaussian":
        return Gaussian(float(params.get("mu", 0.0)))
    if kind == "bernoulli":
        if "p" not in params:
            raise ValueError("bernoulli record is missing parameters.p")
        return Bernoulli(float(params["p"]))
    if kind == "exponential-family-tilt":
        fam = FAMILIES[params["family"]]()
        return tilt(fam, float(params["gamma"]))
    raise ValueError(f"unknown distribution kind {kind!r}")
