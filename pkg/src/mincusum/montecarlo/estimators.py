"""Monte Carlo estimators built on ``simulate``.

Conditional probabilities are computed over a fixed nominal number of paths;
paths that stop at or before the change point leave the denominator and are
reported through ``n_effective``.  Paths that survive the change point but hit
the horizon without stopping are reported in ``n_truncated`` and are left out
of the denominator as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..scenarios import HypothesisSet
from .simulate import (
    DEFAULT_HORIZON,
    PathResults,
    block_rng,
    cusum_snapshot,
    simulate,
    simulate_single,
)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n_effective: int
    n_nominal: int
    n_truncated: int = 0
    n_events: int | None = None
    lower_bound_only: bool = False

    @property
    def undefined(self) -> bool:
        return self.n_effective == 0

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.value - target) <= n_se * self.se


def proportion(events: int, m: int, n_nominal: int, n_truncated: int = 0) -> Estimate:
    if m == 0:
        return Estimate(math.nan, math.nan, 0, n_nominal, n_truncated, 0)
    p = events / m
    return Estimate(p, math.sqrt(p * (1.0 - p) / m), m, n_nominal, n_truncated, int(events))


def sample_mean(values: np.ndarray, n_nominal: int, n_truncated: int = 0, lower_bound_only=False) -> Estimate:
    values = np.sort(np.asarray(values, dtype=float))  # order-independent summation
    m = values.size
    if m == 0:
        return Estimate(math.nan, math.nan, 0, n_nominal, n_truncated)
    se = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return Estimate(float(values.mean()), se, m, n_nominal, n_truncated, lower_bound_only=lower_bound_only)


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation study: scenario, truth, change point and threshold grid."""

    hs: HypothesisSet
    true_hyp: object
    nu: int
    thresholds: tuple[float, ...]
    n_paths: int = 10_000
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    workers: int = 1
    key: tuple = field(default=())

    def __post_init__(self):
        if not isinstance(self.nu, (int, np.integer)) or self.nu < 0:
            raise ValueError(f"nu must be a non-negative integer, got {self.nu!r}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be at least 1, got {self.n_paths}")
        th = tuple(float(b) for b in self.thresholds)
        if not th:
            raise ValueError("threshold grid is empty")
        if any(b <= 0 for b in th) or any(b2 <= b1 for b1, b2 in zip(th, th[1:])):
            raise ValueError("thresholds must be positive and strictly increasing")
        object.__setattr__(self, "thresholds", th)

    def run(self) -> PathResults:
        return simulate(
            self.hs, self.true_hyp, self.nu, self.thresholds, self.n_paths,
            self.seed, self.horizon, self.workers, self.key,
        )


def misid_from_results(res: PathResults, j: int, k: int | None = None) -> list[Estimate]:
    """Per-threshold ``P(D != j | T > nu)`` (or ``P(D = k | T > nu)`` when ``k`` is given)."""
    out = []
    for col in range(len(res.thresholds)):
        stop, dec = res.stop[:, col], res.decision[:, col]
        resolved = (stop > res.nu)
        n_trunc = int(np.count_nonzero(stop == 0))
        m = int(np.count_nonzero(resolved))
        if k is None:
            events = np.count_nonzero(resolved & (dec != j))
        else:
            events = np.count_nonzero(resolved & (dec == k))
        out.append(proportion(int(events), m, res.n_paths, n_trunc))
    return out


def estimate_conditional_misid(cfg: ExperimentConfig, results: PathResults | None = None) -> list[Estimate]:
    if cfg.true_hyp is None:
        raise ValueError("misidentification needs a true post-change hypothesis")
    res = cfg.run() if results is None else results
    return misid_from_results(res, cfg.hs.index(cfg.true_hyp))


def estimate_partial_misid(cfg: ExperimentConfig, k, results: PathResults | None = None) -> list[Estimate]:
    if cfg.true_hyp is None:
        raise ValueError("misidentification needs a true post-change hypothesis")
    j, k = cfg.hs.index(cfg.true_hyp), cfg.hs.index(k)
    if k == j:
        raise ValueError("partial misidentification needs k different from the true hypothesis")
    res = cfg.run() if results is None else results
    return misid_from_results(res, j, k)


def estimate_arl(hs: HypothesisSet, b: float, n_paths: int, horizon: int = DEFAULT_HORIZON,
                 seed: int = 0, workers: int = 1, key=()) -> Estimate:
    """Mean no-change stopping time; truncated paths count as ``horizon``."""
    res = simulate(hs, None, 0, [b], n_paths, seed, horizon, workers, key)
    stop = res.stop[:, 0]
    n_trunc = int(np.count_nonzero(stop == 0))
    t = np.where(stop == 0, horizon, stop)
    return sample_mean(t, n_paths, n_trunc, lower_bound_only=n_trunc > 0)


def estimate_delay(hs: HypothesisSet, j, b: float, n_paths: int, horizon: int = DEFAULT_HORIZON,
                   seed: int = 0, workers: int = 1, key=()) -> Estimate:
    """Mean stopping time when the change happens before the first observation."""
    res = simulate(hs, j, 0, [b], n_paths, seed, horizon, workers, key)
    stop = res.stop[:, 0]
    n_trunc = int(np.count_nonzero(stop == 0))
    t = np.where(stop == 0, horizon, stop)
    return sample_mean(t, n_paths, n_trunc, lower_bound_only=n_trunc > 0)


def estimate_L(hs: HypothesisSet, i, j, x: float, b: float, n_paths: int,
               horizon: int = DEFAULT_HORIZON, seed: int = 0, workers: int = 1, key=()) -> Estimate:
    """Mean of the single-statistic stopping time ``sigma_i(b)`` from ``Y_i(0) = x`` under ``g_j``."""
    stop = simulate_single(hs, i, j, b, n_paths, seed, horizon, x0=x, workers=workers, key=key)
    n_trunc = int(np.count_nonzero(stop == 0))
    t = np.where(stop == 0, horizon, stop)
    return sample_mean(t, n_paths, n_trunc, lower_bound_only=n_trunc > 0)


@dataclass(frozen=True)
class TailRow:
    hyp: int
    x: float
    estimate: Estimate
    bound: float

    def passed(self, n_se: float = 3.0) -> bool:
        return self.estimate.value <= self.bound + n_se * self.estimate.se


def verify_condition34(hs: HypothesisSet, nu: int, b: float, x_grid, n_paths: int, seed: int = 0) -> list[TailRow]:
    """Empirical ``P_inf(Y_i(nu) >= x | sigma(b) > nu)`` against ``exp(-x)``, per hypothesis and x."""
    if nu < 1:
        raise ValueError("the change point must be at least 1")
    y, ok = cusum_snapshot(hs, nu, n_paths, block_rng(seed, (34,), 0), b=b)
    y = y[ok]
    m = y.shape[0]
    rows = []
    for i in range(hs.size):
        for x in x_grid:
            est = proportion(int(np.count_nonzero(y[:, i] >= x)), m, n_paths)
            rows.append(TailRow(i, float(x), est, math.exp(-x)))
    return rows


def unconditional_tail(hs: HypothesisSet, n: int, x_grid, n_paths: int, seed: int = 0) -> list[TailRow]:
    """Empirical ``P_inf(Y_i(n) >= x)`` without stopping, against ``exp(-x)``."""
    y, _ = cusum_snapshot(hs, n, n_paths, block_rng(seed, (40,), n))
    rows = []
    for i in range(hs.size):
        for x in x_grid:
            est = proportion(int(np.count_nonzero(y[:, i] >= x)), n_paths, n_paths)
            rows.append(TailRow(i, float(x), est, math.exp(-x)))
    return rows
