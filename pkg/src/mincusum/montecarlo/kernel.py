"""Empirical check that the no-change CuSum kernel is stochastically monotone."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scenarios import HypothesisSet
from .simulate import block_rng

# two-sided normal tail beyond 3 sigma
THREE_SIGMA_TAIL = 0.0026997960632601866


def dkw_band(n: int, tail: float = THREE_SIGMA_TAIL) -> float:
    """Half-width ``eps`` with ``P(sup |F_n - F| > eps) <= tail`` by the DKW inequality."""
    return math.sqrt(math.log(2.0 / tail) / (2.0 * n))


@dataclass(frozen=True)
class DominanceRow:
    x: float
    x_prime: float
    violation: float
    band: float
    min_survival_at_zero: float

    @property
    def passed(self) -> bool:
        return self.violation <= self.band


def one_step(hs: HypothesisSet, i: int, x: float, n: int, rng) -> np.ndarray:
    """``n`` draws of ``Y_i(1) = (x + llr_i(X_1))^+`` with ``X_1 ~ f``."""
    inc = hs.llr(hs.sample(rng, None, n))[:, i]
    return np.maximum(x + inc, 0.0)


def monotone_kernel_check(hs: HypothesisSet, i, x_pairs, n_samples: int, seed: int = 0) -> list[DominanceRow]:
    """One-sided ECDF dominance of ``Y_i(1) | Y_i(0) = x'`` over ``Y_i(1) | Y_i(0) = x``.

    For ``x <= x'`` the ECDF started from ``x'`` should lie below the one
    started from ``x``.  The violation is ``max_y (F_{x'}(y) - F_x(y))^+`` over
    independent samples; it is compared with twice the DKW half-width, since
    both ECDFs carry their own error.
    """
    i = hs.index(i)
    band = 2.0 * dkw_band(n_samples)
    rows = []
    for n, (x, xp) in enumerate(x_pairs):
        if x > xp:
            raise ValueError(f"pairs must satisfy x <= x', got ({x}, {xp})")
        a = np.sort(one_step(hs, i, x, n_samples, block_rng(seed, (3, n), 0)))
        c = np.sort(one_step(hs, i, xp, n_samples, block_rng(seed, (3, n), 1)))
        grid = np.concatenate([a, c])
        f_a = np.searchsorted(a, grid, side="right") / n_samples
        f_c = np.searchsorted(c, grid, side="right") / n_samples
        violation = float(max(0.0, np.max(f_c - f_a)))
        surv0 = float(min(np.mean(a >= 0.0), np.mean(c >= 0.0)))
        rows.append(DominanceRow(float(x), float(xp), violation, band, surv0))
    return rows
