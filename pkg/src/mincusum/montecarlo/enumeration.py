"""Exact brute-force oracle for small all-Bernoulli scenarios."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..distributions import Bernoulli
from ..scenarios import HypothesisSet

MAX_SEQUENCES = 2 ** 24


@dataclass(frozen=True)
class ExactOutcome:
    """Exact probabilities of the min-CuSum outcome up to ``horizon``.

    ``p_decide[k]`` is ``P(nu < T <= horizon, D = k)``; ``p_early`` is
    ``P(T <= nu)``; ``p_open`` is ``P(T > horizon)``.
    """

    p_early: float
    p_decide: np.ndarray
    p_open: float
    true_idx: int | None

    @property
    def p_stop(self) -> float:
        return self.p_early + float(self.p_decide.sum())

    @property
    def p_resolved(self) -> float:
        return float(self.p_decide.sum())

    def conditional_misid(self) -> float:
        """``P(D != j | nu < T <= horizon)``; NaN when no path stops after ``nu``."""
        total = self.p_resolved
        if total == 0.0:
            return math.nan
        wrong = math.fsum(p for k, p in enumerate(self.p_decide) if k != self.true_idx)
        return wrong / total

    def conditional_partial(self, k: int) -> float:
        total = self.p_resolved
        return math.nan if total == 0.0 else float(self.p_decide[k]) / total


def _outcome_table(law):
    """All joint outcomes of the coordinates and their log-probabilities."""
    d = len(law)
    outcomes = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
    logp = np.zeros(len(outcomes))
    for t, dist in enumerate(law):
        logp += np.asarray(dist.log_density(outcomes[:, t]))
    return outcomes, logp


def exact_enumeration(hs: HypothesisSet, j, nu: int, b: float, horizon: int) -> ExactOutcome:
    """Enumerate every outcome sequence of length ``horizon`` under ``P_{nu,j}``.

    Sequences are extended one step at a time; those that stop are tallied
    with their exact log-weight and dropped, the rest are extended further.
    """
    if not all(isinstance(d, Bernoulli) for g in (hs.null,) + hs.alternatives for d in g):
        raise ValueError("exact enumeration needs every coordinate to be Bernoulli")
    n_out = 2 ** hs.dim
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if horizon * math.log2(n_out) > math.log2(MAX_SEQUENCES):
        raise ValueError(
            f"(2^{hs.dim})^{horizon} sequences exceed the enumeration guard of 2^24"
        )
    true_idx = None if j is None else hs.index(j)
    outcomes, logp_pre = _outcome_table(hs.null)
    logp_post = logp_pre if true_idx is None else _outcome_table(hs.law(true_idx))[1]
    inc = hs.llr(outcomes)  # (n_out, k)

    y = np.zeros((1, hs.size))
    logw = np.zeros(1)
    early: list[np.ndarray] = []
    decided: list[list[np.ndarray]] = [[] for _ in range(hs.size)]
    for n in range(1, horizon + 1):
        lp = logp_pre if n <= nu else logp_post
        y = np.maximum(y[:, None, :] + inc[None, :, :], 0.0).reshape(-1, hs.size)
        logw = (logw[:, None] + lp[None, :]).reshape(-1)
        stopped = y.max(axis=1) >= b
        if stopped.any():
            w = logw[stopped]
            if n <= nu:
                early.append(w)
            else:
                dec = np.argmax(y[stopped], axis=1)
                for k in range(hs.size):
                    decided[k].append(w[dec == k])
            y, logw = y[~stopped], logw[~stopped]
        if y.shape[0] == 0:
            break

    def total(chunks):
        w = np.concatenate(chunks) if chunks else np.empty(0)
        return float(np.exp(logsumexp(w))) if w.size else 0.0

    return ExactOutcome(
        p_early=total(early),
        p_decide=np.array([total(c) for c in decided]),
        p_open=total([logw]),
        true_idx=true_idx,
    )
