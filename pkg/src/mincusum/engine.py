"""Parallel CuSum statistics with the min-CuSum stop and argmax decision.

All statistics are in nats.  The engine is a pure state machine: ``update``
returns a new ``CusumState`` and never mutates its input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .scenarios import HypothesisSet


@dataclass(frozen=True)
class CusumState:
    n: int
    y: np.ndarray

    @classmethod
    def zero(cls, k: int) -> "CusumState":
        return cls(0, np.zeros(k))

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("time index must be non-negative")
        y = np.array(self.y, dtype=float)
        if np.any(y < 0):
            raise ValueError("CuSum statistics are non-negative")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class DiagnosisResult:
    """Outcome of one run.

    ``stop`` is ``None`` when the horizon was reached without a crossing; in
    that case ``decision`` is ``None`` too and ``truncated`` is set.
    ``survived_change`` records ``T > nu`` (truncated runs count as survivors).
    """

    stop: int | None
    decision: int | None
    survived_change: bool = True
    truncated: bool = False
    trace: np.ndarray | None = field(default=None, repr=False, compare=False)


def llr(hs: HypothesisSet, i, x) -> float:
    """``log g_i(x) - log f(x)`` for one observation."""
    return float(hs.llr(np.asarray(x, dtype=float))[hs.index(i)])


def update(state: CusumState, x, hs: HypothesisSet) -> CusumState:
    """One step of ``Y_i(n) = max(Y_i(n-1) + llr_i(X_n), 0)``."""
    step = hs.llr(np.asarray(x, dtype=float))
    return CusumState(state.n + 1, np.maximum(state.y + step, 0.0))


def cusum_recursive(increments) -> np.ndarray:
    """Iterate the positive-part recursion over a 1-D array of LLR increments."""
    out = np.empty(len(increments))
    y = 0.0
    for n, v in enumerate(increments):
        y = max(y + v, 0.0)
        out[n] = y
    return out


def cusum_direct(path, hs: HypothesisSet, i) -> np.ndarray:
    """``Y_i(n) = max_{0<=m<=n} sum_{u=m+1}^n llr_i(u)`` without the recursion.

    Each segment sum is accumulated left to right from zero, the same order the
    recursion uses after a reset, so the two agree bit for bit whenever the
    maximizing segment is the one the recursion is tracking.
    """
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    if len(path) == 0:
        raise ValueError("path must be non-empty")
    inc = hs.llr(path)[:, hs.index(i)]
    return direct_from_increments(inc)


def direct_from_increments(inc) -> np.ndarray:
    """Direct definition on precomputed increments (1-D, or 2-D with one column per statistic)."""
    inc = np.asarray(inc, dtype=float)
    n = len(inc)
    # row m is inc with the first m entries zeroed; its running sum at t is
    # sum_{u=m+1}^{t} accumulated left to right (adding leading zeros is exact)
    tri = np.triu(np.ones((n, n), dtype=bool))
    shape = (n, n) + (1,) * (inc.ndim - 1)
    rows = np.where(tri.reshape(shape), inc[None, ...], 0.0)
    seg = np.where(tri.reshape(shape), np.cumsum(rows, axis=1), -np.inf)
    return np.maximum(seg.max(axis=0), 0.0)


def argmax_first(y: np.ndarray) -> int:
    """Largest entry; ties go to the smallest canonical index."""
    return int(np.argmax(y))


def _observations(stream) -> Iterator:
    if callable(stream):
        while True:
            yield stream()
    yield from stream


def run(
    hs: HypothesisSet,
    b: float,
    stream: Iterable,
    horizon: int,
    *,
    init: CusumState | None = None,
    nu: int | None = None,
    keep_trace: bool = False,
) -> DiagnosisResult:
    """Min-CuSum: stop at the first ``n >= 1`` with ``max_i Y_i(n) >= b``.

    ``stream`` is an iterable of observations or a zero-argument callable.
    The decision is the argmax of ``Y`` at the stopping time.  Running out of
    ``horizon`` steps (or of observations) returns a truncated result.
    """
    if not b > 0:
        raise ValueError(f"threshold must be positive, got {b}")
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    state = init if init is not None else CusumState.zero(hs.size)
    trace = [] if keep_trace else None
    n = 0
    for x in _observations(stream):
        if n >= horizon:
            break
        state = update(state, x, hs)
        n += 1
        if keep_trace:
            trace.append(state.y)
        if state.y.max() >= b:
            return DiagnosisResult(
                stop=n,
                decision=argmax_first(state.y),
                survived_change=nu is None or n > nu,
                truncated=False,
                trace=np.array(trace) if keep_trace else None,
            )
    return DiagnosisResult(
        stop=None,
        decision=None,
        survived_change=True,
        truncated=True,
        trace=np.array(trace) if keep_trace else None,
    )


def run_initialized(hs: HypothesisSet, b: float, stream, i, y0: float, horizon: int, **kw) -> DiagnosisResult:
    """``run`` with ``Y_i(0) = y0`` for hypothesis ``i`` and zero elsewhere."""
    if not 0.0 <= y0 <= b:
        raise ValueError(f"initial value must lie in [0, b] = [0, {b}], got {y0}")
    y = np.zeros(hs.size)
    y[hs.index(i)] = y0
    return run(hs, b, stream, horizon, init=CusumState(0, y), **kw)


def write_trace(path, trace: np.ndarray, labels) -> None:
    """CSV rows ``n, Y_<label>...`` for ``n = 1..len(trace)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"Y_{lab}" for lab in labels])
        for n, row in enumerate(trace, start=1):
            w.writerow([n] + [repr(float(v)) for v in row])
