"""Vectorised path simulation under ``P_{nu,j}`` and ``P_inf``.

Paths are simulated in fixed-size blocks.  Block ``k`` of an experiment draws
from ``SeedSequence(seed, spawn_key=key + (k,))``, so the output depends only
on ``(seed, key, n_paths)`` and never on how many workers ran the blocks.

One pass over a path answers every threshold in a sorted grid at once: the
first time ``max_i Y_i`` reaches ``b`` is non-decreasing in ``b``, so the
thresholds are crossed in order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..engine import DiagnosisResult, run
from ..scenarios import HypothesisSet

BLOCK_SIZE = 1024
CHUNK_STEPS = 32
DEFAULT_HORIZON = 100_000


@dataclass
class PathResults:
    """Per-path outcomes over a threshold grid.

    ``stop[p, k]`` is the stopping time for threshold ``thresholds[k]`` (0 when
    the horizon was hit first); ``decision[p, k]`` is the argmax index there
    (-1 when truncated).
    """

    thresholds: np.ndarray
    stop: np.ndarray
    decision: np.ndarray
    nu: int
    horizon: int

    @property
    def n_paths(self) -> int:
        return self.stop.shape[0]

    @property
    def truncated(self) -> np.ndarray:
        return self.stop == 0

    @property
    def survived(self) -> np.ndarray:
        """``T > nu``; truncated paths survived by definition."""
        return self.truncated | (self.stop > self.nu)


def block_rng(seed: int, key: tuple, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key) + (int(block),))
    return np.random.default_rng(ss)


def _draw(hs, rng, true_idx, nu, n0, steps, n_act):
    """Observations for times ``n0+1 .. n0+steps``; shape ``(steps, n_act, dim)``."""
    n_pre = min(max(nu - n0, 0), steps) if true_idx is not None else steps
    parts = []
    if n_pre:
        parts.append(hs.sample(rng, None, (n_pre, n_act)))
    if steps - n_pre:
        parts.append(hs.sample(rng, true_idx, (steps - n_pre, n_act)))
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def simulate_block(
    hs: HypothesisSet,
    true_idx: int | None,
    nu: int,
    thresholds,
    n_paths: int,
    rng: np.random.Generator,
    horizon: int,
    columns=None,
    init=None,
):
    """Simulate ``n_paths`` paths of the min-CuSum over a sorted threshold grid.

    ``columns`` restricts the race to a subset of hypotheses (used for the
    single-statistic stopping times); ``init`` gives ``Y(0)`` for those
    columns.  Returns ``(stop, decision)`` arrays of shape ``(n_paths, K)``
    with decisions expressed as positions within ``columns``.
    """
    b = np.asarray(thresholds, dtype=float)
    n_thr = len(b)
    cols = np.arange(hs.size) if columns is None else np.asarray(columns)
    stop = np.zeros((n_paths, n_thr), dtype=np.int64)
    decision = np.full((n_paths, n_thr), -1, dtype=np.int64)
    y = np.zeros((n_paths, len(cols))) if init is None else np.tile(np.asarray(init, float), (n_paths, 1))
    ptr = np.zeros(n_paths, dtype=np.int64)
    alive = np.arange(n_paths)
    k_idx = np.arange(n_thr)
    n = 0
    while n < horizon and alive.size:
        steps = min(CHUNK_STEPS, horizon - n)
        obs = _draw(hs, rng, true_idx, nu, n, steps, alive.size)
        inc = hs.llr(obs)[..., cols]
        for s in range(steps):
            n += 1
            y = np.maximum(y + inc[s], 0.0)
            crossed = np.searchsorted(b, y.max(axis=1), side="right")
            hit = crossed > ptr
            if hit.any():
                rows = np.nonzero(hit)[0]
                new = (k_idx >= ptr[rows, None]) & (k_idx < crossed[rows, None])
                r, k = np.nonzero(new)
                stop[alive[rows[r]], k] = n
                decision[alive[rows[r]], k] = np.argmax(y[rows], axis=1)[r]
                ptr[rows] = crossed[rows]
        keep = ptr < n_thr
        if not keep.all():
            alive, y, ptr = alive[keep], y[keep], ptr[keep]
    return stop, decision


def _block_job(args):
    hs, true_idx, nu, thresholds, size, seed, key, block, horizon, columns, init = args
    rng = block_rng(seed, key, block)
    return simulate_block(hs, true_idx, nu, thresholds, size, rng, horizon, columns, init)


def default_workers() -> int:
    return os.cpu_count() or 1


def run_blocks(hs, true_idx, nu, thresholds, n_paths, seed, key, horizon, workers=1, columns=None, init=None):
    sizes = [min(BLOCK_SIZE, n_paths - s) for s in range(0, n_paths, BLOCK_SIZE)]
    jobs = [
        (hs, true_idx, nu, thresholds, size, seed, key, block, horizon, columns, init)
        for block, size in enumerate(sizes)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_job, jobs))
    else:
        parts = [_block_job(job) for job in jobs]
    stop = np.concatenate([p[0] for p in parts], axis=0)
    decision = np.concatenate([p[1] for p in parts], axis=0)
    return stop, decision


def simulate(
    hs: HypothesisSet,
    true_hyp,
    nu: int,
    thresholds,
    n_paths: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    workers: int = 1,
    key: tuple = (),
) -> PathResults:
    """Min-CuSum outcomes for ``n_paths`` paths; ``true_hyp=None`` means no change."""
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.size == 0 or np.any(thresholds <= 0) or np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be positive and strictly increasing")
    if nu < 0:
        raise ValueError("change point must be non-negative")
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    true_idx = None if true_hyp is None else hs.index(true_hyp)
    stop, decision = run_blocks(hs, true_idx, nu, thresholds, n_paths, seed, key, horizon, workers)
    return PathResults(thresholds, stop, decision, nu, horizon)


def simulate_single(hs, i, true_hyp, b, n_paths, seed, horizon, x0=0.0, workers=1, key=()):
    """Stopping times of the lone statistic ``Y_i`` started at ``x0``; 0 marks truncation."""
    if not 0.0 <= x0 <= b:
        raise ValueError(f"initial value must lie in [0, {b}], got {x0}")
    i = hs.index(i)
    true_idx = None if true_hyp is None else hs.index(true_hyp)
    stop, _ = run_blocks(
        hs, true_idx, 0, [b], n_paths, seed, key, horizon, workers, columns=[i], init=[x0]
    )
    return stop[:, 0]


def cusum_snapshot(hs, n_steps, n_paths, rng, b=None, true_hyp=None, nu=0):
    """``Y(n_steps)`` for every path, plus whether ``max_i Y_i`` stayed below ``b`` throughout."""
    true_idx = None if true_hyp is None else hs.index(true_hyp)
    y = np.zeros((n_paths, hs.size))
    ok = np.ones(n_paths, dtype=bool)
    n = 0
    while n < n_steps:
        steps = min(CHUNK_STEPS, n_steps - n)
        inc = hs.llr(_draw(hs, rng, true_idx, nu, n, steps, n_paths))
        for s in range(steps):
            y = np.maximum(y + inc[s], 0.0)
            if b is not None:
                ok &= y.max(axis=1) < b
        n += steps
    return y, ok


def simulate_path(hs, j, nu, b, rng, horizon=DEFAULT_HORIZON, keep_trace=False) -> DiagnosisResult:
    """One path through the scalar engine: ``X_n ~ f`` for ``n <= nu``, ``~ g_j`` after.

    ``j=None`` gives a pure no-change run.
    """
    true_idx = None if j is None else hs.index(j)
    state = {"n": 0}

    def draw():
        state["n"] += 1
        hyp = None if true_idx is None or state["n"] <= nu else true_idx
        return hs.sample(rng, hyp, 1)[0]

    return run(hs, b, draw, horizon, nu=nu, keep_trace=keep_trace)
