"""Simulation studies: the built-in figure set-ups and the config-driven runner.

Both produce lists of ``ResultRow``; writing them to disk is the CLI's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import bounds
from .config import RunConfig, threshold_grid
from .montecarlo import (
    DEFAULT_HORIZON,
    ExperimentConfig,
    estimate_arl,
    estimate_delay,
    estimate_L,
    misid_from_results,
    verify_condition34,
)
from .results import ResultRow
from .scenarios import (
    SINGLE_FAULT,
    HypothesisSet,
    build_concurrent_fault,
    build_single_fault,
    gaussian_channels,
    kl_matrix,
)

DEFAULT_GRID = {"start": 2.0, "stop": 9.0, "step": 0.25}
DEFAULT_NUS = (0, 20, 100)
DEFAULT_PATHS = 10_000
FIGURES = ("fig2", "fig3", "fig4")

TAIL_NOTE = "bound assumes the pre-change tail condition, which is not guaranteed for this scenario at nu > 0"

# seed-stream keys, one per kind of simulation
_KEY_MISID, _KEY_ARL, _KEY_DELAY, _KEY_L, _KEY_L0 = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class Figure:
    name: str
    hs: HypothesisSet
    true_hyp: str
    nus: tuple[int, ...]
    partial_k: tuple[str, ...] = ()


def figure(name: str) -> Figure:
    """The three published set-ups: d=3 unit-shift Gaussian channels."""
    if name == "fig2":
        return Figure(name, build_single_fault(gaussian_channels(3)), "1", DEFAULT_NUS)
    if name == "fig3":
        return Figure(name, build_concurrent_fault(gaussian_channels(3)), "{1,2}", DEFAULT_NUS)
    if name == "fig4":
        return Figure(name, build_concurrent_fault(gaussian_channels(3)), "{1,2}", (100,),
                      partial_k=("{2}", "{1,3}", "{3}"))
    raise ValueError(f"unknown figure {name!r}; choose from {FIGURES}")


@dataclass
class StudyOutput:
    rows: list[ResultRow]
    notes: list[str] = field(default_factory=list)


def _curve_or_none(hs, i, j, seed):
    try:
        return bounds.bound_curve(hs, i, j, seed=seed)
    except bounds.NoBoundAvailable:
        return None


def _overall_curve(hs, j, seed):
    """Callable ``b -> bound`` on the overall misidentification, or None."""
    curve = bounds.scenario_bound(hs)
    if curve is not None:
        return curve
    curves = [_curve_or_none(hs, i, j, seed) for i in range(hs.size) if i != j]
    if any(c is None for c in curves):
        return None
    return lambda b: math.fsum(c(b) for c in curves)


def misid_rows(scenario_id, hs, true_hyp, nus, thresholds, n_paths, seed, horizon, workers,
               partial_k=(), overall=True) -> StudyOutput:
    """Overall and/or partial conditional misidentification over a threshold grid."""
    j = hs.index(true_hyp)
    out = StudyOutput([])
    overall_curve = _overall_curve(hs, j, seed) if overall else None
    partial_curves = {k: _curve_or_none(hs, hs.index(k), j, seed) for k in partial_k}
    for nu in nus:
        cfg = ExperimentConfig(hs, true_hyp, nu, thresholds, n_paths, seed, horizon, workers,
                               key=(_KEY_MISID, nu))
        res = cfg.run()
        if overall:
            for b, est in zip(cfg.thresholds, misid_from_results(res, j)):
                bound = overall_curve(b) if overall_curve is not None else None
                out.rows.append(ResultRow.from_estimate(
                    scenario_id, true_hyp, nu, b, "misid", est, bound, seed))
        for k in partial_k:
            curve = partial_curves[k]
            for b, est in zip(cfg.thresholds, misid_from_results(res, j, hs.index(k))):
                out.rows.append(ResultRow.from_estimate(
                    scenario_id, true_hyp, nu, b, f"partial[{k}]", est,
                    curve(b) if curve is not None else None, seed))
        if nu > 0 and hs.kind != SINGLE_FAULT:
            out.notes.append(f"nu={nu}: {TAIL_NOTE}")
    return out


def reproduce(name: str, seed: int = 0, n_paths: int = DEFAULT_PATHS, horizon: int = DEFAULT_HORIZON,
              workers: int = 1, thresholds=None) -> StudyOutput:
    fig = figure(name)
    grid = threshold_grid(DEFAULT_GRID) if thresholds is None else list(thresholds)
    return misid_rows(
        name, fig.hs, fig.true_hyp, fig.nus, grid, n_paths, seed, horizon, workers,
        partial_k=fig.partial_k, overall=not fig.partial_k,
    )


def execute(cfg: RunConfig, workers: int = 1) -> StudyOutput:
    """Run every output requested by a parsed config."""
    hs, sid, seed = cfg.hs, cfg.scenario_id, cfg.seed
    out = StudyOutput([])
    if "misid" in cfg.outputs or "partial" in cfg.outputs:
        part = misid_rows(
            sid, hs, cfg.true_hyp, cfg.nus, cfg.thresholds, cfg.n_paths, seed, cfg.horizon, workers,
            partial_k=cfg.partial_k if "partial" in cfg.outputs else (),
            overall="misid" in cfg.outputs,
        )
        out.rows += part.rows
        out.notes += part.notes
    if "arl" in cfg.outputs:
        for n, b in enumerate(cfg.thresholds):
            est = estimate_arl(hs, b, cfg.n_paths, cfg.horizon, seed, workers, key=(_KEY_ARL, n))
            out.rows.append(ResultRow.from_estimate(
                sid, None, None, b, "arl", est, bounds.arl_lower_bound(b, hs.size), seed))
            if est.lower_bound_only:
                out.notes.append(f"arl at b={b!r}: truncated paths counted as the horizon")
    if "delay" in cfg.outputs:
        j = hs.index(cfg.true_hyp)
        excess, _ = bounds.excess_constant(hs, j, seed=seed)
        I_j = kl_matrix(hs).I(j)
        for n, b in enumerate(cfg.thresholds):
            est = estimate_delay(hs, j, b, cfg.n_paths, cfg.horizon, seed, workers, key=(_KEY_DELAY, n))
            out.rows.append(ResultRow.from_estimate(
                sid, cfg.true_hyp, 0, b, "delay", est, bounds.delay_upper_bound(b, I_j, excess), seed))
    if "L" in cfg.outputs:
        out.rows += _L_rows(cfg, workers)
    if "condition34" in cfg.outputs:
        for nu in (nu for nu in cfg.nus if nu >= 1):
            for b in cfg.thresholds:
                for row in verify_condition34(hs, nu, b, cfg.tail_spec["x_grid"], cfg.n_paths, seed):
                    out.rows.append(ResultRow.from_estimate(
                        sid, "none", nu, b, f"tail[{hs.labels[row.hyp]}|x={row.x!r}]",
                        row.estimate, row.bound, seed))
    return out


def _L_rows(cfg: RunConfig, workers: int) -> list[ResultRow]:
    """Mean stopping time of one statistic started at ``x``, with the matching lower bound."""
    hs, seed = cfg.hs, cfg.seed
    i, j = hs.index(str(cfg.L_spec["i"])), hs.index(cfg.true_hyp)
    b = float(cfg.L_spec.get("b", cfg.thresholds[-1]))
    kl = kl_matrix(hs)
    rel = kl.relation(i, j)
    consts = bounds.lorden_constants(hs, i, j, seed=seed) if rel != ">" else None
    xs = [float(x) for x in cfg.L_spec["x_grid"]]
    ests = [estimate_L(hs, i, j, x, b, cfg.n_paths, cfg.horizon, seed, workers, key=(_KEY_L, n))
            for n, x in enumerate(xs)]
    L0 = estimate_L(hs, i, j, 0.0, b, cfg.n_paths, cfg.horizon, seed, workers, key=(_KEY_L0,)).value
    rows = []
    for x, est in zip(xs, ests):
        if rel == "<":
            r = bounds.find_root(hs, i, j, kl=kl).value
            bound = bounds.lemma1_lower(x, b, r, consts.overshoot, kl.I_pair(j, i) - kl.I(j), L0)
        elif rel == "=":
            bound = bounds.lemma1_upper_case(
                x, b, consts.overshoot, consts.undershoot, consts.second_moment, L0)
        else:
            bound = None
        rows.append(ResultRow.from_estimate(
            cfg.scenario_id, cfg.true_hyp, 0, b, f"L[{hs.labels[i]}|x={x!r}]", est, bound, seed))
    return rows


BOUND_COLUMNS = ("scenario_id", "quantity", "hyp_i", "hyp_j", "b", "value", "se", "note")


def bound_table(hs: HypothesisSet, scenario_id: str, alphas, thresholds, seed: int = 0) -> list[tuple]:
    """KL numbers, roots, constants, calibrated thresholds and bound curves as flat rows.

    Pair rows use ``hyp_j`` for the true hypothesis and ``hyp_i`` for the rival.
    """
    kl = kl_matrix(hs)
    lab = hs.labels
    rows = []

    def add(quantity, i="", j="", b=None, value=None, se=None, note=""):
        rows.append((scenario_id, quantity, i, j, b, value, se, note))

    for a in range(hs.size):
        add("I", lab[a], value=kl.I(a))
        excess, excess_se = bounds.excess_constant(hs, a, seed=seed)
        add("B", "", lab[a], value=excess, se=excess_se)
    for j in range(hs.size):
        for i in range(hs.size):
            if i == j:
                continue
            add("I_ji", lab[i], lab[j], value=kl.I_pair(j, i), note=f"KL(g_{lab[j]}, g_{lab[i]})")
            rel = kl.relation(i, j)
            add("relation", lab[i], lab[j], note=f"I_j {rel} I_ji")
            if rel == ">":
                add("bound_case", lab[i], lab[j], note="no bound available: I_j > I_ji")
                continue
            if rel == "<":
                root = bounds.find_root(hs, i, j, kl=kl)
                add("root", lab[i], lab[j], value=root.value, note=root.method)
            consts = bounds.lorden_constants(hs, i, j, seed=seed)
            add("omega", lab[i], lab[j], value=consts.overshoot, se=consts.se["overshoot"], note=consts.method)
            add("omega_tilde", lab[i], lab[j], value=consts.undershoot, se=consts.se["undershoot"],
                note=consts.method)
            curve = bounds.bound_curve(hs, i, j, constants=consts, kl=kl)
            add("bound_case", lab[i], lab[j], value=curve.constant, note=curve.case)
            for b in thresholds:
                add("pair_bound", lab[i], lab[j], b=b, value=curve(b))
    overall = bounds.scenario_bound(hs)
    if overall is not None:
        add("C" if overall.case == "corollary1" else "C_star", value=overall.constant, note=overall.case)
        for b in thresholds:
            add("overall_bound", b=b, value=overall(b))
    for alpha in alphas:
        b = bounds.b_alpha(alpha, hs.size)
        add("b_alpha", b=b, value=b, note=f"alpha={alpha!r}")
        add("arl_lower_bound", b=b, value=bounds.arl_lower_bound(b, hs.size), note=f"alpha={alpha!r}")
    return rows
