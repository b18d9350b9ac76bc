"""Invariant checks behind ``mincusum verify`` and the acceptance tests.

Each check returns a list of ``CheckResult``; a check passes when every
result in it passes.  Sample sizes default to the acceptance settings and
can be scaled down for quick runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import bounds, engine
from .distributions import Bernoulli, gaussian_family
from .montecarlo import (
    estimate_arl,
    estimate_delay,
    estimate_L,
    exact_enumeration,
    misid_from_results,
    monotone_kernel_check,
    simulate,
    unconditional_tail,
    verify_condition34,
)
from .results import render_csv
from .scenarios import (
    ChannelSpec,
    build_concurrent_fault,
    build_single_fault,
    build_two_sided,
    gaussian_channels,
    kl_matrix,
    kl_matrix_direct,
)
from .studies import reproduce

SUITES = ("all", "engine", "bounds", "oracle", "condition34")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: object
    expected: object
    tolerance: object
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: observed={self.observed} expected={self.expected} "
                f"tol={self.tolerance} ({self.seconds:.2f}s)")


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def gaussian_single_fault(d: int = 3):
    return build_single_fault(gaussian_channels(d))


def gaussian_concurrent(d: int = 3):
    return build_concurrent_fault(gaussian_channels(d))


def bernoulli_single_fault(d: int = 2, pre: float = 0.2, post: float = 0.8):
    return build_single_fault([ChannelSpec(Bernoulli(pre), Bernoulli(post)) for _ in range(d)])


# --- engine -------------------------------------------------------------------------------


def check_engine_equivalence(n_paths: int = 1000, length: int = 100, seed: int = 0,
                             time_limit: float = 5.0) -> list[CheckResult]:
    """Recursion against the max-over-segments definition, Gaussian and Bernoulli."""
    rng = np.random.default_rng(seed)
    out = []
    with _Timer() as t:
        gauss = gaussian_single_fault()
        worst = 0.0
        truths = [None] + list(range(gauss.size))
        for n in range(n_paths):
            path = gauss.sample(rng, truths[n % len(truths)], length)
            inc = gauss.llr(path)
            for i in range(gauss.size):
                rec = engine.cusum_recursive(inc[:, i])
                worst = max(worst, float(np.max(np.abs(rec - engine.cusum_direct(path, gauss, i)))))
        bern = bernoulli_single_fault()
        mismatches = 0
        for n in range(n_paths):
            path = bern.sample(rng, n % 2, length)
            inc = bern.llr(path)
            for i in range(bern.size):
                rec = engine.cusum_recursive(inc[:, i])
                mismatches += int(np.count_nonzero(rec != engine.cusum_direct(path, bern, i)))
    out.append(CheckResult("engine.gaussian_recursion_vs_definition", worst <= 1e-12, worst, 0.0, 1e-12))
    out.append(CheckResult("engine.bernoulli_recursion_vs_definition", mismatches == 0, mismatches, 0, 0))
    out.append(CheckResult("engine.equivalence_runtime", t.seconds < time_limit,
                           round(t.seconds, 3), f"< {time_limit}", None, t.seconds))
    return out


def check_stop_rule(n_paths: int = 200, b: float = 4.0, seed: int = 1) -> list[CheckResult]:
    """``engine.run`` stops exactly where the recursion first reaches ``b``, deciding by argmax."""
    hs = gaussian_concurrent()
    rng = np.random.default_rng(seed)
    bad = 0
    with _Timer() as t:
        for n in range(n_paths):
            path = np.concatenate([hs.sample(rng, None, 30), hs.sample(rng, n % hs.size, 200)])
            inc = hs.llr(path)
            y = np.column_stack([engine.cusum_recursive(inc[:, i]) for i in range(hs.size)])
            hit = np.flatnonzero(y.max(axis=1) >= b)
            res = engine.run(hs, b, iter(path), horizon=len(path))
            if hit.size == 0:
                bad += int(not res.truncated)
            else:
                bad += int(res.stop != hit[0] + 1 or res.decision != int(np.argmax(y[hit[0]])))
    return [CheckResult("engine.stop_and_decision_rule", bad == 0, bad, 0, 0, t.seconds)]


def check_kernel_monotonicity(n_samples: int = 100_000, seed: int = 0) -> list[CheckResult]:
    hs = gaussian_single_fault()
    out = []
    with _Timer() as t:
        rows = monotone_kernel_check(hs, 0, [(0.0, 1.0), (1.0, 2.0), (0.0, 3.0)], n_samples, seed)
    for row in rows:
        out.append(CheckResult(
            f"engine.kernel_dominance[{row.x:g},{row.x_prime:g}]", row.passed,
            round(row.violation, 6), 0.0, round(row.band, 6), t.seconds / len(rows)))
    return out


def check_unconditional_tail(steps=(20, 100), n_paths: int = 20_000, seed: int = 0) -> list[CheckResult]:
    """``P_inf(Y_i(n) >= x) <= e^{-x}`` holds for every CuSum statistic without stopping."""
    hs = gaussian_single_fault()
    xs = [0.5 * k for k in range(11)]
    out = []
    for n in steps:
        with _Timer() as t:
            rows = unconditional_tail(hs, n, xs, n_paths, seed)
        worst = max(rows, key=lambda r: r.estimate.value - r.bound - 3 * r.estimate.se)
        out.append(CheckResult(f"engine.unconditional_tail[n={n}]", all(r.passed() for r in rows),
                               f"{worst.estimate.value:.5f} at x={worst.x:g}", f"<= {worst.bound:.5f}",
                               f"3se={3 * worst.estimate.se:.5f}", t.seconds))
    return out


def check_measurability(n_paths: int = 200, b: float = 4.0, seed: int = 2) -> list[CheckResult]:
    """Changing the data after the stopping time leaves ``(T, D)`` unchanged."""
    hs = gaussian_concurrent()
    rng = np.random.default_rng(seed)
    changed = 0
    with _Timer() as t:
        for n in range(n_paths):
            path = hs.sample(rng, n % hs.size, 300)
            first = engine.run(hs, b, iter(path), horizon=len(path))
            if first.truncated:
                continue
            altered = path.copy()
            altered[first.stop:] = hs.sample(rng, (n + 1) % hs.size, len(path) - first.stop)
            second = engine.run(hs, b, iter(altered), horizon=len(path))
            changed += int((second.stop, second.decision) != (first.stop, first.decision))
    return [CheckResult("engine.decision_measurability", changed == 0, changed, 0, 0, t.seconds)]


# --- bounds -------------------------------------------------------------------------------


def check_kl_matrices() -> list[CheckResult]:
    out = []
    for name, hs in (("single", gaussian_single_fault()), ("concurrent", gaussian_concurrent()),
                     ("bernoulli", bernoulli_single_fault(3))):
        a, b = kl_matrix(hs), kl_matrix_direct(hs)
        diff = max(float(np.max(np.abs(a.single - b.single))), float(np.max(np.abs(a.pair - b.pair))))
        out.append(CheckResult(f"bounds.kl_closed_form_vs_direct[{name}]", diff <= 1e-12, diff, 0.0, 1e-12))
    return out


def check_roots(tol: float = 1e-8) -> list[CheckResult]:
    """Bisection against the known roots, and ``psi'(0) = I_j - I_ji``."""
    out = []
    with _Timer() as t:
        sf = gaussian_single_fault()
        worst = 0.0
        for i in range(sf.size):
            for j in range(sf.size):
                if i != j:
                    worst = max(worst, abs(bounds.find_root(sf, i, j, method="bisection").value - 1.0))
    out.append(CheckResult("bounds.single_fault_roots", worst <= tol, worst, 1.0, tol, t.seconds))

    for gammas in ((0.0, -1.0, 1.0), (0.0, -0.5, 2.0), (0.0, -2.0, 0.7)):
        hs = build_two_sided(gaussian_family(), *gammas)
        g = {0: hs.gammas[1], 1: hs.gammas[2]}
        for i, j in ((0, 1), (1, 0)):
            expected = 1.0 + 2.0 * abs(g[j] / g[i])
            got = bounds.find_root(hs, i, j, method="bisection").value
            out.append(CheckResult(
                f"bounds.two_sided_root{gammas}[{hs.labels[i]},{hs.labels[j]}]",
                abs(got - expected) <= tol, got, expected, tol))

    h = 1e-5
    worst = 0.0
    for hs in (sf, gaussian_concurrent(), build_two_sided(gaussian_family(), 0.0, -0.5, 2.0),
               bernoulli_single_fault(3)):
        kl = kl_matrix(hs)
        for i in range(hs.size):
            for j in range(hs.size):
                if i != j:
                    slope = (bounds.psi(hs, i, j, h) - bounds.psi(hs, i, j, -h)) / (2 * h)
                    worst = max(worst, abs(slope - (kl.I(j) - kl.I_pair(j, i))))
    out.append(CheckResult("bounds.psi_slope_at_zero", worst <= 1e-6, worst, 0.0, 1e-6))
    return out


def check_constants() -> list[CheckResult]:
    out = []
    sf = gaussian_single_fault()
    c = bounds.corollary1_constant(sf)
    out.append(CheckResult("bounds.single_fault_constant", abs(c - 6.0) <= 1e-12, c, 6.0, 1e-12))
    b = bounds.b_alpha(0.01, 3)
    out.append(CheckResult("bounds.b_alpha", abs(b - math.log(300)) <= 1e-12, b, math.log(300), 1e-12))
    arl = bounds.arl_lower_bound(b, 3)
    out.append(CheckResult("bounds.arl_at_b_alpha", abs(arl - 100.0) <= 1e-9, arl, 100.0, 1e-9))
    for gammas, expected in (((0.0, -1.0, 1.0), 1.5), ((0.0, -0.5, 2.0), 3.0)):
        c2 = bounds.corollary2_constant(build_two_sided(gaussian_family(), *gammas))
        out.append(CheckResult(f"bounds.two_sided_constant{gammas}", abs(c2 - expected) <= 1e-8,
                               c2, expected, 1e-8))
    cf = gaussian_concurrent()
    kl = kl_matrix(cf)
    j = cf.index("{1,2}")
    got = {lab: kl.relation(cf.index(lab), j) for lab in ("{2}", "{1,3}", "{3}", "{1}", "{1,2,3}")}
    want = {"{2}": ">", "{1,3}": "=", "{3}": "<", "{1}": ">", "{1,2,3}": ">"}
    out.append(CheckResult("bounds.concurrent_drift_ordering", got == want, got, want, None))
    return out


def check_arl(thresholds=(3.0, 4.0), n_paths: int = 10_000, horizon: int = 100_000,
              seed: int = 0, workers: int = 1) -> list[CheckResult]:
    hs = gaussian_single_fault()
    out = []
    for n, b in enumerate(thresholds):
        with _Timer() as t:
            est = estimate_arl(hs, b, n_paths, horizon, seed, workers, key=(20, n))
        bound = bounds.arl_lower_bound(b, hs.size)
        frac = est.n_truncated / n_paths
        ok = est.value >= bound - 3 * est.se and frac <= 1e-3
        out.append(CheckResult(f"bounds.arl[b={b:g}]", ok,
                               f"{est.value:.3f} (se {est.se:.3f}, truncated {frac:.4%})",
                               f">= {bound:.3f}", "3se, truncated <= 0.1%", t.seconds))
    return out


def check_delay(b: float = 6.0, n_paths: int = 10_000, horizon: int = 100_000, seed: int = 0,
                workers: int = 1, n_excess: int = 1_000_000) -> list[CheckResult]:
    hs = gaussian_single_fault()
    with _Timer() as t:
        est = estimate_delay(hs, 0, b, n_paths, horizon, seed, workers, key=(21,))
        excess, excess_se = bounds.excess_constant(hs, 0, seed=seed, n_samples=n_excess)
    I = kl_matrix(hs).I(0)
    lo, hi = b / I - 3 * est.se, b / I + excess + 3 * est.se
    return [CheckResult("bounds.delay_bracket", lo <= est.value <= hi,
                        f"{est.value:.4f} (se {est.se:.4f})",
                        f"[{lo:.4f}, {hi:.4f}] with B={excess:.4f} (se {excess_se:.4f})", "3se", t.seconds)]


def check_lemma1(b: float = 5.0, xs=(0.0, 1.0, 2.0, 3.0, 4.0), n_paths: int = 10_000,
                 horizon: int = 100_000, seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Mean single-statistic stopping time from ``x`` against its lower-bound function."""
    hs = gaussian_single_fault()
    i, j = 1, 0
    kl = kl_matrix(hs)
    with _Timer() as t:
        consts = bounds.lorden_constants(hs, i, j, seed=seed)
        r = bounds.find_root(hs, i, j, kl=kl).value
        ests = [estimate_L(hs, i, j, x, b, n_paths, horizon, seed, workers, key=(22, n))
                for n, x in enumerate(xs)]
    L0 = ests[0].value
    gap = kl.I_pair(j, i) - kl.I(j)
    out = []
    for x, est in zip(xs, ests):
        lower = bounds.lemma1_lower(x, b, r, consts.overshoot, gap, L0)
        out.append(CheckResult(f"bounds.lemma1[x={x:g}]", est.value >= lower - 3 * est.se,
                               f"{est.value:.3f} (se {est.se:.3f})", f">= {lower:.3f}", "3se",
                               t.seconds / len(xs)))
    worst = max(c.value - a.value - 3 * math.hypot(a.se, c.se) for a, c in zip(ests, ests[1:]))
    out.append(CheckResult("bounds.lemma1_non_increasing", worst <= 0.0,
                           [round(e.value, 2) for e in ests], "non-increasing", "3se of difference"))
    return out


# --- oracle -------------------------------------------------------------------------------


def check_enumeration_oracle(reps: int = 100, n_paths: int = 100_000, b: float = 1.0,
                             horizon: int = 8, nus=(0, 2), min_agree: int = 99,
                             seed: int = 0) -> list[CheckResult]:
    hs = bernoulli_single_fault()
    out = []
    for nu in nus:
        with _Timer() as t:
            exact = exact_enumeration(hs, 0, nu, b, horizon).conditional_misid()
            agree = 0
            for rep in range(reps):
                res = simulate(hs, 0, nu, [b], n_paths, seed + rep, horizon, 1, key=(23, nu))
                agree += int(misid_from_results(res, 0)[0].within(exact))
        out.append(CheckResult(f"oracle.enumeration[nu={nu}]", agree >= min_agree,
                               f"{agree}/{reps}", f">= {min_agree}/{reps} within 3se of {exact:.6f}",
                               "3se", t.seconds))
    return out


def check_condition34(nu: int = 20, b: float = 4.0, n_paths: int = 10_000, seed: int = 0) -> list[CheckResult]:
    hs = gaussian_single_fault()
    xs = [0.5 * k for k in range(9)]
    with _Timer() as t:
        rows = verify_condition34(hs, nu, b, xs, n_paths, seed)
    out = []
    for x in xs:
        sel = [r for r in rows if r.x == x]
        worst = max(sel, key=lambda r: r.estimate.value - r.bound - 3 * r.estimate.se)
        out.append(CheckResult(
            f"condition34.tail[x={x:g}]", all(r.passed() for r in sel),
            f"{worst.estimate.value:.5f} (se {worst.estimate.se:.5f})", f"<= {worst.bound:.5f}", "3se",
            t.seconds / len(xs)))
    return out


# --- figures and determinism --------------------------------------------------------------


def _by_metric(rows, metric):
    table = {}
    for r in rows:
        if r.metric == metric:
            table.setdefault(r.nu, []).append(r)
    return table


def pooled_proportion_se(r1, r2) -> float:
    """SE of a difference of two independent proportions under the pooled null."""
    e1, e2 = round(r1.value * r1.n_effective), round(r2.value * r2.n_effective)
    m1, m2 = r1.n_effective, r2.n_effective
    p = (e1 + e2) / (m1 + m2)
    return math.sqrt(p * (1 - p) * (1 / m1 + 1 / m2))


def smooth_counts(rows, window: int = 5):
    """Centred moving window pooling event and path counts; returns (p, se) per point."""
    events = np.array([round(r.value * r.n_effective) for r in rows], dtype=float)
    m = np.array([r.n_effective for r in rows], dtype=float)
    half = window // 2
    out = []
    for k in range(len(rows)):
        lo, hi = max(0, k - half), min(len(rows), k + half + 1)
        e, n = events[lo:hi].sum(), m[lo:hi].sum()
        p = e / n
        out.append((p, math.sqrt(p * (1 - p) / n)))
    return out


def check_fig2(n_paths: int = 10_000, seed: int = 0, workers: int = 1, rows=None) -> list[CheckResult]:
    if rows is None:
        with _Timer() as t:
            rows = reproduce("fig2", seed=seed, n_paths=n_paths, workers=workers).rows
        elapsed = t.seconds
    else:
        elapsed = 0.0
    table = _by_metric(rows, "misid")
    out = []
    excess = [(r.value - r.bound_value - 3 * r.se, r) for r in rows
              if r.metric == "misid" and r.n_effective > 0]
    worst, wr = max(excess, key=lambda p: p[0])
    out.append(CheckResult("fig2.below_single_fault_bound", worst <= 0.0,
                           f"max(p - C b e^-b - 3se) = {worst:.3g} at nu={wr.nu}, b={wr.b}", "<= 0",
                           "3se", elapsed))
    diffs = []
    for a, c in zip(table[20], table[100]):
        se = pooled_proportion_se(a, c)
        diffs.append((abs(a.value - c.value) - 3 * se, a.b))
    worst, at = max(diffs)
    out.append(CheckResult("fig2.nu20_vs_nu100", worst <= 0.0,
                           f"max(|d| - 3se) = {worst:.3g} at b={at}", "<= 0", "3 pooled se"))
    for nu, rs in sorted(table.items()):
        sm = smooth_counts(rs)
        steps_ok = all(s2[0] <= s1[0] + 3 * math.hypot(s1[1], s2[1]) for s1, s2 in zip(sm, sm[1:]))
        ok = steps_ok and sm[-1][0] < sm[0][0]
        out.append(CheckResult(f"fig2.decreasing[nu={nu}]", ok,
                               f"smoothed {sm[0][0]:.4f} -> {sm[-1][0]:.4f}", "non-increasing trend",
                               "3se per step"))
    return out


def check_fig4_ordering(n_paths: int = 10_000, seed: int = 0, workers: int = 1, b_range=(3.0, 6.0),
                        rows=None) -> list[CheckResult]:
    if rows is None:
        with _Timer() as t:
            rows = reproduce("fig4", seed=seed, n_paths=n_paths, workers=workers).rows
        elapsed = t.seconds
    else:
        elapsed = 0.0
    by = {}
    for r in rows:
        if r.nu == 100 and b_range[0] <= r.b <= b_range[1]:
            by.setdefault(r.b, {})[r.metric] = r
    worst = -math.inf
    where = None
    for b, ms in sorted(by.items()):
        for hi, lo in (("partial[{2}]", "partial[{1,3}]"), ("partial[{1,3}]", "partial[{3}]")):
            pa, pb, m = ms[hi].value, ms[lo].value, ms[hi].n_effective
            se = math.sqrt(max(pa + pb - (pa - pb) ** 2, 0.0) / m)
            gap = (pb - pa) - 3 * se
            if gap > worst:
                worst, where = gap, (b, hi, lo)
    return [CheckResult("fig4.partial_ordering", worst <= 0.0,
                        f"max shortfall {worst:.3g} at {where}", "P{2} >= P{1,3} >= P{3}", "3se",
                        elapsed)]


def check_determinism(n_paths: int = 10_000, seed: int = 0) -> list[CheckResult]:
    with _Timer() as t:
        a = render_csv(reproduce("fig2", seed=seed, n_paths=n_paths, workers=1).rows)
        c = render_csv(reproduce("fig2", seed=seed, n_paths=n_paths, workers=2).rows)
    return [CheckResult("determinism.fig2_workers_1_vs_2", a == c,
                        "identical" if a == c else "different", "identical", "byte-exact", t.seconds)]


# --- suites -------------------------------------------------------------------------------


def run_suite(suite: str, scale: float = 1.0, workers: int = 1, seed: int = 0) -> list[CheckResult]:
    """Run a named suite; ``scale`` < 1 shrinks the Monte Carlo sample sizes."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")

    def n(x):
        return max(100, int(x * scale))

    plan = {
        "engine": [
            lambda: check_engine_equivalence(),
            lambda: check_stop_rule(),
            lambda: check_measurability(),
            lambda: check_kernel_monotonicity(n(100_000), seed),
            lambda: check_unconditional_tail(n_paths=n(20_000), seed=seed),
        ],
        "bounds": [
            check_kl_matrices,
            check_roots,
            check_constants,
            lambda: check_arl(n_paths=n(10_000), seed=seed, workers=workers),
            lambda: check_delay(n_paths=n(10_000), seed=seed, workers=workers, n_excess=n(1_000_000)),
            lambda: check_lemma1(n_paths=n(10_000), seed=seed, workers=workers),
        ],
        "oracle": [
            lambda: check_enumeration_oracle(n_paths=n(100_000), seed=seed),
        ],
        "condition34": [
            lambda: check_condition34(n_paths=n(10_000), seed=seed),
        ],
        "figures": [
            lambda: check_fig2(n(10_000), seed, workers),
            lambda: check_fig4_ordering(n(10_000), seed, workers),
            lambda: check_determinism(n(10_000), seed),
        ],
    }
    names = [s for s in plan] if suite == "all" else [suite]
    results = []
    for name in names:
        for job in plan[name]:
            results.extend(job())
    return results
