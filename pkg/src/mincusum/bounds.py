"""Theoretical quantities for the min-CuSum: calibration, cumulant roots and
first-order misidentification bounds.

All bounds are first-order terms; the vanishing correction factor is taken to
be zero throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .distributions import Bernoulli, log_mgf_llr
from .scenarios import (
    CONCURRENT_FAULT,
    SINGLE_FAULT,
    TWO_SIDED,
    HypothesisSet,
    KLMatrix,
    kl_matrix,
)

ROOT_XTOL = 1e-10
ROOT_MAXITER = 200
ROOT_THETA_MIN = 1e-6
ROOT_THETA_MAX = 2.0 ** 20
OMEGA_GRID_POINTS = 64
OMEGA_GRID_SPAN = 10.0
OMEGA_SAMPLES = 100_000
OMEGA_MIN_TAIL = 100
B_SAMPLES = 1_000_000
PSI_ONE_TOL = 1e-12


class NoBoundAvailable(ValueError):
    """The pair falls outside every case the misidentification bound covers."""


class RootNotFound(NoBoundAvailable):
    """The cumulant has no sign change on ``(0, 64]``."""


def b_alpha(alpha: float, k: int) -> float:
    """Threshold ``|log alpha| + log k`` that keeps the mean time to false alarm above ``1/alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if k < 1:
        raise ValueError(f"hypothesis count must be positive, got {k}")
    return abs(math.log(alpha)) + math.log(k)


def arl_lower_bound(b: float, k: int) -> float:
    """``exp(b) / k``."""
    return math.exp(b) / k


def delay_approximation(alpha: float, kl: float) -> float:
    """First-order detection delay ``|log alpha| / I``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not kl > 0:
        raise ValueError("KL number must be positive")
    return abs(math.log(alpha)) / kl


def delay_upper_bound(b: float, kl: float, excess: float) -> float:
    """``b / I_j + B_j``: mean delay of the correct statistic when the change is at time 0."""
    return b / kl + excess


# --- cumulant of the wrong-hypothesis LLR -------------------------------------------------


def _pair(hs, i, j):
    i, j = hs.index(i), hs.index(j)
    if i == j:
        raise ValueError("i and j must differ")
    return i, j


def psi(hs: HypothesisSet, i, j, theta: float) -> float:
    """``log E_j[exp(theta * llr_i)]`` for a single observation.

    Two-sided sets use the family cumulant directly; multichannel sets add up
    the per-channel log-MGFs of the touched coordinates.
    """
    i, j = _pair(hs, i, j)
    if hs.kind == TWO_SIDED:
        fam = hs.family
        g0, gi, gj = hs.gammas[0], hs.gammas[1 + i], hs.gammas[1 + j]
        arg = gj + theta * (gi - g0)
        if not fam.contains(arg):
            raise ValueError(f"theta={theta} leaves the natural parameter space of {fam.name}")
        return fam.phi(arg) - fam.phi(gj) - theta * (fam.phi(gi) - fam.phi(g0))
    gi, law = hs.alternatives[i], hs.law(j)
    total = 0.0
    for t in hs.touched[i]:
        total += log_mgf_llr(gi[t], hs.null[t], law[t], theta)
    if not math.isfinite(total):
        raise ValueError(f"cumulant is infinite at theta={theta}")
    return total


def psi_mc(hs: HypothesisSet, i, j, theta: float, n_samples: int = 100_000, seed: int = 0):
    """Monte Carlo ``(value, standard_error)`` of ``psi`` for laws without a closed form."""
    i, j = _pair(hs, i, j)
    rng = np.random.default_rng(seed)
    z = theta * hs.llr(hs.sample(rng, j, n_samples))[:, i]
    top = z.max()
    w = np.exp(z - top)
    mean = w.mean()
    # delta method on log of the mean
    se = float(w.std(ddof=1) / math.sqrt(n_samples) / mean)
    return float(top + math.log(mean)), se


@dataclass(frozen=True)
class CumulantRoot:
    i: int
    j: int
    value: float
    method: str
    bracket: tuple[float, float] | None = None


def analytic_root(hs: HypothesisSet, i: int, j: int) -> float | None:
    if hs.kind in (SINGLE_FAULT, CONCURRENT_FAULT) and not set(hs.touched[i]) & set(hs.touched[j]):
        # every touched coordinate of g_i is pre-change under g_j: E_j[g_i/f] = 1
        return 1.0
    if hs.kind == TWO_SIDED and hs.family.name == "gaussian":
        g0, gi, gj = hs.gammas[0], hs.gammas[1 + i], hs.gammas[1 + j]
        return 1.0 + 2.0 * (g0 - gj) / (gi - g0)
    return None


def find_root(hs: HypothesisSet, i, j, method: str = "auto", kl: KLMatrix | None = None) -> CumulantRoot:
    """Positive root of ``psi_ij``.

    ``method='auto'`` returns the known closed form when there is one and
    bisects otherwise; ``method='bisection'`` always bisects.
    """
    i, j = _pair(hs, i, j)
    kl = kl_matrix(hs) if kl is None else kl
    if kl.relation(i, j) != "<":
        raise RootNotFound(
            f"no positive root expected for ({hs.labels[i]}, {hs.labels[j]}): I_j >= I_ji"
        )
    if method == "auto":
        r = analytic_root(hs, i, j)
        if r is not None:
            return CumulantRoot(i, j, r, "analytic")
    elif method != "bisection":
        raise ValueError(f"unknown method {method!r}")

    def f(theta):
        return psi(hs, i, j, theta)

    lo, hi = ROOT_THETA_MIN, 1.0
    if f(lo) >= 0:
        raise RootNotFound("cumulant is not negative near zero")
    while True:
        try:
            if f(hi) > 0:
                break
        except ValueError as exc:  # doubling left the natural parameter space
            raise RootNotFound(f"psi has no sign change inside the parameter space: {exc}") from exc
        hi *= 2.0
        if hi > ROOT_THETA_MAX:
            raise RootNotFound(f"no sign change of psi on (0, {ROOT_THETA_MAX:g}]")
    r = bisect(f, lo, hi, xtol=ROOT_XTOL, maxiter=ROOT_MAXITER)
    return CumulantRoot(i, j, float(r), "bisection", (lo, hi))


# --- overshoot constants --------------------------------------------------------------------


@dataclass(frozen=True)
class LordenConstants:
    """Excess and overshoot constants for the ordered pair ``(i, j)``.

    ``excess`` is ``B_j``, ``overshoot`` is ``omega_ij``, ``undershoot`` is
    ``omega~_ij`` and ``second_moment`` is ``E_j[llr_i^2]``.  ``se`` maps each
    name to its Monte Carlo standard error (zero when exact).
    """

    i: int
    j: int
    excess: float
    overshoot: float
    undershoot: float
    second_moment: float
    method: str
    se: dict = field(default_factory=dict)


def _all_bernoulli(hs):
    return all(isinstance(d, Bernoulli) for g in (hs.null,) + hs.alternatives for d in g)


def _discrete_llr_law(hs, i, j):
    """Atoms and probabilities of ``llr_i`` under ``g_j`` for all-Bernoulli sets."""
    outcomes = np.array(list(itertools.product((0.0, 1.0), repeat=hs.dim)))
    logp = np.zeros(len(outcomes))
    for t, d in enumerate(hs.law(j)):
        logp += np.asarray(d.log_density(outcomes[:, t]))
    values = hs.llr(outcomes)[:, i]
    atoms, inv = np.unique(values, return_inverse=True)
    probs = np.bincount(inv, weights=np.exp(logp), minlength=len(atoms))
    return atoms, probs


def overshoot_exact(atoms: np.ndarray, probs: np.ndarray) -> float:
    """``sup_{t >= 0} E[Z - t | Z >= t]`` for a finitely supported ``Z``.

    Between consecutive atoms the conditioning set is fixed and ``Z - t``
    decreases in ``t``, so the supremum is taken at ``t = 0`` or just above a
    non-negative atom.
    """
    order = np.argsort(atoms)
    v, p = atoms[order], probs[order]
    best = 0.0

    def tail_mean(k):
        w = p[k:]
        return float(np.dot(v[k:], w) / w.sum())

    first = np.searchsorted(v, 0.0, side="left")
    if first < len(v):
        best = tail_mean(first)
    for k in range(len(v) - 1):
        if v[k] >= 0.0:
            best = max(best, tail_mean(k + 1) - v[k])
    return best


def undershoot_exact(atoms: np.ndarray, probs: np.ndarray) -> float:
    """``-inf_{t <= 0} E[Z - t | Z <= t]`` for a finitely supported ``Z``."""
    order = np.argsort(atoms)
    v, p = atoms[order], probs[order]
    worst = 0.0

    def head_mean(k):
        w = p[: k + 1]
        return float(np.dot(v[: k + 1], w) / w.sum())

    last = np.searchsorted(v, 0.0, side="right") - 1
    if last >= 0:
        worst = min(worst, head_mean(last))
    for k in range(len(v) - 1):
        if v[k + 1] <= 0.0:
            worst = min(worst, head_mean(k) - v[k + 1])
    return -worst


def overshoot_mc(z: np.ndarray, span: float = OMEGA_GRID_SPAN, points: int = OMEGA_GRID_POINTS,
                 min_tail: int = OMEGA_MIN_TAIL):
    """Grid supremum of the mean excess over ``t`` in ``[0, span]``; returns ``(value, se)``.

    Grid points with fewer than ``min_tail`` exceedances are skipped.
    """
    best, best_se = 0.0, 0.0
    for t in np.linspace(0.0, span, points):
        tail = z[z >= t]
        if tail.size < min_tail:
            continue
        m = float(tail.mean() - t)
        if m > best:
            best, best_se = m, float(tail.std(ddof=1) / math.sqrt(tail.size))
    return best, best_se


def undershoot_mc(z: np.ndarray, span: float = OMEGA_GRID_SPAN, points: int = OMEGA_GRID_POINTS,
                  min_tail: int = OMEGA_MIN_TAIL):
    value, se = overshoot_mc(-z, span, points, min_tail)
    return value, se


def lorden_constants(hs: HypothesisSet, i, j, method: str = "auto", seed: int = 0,
                     n_samples: int = OMEGA_SAMPLES, n_excess: int = B_SAMPLES) -> LordenConstants:
    """``B_j``, ``omega_ij``, ``omega~_ij`` and ``E_j[llr_i^2]``.

    Exact finite sums for all-Bernoulli sets; otherwise Monte Carlo with
    ``n_samples`` draws for the grid suprema and ``n_excess`` draws for ``B_j``.
    """
    i, j = _pair(hs, i, j)
    kl = kl_matrix(hs)
    I_j = kl.I(j)
    if method == "auto":
        method = "exact" if _all_bernoulli(hs) else "monte_carlo"
    if method == "exact":
        atoms_i, p_i = _discrete_llr_law(hs, i, j)
        atoms_j, p_j = _discrete_llr_law(hs, j, j)
        excess = float(np.dot(np.maximum(atoms_j, 0.0) ** 2, p_j)) / I_j ** 2
        return LordenConstants(
            i, j,
            excess=excess,
            overshoot=overshoot_exact(atoms_i, p_i),
            undershoot=undershoot_exact(atoms_i, p_i),
            second_moment=float(np.dot(atoms_i ** 2, p_i)),
            method="exact",
            se={"excess": 0.0, "overshoot": 0.0, "undershoot": 0.0, "second_moment": 0.0},
        )
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j)))
    zj = hs.llr(hs.sample(rng, j, n_excess))[:, j]
    sq = np.maximum(zj, 0.0) ** 2
    zi = hs.llr(hs.sample(rng, j, n_samples))[:, i]
    over, over_se = overshoot_mc(zi)
    under, under_se = undershoot_mc(zi)
    return LordenConstants(
        i, j,
        excess=float(sq.mean()) / I_j ** 2,
        overshoot=over,
        undershoot=under,
        second_moment=float(np.mean(zi ** 2)),
        method="monte_carlo",
        se={
            "excess": float(sq.std(ddof=1) / math.sqrt(n_excess)) / I_j ** 2,
            "overshoot": over_se,
            "undershoot": under_se,
            "second_moment": float(np.std(zi ** 2, ddof=1) / math.sqrt(n_samples)),
        },
    )


def excess_constant(hs: HypothesisSet, j, seed: int = 0, n_samples: int = B_SAMPLES):
    """``(B_j, se)`` on its own, without the pair constants."""
    j = hs.index(j)
    I_j = kl_matrix(hs).I(j)
    if _all_bernoulli(hs):
        atoms, p = _discrete_llr_law(hs, j, j)
        return float(np.dot(np.maximum(atoms, 0.0) ** 2, p)) / I_j ** 2, 0.0
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j, j)))
    z = hs.llr(hs.sample(rng, j, n_samples))[:, j]
    sq = np.maximum(z, 0.0) ** 2
    return float(sq.mean()) / I_j ** 2, float(sq.std(ddof=1) / math.sqrt(n_samples)) / I_j ** 2


# --- bound curves ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCurve:
    """First-order bound ``b -> value`` for one case.

    ``constant`` is the multiplier in front: ``r/(r-1)``, ``r + 1/I_j``,
    ``C~``, ``C`` or ``C*`` depending on ``case``.
    """

    case: str
    constant: float
    r: float | None = None
    I_j: float | None = None
    I_ji: float | None = None
    pair: tuple[int, int] | None = None

    def __call__(self, b: float) -> float:
        if self.case == "r>1":
            return self.constant * math.exp(-b)
        if self.case == "r<=1":
            return self.constant * b * math.exp(-self.r * b)
        if self.case == "equal-KL":
            return self.constant / b
        if self.case == "corollary1":
            return self.constant * b * math.exp(-b)
        if self.case == "corollary2":
            return self.constant * math.exp(-b)
        raise ValueError(f"unknown case {self.case!r}")

    def knee(self) -> float:
        """Threshold beyond which the curve is strictly decreasing."""
        if self.case == "r<=1":
            return 1.0 / self.r
        if self.case == "corollary1":
            return 1.0
        return 0.0


def bound_curve(hs: HypothesisSet, i, j, constants: LordenConstants | None = None,
                kl: KLMatrix | None = None, seed: int = 0) -> BoundCurve:
    """Bound on ``P_{nu,j}(D = i | T > nu)`` as a function of ``b``."""
    i, j = _pair(hs, i, j)
    kl = kl_matrix(hs) if kl is None else kl
    I_j, I_ji = kl.I(j), kl.I_pair(j, i)
    rel = kl.relation(i, j)
    if rel == ">":
        raise NoBoundAvailable(
            f"no theoretical bound available for ({hs.labels[i]}, {hs.labels[j]}): I_j > I_ji"
        )
    if rel == "=":
        c = lorden_constants(hs, i, j, seed=seed) if constants is None else constants
        c_tilde = 1.0 + c.overshoot + c.undershoot + c.second_moment / I_j
        return BoundCurve("equal-KL", c_tilde, None, I_j, I_ji, (i, j))
    r = find_root(hs, i, j, kl=kl).value
    # psi is negative on (0, r): the sign at 1 decides the case without root error
    at_one = psi(hs, i, j, 1.0)
    if abs(at_one) <= PSI_ONE_TOL:
        r = 1.0
    if at_one < -PSI_ONE_TOL:
        return BoundCurve("r>1", r / (r - 1.0), r, I_j, I_ji, (i, j))
    return BoundCurve("r<=1", r + 1.0 / I_j, r, I_j, I_ji, (i, j))


def misid_bound(hs: HypothesisSet, i, j, b: float, constants: LordenConstants | None = None) -> float:
    if not b > 0:
        raise ValueError("threshold must be positive")
    return bound_curve(hs, i, j, constants)(b)


def corollary1_constant(hs: HypothesisSet) -> float:
    """``C = (|I| - 1)(1 + max_i 1/I_i)`` for single-fault sets."""
    if hs.kind != SINGLE_FAULT:
        raise ValueError(f"the single-fault constant needs a single-fault set, got {hs.kind}")
    kl = kl_matrix(hs)
    return (hs.size - 1) * (1.0 + float(np.max(1.0 / kl.single)))


def corollary1_bound(hs: HypothesisSet, b: float) -> tuple[float, float]:
    """``(C b exp(-b), C)``."""
    c = corollary1_constant(hs)
    return c * b * math.exp(-b), c


def corollary2_constant(hs: HypothesisSet) -> float:
    """Two-sided constant: the worse of the two ``r/(r-1)`` multipliers.

    For the Gaussian family with ``gamma0 = 0`` this equals
    ``1 + max(|g1/g2|, |g2/g1|) / 2``.
    """
    if hs.kind != TWO_SIDED:
        raise ValueError(f"the two-sided constant needs a two-sided set, got {hs.kind}")
    out = 0.0
    for i, j in ((0, 1), (1, 0)):
        r = find_root(hs, i, j).value
        if r <= 1.0:
            raise NoBoundAvailable("a root does not exceed one; the exponential bound does not apply")
        out = max(out, r / (r - 1.0))
    return out


def scenario_bound(hs: HypothesisSet) -> BoundCurve | None:
    """Worst-case overall bound when the scenario has one (single-fault or two-sided)."""
    if hs.kind == SINGLE_FAULT:
        return BoundCurve("corollary1", corollary1_constant(hs))
    if hs.kind == TWO_SIDED:
        try:
            return BoundCurve("corollary2", corollary2_constant(hs))
        except NoBoundAvailable:
            return None
    return None


def overall_bound(hs: HypothesisSet, j, b: float, seed: int = 0) -> float | None:
    """Sum over rivals of the pairwise bounds; ``None`` if any rival has no bound."""
    j = hs.index(j)
    kl = kl_matrix(hs)
    total = 0.0
    for i in range(hs.size):
        if i == j:
            continue
        try:
            total += bound_curve(hs, i, j, kl=kl, seed=seed)(b)
        except NoBoundAvailable:
            return None
    return total


# --- lower-bound functions for the initialised stopping time --------------------------------


def lemma1_lower(x: float, b: float, r: float, overshoot: float, kl_gap: float, L0: float) -> float:
    """``[x - e^{-r(b-x)}(b + omega)] / (I_ji - I_j) + (1 - e^{-r(b-x)}) L0``."""
    _check_x(x, b)
    e = math.exp(-r * (b - x))
    return (x - e * (b + overshoot)) / kl_gap + (1.0 - e) * L0


def lemma1_upper_case(x: float, b: float, overshoot: float, undershoot: float,
                      second_moment: float, L0: float) -> float:
    """Equal-KL lower bound ``(b - x)/(b + omega + omega~) * (x b / E[llr^2] + L0)``."""
    _check_x(x, b)
    return (b - x) / (b + overshoot + undershoot) * (x * b / second_moment + L0)


def lemma1_curves(case: str, x: float, b: float, constants: dict, L0: float) -> float:
    """Dispatch to the ``l`` (``case='l'``) or ``u`` (``case='u'``) lower-bound function."""
    if case == "l":
        return lemma1_lower(x, b, constants["r"], constants["overshoot"], constants["kl_gap"], L0)
    if case == "u":
        return lemma1_upper_case(
            x, b, constants["overshoot"], constants["undershoot"], constants["second_moment"], L0
        )
    raise ValueError(f"case must be 'l' or 'u', got {case!r}")


def _check_x(x, b):
    if not 0.0 <= x <= b:
        raise ValueError(f"x must lie in [0, b] = [0, {b}], got {x}")
