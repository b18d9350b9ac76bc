"""Hypothesis sets for the single-fault, concurrent-fault and two-sided problems.

Every scenario is a product of independent coordinates: the pre-change law
``f`` is a tuple of per-coordinate densities and each alternative ``g_i``
replaces some of them.  The per-hypothesis log-likelihood ratio therefore only
touches the coordinates where ``g_i`` differs from ``f``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    Distribution,
    ExponentialFamily1D,
    Gaussian,
    kl_divergence,
    tilt,
)

SINGLE_FAULT = "single_fault"
CONCURRENT_FAULT = "concurrent_fault"
TWO_SIDED = "two_sided"
MAX_CONCURRENT_CHANNELS = 12
EQUAL_KL_TOL = 1e-9


@dataclass(frozen=True)
class ChannelSpec:
    pre: Distribution
    post: Distribution

    def __post_init__(self):
        if type(self.pre) is not type(self.post):
            raise ValueError(
                f"channel pre/post densities must share a support: {self.pre.kind} vs {self.post.kind}"
            )
        for name, value in (("KL(post, pre)", self.kl_post_pre), ("KL(pre, post)", self.kl_pre_post)):
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    @property
    def kl_post_pre(self) -> float:
        return _exact_kl(self.post, self.pre)

    @property
    def kl_pre_post(self) -> float:
        return _exact_kl(self.pre, self.post)


def _exact_kl(p, q) -> float:
    value = kl_divergence(p, q)
    if isinstance(value, tuple):
        raise ValueError(f"no closed-form KL for {p.kind} vs {q.kind}")
    return value


@dataclass(frozen=True)
class HypothesisSet:
    """Pre-change law plus the indexed post-change alternatives.

    ``alternatives[i][t]`` is the density of coordinate ``t`` under ``g_i``.
    ``touched[i]`` lists the coordinates where ``g_i`` differs from ``f``.
    Hypotheses are stored in canonical order, which is also the argmax
    tie-break order.
    """

    kind: str
    null: tuple[Distribution, ...]
    alternatives: tuple[tuple[Distribution, ...], ...]
    labels: tuple[str, ...]
    touched: tuple[tuple[int, ...], ...]
    channels: tuple[ChannelSpec, ...] = ()
    subsets: tuple[frozenset, ...] = ()
    family: ExponentialFamily1D | None = None
    gammas: tuple[float, ...] = ()
    _membership: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.alternatives) < 1:
            raise ValueError("a hypothesis set needs at least one alternative")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"hypothesis labels must be unique: {self.labels}")
        if len(self.labels) != len(self.alternatives):
            raise ValueError("one label per alternative is required")
        for label, g, idx in zip(self.labels, self.alternatives, self.touched):
            if len(g) != self.dim:
                raise ValueError(f"alternative {label} has the wrong number of coordinates")
            if not idx:
                raise ValueError(f"alternative {label} coincides with the pre-change law")
        m = np.zeros((self.dim, self.size))
        for i, idx in enumerate(self.touched):
            m[list(idx), i] = 1.0
        object.__setattr__(self, "_membership", m)

    @property
    def dim(self) -> int:
        return len(self.null)

    @property
    def size(self) -> int:
        return len(self.alternatives)

    def index(self, hyp) -> int:
        """Position of a hypothesis given by label or integer position."""
        if isinstance(hyp, (int, np.integer)):
            if not 0 <= hyp < self.size:
                raise IndexError(f"hypothesis index {hyp} out of range")
            return int(hyp)
        try:
            return self.labels.index(str(hyp))
        except ValueError:
            raise KeyError(f"unknown hypothesis {hyp!r}; known: {list(self.labels)}") from None

    def law(self, hyp=None) -> tuple[Distribution, ...]:
        """Per-coordinate data law: ``f`` when ``hyp`` is None, else ``g_hyp``."""
        return self.null if hyp is None else self.alternatives[self.index(hyp)]

    def coordinate_llr(self, x: np.ndarray) -> np.ndarray:
        """For single-channel-replacement sets: ``log q_t(x_t) - log p_t(x_t)`` per coordinate."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for t, spec in enumerate(self.channels):
            out[..., t] = spec.post.log_density(x[..., t]) - spec.pre.log_density(x[..., t])
        return out

    def llr(self, x) -> np.ndarray:
        """Log-likelihood ratios ``log g_i(x) - log f(x)`` for every hypothesis.

        ``x`` has shape ``(..., dim)``; the result has shape ``(..., size)``.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"observation must have {self.dim} coordinates, got shape {x.shape}")
        if self.channels:
            return self.coordinate_llr(x) @ self._membership
        out = np.empty(x.shape[:-1] + (self.size,))
        base = [np.asarray(f.log_density(x[..., t])) for t, f in enumerate(self.null)]
        for i, (g, idx) in enumerate(zip(self.alternatives, self.touched)):
            acc = 0.0
            for t in idx:
                acc = acc + (np.asarray(g[t].log_density(x[..., t])) - base[t])
            out[..., i] = acc
        return out

    def sample(self, rng: np.random.Generator, hyp, size) -> np.ndarray:
        """Draw ``size`` observations (shape ``size + (dim,)``) from ``f`` or ``g_hyp``."""
        size = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
        out = np.empty(size + (self.dim,))
        for t, d in enumerate(self.law(hyp)):
            out[..., t] = d.sample(rng, size)
        return out

    def to_record(self) -> dict:
        if self.kind == TWO_SIDED:
            return {
                "kind": self.kind,
                "family": self.family.name,
                "gammas": list(self.gammas),
            }
        return {
            "kind": self.kind,
            "channels": [
                {"pre": c.pre.to_record(), "post": c.post.to_record()} for c in self.channels
            ],
        }


def subset_label(s) -> str:
    return "{" + ",".join(str(t) for t in sorted(s)) + "}"


def _multichannel(kind, channels, subsets) -> HypothesisSet:
    null = tuple(c.pre for c in channels)
    alts, labels, touched = [], [], []
    for s in subsets:
        alts.append(tuple(c.post if t + 1 in s else c.pre for t, c in enumerate(channels)))
        touched.append(tuple(t - 1 for t in sorted(s)))
        labels.append(str(next(iter(s))) if kind == SINGLE_FAULT else subset_label(s))
    return HypothesisSet(
        kind=kind,
        null=null,
        alternatives=tuple(alts),
        labels=tuple(labels),
        touched=tuple(touched),
        channels=tuple(channels),
        subsets=tuple(frozenset(s) for s in subsets),
    )


def build_single_fault(channels) -> HypothesisSet:
    """Fault in exactly one of ``d >= 2`` channels; hypotheses are labelled ``"1".."d"``."""
    channels = tuple(channels)
    if len(channels) < 2:
        raise ValueError(f"single-fault diagnosis needs at least 2 channels, got {len(channels)}")
    return _multichannel(SINGLE_FAULT, channels, [{t} for t in range(1, len(channels) + 1)])


def canonical_subsets(d: int) -> list[frozenset]:
    """Non-empty subsets of ``{1..d}`` ordered by size, then lexicographically."""
    return [
        frozenset(c)
        for k in range(1, d + 1)
        for c in itertools.combinations(range(1, d + 1), k)
    ]


def build_concurrent_fault(channels) -> HypothesisSet:
    """Fault in an arbitrary non-empty subset of channels (``2^d - 1`` hypotheses)."""
    channels = tuple(channels)
    d = len(channels)
    if d < 1:
        raise ValueError("concurrent-fault diagnosis needs at least one channel")
    if d > MAX_CONCURRENT_CHANNELS:
        raise ValueError(
            f"concurrent-fault sets are capped at {MAX_CONCURRENT_CHANNELS} channels, got {d}"
        )
    return _multichannel(CONCURRENT_FAULT, channels, canonical_subsets(d))


def build_two_sided(fam: ExponentialFamily1D, gamma0: float, gamma1: float, gamma2: float) -> HypothesisSet:
    """Parameter of a single stream moves down to ``gamma1`` or up to ``gamma2``.

    The mirror ordering ``gamma2 < gamma0 < gamma1`` is accepted; hypotheses are
    always stored as ``[down, up]``.
    """
    for g in (gamma0, gamma1, gamma2):
        fam.check(g)
    lo, hi = min(gamma1, gamma2), max(gamma1, gamma2)
    if not lo < gamma0 < hi:
        raise ValueError(
            f"post-change parameters must bracket gamma0={gamma0}: got {gamma1}, {gamma2}"
        )
    f = tilt(fam, gamma0)
    return HypothesisSet(
        kind=TWO_SIDED,
        null=(f,),
        alternatives=((tilt(fam, lo),), (tilt(fam, hi),)),
        labels=("down", "up"),
        touched=((0,), (0,)),
        family=fam,
        gammas=(float(gamma0), float(lo), float(hi)),
    )


def gaussian_channels(d: int, pre_mean: float = 0.0, post_mean: float = 1.0) -> list[ChannelSpec]:
    """``d`` identical channels N(pre_mean, 1) -> N(post_mean, 1)."""
    return [ChannelSpec(Gaussian(pre_mean), Gaussian(post_mean)) for _ in range(d)]


@dataclass(frozen=True)
class KLMatrix:
    """``single[i]`` is ``I_i``; ``pair[i, j]`` is ``I_ij`` (diagonal is zero)."""

    labels: tuple[str, ...]
    single: np.ndarray
    pair: np.ndarray

    def I(self, i: int) -> float:
        return float(self.single[i])

    def I_pair(self, i: int, j: int) -> float:
        return float(self.pair[i, j])

    def relation(self, i: int, j: int) -> str:
        """Sign of ``I_j - I_ji`` for true hypothesis ``j`` and rival ``i``: '<', '=' or '>'."""
        diff = self.single[j] - self.pair[j, i]
        if abs(diff) <= EQUAL_KL_TOL:
            return "="
        return "<" if diff < 0 else ">"


def kl_matrix(hs: HypothesisSet) -> KLMatrix:
    """Closed-form KL numbers for the three scenario kinds."""
    k = hs.size
    single = np.zeros(k)
    pair = np.zeros((k, k))
    if hs.kind in (SINGLE_FAULT, CONCURRENT_FAULT):
        fwd = np.array([c.kl_post_pre for c in hs.channels])  # KL(q_t, p_t)
        rev = np.array([c.kl_pre_post for c in hs.channels])  # KL(p_t, q_t)
        for a, sa in enumerate(hs.subsets):
            single[a] = sum(fwd[t - 1] for t in sorted(sa))
            for b, sb in enumerate(hs.subsets):
                if a != b:
                    pair[a, b] = sum(fwd[t - 1] for t in sorted(sa - sb)) + sum(
                        rev[t - 1] for t in sorted(sb - sa)
                    )
    elif hs.kind == TWO_SIDED:
        phi, dphi = hs.family.phi, hs.family.dphi
        g0 = hs.gammas[0]
        gs = hs.gammas[1:]
        for a, ga in enumerate(gs):
            single[a] = (ga - g0) * dphi(ga) - (phi(ga) - phi(g0))
            for b, gb in enumerate(gs):
                if a != b:
                    pair[a, b] = (ga - gb) * dphi(ga) - (phi(ga) - phi(gb))
    else:
        raise ValueError(f"unknown scenario kind {hs.kind!r}")
    if not (np.all(single > 0) and np.all(np.isfinite(pair))):
        raise ValueError("KL numbers must be positive and finite")
    return KLMatrix(hs.labels, single, pair)


def kl_matrix_direct(hs: HypothesisSet) -> KLMatrix:
    """KL numbers from coordinate-wise ``kl_divergence`` on the joint densities.

    Independent of the scenario-specific formulas in ``kl_matrix``.
    """
    def joint(p, q):
        return sum(_exact_kl(a, b) for a, b in zip(p, q) if a != b)

    k = hs.size
    single = np.array([joint(g, hs.null) for g in hs.alternatives])
    pair = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            if a != b:
                pair[a, b] = joint(hs.alternatives[a], hs.alternatives[b])
    return KLMatrix(hs.labels, single, pair)


def from_record(record: dict) -> HypothesisSet:
    """Build a hypothesis set from the ``scenario`` section of a config."""
    from .distributions import FAMILIES, from_record as dist_from_record

    kind = record.get("kind")
    if kind in (SINGLE_FAULT, CONCURRENT_FAULT):
        raw = record.get("channels")
        if not isinstance(raw, list) or not raw:
            raise ValueError("scenario.channels must be a non-empty list")
        channels = []
        for n, c in enumerate(raw):
            try:
                channels.append(ChannelSpec(dist_from_record(c["pre"]), dist_from_record(c["post"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"scenario.channels[{n}]: {exc}") from exc
        builder = build_single_fault if kind == SINGLE_FAULT else build_concurrent_fault
        return builder(channels)
    if kind == TWO_SIDED:
        name = record.get("family", "gaussian")
        if name not in FAMILIES:
            raise ValueError(f"scenario.family must be one of {sorted(FAMILIES)}, got {name!r}")
        gammas = record.get("gammas")
        if not isinstance(gammas, list) or len(gammas) != 3:
            raise ValueError("scenario.gammas must list [gamma0, gamma1, gamma2]")
        return build_two_sided(FAMILIES[name](), *map(float, gammas))
    raise ValueError(
        f"scenario.kind must be one of {SINGLE_FAULT}, {CONCURRENT_FAULT}, {TWO_SIDED}; got {kind!r}"
    )
