import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mincusum import bounds, engine
from mincusum.distributions import Bernoulli, Gaussian, bernoulli_family, gaussian_family, kl_divergence
from mincusum.montecarlo import exact_enumeration
from mincusum.scenarios import ChannelSpec, build_single_fault, build_two_sided, kl_matrix

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
prob = st.floats(0.02, 0.98)
increments = arrays(np.float64, st.integers(1, 60), elements=finite)


@given(increments)
def test_recursion_equals_segment_maximum(inc):
    rec = engine.cusum_recursive(inc)
    direct = engine.direct_from_increments(inc)
    assert np.max(np.abs(rec - direct)) <= 1e-9
    assert np.all(rec >= 0)


@given(increments, st.floats(0, 5))
def test_cusum_monotone_in_increments(inc, shift):
    assert np.all(engine.cusum_recursive(inc + shift) >= engine.cusum_recursive(inc) - 1e-12)


@given(st.integers(-3, 3).map(float), st.integers(-3, 3).map(float), st.integers(0, 20))
def test_integer_increments_match_exactly(a, c, n):
    inc = np.array([a, c] * n + [a])
    assert np.array_equal(engine.cusum_recursive(inc), engine.direct_from_increments(inc))


@given(finite, finite)
def test_gaussian_kl_non_negative_and_closed_form(m1, m2):
    kl = kl_divergence(Gaussian(m1), Gaussian(m2))
    assert kl >= 0
    assert math.isclose(kl, (m1 - m2) ** 2 / 2, rel_tol=1e-9, abs_tol=1e-12)


@given(prob, prob)
def test_bernoulli_kl_non_negative(p, q):
    assert kl_divergence(Bernoulli(p), Bernoulli(q)) >= -1e-15


@given(st.floats(1e-6, 0.999), st.integers(1, 50))
def test_b_alpha_composes_with_arl_bound(alpha, k):
    assert math.isclose(bounds.arl_lower_bound(bounds.b_alpha(alpha, k), k), 1 / alpha, rel_tol=1e-9)


@given(st.floats(-3, -0.05), st.floats(0.05, 3), st.sampled_from(["gaussian", "bernoulli"]))
def test_two_sided_kl_ordering(g1, g2, fam):
    family = gaussian_family() if fam == "gaussian" else bernoulli_family()
    hs = build_two_sided(family, 0.0, g1, g2)
    kl = kl_matrix(hs)
    for i, j in ((0, 1), (1, 0)):
        assert kl.I(j) < kl.I_pair(j, i)


@given(st.floats(-3, -0.05), st.floats(0.05, 3))
@settings(max_examples=50)
def test_two_sided_gaussian_roots(g1, g2):
    hs = build_two_sided(gaussian_family(), 0.0, g1, g2)
    for i, j in ((0, 1), (1, 0)):
        r = bounds.find_root(hs, i, j).value
        assert r > 1
        assert abs(bounds.psi(hs, i, j, r)) <= 1e-8 * max(1.0, r * r)
        rb = bounds.find_root(hs, i, j, method="bisection").value
        assert math.isclose(r, rb, rel_tol=1e-7)


@given(st.floats(-3, -0.05), st.floats(0.05, 3), st.floats(0.5, 30))
@settings(max_examples=50)
def test_bound_curve_decreasing_beyond_knee(g1, g2, extra):
    hs = build_two_sided(gaussian_family(), 0.0, g1, g2)
    curve = bounds.bound_curve(hs, 0, 1)
    b = curve.knee() + 0.01
    assert curve(b + extra) < curve(b)


@given(st.floats(0.05, 0.45), st.floats(0.55, 0.95), st.floats(0.1, 3), st.integers(0, 3), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_enumeration_probabilities_sum_to_one(pre, post, b, nu, horizon):
    hs = build_single_fault([ChannelSpec(Bernoulli(pre), Bernoulli(post)) for _ in range(2)])
    out = exact_enumeration(hs, 1, nu, b, horizon)
    assert math.isclose(out.p_early + out.p_resolved + out.p_open, 1.0, abs_tol=1e-12)
    assert np.all(out.p_decide >= 0)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=5, unique=True))
@settings(max_examples=30)
def test_single_fault_relation_is_always_strict(means):
    means = [m for m in means if abs(m) > 1e-3]
    if len(means) < 2:
        return
    hs = build_single_fault([ChannelSpec(Gaussian(0.0), Gaussian(m)) for m in means])
    kl = kl_matrix(hs)
    for i in range(hs.size):
        for j in range(hs.size):
            if i != j:
                assert kl.relation(i, j) == "<"
                assert bounds.find_root(hs, i, j).value == 1.0
