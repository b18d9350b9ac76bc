import itertools
import math

import numpy as np
import pytest
from scipy.stats import norm

from mincusum import bounds
from mincusum.distributions import Bernoulli, ExponentialFamily1D, Gaussian, gaussian_family
from mincusum.scenarios import (
    ChannelSpec,
    build_concurrent_fault,
    build_single_fault,
    build_two_sided,
    gaussian_channels,
    kl_matrix,
)


@pytest.fixture(scope="module")
def sf():
    return build_single_fault(gaussian_channels(3))


@pytest.fixture(scope="module")
def cf():
    return build_concurrent_fault(gaussian_channels(3))


@pytest.fixture(scope="module")
def bern2():
    return build_single_fault([ChannelSpec(Bernoulli(0.2), Bernoulli(0.8)) for _ in range(2)])


def normal_mean_excess(mu, sd):
    """sup_{t>=0} E[Z - t | Z >= t] for Z ~ N(mu, sd^2); the mean residual life of a normal
    is decreasing, so the supremum sits at t = 0."""
    a = -mu / sd
    return mu + sd * norm.pdf(a) / norm.sf(a)


def normal_positive_second_moment(mu, sd):
    a = mu / sd
    return (mu * mu + sd * sd) * norm.cdf(a) + mu * sd * norm.pdf(a)


def test_b_alpha_examples():
    assert bounds.b_alpha(0.01, 3) == pytest.approx(math.log(300))
    assert bounds.b_alpha(0.01, 3) == pytest.approx(5.7038, abs=1e-4)
    assert bounds.b_alpha(1 / math.e, 1) == pytest.approx(1.0)
    assert bounds.b_alpha(0.001, 7) == pytest.approx(8.8537, abs=1e-4)
    with pytest.raises(ValueError):
        bounds.b_alpha(1.0, 3)


def test_arl_lower_bound_examples():
    assert bounds.arl_lower_bound(5.0, 3) == pytest.approx(49.47, abs=0.01)
    assert bounds.arl_lower_bound(bounds.b_alpha(0.02, 5), 5) == pytest.approx(50.0)
    assert bounds.arl_lower_bound(1e-12, 4) == pytest.approx(0.25)


def test_delay_formulas():
    assert bounds.delay_approximation(0.01, 0.5) == pytest.approx(9.2103, abs=1e-4)
    assert bounds.delay_approximation(1 / math.e, 1.0) == pytest.approx(1.0)
    assert bounds.delay_approximation(0.001, 0.5) == pytest.approx(13.8155, abs=1e-4)
    assert bounds.delay_upper_bound(6.0, 0.5, 4.16) == pytest.approx(16.16)
    assert bounds.delay_upper_bound(1e-12, 0.5, 4.16) == pytest.approx(4.16)


def test_psi_two_sided_closed_form():
    hs = build_two_sided(gaussian_family(), 0.0, -1.0, 1.0)
    for theta in (0.0, 0.5, 1.0, 3.0, 4.2):
        assert bounds.psi(hs, 0, 1, theta) == pytest.approx((theta**2 - 3 * theta) / 2, abs=1e-12)
    assert bounds.psi(hs, 0, 1, 0.0) == 0.0


def test_psi_against_monte_carlo(cf):
    for i, j in ((cf.index("{1,2,3}"), cf.index("{1}")), (cf.index("{3}"), cf.index("{1,2}"))):
        value, se = bounds.psi_mc(cf, i, j, 0.8, n_samples=400_000, seed=3)
        assert abs(bounds.psi(cf, i, j, 0.8) - value) <= 5 * se


def test_psi_single_fault_vanishes_at_one(sf):
    for i, j in itertools.permutations(range(3), 2):
        assert bounds.psi(sf, i, j, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_psi_outside_parameter_space():
    fam = ExponentialFamily1D("normal-on-interval", Gaussian(0.0), phi=lambda g: g * g / 2,
                              dphi=lambda g: g, domain=(-2.0, 2.0))
    hs = build_two_sided(fam, 0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        bounds.psi(hs, 0, 1, 5.0)


def test_psi_needs_distinct_pair(sf):
    with pytest.raises(ValueError):
        bounds.psi(sf, 1, 1, 0.5)


def test_single_fault_roots(sf):
    for i, j in itertools.permutations(range(3), 2):
        assert bounds.find_root(sf, i, j).value == 1.0
        assert bounds.find_root(sf, i, j, method="bisection").value == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("gammas,expected", [
    ((0.0, -1.0, 1.0), {(0, 1): 3.0, (1, 0): 3.0}),
    ((0.0, -0.5, 2.0), {(0, 1): 9.0, (1, 0): 1.5}),
])
def test_two_sided_roots(gammas, expected):
    hs = build_two_sided(gaussian_family(), *gammas)
    for (i, j), r in expected.items():
        assert bounds.find_root(hs, i, j).value == pytest.approx(r, abs=1e-12)
        assert bounds.find_root(hs, i, j, method="bisection").value == pytest.approx(r, abs=1e-8)


def test_bisection_roots_are_upcrossings(cf):
    h = 1e-6
    kl = kl_matrix(cf)
    for i, j in itertools.permutations(range(cf.size), 2):
        if kl.relation(i, j) != "<":
            continue
        r = bounds.find_root(cf, i, j, method="bisection").value
        assert abs(bounds.psi(cf, i, j, r)) <= 1e-8
        assert bounds.psi(cf, i, j, r + h) > bounds.psi(cf, i, j, r - h)


def test_no_root_when_kl_order_fails(cf):
    j = cf.index("{1,2}")
    with pytest.raises(bounds.RootNotFound):
        bounds.find_root(cf, cf.index("{2}"), j)
    with pytest.raises(bounds.RootNotFound):
        bounds.find_root(cf, cf.index("{1,3}"), j)
    with pytest.raises(bounds.NoBoundAvailable):
        bounds.misid_bound(cf, cf.index("{2}"), j, 5.0)


def test_single_fault_pair_bound(sf):
    curve = bounds.bound_curve(sf, 1, 0)
    assert curve.case == "r<=1"
    assert curve.constant == pytest.approx(3.0)
    for b in (2.0, 5.0, 8.0):
        total = sum(bounds.misid_bound(sf, i, 0, b) for i in (1, 2))
        assert total == pytest.approx(6 * b * math.exp(-b))
        assert bounds.corollary1_bound(sf, b)[0] == pytest.approx(total)


def test_corollary1_constants(sf, bern2):
    assert bounds.corollary1_constant(sf) == pytest.approx(6.0)
    kl = 0.8 * math.log(4) + 0.2 * math.log(0.25)
    assert bounds.corollary1_constant(bern2) == pytest.approx(1 + 1 / kl)
    assert bounds.corollary1_constant(bern2) == pytest.approx(2.2022, abs=1e-4)
    assert bounds.corollary1_bound(sf, 0.0)[0] == 0.0
    with pytest.raises(ValueError):
        bounds.corollary1_constant(build_concurrent_fault(gaussian_channels(2)))


def test_corollary2_constant():
    for g1, g2 in ((-1.0, 1.0), (-0.5, 2.0), (-3.0, 0.25)):
        hs = build_two_sided(gaussian_family(), 0.0, g1, g2)
        assert bounds.corollary2_constant(hs) == pytest.approx(1 + 0.5 * max(abs(g1 / g2), abs(g2 / g1)))
    hs = build_two_sided(gaussian_family(), 0.0, -1.0, 1.0)
    assert bounds.misid_bound(hs, 0, 1, 6.0) == pytest.approx(1.5 * math.exp(-6))
    assert bounds.misid_bound(hs, 0, 1, 6.0) == pytest.approx(0.00372, abs=1e-5)


def test_misid_bound_rejects_non_positive_threshold(sf):
    with pytest.raises(ValueError):
        bounds.misid_bound(sf, 1, 0, 0.0)


def test_lorden_constants_gaussian_against_normal_formulas(sf):
    c = bounds.lorden_constants(sf, 1, 0, seed=1)
    # llr_2 under g_1 is N(-1/2, 1); llr_1 under g_1 is N(1/2, 1)
    assert abs(c.overshoot - normal_mean_excess(-0.5, 1.0)) <= 5 * c.se["overshoot"]
    assert abs(c.undershoot - normal_mean_excess(0.5, 1.0)) <= 5 * c.se["undershoot"]
    assert abs(c.second_moment - 1.25) <= 5 * c.se["second_moment"]
    B = normal_positive_second_moment(0.5, 1.0) / 0.25
    assert abs(c.excess - B) <= 5 * c.se["excess"]


def test_equal_kl_constant(cf):
    i, j = cf.index("{1,3}"), cf.index("{1,2}")
    curve = bounds.bound_curve(cf, i, j, seed=2)
    assert curve.case == "equal-KL"
    # llr_{1,3} under g_{1,2} is N(0, 2)
    sd = math.sqrt(2.0)
    expected = 1 + 2 * normal_mean_excess(0.0, sd) + 2.0 / 1.0
    assert curve.constant == pytest.approx(expected, abs=0.05)
    assert curve(4.0) == pytest.approx(curve.constant / 4.0)


def test_bernoulli_constants_exact(bern2):
    c = bounds.lorden_constants(bern2, 1, 0)
    assert c.method == "exact"
    log4 = math.log(4)
    # llr_2 under g_1 is +log4 w.p. 0.2 and -log4 w.p. 0.8
    assert c.overshoot == pytest.approx(log4)
    assert c.undershoot == pytest.approx(log4)
    assert c.second_moment == pytest.approx(log4**2)
    I = 0.8 * log4 + 0.2 * math.log(0.25)
    assert c.excess == pytest.approx(0.8 * log4**2 / I**2)
    assert bounds.excess_constant(bern2, 0) == (pytest.approx(c.excess), 0.0)


def test_exact_overshoot_against_fine_grid():
    atoms = np.array([-1.3, -0.2, 0.4, 1.1, 2.5])
    probs = np.array([0.3, 0.25, 0.2, 0.15, 0.1])

    def excess(t):
        m = atoms >= t
        return float(np.dot(atoms[m] - t, probs[m]) / probs[m].sum())

    def shortfall(t):
        m = atoms <= t
        return float(np.dot(atoms[m] - t, probs[m]) / probs[m].sum())

    ts = np.concatenate([np.linspace(0, 2.5, 2001), atoms[atoms >= 0] + 1e-12])
    ts = ts[ts <= atoms.max()]
    assert bounds.overshoot_exact(atoms, probs) == pytest.approx(max(excess(t) for t in ts), abs=1e-9)
    us = np.concatenate([np.linspace(-1.3, 0, 2001), atoms[atoms <= 0] - 1e-12])
    us = us[us >= atoms.min()]
    assert bounds.undershoot_exact(atoms, probs) == pytest.approx(-min(shortfall(t) for t in us), abs=1e-9)


def test_monte_carlo_grid_skips_thin_tails():
    z = np.array([0.1] * 50 + [5.0])
    value, _ = bounds.overshoot_mc(z, min_tail=100)
    assert value == 0.0


def test_bound_curve_decreases_beyond_knee(cf):
    j = cf.index("{1}")
    curve = bounds.bound_curve(cf, cf.index("{1,2,3}"), j)
    assert curve.case == "r<=1"
    assert curve.r == pytest.approx(1 / 3, abs=1e-8)
    bs = np.linspace(curve.knee() + 1e-6, 40, 200)
    vals = [curve(b) for b in bs]
    assert all(v2 < v1 for v1, v2 in zip(vals, vals[1:]))


def test_root_at_one_uses_the_r_le_1_branch(cf):
    curve = bounds.bound_curve(cf, cf.index("{3}"), cf.index("{1,2}"))
    assert curve.case == "r<=1"
    assert curve.r == 1.0
    assert curve.constant == pytest.approx(1.0 + 1.0 / 1.0)


def test_overall_bound(sf, cf):
    assert bounds.overall_bound(sf, 0, 5.0) == pytest.approx(6 * 5 * math.exp(-5))
    assert bounds.overall_bound(cf, "{1,2}", 5.0) is None


def test_scenario_bound_kinds(sf, cf):
    assert bounds.scenario_bound(sf).case == "corollary1"
    assert bounds.scenario_bound(build_two_sided(gaussian_family(), 0.0, -1.0, 1.0)).constant == pytest.approx(1.5)
    assert bounds.scenario_bound(cf) is None


def test_lemma1_endpoints():
    b, r, om, gap, L0 = 5.0, 1.0, 0.64, 0.5, 900.0
    assert bounds.lemma1_lower(b, b, r, om, gap, L0) == pytest.approx(-om / gap)
    at0 = bounds.lemma1_lower(0.0, b, r, om, gap, L0)
    assert at0 == pytest.approx(L0 * (1 - math.exp(-r * b)) - math.exp(-r * b) * (b + om) / gap)
    assert at0 <= L0
    assert bounds.lemma1_upper_case(b, b, om, 1.0, 2.0, L0) == 0.0
    consts = {"r": r, "overshoot": om, "kl_gap": gap, "undershoot": 1.0, "second_moment": 2.0}
    assert bounds.lemma1_curves("l", 2.0, b, consts, L0) == bounds.lemma1_lower(2.0, b, r, om, gap, L0)
    assert bounds.lemma1_curves("u", 2.0, b, consts, L0) == bounds.lemma1_upper_case(2.0, b, om, 1.0, 2.0, L0)
    with pytest.raises(ValueError):
        bounds.lemma1_curves("l", 6.0, b, consts, L0)
    with pytest.raises(ValueError):
        bounds.lemma1_curves("v", 1.0, b, consts, L0)


def test_bisection_stops_at_the_edge_of_the_parameter_space():
    # psi(0, 1, theta) = theta^2/2 - 3 theta/2 here, but theta = 3 lies outside the family
    fam = ExponentialFamily1D("normal-on-interval", Gaussian(0.0), phi=lambda g: g * g / 2,
                              dphi=lambda g: g, domain=(-1.5, 1.5))
    hs = build_two_sided(fam, 0.0, -1.0, 1.0)
    with pytest.raises(bounds.RootNotFound):
        bounds.find_root(hs, 0, 1, method="bisection")


def test_bisection_finds_large_roots():
    hs = build_two_sided(gaussian_family(), 0.0, -2.0, 0.0625)
    assert bounds.find_root(hs, 1, 0, method="bisection").value == pytest.approx(65.0, abs=1e-8)
