import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import entropy_fraction_probs
from pseudopml.estimators import (PLUGIN, POLY, ZERO, Estimate, Property, bias_correction, branch_of,
                                  empirical_parts, empirical_with_bias, lipschitz_constant,
                                  per_symbol_estimator, per_symbol_sum, plugin_from_probs,
                                  plugin_property, poly_for, sensitivity_bound)
from pseudopml.pml import DiscreteDistribution
from pseudopml.polyapprox import PolyConfig, dtu_radius
from pseudopml.profiles import Histogram, SampleSequence, build_histogram, split_samples

# oracle: fractions-based entropy of (6, 3, 2)/11
ZIPF3_ENTROPY = 0.9949236325717752


def test_property_validation():
    with pytest.raises(ValueError):
        Property("dtu")
    with pytest.raises(ValueError):
        Property("support")
    with pytest.raises(ValueError):
        Property("entropy", k=3)
    with pytest.raises(ValueError):
        Property("variance")
    assert Property.entropy().f_max == math.inf
    assert Property.entropy(8).f_max == pytest.approx(math.log(8))
    assert Property.support(5, 3).f_max == 3


@pytest.mark.parametrize("N", [2, 10, 1000])
def test_plugin_closed_forms(N):
    u = DiscreteDistribution.uniform(N)
    assert abs(plugin_property(u, Property.entropy(N)) - math.log(N)) < 1e-12
    assert abs(plugin_property(u, Property.dtu(N))) < 1e-12
    point = DiscreteDistribution(np.array([1.0]), np.array([1]), N)
    assert abs(plugin_property(point, Property.dtu(N)) - 2 * (1 - 1 / N)) < 1e-12
    assert plugin_property(point, Property.support(N)) == 1


def test_zipf3_entropy():
    w = np.array([6, 3, 2]) / 11
    assert entropy_fraction_probs([6, 3, 2]) == pytest.approx(ZIPF3_ENTROPY, abs=1e-15)
    d = DiscreteDistribution.from_probs(w)
    assert plugin_property(d, Property.entropy(3)) == pytest.approx(ZIPF3_ENTROPY, abs=1e-12)
    assert plugin_from_probs(w, Property.entropy(3)) == pytest.approx(ZIPF3_ENTROPY, abs=1e-12)


def test_plugin_on_subset():
    d = DiscreteDistribution.from_probs([0.5, 0.25, 0.25, 0.0])
    prop = Property.entropy(4)
    assert plugin_property(d, prop, {1, 2}) == pytest.approx(2 * 0.25 * math.log(4))
    # levels describing a subset, with uncovered subset symbols at probability 0
    lv = DiscreteDistribution(np.array([0.25]), np.array([2]), 6, outside_mass=0.5)
    assert plugin_property(lv, Property.dtu(6), {0, 1, 2}) == pytest.approx(2 * (0.25 - 1 / 6) + 1 / 6)
    with pytest.raises(ValueError):
        plugin_property(lv, prop, {0})


def test_plugin_outside_mass_spread():
    d = DiscreteDistribution(np.array([0.5]), np.array([1]), 3, outside_mass=0.5)
    assert plugin_property(d, Property.entropy(3)) == pytest.approx(-(0.5 * math.log(0.5) + 0.5 * math.log(0.25)))


def test_empirical_with_bias_examples():
    h = Histogram({0: 5, 1: 5}, 10, 2)
    assert empirical_with_bias(h, Property.entropy(2), {0, 1}) == pytest.approx(math.log(2) + 0.1, abs=1e-12)
    assert round(empirical_with_bias(h, Property.entropy(2), {0, 1}), 4) == 0.7931
    assert empirical_with_bias(h, Property.entropy(2), {0, 1}, "none") == pytest.approx(math.log(2))
    assert empirical_with_bias(h, Property.entropy(2), {0, 1}, "s_bar_over_n") == pytest.approx(math.log(2) + 0.2)
    assert empirical_with_bias(h, Property.dtu(2), {0, 1}) == pytest.approx(0.0)


def test_unseen_symbols_excluded_from_correction():
    h = Histogram({0: 4}, 4, 10)
    plug, bias = empirical_parts(h, Property.entropy(10), {0, 1, 2})
    assert plug == 0.0 and bias == pytest.approx(1 / 8)
    with pytest.raises(ValueError):
        bias_correction(Property.entropy(10), 4, 1, 3, "bogus")


def test_entropy_lln_smoke():
    N, n = 100, 10**6
    vals = []
    for seed in range(10):
        x = np.random.default_rng(seed).integers(0, N, n)
        vals.append(empirical_with_bias(build_histogram(SampleSequence(x, N)), Property.entropy(N)))
    assert abs(np.mean(vals) - math.log(N)) < 0.01


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 3000), st.integers(0, 3000))
def test_branches_partition(n1, n2):
    prop = Property.entropy(1000)
    cfg = PolyConfig.entropy(10**4, 1000)
    b = int(branch_of(n1, n2, 10**4, prop, cfg))
    lnN = math.log(1000)
    small1, small2 = n1 < cfg.c2 * lnN, n2 < cfg.c1 * lnN
    expected = POLY if small1 and small2 else ZERO if small1 else PLUGIN
    assert b == expected


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2000), st.integers(0, 2000))
def test_branches_partition_dtu_case2(n1, n2):
    N, n = 10, 1000
    prop, cfg = Property.dtu(N), PolyConfig.dtu(n, N)
    b = int(branch_of(n1, n2, n, prop, cfg))
    in1 = abs(n1 / n - 1 / N) < dtu_radius(cfg, cfg.c2)
    in2 = abs(n2 / n - 1 / N) < dtu_radius(cfg, cfg.c1)
    assert b == (POLY if in1 and in2 else ZERO if in1 else PLUGIN)


def test_all_plugin_branch_reduces_to_empirical():
    N, n = 20, 4000
    rng = np.random.default_rng(0)
    x = rng.integers(0, N, 2 * n)
    a, b = split_samples(SampleSequence(x, N))
    h1, h2 = build_histogram(a), build_histogram(b)
    prop = Property.entropy(N)
    cfg = PolyConfig.entropy(n, N, c2=1.0)
    S = range(N)
    total, info = per_symbol_sum(h1, h2, S, prop, cfg)
    assert info["plugin"] == N
    assert total == pytest.approx(empirical_with_bias(h2, prop, S), abs=1e-12)


def test_all_unseen_gives_b0():
    N, n = 1000, 10**4
    prop = Property.entropy(N)
    cfg = PolyConfig.entropy(n, N)
    h1 = Histogram({0: n}, n, N)
    h2 = Histogram({0: n}, n, N)
    S = range(1, 51)
    pa = poly_for(prop, cfg)
    total, info = per_symbol_sum(h1, h2, S, prop, cfg, pa)
    assert info["poly"] == 50
    assert total == pytest.approx(50 * pa.coeffs[0])


def test_middle_branch_contributes_zero():
    N, n = 1000, 10**4
    cfg = PolyConfig.entropy(n, N)
    big = math.ceil(cfg.c1 * math.log(N))
    h1 = Histogram({0: n}, n, N)
    h2 = Histogram({0: n - big, 5: big}, n, N)
    total, info = per_symbol_sum(h1, h2, {5}, Property.entropy(N), cfg)
    assert info == {**info, "zero": 1} and total == 0.0


def test_per_symbol_clamps():
    N, n = 50, 200
    x = np.random.default_rng(0).integers(0, N, 2 * n)
    a, b = split_samples(SampleSequence(x, N))
    prop = Property.entropy(N)
    with pytest.warns(UserWarning):
        v = per_symbol_estimator(build_histogram(a), build_histogram(b), range(N), prop,
                                 PolyConfig.entropy(n, N))
    assert 0 <= v <= math.log(N)


def test_lipschitz_constant_entropy():
    n = 1000
    assert lipschitz_constant(Property.entropy(10), n) == pytest.approx(math.log(n), rel=1e-12)
    assert lipschitz_constant(Property.dtu(10), n) == pytest.approx(1.0)


def test_sensitivity_bound_positive():
    b = sensitivity_bound(Property.entropy(1000), PolyConfig.entropy(10**4, 1000), 10**4)
    assert b > 0 and math.isfinite(b)


def test_estimate_dict():
    e = Estimate(1.0, 0.5, 0.4, 0.1, 1.0, {"S_size": 3})
    assert e.to_dict()["bad_set_value"] == 0.5
