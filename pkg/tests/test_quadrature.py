import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoconc.identities import random_instance
from thermoconc.quadrature import (
    Integrand,
    QuadratureError,
    entropy_integrand,
    fluctuation_integral,
    herbst_integral,
    integrate,
    log_mgf,
)
from thermoconc.space import Marginal, ProductSpace, TabulatedFunction
from thermoconc.thermo import ThermalState, conditional_thermal, variance

from conftest import brute_fiber_stats, brute_Z, coin_sum, coins


def test_square_on_unit_interval():
    assert integrate(lambda x: x * x, 0.0, 1.0) == pytest.approx(1 / 3, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(-3, 3), st.floats(0, 4))
def test_cubics_are_exact(c, a, width):
    b = a + width

    def poly(x):
        return c[0] + c[1] * x + c[2] * x**2 + c[3] * x**3

    def anti(x):
        return c[0] * x + c[1] * x**2 / 2 + c[2] * x**3 / 3 + c[3] * x**4 / 4

    assert integrate(poly, a, b) == pytest.approx(anti(b) - anti(a), abs=1e-12 * max(1.0, abs(anti(b) - anti(a))))


def test_removable_singularity_example():
    g = Integrand(lambda x: (x * math.exp(x) - math.exp(x) + 1) / (x * x), 0.5)
    assert integrate(g, 0.0, 1.0) == pytest.approx(math.e - 2, abs=1e-9)
    beta = 2.5
    assert integrate(g, 0.0, beta) == pytest.approx((math.exp(beta) - beta - 1) / beta, rel=1e-8)


def test_limit_is_used_only_at_zero():
    calls = []
    g = Integrand(lambda x: calls.append(x) or 1.0, limit_at_zero=1.0)
    integrate(g, 0.0, 1.0)
    assert 0.0 not in calls and calls


def test_empty_interval_and_argument_errors():
    assert integrate(math.exp, 2.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        integrate(math.exp, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(math.exp, 0.0, 1.0, abs_tol=0.0)


def test_depth_exhaustion_carries_estimate():
    with pytest.raises(QuadratureError) as info:
        integrate(lambda x: 1.0 / math.sqrt(x) if x > 0 else 0.0, 0.0, 1.0, abs_tol=1e-14, rel_tol=1e-14,
                  max_depth=8)
    assert 1.0 < info.value.estimate < 2.0


def test_deterministic():
    g = lambda x: math.sin(3 * x) ** 2 * math.exp(-x)  # noqa: E731
    assert integrate(g, 0, 7) == integrate(g, 0, 7)


def test_fluctuation_examples(two_coins):
    f = coin_sum(two_coins)
    s = ThermalState(f, math.log(2)).entropy
    assert fluctuation_integral(f, math.log(2)) == pytest.approx(s, abs=1e-10)
    assert fluctuation_integral(f, 0.0) == 0.0
    assert fluctuation_integral(TabulatedFunction.constant(two_coins, 3.0), 2.0) == 0.0
    with pytest.raises(ValueError):
        fluctuation_integral(f, -1.0)


def test_conditional_fluctuation_matches_fiber_entropy():
    space, f, _ = random_instance(23, 3)
    beta = 1.4
    for k in range(space.n):
        S_k = conditional_thermal((f, beta), f, k).entropy
        x = tuple(s - 1 for s in space.shape)
        got = fluctuation_integral(f, beta, k=k, state=x)
        assert got == pytest.approx(brute_fiber_stats(f, x, k, beta)[2], abs=1e-9)
        assert got == pytest.approx(S_k(x), abs=1e-9)
    with pytest.raises(ValueError):
        fluctuation_integral(f, beta, k=0)


def test_herbst_integral_on_coins(two_coins):
    f = coin_sum(two_coins)
    lhs = math.log((math.exp(-1) + 2 + math.e) / 4)
    assert lhs == pytest.approx(0.240229013916555, abs=1e-14)
    assert herbst_integral(f, 1.0) == pytest.approx(lhs, rel=1e-9)
    assert log_mgf(f, 1.0) == pytest.approx(lhs, rel=1e-14)
    with pytest.raises(ValueError):
        herbst_integral(f, -0.5)


def test_entropy_integrand_limit():
    _, f, _ = random_instance(29, 0)
    g = entropy_integrand(f)
    assert g(0.0) == pytest.approx(variance(f) / 2, rel=1e-14)
    assert g(1e-4) == pytest.approx(g(0.0), rel=1e-3)


@pytest.mark.parametrize("beta", (0.1, 1.0, 5.0))
@pytest.mark.parametrize("trial", range(5))
def test_random_instances(trial, beta):
    _, f, _ = random_instance(31, trial)
    S = ThermalState(f, beta).entropy
    assert abs(fluctuation_integral(f, beta) - S) <= 1e-7 * max(1.0, S)
    lhs = math.log(brute_Z(f, beta)) - beta * float(np.sum(f.space.prob_table * f.table()))
    assert abs(herbst_integral(f, beta) - lhs) <= 1e-7 * max(1.0, abs(lhs))


def test_callback_function_beyond_limit():
    # coordinate-k fluctuation integral only touches one fiber
    big = ProductSpace([Marginal.bernoulli(0.5)] * 30)
    f = TabulatedFunction(big, evaluator=lambda x: float(sum(x)))
    small = coin_sum(coins(1))
    want = ThermalState(small, 0.9).entropy
    assert fluctuation_integral(f, 0.9, k=4, state=(0,) * 30) == pytest.approx(want, abs=1e-10)
