import math

import numpy as np
import pytest

from thermoconc.space import Marginal, ProductSpace, TabulatedFunction, enumerate_states, fiber

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


# brute-force oracles: plain loops over states with math.exp/log, no log-domain tricks


def brute_Z(f, beta):
    return math.fsum(p * math.exp(beta * f(x)) for x, p in enumerate_states(f.space))


def brute_thermal_mean(f, g, beta):
    Z = brute_Z(f, beta)
    return math.fsum(p * g(x) * math.exp(beta * f(x)) for x, p in enumerate_states(f.space)) / Z


def brute_entropy(f, beta):
    return beta * brute_thermal_mean(f, f, beta) - math.log(brute_Z(f, beta))


def brute_thermal_var(f, g, beta):
    m = brute_thermal_mean(f, g, beta)
    sq = TabulatedFunction(f.space, evaluator=lambda x: (g(x) - m) ** 2)
    return brute_thermal_mean(f, sq, beta)


def brute_fiber_stats(f, x, k, beta):
    """(E_k,beta f, var_k,beta f, S_k) on one fiber, by direct loops."""
    pts = list(fiber(f.space, x, k))
    Z = math.fsum(p * math.exp(beta * f(y)) for y, p in pts)
    m = math.fsum(p * f(y) * math.exp(beta * f(y)) for y, p in pts) / Z
    v = math.fsum(p * (f(y) - m) ** 2 * math.exp(beta * f(y)) for y, p in pts) / Z
    return m, v, beta * m - math.log(Z)


def coins(n, p=0.5):
    return ProductSpace([Marginal.bernoulli(p)] * n)


def coin_sum(space):
    return TabulatedFunction.from_atoms(space, lambda *x: float(sum(x)))


@pytest.fixture
def two_coins():
    return coins(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
