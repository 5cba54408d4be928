"""Adaptive Simpson quadrature and the two entropy integrals built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .space import TabulatedFunction
from .thermo import ThermalState, conditional_thermal, thermal_variance, variance

ABS_TOL = 1e-10
REL_TOL = 1e-8
MAX_DEPTH = 40
_MIN_DEPTH = 3


class QuadratureError(ArithmeticError):
    """Recursion depth exhausted; ``estimate`` holds the best available value."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class Integrand:
    """A scalar integrand with an optional value to use at exactly zero.

    The limit handles removable singularities such as S(g)/g^2 at g = 0.
    """

    evaluate: Callable[[float], float]
    limit_at_zero: Optional[float] = None

    def __call__(self, x: float) -> float:
        if x == 0.0 and self.limit_at_zero is not None:
            return self.limit_at_zero
        return self.evaluate(x)


def integrate(g, a: float, b: float, abs_tol: float = ABS_TOL, rel_tol: float = REL_TOL,
              max_depth: int = MAX_DEPTH) -> float:
    """Adaptive Simpson estimate of the integral of g over [a, b].

    Subintervals are accepted once the two-panel/one-panel difference is below
    15x their share of ``max(abs_tol, rel_tol*|I|)``; accepted panels get the
    Richardson correction, so cubics are integrated exactly.
    """
    if a > b:
        raise ValueError(f"need a <= b, got [{a}, {b}]")
    if abs_tol <= 0 or rel_tol <= 0:
        raise ValueError("tolerances must be positive")
    if a == b:
        return 0.0
    fn = g if callable(g) else g.evaluate
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = max(abs_tol, rel_tol * abs(whole))
    exhausted = [False]

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= _MIN_DEPTH and abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        if depth >= max_depth:
            exhausted[0] = True
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
                + recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))

    result = recurse(a, b, fa, fm, fb, whole, tol, 0)
    if exhausted[0]:
        raise QuadratureError(f"adaptive Simpson exceeded depth {max_depth} on [{a}, {b}]", result)
    if not math.isfinite(result):
        raise QuadratureError("integral is not finite", result)
    return result


def fluctuation_integral(f: TabulatedFunction, beta: float, k: int | None = None, state=None,
                         abs_tol: float = ABS_TOL, rel_tol: float = REL_TOL) -> float:
    """Entropy rebuilt from energy fluctuations: int_0^beta s * var_{s f}[f] ds.

    This is the double integral of the thermal variance over 0 <= t <= s <= beta
    with the t-integration done analytically. With ``k`` and ``state`` given,
    the conditional thermal variance on the k-fiber through ``state`` is used,
    which reproduces the conditional entropy S_{k,f}(beta) at that state.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if beta == 0:
        return 0.0
    if k is None:
        def var_at(s):
            return thermal_variance(ThermalState(f, s), f)
    else:
        if state is None:
            raise ValueError("a state is needed for the conditional fluctuation integral")
        x = f.space.check_state(state)

        def var_at(s):
            return conditional_thermal((f, s), f, k).variance(x)

    return integrate(Integrand(lambda s: s * var_at(s), 0.0), 0.0, beta, abs_tol, rel_tol)


def entropy_integrand(f: TabulatedFunction) -> Integrand:
    """gamma -> S_f(gamma)/gamma^2, with limit var(f)/2 at zero."""
    return Integrand(lambda g: ThermalState(f, g).entropy / (g * g), 0.5 * variance(f))


def herbst_integral(f: TabulatedFunction, beta: float, abs_tol: float = ABS_TOL,
                    rel_tol: float = REL_TOL) -> float:
    """beta * int_0^beta S_f(g)/g^2 dg, which equals ln E[exp(beta (f - E f))]."""
    if beta < 0:
        raise ValueError("beta must be non-negative; pass -f for the lower tail")
    return beta * integrate(entropy_integrand(f), 0.0, beta, abs_tol, rel_tol)


def log_mgf(f: TabulatedFunction, beta: float) -> float:
    """ln E[exp(beta (f - E f))] by direct enumeration."""
    return ThermalState(f, beta).log_mgf

