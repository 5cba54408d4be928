"""Numerical verification of the entropy identities and inequalities.

Every check returns a :class:`CheckReport`. Identities pass when
``|lhs - rhs| <= tolerance``; inequalities ``lhs <= rhs`` pass when
``rhs - lhs >= -tolerance``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .quadrature import fluctuation_integral, herbst_integral
from .space import Marginal, ProductSpace, TabulatedFunction, expectation
from .thermo import (
    ThermalState,
    conditional_extrema,
    conditional_thermal,
    derived_statistics,
    free_energy,
    in_algebra,
    is_additive,
    psi,
    thermal_expectation,
    thermal_variance,
    variance,
)

IDENTITY_RTOL = 1e-7
INEQUALITY_TOL = 1e-10
EFRON_STEIN_TOL = 1e-12
EQUALITY_TOL = 1e-10
FD_STEP = 1e-5
FD_STEP_SECOND = 1e-4
BETA_GRID = (0.1, 0.5, 1.0, 3.0)


class NotInAlgebraError(ValueError):
    """A supplied f_k depends on coordinate k."""


@dataclass(frozen=True)
class CheckReport:
    name: str
    kind: str  # "identity" | "inequality"
    lhs: float
    rhs: float
    slack: float
    tolerance: float
    passed: bool
    applicable: bool = True
    equality: bool | None = None
    beta: float | None = None
    note: str = ""

    def to_json(self) -> str:
        d = {k: _round12(v) for k, v in asdict(self).items()}
        return json.dumps(d, sort_keys=False)


def _round12(v):
    if isinstance(v, float) and math.isfinite(v):
        return float(f"{v:.12g}")
    return v


def identity(name, lhs, rhs, tolerance, **extra) -> CheckReport:
    slack = abs(lhs - rhs)
    return CheckReport(name, "identity", float(lhs), float(rhs), float(slack), float(tolerance),
                       bool(slack <= tolerance), **extra)


def inequality(name, lhs, rhs, tolerance=INEQUALITY_TOL, **extra) -> CheckReport:
    slack = rhs - lhs
    return CheckReport(name, "inequality", float(lhs), float(rhs), float(slack), float(tolerance),
                       bool(slack >= -tolerance), **extra)


def inapplicable(name, reason, beta=None) -> CheckReport:
    nan = float("nan")
    return CheckReport(name, "inequality", nan, nan, nan, INEQUALITY_TOL, True, applicable=False,
                       beta=beta, note=reason)


def _rel(x: float, rtol: float) -> float:
    return rtol * max(1.0, abs(x))


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def check_herbst(f: TabulatedFunction, beta: float) -> CheckReport:
    """ln E[e^{beta(f - Ef)}] against beta * int_0^beta S_f(g)/g^2 dg."""
    if beta <= 0:
        raise ValueError("the Herbst identity is checked for beta > 0")
    lhs = ThermalState(f, beta).log_mgf
    rhs = herbst_integral(f, beta)
    return identity("herbst", lhs, rhs, _rel(lhs, IDENTITY_RTOL), beta=beta)


def check_fluctuation(f: TabulatedFunction, beta: float) -> CheckReport:
    """S_f(beta) against int_0^beta s var_{sf}[f] ds."""
    lhs = ThermalState(f, beta).entropy
    rhs = fluctuation_integral(f, beta)
    return identity("fluctuation", lhs, rhs, _rel(lhs, IDENTITY_RTOL), beta=beta)


def check_entropy_reflection(f: TabulatedFunction, beta: float) -> CheckReport:
    lhs = ThermalState(-f, beta).entropy
    rhs = ThermalState(f, -beta).entropy
    return identity("entropy_reflection", lhs, rhs, EQUALITY_TOL, beta=beta)


def check_free_energy(f: TabulatedFunction, beta: float) -> CheckReport:
    """A = U - TS."""
    ts = ThermalState(f, beta)
    lhs = free_energy(ts)
    rhs = thermal_expectation(ts, f) - ts.entropy / beta
    return identity("free_energy", lhs, rhs, _rel(lhs, EQUALITY_TOL), beta=beta)


def check_derivatives(f: TabulatedFunction, beta: float, h: float = FD_STEP,
                      h2: float = FD_STEP_SECOND) -> list[CheckReport]:
    """Central finite differences of ln Z and of the thermal moments."""
    # the centered log-mgf differs from ln Z by beta*E[f]; add the slope back
    # so the first difference sees ln Z itself without large-magnitude roundoff
    mean = expectation(f)

    def L(b):
        return ThermalState(f, b).log_mgf

    ts = ThermalState(f, beta)
    E1 = thermal_expectation(ts, f)
    var = thermal_variance(ts, f)
    d1 = (L(beta + h) - L(beta - h)) / (2 * h) + mean
    d2 = (L(beta + h2) - 2 * L(beta) + L(beta - h2)) / (h2 * h2)
    out = [
        identity("dlogZ", d1, E1, _rel(E1, 1e-6), beta=beta),
        identity("d2logZ", d2, var, _rel(var, 1e-4), beta=beta),
    ]
    F = f.table()
    for k in (1, 2):
        fk = TabulatedFunction(f.space, F**k)
        fk1 = TabulatedFunction(f.space, F ** (k + 1))

        def mom(b):
            return thermal_expectation(ThermalState(f, b), fk)

        fd = (mom(beta + h) - mom(beta - h)) / (2 * h)
        exact = thermal_expectation(ts, fk1) - thermal_expectation(ts, fk) * E1
        out.append(identity(f"dmoment{k}", fd, exact, _rel(exact, 1e-6), beta=beta))
    return out


# ---------------------------------------------------------------------------
# inequalities
# ---------------------------------------------------------------------------


def conditional_entropy_sum(f: TabulatedFunction, beta: float) -> TabulatedFunction:
    ts = (f, beta)
    total = np.zeros(f.space.shape)
    for k in range(f.space.n):
        total = total + conditional_thermal(ts, f, k).entropy.table()
    return TabulatedFunction(f.space, total, name="sum S_k")


def check_tensorization(f: TabulatedFunction, beta: float) -> CheckReport:
    """S_f(beta) <= E_{beta f}[sum_k S_{k,f}(beta)]; equality flagged for additive f."""
    ts = ThermalState(f, beta)
    lhs = ts.entropy
    rhs = thermal_expectation(ts, conditional_entropy_sum(f, beta))
    additive = is_additive(f)
    rep = inequality("tensorization", lhs, rhs, beta=beta, equality=bool(abs(rhs - lhs) <= EQUALITY_TOL))
    if additive and not rep.equality:
        return CheckReport(**{**asdict(rep), "passed": False, "note": "additive f but no equality"})
    if additive:
        return CheckReport(**{**asdict(rep), "note": "additive"})
    return rep


def check_efron_stein(f: TabulatedFunction) -> CheckReport:
    """var[f] <= E[sum_k var_k[f]]."""
    lhs = variance(f)
    rhs = expectation(derived_statistics(f).Sigma2)
    additive = is_additive(f)
    tol = EFRON_STEIN_TOL * max(1.0, abs(rhs))
    rep = inequality("efron_stein", lhs, rhs, tol, equality=bool(abs(rhs - lhs) <= tol))
    if additive and not rep.equality:
        return CheckReport(**{**asdict(rep), "passed": False, "note": "additive f but no equality"})
    return rep


def check_mod_log_sobolev(f: TabulatedFunction, beta: float,
                          fks: Sequence[TabulatedFunction] | None = None) -> CheckReport:
    """S_f(beta) <= E_{beta f}[sum_k psi(-beta (f - f_k))] with f_k independent of x_k."""
    space = f.space
    if fks is None:
        fks = [conditional_extrema(f, k).inf for k in range(space.n)]
    if len(fks) != space.n:
        raise ValueError(f"need {space.n} functions f_k, got {len(fks)}")
    F = f.table()
    acc = np.zeros(space.shape)
    for k, fk in enumerate(fks):
        if not in_algebra(fk, k):
            raise NotInAlgebraError(f"f_{k} depends on coordinate {k}")
        acc = acc + psi(-beta * (F - fk.table()))
    ts = ThermalState(f, beta)
    rhs = thermal_expectation(ts, TabulatedFunction(space, acc))
    return inequality("mod_log_sobolev", ts.entropy, rhs, beta=beta)


def check_variational(f: TabulatedFunction, beta: float, c: float, label: str = "") -> CheckReport:
    """S_f(beta) <= E_{beta f}[psi(-beta (f - c))] for a constant c."""
    ts = ThermalState(f, beta)
    rhs = thermal_expectation(ts, f.map(lambda v: psi(-beta * (v - c))))
    return inequality(f"variational{label}", ts.entropy, rhs, beta=beta, note=f"c={c:.12g}")


def inf_deviation_max(f: TabulatedFunction) -> float:
    """max over k and x of f - inf_k f."""
    F = f.table()
    return max(float(np.max(F - np.min(F, axis=k, keepdims=True))) for k in range(f.space.n))


def check_entropy_bounds_Df(f: TabulatedFunction, beta: float) -> tuple[CheckReport, CheckReport]:
    """S_f(b) <= b^2/2 E_{bf}[Df], and S_{-f}(b) <= psi(b) E_{-bf}[Df] when f - inf_k f <= 1."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    D = derived_statistics(f).D
    ts = ThermalState(f, beta)
    upper = inequality("df_entropy_upper", ts.entropy, 0.5 * beta**2 * thermal_expectation(ts, D), beta=beta)
    if inf_deviation_max(f) > 1.0 + 1e-12:
        lower = inapplicable("df_entropy_lower", "f - inf_k f exceeds 1", beta)
    else:
        tn = ThermalState(-f, beta)
        lower = inequality("df_entropy_lower", tn.entropy, psi(beta) * thermal_expectation(tn, D), beta=beta)
    return upper, lower


def check_monotone_energy(f: TabulatedFunction, betas: Iterable[float] | None = None) -> CheckReport:
    """beta -> E_{beta f}[f] is non-decreasing; lhs reports the worst decrease."""
    betas = np.linspace(-5, 5, 41) if betas is None else np.asarray(list(betas))
    vals = np.array([thermal_expectation(ThermalState(f, b), f) for b in betas])
    worst = float(np.max(np.maximum(-np.diff(vals), 0.0), initial=0.0))
    return inequality("monotone_energy", worst, 0.0)


def check_monotone_df_proxy(f: TabulatedFunction, betas: Iterable[float] | None = None) -> CheckReport:
    """beta -> E_{k,beta f}[(f - inf_k f)^2] is non-decreasing on every fiber."""
    betas = np.linspace(-5, 5, 41) if betas is None else np.asarray(list(betas))
    F = f.table()
    worst = 0.0
    for k in range(f.space.n):
        h2 = TabulatedFunction(f.space, (F - np.min(F, axis=k, keepdims=True)) ** 2)
        vals = np.stack([conditional_thermal((f, b), h2, k).expectation.table() for b in betas])
        worst = max(worst, float(np.max(np.maximum(-np.diff(vals, axis=0), 0.0))))
    return inequality("monotone_df_proxy", worst, 0.0)


# ---------------------------------------------------------------------------
# random instances and the suite
# ---------------------------------------------------------------------------


def random_space(rng: np.random.Generator, max_n: int = 4, max_atoms: int = 4) -> ProductSpace:
    """n uniform in {1..max_n}, atom counts uniform in {2..max_atoms}."""
    n = int(rng.integers(1, max_n + 1))
    margs = []
    for _ in range(n):
        m = int(rng.integers(2, max_atoms + 1))
        w = rng.uniform(0.05, 1.0, size=m)
        margs.append(Marginal(range(m), w / w.sum()))
    return ProductSpace(margs)


def random_function(rng: np.random.Generator, space: ProductSpace, low=-2.0, high=2.0) -> TabulatedFunction:
    return TabulatedFunction(space, rng.uniform(low, high, size=space.shape), name="random")


def random_additive(rng: np.random.Generator, space: ProductSpace, low=-1.0, high=1.0) -> TabulatedFunction:
    total = np.zeros(space.shape)
    for k in range(space.n):
        shape = [1] * space.n
        shape[k] = space.shape[k]
        total = total + rng.uniform(low, high, size=space.shape[k]).reshape(shape)
    return TabulatedFunction(space, total, name="random_additive")


def random_instance(seed: int, trial: int, max_n: int = 4, max_atoms: int = 4):
    rng = np.random.default_rng([seed, trial])
    space = random_space(rng, max_n, max_atoms)
    return space, random_function(rng, space), random_additive(rng, space)


def instance_checks(f: TabulatedFunction, additive: TabulatedFunction,
                    betas: Sequence[float] = BETA_GRID) -> list[CheckReport]:
    reports = [check_efron_stein(f), check_efron_stein(additive)]
    scaled = f / max(1.0, inf_deviation_max(f))
    for b in betas:
        reports.append(check_herbst(f, b))
        reports.append(check_fluctuation(f, b))
        reports.extend(check_derivatives(f, b))
        reports.append(check_entropy_reflection(f, b))
        reports.append(check_free_energy(f, b))
        reports.append(check_tensorization(f, b))
        reports.append(check_tensorization(additive, b))
        reports.append(check_mod_log_sobolev(f, b))
        for label, c in (("_min", f.min()), ("_mean", expectation(f)), ("_max", f.max())):
            reports.append(check_variational(f, b, c, label))
        reports.extend(check_entropy_bounds_Df(scaled, b))
    reports.append(check_monotone_energy(f))
    reports.append(check_monotone_df_proxy(f))
    return reports


def run_suite(seed: int = 42, trials: int = 20, betas: Sequence[float] = BETA_GRID) -> list[CheckReport]:
    """Run every check on ``trials`` seeded random instances."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    reports = []
    for i in range(trials):
        _, f, additive = random_instance(seed, i)
        reports.extend(instance_checks(f, additive, betas))
    return reports


def to_jsonl(reports: Iterable[CheckReport]) -> str:
    return "".join(r.to_json() + "\n" for r in reports)


def zeta(a: float, b: float, t):
    """zeta_{a,b}(t) = (b - t)(t - a), the variance ceiling of a [a, b]-valued variable with mean t."""
    return (b - np.asarray(t)) * (np.asarray(t) - a)

