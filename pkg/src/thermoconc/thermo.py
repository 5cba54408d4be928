"""Canonical-ensemble functionals and their single-coordinate conditional versions.

Everything is computed in the log domain. The Gibbs density is
``rho = exp(beta*f - log Z)`` and the entropy is evaluated as
``sum mu * phi(log rho)`` with ``phi(u) = u e^u - e^u + 1 >= 0``, which has
no cancellation even when the entropy is tiny (small beta) or the weights are
extremely skewed (large beta).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .space import ProductSpace, StateIndex, TabulatedFunction, expectation, require_same_space

_SERIES_CUTOFF = 1e-2
_CENTERED_CUTOFF = 0.5


def psi(t):
    """psi(t) = e^t - t - 1, accurate near zero."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < _SERIES_CUTOFF
    ts = np.where(small, t, 0.0)
    series = ts**2 * (1 / 2 + ts * (1 / 6 + ts * (1 / 24 + ts * (1 / 120 + ts * (1 / 720 + ts / 5040)))))
    with np.errstate(over="ignore"):
        direct = np.expm1(np.where(small, 0.0, t)) - np.where(small, 0.0, t)
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def _phi(u):
    # u e^u - e^u + 1 = u*expm1(u) - psi(u); both terms ~u^2, ratio 2:1
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(u) * np.expm1(u) - psi(u)


def log_mean_exp(a: np.ndarray, p: np.ndarray, axis=None) -> np.ndarray:
    """log sum(p * exp(a)) along ``axis`` (keepdims), for weights p summing to 1.

    Uses log1p of centered expm1 terms when the spread is small, otherwise a
    max-shift. Both branches are exact in exact arithmetic.
    """
    a = np.asarray(a, dtype=float)
    p = np.broadcast_to(p, a.shape)
    c = np.sum(p * a, axis=axis, keepdims=True)
    b = a - c
    spread = np.max(np.abs(b), axis=axis, keepdims=True)
    small = spread <= _CENTERED_CUTOFF
    centered = np.log1p(np.sum(p * np.expm1(np.where(small, b, 0.0)), axis=axis, keepdims=True))
    m = np.max(b, axis=axis, keepdims=True)
    shifted = m + np.log(np.sum(p * np.exp(b - m), axis=axis, keepdims=True))
    return c + np.where(small, centered, shifted)


class ThermalState:
    """The canonical ensemble of ``f`` at inverse temperature ``beta``.

    All derived quantities are computed eagerly; the object is read-only.
    ``log_mgf`` is ln E[exp(beta (f - E f))], i.e. ``log_Z - beta * E[f]``.
    """

    def __init__(self, f: TabulatedFunction, beta: float):
        self.f = f
        self.beta = float(beta)
        space = f.space
        F = f.table()
        P = space.prob_table
        self.mean_f = float(np.sum(P * F))
        if self.beta == 0.0:
            self.log_mgf = 0.0
            self.log_Z = 0.0
            self.weights = P
            self.entropy = 0.0
        else:
            a = self.beta * (F - self.mean_f)
            self.log_mgf = float(log_mean_exp(a, P)[(0,) * space.n])
            self.log_Z = self.beta * self.mean_f + self.log_mgf
            u = a - self.log_mgf
            w = P * np.exp(u)
            self.weights = w / w.sum()
            self.entropy = max(float(np.sum(P * _phi(u))), 0.0)
        if not np.isfinite(self.log_Z):
            raise FloatingPointError(f"log partition function is not finite at beta={beta}")

    @property
    def space(self) -> ProductSpace:
        return self.f.space

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_Z))

    def __repr__(self) -> str:
        return f"ThermalState(beta={self.beta}, log_Z={self.log_Z:.6g})"


def _state(ts_or_f, beta=None) -> ThermalState:
    if isinstance(ts_or_f, ThermalState):
        return ts_or_f
    return ThermalState(ts_or_f, beta)


def thermal_expectation(ts: ThermalState, g: TabulatedFunction) -> float:
    """E_{beta f}[g] = E[g e^{beta f}] / E[e^{beta f}]."""
    require_same_space(ts.f, g)
    return float(np.sum(ts.weights * g.table()))


def thermal_variance(ts: ThermalState, g: TabulatedFunction) -> float:
    require_same_space(ts.f, g)
    G = g.table()
    m = np.sum(ts.weights * G)
    return float(np.sum(ts.weights * (G - m) ** 2))


def canonical_entropy(ts: ThermalState) -> float:
    """S_f(beta) = KL(canonical ensemble || mu) = beta E_{beta f}[f] - ln Z."""
    return ts.entropy


def free_energy(ts: ThermalState) -> float:
    """A_f(beta) = ln Z / beta, continuously extended by E[f] at beta = 0."""
    if ts.beta == 0.0:
        return ts.mean_f
    return ts.log_Z / ts.beta


def log_partition(f: TabulatedFunction, beta: float) -> float:
    return ThermalState(f, beta).log_Z


# ---------------------------------------------------------------------------
# conditional quantities
# ---------------------------------------------------------------------------


class ConditionalField(TabulatedFunction):
    """A function produced by a coordinate-k operation; it does not depend on x_k."""

    def __init__(self, space, k: int, values=None, evaluator=None, name=None):
        super().__init__(space, values=values, evaluator=evaluator, name=name)
        self.k = k

    def is_in_algebra(self, atol: float = 1e-12) -> bool:
        return in_algebra(self, self.k, atol)


def in_algebra(g: TabulatedFunction, k: int, atol: float = 1e-12) -> bool:
    """True if g is constant along every k-fiber (g independent of x_k)."""
    k = g.space.check_coordinate(k)
    G = g.table()
    return bool(np.all(np.ptp(G, axis=k) <= atol))


def _field(space, k, arr, name):
    return ConditionalField(space, k, np.broadcast_to(arr, space.shape), name=name)


def _fiber_values(g: TabulatedFunction, x: StateIndex, k: int) -> np.ndarray:
    x = list(x)
    out = np.empty(g.space.shape[k])
    for y in range(len(out)):
        x[k] = y
        out[y] = g(tuple(x))
    return out


def conditional_expectation(g: TabulatedFunction, k: int) -> ConditionalField:
    """E_k[g](x) = sum_y g(x_{y,k}) mu_k(y)."""
    space = g.space
    k = space.check_coordinate(k)
    pk = space.axis_probs(k)
    if g.has_table:
        return _field(space, k, np.sum(pk * g.table(), axis=k, keepdims=True), f"E_{k}")
    p = space.marginals[k].probs
    return ConditionalField(space, k, evaluator=lambda x: float(p @ _fiber_values(g, x, k)), name=f"E_{k}")


def conditional_variance(g: TabulatedFunction, k: int) -> ConditionalField:
    """sigma_k^2[g] = E_k[(g - E_k g)^2], two-pass."""
    space = g.space
    k = space.check_coordinate(k)
    pk = space.axis_probs(k)
    if g.has_table:
        G = g.table()
        m = np.sum(pk * G, axis=k, keepdims=True)
        return _field(space, k, np.sum(pk * (G - m) ** 2, axis=k, keepdims=True), f"var_{k}")
    p = space.marginals[k].probs

    def ev(x):
        v = _fiber_values(g, x, k)
        return float(p @ (v - p @ v) ** 2)

    return ConditionalField(space, k, evaluator=ev, name=f"var_{k}")


class ConditionalThermal(NamedTuple):
    expectation: ConditionalField
    variance: ConditionalField
    entropy: ConditionalField


def _fiber_thermal(fv: np.ndarray, gv: np.ndarray, p: np.ndarray, beta: float):
    if beta == 0.0:
        m = p @ gv
        return m, p @ (gv - m) ** 2, 0.0
    a = beta * fv
    u = a - log_mean_exp(a, p)[0]
    w = p * np.exp(u)
    w = w / w.sum()
    m = w @ gv
    return m, w @ (gv - m) ** 2, max(float(p @ _phi(u)), 0.0)


def conditional_thermal(ts: ThermalState, g: TabulatedFunction, k: int) -> ConditionalThermal:
    """Conditional thermal expectation, variance and entropy along coordinate k.

    Each is computed on the k-fiber through x with Gibbs weights
    mu_k(y) exp(beta f(x_{y,k})) / Z_{k, beta f}(x). ``ts`` may also be a
    ``(f, beta)`` pair, which allows callback-mode functions on spaces too
    large to enumerate.
    """
    f, beta = (ts.f, ts.beta) if isinstance(ts, ThermalState) else ts
    beta = float(beta)
    space = require_same_space(f, g)
    k = space.check_coordinate(k)
    pk = space.axis_probs(k)
    if f.has_table and g.has_table:
        F, G = f.table(), g.table()
        if beta == 0.0:
            m = np.sum(pk * G, axis=k, keepdims=True)
            var = np.sum(pk * (G - m) ** 2, axis=k, keepdims=True)
            ent = np.zeros_like(m)
        else:
            a = beta * F
            u = a - log_mean_exp(a, pk, axis=k)
            w = pk * np.exp(u)
            w = w / np.sum(w, axis=k, keepdims=True)
            m = np.sum(w * G, axis=k, keepdims=True)
            var = np.sum(w * (G - m) ** 2, axis=k, keepdims=True)
            ent = np.maximum(np.sum(pk * _phi(u), axis=k, keepdims=True), 0.0)
        return ConditionalThermal(
            _field(space, k, m, f"E_{k},beta"),
            _field(space, k, var, f"var_{k},beta"),
            _field(space, k, ent, f"S_{k}"),
        )
    p = space.marginals[k].probs

    def at(x, i):
        return float(_fiber_thermal(_fiber_values(f, x, k), _fiber_values(g, x, k), p, beta)[i])

    return ConditionalThermal(
        ConditionalField(space, k, evaluator=lambda x: at(x, 0), name=f"E_{k},beta"),
        ConditionalField(space, k, evaluator=lambda x: at(x, 1), name=f"var_{k},beta"),
        ConditionalField(space, k, evaluator=lambda x: at(x, 2), name=f"S_{k}"),
    )


class ConditionalExtrema(NamedTuple):
    sup: ConditionalField
    inf: ConditionalField
    ran: ConditionalField


def conditional_extrema(g: TabulatedFunction, k: int) -> ConditionalExtrema:
    """Fiber max, min and range ran_k(g) = sup_k g - inf_k g."""
    space = g.space
    k = space.check_coordinate(k)
    if g.has_table:
        G = g.table()
        hi = np.max(G, axis=k, keepdims=True)
        lo = np.min(G, axis=k, keepdims=True)
        return ConditionalExtrema(_field(space, k, hi, f"sup_{k}"), _field(space, k, lo, f"inf_{k}"),
                                  _field(space, k, hi - lo, f"ran_{k}"))
    return ConditionalExtrema(
        ConditionalField(space, k, evaluator=lambda x: float(_fiber_values(g, x, k).max()), name=f"sup_{k}"),
        ConditionalField(space, k, evaluator=lambda x: float(_fiber_values(g, x, k).min()), name=f"inf_{k}"),
        ConditionalField(space, k, evaluator=lambda x: float(np.ptp(_fiber_values(g, x, k))), name=f"ran_{k}"),
    )


class DerivedStatistics(NamedTuple):
    R2: TabulatedFunction
    Sigma2: TabulatedFunction
    D: TabulatedFunction
    W_field: TabulatedFunction


def derived_statistics(f: TabulatedFunction) -> DerivedStatistics:
    """Pointwise sums over coordinates used by the tail bounds.

    R2 = sum ran_k(f)^2, Sigma2 = sum sigma_k^2(f), D = sum (f - inf_k f)^2 (the
    worst-case variance proxy Df) and W_field = sum E_k[(f - inf_k f)^2].
    """
    space = f.space
    F = f.table()
    R2 = np.zeros(space.shape)
    S2 = np.zeros(space.shape)
    D = np.zeros(space.shape)
    W = np.zeros(space.shape)
    for k in range(space.n):
        pk = space.axis_probs(k)
        lo = np.min(F, axis=k, keepdims=True)
        hi = np.max(F, axis=k, keepdims=True)
        m = np.sum(pk * F, axis=k, keepdims=True)
        h2 = (F - lo) ** 2
        R2 = R2 + (hi - lo) ** 2
        S2 = S2 + np.sum(pk * (F - m) ** 2, axis=k, keepdims=True)
        D = D + h2
        W = W + np.sum(pk * h2, axis=k, keepdims=True)
    return DerivedStatistics(
        TabulatedFunction(space, R2, name="R2"),
        TabulatedFunction(space, S2, name="Sigma2"),
        TabulatedFunction(space, D, name="Df"),
        TabulatedFunction(space, W, name="W_field"),
    )


def worst_case_variance_proxy(f: TabulatedFunction) -> TabulatedFunction:
    return derived_statistics(f).D


def variance(g: TabulatedFunction) -> float:
    m = expectation(g)
    return float(np.sum(g.space.prob_table * (g.table() - m) ** 2))


def is_additive(f: TabulatedFunction, atol: float = 1e-10) -> bool:
    """True if f = sum_k f_k(x_k), tested against its first-order projection."""
    space = f.space
    F = f.table()
    P = space.prob_table
    mean = np.sum(P * F)
    proj = np.full(space.shape, -(space.n - 1) * mean)
    for k in range(space.n):
        others = tuple(j for j in range(space.n) if j != k)
        # E[f | x_k]: average over all other coordinates with their weights
        w = P / np.sum(P, axis=others, keepdims=True)
        proj = proj + np.sum(w * F, axis=others, keepdims=True)
    return bool(np.max(np.abs(F - proj)) <= atol * max(1.0, np.max(np.abs(F))))
