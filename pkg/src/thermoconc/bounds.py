"""Tail bounds from the entropy method, each gated on its hypotheses.

Every builder returns :class:`BoundCurve` objects mapping a deviation t to a
probability bound, together with the Chernoff parameter beta*(t) that attains
it. A builder whose hypotheses fail raises :class:`InapplicableBound`; nothing
silently falls back to a weaker statement.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .quadrature import ABS_TOL, REL_TOL, Integrand, entropy_integrand, integrate
from .space import TabulatedFunction, expectation, require_same_space
from .thermo import ThermalState, conditional_expectation, conditional_extrema, derived_statistics

GATE_TOL = 1e-12
DEFAULT_SELF_BOUND_A = (1.0 / 3.0, 1.0)
BETA_MAX = 100.0
BETA_MAX_DOUBLINGS = 10
GOLDEN_TOL = 1e-10


class InapplicableBound(ValueError):
    """The hypotheses of a bound do not hold for this function."""


@dataclass(frozen=True)
class Hypotheses:
    """Norms and certificates of f that the tail bounds consume."""

    R2_sup: float
    V: float
    W: float
    Df_sup: float
    A_coherent: Optional[float]
    upper_dev_max: float  # max_k max_x (f - E_k f)
    inf_dev_max: float  # max_k max_x (f - inf_k f)
    coherence_holds: bool
    self_bounds: tuple[tuple[float, float], ...] = ()
    decouple: Optional[tuple[TabulatedFunction, float]] = field(default=None, compare=False)

    @property
    def range_le_one_upper(self) -> bool:
        return self.upper_dev_max <= 1.0 + GATE_TOL

    @property
    def range_le_one_inf(self) -> bool:
        return self.inf_dev_max <= 1.0 + GATE_TOL

    @property
    def self_bound(self) -> Optional[tuple[float, float]]:
        """The a = 1 certificate if fitted, else the first one."""
        for a, b in self.self_bounds:
            if a == 1.0:
                return a, b
        return self.self_bounds[0] if self.self_bounds else None


def compute_hypotheses(f: TabulatedFunction, self_bound_a: Iterable[float] = DEFAULT_SELF_BOUND_A,
                       decouple_g: TabulatedFunction | None = None,
                       decouple_a: float | None = None) -> Hypotheses:
    """Evaluate every norm and certificate by enumerating the space.

    Self-bound certificates Df <= a f + b are fitted with the smallest b >= 0
    for each requested a. A decoupling function g is verified pointwise
    (0 <= f <= g, Df <= a g, Dg <= a g, a >= 1); if ``decouple_a`` is omitted
    the smallest admissible a >= 1 is fitted.
    """
    space = f.space
    F = f.table()
    stats = derived_statistics(f)
    D = stats.D.table()

    coherent = True
    zeta_sum = np.zeros(space.shape)
    upper_dev = 0.0
    inf_dev = 0.0
    for k in range(space.n):
        hi, lo, _ = (c.table() for c in conditional_extrema(f, k))
        m = conditional_expectation(f, k).table()
        scale = max(1.0, float(np.max(np.abs(hi))), float(np.max(np.abs(lo))))
        if np.any(m < 0.5 * (hi + lo) - GATE_TOL * scale):
            coherent = False
        zeta_sum = zeta_sum + np.maximum((hi - m) * (m - lo), 0.0)
        upper_dev = max(upper_dev, float(np.max(F - m)))
        inf_dev = max(inf_dev, float(np.max(F - lo)))

    certs = []
    for a in dict.fromkeys(float(a) for a in self_bound_a):
        if a < 0:
            raise ValueError("self-bound slope a must be non-negative")
        certs.append((a, max(0.0, float(np.max(D - a * F)))))

    decouple = None
    if decouple_g is not None:
        decouple = (decouple_g, verify_decoupling(f, decouple_g, decouple_a))

    return Hypotheses(
        R2_sup=float(np.max(stats.R2.table())),
        V=float(np.max(stats.Sigma2.table())),
        W=float(np.max(stats.W_field.table())),
        Df_sup=float(np.max(D)),
        A_coherent=float(np.max(zeta_sum)) if coherent else None,
        upper_dev_max=upper_dev,
        inf_dev_max=inf_dev,
        coherence_holds=coherent,
        self_bounds=tuple(certs),
        decouple=decouple,
    )


def verify_decoupling(f: TabulatedFunction, g: TabulatedFunction, a: float | None = None) -> float:
    """Check 0 <= f <= g, Df <= a g, Dg <= a g with a >= 1 and return a."""
    require_same_space(f, g)
    F, G = f.table(), g.table()
    tol = GATE_TOL * max(1.0, float(np.max(np.abs(G))))
    if np.any(F < -tol) or np.any(F > G + tol):
        raise InapplicableBound("decoupling needs 0 <= f <= g")
    Df = derived_statistics(f).D.table()
    Dg = derived_statistics(g).D.table()
    if a is None:
        a = 1.0
        pos = G > 0
        for Dx in (Df, Dg):
            if np.any(Dx[~pos] > tol):
                raise InapplicableBound("Df or Dg is positive where g = 0")
            if np.any(pos):
                a = max(a, float(np.max(Dx[pos] / G[pos])))
    a = float(a)
    if a < 1.0:
        raise InapplicableBound("decoupling needs a >= 1")
    if np.any(Df > a * G + tol) or np.any(Dg > a * G + tol):
        raise InapplicableBound(f"Df <= a g or Dg <= a g fails for a = {a}")
    return a


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCurve:
    name: str
    side: str  # "upper" bounds Pr{f - Ef > t}, "lower" bounds Pr{Ef - f > t}
    evaluate: Callable[[float], float]
    beta_of_t: Callable[[float], float]
    hypotheses_used: str

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.evaluate(float(t))
        return np.array([self.evaluate(float(x)) for x in np.asarray(t).ravel()]).reshape(np.shape(t))

    def beta_star(self, t: float) -> float:
        return self.beta_of_t(float(t))


def _cap(log_bound: float) -> float:
    return min(1.0, math.exp(min(log_bound, 0.0)))


def _sub_gamma(name: str, side: str, v: float, c: float, used: str, scale: float = 1.0) -> BoundCurve:
    """exp(-t^2 / (2 (v + c t))), optimized at beta = t / (v + c t).

    ``scale`` divides t before the formula and beta after, for bounds proven
    on f/scale.
    """

    def ev(t):
        if t <= 0:
            return 1.0
        u = t / scale
        denom = v + c * u
        if denom <= 0:
            return 0.0
        return _cap(-u * u / (2.0 * denom))

    def beta(t):
        if t <= 0:
            return 0.0
        u = t / scale
        denom = v + c * u
        return math.inf if denom <= 0 else u / denom / scale

    return BoundCurve(name, side, ev, beta, used)


def bennett_h(u):
    """(1 + u) ln(1 + u) - u, accurate near zero."""
    u = float(u)
    if abs(u) < 1e-3:
        return u * u * (0.5 - u * (1 / 6 - u * (1 / 12 - u / 20)))
    return (1.0 + u) * math.log1p(u) - u


def _bennett(name: str, side: str, V: float, used: str, scale: float = 1.0) -> BoundCurve:
    Vs = V / (scale * scale)

    def ev(t):
        if t <= 0:
            return 1.0
        if Vs <= 0:
            return 0.0
        return _cap(-Vs * bennett_h((t / scale) / Vs))

    def beta(t):
        if t <= 0:
            return 0.0
        return math.inf if Vs <= 0 else math.log1p((t / scale) / Vs) / scale

    return BoundCurve(name, side, ev, beta, used)


def bounded_difference(h: Hypotheses) -> BoundCurve:
    """exp(-2 t^2 / ||R^2(f)||), beta* = 4t/||R^2(f)||."""
    return _sub_gamma("bounded_difference", "upper", h.R2_sup / 4.0, 0.0, "R2_sup")


def bennett(h: Hypotheses, scale: float = 1.0) -> tuple[BoundCurve, BoundCurve]:
    """Bennett bound and its Bernstein relaxation for f/scale, needs f - E_k f <= scale."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    if h.upper_dev_max > scale * (1.0 + GATE_TOL):
        raise InapplicableBound(f"f - E_k f reaches {h.upper_dev_max:.6g} > {scale:.6g}")
    used = f"V, f - E_k f <= {scale:g}"
    return (_bennett("bennett", "upper", h.V, used, scale),
            _sub_gamma("bernstein", "upper", h.V / scale**2, 1.0 / 3.0, used, scale))


def coherent(h: Hypotheses) -> BoundCurve:
    """exp(-t^2/(2A)) when every conditional mean sits in the upper half of its fiber range."""
    if not h.coherence_holds:
        raise InapplicableBound("coherence condition E_k f >= (sup_k f + inf_k f)/2 fails")
    return _sub_gamma("coherent", "upper", h.A_coherent, 0.0, "coherence, A")


def lower_tail_W(h: Hypotheses) -> BoundCurve:
    return _sub_gamma("lower_tail_W", "lower", h.W, 0.0, "W")


def df_upper(h: Hypotheses) -> BoundCurve:
    return _sub_gamma("df_upper", "upper", h.Df_sup, 0.0, "Df_sup")


def df_lower(h: Hypotheses) -> tuple[BoundCurve, BoundCurve]:
    if not h.range_le_one_inf:
        raise InapplicableBound(f"f - inf_k f reaches {h.inf_dev_max:.6g} > 1")
    used = "Df_sup, f - inf_k f <= 1"
    return (_bennett("df_lower_bennett", "lower", h.Df_sup, used),
            _sub_gamma("df_lower_bernstein", "lower", h.Df_sup, 1.0 / 3.0, used))


def df_tails(h: Hypotheses) -> tuple[BoundCurve, BoundCurve, BoundCurve]:
    """(upper, lower Bennett form, lower Bernstein relaxation)."""
    lower, relaxed = df_lower(h)
    return df_upper(h), lower, relaxed


def _best_of(name: str, side: str, curves: Sequence[BoundCurve], used: str) -> BoundCurve:
    if len(curves) == 1:
        c = curves[0]
        return BoundCurve(name, side, c.evaluate, c.beta_of_t, used)

    def pick(t):
        return min(curves, key=lambda c: c.evaluate(t))

    return BoundCurve(name, side, lambda t: pick(t).evaluate(t), lambda t: pick(t).beta_of_t(t), used)


def self_bounded(h: Hypotheses, Ef: float, lower: bool = True) -> tuple[BoundCurve, ...]:
    """Bounds for Df <= a f + b, minimized over the fitted certificates.

    Upper: exp(-t^2 / (2(a E f + b + a t/2))). Lower (a >= 1 and
    f - inf_k f <= 1 only): exp(-t^2 / (2(a E f + b))).
    """
    if not h.self_bounds:
        raise InapplicableBound("no self-bound certificate Df <= a f + b")
    ups = [_sub_gamma("self_bounded_upper", "upper", a * Ef + b, a / 2.0, f"Df <= {a:.6g} f + {b:.6g}")
           for a, b in h.self_bounds]
    out = [_best_of("self_bounded_upper", "upper", ups, "Df <= a f + b")]
    if lower:
        if not h.range_le_one_inf:
            raise InapplicableBound(f"self-bounded lower tail needs f - inf_k f <= 1 (got {h.inf_dev_max:.6g})")
        lows = [_sub_gamma("self_bounded_lower", "lower", a * Ef + b, 0.0, "")
                for a, b in h.self_bounds if a >= 1.0]
        if not lows:
            raise InapplicableBound("self-bounded lower tail needs a certificate with a >= 1")
        out.append(_best_of("self_bounded_lower", "lower", lows, "Df <= a f + b, a >= 1, f - inf_k f <= 1"))
    return tuple(out)


def decoupled(h: Hypotheses, Eg: float, lower: bool = True) -> tuple[BoundCurve, ...]:
    """Upper exp(-t^2/(4aEg + 3at/2)); lower exp(-t^2/(4aEg + at)) if f - inf_k f <= 1."""
    if h.decouple is None:
        raise InapplicableBound("no decoupling certificate (g, a)")
    _, a = h.decouple
    out = [_sub_gamma("decoupled_upper", "upper", 2 * a * Eg, 0.75 * a, "0 <= f <= g, Df, Dg <= a g")]
    if lower:
        if not h.range_le_one_inf:
            raise InapplicableBound("decoupled lower tail needs f - inf_k f <= 1")
        out.append(_sub_gamma("decoupled_lower", "lower", 2 * a * Eg, 0.5 * a,
                              "0 <= f <= g, Df, Dg <= a g, f - inf_k f <= 1"))
    return tuple(out)


def applicable_curves(h: Hypotheses, Ef: float, Eg: float | None = None) -> tuple[list[BoundCurve], dict]:
    """Every catalog curve whose hypotheses hold, plus the reasons for the rest."""
    curves: list[BoundCurve] = [bounded_difference(h), lower_tail_W(h), df_upper(h)]
    skipped = {}

    def attempt(label, fn):
        try:
            res = fn()
        except InapplicableBound as exc:
            skipped[label] = str(exc)
            return
        curves.extend(res if isinstance(res, tuple) else (res,))

    attempt("bennett", lambda: bennett(h))
    attempt("coherent", lambda: coherent(h))
    attempt("df_lower", lambda: df_lower(h))
    attempt("self_bounded_upper", lambda: self_bounded(h, Ef, lower=False))
    attempt("self_bounded_lower", lambda: self_bounded(h, Ef)[1:])
    if h.decouple is not None and Eg is None:
        Eg = expectation(h.decouple[0])
    attempt("decoupled_upper", lambda: decoupled(h, Eg, lower=False) if Eg is not None else
            _raise("no decoupling certificate (g, a)"))
    attempt("decoupled_lower", lambda: decoupled(h, Eg)[1:] if Eg is not None else
            _raise("no decoupling certificate (g, a)"))
    return curves, skipped


def _raise(msg):
    raise InapplicableBound(msg)


# ---------------------------------------------------------------------------
# generic bound: minimize the Chernoff exponent over beta
# ---------------------------------------------------------------------------


def golden_section_minimize(fn: Callable[[float], float], lo: float, hi: float,
                            tol: float = GOLDEN_TOL, max_iter: int = 500) -> tuple[float, float]:
    """Minimize a unimodal function on [lo, hi]; returns (argmin, min)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    candidates = [(fc, c), (fd, d), (fn(lo), lo), (fn(hi), hi)]
    fbest, xbest = min(candidates)
    return xbest, fbest


class _CumulativeIntegral:
    """I(beta) = int_0^beta g, reusing the closest cached lower endpoint."""

    def __init__(self, integrand: Integrand, abs_tol=ABS_TOL, rel_tol=REL_TOL):
        self.g = integrand
        self.abs_tol, self.rel_tol = abs_tol, rel_tol
        self.knots = [0.0]
        self.values = [0.0]

    def __call__(self, beta: float) -> float:
        i = bisect.bisect_right(self.knots, beta) - 1
        x0, v0 = self.knots[i], self.values[i]
        if x0 == beta:
            return v0
        v = v0 + integrate(self.g, x0, beta, self.abs_tol, self.rel_tol)
        self.knots.insert(i + 1, beta)
        self.values.insert(i + 1, v)
        return v


def generic_entropy_bound(f: TabulatedFunction, t: float,
                          entropy_envelope: Callable[[float], float] | None = None,
                          beta_max: float = BETA_MAX, envelope_limit: float | None = None) -> tuple[float, float]:
    """Minimize beta * int_0^beta env(g)/g^2 dg - beta t over beta in (0, beta_max].

    ``entropy_envelope`` must dominate S_f on (0, beta_max]; the default is the
    exact canonical entropy. ``envelope_limit`` is the limit of env(g)/g^2 at
    zero; when absent it is taken from a small positive g. beta_max is doubled
    (at most 10 times) while the exponent is still decreasing there.
    Returns (capped bound, beta*).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 1.0, 0.0
    if entropy_envelope is None:
        integrand = entropy_integrand(f)
        env = lambda g: ThermalState(f, g).entropy  # noqa: E731
    else:
        env = entropy_envelope
        if envelope_limit is None:
            g0 = 1e-6 * beta_max
            envelope_limit = env(g0) / (g0 * g0)
        integrand = Integrand(lambda g: env(g) / (g * g), envelope_limit)
    I = _CumulativeIntegral(integrand)

    def exponent(beta):
        return beta * I(beta) - beta * t

    def slope(beta):
        return I(beta) + env(beta) / beta - t

    hi = float(beta_max)
    for _ in range(BETA_MAX_DOUBLINGS):
        if slope(hi) >= 0:
            break
        hi *= 2.0
    beta_star, best = golden_section_minimize(exponent, 0.0, hi)
    return _cap(best), beta_star


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def curves_to_csv(curves: Sequence[BoundCurve], t_grid: Iterable[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "bound_name", "bound_value", "beta_star"])
    for t in t_grid:
        for c in curves:
            w.writerow([f"{t:.12g}", c.name, f"{c(t):.12g}", f"{c.beta_star(t):.12g}"])
    return buf.getvalue()
