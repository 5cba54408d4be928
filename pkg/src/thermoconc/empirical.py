"""Exact and Monte Carlo tail probabilities, the example zoo, and bound comparisons."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import bounds as B
from .space import Marginal, ProductSpace, TabulatedFunction, expectation

Z95 = 1.96
MC_CHUNK = 1 << 16

# ---------------------------------------------------------------------------
# tail estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    t: float
    probability: float
    method: str  # "exact" | "monte_carlo"
    samples: int = 0
    ci_halfwidth: float = 0.0


def _deviation(F: np.ndarray, mean: float, side: str) -> np.ndarray:
    if side == "upper":
        return F - mean
    if side == "lower":
        return mean - F
    raise ValueError(f"side must be 'upper' or 'lower', not {side!r}")


def exact_tail(f: TabulatedFunction, t: float, side: str = "upper") -> TailEstimate:
    """Pr{f - Ef > t} (upper) or Pr{Ef - f > t} (lower), by enumeration."""
    P = f.space.prob_table
    dev = _deviation(f.table(), expectation(f), side)
    p = float(np.sum(P[dev > t]))
    return TailEstimate(float(t), min(max(p, 0.0), 1.0), "exact")


_GOLDEN64 = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, start: int, count: int, n: int) -> np.ndarray:
    """Uniforms in [0, 1) for sample indices start..start+count-1 and coordinates 0..n-1.

    Each value is the SplitMix64 output for counter ``i*n + k`` under a key
    derived from ``seed``, so a (seed, sample, coordinate) triple always gives
    the same number regardless of how the samples are chunked.
    """
    key = _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    ctr = (np.arange(start, start + count, dtype=np.uint64)[:, None] * np.uint64(n)
           + np.arange(n, dtype=np.uint64)[None, :])
    with np.errstate(over="ignore"):
        z = _mix64(key + (ctr + np.uint64(1)) * _GOLDEN64)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def sample_states(space: ProductSpace, seed: int, start: int, count: int) -> np.ndarray:
    """(count, n) array of atom indices drawn coordinate-wise by inverse CDF."""
    u = counter_uniforms(seed, start, count, space.n)
    idx = np.empty(u.shape, dtype=np.int64)
    for k, m in enumerate(space.marginals):
        cdf = np.cumsum(m.probs)
        idx[:, k] = np.minimum(np.searchsorted(cdf, u[:, k], side="right"), m.size - 1)
    return idx


def _values_at(f: TabulatedFunction, idx: np.ndarray) -> np.ndarray:
    if f.has_table:
        return f.table()[tuple(idx.T)]
    return np.array([f(x) for x in idx])


def mc_tail(f: TabulatedFunction, t: float, side: str = "upper", samples: int = 100_000, seed: int = 0,
            mean: float | None = None) -> TailEstimate:
    """Monte Carlo estimate of the tail with a 95% normal-approximation half-width.

    ``mean`` defaults to the exact E[f] when the space is enumerable, otherwise
    to a sample mean from an independent stream (seed + 1).
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    space = f.space
    if mean is None:
        if space.enumerable:
            mean = expectation(f)
        else:
            total = 0.0
            for start in range(0, samples, MC_CHUNK):
                cnt = min(MC_CHUNK, samples - start)
                total += float(np.sum(_values_at(f, sample_states(space, seed + 1, start, cnt))))
            mean = total / samples
    hits = 0
    for start in range(0, samples, MC_CHUNK):
        cnt = min(MC_CHUNK, samples - start)
        vals = _values_at(f, sample_states(space, seed, start, cnt))
        hits += int(np.count_nonzero(_deviation(vals, mean, side) > t))
    p = hits / samples
    return TailEstimate(float(t), p, "monte_carlo", samples, Z95 * math.sqrt(p * (1.0 - p) / samples))


# ---------------------------------------------------------------------------
# zoo
# ---------------------------------------------------------------------------


@dataclass
class ZooEntry:
    """A named example with the bounds it is meant to exercise.

    The hypotheses of every intended bound are verified on construction.
    """

    name: str
    space: ProductSpace
    f: TabulatedFunction
    intended_bounds: tuple[str, ...] = ()
    description: str = ""
    g: Optional[TabulatedFunction] = None
    hypotheses: B.Hypotheses = field(init=False, repr=False)

    def __post_init__(self):
        self.hypotheses = B.compute_hypotheses(self.f, decouple_g=self.g)
        curves, skipped = B.applicable_curves(self.hypotheses, expectation(self.f))
        names = {c.name for c in curves}
        for label in self.intended_bounds:
            if label not in names:
                raise B.InapplicableBound(f"zoo entry {self.name}: {label} not applicable "
                                          f"({skipped.get(label, 'unknown bound')})")


def _coin_space(n: int, p: float = 0.5) -> ProductSpace:
    return ProductSpace([Marginal.bernoulli(p)] * n)


def coin_sum(n: int, p: float = 0.5) -> tuple[ProductSpace, TabulatedFunction]:
    space = _coin_space(n, p)
    return space, TabulatedFunction.from_atoms(space, lambda *x: float(sum(x)), name=f"coin_sum_{n}")


def _sum_entry(name, n, p, intended, description):
    space, f = coin_sum(n, p)
    return ZooEntry(name, space, f, intended, description, g=f)


def euclid_norm(n: int, levels: int = 5) -> tuple[ProductSpace, TabulatedFunction]:
    """f(x) = ||x||_2 / sqrt(n) on {0, 1/(levels-1), ..., 1}^n (separately convex, Lipschitz 1/sqrt(n))."""
    grid = [i / (levels - 1) for i in range(levels)]
    space = ProductSpace([Marginal.uniform(grid)] * n)
    return space, TabulatedFunction.from_atoms(space, lambda *x: math.sqrt(sum(v * v for v in x) / n),
                                               name=f"euclid_norm_{n}")


TSP_SITES = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5))


@lru_cache(maxsize=None)
def _tours(n_cities: int) -> np.ndarray:
    """Closed tours starting at city 0, one per direction class."""
    tours = []
    for perm in itertools.permutations(range(1, n_cities)):
        if n_cities > 2 and perm[0] > perm[-1]:
            continue
        tours.append((0,) + perm + (0,))
    return np.array(tours)


def shortest_tour(points: np.ndarray) -> float:
    """Exact shortest closed tour through ``points`` by exhaustive permutation."""
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    T = _tours(len(points))
    return float(d[T[:, :-1], T[:, 1:]].sum(axis=1).min())


def mini_tsp(n_cities: int = 6, sites=TSP_SITES) -> tuple[ProductSpace, TabulatedFunction]:
    """Shortest tour over cities placed uniformly on a few sites, scaled so f - inf_k f <= 1.

    The raw tour length is a memoized callback; the scale is the exact
    maximum of f - inf_k f over all states and coordinates.
    """
    sites_arr = np.asarray(sites, dtype=float)
    space = ProductSpace([Marginal.uniform(range(len(sites)))] * n_cities)
    raw = TabulatedFunction(space, evaluator=lambda x: shortest_tour(sites_arr[list(x)]), name="tsp_raw")
    R = raw.table()
    scale = max(float(np.max(R - np.min(R, axis=k, keepdims=True))) for k in range(n_cities))
    return space, TabulatedFunction(space, evaluator=lambda x: raw(x) / scale, name=f"tsp_{n_cities}")


_SUMS = ("bounded_difference", "bennett", "df_upper", "df_lower_bennett", "self_bounded_upper",
         "self_bounded_lower", "decoupled_upper", "decoupled_lower", "lower_tail_W")


def _coin_max(n: int) -> ZooEntry:
    space = _coin_space(n)
    f = TabulatedFunction.from_atoms(space, lambda *x: float(max(x)), name=f"coin_max_{n}")
    return ZooEntry(f"coin_max_{n}", space, f,
                    ("bounded_difference", "bennett", "df_upper", "df_lower_bennett", "lower_tail_W"),
                    f"maximum of {n} fair coins")


def _euclid(n: int) -> ZooEntry:
    space, f = euclid_norm(n)
    return ZooEntry(f"euclid_norm_{n}", space, f,
                    ("bounded_difference", "df_upper", "df_lower_bennett", "lower_tail_W"),
                    f"||x||/sqrt({n}) on a 5-level grid cube")


def _tsp() -> ZooEntry:
    space, f = mini_tsp()
    return ZooEntry("tsp_6", space, f, ("bounded_difference", "df_upper", "df_lower_bennett"),
                    "shortest tour of 6 cities on 5 sites, normalized")


_BUILDERS = {
    "coin_sum_4": lambda: _sum_entry("coin_sum_4", 4, 0.5, _SUMS + ("coherent",), "sum of 4 fair coins"),
    "coin_sum_10": lambda: _sum_entry("coin_sum_10", 10, 0.5, _SUMS + ("coherent",), "sum of 10 fair coins"),
    "biased_coin_sum_10": lambda: _sum_entry("biased_coin_sum_10", 10, 0.3, _SUMS,
                                             "sum of 10 Bernoulli(0.3) coins"),
    "coin_max_4": lambda: _coin_max(4),
    "euclid_norm_3": lambda: _euclid(3),
    "euclid_norm_4": lambda: _euclid(4),
    "tsp_6": _tsp,
    "selfbound_sum_8": lambda: _sum_entry("selfbound_sum_8", 8, 0.2, ("self_bounded_upper", "self_bounded_lower"),
                                          "sum of 8 Bernoulli(0.2) coins, Df = f"),
    "coherent_sum_10": lambda: _sum_entry("coherent_sum_10", 10, 0.9, ("coherent", "bounded_difference"),
                                          "sum of 10 Bernoulli(0.9) coins"),
}


@lru_cache(maxsize=None)
def zoo_entry(name: str) -> ZooEntry:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"no zoo entry named {name!r}; have {zoo_names()}") from None


def zoo() -> tuple[ZooEntry, ...]:
    """Every example, each built once and cached."""
    return tuple(zoo_entry(name) for name in _BUILDERS)


def zoo_names() -> list[str]:
    return list(_BUILDERS)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailRow:
    t: float
    bound_name: str
    bound_value: float
    beta_star: float
    tail: float
    method: str
    ci: float
    sound: bool


@dataclass
class TailReport:
    entry: str
    rows: list[TailRow]
    skipped: dict

    @property
    def all_sound(self) -> bool:
        return all(r.sound for r in self.rows)

    def to_csv(self, header: bool = True, with_entry: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["t", "bound_name", "bound_value", "beta_star", "tail", "method", "ci", "sound"]
        if header:
            w.writerow((["entry"] if with_entry else []) + cols)
        for r in self.rows:
            row = [f"{r.t:.12g}", r.bound_name, f"{r.bound_value:.12g}", f"{r.beta_star:.12g}",
                   f"{r.tail:.12g}", r.method, f"{r.ci:.12g}", int(r.sound)]
            w.writerow(([self.entry] if with_entry else []) + row)
        return buf.getvalue()

    def to_records(self) -> list[dict]:
        out = []
        for r in self.rows:
            out.append({"entry": self.entry, "t": r.t, "bound_name": r.bound_name, "bound_value": r.bound_value,
                        "beta_star": r.beta_star, "tail": r.tail, "method": r.method, "ci": r.ci,
                        "sound": int(r.sound)})
        return out


SOUND_TOL = 1e-12


def max_deviation(f: TabulatedFunction) -> float:
    m = expectation(f)
    return max(f.max() - m, m - f.min())


def default_t_grid(f: TabulatedFunction, points: int = 20) -> np.ndarray:
    return np.linspace(0.0, max_deviation(f), points)


def compare(entry: ZooEntry, t_grid: Sequence[float] | None = None, mc_samples: int = 0,
            seed: int = 0, bounds: Sequence[str] | None = None) -> TailReport:
    """Evaluate every applicable bound against the tail on a grid of t.

    ``mc_samples = 0`` uses the exact oracle; otherwise a seeded Monte Carlo
    estimate. A row is sound when bound >= tail - ci (within 1e-12).
    ``bounds`` restricts the catalog to the named curves; if none of them
    apply the report simply has no rows.
    """
    f = entry.f
    t_grid = default_t_grid(f) if t_grid is None else np.asarray(list(t_grid), dtype=float)
    if t_grid.size == 0:
        raise ValueError("t grid must be non-empty")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t grid must be non-negative and increasing")
    curves, skipped = B.applicable_curves(entry.hypotheses, expectation(f))
    if bounds is not None:
        wanted = set(bounds)
        curves = [c for c in curves if c.name in wanted]
        skipped = {k: v for k, v in skipped.items() if k in wanted or any(w.startswith(k) for w in wanted)}
    rows = []
    mean = expectation(f)
    cache = {}
    for t in t_grid:
        for c in curves:
            key = (c.side, float(t))
            if key not in cache:
                if mc_samples > 0:
                    cache[key] = mc_tail(f, t, c.side, mc_samples, seed, mean=mean)
                else:
                    cache[key] = exact_tail(f, t, c.side)
            est = cache[key]
            val = c(t)
            rows.append(TailRow(float(t), c.name, val, c.beta_star(t), est.probability, est.method,
                                est.ci_halfwidth, val >= est.probability - est.ci_halfwidth - SOUND_TOL))
    return TailReport(entry.name, rows, skipped)
