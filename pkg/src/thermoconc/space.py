"""Finite product probability spaces and real functions on them.

States are tuples of per-coordinate atom indices. Coordinates are 0-based.
Iteration order is row-major (last coordinate fastest), which is also the
C-order of the dense tables, so ``values.ravel()`` lists values in state order.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_ENUMERATION_LIMIT = 2**24
PROB_SUM_TOL = 1e-12

StateIndex = tuple[int, ...]


class EnumerationLimitError(RuntimeError):
    """Raised when a dense operation would enumerate too many states."""


class SpaceMismatchError(ValueError):
    pass


class Marginal:
    """One coordinate: opaque atom labels with strictly positive probabilities."""

    __slots__ = ("atoms", "probs")

    def __init__(self, atoms: Sequence, probs: Sequence[float]):
        atoms = tuple(atoms)
        probs = np.asarray(probs, dtype=float)
        if len(atoms) == 0:
            raise ValueError("marginal needs at least one atom")
        if probs.ndim != 1 or len(probs) != len(atoms):
            raise ValueError(f"got {len(atoms)} atoms but {probs.size} probabilities")
        if not np.all(np.isfinite(probs)) or np.any(probs <= 0):
            raise ValueError("atom probabilities must be finite and strictly positive")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    def __setattr__(self, name, value):
        raise AttributeError("Marginal is immutable")

    @classmethod
    def uniform(cls, atoms: Sequence) -> Marginal:
        atoms = tuple(atoms)
        return cls(atoms, np.full(len(atoms), 1.0 / len(atoms)))

    @classmethod
    def bernoulli(cls, p: float) -> Marginal:
        """Atoms 0 and 1 with Pr{1} = p."""
        return cls((0, 1), (1.0 - p, p))

    @property
    def size(self) -> int:
        return len(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Marginal):
            return NotImplemented
        return self.atoms == other.atoms and np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash((self.atoms, self.probs.tobytes()))

    def __repr__(self) -> str:
        return f"Marginal(atoms={self.atoms!r}, probs={self.probs.tolist()!r})"


class ProductSpace:
    """The product measure of independent marginals.

    Construction never enumerates. Operations that need the dense state table
    call :meth:`require_enumerable`, which fails beyond ``enumeration_limit``.
    """

    def __init__(self, marginals: Sequence[Marginal], enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT):
        marginals = tuple(marginals)
        if len(marginals) == 0:
            raise ValueError("product space needs at least one marginal")
        if not all(isinstance(m, Marginal) for m in marginals):
            raise TypeError("marginals must be Marginal instances")
        self.marginals = marginals
        self.enumeration_limit = int(enumeration_limit)
        self.shape = tuple(m.size for m in marginals)
        # python ints: no overflow however large the product is
        self.size = math.prod(self.shape)

    @property
    def n(self) -> int:
        return len(self.marginals)

    @property
    def enumerable(self) -> bool:
        return self.size <= self.enumeration_limit

    def require_enumerable(self) -> None:
        if not self.enumerable:
            raise EnumerationLimitError(
                f"space has {self.size} states, above the enumeration limit {self.enumeration_limit}"
            )

    def check_coordinate(self, k: int) -> int:
        if not isinstance(k, (int, np.integer)) or not 0 <= k < self.n:
            raise IndexError(f"coordinate {k!r} out of range for a space with n={self.n}")
        return int(k)

    def axis_probs(self, k: int) -> np.ndarray:
        """Probabilities of coordinate k shaped to broadcast along axis k."""
        k = self.check_coordinate(k)
        shape = [1] * self.n
        shape[k] = self.shape[k]
        return self.marginals[k].probs.reshape(shape)

    @cached_property
    def prob_table(self) -> np.ndarray:
        self.require_enumerable()
        table = np.ones(self.shape)
        for k in range(self.n):
            table = table * self.axis_probs(k)
        table.setflags(write=False)
        return table

    def coordinate_values(self, k: int) -> np.ndarray:
        """Numeric atom labels of coordinate k (raises if labels are not numbers)."""
        k = self.check_coordinate(k)
        return np.asarray(self.marginals[k].atoms, dtype=float)

    def atoms_of(self, x: StateIndex) -> tuple:
        return tuple(m.atoms[i] for m, i in zip(self.marginals, x))

    def check_state(self, x: Sequence[int]) -> StateIndex:
        x = tuple(int(i) for i in x)
        if len(x) != self.n or any(not 0 <= i < s for i, s in zip(x, self.shape)):
            raise IndexError(f"state {x!r} is not a valid index into shape {self.shape}")
        return x

    def state_prob(self, x: StateIndex) -> float:
        return math.prod(float(m.probs[i]) for m, i in zip(self.marginals, x))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProductSpace):
            return NotImplemented
        return self is other or self.marginals == other.marginals

    def __hash__(self) -> int:
        return hash(self.marginals)

    def __repr__(self) -> str:
        return f"ProductSpace(shape={self.shape})"

    def to_json(self) -> dict:
        return {"marginals": [{"atoms": list(m.atoms), "probs": m.probs.tolist()} for m in self.marginals]}

    @classmethod
    def from_json(cls, obj: dict, enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT) -> ProductSpace:
        try:
            margs = [Marginal(m["atoms"], m["probs"]) for m in obj["marginals"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed space JSON: {exc}") from exc
        return cls(margs, enumeration_limit=enumeration_limit)

    @classmethod
    def load(cls, path) -> ProductSpace:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def enumerate_states(space: ProductSpace) -> Iterator[tuple[StateIndex, float]]:
    """Yield every (state, probability) pair in row-major order."""
    space.require_enumerable()
    probs = space.prob_table.ravel()
    for x, p in zip(itertools.product(*(range(s) for s in space.shape)), probs):
        yield x, float(p)


def fiber(space: ProductSpace, x: Sequence[int], k: int) -> Iterator[tuple[StateIndex, float]]:
    """Yield x with coordinate k replaced by each atom y, weighted by mu_k(y)."""
    k = space.check_coordinate(k)
    x = list(space.check_state(x))
    for y, p in enumerate(space.marginals[k].probs):
        x[k] = y
        yield tuple(x), float(p)


class TabulatedFunction:
    """A real function on a product space.

    Dense mode stores the full value table (shape ``space.shape``). Callback
    mode wraps ``evaluator(state) -> float`` and memoizes; the table is
    materialized on demand when the space is enumerable.
    """

    def __init__(self, space: ProductSpace, values=None, evaluator: Callable[[StateIndex], float] | None = None,
                 name: str | None = None):
        if (values is None) == (evaluator is None):
            raise ValueError("give exactly one of values or evaluator")
        self.space = space
        self.name = name
        self._evaluator = evaluator
        self._memo: dict[StateIndex, float] = {}
        self._table = None
        if values is not None:
            space.require_enumerable()
            arr = np.array(values, dtype=float)
            if arr.size != space.size:
                raise ValueError(f"expected {space.size} values, got {arr.size}")
            arr = arr.reshape(space.shape)
            if not np.all(np.isfinite(arr)):
                raise ValueError("function values must be finite")
            arr.setflags(write=False)
            self._table = arr

    @property
    def mode(self) -> str:
        return "callback" if self._evaluator is not None else "dense"

    @property
    def has_table(self) -> bool:
        return self._table is not None or self.space.enumerable

    def table(self) -> np.ndarray:
        if self._table is None:
            self.space.require_enumerable()
            arr = np.empty(self.space.shape)
            for x in np.ndindex(*self.space.shape):
                arr[x] = self(x)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"function {self.name or ''} is not finite everywhere")
            arr.setflags(write=False)
            self._table = arr
        return self._table

    def __call__(self, x: Sequence[int]) -> float:
        x = tuple(int(i) for i in x)
        if self._table is not None:
            return float(self._table[x])
        try:
            return self._memo[x]
        except KeyError:
            v = float(self._evaluator(x))
            if not math.isfinite(v):
                raise ValueError(f"function value at {x} is not finite")
            self._memo[x] = v
            return v

    # construction helpers

    @classmethod
    def constant(cls, space: ProductSpace, c: float) -> TabulatedFunction:
        if space.enumerable:
            return cls(space, np.full(space.shape, float(c)), name=f"const({c})")
        return cls(space, evaluator=lambda x: float(c), name=f"const({c})")

    @classmethod
    def from_atoms(cls, space: ProductSpace, fn: Callable[..., float], name: str | None = None,
                   dense: bool = True) -> TabulatedFunction:
        """Build from a function of the atom labels, ``fn(*atoms)``."""
        ev = lambda x: fn(*space.atoms_of(x))  # noqa: E731
        f = cls(space, evaluator=ev, name=name)
        if dense and space.enumerable:
            return cls(space, f.table(), name=name)
        return f

    @classmethod
    def coordinate(cls, space: ProductSpace, k: int) -> TabulatedFunction:
        """The coordinate function x -> atom label of coordinate k."""
        vals = space.coordinate_values(k)
        shape = [1] * space.n
        shape[k] = space.shape[k]
        return cls(space, np.broadcast_to(vals.reshape(shape), space.shape), name=f"x{k}")

    @classmethod
    def from_json(cls, space: ProductSpace, obj: dict) -> TabulatedFunction:
        if "values" not in obj:
            raise ValueError("function JSON needs a 'values' array")
        return cls(space, obj["values"])

    def to_json(self) -> dict:
        return {"values": self.table().ravel().tolist()}

    # arithmetic

    def _combine(self, other, op, name) -> TabulatedFunction:
        if isinstance(other, TabulatedFunction):
            if other.space != self.space:
                raise SpaceMismatchError("functions live on different spaces")
            if self.has_table and other.has_table:
                return TabulatedFunction(self.space, op(self.table(), other.table()), name=name)
            return TabulatedFunction(self.space, evaluator=lambda x: op(self(x), other(x)), name=name)
        c = float(other)
        if self.has_table:
            return TabulatedFunction(self.space, op(self.table(), c), name=name)
        return TabulatedFunction(self.space, evaluator=lambda x: op(self(x), c), name=name)

    def __add__(self, other):
        return self._combine(other, np.add, None)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract, None)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._combine(other, np.multiply, None)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, np.divide, None)

    def __neg__(self):
        return self * -1.0

    def map(self, fn: Callable[[np.ndarray], np.ndarray], name: str | None = None) -> TabulatedFunction:
        """Apply a vectorized real function pointwise."""
        if self.has_table:
            return TabulatedFunction(self.space, fn(self.table()), name=name)
        return TabulatedFunction(self.space, evaluator=lambda x: float(fn(np.float64(self(x)))), name=name)

    def max(self) -> float:
        return float(self.table().max())

    def min(self) -> float:
        return float(self.table().min())

    def __repr__(self) -> str:
        return f"TabulatedFunction({self.name or '?'}, mode={self.mode}, shape={self.space.shape})"


def require_same_space(*fs: TabulatedFunction) -> ProductSpace:
    space = fs[0].space
    for g in fs[1:]:
        if g.space != space:
            raise SpaceMismatchError("functions live on different spaces")
    return space


def expectation(g: TabulatedFunction) -> float:
    """E[g] as an exact weighted sum over all states."""
    return float(np.sum(g.space.prob_table * g.table()))
