"""Monomial dictionaries: canonical terms, the product expansion, evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CAP = 10**6


class DimensionError(ValueError):
    """Raised when objects of different ambient dimension are combined."""


class DictionaryCapError(ValueError):
    """Raised when a requested dictionary would exceed the configured size cap."""


@dataclass(frozen=True, order=False)
class Monomial:
    """Product of state variables, stored as an exact exponent vector.

    The all-zeros vector is the constant function 1.
    """

    exponents: tuple[int, ...]
    degree: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if len(exps) == 0:
            raise ValueError("monomial needs at least one variable")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "degree", sum(exps))

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def sort_key(self):
        # graded order; within a degree x1 before x2 (descending lex on exponents)
        return (self.degree, tuple(-e for e in self.exponents))

    def __mul__(self, other: "Monomial") -> "Monomial":
        if other.dim != self.dim:
            raise DimensionError(f"cannot multiply monomials of dim {self.dim} and {other.dim}")
        return Monomial(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def render(self, names: Sequence[str] | None = None) -> str:
        """Human-readable form such as ``x1·x2^2``; the constant renders as ``1``."""
        names = list(names) if names is not None else default_names(self.dim)
        parts = []
        for name, e in zip(names, self.exponents):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "·".join(parts) if parts else "1"

    def __str__(self):
        return self.render()


def default_names(n: int) -> list[str]:
    if n == 1:
        return ["x"]
    return [f"x{i + 1}" for i in range(n)]


class Dictionary:
    """Ordered, duplicate-free set of monomials over ``ambient_dim`` variables.

    Terms are always held in canonical order (degree, then x1 before x2 ...),
    so two dictionaries holding the same monomials compare equal and
    serialize identically.
    """

    __slots__ = ("ambient_dim", "terms", "_index", "_exps")

    def __init__(self, ambient_dim: int, terms: Iterable[Monomial | Sequence[int]] = ()):
        if ambient_dim < 1:
            raise ValueError("ambient_dim must be >= 1")
        uniq = {}
        for t in terms:
            m = t if isinstance(t, Monomial) else Monomial(tuple(t))
            if m.dim != ambient_dim:
                raise DimensionError(f"term {m.exponents} does not have dimension {ambient_dim}")
            uniq[m.exponents] = m
        self.ambient_dim = int(ambient_dim)
        self.terms: tuple[Monomial, ...] = tuple(sorted(uniq.values(), key=Monomial.sort_key))
        self._index = {m.exponents: i for i, m in enumerate(self.terms)}
        self._exps = None

    # container protocol
    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, i):
        return self.terms[i]

    def __contains__(self, m):
        key = m.exponents if isinstance(m, Monomial) else tuple(m)
        return key in self._index

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return self.ambient_dim == other.ambient_dim and self.terms == other.terms

    def __hash__(self):
        return hash((self.ambient_dim, self.terms))

    def __repr__(self):
        return f"Dictionary(dim={self.ambient_dim}, terms=[{', '.join(map(str, self.terms))}])"

    def index(self, m: Monomial) -> int:
        return self._index[m.exponents]

    def issubset(self, other: "Dictionary") -> bool:
        return self.ambient_dim == other.ambient_dim and all(m in other for m in self.terms)

    @property
    def exponents(self) -> np.ndarray:
        """K x N integer array of exponent vectors."""
        if self._exps is None:
            arr = np.array([m.exponents for m in self.terms], dtype=np.int64)
            self._exps = arr.reshape(len(self.terms), self.ambient_dim)
        return self._exps

    @property
    def max_degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def subset(self, mask) -> "Dictionary":
        return Dictionary(self.ambient_dim, [m for m, keep in zip(self.terms, mask) if keep])

    def union(self, other: "Dictionary") -> "Dictionary":
        _check_dims(self, other)
        return Dictionary(self.ambient_dim, self.terms + other.terms)

    # serialization
    def to_text(self) -> str:
        lines = [f"dim={self.ambient_dim}"]
        lines += [",".join(str(e) for e in m.exponents) for m in self.terms]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Dictionary":
        return parse_dictionary_lines(text.splitlines())[0]


def parse_dictionary_lines(lines: Sequence[str], start: int = 0) -> tuple[Dictionary, int]:
    """Parse a ``dim=N`` header plus exponent lines beginning at ``lines[start]``.

    Parsing stops at the first line that is not an exponent row. Returns the
    dictionary and the index of the first unconsumed line.
    """
    i = start
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i >= len(lines) or not lines[i].strip().startswith("dim="):
        raise ValueError(f"line {i + 1}: expected 'dim=N' dictionary header")
    try:
        dim = int(lines[i].strip()[4:])
    except ValueError:
        raise ValueError(f"line {i + 1}: bad dimension in {lines[i]!r}") from None
    i += 1
    terms = []
    while i < len(lines):
        row = lines[i].strip()
        if not row or not (row[0].isdigit()):
            break
        try:
            exps = tuple(int(v) for v in row.split(","))
        except ValueError:
            raise ValueError(f"line {i + 1}: bad exponent row {row!r}") from None
        if len(exps) != dim or any(e < 0 for e in exps):
            raise ValueError(f"line {i + 1}: exponent row {row!r} does not match dim={dim}")
        terms.append(exps)
        i += 1
    d = Dictionary(dim, terms)
    if len(d) != len(terms):
        raise ValueError(f"line {start + 1}: duplicate terms in dictionary block")
    return d, i


def _check_dims(a: Dictionary, b: Dictionary):
    if a.ambient_dim != b.ambient_dim:
        raise DimensionError(f"dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}")


def unity_set(n: int) -> Dictionary:
    """{1, x1, ..., xN}."""
    if n < 1:
        raise ValueError("unity set needs N >= 1")
    eye = np.eye(n, dtype=int)
    return Dictionary(n, [(0,) * n] + [tuple(row) for row in eye])


def expand(left: Dictionary, right: Dictionary) -> Dictionary:
    """All pairwise products of ``left`` and ``right`` terms, deduplicated."""
    _check_dims(left, right)
    products = (a * b for a in left.terms for b in right.terms)
    return Dictionary(left.ambient_dim, products)


def dictionary_size(n: int, d: int) -> int:
    """Number of monomials in ``n`` variables of total degree <= ``d``."""
    if n < 1 or d < 0:
        raise ValueError("need N >= 1 and d >= 0")
    return math.comb(n + d, d)


def _compositions(n: int, total: int):
    # exponent vectors of length n summing to total
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(n - 1, total - first):
            yield (first,) + rest


def full_dictionary(n: int, d: int, cap: int = DEFAULT_CAP) -> Dictionary:
    """Every monomial in ``n`` variables of total degree <= ``d``."""
    size = dictionary_size(n, d)
    if size > cap:
        raise DictionaryCapError(f"full dictionary for N={n}, degree {d} has {size} terms (cap {cap})")
    terms = [c for deg in range(d + 1) for c in _compositions(n, deg)]
    return Dictionary(n, terms)


@dataclass(frozen=True)
class FeatureMatrix:
    """Dictionary evaluated on data: ``values[k, t]`` is term k at sample t."""

    values: np.ndarray
    dictionary: Dictionary

    @property
    def shape(self):
        return self.values.shape


def evaluate_array(dictionary: Dictionary, x: np.ndarray) -> np.ndarray:
    """Evaluate on a T x N sample array, returning the K x T matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != dictionary.ambient_dim:
        raise DimensionError(f"data has {x.shape[1]} columns, dictionary has dimension {dictionary.ambient_dim}")
    K, T = len(dictionary), x.shape[0]
    out = np.ones((K, T))
    if K == 0:
        return out
    exps = dictionary.exponents
    top = int(exps.max()) if exps.size else 0
    # powers[i][p] = x_i ** p, with x ** 0 == 1 even at 0
    for i in range(dictionary.ambient_dim):
        col = exps[:, i]
        if not col.any():
            continue
        pw = np.empty((top + 1, T))
        pw[0] = 1.0
        for p in range(1, top + 1):
            pw[p] = pw[p - 1] * x[:, i]
        nz = col > 0
        out[nz] *= pw[col[nz]]
    return out


def evaluate(dictionary: Dictionary, data, start: int = 0, stop: int | None = None) -> FeatureMatrix:
    """Evaluate the dictionary on samples ``start .. stop-1`` of ``data``.

    ``data`` may be a :class:`~isindy.io.TimeSeries` or a T x N array.
    """
    x = getattr(data, "samples", data)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    stop = x.shape[0] if stop is None else stop
    if not (0 <= start < stop <= x.shape[0]):
        raise ValueError(f"sample range [{start}, {stop}) is empty or outside 0..{x.shape[0]}")
    return FeatureMatrix(evaluate_array(dictionary, x[start:stop]), dictionary)
