"""Mode indices, multi-indices and monomial keys.

Every other module works with monomials

    M_{a k k'} = prod_n I_n(0)^{a_n} q_n^{k_n} conj(q_n)^{k'_n}

identified by a :class:`MonomialKey` made of three sparse :class:`MultiIndex`
objects.  This module also provides the combinatorial quantities attached to
a key (support, momentum, decreasing rearrangement) and the bracket floor
``floor(n) = max(c(sigma), |n|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "MultiIndex",
    "MonomialKey",
    "SigmaParams",
    "Truncation",
    "mode_index",
    "compute_c_sigma",
    "floor_bracket",
    "momentum",
    "support",
    "decreasing_rearrangement",
    "lnsig",
]


def mode_index(n: int, n_trunc: int) -> int:
    """Validate a Fourier mode index against the mode cutoff.

    Parameters
    ----------
    n : int
        Signed mode index.
    n_trunc : int
        Mode cutoff; ``|n| <= n_trunc`` is required.

    Returns
    -------
    int
        ``n`` unchanged.
    """
    n = int(n)
    if abs(n) > n_trunc:
        raise ValueError(f"mode {n} exceeds n_trunc={n_trunc}")
    return n


class MultiIndex:
    """Finitely supported map from mode index to a nonnegative exponent.

    Zero exponents are never stored and entries are kept in ascending mode
    order, so two multi-indices built from the same data in any order are
    equal and hash identically.

    Parameters
    ----------
    entries : mapping or iterable of (int, int) pairs, optional
        Exponent data.  Repeated modes are summed.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] | None = None):
        acc: dict[int, int] = {}
        if entries is not None:
            pairs = entries.items() if isinstance(entries, Mapping) else entries
            for n, e in pairs:
                e = int(e)
                if e < 0:
                    raise ValueError(f"negative exponent {e} at mode {n}")
                if e:
                    acc[int(n)] = acc.get(int(n), 0) + e
        self._items = tuple(sorted(acc.items()))
        self._hash = hash(self._items)

    @classmethod
    def _from_items(cls, items: tuple[tuple[int, int], ...]) -> "MultiIndex":
        # caller guarantees canonical form
        obj = cls.__new__(cls)
        obj._items = items
        obj._hash = hash(items)
        return obj

    @classmethod
    def from_dict(cls, d: Mapping[int, int]) -> "MultiIndex":
        """Build from a dict that has no zero or negative values."""
        return cls._from_items(tuple(sorted(d.items())))

    @property
    def items(self) -> tuple[tuple[int, int], ...]:
        return self._items

    def as_dict(self) -> dict[int, int]:
        return dict(self._items)

    def __getitem__(self, n: int) -> int:
        for m, e in self._items:
            if m == n:
                return e
        return 0

    def __iter__(self) -> Iterator[int]:
        return (n for n, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MultiIndex) and self._items == other._items

    def __lt__(self, other: "MultiIndex") -> bool:
        return self._items < other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return "{" + ",".join(f"{n}:{e}" for n, e in self._items) + "}"

    def degree(self) -> int:
        return sum(e for _, e in self._items)

    def support(self) -> frozenset[int]:
        return frozenset(n for n, _ in self._items)

    def max_abs_mode(self) -> int:
        return max((abs(n) for n, _ in self._items), default=0)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        if not other._items:
            return self
        if not self._items:
            return other
        d = dict(self._items)
        for n, e in other._items:
            d[n] = d.get(n, 0) + e
        return MultiIndex.from_dict(d)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        d = dict(self._items)
        for n, e in other._items:
            v = d.get(n, 0) - e
            if v < 0:
                raise ValueError("multi-index subtraction went negative")
            if v:
                d[n] = v
            else:
                d.pop(n, None)
        return MultiIndex.from_dict(d)

    def shift(self, n: int, delta: int) -> "MultiIndex":
        """Return a copy with the exponent at ``n`` changed by ``delta``."""
        d = dict(self._items)
        v = d.get(n, 0) + delta
        if v < 0:
            raise ValueError("multi-index exponent went negative")
        if v:
            d[n] = v
        else:
            d.pop(n, None)
        return MultiIndex.from_dict(d)


EMPTY = MultiIndex()


class MonomialKey:
    """Key ``(a, k, k')`` of the monomial ``prod I_n(0)^a q^k conj(q)^k'``.

    Immutable.  Degree, momentum and the largest mode are computed once and
    cached on the key.
    """

    __slots__ = ("a", "k", "kp", "_hash", "_deg", "_maxm", "_mom", "cache")

    def __init__(self, a: MultiIndex = EMPTY, k: MultiIndex = EMPTY, kp: MultiIndex = EMPTY):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "_hash", hash((a._items, k._items, kp._items)))
        object.__setattr__(self, "_deg", None)
        object.__setattr__(self, "_maxm", None)
        object.__setattr__(self, "_mom", None)
        object.__setattr__(self, "cache", {})

    def __setattr__(self, name, value):
        raise AttributeError("MonomialKey is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MonomialKey):
            return NotImplemented
        return self._hash == other._hash and self.sort_key() == other.sort_key()

    def sort_key(self) -> tuple:
        return (self.a._items, self.k._items, self.kp._items)

    def __lt__(self, other: "MonomialKey") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "MonomialKey") -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: "MonomialKey") -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: "MonomialKey") -> bool:
        return self.sort_key() >= other.sort_key()

    def __reduce__(self):
        return (MonomialKey, (self.a, self.k, self.kp))

    @classmethod
    def make(cls, a=None, k=None, kp=None) -> "MonomialKey":
        """Build a key from dicts, pair lists or multi-indices."""

        def conv(x):
            if x is None:
                return EMPTY
            return x if isinstance(x, MultiIndex) else MultiIndex(x)

        return cls(conv(a), conv(k), conv(kp))

    def degree(self) -> int:
        """Total degree ``sum_n 2 a_n + k_n + k'_n``."""
        if self._deg is None:
            object.__setattr__(self, "_deg", 2 * self.a.degree() + self.k.degree() + self.kp.degree())
        return self._deg

    def q_degree(self) -> int:
        return self.k.degree() + self.kp.degree()

    def momentum(self) -> int:
        if self._mom is None:
            object.__setattr__(self, "_mom", momentum(self.k, self.kp))
        return self._mom

    def support(self) -> frozenset[int]:
        return support(self)

    def n1_star(self) -> int | None:
        """Largest ``|n|`` with ``a_n + k_n + k'_n != 0``, or None if empty."""
        if not (self.a or self.k or self.kp):
            return None
        return self.max_abs_mode()

    def max_abs_mode(self) -> int:
        if self._maxm is None:
            object.__setattr__(
                self, "_maxm", max(self.a.max_abs_mode(), self.k.max_abs_mode(), self.kp.max_abs_mode())
            )
        return self._maxm

    def is_averaged(self) -> bool:
        """True when ``k = k' = 0`` (the monomial is a constant on the torus)."""
        return not self.k and not self.kp

    def multiplicities(self) -> dict[int, int]:
        """Map ``n -> 2 a_n + k_n + k'_n`` over the support."""
        out: dict[int, int] = {}
        for n, e in self.a.items:
            out[n] = out.get(n, 0) + 2 * e
        for n, e in self.k.items:
            out[n] = out.get(n, 0) + e
        for n, e in self.kp.items:
            out[n] = out.get(n, 0) + e
        return out

    def __repr__(self) -> str:
        return f"a:{self.a!r} k:{self.k!r} k':{self.kp!r}"


@dataclass(frozen=True)
class Truncation:
    """Mode and degree cutoffs shared by a family of Hamiltonians.

    Parameters
    ----------
    n_trunc : int
        Largest admissible ``|n|``.
    d_trunc : int
        Largest admissible total degree ``sum 2a + k + k'``.
    coeff_floor : float
        Terms whose size falls below this value are dropped.  When
        ``weights`` is given the size is measured in the weighted norm,
        otherwise it is the plain coefficient modulus.
    weights : NormWeights, optional
        Reference weights for the floor and for dropped-weight accounting.
    """

    n_trunc: int
    d_trunc: int
    coeff_floor: float = 1e-30
    weights: object | None = None

    def __post_init__(self):
        if self.n_trunc < 0:
            raise ValueError("n_trunc must be nonnegative")
        if not 0 <= self.d_trunc <= 64:
            raise ValueError("d_trunc must lie in [0, 64]")

    def admits(self, key: MonomialKey, extra_degree: int = 0) -> bool:
        return key.degree() + extra_degree <= self.d_trunc and key.max_abs_mode() <= self.n_trunc

    def modes(self) -> range:
        return range(-self.n_trunc, self.n_trunc + 1)


@lru_cache(maxsize=None)
def compute_c_sigma(sigma: float, x_points: int = 10_000, y_max: int = 10**6) -> int:
    """Smallest ``y0 >= 2`` for which ``ln^s(x+y) - ln^s x - ln^s(y)/2 <= 0``.

    The inequality is sampled for integer ``y >= y0`` and, for each ``y``,
    at ``x_points`` log-spaced points in ``[y, 1e6]`` plus ``x = 1e12``.
    Candidate values of ``y`` are scanned upward one integer at a time; once a
    passing ``y`` is found, every integer up to ``4 y`` and a log-spaced set of
    larger integers up to ``y_max`` are re-checked, and the scan restarts past
    any failure.

    Parameters
    ----------
    sigma : float
        Exponent, must exceed 2.

    Returns
    -------
    int
        The scanned constant ``c(sigma)``.

    Raises
    ------
    ValueError
        If ``sigma <= 2`` or no admissible ``y0 <= y_max`` exists.
    """
    if not sigma > 2:
        raise ValueError("sigma must exceed 2")

    def worst(y: float) -> float:
        hi = max(1e6, y)
        x = np.concatenate([np.geomspace(y, hi, x_points), [1e12]])
        g = np.log(x + y) ** sigma - np.log(x) ** sigma - 0.5 * np.log(y) ** sigma
        return float(g.max())

    y0 = 2
    while y0 <= y_max:
        if worst(y0) > 0:
            y0 += 1
            continue
        dense = range(y0 + 1, min(4 * y0, y_max) + 1)
        sparse = np.unique(np.geomspace(min(4 * y0, y_max), y_max, 2000).astype(np.int64))
        bad = next((y for y in dense if worst(y) > 0), None)
        if bad is None:
            bad = next((int(y) for y in sparse if worst(float(y)) > 0), None)
        if bad is None:
            return y0
        y0 = bad + 1
    raise ValueError(f"c(sigma) scan exhausted below {y_max}; sigma={sigma} too close to 2")


@dataclass(frozen=True)
class SigmaParams:
    """The Gevrey exponent together with its cached constant ``c(sigma)``."""

    sigma: float
    c_sigma: int

    def __post_init__(self):
        if not self.sigma > 2:
            raise ValueError("sigma must exceed 2")
        if self.c_sigma < 2:
            raise ValueError("c_sigma must be at least 2")

    @classmethod
    def from_sigma(cls, sigma: float) -> "SigmaParams":
        return cls(float(sigma), compute_c_sigma(float(sigma)))

    def floor(self, n: int) -> int:
        return max(self.c_sigma, abs(int(n)))

    def L(self, n: int) -> float:
        """``ln^sigma floor(n)``."""
        return _lnsig_floor(abs(int(n)), self.sigma, self.c_sigma)


@lru_cache(maxsize=65536)
def _lnsig_floor(absn: int, sigma: float, c: int) -> float:
    return math.log(max(c, absn)) ** sigma


def lnsig(x: float, sigma: float) -> float:
    """``ln(x)^sigma`` for ``x >= 1``."""
    return math.log(x) ** sigma


def floor_bracket(n: int, p: SigmaParams) -> int:
    """Return ``max(c(sigma), |n|)``."""
    return p.floor(n)


def momentum(k: MultiIndex, kp: MultiIndex) -> int:
    """Momentum ``sum_n (k_n - k'_n) n``."""
    return sum(n * e for n, e in k.items) - sum(n * e for n, e in kp.items)


def support(key: MonomialKey) -> frozenset[int]:
    """Modes with ``2 a_n + k_n + k'_n != 0``."""
    return key.a.support() | key.k.support() | key.kp.support()


def decreasing_rearrangement(key: MonomialKey) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Decreasing rearrangement of the key's mode system.

    Each ``n`` is repeated ``2 a_n + k_n + k'_n`` times.

    Returns
    -------
    abs_seq : tuple of int
        ``(n_1^*, n_2^*, ...)``, the moduli sorted non-increasing.
    signed_seq : tuple of int
        The signed system ``(n_1, n_2, ...)`` with ``|n_1| >= |n_2| >= ...``;
        among equal moduli, positive modes precede negative ones.
    """
    mult = key.multiplicities()
    order = sorted(mult, key=lambda n: (-abs(n), -n))
    signed = tuple(n for n in order for _ in range(mult[n]))
    return tuple(abs(n) for n in signed), signed
