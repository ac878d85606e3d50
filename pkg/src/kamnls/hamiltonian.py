"""Sparse Hamiltonian polynomials and their Poisson algebra.

A :class:`Hamiltonian` maps monomial keys to complex coefficients.  The
Poisson bracket follows the coefficient formula

    {f, g} = (1/(2i)) sum_j (df/dq_j dg/dqbar_j - df/dqbar_j dg/dq_j)

term by term on monomials; the ``I_n(0)`` factors are parameters and are
never differentiated.  The vector field, by contrast, is ``i dH/dqbar_n``.
The two conventions differ by a constant factor and are kept as written.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping

import numpy as np

from .index_core import EMPTY, MonomialKey, MultiIndex, Truncation
from .norms import NormWeights, log_h6_constant, log_lie_smallness, log_weight, safe_exp

__all__ = [
    "Hamiltonian",
    "TaggedHamiltonian",
    "PhasePoint",
    "LieResult",
    "TruncationMismatch",
    "poisson_bracket",
    "vector_field",
    "lie_transform",
    "vector_field_norm_bound",
    "diagonal_hamiltonian",
    "CompiledHamiltonian",
    "partial_q",
    "partial_qbar",
]

_HALF_OVER_I = -0.5j  # 1 / (2i)
_CHUNK = 256


class TruncationMismatch(ValueError):
    """Raised when two operands carry different truncation settings."""


def _size(key: MonomialKey, c: complex, trunc: Truncation, tag: tuple[int, ...] = ()) -> float:
    a = abs(c)
    if trunc.weights is None or a == 0:
        return a
    return safe_exp(math.log(a) - log_weight(key, trunc.weights, tag))


class Hamiltonian:
    """Sparse map ``MonomialKey -> complex`` with truncation bookkeeping.

    Parameters
    ----------
    terms : mapping
        Coefficients.  Keys must respect ``trunc``.
    trunc : Truncation
    dropped_norm : float
        Weight already lost to truncation when this object was formed.
    """

    __slots__ = ("terms", "trunc", "dropped_norm")

    def __init__(
        self,
        terms: Mapping[MonomialKey, complex] | None,
        trunc: Truncation,
        dropped_norm: float = 0.0,
        check: bool = True,
    ):
        self.trunc = trunc
        self.dropped_norm = float(dropped_norm)
        clean: dict[MonomialKey, complex] = {}
        floor = trunc.coeff_floor
        for key, c in (terms or {}).items():
            if check and not trunc.admits(key):
                raise ValueError(f"key {key!r} violates truncation {trunc.n_trunc}/{trunc.d_trunc}")
            c = complex(c)
            if c == 0:
                continue
            if floor > 0:
                s = _size(key, c, trunc)
                if s < floor:
                    self.dropped_norm = max(self.dropped_norm, s)
                    continue
            clean[key] = c
        self.terms = clean

    @classmethod
    def zero(cls, trunc: Truncation) -> "Hamiltonian":
        return cls({}, trunc)

    # -- container protocol -------------------------------------------------
    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms, key=MonomialKey.sort_key))

    def items(self) -> list[tuple[MonomialKey, complex]]:
        return sorted(self.terms.items(), key=lambda kv: kv[0].sort_key())

    def coeff(self, key: MonomialKey) -> complex:
        return self.terms.get(key, 0j)

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def max_degree(self) -> int:
        return max((k.degree() for k in self.terms), default=0)

    # -- linear structure ---------------------------------------------------
    def _check(self, other: "Hamiltonian") -> None:
        if self.trunc != other.trunc:
            raise TruncationMismatch("operands carry different truncation settings")

    def __add__(self, other: "Hamiltonian") -> "Hamiltonian":
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0j) + c
        return Hamiltonian(out, self.trunc, self.dropped_norm + other.dropped_norm, check=False)

    def __neg__(self) -> "Hamiltonian":
        return self.scale(-1.0)

    def __sub__(self, other: "Hamiltonian") -> "Hamiltonian":
        return self + (-other)

    def scale(self, s: complex) -> "Hamiltonian":
        return Hamiltonian(
            {k: s * c for k, c in self.terms.items()}, self.trunc, abs(s) * self.dropped_norm, check=False
        )

    __rmul__ = scale

    def __mul__(self, s: complex) -> "Hamiltonian":
        return self.scale(s)

    def with_trunc(self, trunc: Truncation) -> "Hamiltonian":
        """Re-home the terms under another truncation (keys must still fit)."""
        same = trunc.n_trunc == self.trunc.n_trunc and trunc.d_trunc == self.trunc.d_trunc
        return Hamiltonian(self.terms, trunc, self.dropped_norm, check=not same)

    def size(self) -> float:
        """Weighted sup of the terms under ``trunc.weights`` (or max modulus)."""
        return max((_size(k, c, self.trunc) for k, c in self.terms.items()), default=0.0)

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, x: "PhasePoint", qbar: Mapping[int, complex] | None = None) -> complex:
        """Value at a phase point; ``qbar`` overrides ``conj(q)`` if given."""
        qb = qbar if qbar is not None else {n: v.conjugate() for n, v in x.q.items()}
        total = 0j
        for key, c in self.terms.items():
            total += c * _monomial(key, x.q, qb, x.I0)
        return total

    # -- text format --------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for key, c in self.items():
            lines.append(f"a:{key.a!r} k:{key.k!r} k':{key.kp!r} {c.real!r} {c.imag!r}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, trunc: Truncation) -> "Hamiltonian":
        terms: dict[MonomialKey, complex] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            m = _LINE.fullmatch(line)
            if m is None:
                raise ValueError(f"line {lineno}: cannot parse {line!r}")
            key = MonomialKey(_parse_mi(m["a"]), _parse_mi(m["k"]), _parse_mi(m["kp"]))
            terms[key] = terms.get(key, 0j) + complex(float(m["re"]), float(m["im"]))
        return cls(terms, trunc)

    def __repr__(self) -> str:
        return f"Hamiltonian({len(self.terms)} terms, dropped={self.dropped_norm:.3g})"


_MI = r"\{[^}]*\}"
_LINE = re.compile(rf"a:(?P<a>{_MI})\s+k:(?P<k>{_MI})\s+k':(?P<kp>{_MI})\s+(?P<re>\S+)\s+(?P<im>\S+)")


def _parse_mi(s: str) -> MultiIndex:
    body = s.strip()[1:-1].strip()
    if not body:
        return EMPTY
    pairs = []
    for part in body.split(","):
        n, e = part.split(":")
        pairs.append((int(n), int(e)))
    return MultiIndex(pairs)


def _monomial(key: MonomialKey, q, qb, I0) -> complex:
    v = 1.0 + 0j
    for n, e in key.a.items:
        v *= I0.get(n, 0.0) ** e
    for n, e in key.k.items:
        v *= q.get(n, 0j) ** e
    for n, e in key.kp.items:
        v *= qb.get(n, 0j) ** e
    return v


def diagonal_hamiltonian(freqs: Mapping[int, float], trunc: Truncation) -> Hamiltonian:
    """``sum_n freqs[n] |q_n|^2``."""
    terms = {MonomialKey.make(k={n: 1}, kp={n: 1}): complex(w) for n, w in freqs.items() if w != 0}
    return Hamiltonian(terms, trunc)


@dataclass(frozen=True)
class PhasePoint:
    """Mode amplitudes ``q_n`` and torus parameters ``I_n(0)``."""

    q: Mapping[int, complex]
    I0: Mapping[int, float] = field(default_factory=dict)


class TaggedHamiltonian:
    """Terms carrying ``J`` factors as metadata.

    Keys are ``(tag, MonomialKey)`` where ``tag`` is a sorted tuple of modes;
    each mode ``m`` stands for a factor ``J_m = q_m conj(q_m) - I_m(0)``.

    Parameters
    ----------
    terms : mapping
    trunc : Truncation
    tag_len : int
        Common tag length (1 for ``R1``-type parts, 2 for ``R2``-type parts).
    """

    __slots__ = ("terms", "trunc", "tag_len")

    def __init__(self, terms, trunc: Truncation, tag_len: int, check: bool = True):
        self.trunc = trunc
        self.tag_len = tag_len
        clean = {}
        floor = trunc.coeff_floor
        for (tag, key), c in (terms or {}).items():
            if check:
                if len(tag) != tag_len:
                    raise ValueError(f"tag {tag} does not have length {tag_len}")
                if not trunc.admits(key, 2 * tag_len):
                    raise ValueError(f"tagged key {tag}{key!r} violates truncation")
                tag = tuple(sorted(tag))
            if c == 0 or (floor > 0 and _size(key, c, trunc, tag) < floor):
                continue
            clean[(tag, key)] = complex(c)
        self.terms = clean

    def __len__(self) -> int:
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def items(self):
        return sorted(self.terms.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key()))

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __add__(self, other: "TaggedHamiltonian") -> "TaggedHamiltonian":
        if other.tag_len != self.tag_len or other.trunc != self.trunc:
            raise TruncationMismatch("incompatible tagged operands")
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0j) + c
        return TaggedHamiltonian(out, self.trunc, self.tag_len, check=False)

    def scale(self, s: complex) -> "TaggedHamiltonian":
        return TaggedHamiltonian({k: s * c for k, c in self.terms.items()}, self.trunc, self.tag_len, check=False)

    def expand(self) -> Hamiltonian:
        """Rewrite every ``J_m`` as ``q_m conj(q_m) - I_m(0)``."""
        out: dict[MonomialKey, complex] = defaultdict(complex)
        for (tag, key), c in self.terms.items():
            ad, kd, kpd = key.a.as_dict(), key.k.as_dict(), key.kp.as_dict()
            for choice in product((0, 1), repeat=len(tag)):
                a, k, kp = dict(ad), dict(kd), dict(kpd)
                sign = 1
                for m, ch in zip(tag, choice):
                    if ch == 0:
                        k[m] = k.get(m, 0) + 1
                        kp[m] = kp.get(m, 0) + 1
                    else:
                        a[m] = a.get(m, 0) + 1
                        sign = -sign
                nk = MonomialKey(MultiIndex.from_dict(a), MultiIndex.from_dict(k), MultiIndex.from_dict(kp))
                out[nk] += sign * c
        return Hamiltonian(out, self.trunc, check=False)

    def __repr__(self) -> str:
        return f"TaggedHamiltonian(tag_len={self.tag_len}, {len(self.terms)} terms)"


# ---------------------------------------------------------------------------
# Poisson bracket


def _prep(H: Hamiltonian):
    rows = []
    for key, c in H.items():
        rows.append((key, c, key.degree(), key.k.as_dict(), key.kp.as_dict()))
    return rows


def _bracket_chunk(rows1, by_mode, d_trunc):
    acc: dict[MonomialKey, complex] = {}
    a_cache: dict[tuple[MultiIndex, MultiIndex], MultiIndex] = {}
    for key1, c1, deg1, kd1, kpd1 in rows1:
        for j in set(kd1) | set(kpd1):
            kj, kpj = kd1.get(j, 0), kpd1.get(j, 0)
            for deg2, bucket in by_mode.get(j, {}).items():
                if deg1 + deg2 - 2 > d_trunc:
                    continue
                for Kj, KPj, key2, c2, kd2, kpd2 in bucket:
                    f = kj * KPj - kpj * Kj
                    if f == 0:
                        continue
                    k = dict(kd1)
                    for n, e in kd2.items():
                        k[n] = k.get(n, 0) + e
                    kp = dict(kpd1)
                    for n, e in kpd2.items():
                        kp[n] = kp.get(n, 0) + e
                    k[j] -= 1
                    if not k[j]:
                        del k[j]
                    kp[j] -= 1
                    if not kp[j]:
                        del kp[j]
                    ak = (key1.a, key2.a)
                    a = a_cache.get(ak)
                    if a is None:
                        a = a_cache[ak] = key1.a + key2.a
                    nk = MonomialKey(a, MultiIndex.from_dict(k), MultiIndex.from_dict(kp))
                    acc[nk] = acc.get(nk, 0j) + f * c1 * c2
    return acc


def _degree_profile(rows):
    """Per (degree, mode) sums of |B| (k_j + k'_j), used to bound pruned pairs."""
    prof: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    for key, c, deg, kd, kpd in rows:
        for j in set(kd) | set(kpd):
            prof[deg][j] += abs(c) * (kd.get(j, 0) + kpd.get(j, 0))
    return prof


def _min_log_weight(D: int, trunc: Truncation) -> float:
    w = trunc.weights
    Lc = w.sp.L(0)
    LN = w.sp.L(trunc.n_trunc)
    return w.rho * ((D - 1) * Lc - LN) - w.mu * w.sp.L(D * trunc.n_trunc)


def poisson_bracket(H1: Hamiltonian, H2: Hamiltonian, threads: int = 1) -> Hamiltonian:
    """Poisson bracket ``{H1, H2}`` by the monomial coefficient formula.

    Pairs of terms whose result would exceed ``d_trunc`` are skipped before
    multiplication.  Their contribution is majorized by
    ``(1/2) sum_j A_j B_j`` (``A_j = sum |b| (k_j + k'_j)`` over the pruned
    degree class, likewise ``B_j``) and the weighted majorant is added to
    ``dropped_norm``.

    Parameters
    ----------
    H1, H2 : Hamiltonian
        Operands with identical truncation.
    threads : int
        Worker count.  Work is split in fixed-size chunks that are merged in
        order, so the result does not depend on this value.

    Returns
    -------
    Hamiltonian
    """
    if H1.trunc != H2.trunc:
        raise TruncationMismatch("operands carry different truncation settings")
    trunc = H1.trunc
    rows1, rows2 = _prep(H1), _prep(H2)
    by_mode: dict[int, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for key, c, deg, kd, kpd in rows2:
        for j in set(kd) | set(kpd):
            by_mode[j][deg].append((kd.get(j, 0), kpd.get(j, 0), key, c, kd, kpd))

    chunks = [rows1[i : i + _CHUNK] for i in range(0, len(rows1), _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda ch: _bracket_chunk(ch, by_mode, trunc.d_trunc), chunks))
    else:
        parts = [_bracket_chunk(ch, by_mode, trunc.d_trunc) for ch in chunks]
    acc: dict[MonomialKey, complex] = {}
    for part in parts:
        for k, v in part.items():
            acc[k] = acc.get(k, 0j) + v

    # majorant for pairs pruned by degree
    dropped = 0.0
    p1, p2 = _degree_profile(rows1), _degree_profile(rows2)
    per_D: dict[int, float] = defaultdict(float)
    for d1, m1 in p1.items():
        for d2, m2 in p2.items():
            D = d1 + d2 - 2
            if D <= trunc.d_trunc:
                continue
            per_D[D] += 0.5 * sum(v * m2.get(j, 0.0) for j, v in m1.items())
    for D, b in per_D.items():
        if b == 0:
            continue
        if trunc.weights is None:
            dropped = max(dropped, b)
        else:
            dropped = max(dropped, safe_exp(math.log(b) - _min_log_weight(D, trunc)))

    out = Hamiltonian.__new__(Hamiltonian)
    out.trunc = trunc
    out.dropped_norm = dropped
    clean = {}
    for k, v in acc.items():
        c = _HALF_OVER_I * v
        if c == 0:
            continue
        s = _size(k, c, trunc)
        if s < trunc.coeff_floor:
            out.dropped_norm = max(out.dropped_norm, s)
            continue
        clean[k] = c
    out.terms = clean
    return out


# ---------------------------------------------------------------------------
# vector field


def _partial(H: Hamiltonian, x: PhasePoint, n: int, wrt_bar: bool, qb=None) -> complex:
    q = x.q
    qb = qb if qb is not None else {m: v.conjugate() for m, v in q.items()}
    total = 0j
    for key, c in H.terms.items():
        mi = key.kp if wrt_bar else key.k
        e = mi[n]
        if e == 0:
            continue
        v = c * e
        for m, ea in key.a.items:
            v *= x.I0.get(m, 0.0) ** ea
        for m, ek in key.k.items:
            v *= q.get(m, 0j) ** (ek - (0 if wrt_bar or m != n else 1))
        for m, ek in key.kp.items:
            v *= qb.get(m, 0j) ** (ek - (1 if wrt_bar and m == n else 0))
        total += v
    return total


def partial_q(H: Hamiltonian, x: PhasePoint, n: int, qbar=None) -> complex:
    """``dH/dq_n`` treating ``q`` and ``conj(q)`` as independent."""
    return _partial(H, x, n, False, qbar)


def partial_qbar(H: Hamiltonian, x: PhasePoint, n: int, qbar=None) -> complex:
    """``dH/dconj(q_n)`` treating ``q`` and ``conj(q)`` as independent."""
    return _partial(H, x, n, True, qbar)


def vector_field(H: Hamiltonian, x: PhasePoint) -> dict[int, complex]:
    """``(i dH/dconj(q_n))_n`` over every mode of the truncation."""
    return {n: 1j * _partial(H, x, n, True) for n in H.trunc.modes()}


# ---------------------------------------------------------------------------
# Lie series


@dataclass
class LieResult:
    """Output of :func:`lie_transform`."""

    hamiltonian: Hamiltonian
    terms_used: int
    tail_estimate: float
    diverging: bool
    ratios: list[float] = field(default_factory=list)
    log_smallness: float | None = None


def lie_transform(
    H: Hamiltonian,
    F: Hamiltonian,
    n_max: int | None = None,
    deltas: tuple[float, float] | None = None,
    f_norm: float | None = None,
    threads: int = 1,
) -> LieResult:
    """``H o Phi_F = sum_n H^(n) / n!`` with ``H^(n) = {H^(n-1), F}``.

    Parameters
    ----------
    H, F : Hamiltonian
    n_max : int, optional
        Highest order kept.  By default the series stops at the first term
        whose size is below machine epsilon times the size of ``H`` (at most
        30 terms).
    deltas : (float, float), optional
        Analyticity losses used to evaluate the smallness quantity
        ``(e/d2) exp{(300/d1) exp{(50/d1)^{1/(s-1)}}} ||F||``.
    f_norm : float, optional
        Norm of ``F`` entering the smallness quantity.

    Returns
    -------
    LieResult
        The sum, the number of bracket terms used, the size of the first
        omitted term, and a divergence flag (set when the smallness quantity
        is not below one, or when successive term sizes stop decreasing).
    """
    adaptive = n_max is None
    cap = 30 if adaptive else n_max
    if cap < (0 if adaptive else 1):
        raise ValueError("n_max must be at least 1")
    total = H
    term = H
    size_h = H.size()
    ratios: list[float] = []
    prev = size_h
    used = 0
    tail = 0.0
    eps = np.finfo(float).eps
    for n in range(1, cap + 2):
        if term.is_zero() or F.is_zero():
            tail = 0.0
            break
        term = poisson_bracket(term, F, threads).scale(1.0 / n)
        s = term.size()
        if prev > 0:
            ratios.append(s / prev)
        prev = s
        if n == cap + 1:
            tail = s
            break
        if adaptive and s <= eps * size_h:
            tail = s
            total = total + term
            used = n
            break
        total = total + term
        used = n
    log_small = None
    diverging = bool(ratios) and ratios[-1] >= 1.0 and prev > 0
    if deltas is not None and f_norm is not None:
        log_small = log_lie_smallness(deltas[0], deltas[1], F.trunc.weights.sigma if F.trunc.weights else 3.0, f_norm)
        diverging = diverging or log_small >= 0
    return LieResult(total, used, tail, diverging, ratios, log_small)


# ---------------------------------------------------------------------------
# vector-field bound


def vector_field_norm_bound(H: Hamiltonian, w: NormWeights) -> float:
    """Weighted sup of ``dH/dq_j`` over the torus ``|q_n| = exp(-r L(n))``.

    The supremum over torus angles is replaced by its majorant, the sum of
    the moduli of the monomials (attained when all phases align).  ``I_n(0)``
    is set to ``exp(-2 r L(n))``.

    Raises
    ------
    ValueError
        Unless ``mu > r > 5 rho``.
    """
    if not (w.mu > w.r > 5 * w.rho):
        raise ValueError("vector-field bound needs mu > r > 5 rho")
    L = w.sp.L
    logs: dict[int, list[float]] = defaultdict(list)
    for key, c in H.terms.items():
        if c == 0:
            continue
        base = math.log(abs(c))
        for n, e in key.a.items:
            base -= 2 * w.r * e * L(n)
        for n, e in key.k.items:
            base -= w.r * e * L(n)
        for n, e in key.kp.items:
            base -= w.r * e * L(n)
        for j, kj in key.k.items:
            # one factor q_j removed, then multiplied by the weight exp(r L(j))
            logs[j].append(base + math.log(kj) + 2 * w.r * L(j))
    best = -math.inf
    for vals in logs.values():
        m = max(vals)
        best = max(best, m + math.log(sum(math.exp(v - m) for v in vals)))
    return 0.0 if best == -math.inf else safe_exp(best)


# ---------------------------------------------------------------------------
# vectorized evaluation


@dataclass
class CompiledHamiltonian:
    """Exponent matrices of a Hamiltonian over a fixed mode list."""

    modes: list[int]
    coeffs: np.ndarray
    A: np.ndarray
    K: np.ndarray
    KP: np.ndarray

    @classmethod
    def from_hamiltonian(cls, H: Hamiltonian, modes=None) -> "CompiledHamiltonian":
        modes = list(H.trunc.modes() if modes is None else modes)
        pos = {n: i for i, n in enumerate(modes)}
        items = H.items()
        nt, nm = len(items), len(modes)
        A = np.zeros((nt, nm), dtype=np.int64)
        K = np.zeros((nt, nm), dtype=np.int64)
        KP = np.zeros((nt, nm), dtype=np.int64)
        c = np.empty(nt, dtype=complex)
        for t, (key, v) in enumerate(items):
            c[t] = v
            for n, e in key.a.items:
                A[t, pos[n]] = e
            for n, e in key.k.items:
                K[t, pos[n]] = e
            for n, e in key.kp.items:
                KP[t, pos[n]] = e
        return cls(modes, c, A, K, KP)

    def _monomials(self, q: np.ndarray, qb: np.ndarray, I0: np.ndarray) -> np.ndarray:
        return np.prod(I0**self.A * q**self.K * qb**self.KP, axis=1)

    def evaluate(self, q: np.ndarray, I0: np.ndarray, qb: np.ndarray | None = None) -> complex:
        qb = np.conj(q) if qb is None else qb
        return complex(self.coeffs @ self._monomials(q, qb, I0))

    def grad_qbar(self, q: np.ndarray, I0: np.ndarray, qb: np.ndarray | None = None) -> np.ndarray:
        """``dH/dconj(q_n)`` for every mode, ``q`` and ``conj(q)`` independent."""
        qb = np.conj(q) if qb is None else qb
        out = np.zeros(len(self.modes), dtype=complex)
        base = I0**self.A * q**self.K
        for j in range(len(self.modes)):
            e = self.KP[:, j]
            sel = e > 0
            if not sel.any():
                continue
            kp = self.KP[sel].copy()
            kp[:, j] -= 1
            mono = np.prod(base[sel] * qb**kp, axis=1)
            out[j] = np.sum(self.coeffs[sel] * e[sel] * mono)
        return out

    def vector_field(self, q: np.ndarray, I0: np.ndarray) -> np.ndarray:
        """``i dH/dconj(q_n)``."""
        return 1j * self.grad_qbar(q, I0)
