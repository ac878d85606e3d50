"""One step of the normal-form algebra.

A perturbation ``R`` is split into ``R0 + R1 + R2`` according to the number
of ``J_m = |q_m|^2 - I_m(0)`` factors, the homological equation
``{N, F} + R0 + R1 = [R0] + [R1]`` is solved coefficient-wise, and the new
perturbation is assembled from Lie series.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .hamiltonian import Hamiltonian, TaggedHamiltonian, diagonal_hamiltonian, poisson_bracket
from .index_core import EMPTY, MonomialKey, MultiIndex, SigmaParams, Truncation
from .norms import NormWeights, ham_norm_plus, log_shift_constant, part_norm
from .small_divisors import RESONANCE_FLOOR, FrequencyVector, divisor, solver_lower_bound

__all__ = [
    "ResonanceError",
    "SplitPerturbation",
    "NormalForm",
    "HomologicalSolution",
    "ShiftReport",
    "StepAlgebra",
    "split_perturbation",
    "elimination_quantity",
    "solve_homological",
    "residual",
    "normal_form_update",
    "new_perturbation",
]


class ResonanceError(ArithmeticError):
    """A divisor fell below the resonance floor for a non-averaged key."""

    def __init__(self, key, value: float):
        super().__init__(f"resonant divisor {value:.3e} for key {key!r}")
        self.key = key
        self.value = value


@dataclass
class SplitPerturbation:
    """``R = R0 + R1 + R2`` with ``J`` factors carried as tags."""

    R0: Hamiltonian
    R1: TaggedHamiltonian
    R2: TaggedHamiltonian

    @classmethod
    def zero(cls, trunc: Truncation) -> "SplitPerturbation":
        return cls(Hamiltonian.zero(trunc), TaggedHamiltonian({}, trunc, 1), TaggedHamiltonian({}, trunc, 2))

    @property
    def trunc(self) -> Truncation:
        return self.R0.trunc

    def reassemble(self) -> Hamiltonian:
        return self.R0 + self.R1.expand() + self.R2.expand()

    def is_zero(self) -> bool:
        return self.R0.is_zero() and self.R1.is_zero() and self.R2.is_zero()

    def norms(self, w: NormWeights) -> dict[str, float]:
        return {"R0": part_norm(self.R0, w, 0), "R1": part_norm(self.R1, w, 1), "R2": part_norm(self.R2, w, 2)}

    def plus_norm(self, w: NormWeights) -> float:
        return ham_norm_plus(self.R0, self.R1, self.R2, w)

    def __add__(self, other: "SplitPerturbation") -> "SplitPerturbation":
        return SplitPerturbation(self.R0 + other.R0, self.R1 + other.R1, self.R2 + other.R2)


@dataclass
class NormalForm:
    """``N = sum_n frequencies[n] |q_n|^2 + constant``."""

    frequencies: dict[int, float]
    constant: float = 0.0

    @classmethod
    def from_V(cls, V: FrequencyVector | Mapping[int, float], modes) -> "NormalForm":
        get = V.__getitem__ if isinstance(V, FrequencyVector) else (lambda n: V.get(n, 0.0))
        return cls({n: n * n + get(n) for n in modes})

    def Vtilde(self) -> dict[int, float]:
        return {n: w - n * n for n, w in self.frequencies.items()}

    def hamiltonian(self, trunc: Truncation) -> Hamiltonian:
        return diagonal_hamiltonian(self.frequencies, trunc)


def _mi_add(d: dict[int, int], n: int, e: int = 1) -> None:
    d[n] = d.get(n, 0) + e


def split_perturbation(R: Hamiltonian) -> SplitPerturbation:
    """Split ``R`` by the number of ``J`` factors.

    For each key put ``b_n = min(k_n, k'_n)`` and ``l = k - b``,
    ``l' = k' - b``, and list the ``b``-modes as ``p_1 <= ... <= p_B``.
    Expanding ``prod (I_p(0) + J_p)`` and grouping the terms with two or
    more ``J`` factors by the first two ``J`` positions ``i < l`` gives an
    exact decomposition in which the factors after position ``l`` stay as
    ``I_p = q_p conj(q_p)``.
    """
    trunc = R.trunc
    r0: dict[MonomialKey, complex] = defaultdict(complex)
    r1: dict = defaultdict(complex)
    r2: dict = defaultdict(complex)
    for key, c in R.terms.items():
        kd, kpd = key.k.as_dict(), key.kp.as_dict()
        b = {n: min(e, kpd[n]) for n, e in kd.items() if n in kpd}
        if not b:
            r0[key] += c
            continue
        l = {n: e - b.get(n, 0) for n, e in kd.items() if e - b.get(n, 0)}
        lp = {n: e - b.get(n, 0) for n, e in kpd.items() if e - b.get(n, 0)}
        L, LP = MultiIndex.from_dict(l), MultiIndex.from_dict(lp)
        ad = key.a.as_dict()
        full_a = dict(ad)
        for n, e in b.items():
            _mi_add(full_a, n, e)
        r0[MonomialKey(MultiIndex.from_dict(full_a), L, LP)] += c
        for m, e in b.items():
            a1 = dict(full_a)
            a1[m] -= 1
            if not a1[m]:
                del a1[m]
            r1[((m,), MonomialKey(MultiIndex.from_dict(a1), L, LP))] += e * c
        seq = [n for n in sorted(b) for _ in range(b[n])]
        B = len(seq)
        for jl in range(1, B):
            tail: dict[int, int] = {}
            for p in seq[jl + 1 :]:
                _mi_add(tail, p, 1)
            kk, kkp = dict(l), dict(lp)
            for n, e in tail.items():
                _mi_add(kk, n, e)
                _mi_add(kkp, n, e)
            K, KP = MultiIndex.from_dict(kk), MultiIndex.from_dict(kkp)
            for ji in range(jl):
                a2 = dict(ad)
                for j in range(jl):
                    if j != ji:
                        _mi_add(a2, seq[j], 1)
                tag = (seq[ji], seq[jl])
                r2[(tag, MonomialKey(MultiIndex.from_dict(a2), K, KP))] += c
    clean = lambda d: {k: v for k, v in d.items() if v != 0}
    return SplitPerturbation(
        Hamiltonian(clean(r0), trunc),
        TaggedHamiltonian(clean(r1), trunc, 1),
        TaggedHamiltonian(clean(r2), trunc, 2),
    )


def elimination_quantity(key: MonomialKey, tag: tuple[int, ...], sp: SigmaParams) -> float:
    """``sum_{i>=3} L(n_i^*) + L(m^*)`` for a (tagged) key, ``L = ln^sigma floor``.

    Tag modes enter the rearrangement twice each, like ``I_m``.
    """
    mult = key.multiplicities()
    for m in tag:
        mult[m] = mult.get(m, 0) + 2
    seq = sorted((abs(n) for n, e in mult.items() for _ in range(e)), reverse=True)
    return sum(sp.L(n) for n in seq[2:]) + sp.L(key.momentum())


@dataclass
class HomologicalSolution:
    """Generating functions, averages and the parts left in place."""

    F0: Hamiltonian
    F1: TaggedHamiltonian
    avg0: Hamiltonian
    avg1: TaggedHamiltonian
    kept: SplitPerturbation
    eliminated: SplitPerturbation
    min_divisor: float = math.inf
    dio_violations: int = 0
    _F: Hamiltonian | None = field(default=None, repr=False)

    def F(self) -> Hamiltonian:
        """``F0`` plus the expanded ``F1`` (computed once)."""
        if self._F is None:
            self._F = self.F0 + self.F1.expand()
        return self._F


def solve_homological(
    sp: SplitPerturbation,
    V: FrequencyVector | Mapping[int, float],
    gamma: float | None = None,
    eliminate: Callable[[MonomialKey, tuple[int, ...]], bool] | None = None,
) -> HomologicalSolution:
    """Solve ``{N, F} + R0 + R1 = [R0] + [R1]`` with ``N = sum (n^2 + V_n)|q_n|^2``.

    With the bracket ``{N, M_akk'} = (i/2) div M_akk'`` the solution is
    ``F_akk' = 2i B_akk' / div``, ``div = sum (k_n - k'_n)(n^2 + V_n)``.
    Keys with ``k = k' = 0`` go to the averages.

    Parameters
    ----------
    V : FrequencyVector or mapping
        Modulated frequencies entering the divisors.
    gamma : float, optional
        When given, divisors are compared with the absolute-value
        Diophantine bound and violations are counted.
    eliminate : callable, optional
        Predicate on ``(key, tag)``.  Keys for which it returns False are
        left in the perturbation instead of being solved.

    Raises
    ------
    ResonanceError
        If a key to be eliminated has ``|div| < 1e-14``.
    """
    trunc = sp.trunc
    f0, a0, k0, e0 = {}, {}, {}, {}
    f1, a1, k1, e1 = {}, {}, {}, {}
    min_div = math.inf
    viol = 0

    def handle(tkey, key, tag, c, fout, aout, kout, eout):
        nonlocal min_div, viol
        if eliminate is not None and not eliminate(key, tag):
            kout[tkey] = c
            return
        eout[tkey] = c
        if key.is_averaged():
            aout[tkey] = c
            return
        d = divisor(key.k, key.kp, V)
        if abs(d) < RESONANCE_FLOOR:
            raise ResonanceError(key, d)
        min_div = min(min_div, abs(d))
        if gamma is not None and abs(d) < solver_lower_bound(key.k, key.kp, gamma):
            viol += 1
        fout[tkey] = 2j * c / d

    for key, c in sp.R0.terms.items():
        handle(key, key, (), c, f0, a0, k0, e0)
    for (tag, key), c in sp.R1.terms.items():
        handle((tag, key), key, tag, c, f1, a1, k1, e1)
    kept = SplitPerturbation(Hamiltonian(k0, trunc), TaggedHamiltonian(k1, trunc, 1), sp.R2)
    elim = SplitPerturbation(Hamiltonian(e0, trunc), TaggedHamiltonian(e1, trunc, 1), TaggedHamiltonian({}, trunc, 2))
    return HomologicalSolution(
        Hamiltonian(f0, trunc),
        TaggedHamiltonian(f1, trunc, 1),
        Hamiltonian(a0, trunc),
        TaggedHamiltonian(a1, trunc, 1),
        kept,
        elim,
        min_div,
        viol,
    )


def residual(N: NormalForm, sol: HomologicalSolution, threads: int = 1) -> float:
    """Max coefficient modulus of ``{N, F} + E - [E]``, ``E`` the eliminated part.

    Evaluated without a coefficient floor so that nothing is hidden.
    """
    t0 = replace(sol.F0.trunc, coeff_floor=0.0)
    Nh = diagonal_hamiltonian(N.frequencies, t0)
    F = sol.F().with_trunc(t0)
    E = (sol.eliminated.R0 + sol.eliminated.R1.expand()).with_trunc(t0)
    avg = (sol.avg0 + sol.avg1.expand()).with_trunc(t0)
    res = poisson_bracket(Nh, F, threads) + E - avg
    return res.max_abs()


@dataclass
class ShiftReport:
    """Frequency shift of one step and its comparison with the closed-form bound."""

    shift: dict[int, float]
    shift_max: float
    imag_max: float
    log_bound: float | None = None
    ok: bool = True


def _I0_monomial(a: MultiIndex, I0: Mapping[int, float]) -> float:
    v = 1.0
    for n, e in a.items:
        v *= I0.get(n, 0.0) ** e
    return v


def normal_form_update(
    N: NormalForm,
    avg0: Hamiltonian,
    avg1: TaggedHamiltonian,
    I0: Mapping[int, float],
    s: int | None = None,
    r: float | None = None,
    sigma: float | None = None,
    eps0: float | None = None,
) -> tuple[NormalForm, ShiftReport]:
    """``N_+ = N + [R0] + [R1]``.

    ``[R1] = sum_m shift_m J_m`` with ``shift_m = sum_a B^{(m)}_{a00} I(0)^a``,
    so each frequency moves by ``shift_m`` and the constant absorbs
    ``[R0] - sum_m shift_m I_m(0)``.  When ``s, r, sigma, eps0`` are all
    given the largest shift is compared with
    ``exp{(18/r) exp{(4/r)^{1/(sigma-1)}}} eps0^{0.6 (3/2)^s}``.
    """
    shift: dict[int, complex] = defaultdict(complex)
    for (tag, key), c in avg1.terms.items():
        shift[tag[0]] += c * _I0_monomial(key.a, I0)
    const = sum(c * _I0_monomial(key.a, I0) for key, c in avg0.terms.items())
    freqs = dict(N.frequencies)
    real_shift = {}
    for m, v in shift.items():
        real_shift[m] = v.real
        freqs[m] = freqs.get(m, m * m) + v.real
    new_const = N.constant + complex(const).real - sum(v * I0.get(m, 0.0) for m, v in real_shift.items())
    smax = max((abs(v) for v in real_shift.values()), default=0.0)
    imax = max((abs(v.imag) for v in shift.values()), default=0.0)
    rep = ShiftReport(dict(sorted(real_shift.items())), smax, imax)
    if None not in (s, r, sigma, eps0) and eps0 > 0:
        lb = log_shift_constant(r, sigma) + 0.6 * 1.5**s * math.log(eps0)
        rep.log_bound = lb
        rep.ok = smax == 0 or math.log(smax) <= lb
    return NormalForm(freqs, new_const), rep


@dataclass
class StepAlgebra:
    """Output of :func:`new_perturbation`."""

    sp: SplitPerturbation
    terms_used: int
    tail: float
    dropped_norm: float


def _series(G: Hamiltonian, F: Hamiltonian, start_factorial_shift: int, n_max: int | None, threads: int):
    """``sum_{n>=1} G^{(n)} / (n + shift)!``; returns (sum, terms, tail)."""
    adaptive = n_max is None
    cap = 30 if adaptive else n_max
    total = Hamiltonian.zero(G.trunc)
    term = G
    ref = max(G.size(), 1e-300)
    eps = 2.220446049250313e-16
    used, tail = 0, 0.0
    dropped = 0.0
    for n in range(1, cap + 2):
        if term.is_zero() or F.is_zero():
            break
        term = poisson_bracket(term, F, threads).scale(1.0 / (n + start_factorial_shift))
        dropped = max(dropped, term.dropped_norm)
        if n == cap + 1:
            tail = term.size()
            break
        total = total + term
        used = n
        if adaptive and term.size() <= eps * ref:
            break
    total.dropped_norm = max(total.dropped_norm, dropped)
    return total, used, tail


def new_perturbation(
    N: NormalForm,
    sol: HomologicalSolution,
    sp: SplitPerturbation,
    n_max: int | None = None,
    threads: int = 1,
) -> StepAlgebra:
    """New perturbation after the time-one map of ``F``.

    With ``E`` the eliminated part, ``K`` the parts carried over and
    ``Z = [E] - E = {N, F}``,

        R_+ = K + sum_{n>=1} (E + K)^{(n)} / n! + sum_{n>=1} Z^{(n)} / (n+1)!

    where ``X^{(n)}`` is the ``n``-fold bracket with ``F``.  The second sum
    is the exact ``t``-integral of the ``(1-t)`` weighted flow term.  Only
    the bracket-generated part is split again; ``K`` keeps its tags.
    """
    trunc = sp.trunc
    F = sol.F()
    kept = sol.kept
    if F.is_zero():
        return StepAlgebra(kept, 0, 0.0, 0.0)
    E = sol.eliminated.R0 + sol.eliminated.R1.expand()
    Kh = kept.reassemble()
    Z = (sol.avg0 + sol.avg1.expand()) - E
    s1, u1, t1 = _series(E + Kh, F, 0, n_max, threads)
    s2, u2, t2 = _series(Z, F, 1, n_max, threads)
    gen = s1 + s2
    new = split_perturbation(gen)
    out = kept + new
    dropped = max(s1.dropped_norm, s2.dropped_norm)
    return StepAlgebra(out, max(u1, u2), max(t1, t2), dropped)
