"""Weighted norms on sequences and Hamiltonians.

Weights are evaluated in log space: for a key ``(a, k, k')`` the log-weight is

    rho * (sum_n (2a_n + k_n + k'_n) L(n) - 2 L(n_1^*)) - mu * L(m^*)

with ``L(n) = ln^sigma floor(n)``.  Norms are sups of ``|B| / weight`` and are
returned as floats (``inf`` when the ratio overflows).  The closed-form
constants of the norm inequalities are returned as logarithms for the same
reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .index_core import MonomialKey, SigmaParams

__all__ = [
    "NormWeights",
    "log_weight",
    "seq_norm",
    "ham_norm",
    "log_ham_norm",
    "part_norm",
    "ham_norm_plus",
    "safe_exp",
    "log_n2_plus_constant",
    "log_n2_plain_constant",
    "log_h3_constant",
    "log_n3_constant",
    "log_step_constant",
    "log_h6_constant",
    "log_shift_constant",
    "log_lie_smallness",
]


@dataclass(frozen=True)
class NormWeights:
    """Norm parameters ``(rho, mu, r, sigma)``.

    ``c(sigma)`` is computed once on construction.
    """

    rho: float
    mu: float
    r: float
    sigma: float
    sp: SigmaParams = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("rho", "mu", "r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.sigma > 2:
            raise ValueError("sigma must exceed 2")
        object.__setattr__(self, "sp", SigmaParams.from_sigma(self.sigma))

    def with_(self, rho: float | None = None, mu: float | None = None) -> "NormWeights":
        return NormWeights(self.rho if rho is None else rho, self.mu if mu is None else mu, self.r, self.sigma)

    def L(self, n: int) -> float:
        return self.sp.L(n)


def safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def log_weight(key: MonomialKey, w: NormWeights, tag: tuple[int, ...] = ()) -> float:
    """Log of the weight dividing ``|B|`` in the (plus-)norm.

    Parameters
    ----------
    key : MonomialKey
    w : NormWeights
    tag : tuple of int
        Modes of the ``J`` factors carried by the term (empty for plain
        terms).  Each tag mode adds ``2 rho L(m)``.
    """
    S, Lm = _components(key, w.sp)
    if tag:
        L = w.sp.L
        S += 2 * sum(L(m) for m in tag)
    return w.rho * S - w.mu * Lm


def _components(key: MonomialKey, sp: SigmaParams) -> tuple[float, float]:
    """``(sum mult L(n) - 2 L(n1*), L(m*))``, cached on the key per ``sigma``."""
    ck = (sp.sigma, sp.c_sigma)
    hit = key.cache.get(ck)
    if hit is not None:
        return hit
    L = sp.L
    s = 0.0
    for n, e in key.a.items:
        s += 2 * e * L(n)
    for n, e in key.k.items:
        s += e * L(n)
    for n, e in key.kp.items:
        s += e * L(n)
    n1 = key.n1_star()
    if n1 is not None:
        s -= 2 * L(n1)
    out = (s, L(key.momentum()))
    key.cache[ck] = out
    return out


def seq_norm(q: Mapping[int, complex], w: NormWeights) -> float:
    """``sup_n |q_n| exp(r L(n))``."""
    best = -math.inf
    for n, v in q.items():
        a = abs(v)
        if a > 0:
            best = max(best, math.log(a) + w.r * w.sp.L(n))
    return 0.0 if best == -math.inf else safe_exp(best)


def _log_sup(items: Iterable[tuple[object, complex]], w: NormWeights, tagged: bool) -> float:
    best = -math.inf
    for key, c in items:
        a = abs(c)
        if a == 0:
            continue
        if tagged:
            tag, k = key
            lw = log_weight(k, w, tag)
        else:
            lw = log_weight(key, w)
        best = max(best, math.log(a) - lw)
    return best


def log_ham_norm(R, w: NormWeights) -> float:
    """Log of ``||R||_{rho,mu}``; ``-inf`` for the zero Hamiltonian."""
    return _log_sup(R.terms.items(), w, tagged=False)


def ham_norm(R, w: NormWeights) -> float:
    """``||R||_{rho,mu} = sup |B| / weight``."""
    lg = log_ham_norm(R, w)
    return 0.0 if lg == -math.inf else safe_exp(lg)


def part_norm(part, w: NormWeights, tag_len: int | None = None) -> float:
    """Plus-norm of one part of a split perturbation.

    ``part`` is a plain Hamiltonian (``tag_len = 0``) or a tagged Hamiltonian
    whose tags must all have length ``tag_len``.
    """
    if hasattr(part, "tag_len"):
        if tag_len is not None and part.tag_len != tag_len:
            raise ValueError(f"expected J-tags of length {tag_len}, got {part.tag_len}")
        lg = _log_sup(part.terms.items(), w, tagged=True)
    else:
        if tag_len not in (None, 0):
            raise ValueError("missing J-metadata on a part that needs it")
        lg = _log_sup(part.terms.items(), w, tagged=False)
    return 0.0 if lg == -math.inf else safe_exp(lg)


def ham_norm_plus(R0, R1, R2, w: NormWeights) -> float:
    """``max(||R0||^+, ||R1||^+, ||R2||^+)``.

    ``R1`` carries one ``J_m`` tag per term and ``R2`` a pair ``(m1, m2)``
    with ``m1 <= m2`` (``m1 == m2`` is allowed and doubles the weight).
    """
    return max(part_norm(R0, w, 0), part_norm(R1, w, 1), part_norm(R2, w, 2))


# ---------------------------------------------------------------------------
# closed-form constants (all returned as logarithms)


def _pw(x: float, p: float) -> float:
    try:
        return x**p
    except OverflowError:
        return math.inf


def log_n2_plus_constant(delta: float, sigma: float) -> float:
    """log of ``exp{3 (4/d)^{1/(s-1)} exp{(4/d)^{1/s}}}``."""
    return 3 * _pw(4 / delta, 1 / (sigma - 1)) * safe_exp(_pw(4 / delta, 1 / sigma))


def log_n2_plain_constant(delta: float) -> float:
    """log of ``64 / (e^2 d^2)``."""
    return math.log(64.0) - 2.0 - 2 * math.log(delta)


def log_h3_constant(delta1: float, delta2: float, sigma: float) -> float:
    """log of ``(1/d2) exp{(300/d1) exp{(50/d1)^{1/(s-1)}}}``."""
    return -math.log(delta2) + (300 / delta1) * safe_exp(_pw(50 / delta1, 1 / (sigma - 1)))


def log_n3_constant(delta: float, gamma: float, sigma: float) -> float:
    """log of ``(1/g) exp{(1000/d) exp{4 (50/d)^{1/(s-1)}}}``."""
    return -math.log(gamma) + (1000 / delta) * safe_exp(4 * _pw(50 / delta, 1 / (sigma - 1)))


def log_step_constant(delta: float, gamma: float, sigma: float) -> float:
    """log of ``(1/g) exp{(1000/d) exp{4 (100/d)^{1/(s-1)}}}`` (new-perturbation bounds)."""
    return -math.log(gamma) + (1000 / delta) * safe_exp(4 * _pw(100 / delta, 1 / (sigma - 1)))


def log_h6_constant(r: float, rho: float, mu: float, sigma: float) -> float:
    """log of the vector-field constant ``C(r, rho, mu, sigma)``.

    The sum of the two case constants from the proof is used:
    ``exp{(2/mu)^{1/(s-1)}} exp{(100/rho) exp{(8/rho)^{1/(s-1)}}}`` and
    ``exp{(2/(mu-r))^{1/(s-1)}} exp{(20/rho) exp{(4/rho)^{1/(s-1)}}}``.
    """
    if not (mu > r > 5 * rho):
        raise ValueError("vector-field bound needs mu > r > 5 rho")
    e = 1 / (sigma - 1)
    c1 = _pw(2 / mu, e) + (100 / rho) * safe_exp(_pw(8 / rho, e))
    c2 = _pw(2 / (mu - r), e) + (20 / rho) * safe_exp(_pw(4 / rho, e))
    hi, lo = max(c1, c2), min(c1, c2)
    if hi == math.inf:
        return math.inf
    return hi + math.log1p(math.exp(lo - hi))


def log_shift_constant(r: float, sigma: float) -> float:
    """log of ``exp{(18/r) exp{(4/r)^{1/(s-1)}}}``."""
    return (18 / r) * safe_exp(_pw(4 / r, 1 / (sigma - 1)))


def log_lie_smallness(delta1: float, delta2: float, sigma: float, f_norm: float) -> float:
    """log of ``(e/d2) exp{(300/d1) exp{(50/d1)^{1/(s-1)}}} ||F||``."""
    if f_norm == 0:
        return -math.inf
    return 1.0 + log_h3_constant(delta1, delta2, sigma) + math.log(f_norm)
