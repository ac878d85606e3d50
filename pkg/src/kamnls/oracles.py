"""Independent reference implementations used to cross-check the fast paths.

Each oracle is deliberately naive and shares no arithmetic code with the
routine it checks.
"""

from __future__ import annotations

import math
from itertools import combinations, product
from typing import Iterator, Mapping

import sympy as sp

from .index_core import MonomialKey, MultiIndex, SigmaParams
from .small_divisors import FrequencyVector

__all__ = [
    "bracket_oracle",
    "dio_oracle",
    "h1_oracle",
    "sextic_oracle",
    "enumerate_keys",
]


# ---------------------------------------------------------------------------
# Poisson bracket through sympy


def _gens(modes):
    q = {n: sp.Symbol(f"q_{n}".replace("-", "m")) for n in modes}
    qb = {n: sp.Symbol(f"qb_{n}".replace("-", "m")) for n in modes}
    I = {n: sp.Symbol(f"I_{n}".replace("-", "m")) for n in modes}
    return q, qb, I


def _exact(c: complex):
    return sp.Rational(c.real) + sp.I * sp.Rational(c.imag)


def bracket_oracle(
    f: Mapping[MonomialKey, complex],
    g: Mapping[MonomialKey, complex],
    modes,
    d_trunc: int | None = None,
) -> dict[MonomialKey, complex]:
    """``(1/2i) sum_j (df/dq_j dg/dqbar_j - df/dqbar_j dg/dq_j)`` in exact arithmetic.

    Coefficients are converted to exact Gaussian rationals; ``I_n`` factors
    are constants.  Results of degree above ``d_trunc`` are discarded.
    """
    modes = list(modes)
    q, qb, I = _gens(modes)
    gens = [q[n] for n in modes] + [qb[n] for n in modes] + [I[n] for n in modes]

    def to_expr(h):
        e = sp.Integer(0)
        for key, c in h.items():
            m = _exact(c)
            for n, x in key.a.items:
                m *= I[n] ** x
            for n, x in key.k.items:
                m *= q[n] ** x
            for n, x in key.kp.items:
                m *= qb[n] ** x
            e += m
        return e

    F, G = to_expr(f), to_expr(g)
    B = sum(sp.diff(F, q[n]) * sp.diff(G, qb[n]) - sp.diff(F, qb[n]) * sp.diff(G, q[n]) for n in modes)
    B = sp.expand(B / (2 * sp.I))
    out: dict[MonomialKey, complex] = {}
    if B == 0:
        return out
    P = sp.Poly(B, *gens, domain="QQ_I")
    M = len(modes)
    for mon, c in P.terms():
        k = {modes[i]: e for i, e in enumerate(mon[:M]) if e}
        kp = {modes[i]: e for i, e in enumerate(mon[M : 2 * M]) if e}
        a = {modes[i]: e for i, e in enumerate(mon[2 * M :]) if e}
        key = MonomialKey.make(a=a, k=k, kp=kp)
        if d_trunc is not None and key.degree() > d_trunc:
            continue
        z = complex(sp.N(c, 30))
        if z != 0:
            out[key] = z
    return out


# ---------------------------------------------------------------------------
# Diophantine minimum by a flat product loop


def dio_oracle(omega: FrequencyVector, support_bound: int, size_bound: int, gamma: float):
    """Smallest ``||<l, omega>|| / bound(l)`` over the box.

    Loops over support sets first (``itertools.combinations``) and then over
    nonzero values on the support (``itertools.product``).  Returns
    ``(ratio, l)``.
    """
    modes = list(range(-support_bound, support_bound + 1))
    best, arg = math.inf, None
    for k in range(1, size_bound + 1):
        vals = [v for v in range(-size_bound, size_bound + 1) if v]
        for supp in combinations(modes, k):
            for l in product(vals, repeat=k):
                if sum(map(abs, l)) > size_bound:
                    continue
                x = math.fsum(v * omega[n] for n, v in zip(supp, l))
                dist = abs(x - round(x))
                bound = gamma
                for n, v in zip(supp, l):
                    bound /= 1.0 + v * v * max(1, abs(n)) ** 4
                r = dist / bound
                if r < best:
                    best, arg = r, dict(zip(supp, l))
    return best, arg


# ---------------------------------------------------------------------------
# momentum-weight inequality by enumeration of keys


def enumerate_keys(max_degree: int, mode_cap: int) -> Iterator[MonomialKey]:
    """Every key with ``sum(2a + k + k') <= max_degree`` on ``|n| <= mode_cap``."""
    atoms = [(kind, n) for n in range(-mode_cap, mode_cap + 1) for kind in ("a", "k", "kp")]
    weight = {"a": 2, "k": 1, "kp": 1}

    def rec(i, rem, acc):
        if i == len(atoms):
            yield acc
            return
        kind, n = atoms[i]
        w = weight[kind]
        for e in range(rem // w + 1):
            if e:
                acc[kind][n] = e
            yield from rec(i + 1, rem - e * w, acc)
        acc[kind].pop(n, None)

    for acc in rec(0, max_degree, {"a": {}, "k": {}, "kp": {}}):
        yield MonomialKey(MultiIndex(acc["a"]), MultiIndex(acc["k"]), MultiIndex(acc["kp"]))


def h1_oracle(max_degree: int, mode_cap: int, sigma: float) -> tuple[float, MonomialKey]:
    """Minimum of ``LHS - RHS`` for the momentum-weight inequality over all keys, straight from the definition."""
    par = SigmaParams.from_sigma(sigma)
    L = par.L
    best, arg = math.inf, None
    for key in enumerate_keys(max_degree, mode_cap):
        seq = []
        for n, e in key.a.items:
            seq += [abs(n)] * (2 * e)
        for n, e in key.k.items + key.kp.items:
            seq += [abs(n)] * e
        seq.sort(reverse=True)
        m = sum(n * e for n, e in key.k.items) - sum(n * e for n, e in key.kp.items)
        lhs = sum(L(v) for v in seq) + L(m) - (2 * L(seq[0]) if seq else 0.0)
        rhs = 0.5 * sum(L(v) for v in seq[2:])
        if lhs - rhs < best:
            best, arg = lhs - rhs, key
    return best, arg


# ---------------------------------------------------------------------------
# NLS sextic by the six-fold loop


def sextic_oracle(fhat: Mapping[int, complex], n_trunc: int) -> dict[MonomialKey, complex]:
    """Coefficients of ``mean_x f |u|^6`` with ``u = sum_n q_n e^{inx}``.

    Sums ordered tuples ``(n1, ..., n6)`` with ``n + n1 - n2 + n3 - n4 + n5 - n6 = 0``.
    """
    modes = range(-n_trunc, n_trunc + 1)
    out: dict[MonomialKey, complex] = {}
    for t in product(modes, repeat=6):
        n = -(t[0] - t[1] + t[2] - t[3] + t[4] - t[5])
        fv = fhat.get(n)
        if not fv:
            continue
        k: dict[int, int] = {}
        kp: dict[int, int] = {}
        for j in (0, 2, 4):
            k[t[j]] = k.get(t[j], 0) + 1
        for j in (1, 3, 5):
            kp[t[j]] = kp.get(t[j], 0) + 1
        key = MonomialKey.make(k=k, kp=kp)
        out[key] = out.get(key, 0j) + fv
    return out


# ---------------------------------------------------------------------------
# randomized comparison driver


def random_polynomial(rng, modes, max_degree: int, n_terms: int) -> dict[MonomialKey, complex]:
    """Random sparse polynomial with standard normal complex coefficients."""
    modes = list(modes)
    out: dict[MonomialKey, complex] = {}
    for _ in range(n_terms):
        deg = int(rng.integers(1, max_degree + 1))
        a: dict[int, int] = {}
        k: dict[int, int] = {}
        kp: dict[int, int] = {}
        rem = deg
        while rem > 0:
            n = int(rng.choice(modes))
            kind = int(rng.integers(0, 3)) if rem >= 2 else int(rng.integers(1, 3))
            tgt, w = ((a, 2), (k, 1), (kp, 1))[kind]
            tgt[n] = tgt.get(n, 0) + 1
            rem -= w
        c = complex(rng.normal(), rng.normal())
        if c:
            key = MonomialKey.make(a=a, k=k, kp=kp)
            out[key] = out.get(key, 0j) + c
    return out


def compare_brackets(n_pairs: int = 1000, seed: int = 0, n_modes: int = 3, max_degree: int = 6) -> dict:
    """Compare the fast bracket with :func:`bracket_oracle` on random pairs.

    Also measures antisymmetry on every pair and the Jacobi identity on
    triples of degree ``<= 4`` (truncation wide enough to avoid pruning).
    """
    import numpy as np

    from .hamiltonian import Hamiltonian, poisson_bracket
    from .index_core import Truncation

    if n_modes % 2 != 1:
        raise ValueError("n_modes must be odd (modes -N..N)")
    rng = np.random.default_rng(seed)
    tr = Truncation(n_modes // 2, max_degree, coeff_floor=0.0)
    wide = Truncation(n_modes // 2, 3 * 4, coeff_floor=0.0)
    modes = list(tr.modes())
    rel, anti, jac = 0.0, 0.0, 0.0
    for i in range(n_pairs):
        f = random_polynomial(rng, modes, max_degree, int(rng.integers(1, 5)))
        g = random_polynomial(rng, modes, max_degree, int(rng.integers(1, 5)))
        F, G = Hamiltonian(f, tr), Hamiltonian(g, tr)
        fast = poisson_bracket(F, G)
        ref = bracket_oracle(f, g, modes, max_degree)
        scale = max((abs(c) for c in ref.values()), default=0.0)
        diff = max((abs(fast.coeff(k) - ref.get(k, 0j)) for k in set(fast.terms) | set(ref)), default=0.0)
        if scale > 0:
            rel = max(rel, diff / scale)
        elif diff > 0:
            rel = math.inf
        back = poisson_bracket(G, F)
        s = (fast + back).max_abs()
        anti = max(anti, s / max(fast.max_abs(), 1e-300) if s else 0.0)
        if i % 10 == 0:
            A, B, C = (Hamiltonian(random_polynomial(rng, modes, 4, 3), wide) for _ in range(3))
            terms = [
                poisson_bracket(A, poisson_bracket(B, C)),
                poisson_bracket(B, poisson_bracket(C, A)),
                poisson_bracket(C, poisson_bracket(A, B)),
            ]
            cyc = terms[0] + terms[1] + terms[2]
            ref_scale = max(t.max_abs() for t in terms)
            if ref_scale > 0:
                jac = max(jac, cyc.max_abs() / ref_scale)
    return {"pairs": n_pairs, "seed": seed, "max_rel_error": rel, "antisymmetry": anti, "jacobi": jac}
