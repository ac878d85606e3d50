"""Executable checks of the quantitative lemmas.

Every check returns a :class:`LemmaReport` whose ``worst_margin`` is the
minimum of ``RHS - LHS`` over the cases examined (nonnegative means the
inequality held everywhere).  Scalar lemmas compare logarithms.

Reductions used by the exhaustive checks:

* Momentum weight.  The left side depends on a key only through the multiset of ``|n|``
  values and through ``m^*``; since ``ln^sigma floor(.)`` is nondecreasing,
  the worst key for a multiset is the one of smallest ``|m|``, which is the
  minimum of ``|sum +-v_i|`` over sign patterns.
* Small-divisor weight.  Adding a common part ``b`` to ``k`` and ``k'`` leaves the left side
  and ``m^*`` unchanged and cannot decrease ``sum_{i>=3}``, so only ``b = 0``
  needs to be enumerated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement, product
from typing import Iterable, Sequence

import mpmath as mp
import numpy as np
from scipy import integrate, optimize

from .index_core import MonomialKey, MultiIndex, SigmaParams, compute_c_sigma, decreasing_rearrangement

__all__ = [
    "LemmaReport",
    "h1_sides",
    "a1_sides",
    "check_H1",
    "check_a1",
    "check_superadditivity",
    "check_scalar_bounds",
    "run_all",
    "DEFAULT_DELTAS",
    "DEFAULT_SIGMAS",
]

DEFAULT_DELTAS = (0.01, 0.05, 0.1, 0.3)
DEFAULT_SIGMAS = (2.5, 3.0, 4.0)
SUM_CUTOFF = 10_000


@dataclass
class LemmaReport:
    """Outcome of one lemma check; ``worst_margin >= 0`` means pass."""

    lemma: str
    grid: dict
    cases: int
    worst_margin: float
    worst_case: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.worst_margin >= 0

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "grid": self.grid,
            "cases": self.cases,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "worst_case": self.worst_case,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# combinatorial lemmas


def h1_sides(key: MonomialKey, sp: SigmaParams) -> tuple[float, float]:
    """Both sides of the momentum-weight inequality for one key (left, right)."""
    abs_seq, _ = decreasing_rearrangement(key)
    L = sp.L
    lhs = sum(L(v) for v in abs_seq) + L(key.momentum())
    if abs_seq:
        lhs -= 2 * L(abs_seq[0])
    rhs = 0.5 * sum(L(v) for v in abs_seq[2:])
    return lhs, rhs


def a1_sides(k: MultiIndex, kp: MultiIndex, sp: SigmaParams) -> tuple[float, float]:
    """Both sides of the small-divisor weight inequality (left, right) for ``(k, k')``.

    The system ``(n_i)`` repeats ``n`` exactly ``k_n + k'_n`` times.
    """
    L = sp.L
    kd, kpd = k.as_dict(), kp.as_dict()
    lhs = sum(abs(kd.get(n, 0) - kpd.get(n, 0)) * L(n) for n in set(kd) | set(kpd))
    seq = sorted((abs(n) for n, e in list(kd.items()) + list(kpd.items()) for _ in range(e)), reverse=True)
    mom = sum(n * e for n, e in kd.items()) - sum(n * e for n, e in kpd.items())
    rhs = 3 * 4**sp.sigma * (sum(L(v) for v in seq[2:]) + L(mom))
    return lhs, rhs


def _L_table(sp: SigmaParams, vmax: int) -> np.ndarray:
    return np.array([sp.L(v) for v in range(vmax + 1)])


def _min_signed_sum(V: np.ndarray) -> np.ndarray:
    """``min over signs |sum +-V_i|`` row-wise (first sign fixed to +)."""
    D = V.shape[1]
    if D == 0:
        return np.zeros(len(V), dtype=np.int64)
    rest = np.array(list(product((1, -1), repeat=D - 1)), dtype=np.int64).reshape(2 ** (D - 1), D - 1)
    signs = np.hstack([np.ones((len(rest), 1), dtype=np.int64), rest])
    out = np.empty(len(V), dtype=np.int64)
    for i in range(0, len(V), 20000):
        blk = V[i : i + 20000] @ signs.T
        out[i : i + 20000] = np.abs(blk).min(axis=1)
    return out


def check_H1(degree_cap: int = 8, mode_cap: int = 12, sigma: float = 3.0) -> LemmaReport:
    """Exhaustive momentum-weight check over keys of degree ``<= degree_cap`` on ``|n| <= mode_cap``.

    Uses the multiset reduction described in the module docstring, so every
    key is covered.
    """
    if degree_cap > 8 or mode_cap > 12:
        raise ValueError("caps too large to enumerate (degree <= 8, |n| <= 12)")
    sp = SigmaParams.from_sigma(sigma)
    Lt = _L_table(sp, degree_cap * mode_cap)
    worst, payload, cases = math.inf, {}, 0
    # empty key: left side is L(0), right side 0
    worst, payload, cases = Lt[0], {"abs_values": [], "m_star": 0}, 1
    for D in range(1, degree_cap + 1):
        V = np.array(list(combinations_with_replacement(range(mode_cap, -1, -1), D)), dtype=np.int64)
        # rows are non-increasing
        mmin = _min_signed_sum(V)
        LV = Lt[V]
        total = LV.sum(axis=1)
        lhs = total - 2 * LV[:, 0] + Lt[mmin]
        rhs = 0.5 * (total - LV[:, 0] - (LV[:, 1] if D > 1 else 0.0))
        margin = lhs - rhs
        j = int(np.argmin(margin))
        cases += len(V)
        if margin[j] < worst:
            worst = float(margin[j])
            payload = {"abs_values": V[j].tolist(), "m_star": int(mmin[j])}
    return LemmaReport("momentum_weight", {"degree_cap": degree_cap, "mode_cap": mode_cap, "sigma": sigma}, cases, float(worst), payload)


def _compositions(total_max: int, parts: int) -> np.ndarray:
    """Positive integer vectors of length ``parts`` with sum ``<= total_max``."""
    rows = [c for c in product(range(1, total_max + 1), repeat=parts) if sum(c) <= total_max]
    return np.array(rows, dtype=np.int64).reshape(-1, parts)


def check_a1(
    degree_cap: int = 6,
    mode_cap: int = 10,
    sigma: float = 3.0,
    V_samples: int = 100,
    seed: int = 0,
) -> LemmaReport:
    """Small-divisor weight check over ``l = k - k'`` with ``sum |l| <= degree_cap`` on ``|n| <= mode_cap``.

    A case counts when ``|sum l_n (n^2 + Vt_n)| <= 1`` for at least one of
    ``V_samples`` draws of ``Vt`` uniform on ``[-2, 2]``.  Vectors whose
    integer part already exceeds ``1 + 2 sum |l|`` cannot satisfy the
    hypothesis for any admissible ``Vt`` and are skipped.
    """
    sp = SigmaParams.from_sigma(sigma)
    rng = np.random.default_rng(seed)
    modes = np.arange(-mode_cap, mode_cap + 1)
    Vt = rng.uniform(-2, 2, size=(V_samples, len(modes)))
    Lmode = np.array([sp.L(int(n)) for n in modes])
    Lt = _L_table(sp, degree_cap * mode_cap)
    const = 3 * 4**sigma
    worst, payload, cases, scanned = math.inf, {}, 0, 0
    for kk in range(1, degree_cap + 1):
        supports = np.array(list(combinations(range(len(modes)), kk)), dtype=np.int64)
        mags = _compositions(degree_cap, kk)
        if len(mags) == 0:
            continue
        signs = np.array(list(product((1, -1), repeat=kk)), dtype=np.int64)
        coef = (mags[:, None, :] * signs[None, :, :]).reshape(-1, kk)  # (C, kk)
        n_sup = modes[supports]  # (S, kk)
        for s0 in range(0, len(supports), 4000):
            ns = n_sup[s0 : s0 + 4000]
            idx = supports[s0 : s0 + 4000]
            Dint = np.einsum("sk,ck->sc", ns * ns, coef)
            deg = np.abs(coef).sum(axis=1)
            cand = np.abs(Dint) <= 1 + 2 * deg[None, :]
            scanned += Dint.size
            si, ci = np.nonzero(cand)
            if len(si) == 0:
                continue
            c = coef[ci]
            ii = idx[si]
            n = ns[si]
            div = Dint[si, ci][:, None] + np.einsum("rk,srk->rs", c, Vt[:, ii])
            hit = np.any(np.abs(div) <= 1, axis=1)
            if not hit.any():
                continue
            c, ii, n = c[hit], ii[hit], n[hit]
            m = np.abs(c).astype(np.int64)
            Ln = Lmode[ii]
            lhs = (m * Ln).sum(axis=1)
            top1 = Ln.max(axis=1)
            at_top = Ln == top1[:, None]
            cnt_top = (m * at_top).sum(axis=1)
            below = np.where(at_top, -np.inf, Ln).max(axis=1)
            below = np.where(np.isfinite(below), below, 0.0)
            total_deg = m.sum(axis=1)
            top2 = np.where(cnt_top >= 2, top1, np.where(total_deg >= 2, below, 0.0))
            tail = lhs - top1 - top2
            mom = np.abs((c * n).sum(axis=1))
            rhs = const * (tail + Lt[mom])
            margin = rhs - lhs
            j = int(np.argmin(margin))
            cases += len(margin)
            if margin[j] < worst:
                worst = float(margin[j])
                payload = {"l": {int(a): int(b) for a, b in zip(n[j], c[j])}}
    grid = {"degree_cap": degree_cap, "mode_cap": mode_cap, "sigma": sigma, "V_samples": V_samples, "scanned": scanned}
    return LemmaReport("small_divisor_weight", grid, cases, worst, payload, seed)


def check_superadditivity(
    sigma: float,
    y_grid: Sequence[float] | None = None,
    x_grid: Sequence[float] | None = None,
) -> LemmaReport:
    """``ln^s(x+y) - ln^s x - ln^s(y)/2 <= 0`` for ``c(sigma) <= y <= x``.

    Default grids: 200 log-spaced points in ``[c(sigma), 1e12]`` for both
    variables, plus the diagonal ``y = x``.
    """
    c = compute_c_sigma(sigma)
    if y_grid is None:
        y_grid = np.geomspace(c, 1e12, 200)
    if x_grid is None:
        x_grid = np.geomspace(c, 1e12, 200)
    y = np.asarray(y_grid, dtype=float)[:, None]
    x = np.asarray(x_grid, dtype=float)[None, :]
    if np.any(y < c) or np.any(x < c):
        raise ValueError("grid points must lie in [c(sigma), 1e12]")
    ok = y <= x
    val = np.log(x + y) ** sigma - np.log(x) ** sigma - 0.5 * np.log(y) ** sigma
    marg = np.where(ok, -val, np.inf)
    diag = np.asarray(y_grid, dtype=float)
    dmarg = -(np.log(2 * diag) ** sigma - 1.5 * np.log(diag) ** sigma)
    i, j = np.unravel_index(np.argmin(marg), marg.shape)
    worst = float(marg[i, j])
    case = {"y": float(y[i, 0]), "x": float(x[0, j])}
    if dmarg.min() < worst:
        k = int(np.argmin(dmarg))
        worst, case = float(dmarg[k]), {"y": float(diag[k]), "x": float(diag[k])}
    cases = int(ok.sum()) + len(diag)
    return LemmaReport("log_power_superadditivity", {"sigma": sigma, "c_sigma": c, "ny": len(diag), "nx": x.shape[1]}, cases, worst, case)


# ---------------------------------------------------------------------------
# scalar lemmas

mp.mp.dps = 40


def _golden_max(f, lo: float, hi: float) -> float:
    """Maximizer of a unimodal ``f`` on ``[lo, hi]`` by golden-section search.

    A coarse grid scan supplies the bracket.
    """
    grid = np.linspace(lo, hi, 401)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmax(vals))
    if i == 0 or i == len(grid) - 1:
        return float(grid[i])
    res = optimize.minimize_scalar(lambda x: -f(x), bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden", tol=1e-12)
    x = float(min(max(res.x, lo), hi))
    return x if f(x) >= vals[i] else float(grid[i])


def _tail_integral(J: float, delta: float, sigma: float) -> float:
    """``int_J^inf exp(-delta ln^sigma x) dx`` computed in ``u = ln x``."""
    f = lambda u: math.exp(u - delta * u**sigma)
    u0 = math.log(J)
    upeak = max(u0, (1 / (delta * sigma)) ** (1 / (sigma - 1)))
    a, _ = integrate.quad(f, u0, upeak + 1, limit=200) if upeak + 1 > u0 else (0.0, 0.0)
    b, _ = integrate.quad(f, max(u0, upeak + 1), np.inf, limit=200)
    return (a + b) * (1 + 1e-8)


def _lemma_exp_max(sigma: float, delta: float) -> tuple[float, dict]:
    x = _golden_max(lambda x: -delta * x**sigma + x, 0.0, 10 * (1 / delta) ** (1 / (sigma - 1)) + 10)
    lhs = -mp.mpf(delta) * mp.mpf(x) ** sigma + x
    rhs = mp.mpf(1 / delta) ** (mp.mpf(1) / (sigma - 1))
    return float(rhs - lhs), {"x_max": x}


def _lemma_power_exp(p: float, delta: float) -> tuple[float, dict]:
    x = _golden_max(lambda x: p * math.log(x) - delta * x if x > 0 else -math.inf, 1e-12, 20 * p / delta)
    xm = mp.mpf(x)
    lhs = p * mp.log(xm) - delta * xm
    rhs = p * (mp.log(p) - 1 - mp.log(delta))
    return float(rhs - lhs), {"x_max": x, "p": p}


def _lemma_sum(sigma: float, delta: float) -> tuple[float, dict]:
    j = np.arange(1, SUM_CUTOFF + 1, dtype=float)
    s = float(np.sum(np.exp(-delta * np.log(j) ** sigma)))
    tail = _tail_integral(SUM_CUTOFF, delta, sigma)
    lhs = math.log(s + tail)
    rhs = math.log(6 / delta) + (1 / delta) ** (1 / (sigma - 1))
    return rhs - lhs, {"partial_sum": s, "tail": tail}


def _log_prod_terms(sp: SigmaParams, delta: float) -> tuple[float, float]:
    """``-sum_{|n|<=J} ln(1 - e^{-delta L(n)})`` and a majorant of the rest."""
    n = np.arange(0, SUM_CUTOFF + 1)
    L = np.array([sp.L(int(v)) for v in n])
    t = -np.log1p(-np.exp(-delta * L))
    head = float(t[0] + 2 * t[1:].sum())
    xJ = math.exp(-delta * sp.L(SUM_CUTOFF))
    tail = 2 * _tail_integral(SUM_CUTOFF, delta, sp.sigma) / (1 - xJ)
    return head, tail


def _lemma_product_bound(sp: SigmaParams, delta: float) -> tuple[float, dict]:
    head, tail = _log_prod_terms(sp, delta)
    lhs = head + tail
    rhs = (18 / delta) * math.exp((4 / delta) ** (1 / (sp.sigma - 1)))
    return rhs - lhs, {"log_lhs": lhs}


def _lemma_box_sum(sp: SigmaParams, delta: float, box_modes: int = 2, box_exp: int = 6) -> tuple[float, dict]:
    modes = list(range(-box_modes, box_modes + 1))
    x = np.array([math.exp(-delta * sp.L(n)) for n in modes])
    excess = 0.0  # box sum minus the a = 0 term, kept separate for log1p accuracy
    for a in product(range(box_exp + 1), repeat=len(modes)):
        if any(a):
            excess += float(np.prod(x ** np.array(a)))
    head, _ = _log_prod_terms(sp, delta)
    # the full product is at least the truncated one, so using ``head`` is conservative
    return head - math.log1p(excess), {"box_modes": box_modes, "box_exp": box_exp, "box_sum": 1 + excess}


def _lemma_action_weight(sp: SigmaParams, delta: float, p: int) -> tuple[float, dict]:
    total = 0.0
    beta_min = 2 * delta * sp.L(SUM_CUTOFF)
    if beta_min < p:
        raise ValueError("cutoff too small for a vanishing tail")
    for n in range(-SUM_CUTOFF, SUM_CUTOFF + 1):
        beta = 2 * delta * sp.L(n)
        if beta >= p:
            continue  # a = 0 is optimal
        amax = int(math.ceil(p / beta)) + 1
        a = np.arange(0, amax + 1)
        total += float(np.max(np.log1p(a.astype(float) ** p) - beta * a))
    rhs = 3 * p * (p / delta) ** (1 / (sp.sigma - 1)) * math.exp((1 / delta) ** (1 / sp.sigma))
    return rhs - total, {"log_lhs": total, "p": p}


def check_scalar_bounds(sigma: float, delta_grid: Iterable[float] = DEFAULT_DELTAS) -> list[LemmaReport]:
    """One report per scalar inequality over ``delta_grid``.

    Maxima are located by golden-section search and evaluated in extended
    precision; infinite sums and products are truncated at ``|n| = 1e4`` with
    integral tail majorants added to the left side.
    """
    sp = SigmaParams.from_sigma(sigma)
    deltas = [float(d) for d in delta_grid]
    if any(not 0 < d < 1 for d in deltas):
        raise ValueError("delta_grid must lie in (0, 1)")
    jobs = {
        "gevrey_exp_max": lambda d: [_lemma_exp_max(sigma, d)],
        "power_exp_max": lambda d: [_lemma_power_exp(p, d) for p in (1.0, 1.5, 2.0, 3.0)],
        "weighted_series": lambda d: [_lemma_sum(sigma, d)],
        "box_sum": lambda d: [_lemma_box_sum(sp, d)],
        "weighted_product": lambda d: [_lemma_product_bound(sp, d)],
        "action_weight_sum": lambda d: [_lemma_action_weight(sp, d, p) for p in (1, 2)],
    }
    out = []
    for name, fn in jobs.items():
        worst, case, n = math.inf, {}, 0
        for d in deltas:
            for margin, info in fn(d):
                n += 1
                if margin < worst:
                    worst, case = margin, {"delta": d, **info}
        out.append(LemmaReport(name, {"sigma": sigma, "deltas": deltas}, n, float(worst), case))
    return out


def run_all(
    sigmas: Iterable[float] = DEFAULT_SIGMAS,
    deltas: Iterable[float] = DEFAULT_DELTAS,
    h1_caps: tuple[int, int] = (8, 12),
    a1_caps: tuple[int, int] = (6, 10),
    V_samples: int = 100,
    seed: int = 0,
) -> list[LemmaReport]:
    """Full suite for every ``sigma``."""
    deltas = list(deltas)
    out: list[LemmaReport] = []
    for s in sigmas:
        out.append(check_H1(*h1_caps, s))
        out.append(check_a1(*a1_caps, s, V_samples, seed))
        out.append(check_superadditivity(s))
        out.extend(check_scalar_bounds(s, deltas))
    return out
