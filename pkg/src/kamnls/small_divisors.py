"""Small divisors, Diophantine lower bounds and KAM-step truncation thresholds."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .index_core import MultiIndex

__all__ = [
    "RESONANCE_FLOOR",
    "FrequencyVector",
    "DioParams",
    "DioReport",
    "divisor",
    "dist_to_int",
    "dio_lower_bound",
    "solver_lower_bound",
    "verify_diophantine",
    "enumerate_signed",
    "sample_omega",
    "truncation_threshold",
    "product_lower_bound",
    "log_product_bound",
]

RESONANCE_FLOOR = 1e-14


@dataclass(frozen=True)
class FrequencyVector:
    """Real frequencies indexed by mode.

    ``role`` is one of ``"V"`` (raw multiplier), ``"Vtilde"`` (modulated) or
    ``"omega"`` (target).  Targets must satisfy ``sup |omega_n| <= 1`` and
    modulated values ``|Vtilde_n| <= 2``.
    """

    V: Mapping[int, float]
    role: str = "V"

    def __post_init__(self):
        if self.role not in ("V", "Vtilde", "omega"):
            raise ValueError(f"unknown role {self.role!r}")
        cap = {"omega": 1.0, "Vtilde": 2.0}.get(self.role)
        if cap is not None and any(abs(v) > cap for v in self.V.values()):
            raise ValueError(f"{self.role} entries must satisfy |v| <= {cap}")
        object.__setattr__(self, "V", dict(sorted((int(n), float(v)) for n, v in self.V.items())))

    def __getitem__(self, n: int) -> float:
        return self.V.get(n, 0.0)

    def sup(self) -> float:
        return max((abs(v) for v in self.V.values()), default=0.0)

    def as_role(self, role: str) -> "FrequencyVector":
        return FrequencyVector(self.V, role)

    def to_array(self, modes) -> np.ndarray:
        return np.array([self[n] for n in modes])


@dataclass(frozen=True)
class DioParams:
    """Diophantine constant and enumeration budget."""

    gamma: float
    support_bound: int = 1
    size_bound: int = 1

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.support_bound < 0 or self.size_bound < 1:
            raise ValueError("budget must have support_bound >= 0 and size_bound >= 1")


def divisor(k: MultiIndex, kp: MultiIndex, V: FrequencyVector | Mapping[int, float]) -> float:
    """``sum_n (k_n - k'_n)(n^2 + V_n)``."""
    get = V.__getitem__ if isinstance(V, FrequencyVector) else (lambda n: V.get(n, 0.0))
    # net exponents first so that k = k' gives exactly zero
    net = dict(k.items)
    for n, e in kp.items:
        net[n] = net.get(n, 0) - e
    s = 0.0
    for n, d in net.items():
        if d:
            s += d * (n * n + get(n))
    return s


def dist_to_int(x: float) -> float:
    return abs(x - round(x))


def _bracket(n: int) -> int:
    return max(1, abs(n))


def dio_lower_bound(l: Mapping[int, int], p: DioParams) -> float:
    """``gamma prod_n 1 / (1 + l_n^2 <n>^4)`` with ``<n> = max(1, |n|)``.

    Raises
    ------
    ValueError
        If ``l`` is zero.
    """
    if not any(l.values()):
        raise ValueError("l must be nonzero")
    out = p.gamma
    for n, v in l.items():
        if v:
            out /= 1.0 + v * v * _bracket(n) ** 4
    return out


def solver_lower_bound(k: MultiIndex, kp: MultiIndex, gamma: float) -> float:
    """Absolute-value form used inside the solver: ``(gamma/2) prod 1/(1 + l_n^2 <n>^4)``, ``l = k - k'``."""
    l = k.as_dict()
    for n, e in kp.items:
        l[n] = l.get(n, 0) - e
    out = gamma / 2
    for n, v in l.items():
        if v:
            out /= 1.0 + v * v * _bracket(n) ** 4
    return out


def enumerate_signed(modes: list[int], size: int) -> Iterator[dict[int, int]]:
    """All nonzero integer vectors on ``modes`` with ``sum |l_n| <= size``.

    Vectors are produced grouped by their smallest supported mode, in the
    order of ``modes``.
    """

    def rec(i: int, budget: int, cur: dict[int, int]):
        if i == len(modes):
            yield dict(cur)
            return
        yield from rec(i + 1, budget, cur)
        n = modes[i]
        for mag in range(1, budget + 1):
            for sgn in (1, -1):
                cur[n] = sgn * mag
                yield from rec(i + 1, budget - mag, cur)
            del cur[n]

    for lead, n in enumerate(modes):
        for mag in range(1, size + 1):
            for sgn in (1, -1):
                yield from rec(lead + 1, size - mag, {n: sgn * mag})


@dataclass
class DioReport:
    """Outcome of :func:`verify_diophantine`."""

    ok: bool
    worst_ratio: float
    worst_l: dict[int, int]
    count_checked: int
    partial: bool = False

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "worst_ratio": self.worst_ratio,
            "worst_l": {str(n): v for n, v in sorted(self.worst_l.items())},
            "count_checked": self.count_checked,
            "partial": self.partial,
        }


def _scan(omega: FrequencyVector, p: DioParams, modes: list[int], lead: int, budget: int | None):
    best = (math.inf, ())
    count = 0
    sub = modes[lead:]

    def rec(i, rem, cur, acc):
        nonlocal best, count
        if budget is not None and count >= budget:
            return
        if i == len(sub):
            count += 1
            key = tuple(sorted(cur.items()))
            ratio = dist_to_int(acc) / dio_lower_bound(cur, p)
            if (ratio, key) < best:
                best = (ratio, key)
            return
        rec(i + 1, rem, cur, acc)
        n = sub[i]
        for mag in range(1, rem + 1):
            for sgn in (1, -1):
                cur[n] = sgn * mag
                rec(i + 1, rem - mag, cur, acc + sgn * mag * omega[n])
            del cur[n]

    n0 = sub[0]
    for mag in range(1, p.size_bound + 1):
        for sgn in (1, -1):
            rec(1, p.size_bound - mag, {n0: sgn * mag}, sgn * mag * omega[n0])
    return best, count


def verify_diophantine(
    omega: FrequencyVector,
    p: DioParams,
    budget: int | None = None,
    threads: int = 1,
) -> DioReport:
    """Check ``||sum l_n omega_n|| >= dio_lower_bound(l)`` over the budget.

    Enumerates every nonzero ``l`` supported in ``|n| <= support_bound`` with
    ``sum |l_n| <= size_bound``.  The work is partitioned by the smallest
    supported mode; the reduction is a deterministic minimum on
    ``(ratio, l)``.

    Parameters
    ----------
    budget : int, optional
        Maximum vectors per partition.  When hit, the report is flagged
        ``partial``.
    """
    modes = list(range(-p.support_bound, p.support_bound + 1))
    leads = range(len(modes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda i: _scan(omega, p, modes, i, budget), leads))
    else:
        parts = [_scan(omega, p, modes, i, budget) for i in leads]
    best = min(b for b, _ in parts)
    count = sum(c for _, c in parts)
    partial = budget is not None and any(c >= budget for _, c in parts)
    ratio, key = best
    return DioReport(ratio >= 1.0, ratio, dict(key), count, partial)


def sample_omega(seed: int, n_trunc: int) -> FrequencyVector:
    """Target frequencies ``omega_n`` i.i.d. uniform on ``(-1, 1)``."""
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-1.0, 1.0, size=2 * n_trunc + 1)
    return FrequencyVector({n: float(v) for n, v in zip(range(-n_trunc, n_trunc + 1), vals)}, "omega")


# ---------------------------------------------------------------------------
# truncation thresholds


@dataclass(frozen=True)
class Threshold:
    B: float
    N: int | float
    M: int | float


def _ceil(x: float) -> int | float:
    return math.ceil(x) if math.isfinite(x) else math.inf


def truncation_threshold(s: int, schedule) -> Threshold:
    """``B_s``, ``N_s`` and ``M_s`` for step ``s``.

    ``B_s = 3 4^sigma (2 (s+4) ln^2(s+4) / rho0) ln(1/eps_{s+1})``,
    ``N_s = ceil(exp(B_s^{1/sigma}))`` and
    ``M_s = ceil(B_s^{(sigma-1)/sigma} / ln^sigma B_s)``.  ``N_s`` is
    ``inf`` when it does not fit in a double.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    sig = schedule.sigma
    B = 3 * 4**sig * (2 * (s + 4) * math.log(s + 4) ** 2 / schedule.rho0) * math.log(1 / schedule.eps(s + 1))
    if B <= 0:
        return Threshold(B, 1, 0)
    try:
        N = _ceil(math.exp(B ** (1 / sig)))
    except OverflowError:
        N = math.inf
    lb = math.log(B)
    M = _ceil(B ** ((sig - 1) / sig) / lb**sig) if lb > 0 else math.inf
    return Threshold(B, N, M)


def log_product_bound(B: float, sigma: float) -> float:
    """log of ``exp{-100 B (ln B)^{1-sigma}}``; requires ``B > 1``."""
    if B <= 1:
        raise ValueError("B must exceed 1")
    return -100 * B * math.log(B) ** (1 - sigma)


@dataclass(frozen=True)
class ProductBound:
    log_bound: float
    log_lambda: float
    margin: float
    ok: bool


def product_lower_bound(s: int, schedule) -> ProductBound:
    """Compare ``exp{-100 B_s (ln B_s)^{1-sigma}}`` with ``lambda_s = eps_s^{0.01}``.

    The margin is the difference of logarithms; a nonpositive margin means
    ``eps0`` is not small enough for this ``sigma``.
    """
    B = truncation_threshold(s, schedule).B
    lam = 0.01 * math.log(schedule.eps(s))
    if B <= 1:
        return ProductBound(math.nan, lam, math.nan, False)
    lb = log_product_bound(B, schedule.sigma)
    margin = lb - lam
    return ProductBound(lb, lam, margin, margin > 0)
