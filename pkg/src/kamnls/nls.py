"""Reference dynamics of the truncated quintic NLS.

The Fourier-mode system is the flow ``dq_n/dt = i dH/dconj(q_n)`` of

    H = sum (n^2 + V_n) |q_n|^2 + eps mean_x( f |u|^6 ),   u = sum q_n e^{inx},

which is ``dq_n/dt = i (n^2 + V_n) q_n + 3 i eps P_N[f |u|^4 u]_n``.  It is
integrated with Strang splitting: exact rotation for the quadratic part and
RK4 in physical space for the sextic part.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Mapping

import numpy as np

from .hamiltonian import Hamiltonian
from .index_core import MonomialKey, MultiIndex, SigmaParams, Truncation
from .small_divisors import FrequencyVector

__all__ = [
    "GevreyCoefficients",
    "Trajectory",
    "BlowupError",
    "build_nls_hamiltonian",
    "sextic_part",
    "grid_size",
    "integrate",
    "energy",
    "torus_diagnostics",
]


class BlowupError(ArithmeticError):
    """Non-finite state during integration."""

    def __init__(self, t_last: float):
        super().__init__(f"non-finite state after t = {t_last:.6g}")
        self.t_last = t_last


@dataclass(frozen=True)
class GevreyCoefficients:
    """Fourier coefficients ``fhat(n)`` with ``|fhat(n)| <= C_f exp(-mu_f ln^sigma |n|)``.

    ``ln^sigma |n|`` is read as 0 for ``|n| <= 1``.
    """

    fhat: Mapping[int, complex]
    mu_f: float
    C_f: float
    sigma: float = 3.0

    def __post_init__(self):
        if not (self.mu_f > 0 and self.C_f > 0):
            raise ValueError("mu_f and C_f must be positive")
        for n, v in self.fhat.items():
            lim = self.C_f * math.exp(-self.mu_f * math.log(max(1, abs(n))) ** self.sigma)
            if abs(v) > lim * (1 + 1e-12):
                raise ValueError(f"fhat({n}) exceeds the Gevrey envelope")
        object.__setattr__(self, "fhat", {int(n): complex(v) for n, v in sorted(self.fhat.items()) if v != 0})

    @classmethod
    def profile(cls, sigma: float, mu_f: float, n_max: int, C_f: float = 1.0, r: float | None = None):
        """``fhat(n) = C_f exp(-mu_f ln^sigma floor(n))`` for ``|n| <= n_max``.

        If ``r`` is given, ``mu_f > 2 r`` is enforced.
        """
        if r is not None and not mu_f > 2 * r:
            raise ValueError("mu_f must exceed 2 r")
        sp = SigmaParams.from_sigma(sigma)
        vals = {n: C_f * math.exp(-mu_f * sp.L(n)) for n in range(-n_max, n_max + 1)}
        return cls(vals, mu_f, C_f, sigma)

    @classmethod
    def constant(cls, value: float = 1.0, sigma: float = 3.0) -> "GevreyCoefficients":
        """``f`` identically equal to ``value``."""
        return cls({0: value}, 1.0, abs(value), sigma)

    def scaled(self, s: float) -> "GevreyCoefficients":
        return GevreyCoefficients({n: s * v for n, v in self.fhat.items()}, self.mu_f, self.C_f * abs(s), self.sigma)

    def __call__(self, n: int) -> complex:
        return self.fhat.get(n, 0j)

    def on_grid(self, x: np.ndarray) -> np.ndarray:
        """``f(x) = sum fhat(n) e^{inx}`` by direct summation."""
        out = np.zeros_like(x, dtype=complex)
        for n, v in self.fhat.items():
            out += v * np.exp(1j * n * x)
        return out


def _multisets(modes, size: int):
    """Multisets of ``size`` modes with ``(momentum, multinomial, MultiIndex)``."""
    out = []
    fact = math.factorial(size)
    for combo in combinations_with_replacement(modes, size):
        d: dict[int, int] = {}
        for n in combo:
            d[n] = d.get(n, 0) + 1
        mult = fact
        for e in d.values():
            mult //= math.factorial(e)
        out.append((sum(combo), mult, MultiIndex.from_dict(d)))
    return out


def sextic_part(fhat: GevreyCoefficients, trunc: Truncation) -> dict[MonomialKey, complex]:
    """Coefficients of ``sum fhat(n) q q* q q* q q*`` over ``n1 - n2 + ... - n6 = -n``.

    Ordered tuples are grouped by the multiset of ``q`` modes and of
    ``conj(q)`` modes; each group has ``(3!/prod k!)(3!/prod k'!)`` tuples.
    """
    ms = _multisets(list(trunc.modes()), 3)
    by_mom: dict[int, list] = defaultdict(list)
    for m, c, mi in ms:
        by_mom[m].append((c, mi))
    terms: dict[MonomialKey, complex] = {}
    for mk, ks in by_mom.items():
        for n, fv in fhat.fhat.items():
            # momentum(k, k') = mk - mkp = -n
            kps = by_mom.get(mk + n)
            if not kps:
                continue
            for ck, k in ks:
                for ckp, kp in kps:
                    key = MonomialKey(MultiIndex(), k, kp)
                    terms[key] = terms.get(key, 0j) + fv * ck * ckp
    return terms


def build_nls_hamiltonian(
    fhat: GevreyCoefficients,
    V: FrequencyVector | Mapping[int, float],
    eps: float,
    trunc: Truncation,
) -> Hamiltonian:
    """Truncated NLS Hamiltonian ``sum (n^2 + V_n)|q_n|^2 + eps * sextic``."""
    get = V.__getitem__ if isinstance(V, FrequencyVector) else (lambda n: V.get(n, 0.0))
    terms: dict[MonomialKey, complex] = {}
    for n in trunc.modes():
        w = n * n + get(n)
        if w != 0:
            terms[MonomialKey.make(k={n: 1}, kp={n: 1})] = complex(w)
    if eps != 0:
        for key, c in sextic_part(fhat, trunc).items():
            terms[key] = terms.get(key, 0j) + eps * c
    return Hamiltonian(terms, trunc)


# ---------------------------------------------------------------------------
# split-step integrator


def grid_size(n_trunc: int) -> int:
    """Smallest power of two at least ``4 (2 n_trunc + 1)``."""
    m = 4 * (2 * n_trunc + 1)
    return 1 << (m - 1).bit_length()


class _Grid:
    def __init__(self, fhat: GevreyCoefficients, n_trunc: int):
        self.N = n_trunc
        self.M = grid_size(n_trunc)
        self.modes = np.arange(-n_trunc, n_trunc + 1)
        self.idx = self.modes % self.M
        x = 2 * np.pi * np.arange(self.M) / self.M
        self.f = fhat.on_grid(x)

    def to_phys(self, q: np.ndarray) -> np.ndarray:
        Q = np.zeros(self.M, dtype=complex)
        Q[self.idx] = q
        return np.fft.ifft(Q) * self.M

    def to_modes(self, g: np.ndarray) -> np.ndarray:
        return np.fft.fft(g)[self.idx] / self.M

    def nonlinear(self, q: np.ndarray, eps: float) -> np.ndarray:
        u = self.to_phys(q)
        a2 = (u * u.conj()).real
        return 3j * eps * self.to_modes(self.f * a2 * a2 * u)

    def sextic(self, q: np.ndarray) -> float:
        u = self.to_phys(q)
        a2 = (u * u.conj()).real
        return float(np.mean(self.f * a2**3).real)


@dataclass
class Trajectory:
    """Sampled solution with conserved-quantity diagnostics."""

    times: np.ndarray
    states: np.ndarray
    modes: np.ndarray
    energy: np.ndarray
    l2: np.ndarray
    momentum: np.ndarray

    @property
    def actions(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def to_csv(self, path) -> None:
        cols = ["t"]
        for n in self.modes:
            cols += [f"re_q{n}", f"im_q{n}"]
        data = np.empty((len(self.times), 1 + 2 * len(self.modes)))
        data[:, 0] = self.times
        data[:, 1::2] = self.states.real
        data[:, 2::2] = self.states.imag
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def _as_array(q0, n_trunc: int) -> np.ndarray:
    if isinstance(q0, np.ndarray):
        return q0.astype(complex)
    q = q0.q if hasattr(q0, "q") else q0
    return np.array([complex(q.get(n, 0.0)) for n in range(-n_trunc, n_trunc + 1)])


def energy(q: np.ndarray, fhat: GevreyCoefficients, V: np.ndarray, eps: float, n_trunc: int, _grid=None) -> float:
    """``sum (n^2 + V_n)|q_n|^2 + eps mean_x(f |u|^6)``."""
    modes = np.arange(-n_trunc, n_trunc + 1)
    lin = float(np.sum((modes**2 + V) * np.abs(q) ** 2))
    if eps == 0:
        return lin
    g = _grid or _Grid(fhat, n_trunc)
    return lin + eps * g.sextic(q)


def integrate(
    fhat: GevreyCoefficients,
    V: FrequencyVector | Mapping[int, float] | np.ndarray,
    eps: float,
    q0,
    dt: float,
    T: float,
    n_trunc: int,
    sample_every: int = 1,
) -> Trajectory:
    """Strang split-step integration of the truncated flow.

    Parameters
    ----------
    q0 : PhasePoint, mapping or array
        Initial mode amplitudes on ``|n| <= n_trunc``.
    dt, T : float
        Step and final time; ``round(T / dt)`` steps are taken.
    sample_every : int
        Store every ``sample_every``-th step (the first and last are kept).

    Raises
    ------
    ValueError
        If ``dt (n_trunc^2 + 1) >= 0.5``.
    BlowupError
        On a non-finite state.
    """
    if not dt * (n_trunc**2 + 1) < 0.5:
        raise ValueError("dt too large for the linear phase: need dt (N^2 + 1) < 0.5")
    modes = np.arange(-n_trunc, n_trunc + 1)
    if isinstance(V, np.ndarray):
        Varr = V.astype(float)
    else:
        get = V.__getitem__ if isinstance(V, FrequencyVector) else (lambda n: V.get(n, 0.0))
        Varr = np.array([get(int(n)) for n in modes], dtype=float)
    lam = modes**2 + Varr
    half = np.exp(0.5j * lam * dt)
    grid = _Grid(fhat, n_trunc)
    q = _as_array(q0, n_trunc)
    steps = int(round(T / dt))

    def rk4(q):
        k1 = grid.nonlinear(q, eps)
        k2 = grid.nonlinear(q + 0.5 * dt * k1, eps)
        k3 = grid.nonlinear(q + 0.5 * dt * k2, eps)
        k4 = grid.nonlinear(q + dt * k3, eps)
        return q + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    times, states = [0.0], [q.copy()]
    if eps == 0:
        # exact rotation; repeated multiplication would drift |q| by ~steps * 1e-16
        q0a = q
        for i in range(sample_every, steps + 1, sample_every):
            times.append(i * dt)
        if times[-1] != steps * dt and steps:
            times.append(steps * dt)
        states = [q0a * np.exp(1j * lam * t) for t in times]
        steps = 0
    for i in range(1, steps + 1):
        q = half * q
        if eps != 0:
            q = rk4(q)
        q = half * q
        if not np.all(np.isfinite(q)):
            raise BlowupError((i - 1) * dt)
        if i % sample_every == 0 or i == steps:
            times.append(i * dt)
            states.append(q.copy())
    S = np.array(states)
    E = np.array([energy(s, fhat, Varr, eps, n_trunc, grid) for s in S])
    act = np.abs(S) ** 2
    return Trajectory(np.array(times), S, modes, E, act.sum(axis=1), act @ modes)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class TorusDiagnostics:
    action_deviation: dict[int, float]
    max_action_deviation: float
    in_band: bool
    band_violations: list[int]
    frequencies: dict[int, float]
    frequency_error: dict[int, float] = field(default_factory=dict)
    max_frequency_error: float | None = None

    def to_json(self) -> dict:
        return {
            "action_deviation": {str(n): v for n, v in self.action_deviation.items()},
            "max_action_deviation": self.max_action_deviation,
            "in_band": self.in_band,
            "band_violations": self.band_violations,
            "frequencies": {str(n): v for n, v in self.frequencies.items()},
            "frequency_error": {str(n): v for n, v in self.frequency_error.items()},
            "max_frequency_error": self.max_frequency_error,
        }


def measured_frequencies(traj: Trajectory) -> dict[int, float]:
    """Least-squares slope of the unwrapped phase of every nonzero mode."""
    out = {}
    for j, n in enumerate(traj.modes):
        z = traj.states[:, j]
        if np.all(np.abs(z) > 0):
            ph = np.unwrap(np.angle(z))
            out[int(n)] = float(np.polyfit(traj.times, ph, 1)[0])
    return out


def torus_diagnostics(
    traj: Trajectory,
    I0_profile: Mapping[int, float] | None,
    r: float,
    sigma: float,
    omega: Mapping[int, float] | FrequencyVector | None = None,
) -> TorusDiagnostics:
    """Action drift, amplitude band ``[1/4, 4] e^{-2 r L(n)}`` and rotation frequencies.

    Action deviations are relative to ``I0_profile`` when given, otherwise
    to the initial actions of ``traj``.  Frequencies are compared with
    ``n^2 + omega_n`` when ``omega`` is given.
    """
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    sp = SigmaParams.from_sigma(sigma)
    act = traj.actions
    dev, viol = {}, []
    for j, n in enumerate(traj.modes):
        n = int(n)
        ref = I0_profile.get(n, act[0, j]) if I0_profile is not None else act[0, j]
        dev[n] = float(np.max(np.abs(act[:, j] - ref)) / ref) if ref > 0 else 0.0
        env = math.exp(-2 * r * sp.L(n))
        if np.any(act[:, j] < 0.25 * env) or np.any(act[:, j] > 4 * env):
            viol.append(n)
    freqs = measured_frequencies(traj)
    ferr = {}
    if omega is not None:
        get = omega.__getitem__ if isinstance(omega, FrequencyVector) else (lambda n: omega.get(n, 0.0))
        ferr = {n: abs(w - (n * n + get(n))) for n, w in freqs.items()}
    return TorusDiagnostics(
        dev,
        max(dev.values(), default=0.0),
        not viol,
        viol,
        freqs,
        ferr,
        max(ferr.values()) if ferr else None,
    )
