"""Outer KAM iteration at finite truncation.

Each step eliminates the ``R0`` and ``R1`` parts of the perturbation with
the homological solver, moves the frequencies by the averaged ``R1`` part and
re-freezes the multiplier ``V*`` so that the modulated frequencies equal the
target ``omega`` again.  Every quantitative post-condition is recorded as a
:class:`BoundCheck`; failures are reported and never silently dropped.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .config import RHO0, RunConfig
from .hamiltonian import CompiledHamiltonian, Hamiltonian
from .homological import (
    NormalForm,
    SplitPerturbation,
    elimination_quantity,
    new_perturbation,
    normal_form_update,
    residual,
    solve_homological,
    split_perturbation,
)
from .index_core import SigmaParams, Truncation
from .nls import GevreyCoefficients, integrate, sextic_part, torus_diagnostics
from .norms import NormWeights, log_n3_constant, part_norm, seq_norm
from .small_divisors import DioParams, FrequencyVector, product_lower_bound, sample_omega, verify_diophantine

__all__ = [
    "ScheduleExhausted",
    "FreezeError",
    "KamSchedule",
    "StepParams",
    "BoundCheck",
    "KamState",
    "TorusResult",
    "freeze_frequency",
    "kam_step",
    "initial_state",
    "normalized_perturbation",
    "torus_profile",
    "first_order_V",
    "run",
]


class ScheduleExhausted(ValueError):
    """The schedule produced ``mu_s <= 0`` or ``rho_s >= r/2``."""


class FreezeError(ArithmeticError):
    """The frequency-freezing Newton solve failed or its precondition did not hold."""


@dataclass(frozen=True)
class StepParams:
    s: int
    delta: float
    rho: float
    mu: float
    eps: float
    lam: float
    eta: float
    d: float


@dataclass(frozen=True)
class KamSchedule:
    """Iteration parameters.

    ``delta_s = rho0 / ((s+4) ln^2(s+4))``, ``rho_{s+1} = rho_s + 3 delta_s``,
    ``mu_{s+1} = mu_s - 6 delta_s``, ``eps_s = eps0^{(3/2)^s}``,
    ``lambda_s = eps_s^{0.01}``, ``eta_{s+1} = lambda_s eta_s / 20`` and
    ``d_s = sum_{j=1}^{s} 1/(pi^2 j^2)``.
    """

    r: float
    mu0: float
    eps0: float
    gamma: float = 1.0
    sigma: float = 3.0
    eta0: float = 1.0
    rho0: float = RHO0

    def __post_init__(self):
        if self.r < 200 * self.rho0 * (1 - 1e-12):
            raise ValueError("r must be at least 200 rho0")
        if self.mu0 < 2 * self.r * (1 - 1e-12):
            raise ValueError("mu0 must be at least 2 r")
        if not 0 <= self.eps0 < 1:
            raise ValueError("eps0 must lie in [0, 1)")

    def delta(self, s: int) -> float:
        return self.rho0 / ((s + 4) * math.log(s + 4) ** 2)

    def _cum(self, s: int) -> float:
        return sum(self.delta(j) for j in range(s))

    def rho(self, s: int) -> float:
        return self.rho0 + 3 * self._cum(s)

    def mu(self, s: int) -> float:
        return self.mu0 - 6 * self._cum(s)

    def eps(self, s: int) -> float:
        return self.eps0 ** (1.5**s)

    def lam(self, s: int) -> float:
        return self.eps(s) ** 0.01

    def eta(self, s: int) -> float:
        out = self.eta0
        for j in range(s):
            out *= self.lam(j) / 20
        return out

    def d(self, s: int) -> float:
        return sum(1 / (math.pi**2 * j * j) for j in range(1, s + 1))

    def at(self, s: int) -> StepParams:
        """All per-step values; raises :class:`ScheduleExhausted` when invalid."""
        if s < 0:
            raise ValueError("s must be nonnegative")
        p = StepParams(s, self.delta(s), self.rho(s), self.mu(s), self.eps(s), self.lam(s), self.eta(s), self.d(s))
        if p.mu <= 0:
            raise ScheduleExhausted(f"mu_{s} = {p.mu} is not positive")
        if not self.rho(s + 1) < self.r / 2:
            raise ScheduleExhausted(f"rho_{s + 1} reaches r/2")
        return p

    def weights(self, s: int) -> NormWeights:
        return NormWeights(self.rho(s), self.mu(s), self.r, self.sigma)


@dataclass
class BoundCheck:
    """``lhs <= rhs``; advisory checks do not fail a run."""

    name: str
    lhs: float
    rhs: float
    ok: bool
    advisory: bool = False

    @classmethod
    def le(cls, name: str, lhs: float, rhs: float, advisory: bool = False) -> "BoundCheck":
        return cls(name, float(lhs), float(rhs), bool(lhs <= rhs), advisory)

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "ok": self.ok, "advisory": self.advisory}


@dataclass
class KamState:
    s: int
    N: NormalForm
    sp: SplitPerturbation
    Vstar: dict[int, float]
    shift_total: dict[int, float]
    history: list[dict] = field(default_factory=list)


@dataclass
class TorusResult:
    """Output of :func:`run`."""

    I0: dict[int, float]
    omega: dict[int, float]
    frequencies: dict[int, float]
    Vstar: dict[int, float]
    gamma: float
    eta0: float
    C_f: float
    steps: list[dict]
    final_norms: dict[str, float]
    checks: list[BoundCheck]
    diagnostics: dict | None = None

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks if not c.advisory)

    def failed(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.ok and not c.advisory]

    def to_json(self) -> dict:
        js = lambda d: {str(n): v for n, v in sorted(d.items())}
        return {
            "ok": self.ok,
            "I0": js(self.I0),
            "omega": js(self.omega),
            "frequencies": js(self.frequencies),
            "Vstar": js(self.Vstar),
            "gamma": self.gamma,
            "eta0": self.eta0,
            "C_f": self.C_f,
            "steps": self.steps,
            "final_norms": self.final_norms,
            "checks": [c.to_json() for c in self.checks],
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# frequency freezing


def _jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-7) -> np.ndarray:
    f0 = f(x)
    J = np.empty((len(f0), len(x)))
    for i in range(len(x)):
        xp = x.copy()
        xp[i] += h
        J[:, i] = (f(xp) - f0) / h
    return J


def freeze_frequency(
    Vtilde_map: Callable[[np.ndarray], np.ndarray],
    omega: np.ndarray,
    trust_radius: float,
    V0: np.ndarray | None = None,
    jac_tol: float | None = None,
    tol: float = 1e-14,
    max_iter: int = 50,
) -> np.ndarray:
    """Solve ``Vtilde_map(V) = omega`` by Newton's method.

    Parameters
    ----------
    Vtilde_map : callable
        Frequency map acting on arrays.
    omega : ndarray
        Target.
    trust_radius : float
        The solution must lie within this sup-distance of ``V0``.
    V0 : ndarray, optional
        Starting point (default ``omega``).
    jac_tol : float, optional
        When given, ``||dVtilde/dV - I||_inf < jac_tol`` is required at ``V0``.

    Raises
    ------
    FreezeError
        On a violated Jacobian precondition, on leaving the trust region or
        after ``max_iter`` iterations without convergence.
    """
    omega = np.asarray(omega, dtype=float)
    V = omega.copy() if V0 is None else np.asarray(V0, dtype=float).copy()
    start = V.copy()
    J = _jacobian(Vtilde_map, V)
    if jac_tol is not None:
        dev = np.max(np.sum(np.abs(J - np.eye(len(V))), axis=1))
        if not dev < jac_tol:
            raise FreezeError(f"Jacobian condition violated: ||J - I|| = {dev:.3e} >= {jac_tol:.3e}")
    scale = max(1.0, float(np.max(np.abs(omega)))) if len(omega) else 1.0
    for _ in range(max_iter):
        res = Vtilde_map(V) - omega
        if np.max(np.abs(res), initial=0.0) <= tol * scale:
            if np.max(np.abs(V - start), initial=0.0) > trust_radius:
                raise FreezeError("solution lies outside the trust radius")
            return V
        V = V - np.linalg.solve(J, res)
        if np.max(np.abs(V - start), initial=0.0) > trust_radius:
            raise FreezeError("Newton iterate left the trust radius")
        J = _jacobian(Vtilde_map, V)
    raise FreezeError(f"no convergence in {max_iter} iterations")


# ---------------------------------------------------------------------------
# setup helpers


def torus_profile(r: float, sigma: float, modes, factor: float = 0.75) -> dict[int, float]:
    """``I_n(0) = factor * exp(-2 r ln^sigma floor(n))``."""
    sp = SigmaParams.from_sigma(sigma)
    return {n: factor * math.exp(-2 * r * sp.L(n)) for n in modes}


def normalized_perturbation(
    cfg: RunConfig, trunc: Truncation, w: NormWeights
) -> tuple[GevreyCoefficients, Hamiltonian]:
    """Gevrey profile scaled so that the sextic part has plus-norm 1 at ``w``."""
    g = GevreyCoefficients.profile(cfg.sigma, cfg.mu_f, cfg.n_trunc, 1.0, cfg.r)
    P = Hamiltonian(sextic_part(g, trunc), trunc)
    nrm = split_perturbation(P).plus_norm(w)
    if not (nrm > 0 and math.isfinite(nrm)):
        raise ArithmeticError("sextic part has degenerate norm")
    return g.scaled(1 / nrm), P.scale(1 / nrm)


def first_order_V(
    P: Hamiltonian, omega: Mapping[int, float], eps: float, I0: Mapping[int, float]
) -> dict[int, float]:
    """``V = omega - shift`` with the first-order frequency shift of ``eps P`` at ``I0``."""
    sp = split_perturbation(P.scale(eps))
    sol = solve_homological(sp, {n: 0.0 for n in omega}, eliminate=lambda key, tag: key.is_averaged())
    _, rep = normal_form_update(NormalForm({n: n * n + w for n, w in omega.items()}), sol.avg0, sol.avg1, I0)
    return {n: w - rep.shift.get(n, 0.0) for n, w in omega.items()}


def _torus_points(r: float, sigma: float, modes, k: int, seed: int):
    rng = np.random.default_rng(seed)
    sp = SigmaParams.from_sigma(sigma)
    amp = np.array([math.sqrt(0.75) * math.exp(-r * sp.L(n)) for n in modes])
    return [amp * np.exp(2j * np.pi * rng.random(len(modes))) for _ in range(k)]


@dataclass
class _Context:
    sched: KamSchedule
    trunc: Truncation
    omega: dict[int, float]
    I0: dict[int, float]
    seed: int
    threads: int = 1


def _log_or_neg_inf(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def kam_step(state: KamState, ctx: _Context) -> tuple[KamState, dict, list[BoundCheck]]:
    """One KAM step: solve, transform, shift frequencies and re-freeze ``V*``.

    Returns
    -------
    (KamState, dict, list of BoundCheck)
        New state, a JSON-ready step report and the bound checks of the
        step (post-bounds at ``s + 1``).
    """
    sched, s = ctx.sched, state.s
    p, p1 = sched.at(s), sched.at(s + 1)
    w, w1 = sched.weights(s), sched.weights(s + 1)
    modes = list(ctx.trunc.modes())
    sig = SigmaParams.from_sigma(sched.sigma)
    t0 = time.perf_counter()

    checks: list[BoundCheck] = []
    norms_in = state.sp.norms(w)
    sp_in = state.sp
    if sp_in.is_zero():
        new_state = KamState(s + 1, state.N, sp_in, dict(state.Vstar), dict(state.shift_total), state.history)
        rep = {"s": s, "eps_s": p.eps, "norms": {**norms_in, "F0": 0.0, "F1": 0.0}, "norms_out": norms_in,
               "shift_max": 0.0, "residual": 0.0, "dropped_norm": 0.0, "n_eliminated": 0, "n_kept": 0}
        for name, val, rhs in (("R0_plus", 0.0, p1.eps), ("R1_plus", 0.0, p1.eps**0.6)):
            checks.append(BoundCheck.le(f"{name}[s={s + 1}]", val, rhs))
        rep["checks"] = [c.to_json() for c in checks]
        return new_state, rep, checks

    if p.eps > 0:
        limit = 2 * (s + 4) * math.log(s + 4) ** 2 / sched.rho0 * math.log(1 / sched.eps(s + 1))
    else:
        limit = math.inf
    elim = lambda key, tag: elimination_quantity(key, tag, sig) <= limit

    omega_fv = FrequencyVector(ctx.omega, "omega")
    sol = solve_homological(sp_in, omega_fv, gamma=sched.gamma, eliminate=elim)
    res = residual(state.N, sol, ctx.threads)
    in_max = max(sp_in.R0.max_abs(), sp_in.R1.max_abs(), 1e-300)
    checks.append(BoundCheck.le(f"residual[s={s}]", res, 1e-10 * in_max))

    alg = new_perturbation(state.N, sol, sp_in, threads=ctx.threads)
    N1, shift = normal_form_update(state.N, sol.avg0, sol.avg1, ctx.I0, s, sched.r, sched.sigma, sched.eps0)

    # frequency freezing: Vtilde_{s+1}(V) = V + accumulated shift
    tot = dict(state.shift_total)
    for m, v in shift.shift.items():
        tot[m] = tot.get(m, 0.0) + v
    S = np.array([tot.get(n, 0.0) for n in modes])
    om = np.array([ctx.omega[n] for n in modes])
    Vs_old = np.array([state.Vstar[n] for n in modes])
    Vs = freeze_frequency(lambda V: V + S, om, p.lam * p.eta / 10, V0=Vs_old, jac_tol=p1.d * sched.eps0**0.1)
    Vstar = {n: float(v) for n, v in zip(modes, Vs)}
    # modulated frequencies at V* equal omega again
    N_next = NormalForm({n: n * n + ctx.omega[n] for n in modes}, N1.constant)

    F = sol.F()
    F0n = part_norm(sol.F0, w.with_(rho=p.rho + p.delta, mu=p.mu - 2 * p.delta), 0)
    F1n = part_norm(sol.F1, w.with_(rho=p.rho + p.delta, mu=p.mu - 2 * p.delta), 1)
    lc = log_n3_constant(p.delta, sched.gamma, sched.sigma)
    for name, fn, rn in (("F0", F0n, norms_in["R0"]), ("F1", F1n, norms_in["R1"])):
        ok = fn == 0 or (rn > 0 and math.log(fn) <= lc + math.log(rn))
        checks.append(BoundCheck(f"{name}_solution[s={s}]", _log_or_neg_inf(fn), lc + _log_or_neg_inf(rn), ok))

    disp = 0.0
    if not F.is_zero():
        C = CompiledHamiltonian.from_hamiltonian(F, modes)
        I0a = np.array([ctx.I0[n] for n in modes])
        for q in _torus_points(sched.r, sched.sigma, modes, 2, ctx.seed + s):
            vf = C.vector_field(q, I0a)
            disp = max(disp, seq_norm(dict(zip(modes, vf)), w))
    checks.append(BoundCheck.le(f"displacement[s={s}]", disp, p.eps**0.5))
    checks.append(BoundCheck.le(f"Vtilde_drift[s={s}]", shift.shift_max, p.eps**0.5))
    checks.append(BoundCheck.le(f"Vstar_drift[s={s}]", float(np.max(np.abs(Vs - Vs_old), initial=0.0)), 2 * p.eps**0.5))
    if shift.log_bound is not None:
        checks.append(BoundCheck(f"shift_bound[s={s}]", _log_or_neg_inf(shift.shift_max), shift.log_bound, shift.ok))

    out = alg.sp
    norms_out = out.norms(w1)
    checks.append(BoundCheck.le(f"R0_plus[s={s + 1}]", norms_out["R0"], p1.eps))
    checks.append(BoundCheck.le(f"R1_plus[s={s + 1}]", norms_out["R1"], p1.eps**0.6))
    checks.append(BoundCheck.le(f"R2_plus[s={s + 1}]", norms_out["R2"], (1 + p1.d) * sched.eps0))
    if p.eps > 0:
        pb = product_lower_bound(s, sched)
        checks.append(BoundCheck(f"product_lower_bound[s={s}]", -pb.log_bound, -pb.log_lambda, pb.ok, advisory=True))
    checks.append(BoundCheck.le(f"dio_violations[s={s}]", sol.dio_violations, 0, advisory=True))

    rep = {
        "s": s,
        "eps_s": p.eps,
        "rho_s": p.rho,
        "mu_s": p.mu,
        "norms": {**norms_in, "F0": F0n, "F1": F1n},
        "norms_out": norms_out,
        "shift_max": shift.shift_max,
        "residual": res,
        "dropped_norm": alg.dropped_norm,
        "lie_terms": alg.terms_used,
        "lie_tail": alg.tail,
        "n_eliminated": len(sol.eliminated.R0) + len(sol.eliminated.R1),
        "n_kept": len(sol.kept.R0) + len(sol.kept.R1),
        "min_divisor": sol.min_divisor,
        "displacement": disp,
        "seconds": time.perf_counter() - t0,
        "checks": [c.to_json() for c in checks],
    }
    new_state = KamState(s + 1, N_next, out, Vstar, tot, state.history + [rep])
    return new_state, rep, checks


def initial_state(cfg: RunConfig, threads: int = 1):
    """Sample ``omega``, certify ``gamma`` and build the step-0 state."""
    modes = list(range(-cfg.n_trunc, cfg.n_trunc + 1))
    omega_fv = sample_omega(cfg.seed, cfg.n_trunc)
    sb, sz = cfg.gamma_budget
    rep = verify_diophantine(omega_fv, DioParams(1.0, min(sb, cfg.n_trunc), sz), threads=threads)
    gamma = 0.9 * rep.worst_ratio
    if not gamma > 0:
        raise ArithmeticError("sampled omega is resonant at the configured budget")
    eta0 = 1 - omega_fv.sup()
    sched = KamSchedule(cfg.r, cfg.mu0, cfg.eps0, gamma, cfg.sigma, eta0)
    w0 = sched.weights(0)
    trunc = Truncation(cfg.n_trunc, cfg.d_trunc, 1e-30, w0)
    g, P = normalized_perturbation(cfg, trunc, w0)
    omega = dict(omega_fv.V)
    sp = split_perturbation(P.scale(cfg.eps0)) if cfg.eps0 > 0 else SplitPerturbation.zero(trunc)
    N = NormalForm({n: n * n + omega[n] for n in modes})
    I0 = torus_profile(cfg.r, cfg.sigma, modes)
    ctx = _Context(sched, trunc, omega, I0, cfg.seed, threads)
    state = KamState(0, N, sp, dict(omega), {n: 0.0 for n in modes})
    return state, ctx, g


def run(
    cfg: RunConfig,
    threads: int = 1,
    simulate: bool = True,
    on_step: Callable[[dict], None] | None = None,
) -> TorusResult:
    """Run ``s_max`` KAM steps and (optionally) simulate the resulting torus.

    The simulation integrates the NLS with multiplier ``V*`` from the torus
    ``I_n(0) = (3/4) exp(-2 r ln^sigma floor(n))`` with seeded phases over
    ``[0, T]``, step ``dt``.
    """
    state, ctx, g = initial_state(cfg, threads)
    sched = ctx.sched
    checks: list[BoundCheck] = []
    w0 = sched.weights(0)
    n0 = state.sp.norms(w0)
    checks.append(BoundCheck.le("R0_plus[s=0]", n0["R0"], sched.eps(0) * (1 + 1e-12)))
    checks.append(BoundCheck.le("R1_plus[s=0]", n0["R1"], sched.eps(0) ** 0.6))
    checks.append(BoundCheck.le("R2_plus[s=0]", n0["R2"], sched.eps0 * (1 + 1e-12)))
    steps = []
    for _ in range(cfg.s_max):
        state, rep, ch = kam_step(state, ctx)
        checks.extend(ch)
        steps.append(rep)
        if on_step is not None:
            on_step(rep)
    drift = max(abs(state.Vstar[n] - ctx.omega[n]) for n in ctx.omega)
    checks.append(BoundCheck.le("Vstar_minus_omega", drift, sched.eps0**0.4 if sched.eps0 > 0 else 0.0))
    final = state.sp.norms(sched.weights(state.s))
    diag = None
    if simulate:
        modes = list(ctx.trunc.modes())
        q0 = _torus_points(sched.r, sched.sigma, modes, 1, cfg.seed)[0]
        traj = integrate(g, state.Vstar, cfg.eps0, q0, cfg.dt, cfg.T, cfg.n_trunc)
        d = torus_diagnostics(traj, ctx.I0, sched.r, sched.sigma, ctx.omega)
        diag = d.to_json()
        diag["energy_drift"] = float(np.max(np.abs(traj.energy - traj.energy[0])) / abs(traj.energy[0]))
        checks.append(BoundCheck("amplitude_band", float(len(d.band_violations)), 0.0, d.in_band))
    return TorusResult(
        dict(ctx.I0),
        dict(ctx.omega),
        {n: n * n + ctx.omega[n] for n in ctx.omega},
        dict(state.Vstar),
        sched.gamma,
        sched.eta0,
        g.C_f,
        steps,
        final,
        checks,
        diag,
    )
