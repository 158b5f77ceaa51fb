"""Finite-volume solver for the kinetic (Vlasov-Fokker-Planck) equation

    dF/dt + d/dtheta(omega F) + d/domega(A[F] F) = (sigma/m^2) d^2F/domega^2,
    A[F] = (1/m)(-omega + nu + kappa S[F]),
    S[F](theta) = int sin(theta* - theta) F dtheta* domega* dnu*.

F lives on cells (nu_k, theta_i, omega_j). The theta direction is periodic;
the omega window [nu_k - W, nu_k + W] is closed with zero total flux.
Integrals over nu are sums over the frequency nodes with the weights
folded into F, so a slice carries mass w_k.
"""
from dataclasses import dataclass, field
import math
import os

import numpy as np

from . import _backend
from . import snapshots
from .diagnostics import DiagnosticsSeries
from .model import MaxwellianCache, maxwellian_profile

LIMITERS = {"none": 0, "minmod": 1, "guarded-minmod": 2}


class KineticError(RuntimeError):
    pass


class InvalidProfileError(ValueError):
    pass


class CFLError(KineticError):
    """Time step above the advective stability bound."""

    def __init__(self, dt, max_dt):
        super().__init__(f"dt={dt:.6g} violates the advective CFL bound; use dt <= {max_dt:.6g}")
        self.dt = dt
        self.suggested_dt = max_dt


class DivergenceError(KineticError):
    """Non-finite values in the state; ``last_good`` holds the previous state."""

    def __init__(self, msg, t=None, last_good=None, series=None):
        super().__init__(msg)
        self.t = t
        self.last_good = last_good
        self.series = series


class PhaseSpaceGrid:
    """Uniform cells on [0, 2pi) x [nu_k - W, nu_k + W] for every frequency node."""

    def __init__(self, n_theta, n_omega, params, g, width=10.0):
        if int(n_theta) != n_theta or n_theta < 8 or n_theta % 2:
            raise ValueError(f"n_theta must be an even integer >= 8, got {n_theta}")
        if int(n_omega) != n_omega or n_omega < 32 or n_omega % 2:
            raise ValueError(f"n_omega must be an even integer >= 32, got {n_omega}")
        params.require_diffusion()
        self.n_theta = int(n_theta)
        self.n_omega = int(n_omega)
        self.params = params
        self.g = g
        self.n_nu = g.size
        self.width = float(width)
        self.W = self.width * params.thermal_speed
        self.dtheta = 2.0 * math.pi / self.n_theta
        self.domega = 2.0 * self.W / self.n_omega
        self.cell_volume = self.dtheta * self.domega
        self.theta = np.arange(self.n_theta) * self.dtheta
        nu = g.nodes[:, None]
        self.omega = nu - self.W + (np.arange(self.n_omega) + 0.5) * self.domega
        self.omega_faces = nu - self.W + np.arange(1, self.n_omega) * self.domega
        # nu - omega at interior faces: the linear part of m * A
        self.drift0 = np.ascontiguousarray(nu - self.omega_faces)
        self._cache = None

    @property
    def shape(self):
        return (self.n_nu, self.n_theta, self.n_omega)

    @property
    def cache(self):
        if self._cache is None:
            self._cache = MaxwellianCache(self.params, self.g, self.omega)
        return self._cache

    def refined(self, factor=2):
        return PhaseSpaceGrid(self.n_theta * factor, self.n_omega * factor,
                              self.params, self.g, self.width)

    def with_params(self, params):
        return PhaseSpaceGrid(self.n_theta, self.n_omega, params, self.g, self.width)

    # quadrature (cell midpoint)
    def mass(self, F):
        return float(F.sum() * self.cell_volume)

    def marginals(self, F):
        return F.sum(axis=(1, 2)) * self.cell_volume

    def density(self, F):
        """rho(theta) = sum over nu and omega."""
        return F.sum(axis=(0, 2)) * self.domega

    def first_mode(self, rho):
        """K1 = int e^{i theta} rho dtheta for a density on the theta cells."""
        return complex(np.dot(np.cos(self.theta), rho) * self.dtheta,
                       np.dot(np.sin(self.theta), rho) * self.dtheta)

    def coupling_from_density(self, rho):
        K1 = self.first_mode(rho)
        return K1.imag * np.cos(self.theta) - K1.real * np.sin(self.theta)

    def describe(self):
        return {"n_theta": self.n_theta, "n_omega": self.n_omega, "n_nu": self.n_nu,
                "width": self.width, "W": self.W, "dtheta": self.dtheta, "domega": self.domega}


@dataclass
class KineticState:
    grid: PhaseSpaceGrid
    F: np.ndarray
    t: float = 0.0

    def copy(self):
        return KineticState(self.grid, self.F.copy(), self.t)

    @property
    def mass(self):
        return self.grid.mass(self.F)

    @property
    def marginal_error(self):
        return float(np.max(np.abs(self.grid.marginals(self.F) - self.grid.g.weights)))


@dataclass
class Profile:
    """Initial law.

    kind: "maxwellian", "maxwellian-bump" (M(omega - shift) (1 + amplitude
    cos(mode (theta - phase)))) or "tabulated" (``table`` is an array of the
    grid shape or a callable (theta, omega, nu) -> values).
    """

    kind: str = "maxwellian"
    amplitude: float = 0.1
    mode: int = 1
    phase: float = 0.0
    shift: float = 0.0
    table: object = None


def init_from_profile(grid, profile):
    """Tabulate a profile and rescale each nu-slice to mass w_k.

    Returns (state, factors) with the per-slice normalization factors.
    """
    if isinstance(profile, dict):
        profile = Profile(**profile)
    th = grid.theta[None, :, None]
    om = grid.omega[:, None, :]
    nu = grid.g.nodes[:, None, None]
    w = grid.g.weights[:, None, None]
    if profile.kind == "maxwellian":
        F = np.broadcast_to(grid.cache.M[:, None, :], grid.shape).copy()
    elif profile.kind == "maxwellian-bump":
        if profile.shift == 0.0:
            M = grid.cache.M[:, None, :]
        else:
            M = maxwellian_profile(grid.params, om - profile.shift, nu, w)
        F = M * (1.0 + profile.amplitude * np.cos(profile.mode * (th - profile.phase)))
    elif profile.kind == "tabulated":
        table = profile.table
        if callable(table):
            F = np.asarray(table(th, om, nu), dtype=float)
            F = np.broadcast_to(F, grid.shape).copy()
        else:
            F = np.array(table, dtype=float)
        if F.shape != grid.shape:
            raise InvalidProfileError(f"tabulated profile shape {F.shape} != grid {grid.shape}")
    else:
        raise InvalidProfileError(f"unknown profile kind {profile.kind!r}")
    if not np.all(np.isfinite(F)):
        raise InvalidProfileError("profile has non-finite values")
    masses = grid.marginals(F)
    if np.any(masses <= 0.0):
        k = int(np.argmax(masses <= 0.0))
        raise InvalidProfileError(f"profile integrates to {masses[k]!r} on nu-slice {k}")
    factors = grid.g.weights / masses
    F *= factors[:, None, None]
    return KineticState(grid, np.ascontiguousarray(F), 0.0), factors


def coupling_field_kinetic(state_or_F, grid=None):
    """S(theta_i) = Im(K1 e^{-i theta_i}) from the first Fourier mode of rho."""
    if isinstance(state_or_F, KineticState):
        grid, F = state_or_F.grid, state_or_F.F
    else:
        F = state_or_F
    return grid.coupling_from_density(grid.density(F))


def order_parameter_kinetic(state):
    """(r, phi) of the kinetic density, r = |K1|."""
    K1 = state.grid.first_mode(state.grid.density(state.F))
    return abs(K1), math.atan2(K1.imag, K1.real) % (2.0 * math.pi)


class KineticSolver:
    """IMEX stepper bound to a grid.

    order=2 (default): Crank-Nicolson half step of the omega diffusion, a
    two-stage SSP Runge-Kutta step of transport and drift (S recomputed per
    stage), then another Crank-Nicolson half step.
    order=1: forward Euler transport/drift with A frozen at step start, then
    backward Euler diffusion.
    """

    def __init__(self, grid, limiter="guarded-minmod", order=2, threads=1, backend=None):
        if limiter not in LIMITERS:
            raise ValueError(f"unknown limiter {limiter!r}; choose from {sorted(LIMITERS)}")
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        self.grid = grid
        self.limiter = limiter
        self._lim = LIMITERS[limiter]
        self.order = order
        self.threads = max(1, int(threads))
        self.kernels = _backend.get_kernels(backend)
        p = grid.params
        self.inv_m = 1.0 / p.m
        self.kappa = p.kappa
        self.diff = p.sigma / p.m ** 2
        self.inv_dth = 1.0 / grid.dtheta
        self.inv_dom = 1.0 / grid.domega
        self.vel = np.ascontiguousarray(grid.omega)
        self.rows = grid.n_nu * grid.n_theta
        self.omega_max = float(np.max(np.abs(grid.omega)))
        self.drift_max = float(np.max(np.abs(grid.drift0)))
        self._factors = {}
        self._bt = np.empty(grid.shape)
        self._bw = np.empty(grid.shape)

    # pieces of the right-hand side
    def coupling(self, F):
        return self.grid.coupling_from_density(self.grid.density(F))

    def explicit_rhs(self, F, S=None):
        """-d/dtheta(omega F) - d/domega(A F), with A from S (computed if None)."""
        F = np.ascontiguousarray(F)
        if S is None:
            S = self.coupling(F)
        S = np.ascontiguousarray(S, dtype=float)
        k = self.kernels
        bt, bw = self._bt, self._bw
        _backend.parallel_ranges(
            lambda lo, hi: k.theta_rhs(F, self.vel, self.inv_dth, self._lim, bt, lo, hi),
            self.grid.n_omega, self.threads)
        F2 = F.reshape(self.rows, -1)
        bw2 = bw.reshape(self.rows, -1)
        nth = self.grid.n_theta
        _backend.parallel_ranges(
            lambda lo, hi: k.omega_rhs(F2, nth, self.grid.drift0, S, self.inv_m, self.kappa,
                                       self.inv_dom, self._lim, bw2, lo, hi),
            self.rows, self.threads)
        return bt + bw

    def laplacian(self, F):
        """Neumann second difference in omega divided by domega^2."""
        out = np.empty(self.grid.shape)
        F2 = np.ascontiguousarray(F).reshape(self.rows, -1)
        out2 = out.reshape(self.rows, -1)
        self.kernels.laplacian_update(F2, 1.0, out2, 0, self.rows)
        return (out - F) / self.grid.domega ** 2

    def rhs(self, F):
        """Full semi-discrete right-hand side."""
        return self.explicit_rhs(F) + self.diff * self.laplacian(F)

    # stability
    def max_drift(self, S):
        return self.inv_m * float(np.max(np.abs(self.grid.drift0[:, :, None]
                                                + self.kappa * S[None, None, :])))

    def cfl_limit(self, F=None, S=None):
        """0.9 min(dtheta / omega_max, domega / max|A|)."""
        if S is None:
            S = self.coupling(F) if F is not None else np.zeros(self.grid.n_theta)
        amax = self.max_drift(np.asarray(S))
        lim_t = self.grid.dtheta / self.omega_max
        lim_w = self.grid.domega / amax if amax > 0.0 else math.inf
        return 0.9 * min(lim_t, lim_w)

    def auto_dt(self, courant=0.4):
        """Step with summed Courant number ``courant`` for any admissible F.

        |S| <= total mass = 1, so |A| <= (max|nu - omega_face| + kappa) / m.
        """
        amax = self.inv_m * (self.drift_max + self.kappa)
        return courant / (self.omega_max / self.grid.dtheta + amax / self.grid.domega)

    # implicit diffusion
    def _factor(self, h):
        fac = self._factors.get(h)
        if fac is None:
            D = self.diff * h / self.grid.domega ** 2
            n = self.grid.n_omega
            diag = np.full(n, 1.0 + 2.0 * D)
            diag[0] = diag[-1] = 1.0 + D
            sub = -D
            cp = np.zeros(n)
            minv = np.empty(n)
            minv[0] = 1.0 / diag[0]
            cp[0] = sub * minv[0]
            for j in range(1, n):
                denom = diag[j] - sub * cp[j - 1]
                if not denom > 0.0:
                    raise KineticError("tridiagonal solve failed (non-positive pivot)")
                minv[j] = 1.0 / denom
                cp[j] = sub * minv[j]
            fac = (sub, cp, minv)
            if len(self._factors) > 8:
                self._factors.clear()
            self._factors[h] = fac
        return fac

    def _solve(self, R, h):
        sub, cp, minv = self._factor(h)
        out = np.empty(self.grid.shape)
        R2 = np.ascontiguousarray(R).reshape(self.rows, -1)
        out2 = out.reshape(self.rows, -1)
        k = self.kernels
        _backend.parallel_ranges(lambda lo, hi: k.thomas_solve(R2, sub, cp, minv, out2, lo, hi),
                                 self.rows, self.threads)
        return out

    def _explicit_diffusion(self, F, h):
        coef = self.diff * h / self.grid.domega ** 2
        out = np.empty(self.grid.shape)
        F2 = np.ascontiguousarray(F).reshape(self.rows, -1)
        out2 = out.reshape(self.rows, -1)
        k = self.kernels
        _backend.parallel_ranges(lambda lo, hi: k.laplacian_update(F2, coef, out2, lo, hi),
                                 self.rows, self.threads)
        return out

    def crank_nicolson(self, F, h):
        return self._solve(self._explicit_diffusion(F, 0.5 * h), 0.5 * h)

    def step(self, F, dt, check_cfl=True):
        """Advance F by dt; returns a new array."""
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        S = self.coupling(F)
        if check_cfl:
            lim = self.cfl_limit(S=S)
            if dt > lim * (1.0 + 1e-12):
                raise CFLError(dt, lim)
        if self.order == 1:
            return self._solve(F + dt * self.explicit_rhs(F, S), dt)
        F0 = self.crank_nicolson(F, 0.5 * dt)
        F1 = F0 + dt * self.explicit_rhs(F0)
        F2 = 0.5 * F0 + 0.5 * (F1 + dt * self.explicit_rhs(F1))
        return self.crank_nicolson(F2, 0.5 * dt)


def step_imex(state, dt, limiter="guarded-minmod", order=2, threads=1, solver=None):
    """One IMEX step of ``state``; returns a new KineticState."""
    solver = solver or KineticSolver(state.grid, limiter, order, threads)
    return KineticState(state.grid, solver.step(state.F, dt), state.t + dt)


def stationarity_residual(state, solver=None):
    """(L-infinity, L1) norms of the full discrete right-hand side at ``state``."""
    solver = solver or KineticSolver(state.grid)
    R = solver.rhs(state.F)
    return float(np.max(np.abs(R))), float(np.abs(R).sum() * state.grid.cell_volume)


@dataclass
class KineticRun:
    series: DiagnosticsSeries
    final: KineticState
    dt: float
    n_steps: int
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    macro: list = field(default_factory=list)
    diverged: bool = False


def plan_steps(t_end, diag_interval, dt_max):
    """(n_samples, steps_per_sample, dt) with an integer number of equal steps
    between samples and dt <= dt_max."""
    if t_end < 0.0:
        raise ValueError("t_end must be non-negative")
    if t_end == 0.0:
        return 0, 1, dt_max
    diag_interval = t_end if diag_interval is None or diag_interval <= 0 else diag_interval
    n_samples = max(1, int(round(t_end / diag_interval)))
    span = t_end / n_samples
    per = max(1, int(math.ceil(span / dt_max - 1e-9)))
    return n_samples, per, span / per


def sample_diagnostics(state, solver=None, perturbation=True, macro=None):
    """One diagnostics row (dict) for ``state``."""
    grid = state.grid
    F = state.F
    row = {
        "t": state.t,
        "mass": grid.mass(F),
        "marginal_err": state.marginal_error,
        "min_F": float(F.min()),
    }
    if macro is None:
        from .moments import compute_macro
        macro = compute_macro(state)
    row["M0"] = float(macro.rho.sum() * grid.dtheta)
    row["M1"] = float(macro.mom.sum() * grid.dtheta)
    row["r"] = abs(grid.first_mode(macro.rho))
    if perturbation:
        from . import perturbation as pt
        row.update(pt.norm_diagnostics(pt.to_perturbation(state), grid))
    return row


def run(state, t_end, dt=None, diag_interval=None, limiter="guarded-minmod", order=2,
        threads=1, perturbation=True, balance=True, keep_states=False,
        snapshot_interval=None, out_dir=None, courant=0.4):
    """Advance ``state`` to t_end and record diagnostics every diag_interval.

    ``dt`` is an upper bound (default: the summed-Courant step); the actual step
    divides the sampling interval evenly. Snapshots (KSKI files) are written
    to out_dir every ``snapshot_interval`` samples. Divergence raises
    DivergenceError after persisting the last good state.
    """
    from .moments import balance_residual_series, compute_macro

    grid = state.grid
    solver = KineticSolver(grid, limiter, order, threads)
    dt_max = solver.auto_dt(courant) if dt is None else float(dt)
    n_samples, per, dt = plan_steps(t_end, diag_interval, dt_max)
    # the guard uses the a-priori drift bound so it cannot trip mid-run
    limit = 0.9 * min(grid.dtheta / solver.omega_max,
                      grid.domega / (solver.inv_m * (solver.drift_max + solver.kappa)))
    if dt > limit * (1.0 + 1e-12):
        raise CFLError(dt, limit)

    series = DiagnosticsSeries()
    result = KineticRun(series, state, dt, 0)
    t0 = state.t
    F = np.ascontiguousarray(state.F, dtype=float)
    cur = KineticState(grid, F, t0)

    def record(s):
        mac = compute_macro(s)
        series.append(**sample_diagnostics(s, solver, perturbation, mac))
        result.times.append(s.t)
        result.macro.append(mac)
        if keep_states:
            result.states.append(s.copy())

    def snapshot(s, name):
        if out_dir is not None:
            p = grid.params
            snapshots.write_kinetic(os.path.join(out_dir, name), s.F, grid.g.nodes,
                                    grid.g.weights, p.m, p.kappa, p.sigma, s.t)

    record(cur)
    if snapshot_interval:
        snapshot(cur, "snapshot_000000.kski")
    step_count = 0
    try:
        for n in range(1, n_samples + 1):
            for _ in range(per):
                Fn = solver.step(F, dt, check_cfl=False)
                step_count += 1
                if not math.isfinite(float(Fn.sum())):
                    snapshot(cur, "last_good.kski")
                    result.diverged = True
                    raise DivergenceError(f"non-finite F at step {step_count}",
                                          t=t0 + step_count * dt, last_good=cur, series=series)
                F = Fn
                cur = KineticState(grid, F, t0 + step_count * dt)
            record(cur)
            if snapshot_interval and n % snapshot_interval == 0:
                snapshot(cur, f"snapshot_{n:06d}.kski")
    finally:
        result.final = cur
        result.n_steps = step_count
        if balance and len(result.macro) >= 3 and not result.diverged:
            res = balance_residual_series(result.macro, grid, grid.params, result.times)
            for name, vals in res.items():
                for i, v in enumerate(vals, start=1):
                    series.set(i, name, v)
    return result
