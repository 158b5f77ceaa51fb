"""Macroscopic observables of F, the local balance laws and the q = 0 hydro model.

With raw omega-moments m_n = int omega^n F domega dnu and
nu-moments n_0 = int nu F, n_1 = int nu omega F the balance laws read

    d_t m0 + d_theta m1 = 0
    d_t m1 + d_theta m2 = (1/m)(-m1 + n0 + kappa S rho)
    d_t m2/2 + d_theta m3/2 = sigma rho / m^2 - (1/m)(m2 - n1 - kappa S m1)

where m2 = p + rho u^2 and m3/2 = q + 3pu/2 + rho u^3/2. For identical
oscillators at nu = 0 the n-terms vanish.
"""
from dataclasses import dataclass
import math

import numpy as np

RHO_FLOOR = 1e-14


class InsufficientDataError(ValueError):
    pass


class HydroError(RuntimeError):
    pass


@dataclass
class MacroFields:
    """Per-theta-cell moments. Derived fields are NaN where ``flagged``."""

    rho: np.ndarray
    mom: np.ndarray      # rho u
    energy: np.ndarray   # int omega^2/2 F = rho (e + u^2/2)
    u: np.ndarray
    e: np.ndarray
    p: np.ndarray
    q: np.ndarray
    m2: np.ndarray       # int omega^2 F = p + rho u^2
    m3: np.ndarray       # int omega^3 F
    nu_rho: np.ndarray   # int nu F
    nu_mom: np.ndarray   # int nu omega F
    flagged: np.ndarray

    @property
    def n_flagged(self):
        return int(self.flagged.sum())


def compute_macro(state, rho_floor=RHO_FLOOR):
    """Moments of a kinetic state, summed over the frequency nodes."""
    grid = state.grid
    F = state.F
    om = grid.omega[:, None, :]
    nu = grid.g.nodes[:, None, None]
    dw = grid.domega
    rho = F.sum(axis=(0, 2)) * dw
    mom = (om * F).sum(axis=(0, 2)) * dw
    m2 = (om ** 2 * F).sum(axis=(0, 2)) * dw
    m3 = (om ** 3 * F).sum(axis=(0, 2)) * dw
    nu_rho = (nu * F).sum(axis=(0, 2)) * dw
    nu_mom = (nu * om * F).sum(axis=(0, 2)) * dw
    flagged = rho < rho_floor
    safe = np.where(flagged, 1.0, rho)
    u = np.where(flagged, np.nan, mom / safe)
    uu = np.where(flagged, 0.0, u)[None, :, None]
    p = ((om - uu) ** 2 * F).sum(axis=(0, 2)) * dw
    q = 0.5 * ((om - uu) ** 3 * F).sum(axis=(0, 2)) * dw
    p = np.where(flagged, np.nan, p)
    q = np.where(flagged, np.nan, q)
    e = np.where(flagged, np.nan, 0.5 * p / safe)
    return MacroFields(rho, mom, 0.5 * m2, u, e, p, q, m2, m3, nu_rho, nu_mom, flagged)


def _ddt_centered(series, times):
    t = np.asarray(times, dtype=float)
    if len(t) < 3:
        raise InsufficientDataError("need at least 3 snapshots")
    steps = np.diff(t)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
        raise InsufficientDataError("snapshots must be at a uniform cadence")
    arr = np.asarray(series)
    return (arr[2:] - arr[:-2]) / (2.0 * steps[0])


def _ddtheta(x, dtheta):
    return (np.roll(x, -1, axis=-1) - np.roll(x, 1, axis=-1)) / (2.0 * dtheta)


def balance_residual_fields(macros, grid, params, times):
    """Residual of each balance law at interior snapshots, shape (n_t - 2, n_theta).

    Time and theta derivatives are centered differences; the coupling
    field comes from the first Fourier mode of each snapshot's rho.
    Cells flagged in any of the three snapshots involved are set to NaN.
    """
    if len(macros) < 3:
        raise InsufficientDataError("balance residuals need at least 3 snapshots")
    m, kappa, sigma = params.m, params.kappa, params.sigma
    rho = np.array([mf.rho for mf in macros])
    m1 = np.array([mf.mom for mf in macros])
    m2 = np.array([mf.m2 for mf in macros])
    m3 = np.array([mf.m3 for mf in macros])
    n0 = np.array([mf.nu_rho for mf in macros])
    n1 = np.array([mf.nu_mom for mf in macros])
    S = np.array([grid.coupling_from_density(r) for r in rho])
    sl = slice(1, -1)
    dth = grid.dtheta
    res_mass = _ddt_centered(rho, times) + _ddtheta(m1[sl], dth)
    res_mom = (_ddt_centered(m1, times) + _ddtheta(m2[sl], dth)
               - (-m1[sl] + n0[sl] + kappa * S[sl] * rho[sl]) / m)
    res_en = (_ddt_centered(0.5 * m2, times) + _ddtheta(0.5 * m3[sl], dth)
              - sigma * rho[sl] / m ** 2 + (m2[sl] - n1[sl] - kappa * S[sl] * m1[sl]) / m)
    flags = np.array([mf.flagged for mf in macros])
    bad = flags[:-2] | flags[1:-1] | flags[2:]
    out = {}
    for name, r in (("residual_mass", res_mass), ("residual_mom", res_mom),
                    ("residual_energy", res_en)):
        out[name] = np.where(bad, np.nan, r)
    return out


def balance_residual_series(macros, grid, params, times):
    """Per interior snapshot L-infinity residual of each law (flagged cells skipped)."""
    fields = balance_residual_fields(macros, grid, params, times)
    return {k: [float(np.nanmax(np.abs(row))) if np.any(np.isfinite(row)) else math.nan
                for row in v] for k, v in fields.items()}


def balance_residuals(trajectory, params=None, times=None):
    """Global L-infinity residual per law over a trajectory of KineticStates
    (or of MacroFields when ``times`` and a grid-bearing params are given)."""
    states = list(trajectory)
    if len(states) < 3:
        raise InsufficientDataError("balance residuals need at least 3 snapshots")
    grid = states[0].grid
    params = params or grid.params
    times = [s.t for s in states] if times is None else times
    macros = [compute_macro(s) for s in states]
    fields = balance_residual_fields(macros, grid, params, times)
    return {k: float(np.nanmax(np.abs(v))) for k, v in fields.items()}


@dataclass
class M1Fit:
    M0: np.ndarray
    M1: np.ndarray
    rate: float
    intercept: float
    r_squared: float
    fitted: bool
    n_used: int


def fit_log_linear(t, y):
    """Least squares log y = c - rate t. Returns (rate, intercept, r2)."""
    t = np.asarray(t, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))
    A = np.vstack([np.ones_like(t), t]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0.0 else 0.0)
    return -float(coef[1]), float(coef[0]), min(1.0, max(0.0, r2))


def m0_m1_series(times, M0, M1, threshold=1e-10):
    """Fit the decay rate of |M1| on samples with |M1| > threshold."""
    times = np.asarray(times, dtype=float)
    M0 = np.asarray(M0, dtype=float)
    M1 = np.asarray(M1, dtype=float)
    if times.size < 10:
        raise InsufficientDataError("m0_m1_series needs at least 10 samples")
    keep = np.abs(M1) > threshold
    if keep.sum() < 2:
        return M1Fit(M0, M1, math.nan, math.nan, math.nan, False, int(keep.sum()))
    rate, c, r2 = fit_log_linear(times[keep], np.abs(M1[keep]))
    return M1Fit(M0, M1, rate, c, r2, True, int(keep.sum()))


def m0_m1_from_states(states):
    grid = states[0].grid
    times = [s.t for s in states]
    macros = [compute_macro(s) for s in states]
    M0 = [mf.rho.sum() * grid.dtheta for mf in macros]
    M1 = [mf.mom.sum() * grid.dtheta for mf in macros]
    return m0_m1_series(times, M0, M1)


# hydrodynamic model with the q = 0 closure

@dataclass
class HydroState:
    """Conserved variables (rho, rho u, rho(e + u^2/2)) on the theta cells."""

    rho: np.ndarray
    mom: np.ndarray
    energy: np.ndarray
    dtheta: float
    t: float = 0.0
    nu0: float = 0.0

    @property
    def theta(self):
        return np.arange(self.rho.size) * self.dtheta

    @property
    def u(self):
        return self.mom / self.rho

    @property
    def p(self):
        return 2.0 * self.energy - self.mom ** 2 / self.rho

    def copy(self):
        return HydroState(self.rho.copy(), self.mom.copy(), self.energy.copy(),
                          self.dtheta, self.t, self.nu0)


def hydro_from_macro(mf, dtheta, nu0=0.0, t=0.0):
    return HydroState(mf.rho.copy(), mf.mom.copy(), mf.energy.copy(), dtheta, t, nu0)


def hydro_uniform(n_theta, params, nu0=0.0):
    """rho = 1/2pi, u = nu0, p = rho sigma / m: the equilibrium fixed point."""
    rho = np.full(n_theta, 1.0 / (2.0 * math.pi))
    p = rho * params.sigma / params.m
    mom = rho * nu0
    return HydroState(rho, mom, 0.5 * (p + rho * nu0 ** 2), 2.0 * math.pi / n_theta, 0.0, nu0)


def _hydro_coupling(rho, dtheta):
    th = np.arange(rho.size) * dtheta
    k_re = np.dot(np.cos(th), rho) * dtheta
    k_im = np.dot(np.sin(th), rho) * dtheta
    return k_im * np.cos(th) - k_re * np.sin(th)


def _minmod(a, b):
    return np.where(a * b > 0.0, np.where(a > 0.0, np.minimum(a, b), np.maximum(a, b)), 0.0)


def _hydro_flux(rho, mom, en):
    u = mom / rho
    p = 2.0 * en - mom * u
    return mom, 2.0 * en, u * (1.5 * p + 0.5 * mom * u), np.abs(u) + np.sqrt(np.maximum(3.0 * p / rho, 0.0))


def hydro_rhs(h, params, rho_floor=RHO_FLOOR):
    U = np.array([h.rho, h.mom, h.energy])
    if np.any(U[0] < rho_floor):
        i = int(np.argmin(U[0]))
        raise HydroError(f"vacuum: rho={U[0, i]!r} below floor at theta cell {i}")
    dU_l = U - np.roll(U, 1, axis=1)
    dU_r = np.roll(U, -1, axis=1) - U
    s = _minmod(dU_l, dU_r)
    UL = U + 0.5 * s                       # left state at face i+1/2
    UR = np.roll(U - 0.5 * s, -1, axis=1)  # right state at face i+1/2
    if np.any(UL[0] < rho_floor) or np.any(UR[0] < rho_floor):
        raise HydroError("vacuum in reconstructed states")
    fl = _hydro_flux(*UL)
    fr = _hydro_flux(*UR)
    a = np.maximum(fl[3], fr[3])
    flux = np.array([0.5 * (fl[k] + fr[k]) - 0.5 * a * (UR[k] - UL[k]) for k in range(3)])
    div = -(flux - np.roll(flux, 1, axis=1)) / h.dtheta
    m, kappa, sigma = params.m, params.kappa, params.sigma
    S = _hydro_coupling(U[0], h.dtheta)
    src_mom = (-U[1] + h.nu0 * U[0] + kappa * S * U[0]) / m
    src_en = sigma * U[0] / m ** 2 - (2.0 * U[2] - h.nu0 * U[1] - kappa * S * U[1]) / m
    div[1] += src_mom
    div[2] += src_en
    return div


def hydro_cfl(h, courant=0.4):
    _, _, _, a = _hydro_flux(h.rho, h.mom, h.energy)
    return courant * h.dtheta / float(np.max(a))


def step_hydro(h, params, dt):
    """One SSP-RK2 step of the MUSCL/Rusanov finite-volume scheme."""
    lim = hydro_cfl(h, courant=0.9)
    if dt > lim:
        raise HydroError(f"dt={dt:.6g} exceeds the hydro CFL bound {lim:.6g}")
    U0 = np.array([h.rho, h.mom, h.energy])
    k1 = hydro_rhs(h, params)
    U1 = U0 + dt * k1
    h1 = HydroState(U1[0], U1[1], U1[2], h.dtheta, h.t + dt, h.nu0)
    k2 = hydro_rhs(h1, params)
    U2 = 0.5 * U0 + 0.5 * (U1 + dt * k2)
    if not np.all(np.isfinite(U2)):
        raise HydroError("non-finite hydro state")
    return HydroState(U2[0], U2[1], U2[2], h.dtheta, h.t + dt, h.nu0)
