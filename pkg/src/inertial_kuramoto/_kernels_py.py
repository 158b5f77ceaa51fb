"""numpy reference implementation of the kinetic kernels.

Every function here mirrors one in ``_kernels.pyx`` operation for operation,
so both backends produce bit-identical arrays on the same input. Each kernel
writes a sub-range of its output, which is how the thread pool splits work.

Limiter codes: 0 = none (centered), 1 = minmod, 2 = guarded minmod.
"""
import numpy as np

NAME = "python"


def _minmod(a, b):
    return np.where(a * b > 0.0, np.where(a > 0.0, np.minimum(a, b), np.maximum(a, b)), 0.0)


def _limit(f, a, b, limiter):
    if limiter == 0:
        return 0.5 * (a + b)
    mm = _minmod(a, b)
    if limiter == 1:
        return mm
    c = 0.5 * (a + b)
    return np.where(f - 0.5 * np.abs(c) >= 0.0, c, mm)


def theta_rhs(F, vel, inv_dth, limiter, out, j0, j1):
    """Upwind MUSCL divergence of the periodic theta flux, columns j0:j1."""
    Fs = F[:, :, j0:j1]
    v = vel[:, None, j0:j1]
    fm = np.roll(Fs, 1, axis=1)
    fp = np.roll(Fs, -1, axis=1)
    s = _limit(Fs, Fs - fm, fp - Fs, limiter)
    left = Fs + 0.5 * s
    right = np.roll(Fs - 0.5 * s, -1, axis=1)
    flux = np.where(v > 0.0, v * left, v * right)
    out[:, :, j0:j1] = -(flux - np.roll(flux, 1, axis=1)) * inv_dth


def omega_rhs(F2, n_theta, drift0, S, inv_m, kappa, inv_dom, limiter, out2, r0, r1):
    """Drift flux divergence in omega with zero flux at both ends, rows r0:r1.

    Row r is (nu index r // n_theta, theta index r % n_theta). The face
    drift is inv_m * (drift0[k, j] + kappa * S[i]).
    """
    if r1 <= r0:
        return
    Fr = F2[r0:r1]
    rows = np.arange(r0, r1)
    k = rows // n_theta
    i = rows % n_theta
    n = Fr.shape[1]
    d = Fr[:, 1:] - Fr[:, :-1]
    s = np.zeros_like(Fr)
    s[:, 1:-1] = _limit(Fr[:, 1:-1], d[:, :-1], d[:, 1:], limiter)
    A = inv_m * (drift0[k] + kappa * S[i][:, None])
    left = Fr[:, :-1] + 0.5 * s[:, :-1]
    right = Fr[:, 1:] - 0.5 * s[:, 1:]
    flux = np.zeros((r1 - r0, n + 1))
    flux[:, 1:-1] = np.where(A > 0.0, A * left, A * right)
    out2[r0:r1] = -(flux[:, 1:] - flux[:, :-1]) * inv_dom


def laplacian_update(F2, coef, out2, r0, r1):
    """out = F + coef * (Neumann second difference in omega), rows r0:r1."""
    Fr = F2[r0:r1]
    full = np.zeros((r1 - r0, Fr.shape[1] + 1))
    full[:, 1:-1] = Fr[:, 1:] - Fr[:, :-1]
    out2[r0:r1] = Fr + coef * (full[:, 1:] - full[:, :-1])


def thomas_solve(R2, sub, cp, minv, out2, r0, r1):
    """Solve the constant tridiagonal system row by row from a precomputed
    factorization (sub-diagonal ``sub``, modified super-diagonal ``cp`` and
    inverse pivots ``minv``)."""
    R = R2[r0:r1]
    n = R.shape[1]
    y = np.empty_like(R)
    y[:, 0] = R[:, 0] * minv[0]
    for j in range(1, n):
        y[:, j] = (R[:, j] - sub * y[:, j - 1]) * minv[j]
    for j in range(n - 2, -1, -1):
        y[:, j] = y[:, j] - cp[j] * y[:, j + 1]
    out2[r0:r1] = y
