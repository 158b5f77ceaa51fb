"""Versioned binary snapshots of kinetic states and particle ensembles.

Little-endian layout. Kinetic: magic b"KSKI", uint32 version, uint32 n_theta,
n_omega, n_nu, float64 m, kappa, sigma, t, then nu nodes, nu weights and F in
row-major (nu, theta, omega) order. Particles: magic b"KSPA", uint32 version,
uint64 n, float64 t, then theta, omega, nu.
"""
import struct

import numpy as np

KINETIC_MAGIC = b"KSKI"
PARTICLE_MAGIC = b"KSPA"
VERSION = 1

_KIN_HEAD = struct.Struct("<4sIIII4d")
_PART_HEAD = struct.Struct("<4sIQd")


class SnapshotError(ValueError):
    pass


def write_kinetic(path, F, nu, weights, m, kappa, sigma, t):
    F = np.ascontiguousarray(F, dtype="<f8")
    n_nu, n_theta, n_omega = F.shape
    with open(path, "wb") as fh:
        fh.write(_KIN_HEAD.pack(KINETIC_MAGIC, VERSION, n_theta, n_omega, n_nu,
                                float(m), float(kappa), float(sigma), float(t)))
        fh.write(np.asarray(nu, dtype="<f8").tobytes())
        fh.write(np.asarray(weights, dtype="<f8").tobytes())
        fh.write(F.tobytes())


def read_kinetic(path):
    """Return (header dict, nu, weights, F)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _KIN_HEAD.size:
        raise SnapshotError("truncated kinetic snapshot")
    magic, version, n_theta, n_omega, n_nu, m, kappa, sigma, t = _KIN_HEAD.unpack_from(raw)
    if magic != KINETIC_MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    expected = _KIN_HEAD.size + 8 * (2 * n_nu + n_nu * n_theta * n_omega)
    if len(raw) != expected:
        raise SnapshotError(f"snapshot size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_KIN_HEAD.size)
    nu = data[:n_nu].copy()
    w = data[n_nu:2 * n_nu].copy()
    F = data[2 * n_nu:].reshape(n_nu, n_theta, n_omega).copy()
    head = {"version": version, "n_theta": n_theta, "n_omega": n_omega, "n_nu": n_nu,
            "m": m, "kappa": kappa, "sigma": sigma, "t": t}
    return head, nu, w, F


def write_particles(path, theta, omega, nu, t):
    n = len(theta)
    with open(path, "wb") as fh:
        fh.write(_PART_HEAD.pack(PARTICLE_MAGIC, VERSION, n, float(t)))
        for arr in (theta, omega, nu):
            fh.write(np.asarray(arr, dtype="<f8").tobytes())


def read_particles(path):
    """Return (header dict, theta, omega, nu)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PART_HEAD.size:
        raise SnapshotError("truncated particle snapshot")
    magic, version, n, t = _PART_HEAD.unpack_from(raw)
    if magic != PARTICLE_MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if len(raw) != _PART_HEAD.size + 24 * n:
        raise SnapshotError("particle snapshot size mismatch")
    data = np.frombuffer(raw, dtype="<f8", offset=_PART_HEAD.size)
    return {"version": version, "n": n, "t": t}, data[:n].copy(), data[n:2 * n].copy(), data[2 * n:].copy()
