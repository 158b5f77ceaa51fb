"""Euler-Maruyama integrator for the N-oscillator Langevin system

    dtheta_i = omega_i dt
    m domega_i = (-omega_i + nu_i + kappa r sin(phi - theta_i)) dt + sqrt(2 sigma) dB_i

with the mean field taken from the order parameter r e^{i phi} = mean e^{i theta_j}.

Noise is drawn from counter-based Philox substreams indexed by
(step, chunk) with a fixed chunk size, so a trajectory depends on the seed
only, never on how many threads process the chunks.
"""
from dataclasses import dataclass
import math
import os

import numpy as np

from . import _backend, snapshots
from .diagnostics import DiagnosticsSeries

TWO_PI = 2.0 * math.pi
CHUNK = 8192


class ConfigError(ValueError):
    pass


class StepSizeError(ValueError):
    pass


class ParticleDivergenceError(RuntimeError):
    def __init__(self, index, t):
        super().__init__(f"non-finite state at particle index {index} (t={t:.6g})")
        self.index = index
        self.t = t


@dataclass
class ParticleEnsemble:
    theta: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    t: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        n = len(self.theta)
        if n < 1 or len(self.omega) != n or len(self.nu) != n:
            raise ValueError("theta, omega and nu must have the same length >= 1")

    @property
    def n(self):
        return len(self.theta)

    def copy(self):
        return ParticleEnsemble(self.theta.copy(), self.omega.copy(), self.nu.copy(),
                                self.t, self.step_index)


@dataclass(frozen=True)
class OrderParameter:
    r: float
    phi: float


class NoiseStream:
    """Philox key derived from the seed; substream (step, chunk) via the counter."""

    def __init__(self, seed):
        self.seed = int(seed)
        self.key = np.random.SeedSequence(self.seed, spawn_key=(1,)).generate_state(2, np.uint64)

    def normals(self, step, chunk, size):
        bitgen = np.random.Philox(key=self.key, counter=[0, 0, chunk, step])
        return np.random.Generator(bitgen).standard_normal(size)

    def init_rng(self):
        key = np.random.SeedSequence(self.seed, spawn_key=(0,)).generate_state(2, np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _law(law_desc):
    if isinstance(law_desc, str):
        return law_desc, {}
    law_desc = dict(law_desc)
    return law_desc.pop("law"), law_desc


def _sample_phase(rng, n, law_desc):
    law, kw = _law(law_desc)
    if law == "point":
        return np.full(n, float(kw.get("value", 0.0)) % TWO_PI)
    if law == "uniform":
        return rng.uniform(0.0, TWO_PI, n)
    if law == "wrapped-gaussian":
        return rng.normal(kw.get("mean", 0.0), kw.get("std", 1.0), n) % TWO_PI
    if law == "equispaced":
        return np.arange(n) * (TWO_PI / n)
    if law == "cosine-bump":
        # density (1 + a cos(k (theta - phase))) / 2pi by rejection
        a = float(kw.get("amplitude", 0.1))
        k = int(kw.get("mode", 1))
        ph = float(kw.get("phase", 0.0))
        if not 0.0 <= abs(a) <= 1.0:
            raise ConfigError("cosine-bump amplitude must lie in [-1, 1]")
        out = np.empty(n)
        filled = 0
        while filled < n:
            cand = rng.uniform(0.0, TWO_PI, 2 * (n - filled) + 16)
            acc = rng.uniform(0.0, 1.0 + abs(a), cand.size) <= 1.0 + a * np.cos(k * (cand - ph))
            take = cand[acc][: n - filled]
            out[filled:filled + take.size] = take
            filled += take.size
        return out
    raise ConfigError(f"unknown phase law {law!r}")


def _sample_frequency(rng, n, law_desc, nu, params):
    law, kw = _law(law_desc)
    if law == "point":
        return np.full(n, float(kw.get("value", 0.0)))
    if law == "gaussian":
        return rng.normal(kw.get("mean", 0.0), kw.get("std", 1.0), n)
    if law == "maxwellian":
        if params is None or params.sigma <= 0.0:
            raise ConfigError("maxwellian frequency law needs sigma > 0")
        shift = float(kw.get("shift", 0.0))
        return nu + shift + params.thermal_speed * rng.standard_normal(n)
    raise ConfigError(f"unknown frequency law {law!r}")


def sample_initial(n, phase_law, frequency_law, g, seed, params=None):
    """Draw an ensemble; laws are a name or a dict {"law": name, ...}.

    Phase laws: point(value), uniform, wrapped-gaussian(mean, std),
    equispaced, cosine-bump(amplitude, mode, phase).
    Frequency laws: point(value), gaussian(mean, std), maxwellian(shift),
    the latter centred at each oscillator's nu with variance sigma/m.
    """
    if n < 1:
        raise ConfigError("ensemble size must be >= 1")
    rng = NoiseStream(seed).init_rng()
    if g.size == 1:
        nu = np.full(n, g.nodes[0])
    else:
        nu = g.nodes[rng.choice(g.size, size=n, p=g.weights)]
    theta = _sample_phase(rng, n, phase_law)
    omega = _sample_frequency(rng, n, frequency_law, nu, params)
    return ParticleEnsemble(theta, omega, nu, 0.0, 0)


def order_parameter(ens):
    theta = ens.theta if isinstance(ens, ParticleEnsemble) else np.asarray(ens)
    n = theta.size
    c = float(np.cos(theta).sum()) / n
    s = float(np.sin(theta).sum()) / n
    return OrderParameter(min(1.0, math.hypot(c, s)), math.atan2(s, c) % TWO_PI)


def coupling_field(op, kappa, theta):
    """kappa r sin(phi - theta)."""
    return kappa * op.r * np.sin(op.phi - np.asarray(theta))


def pairwise_coupling(theta, kappa, at):
    """O(N^2) reference: (kappa/N) sum_j sin(theta_j - at)."""
    theta = np.asarray(theta)
    at = np.atleast_1d(at)
    return kappa * np.sin(theta[None, :] - at[:, None]).mean(axis=1)


def step(ens, params, dt, stream, threads=1):
    """One Euler-Maruyama step; returns a new ensemble."""
    if not (dt > 0.0 and dt <= params.m / 10.0 * (1.0 + 1e-12)):
        raise StepSizeError(f"dt={dt!r} must satisfy 0 < dt <= m/10 = {params.m / 10.0!r}")
    op = order_parameter(ens)
    n = ens.n
    theta_new = np.empty(n)
    omega_new = np.empty(n)
    inv_m = 1.0 / params.m
    kr = params.kappa * op.r
    noise = math.sqrt(2.0 * params.sigma) * inv_m * math.sqrt(dt) if params.sigma > 0.0 else 0.0
    n_chunks = (n + CHUNK - 1) // CHUNK

    def work(c0, c1):
        with np.errstate(invalid="ignore", over="ignore"):
            _chunks(c0, c1)

    def _chunks(c0, c1):
        for c in range(c0, c1):
            lo, hi = c * CHUNK, min(n, (c + 1) * CHUNK)
            th = ens.theta[lo:hi]
            om = ens.omega[lo:hi]
            drift = inv_m * (-om + ens.nu[lo:hi] + kr * np.sin(op.phi - th))
            w = om + drift * dt
            if noise:
                w = w + noise * stream.normals(ens.step_index, c, hi - lo)
            theta_new[lo:hi] = np.mod(th + om * dt, TWO_PI)
            omega_new[lo:hi] = w

    _backend.parallel_ranges(work, n_chunks, threads)
    t_new = ens.t + dt
    bad = ~(np.isfinite(theta_new) & np.isfinite(omega_new))
    if bad.any():
        raise ParticleDivergenceError(int(np.argmax(bad)), t_new)
    return ParticleEnsemble(theta_new, omega_new, ens.nu, t_new, ens.step_index + 1)


def empirical_moments(ens):
    """(M0, M1) with M0 = 1 by convention and M1 the mean frequency."""
    return 1.0, float(ens.omega.mean())


def theta_histogram(theta, bins=32):
    """Density histogram of phases on [0, 2pi)."""
    hist, edges = np.histogram(np.mod(theta, TWO_PI), bins=bins, range=(0.0, TWO_PI), density=True)
    return hist, edges


def run(ens, params, t_end, dt, stream, diag_interval=None, threads=1, out_dir=None,
        snapshot_interval=None):
    """Integrate to t_end, recording t, mass (=1), M0, M1 and r."""
    from .kinetic import plan_steps

    n_samples, per, dt = plan_steps(t_end, diag_interval, dt)
    series = DiagnosticsSeries()
    t0 = ens.t
    start = ens.step_index

    def record(e):
        M0, M1 = empirical_moments(e)
        series.append(t=e.t, mass=1.0, M0=M0, M1=M1, r=order_parameter(e).r)

    def snap(e, name):
        if out_dir is not None:
            snapshots.write_particles(os.path.join(out_dir, name), e.theta, e.omega, e.nu, e.t)

    record(ens)
    for n in range(1, n_samples + 1):
        for _ in range(per):
            ens = step(ens, params, dt, stream, threads)
            ens.t = t0 + (ens.step_index - start) * dt
        record(ens)
        if snapshot_interval and n % snapshot_interval == 0:
            snap(ens, f"particles_{n:06d}.kspa")
    if out_dir is not None:
        snap(ens, "particles_final.kspa")
    return series, ens
