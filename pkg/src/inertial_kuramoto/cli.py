"""Command line driver: configuration, run modes and output files.

    inertial-kuramoto MODE [--config FILE] [--set key=value ...] [--out DIR]
                           [--seed N] [--threads N]

MODE is one of particles, kinetic, hydro, verify, decay-study. Exit codes:
0 success, 1 numerical divergence, 2 configuration error.
"""
import argparse
import copy
import json
import math
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import _backend
from .diagnostics import SCHEMA_VERSION, DiagnosticsSeries
from .model import FrequencyDistribution, ModelError, ModelParams, noise_condition_margin

MODES = ("particles", "kinetic", "hydro", "verify", "decay-study")

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_CONFIG = 2

DEFAULTS = {
    "mode": "",
    "seed": 0,
    "threads": 1,
    "params": {"m": 1.0, "kappa": 1.0, "sigma": 1.0},
    "frequency": {
        "kind": "dirac", "nu0": 0.0, "nodes": [], "weights": [],
        "mean": 0.0, "std": 1.0, "n_nodes": 8,
    },
    "grid": {"n_theta": 64, "n_omega": 128, "width": 10.0},
    "initial": {
        "profile": "maxwellian-bump", "amplitude": 0.1, "mode": 1, "phase": 0.0,
        "shift": 0.0, "table": "",
    },
    "particles": {
        "n": 10000, "dt": 0.001,
        "phase_law": "uniform", "phase_value": 0.0, "phase_mean": 0.0, "phase_std": 1.0,
        "phase_amplitude": 0.1, "phase_mode": 1,
        "frequency_law": "maxwellian", "frequency_value": 0.0, "frequency_mean": 0.0,
        "frequency_std": 1.0, "frequency_shift": 0.0,
    },
    "run": {
        "t_end": 1.0, "dt": 0.0, "diag_interval": 0.1, "snapshot_interval": 0,
        "limiter": "guarded-minmod", "order": 2, "courant": 0.4, "perturbation": True,
    },
    "verify": {"n_theta": 64, "n_omega": 256, "n_fields": 50, "n_trials": 50},
    "decay": {
        "sweep": "sigma", "values": [2.0, 5.0, 10.0, 20.0], "transient": 0.1,
        "norm": "f_L2",
    },
}


class ConfigError(ValueError):
    def __init__(self, msg, key=None):
        super().__init__(msg if key is None else f"{key}: {msg}")
        self.key = key


def _type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    return False


def _merge(base, update, prefix=""):
    for key, value in update.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError("unknown key", name)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a section", name)
            _merge(base[key], value, name + ".")
            continue
        if not _type_ok(base[key], value):
            raise ConfigError(f"type mismatch (expected {type(base[key]).__name__}, "
                              f"got {type(value).__name__})", name)
        if isinstance(base[key], float):
            value = float(value)
        elif isinstance(base[key], list):
            value = [float(v) for v in value]
        base[key] = value


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _set_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, text = (s.strip() for s in assignment.split("=", 1))
    parts = key.split(".")
    nested = value = _parse_value(text)
    for part in reversed(parts):
        nested = {part: nested}
    _merge(cfg, nested)
    return value


def _check_constraints(cfg):
    p = cfg["params"]
    for name, lo, strict in (("m", 0.0, True), ("kappa", 0.0, False), ("sigma", 0.0, False)):
        v = p[name]
        if not math.isfinite(v) or v < lo or (strict and v == lo):
            raise ConfigError(f"must be {'>' if strict else '>='} {lo}, got {v}", f"params.{name}")
    if cfg["mode"] and cfg["mode"] not in MODES:
        raise ConfigError(f"unknown mode {cfg['mode']!r}", "mode")
    if cfg["threads"] < 1:
        raise ConfigError("must be >= 1", "threads")
    fr = cfg["frequency"]
    if fr["kind"] not in ("dirac", "discrete", "gaussian"):
        raise ConfigError(f"unknown kind {fr['kind']!r}", "frequency.kind")
    gr = cfg["grid"]
    if gr["n_theta"] < 8 or gr["n_theta"] % 2:
        raise ConfigError("must be an even integer >= 8", "grid.n_theta")
    if gr["n_omega"] < 32 or gr["n_omega"] % 2:
        raise ConfigError("must be an even integer >= 32", "grid.n_omega")
    if gr["width"] <= 0:
        raise ConfigError("must be positive", "grid.width")
    run = cfg["run"]
    if run["t_end"] < 0:
        raise ConfigError("must be >= 0", "run.t_end")
    if run["dt"] < 0:
        raise ConfigError("must be >= 0 (0 selects the automatic step)", "run.dt")
    if run["diag_interval"] < 0:
        raise ConfigError("must be >= 0", "run.diag_interval")
    if run["limiter"] not in ("none", "minmod", "guarded-minmod"):
        raise ConfigError(f"unknown limiter {run['limiter']!r}", "run.limiter")
    if run["order"] not in (1, 2):
        raise ConfigError("must be 1 or 2", "run.order")
    if not 0 < run["courant"] <= 0.9:
        raise ConfigError("must lie in (0, 0.9]", "run.courant")
    if cfg["initial"]["profile"] not in ("maxwellian", "maxwellian-bump", "tabulated"):
        raise ConfigError(f"unknown profile {cfg['initial']['profile']!r}", "initial.profile")
    if cfg["particles"]["n"] < 1:
        raise ConfigError("must be >= 1", "particles.n")
    if cfg["particles"]["dt"] <= 0:
        raise ConfigError("must be positive", "particles.dt")
    if cfg["decay"]["sweep"] not in ("sigma", "kappa"):
        raise ConfigError("must be 'sigma' or 'kappa'", "decay.sweep")
    if cfg["decay"]["norm"] not in ("f_L2", "f_H1"):
        raise ConfigError("must be 'f_L2' or 'f_H1'", "decay.norm")
    if not 0.0 <= cfg["decay"]["transient"] < 1.0:
        raise ConfigError("must lie in [0, 1)", "decay.transient")


def parse_config(path=None, overrides=(), mode=None, seed=None, threads=None):
    """Resolved configuration: defaults, then the file, then overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config file: {exc}") from exc
        _merge(cfg, data)
    for item in overrides:
        _set_override(cfg, item)
    if mode is not None:
        cfg["mode"] = mode
    if seed is not None:
        cfg["seed"] = int(seed)
    if threads is not None:
        cfg["threads"] = int(threads)
    if not cfg["mode"]:
        raise ConfigError("no mode given", "mode")
    _check_constraints(cfg)
    return cfg


# builders

def build_params(cfg):
    p = cfg["params"]
    try:
        return ModelParams(p["m"], p["kappa"], p["sigma"])
    except ModelError as exc:
        raise ConfigError(str(exc), "params") from exc


def build_frequency(cfg):
    fr = cfg["frequency"]
    try:
        if fr["kind"] == "dirac":
            return FrequencyDistribution.dirac(fr["nu0"])
        if fr["kind"] == "gaussian":
            return FrequencyDistribution.gaussian(fr["mean"], fr["std"], fr["n_nodes"])
        return FrequencyDistribution.discrete(fr["nodes"], fr["weights"])
    except ModelError as exc:
        raise ConfigError(str(exc), "frequency") from exc


def build_grid(cfg, params=None):
    from .kinetic import PhaseSpaceGrid
    params = params or build_params(cfg)
    gr = cfg["grid"]
    try:
        return PhaseSpaceGrid(gr["n_theta"], gr["n_omega"], params, build_frequency(cfg), gr["width"])
    except ModelError as exc:
        raise ConfigError(str(exc), "params.sigma") from exc


def build_profile(cfg):
    from .kinetic import Profile
    ini = cfg["initial"]
    table = None
    if ini["profile"] == "tabulated":
        if not ini["table"]:
            raise ConfigError("tabulated profile needs a .npy path", "initial.table")
        try:
            table = np.load(ini["table"])
        except OSError as exc:
            raise ConfigError(f"cannot load table: {exc}", "initial.table") from exc
    return Profile(ini["profile"], ini["amplitude"], ini["mode"], ini["phase"], ini["shift"], table)


# output helpers

def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _summary(cfg, status, **extra):
    out = {"schema_version": SCHEMA_VERSION, "mode": cfg["mode"], "status": status,
           "backend": _backend.BACKEND, "seed": cfg["seed"]}
    out.update(extra)
    return _clean(out)


def _prepare_out(out_dir, cfg, config_path=None):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "resolved_config.json"), cfg)
    if config_path:
        with open(config_path, "rb") as src, open(os.path.join(out_dir, "config_input.toml"), "wb") as dst:
            dst.write(src.read())


# run modes

def run_particles(cfg, out_dir):
    from . import particle
    params = build_params(cfg)
    g = build_frequency(cfg)
    pc = cfg["particles"]
    phase = {"law": pc["phase_law"], "value": pc["phase_value"], "mean": pc["phase_mean"],
             "std": pc["phase_std"], "amplitude": pc["phase_amplitude"], "mode": pc["phase_mode"]}
    freq = {"law": pc["frequency_law"], "value": pc["frequency_value"], "mean": pc["frequency_mean"],
            "std": pc["frequency_std"], "shift": pc["frequency_shift"]}
    try:
        ens = particle.sample_initial(pc["n"], phase, freq, g, cfg["seed"], params)
    except particle.ConfigError as exc:
        raise ConfigError(str(exc), "particles") from exc
    if pc["dt"] > params.m / 10.0:
        raise ConfigError(f"must be <= m/10 = {params.m / 10.0}", "particles.dt")
    stream = particle.NoiseStream(cfg["seed"])
    run = cfg["run"]
    series, final = particle.run(ens, params, run["t_end"], pc["dt"], stream, run["diag_interval"],
                                 cfg["threads"], out_dir, run["snapshot_interval"])
    series.write(os.path.join(out_dir, "diagnostics.csv"))
    M1 = series.column("M1")
    return _summary(cfg, "ok", n=pc["n"], t_final=final.t, r_final=series.column("r")[-1],
                    M1_initial=M1[0], M1_final=M1[-1],
                    noise_condition=noise_condition_margin(params, g).to_dict())


def _kinetic_summary(cfg, result, params, g):
    from .moments import m0_m1_series
    from .perturbation import decay_fit
    s = result.series
    mass = np.array(s.column("mass"))
    marg = np.array(s.column("marginal_err"))
    minF = np.array(s.column("min_F"))
    out = {
        "t_final": result.final.t,
        "steps": result.n_steps,
        "dt": result.dt,
        "final": {k: s.rows[-1][k] for k in s.rows[-1]},
        "invariants": {
            "mass_drift": {"measured": float(np.max(np.abs(mass - 1.0))), "tolerance": 1e-10},
            "marginal_drift": {"measured": float(np.max(marg)), "tolerance": 1e-10},
            "min_F": {"measured": float(np.min(minF)), "tolerance": -1e-12},
        },
        "noise_condition": noise_condition_margin(params, g).to_dict(),
    }
    inv = out["invariants"]
    for key in ("mass_drift", "marginal_drift"):
        inv[key]["pass"] = inv[key]["measured"] <= inv[key]["tolerance"]
    inv["min_F"]["pass"] = inv["min_F"]["measured"] >= inv["min_F"]["tolerance"]
    if len(s) >= 10:
        fit = m0_m1_series(s.column("t"), s.column("M0"), s.column("M1"))
        out["M1_fit"] = {"rate": fit.rate, "expected": 1.0 / params.m, "r_squared": fit.r_squared,
                         "fitted": fit.fitted}
    norm_key = cfg["decay"]["norm"]
    vals = s.column(norm_key)
    if len(s) >= 20 and all(v is not None for v in vals):
        try:
            fit = decay_fit(s.column("t"), vals, transient=cfg["decay"]["transient"])
            out["decay_fit"] = {"norm": norm_key, "rate": fit.rate, "r_squared": fit.r_squared,
                                "window": list(fit.window), "decaying": fit.decaying}
        except ValueError as exc:
            out["decay_fit"] = {"norm": norm_key, "error": str(exc)}
    return out


def run_kinetic(cfg, out_dir):
    from . import kinetic
    params = build_params(cfg)
    if params.sigma <= 0.0:
        raise ConfigError("degenerate diffusion: the kinetic mode needs sigma > 0", "params.sigma")
    grid = build_grid(cfg, params)
    try:
        state, factors = kinetic.init_from_profile(grid, build_profile(cfg))
    except kinetic.InvalidProfileError as exc:
        raise ConfigError(str(exc), "initial") from exc
    run = cfg["run"]
    try:
        result = kinetic.run(
            state, run["t_end"], dt=run["dt"] or None, diag_interval=run["diag_interval"],
            limiter=run["limiter"], order=run["order"], threads=cfg["threads"],
            perturbation=run["perturbation"], snapshot_interval=run["snapshot_interval"],
            out_dir=out_dir, courant=run["courant"])
    except kinetic.CFLError as exc:
        raise ConfigError(str(exc), "run.dt") from exc
    except kinetic.DivergenceError as exc:
        if exc.series is not None:
            exc.series.write(os.path.join(out_dir, "diagnostics.csv"))
        raise
    result.series.write(os.path.join(out_dir, "diagnostics.csv"))
    p = params
    kinetic_snap = os.path.join(out_dir, "final.kski")
    from . import snapshots
    snapshots.write_kinetic(kinetic_snap, result.final.F, grid.g.nodes, grid.g.weights,
                            p.m, p.kappa, p.sigma, result.final.t)
    summary = _kinetic_summary(cfg, result, params, grid.g)
    summary["grid"] = grid.describe()
    summary["normalization_factors"] = factors.tolist()
    return _summary(cfg, "ok", **summary)


def run_hydro(cfg, out_dir):
    from . import kinetic, moments
    params = build_params(cfg)
    g = build_frequency(cfg)
    if g.size != 1:
        raise ConfigError("the hydrodynamic model needs identical oscillators (dirac)", "frequency.kind")
    grid = build_grid(cfg, params)
    state, _ = kinetic.init_from_profile(grid, build_profile(cfg))
    h = moments.hydro_from_macro(moments.compute_macro(state), grid.dtheta, g.nodes[0])
    run = cfg["run"]
    dt_max = run["dt"] or moments.hydro_cfl(h, run["courant"])
    n_samples, per, dt = kinetic.plan_steps(run["t_end"], run["diag_interval"], dt_max)
    series = DiagnosticsSeries()

    def record(hs):
        M0 = float(hs.rho.sum() * hs.dtheta)
        K1 = grid.first_mode(hs.rho)
        series.append(t=hs.t, mass=M0, M0=M0, M1=float(hs.mom.sum() * hs.dtheta), r=abs(K1))

    record(h)
    t0 = h.t
    k = 0
    try:
        for _ in range(n_samples):
            for _ in range(per):
                h = moments.step_hydro(h, params, dt)
                k += 1
                h.t = t0 + k * dt
            record(h)
    finally:
        series.write(os.path.join(out_dir, "diagnostics.csv"))
    mass = np.array(series.column("mass"))
    out = {"t_final": h.t, "steps": k, "dt": dt,
           "mass_drift": float(np.max(np.abs(mass - mass[0])))}
    if len(series) >= 10:
        fit = moments.m0_m1_series(series.column("t"), series.column("M0"), series.column("M1"))
        out["M1_fit"] = {"rate": fit.rate, "expected": 1.0 / params.m, "fitted": fit.fitted}
    return _summary(cfg, "ok", **out)


def verification_report(cfg):
    """Fixed verification suite: quadrature facts, operator identities, coercivity."""
    from . import kinetic, perturbation as pt
    from .model import gaussian_moment
    params = build_params(cfg)
    if params.sigma <= 0.0:
        raise ConfigError("degenerate diffusion: verification needs sigma > 0", "params.sigma")
    v = cfg["verify"]
    grid = kinetic.PhaseSpaceGrid(v["n_theta"], v["n_omega"], params, build_frequency(cfg),
                                  cfg["grid"]["width"])
    c = grid.cache
    rng = np.random.default_rng(cfg["seed"])
    report = {}

    def check(name, measured, tol, upper=True):
        report[name] = {"measured": float(measured), "tolerance": float(tol),
                        "pass": bool(measured <= tol if upper else measured >= tol)}

    check("maxwellian_mass", abs(grid.mass(np.broadcast_to(c.M[:, None, :], grid.shape)) - 1.0), 1e-8)
    for ell in range(4):
        quad = float((c.xi ** (2 * ell) * c.M).sum() * grid.domega)
        check(f"gaussian_moment_{ell}", abs(quad - gaussian_moment(params, ell)), 1e-8)
    check("chi0_norm", abs(float(pt.inner(c.chi0, c.chi0, grid)[0]) - 1.0), 1e-6)
    check("chi1_norm", abs(float(pt.inner(c.chi1, c.chi1, grid)[0]) - 1.0), 1e-6)
    check("chi0_chi1", abs(float(pt.inner(c.chi0, c.chi1, grid)[0])), 1e-6)
    check("chi0_mu_norm_sq", abs(pt.weighted_mu_norm_sq(c.chi0, grid) - 2.25), 1e-6)
    report.update(pt.operator_identity_suite(grid, rng, v["n_fields"]))
    co = pt.coercivity_rayleigh(grid, rng, v["n_trials"], raise_on_failure=False)
    report["coercivity_positive"] = {"measured": co.lambda0, "tolerance": 0.0, "pass": co.positive}
    eq_grid = kinetic.PhaseSpaceGrid(cfg["grid"]["n_theta"], cfg["grid"]["n_omega"], params,
                                     build_frequency(cfg), cfg["grid"]["width"])
    eq, _ = kinetic.init_from_profile(eq_grid, {"kind": "maxwellian"})
    res = kinetic.stationarity_residual(eq)
    report["stationarity_residual_inf"] = {"measured": res[0], "tolerance": None, "pass": True}
    coercivity = {"lambda0": co.lambda0, "eigen_min": co.eigen_min, "random_min": co.random_min,
                  "targeted_min": co.targeted_min, "chi1_quotient": co.chi1_quotient}
    return report, coercivity


def run_verify(cfg, out_dir):
    report, coercivity = verification_report(cfg)
    _write_json(os.path.join(out_dir, "report.json"), _clean(report))
    failed = sorted(k for k, r in report.items() if not r["pass"])
    return _summary(cfg, "ok", identities=report, coercivity=coercivity,
                    all_pass=not failed, failed_checks=failed)


def run_decay_study(cfg, out_dir):
    d = cfg["decay"]
    rows = []
    for value in d["values"]:
        sub = copy.deepcopy(cfg)
        sub["mode"] = "kinetic"
        sub["params"][d["sweep"]] = float(value)
        sub["run"]["perturbation"] = True
        _check_constraints(sub)
        name = f"{d['sweep']}_{value:g}"
        sub_dir = os.path.join(out_dir, name)
        _prepare_out(sub_dir, sub)
        summary = run_kinetic(sub, sub_dir)
        _write_json(os.path.join(sub_dir, "summary.json"), summary)
        fit = summary.get("decay_fit", {})
        rows.append({"run": name, d["sweep"]: float(value),
                     "noise_ratio": summary["noise_condition"]["ratio"],
                     "rate": fit.get("rate"), "r_squared": fit.get("r_squared"),
                     "decaying": fit.get("decaying")})
    with open(os.path.join(out_dir, "summary_table.csv"), "w", encoding="utf-8") as fh:
        cols = ["run", d["sweep"], "noise_ratio", "rate", "r_squared", "decaying"]
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join("" if r[c] is None else str(r[c]) for c in cols) + "\n")
    rates = [r["rate"] for r in rows if r["rate"] is not None]
    monotone = all(b >= a for a, b in zip(rates, rates[1:])) if len(rates) == len(rows) else None
    return _summary(cfg, "ok", runs=rows, rate_monotone_in_sweep=monotone)


RUNNERS = {
    "particles": run_particles,
    "kinetic": run_kinetic,
    "hydro": run_hydro,
    "verify": run_verify,
    "decay-study": run_decay_study,
}


def run_mode(cfg, out_dir, config_path=None):
    """Run the configured mode; returns the exit status."""
    from .kinetic import DivergenceError
    from .moments import HydroError
    from .particle import ParticleDivergenceError
    _prepare_out(out_dir, cfg, config_path)
    start = time.perf_counter()
    try:
        summary = RUNNERS[cfg["mode"]](cfg, out_dir)
        status = EXIT_OK
    except ConfigError as exc:
        summary = _summary(cfg, "failed", error=str(exc), exit_code=EXIT_CONFIG)
        status = EXIT_CONFIG
        print(f"config error: {exc}", file=sys.stderr)
    except (DivergenceError, ParticleDivergenceError, HydroError, FloatingPointError) as exc:
        summary = _summary(cfg, "failed", error=str(exc), exit_code=EXIT_DIVERGED)
        status = EXIT_DIVERGED
        print(f"divergence: {exc}", file=sys.stderr)
    summary["wall_time_s"] = round(time.perf_counter() - start, 3)
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="inertial-kuramoto", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (repeatable), e.g. params.m=2")
    ap.add_argument("--out", default="run_output", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.overrides, args.mode, args.seed, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_mode(cfg, args.out, args.config)


if __name__ == "__main__":
    sys.exit(main())
