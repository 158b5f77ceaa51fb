import math

import numpy as np
import pytest

from inertial_kuramoto import FrequencyDistribution, ModelParams, PhaseSpaceGrid
from inertial_kuramoto import kinetic as kn
from inertial_kuramoto.model import DegenerateDiffusionError


def test_grid_validation(unit_params, dirac):
    for nt, nw in ((6, 64), (9, 64), (16, 30), (16, 33)):
        with pytest.raises(ValueError):
            PhaseSpaceGrid(nt, nw, unit_params, dirac)
    with pytest.raises(DegenerateDiffusionError):
        PhaseSpaceGrid(16, 64, ModelParams(1, 1, 0), dirac)


def test_grid_geometry():
    p = ModelParams(2.0, 1.0, 0.5)
    g = FrequencyDistribution.discrete([-1.0, 3.0], [0.5, 0.5])
    grid = PhaseSpaceGrid(16, 64, p, g)
    assert grid.W == pytest.approx(10 * 0.5)
    for k, nu in enumerate(g.nodes):
        assert grid.omega[k].mean() == pytest.approx(nu)
        assert grid.omega[k, 0] - 0.5 * grid.domega == pytest.approx(nu - grid.W)


def test_init_maxwellian(small_grid):
    st, fac = kn.init_from_profile(small_grid, {"kind": "maxwellian"})
    np.testing.assert_allclose(st.F, np.broadcast_to(small_grid.cache.M[:, None, :], st.F.shape),
                               rtol=1e-14)
    assert np.max(np.abs(small_grid.marginals(st.F) - small_grid.g.weights)) <= 1e-12
    assert abs(fac[0] - 1) <= 1e-12


def test_init_bump_keeps_slice_mass(small_grid):
    st, fac = kn.init_from_profile(small_grid, {"kind": "maxwellian-bump", "amplitude": 0.1})
    assert abs(fac[0] - 1) <= 1e-13


def test_init_tabulated_rescale():
    g = FrequencyDistribution.discrete([-1.0, 1.0], [0.25, 0.75])
    grid = PhaseSpaceGrid(16, 64, ModelParams(), g)
    F = 2 * np.broadcast_to(grid.cache.M[:, None, :], grid.shape)
    st, fac = kn.init_from_profile(grid, {"kind": "tabulated", "table": F})
    np.testing.assert_allclose(fac, 0.5, rtol=1e-12)
    np.testing.assert_allclose(grid.marginals(st.F), g.weights, atol=1e-14)


def test_init_rejects_empty_slice(small_grid):
    with pytest.raises(kn.InvalidProfileError):
        kn.init_from_profile(small_grid, {"kind": "tabulated", "table": np.zeros(small_grid.shape)})
    with pytest.raises(kn.InvalidProfileError):
        kn.init_from_profile(small_grid, {"kind": "nonsense"})


def test_coupling_of_maxwellian_vanishes(small_grid):
    st, _ = kn.init_from_profile(small_grid, {"kind": "maxwellian"})
    assert np.max(np.abs(kn.coupling_field_kinetic(st))) <= 1e-15


def test_coupling_point_mass(small_grid):
    F = np.zeros(small_grid.shape)
    F[0, 0, small_grid.n_omega // 2] = 1.0 / small_grid.cell_volume
    S = kn.coupling_field_kinetic(F, small_grid)
    np.testing.assert_allclose(S, -np.sin(small_grid.theta), atol=1e-14)


def test_coupling_matches_brute_force(rng):
    g = FrequencyDistribution.discrete([-0.5, 0.5], [0.4, 0.6])
    grid = PhaseSpaceGrid(16, 32, ModelParams(), g)
    F = rng.random(grid.shape)
    S = kn.coupling_field_kinetic(F, grid)
    th = grid.theta
    brute = np.array([sum(np.sin(th[j] - th[i]) * F[:, j, :].sum() * grid.cell_volume
                          for j in range(grid.n_theta)) for i in range(grid.n_theta)])
    np.testing.assert_allclose(S, brute, atol=1e-13)


def test_stationarity_second_order(dirac):
    p = ModelParams(1, 1, 1)
    res = []
    for nt, nw in ((32, 64), (64, 128), (128, 256)):
        st, _ = kn.init_from_profile(PhaseSpaceGrid(nt, nw, p, dirac), {"kind": "maxwellian"})
        res.append(kn.stationarity_residual(st)[0])
    ratios = [res[i] / res[i + 1] for i in range(2)]
    assert all(3 <= r <= 5 for r in ratios[1:])
    assert res[1] <= 1e-3


def test_stationarity_detects_shift(dirac):
    grid = PhaseSpaceGrid(32, 128, ModelParams(), dirac)
    base = kn.stationarity_residual(kn.init_from_profile(grid, {"kind": "maxwellian"})[0])[0]
    vals = []
    for d in (0.2, 0.4):
        st, _ = kn.init_from_profile(grid, {"kind": "maxwellian-bump", "amplitude": 0.0, "shift": d})
        vals.append(kn.stationarity_residual(st)[0])
    assert vals[0] > 20 * base
    assert vals[1] / vals[0] == pytest.approx(2.0, rel=0.05)


def test_stationarity_is_linear_at_zero_coupling_field(dirac):
    grid = PhaseSpaceGrid(32, 64, ModelParams(), dirac)
    st, _ = kn.init_from_profile(grid, {"kind": "maxwellian"})
    r1 = kn.stationarity_residual(st)
    st2 = kn.KineticState(grid, 2 * st.F)
    r2 = kn.stationarity_residual(st2)
    assert r2[0] == pytest.approx(2 * r1[0], rel=1e-9)


def test_maxwellian_step_is_near_stationary(dirac):
    p = ModelParams(1, 1, 1)
    errs = []
    for nt, nw in ((32, 64), (64, 128)):
        grid = PhaseSpaceGrid(nt, nw, p, dirac)
        st, _ = kn.init_from_profile(grid, {"kind": "maxwellian"})
        solver = kn.KineticSolver(grid)
        dt = solver.auto_dt()
        F = solver.step(st.F, dt)
        errs.append(np.max(np.abs(F - st.F)) / dt)
    assert errs[0] / errs[1] >= 3


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("limiter", ["minmod", "guarded-minmod", "none"])
def test_mass_conserved_zero_coupling(order, limiter, rng):
    grid = PhaseSpaceGrid(16, 64, ModelParams(1, 0, 1), FrequencyDistribution.dirac())
    F0 = rng.random(grid.shape) * grid.cache.M[:, None, :]
    st, _ = kn.init_from_profile(grid, {"kind": "tabulated", "table": F0})
    solver = kn.KineticSolver(grid, limiter, order)
    F = st.F
    dt = solver.auto_dt()
    for _ in range(1000):
        F = solver.step(F, dt)
    assert abs(grid.mass(F) - 1.0) <= 1e-12


def test_per_node_marginals_conserved():
    g = FrequencyDistribution.gaussian(0, 1, 3)
    grid = PhaseSpaceGrid(16, 64, ModelParams(1, 2, 1), g)
    st, _ = kn.init_from_profile(grid, {"kind": "maxwellian-bump", "amplitude": 0.5, "shift": 0.3})
    r = kn.run(st, 1.0, diag_interval=0.25, perturbation=False)
    assert max(r.series.column("marginal_err")) <= 1e-12
    assert min(r.series.column("min_F")) >= -1e-12


def test_cfl_guard(small_grid):
    st, _ = kn.init_from_profile(small_grid, {"kind": "maxwellian"})
    solver = kn.KineticSolver(small_grid)
    lim = solver.cfl_limit(st.F)
    with pytest.raises(kn.CFLError) as err:
        solver.step(st.F, 2 * lim)
    assert err.value.suggested_dt == pytest.approx(lim)
    assert solver.auto_dt() < lim


def test_order1_is_first_order_in_time(dirac):
    # time self-convergence at a fixed grid: order 1 vs order 2
    grid = PhaseSpaceGrid(16, 64, ModelParams(1, 0.5, 1), dirac)
    st, _ = kn.init_from_profile(grid, {"kind": "maxwellian-bump", "amplitude": 0.3, "shift": 0.5})
    for order, lo in ((1, 0.8), (2, 1.8)):
        solver = kn.KineticSolver(grid, order=order)
        outs = []
        for n in (20, 40, 80):
            F = st.F
            for _ in range(n):
                F = solver.step(F, 0.2 / n)
            outs.append(F)
        rate = math.log2(np.abs(outs[0] - outs[1]).max() / np.abs(outs[1] - outs[2]).max())
        assert rate >= lo


def test_run_t_end_zero(small_grid):
    st, _ = kn.init_from_profile(small_grid, {"kind": "maxwellian"})
    r = kn.run(st, 0.0)
    assert len(r.series) == 1 and r.series.rows[0]["t"] == 0.0


def test_run_equilibrium_flat(dirac):
    grid = PhaseSpaceGrid(16, 64, ModelParams(1, 1, 1), dirac)
    st, _ = kn.init_from_profile(grid, {"kind": "maxwellian"})
    r = kn.run(st, 0.5, diag_interval=0.1)
    assert max(r.series.column("f_L2")) <= 0.02
    assert max(abs(v) for v in r.series.column("M1")) <= 1e-14


def test_run_divergence_persists_last_good(tmp_path, small_grid, monkeypatch):
    st, _ = kn.init_from_profile(small_grid, {"kind": "maxwellian"})
    calls = {"n": 0}
    orig = kn.KineticSolver.step

    def bad_step(self, F, dt, check_cfl=True):
        calls["n"] += 1
        out = orig(self, F, dt, check_cfl)
        if calls["n"] == 3:
            out[0, 0, 0] = np.nan
        return out

    monkeypatch.setattr(kn.KineticSolver, "step", bad_step)
    with pytest.raises(kn.DivergenceError) as err:
        kn.run(st, 1.0, diag_interval=0.5, out_dir=str(tmp_path))
    assert (tmp_path / "last_good.kski").exists()
    assert np.all(np.isfinite(err.value.last_good.F))


def test_plan_steps():
    n, per, dt = kn.plan_steps(1.0, 0.1, 0.03)
    assert n == 10 and per == 4 and dt == pytest.approx(0.025)
    assert kn.plan_steps(0.0, 0.1, 0.01)[0] == 0
