import numpy as np
import pytest

from affinefdr.curves import Grid, derivative
from affinefdr.errors import (CflViolated, ConstraintViolated, HorizonMismatch,
                              LeftBoundary, NotInInitialSet)
from affinefdr.hjmm import CirModel
from affinefdr.simulate import (DirectRun, Foliation, SimConfig, StatePaths,
                                direct_phi_values,
                                evolve_psi, fdr_phi_values, foliation_residual,
                                path_normals, reconstruct, simulate_direct,
                                simulate_state, verify_invariance)


@pytest.fixture(scope="module")
def g0(grid):
    return 0.01 * grid.x * np.exp(-grid.x)


@pytest.fixture(scope="module")
def foliation(cir_model, g0):
    return evolve_psi(cir_model, g0, horizon=0.5, dt=0.005)


def test_evolve_psi_stays_in_kernel(cir_model, foliation, g0):
    assert np.array_equal(foliation.psi[0], g0)
    ell_vals = [float(cir_model.ell_of(p)) for p in foliation.psi]
    assert max(abs(v) for v in ell_vals) <= 1e-10
    assert np.all(foliation.psi_ell_deriv > 0.0)


def test_evolve_psi_step_halving(cir_model, g0):
    # RK4 self-convergence: halving dt must reproduce the coarse solution
    coarse = evolve_psi(cir_model, g0, horizon=0.2, dt=0.005)
    fine = evolve_psi(cir_model, g0, horizon=0.2, dt=0.0025)
    assert np.abs(coarse.psi[-1] - fine.psi[-1]).max() <= 1e-6


def test_evolve_psi_rejections(grid, cir_model):
    with pytest.raises(ConstraintViolated):
        evolve_psi(cir_model, np.full(grid.n, 0.01), horizon=0.1)
    # transported curve whose short-end slope turns negative exits the leaf
    bad = 0.01 * grid.x * np.exp(-grid.x) * np.cos(4.0 * grid.x)
    with pytest.raises(LeftBoundary) as exc:
        evolve_psi(cir_model, bad - float(cir_model.ell_of(bad)) * cir_model.lam,
                   horizon=2.0, dt=0.005)
    assert 0.0 <= exc.value.exit_time <= 2.0


def test_path_normals_counter_based():
    a = path_normals(7, 4, 50)
    b = path_normals(7, 8, 50)
    # a path's increments do not depend on how many paths are drawn
    assert np.array_equal(a, b[:4])
    assert not np.array_equal(path_normals(8, 4, 50), a)
    assert not np.array_equal(path_normals(7, 4, 50, stream=1), a)


def test_simulate_state_deterministic_oracle(cir_model, g0):
    # rho = 0 freezes the diffusion; compare against RK4 on dx = b(t) + a x
    det = CirModel(cir_model.grid, 0.0, cir_model.gamma)
    dt = 5e-5
    fol0 = evolve_psi(det, g0, horizon=0.2, dt=dt)
    cfg = SimConfig(horizon=0.2, dt=dt, n_paths=1, seed=1)
    paths = simulate_state(det, fol0, x0=0.02, config=cfg)
    a = det.state_drift_slope
    b = fol0.psi_ell_deriv

    x = 0.02
    for k in range(len(b) - 1):
        bm = 0.5 * (b[k] + b[k + 1])
        k1 = b[k] + a * x
        k2 = bm + a * (x + dt / 2 * k1)
        k3 = bm + a * (x + dt / 2 * k2)
        k4 = b[k + 1] + a * (x + dt * k3)
        x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert abs(paths.final[0] - x) <= 1e-6


def test_simulate_state_mean_against_closed_form(grid, cir_model):
    # constant b: E[X_t] = x0 e^{a t} + b (e^{a t} - 1) / a
    b_const = 0.012
    n_t = 101
    # psi = b x satisfies ell(psi) = 0 and ell(psi') = b for the short end
    fol = Foliation(grid, np.linspace(0.0, 0.5, n_t),
                    np.tile(b_const * grid.x, (n_t, 1)),
                    np.full(n_t, b_const))
    cfg = SimConfig(horizon=0.5, dt=0.005, n_paths=4000, seed=3)
    paths = simulate_state(cir_model, fol, x0=0.05, config=cfg)
    a = cir_model.state_drift_slope
    expect = 0.05 * np.exp(a * 0.5) + b_const * (np.exp(a * 0.5) - 1.0) / a
    se = paths.final.std(ddof=1) / np.sqrt(cfg.n_paths)
    assert abs(paths.final.mean() - expect) <= 3.0 * se + 5e-5
    assert np.all(paths.values >= 0.0)


def test_simulate_state_schemes_and_errors(cir_model, foliation):
    cfg = SimConfig(horizon=0.5, dt=0.005, n_paths=16, seed=5,
                    scheme="drift_implicit")
    paths = simulate_state(cir_model, foliation, x0=0.02, config=cfg)
    assert np.all(paths.values >= 0.0)
    with pytest.raises(ConstraintViolated):
        simulate_state(cir_model, foliation, x0=-0.1, config=cfg)
    with pytest.raises(HorizonMismatch):
        simulate_state(cir_model, foliation, x0=0.0,
                       config=SimConfig(horizon=1.0, dt=0.005, n_paths=2))
    with pytest.raises(ConstraintViolated):
        SimConfig(horizon=0.5, dt=0.005, n_paths=2, scheme="euler_exact")


def test_reconstruct_identities(grid, cir_model, foliation):
    cfg = SimConfig(horizon=0.5, dt=0.005, n_paths=32, seed=9)
    paths = simulate_state(cir_model, foliation, x0=0.02, config=cfg)
    curves = reconstruct(foliation, paths, cir_model)
    # ell(r) recovers the state coordinate exactly: ell is linear and
    # ell(psi) vanishes to rounding
    ell_r = np.array([float(cir_model.ell_of(c)) for c in curves])
    assert np.abs(ell_r - paths.final).max() <= 1e-12
    # identically zero state reproduces the leaf itself
    zero = StatePaths(paths.times, np.zeros((1, len(paths.times))), seed=0)
    flat = reconstruct(foliation, zero, cir_model)
    assert np.abs(flat[0] - foliation.psi[-1]).max() <= 1e-12
    # time zero reproduces the initial curve
    first = reconstruct(foliation, paths, cir_model, at_step=0)
    h0 = foliation.psi[0] + 0.02 * cir_model.lam
    assert np.abs(first - h0[None, :]).max() <= 1e-12


def test_simulate_direct_pure_transport(grid):
    det = CirModel(grid, 0.0, 0.3)
    h0 = 0.02 + 0.01 * grid.x * np.exp(-grid.x)
    cfg = SimConfig(horizon=0.1, dt=0.005, n_paths=1, seed=0)
    run = simulate_direct(det, h0, cfg)
    shift = round(0.1 / grid.dx)
    expect = np.concatenate([h0[shift:], np.full(shift, h0[-1])])
    assert np.abs(run.final_curves[0] - expect).max() <= 1e-14
    assert not run.negative_short_rate


def test_simulate_direct_rejections(grid, cir_model):
    h0 = 0.02 + 0.01 * grid.x * np.exp(-grid.x)
    with pytest.raises(CflViolated):
        simulate_direct(cir_model, h0, SimConfig(0.1, 0.01, 1))
    with pytest.raises(NotInInitialSet):
        simulate_direct(cir_model, -h0, SimConfig(0.1, 0.005, 1))


def test_seed_determinism(grid, cir_model):
    h0 = 0.02 + 0.01 * grid.x * np.exp(-grid.x)
    cfg = SimConfig(horizon=0.05, dt=0.005, n_paths=8, seed=42)
    r1 = simulate_direct(cir_model, h0, cfg)
    r2 = simulate_direct(cir_model, h0, cfg)
    assert np.array_equal(r1.final_curves, r2.final_curves)


def test_phi_values_consistency(grid, cir_model, foliation):
    cfg = SimConfig(horizon=0.5, dt=0.005, n_paths=16, seed=2)
    paths = simulate_state(cir_model, foliation, x0=0.02, config=cfg)
    curves = reconstruct(foliation, paths, cir_model)
    # the closed-form fdr functionals agree with direct evaluation of the
    # reconstructed curves
    via_curves = direct_phi_values(curves, cir_model)
    via_coeffs = fdr_phi_values(foliation, paths, cir_model)
    for name in ("ell", "eval_at_1", "hw_norm"):
        assert np.abs(via_curves[name] - via_coeffs[name]).max() <= 1e-10
    assert foliation_residual(curves, foliation.psi[-1], cir_model.lam) <= 1e-12


def test_verify_invariance_self_comparison(cir_model, foliation):
    cfg = SimConfig(horizon=0.5, dt=0.005, n_paths=64, seed=4)
    paths = simulate_state(cir_model, foliation, x0=0.02, config=cfg)
    phis = fdr_phi_values(foliation, paths, cir_model)
    report = verify_invariance(phis, phis, direct_min_ell=0.0,
                               foliation_resid=0.0)
    for entry in report["phis"].values():
        assert entry["weak_error"] == 0.0 and entry["within_3se"]


def test_strong_convergence_rho_zero(grid):
    # deterministic dynamics: halving dt should shrink the state error by
    # about the scheme order (first order for Euler drift handling)
    det = CirModel(grid, 0.0, 0.3)
    g0 = 0.01 * grid.x * np.exp(-grid.x)
    fol = evolve_psi(det, g0, horizon=0.4, dt=0.0025)
    ref = simulate_state(det, fol, 0.02, SimConfig(0.4, 0.0025, 1)).final[0]
    e1 = abs(simulate_state(det, fol, 0.02, SimConfig(0.4, 0.04, 1)).final[0] - ref)
    e2 = abs(simulate_state(det, fol, 0.02, SimConfig(0.4, 0.02, 1)).final[0] - ref)
    assert e1 / e2 >= 1.8
