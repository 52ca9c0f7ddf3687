import logging
import math

import numpy as np
import pytest

from conftest import homogeneous_u, scaled_to_curvature
from lamflow.analysis import metric_bounds
from lamflow.errors import ConfigError, InsufficientHistory, NonNegativeR, StepFloorHit
from lamflow.flow import (
    FlowConfig,
    default_r,
    integral_identity_residual,
    make_state,
    rescale_to_minus_one,
    rhs,
    run,
    step,
)
from lamflow.geometry.elliptic import precondition_negative
from lamflow.geometry.generators import gen_flat_torus, gen_genus2
from lamflow.geometry.metric import curvature


def homogeneous_error(mesh, integrator, dt, T=5.0):
    cfg = FlowConfig(r=-1.0, integrator=integrator, dt_init=dt, stop_tol=1e-14, t_max=T, record_every=1)
    traj = run(mesh, np.zeros(mesh.n_vertices), cfg)
    u = traj.probe_u[:, 0]
    return float(np.abs(u - homogeneous_u(traj.times)).max()), traj


@pytest.fixture(scope="module")
def genus2_start():
    m = gen_genus2(2)
    return m, precondition_negative(m).u


@pytest.fixture(scope="module")
def genus2_run(genus2_start):
    m, u0 = genus2_start
    return run(m, u0, FlowConfig(dt_init=1e-3))


# -- config ---------------------------------------------------------------


def test_config_defaults():
    cfg = FlowConfig()
    assert cfg.r is None and cfg.integrator == "semi-implicit"


@pytest.mark.parametrize(
    "kwargs",
    [
        {"integrator": "leapfrog"},
        {"dt_init": 0.0},
        {"dt_init": 1e-3, "dt_min": 1e-2},
        {"stop_tol": 0.0},
        {"t_max": -1.0},
        {"record_every": 0},
        {"r": 0.5},
    ],
)
def test_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        FlowConfig(**kwargs)


def test_config_from_dict_round_trip():
    cfg = FlowConfig(r=-2.0, integrator="rk4", dt_init=1e-2)
    assert FlowConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        FlowConfig.from_dict({"dt": 0.1})


def test_stop_threshold_relative():
    assert FlowConfig(r=-4.0, stop_tol=1e-3).stop_threshold() == pytest.approx(4e-3)
    assert FlowConfig(r=0.0, stop_tol=1e-3).stop_threshold() == pytest.approx(1e-3)


# -- rhs ------------------------------------------------------------------


def test_rhs_vanishes_at_target(homogeneous_mesh):
    assert np.abs(rhs(homogeneous_mesh, np.zeros(2), -2.0)).max() < 1e-12


def test_rhs_flat_torus():
    assert np.abs(rhs(gen_flat_torus(4), np.zeros(16), 0.0)).max() < 1e-12


def test_rhs_matches_curvature_at_zero():
    m = gen_genus2(1)
    R = curvature(m).R
    f = rhs(m, np.zeros(m.n_vertices), -1.0)
    assert f[5] == -1.0 - R[5]
    # conformal form e^{-u}(L0 u - R0) + r at u = 0 agrees since L0 0 = 0
    assert np.allclose(f, np.exp(-0.0) * (0.0 - R) - 1.0, rtol=0, atol=0)


def test_default_r_inside_range(genus2_start):
    m, u0 = genus2_start
    cf = curvature(m, u0)
    r = default_r(cf)
    assert cf.R_min < r < cf.R_max
    assert r == pytest.approx(cf.mean)


# -- step -----------------------------------------------------------------


@pytest.mark.parametrize("integrator", ["explicit-euler", "rk4", "semi-implicit"])
def test_step_at_equilibrium(homogeneous_mesh, integrator):
    cfg = FlowConfig(r=-2.0, integrator=integrator, dt_init=0.1)
    s0 = make_state(homogeneous_mesh, np.zeros(2), -2.0)
    s1 = step(homogeneous_mesh, s0, cfg)
    assert s1.t == pytest.approx(0.1)
    assert np.abs(s1.u).max() < 1e-12


def test_euler_step_homogeneous_exact(homogeneous_mesh):
    u0 = 0.3
    dt = 0.05
    cfg = FlowConfig(r=-1.0, integrator="explicit-euler", dt_init=dt)
    s1 = step(homogeneous_mesh, make_state(homogeneous_mesh, np.full(2, u0), -1.0), cfg)
    expected = u0 + dt * (-1.0 + 2.0 * math.exp(-u0))
    assert np.allclose(s1.u, expected, rtol=1e-13)


def test_step_halves_on_triangle_violation(genus2_start):
    m, u0 = genus2_start
    cfg = FlowConfig(r=-6.2, integrator="explicit-euler", dt_init=1.0, dt_min=1e-3)
    s1 = step(m, make_state(m, u0, -6.2), cfg)
    assert s1.dt < 1.0
    assert s1.t == s1.dt


def test_step_floor_reports_face(genus2_start):
    m, u0 = genus2_start
    cfg = FlowConfig(r=-6.2, integrator="explicit-euler", dt_init=1.0, dt_min=0.9)
    with pytest.raises(StepFloorHit) as info:
        step(m, make_state(m, u0, -6.2), cfg)
    assert info.value.face is not None


def test_run_records_step_floor(genus2_start):
    m, u0 = genus2_start
    traj = run(m, u0, FlowConfig(integrator="explicit-euler", dt_init=1.0, dt_min=0.9))
    assert traj.termination == "step_floor_hit"
    assert traj.n_steps == 0


# -- homogeneous oracle ---------------------------------------------------


def test_homogeneous_oracle_values(homogeneous_mesh):
    err, traj = homogeneous_error(homogeneous_mesh, "rk4", 1e-2, T=1.0)
    assert traj.times[-1] == pytest.approx(1.0)
    assert traj.probe_u[-1, 0] == pytest.approx(math.log(2 - math.exp(-1)), abs=1e-8)
    assert traj.probe_u[-1, 0] == pytest.approx(0.489880, abs=1e-6)
    assert traj.probe_R[-1, 0] == pytest.approx(-1.225399, abs=1e-6)
    # R(t) is the comparison solution with c = -2
    phi = -1.0 / (1 - 0.5 * math.exp(-1.0))
    assert traj.probe_R[-1, 0] == pytest.approx(phi, abs=1e-8)


def test_rk4_fourth_order(homogeneous_mesh):
    e1, _ = homogeneous_error(homogeneous_mesh, "rk4", 2e-2)
    e2, _ = homogeneous_error(homogeneous_mesh, "rk4", 1e-2)
    assert 8.0 <= e1 / e2 <= 24.0


def test_euler_first_order(homogeneous_mesh):
    e1, _ = homogeneous_error(homogeneous_mesh, "explicit-euler", 2e-2)
    e2, _ = homogeneous_error(homogeneous_mesh, "explicit-euler", 1e-2)
    assert 1.6 <= e1 / e2 <= 2.4


def test_semi_implicit_homogeneous_first_order(homogeneous_mesh):
    # L u vanishes for constant u, so the scheme reduces to explicit Euler
    e1, _ = homogeneous_error(homogeneous_mesh, "semi-implicit", 2e-2)
    e2, _ = homogeneous_error(homogeneous_mesh, "semi-implicit", 1e-2)
    assert 1.6 <= e1 / e2 <= 2.4


# -- run ------------------------------------------------------------------


def test_run_stationary(homogeneous_mesh):
    traj = run(homogeneous_mesh, np.zeros(2), FlowConfig(r=-2.0))
    assert traj.converged and traj.n_steps == 0
    assert traj.final.t == 0.0
    assert traj.final.sup_dev < 1e-12
    assert integral_identity_residual(traj) == 0.0


def test_equilibrium_persists(homogeneous_mesh):
    cfg = FlowConfig(r=-2.0, dt_init=0.05, t_max=1.0, stop_tol=1e-300, record_every=1)
    traj = run(homogeneous_mesh, np.zeros(2), cfg)
    assert traj.termination == "t_max_reached"
    assert np.abs(traj.sup_dev).max() < 1e-12


def test_run_t_max_zero(genus2_start):
    m, u0 = genus2_start
    traj = run(m, u0, FlowConfig(t_max=0.0))
    assert traj.termination == "t_max_reached"
    assert traj.n_steps == 0


def test_run_hits_t_max_exactly(homogeneous_mesh):
    cfg = FlowConfig(r=-1.0, integrator="rk4", dt_init=0.3, t_max=1.0, stop_tol=1e-14)
    traj = run(homogeneous_mesh, np.zeros(2), cfg)
    assert traj.final.t == pytest.approx(1.0, abs=1e-14)
    assert traj.dts[-1] == pytest.approx(0.1)


def test_genus2_run_converges(genus2_run):
    traj = genus2_run
    assert traj.converged
    assert traj.final.sup_dev < traj.config.stop_tol * abs(traj.r)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.envelope_checked


def test_snapshot_stride(genus2_run):
    traj = genus2_run
    n = traj.n_steps
    assert len(traj.snapshots) == n // 10 + 1 + (n % 10 != 0)
    assert traj.snapshots[0].t == 0.0


def test_conformal_class_invariance(genus2_start):
    m, u0 = genus2_start
    before = m.lengths.tobytes()
    for integ, dt in (("semi-implicit", 1e-3), ("rk4", 5e-4), ("explicit-euler", 2e-4)):
        run(m, u0, FlowConfig(integrator=integ, dt_init=dt, t_max=0.02))
    assert m.lengths.tobytes() == before


def test_determinism(genus2_start):
    m, u0 = genus2_start
    cfg = FlowConfig(dt_init=1e-3, t_max=0.1)
    a, b = run(m, u0, cfg), run(m, u0, cfg)
    assert np.array_equal(a.R_max, b.R_max)
    assert np.array_equal(a.final.u, b.final.u)


def test_symmetry_propagation():
    n = 5
    m = gen_flat_torus(n)
    j = np.arange(n * n) // n
    u0 = 0.2 * np.sin(2 * np.pi * j / n)  # invariant under x-translation
    traj = run(m, u0, FlowConfig(r=0.0, dt_init=1e-2, t_max=0.5, record_every=1))
    shift = (np.arange(n * n) % n + 1) % n + n * j  # vertex (i, j) -> (i+1, j)
    for s in traj.snapshots:
        assert np.abs(s.u[shift] - s.u).max() < 1e-10


def test_mixed_sign_warns(caplog):
    m = gen_genus2(2)
    with caplog.at_level(logging.WARNING):
        traj = run(m, None, FlowConfig(dt_init=1e-3, t_max=0.01))
    assert not traj.envelope_checked
    assert "not negative" in caplog.text


def test_r_outside_range_disables_envelope(genus2_start):
    m, u0 = genus2_start
    cf = curvature(m, u0)
    traj = run(m, u0, FlowConfig(r=cf.R_max / 2, dt_init=1e-3, t_max=0.01))
    assert not traj.envelope_checked


def test_metric_bounds(genus2_run):
    b = metric_bounds(genus2_run)
    assert b.lower <= 0 <= b.upper
    assert b.margin <= 1e-3


# -- integral identity ----------------------------------------------------


def test_integral_identity_trapezoid_order(homogeneous_mesh):
    _, t1 = homogeneous_error(homogeneous_mesh, "rk4", 1e-2)
    _, t2 = homogeneous_error(homogeneous_mesh, "rk4", 5e-3)
    ratio = integral_identity_residual(t1) / integral_identity_residual(t2)
    assert 3.0 <= ratio <= 5.0


def test_integral_identity_euler_first_order(homogeneous_mesh):
    res = []
    for dt in (2e-2, 1e-2):
        _, t = homogeneous_error(homogeneous_mesh, "explicit-euler", dt)
        res.append(integral_identity_residual(t) / dt)
    # the constant C = residual / dt is stable under refinement
    assert res[1] == pytest.approx(res[0], rel=0.25)


def test_integral_identity_needs_probes(homogeneous_mesh):
    traj = run(homogeneous_mesh, np.zeros(2), FlowConfig(r=-2.0), probes=[])
    with pytest.raises(InsufficientHistory):
        integral_identity_residual(traj)


# -- rescaling ------------------------------------------------------------


def test_rescale_identity_at_minus_one():
    u = np.array([0.1, -0.4])
    assert np.array_equal(rescale_to_minus_one(u, -1.0), u)


def test_rescale_quarter():
    m = scaled_to_curvature(gen_genus2(0), -0.25)
    u1 = rescale_to_minus_one(np.zeros(2), -0.25)
    assert np.allclose(curvature(m, u1).R, -1.0, rtol=1e-12)


def test_rescale_rejects_nonnegative():
    with pytest.raises(NonNegativeR):
        rescale_to_minus_one(np.zeros(2), 0.0)


def test_rescale_converged_run(genus2_run):
    u1 = rescale_to_minus_one(genus2_run.final.u, genus2_run.r)
    R = curvature(genus2_run.mesh, u1).R
    assert np.abs(R + 1).max() <= genus2_run.final.sup_dev / abs(genus2_run.r) * (1 + 1e-9)
