import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domainorder.domain import QuadraticDomain, combine_domains, quadratic_closed_flow
from domainorder.errors import ArgumentError, NumericError
from domainorder.flow import (
    GdConfig,
    IntegratorConfig,
    QuadraticFlowEngine,
    Trajectory,
    closed_form_trajectory,
    discrete_gd,
    flow_map_numeric,
    integrate_ode,
    read_checkpoints,
    read_trajectory_csv,
    write_checkpoints,
    write_trajectory_csv,
)
from domainorder.linalg import Prng, gaussian_vector
from domainorder.schedule import InterventionSpec, constant_schedule, piecewise_schedule, swap_intervention

from conftest import integrator_order, quad_pair, random_quadratic

ONE = constant_schedule(1, [1])
HALF = constant_schedule(2, [0.5, 0.5])


def test_single_domain_matches_closed_form(rng):
    d = random_quadratic(5, rng)
    theta = gaussian_vector(5, rng)
    traj = integrate_ode([d], ONE, theta, 0.5, IntegratorConfig("rk4", 1e-3))
    np.testing.assert_allclose(traj.endpoint, quadratic_closed_flow(d, 0.5, theta), atol=1e-8)
    assert traj.times[0] == 0.0 and traj.times[-1] == 0.5
    assert np.all(np.diff(traj.times) > 0)
    assert traj.checkpoints.shape == (len(traj.times), 5)
    assert traj.per_domain_losses.shape == (len(traj.times), 1)


def test_equilibrium_is_constant(rng):
    d = random_quadratic(3, rng)
    traj = integrate_ode([d], ONE, d.b, 1.0, IntegratorConfig("rk4", 0.1))
    assert np.all(traj.checkpoints == d.b)


def test_mixture_loss_strictly_decreasing():
    d1, d2, theta = quad_pair(3, n=6)
    traj = integrate_ode([d1, d2], HALF, theta, 2.0, IntegratorConfig("rk4", 1e-2))
    assert np.all(np.diff(traj.mixture_losses()) < 0)


def test_record_every_thins_checkpoints(rng):
    d = random_quadratic(2, rng)
    traj = integrate_ode([d], ONE, np.ones(2), 1.0, IntegratorConfig("rk4", 0.01, record_every=25))
    np.testing.assert_allclose(traj.times, [0.0, 0.25, 0.5, 0.75, 1.0])


def test_integrator_orders():
    assert 3.7 <= integrator_order("rk4") <= 4.3
    assert 0.8 <= integrator_order("euler") <= 1.2


def test_breakpoint_exactness():
    d1, d2, theta = quad_pair(4, n=5)
    s = swap_intervention(HALF, InterventionSpec(0.3, 0.2, 0.5))
    cfg = IntegratorConfig("rk4", 1e-3)
    whole = integrate_ode([d1, d2], s, theta, 0.9, cfg).endpoint
    part = theta
    for a, b in ((0.0, 0.3), (0.3, 0.5), (0.5, 0.7), (0.7, 0.9)):
        part = integrate_ode([d1, d2], s, part, b, cfg, t_start=a).endpoint
    assert np.max(np.abs(whole - part)) < 1e-12
    # Each step sees constant weights, so the piecewise closed form agrees too.
    exact = QuadraticFlowEngine([d1, d2]).advance(s, theta, 0, 0.9)
    np.testing.assert_allclose(whole, exact, atol=1e-10)


def test_commuting_flows_single_domain(rng):
    d = random_quadratic(4, rng)
    theta = gaussian_vector(4, rng)
    cfg = IntegratorConfig("rk4", 1e-3)
    a = flow_map_numeric(d, 0.2, flow_map_numeric(d, 0.5, theta, cfg), cfg)
    b = flow_map_numeric(d, 0.5, flow_map_numeric(d, 0.2, theta, cfg), cfg)
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, flow_map_numeric(d, 0.7, theta, cfg), atol=2e-8)
    np.testing.assert_array_equal(flow_map_numeric(d, 0.0, theta), theta)
    with pytest.raises(ArgumentError):
        flow_map_numeric(d, -1.0, theta)


def test_integrate_ode_errors(rng):
    d = random_quadratic(3, rng)
    with pytest.raises(ArgumentError):
        integrate_ode([d], HALF, np.zeros(3), 1.0)
    with pytest.raises(ArgumentError):
        integrate_ode([d, random_quadratic(2, rng)], HALF, np.zeros(3), 1.0)
    with pytest.raises(ArgumentError):
        integrate_ode([d], ONE, np.zeros(3), 0.0)
    with pytest.raises(ArgumentError):
        IntegratorConfig("midpoint")
    blowup = QuadraticDomain(-1e3 * np.eye(1), [0.0])
    with pytest.raises(NumericError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate_ode([blowup], ONE, [1.0], 100.0, IntegratorConfig("euler", 0.1))
    assert info.value.time is not None


def test_gd_small_step_limit():
    d1, d2, theta = quad_pair(6, n=8)
    gd = discrete_gd([d1, d2], HALF, theta, GdConfig(1e-4, 10_000, record_every=10_000))
    ode = integrate_ode([d1, d2], HALF, theta, 1.0, IntegratorConfig("rk4", 1e-2))
    assert np.linalg.norm(gd.endpoint - ode.endpoint) < 1e-3 * np.linalg.norm(theta)
    assert gd.times[-1] == pytest.approx(1.0)


def test_gd_zero_steps_and_monotone(rng):
    d = random_quadratic(4, rng)
    theta = gaussian_vector(4, rng)
    traj = discrete_gd([d], ONE, theta, GdConfig(0.1, 0))
    assert traj.checkpoints.shape == (1, 4)
    lam_max = np.max(np.linalg.eigvalsh(d.a))
    traj = discrete_gd([d], ONE, theta, GdConfig(1.0 / lam_max, 50))
    assert np.all(np.diff(traj.per_domain_losses[:, 0]) <= 0)


def test_gd_reads_schedule_at_step_times():
    # Weight switches from domain 1 to domain 2 at t = 0.3 = step 3 for lr 0.1.
    d1 = QuadraticDomain(np.eye(1), [1.0])
    d2 = QuadraticDomain(np.eye(1), [-1.0])
    s = piecewise_schedule([0, 0.3], [[1, 0], [0, 1]])
    traj = discrete_gd([d1, d2], s, [0.0], GdConfig(0.1, 5))
    x = 0.0
    for i in range(5):
        x -= 0.1 * (x - (1.0 if i < 3 else -1.0))
    assert traj.endpoint[0] == pytest.approx(x, rel=1e-15)
    np.testing.assert_allclose(traj.times, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])


def test_gd_divergence_names_step():
    d = QuadraticDomain(np.eye(1) * 10.0, [0.0])
    with pytest.raises(NumericError, match="step"):
        discrete_gd([d], ONE, [1.0], GdConfig(1.0, 100))


def test_closed_form_engine_matches_ode():
    d1, d2, theta = quad_pair(9, n=6)
    s = swap_intervention(constant_schedule(2, [0.3, 0.7]), InterventionSpec(0.2, 0.1, 0.25))
    traj = closed_form_trajectory([d1, d2], s, theta, [0.1, 0.25, 0.4, 1.0])
    ode = integrate_ode([d1, d2], s, theta, 1.0, IntegratorConfig("rk4", 1e-3))
    np.testing.assert_allclose(traj.endpoint, ode.endpoint, atol=1e-10)
    mix = combine_domains([0.3, 0.7], [d1, d2])
    engine = QuadraticFlowEngine([d1, d2])
    np.testing.assert_allclose(engine.flow((0.3, 0.7), 0.5, theta), engine.flow((0.3, 0.7), 0.5, theta))
    lone = QuadraticFlowEngine([mix])
    np.testing.assert_allclose(engine.flow((0.3, 0.7), 0.5, theta), lone.flow((1,), 0.5, theta), atol=1e-12)
    with pytest.raises(ArgumentError):
        engine.advance(s, theta, 1.0, 0.5)


def test_trajectory_files_round_trip(tmp_path):
    d1, d2, theta = quad_pair(1, n=3)
    traj = integrate_ode([d1, d2], HALF, theta, 0.05, IntegratorConfig("rk4", 0.01))
    write_trajectory_csv(traj, tmp_path / "t.csv")
    write_checkpoints(traj, tmp_path / "t.gcm")
    times, losses = read_trajectory_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(times, traj.times)
    np.testing.assert_array_equal(losses, traj.per_domain_losses)
    np.testing.assert_array_equal(read_checkpoints(tmp_path / "t.gcm"), traj.checkpoints)
    raw = (tmp_path / "t.gcm").read_bytes()
    assert raw[:4] == b"GCM1" and int.from_bytes(raw[4:8], "little") == 3
    assert len(raw) == 8 + 8 * traj.checkpoints.size
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "time,loss_1,loss_2"
    (tmp_path / "bad.gcm").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ArgumentError):
        read_checkpoints(tmp_path / "bad.gcm")


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.05, 0.95))
def test_mixture_monotone_property(seed, w):
    d1, d2, theta = quad_pair(seed, n=4)
    s = constant_schedule(2, [w, 1 - w])
    traj = integrate_ode([d1, d2], s, theta, 3.0, IntegratorConfig("rk4", 0.01, record_every=5))
    assert isinstance(traj, Trajectory)
    rises = np.diff(traj.mixture_losses())
    assert np.all(rises <= 1e-8 * np.diff(traj.times))
