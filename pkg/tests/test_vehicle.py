import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsenav.estimator import NoiseConfig
from sparsenav.vehicle import (ControlCommand, PathFollower, VehicleParams, VehicleState,
                               build_path, follow_path, project_on_path, sense, step_bicycle,
                               trace_record, true_increment)

P = VehicleParams()


def test_straight_step():
    s = step_bicycle(VehicleState(0, 0, 0, 10), ControlCommand(0, 0), P)
    assert s.as_tuple() == pytest.approx((1.0, 0.0, 0.0, 10.0), abs=1e-15)


def test_closed_form_turn():
    # hand evaluation: d = 1 m, rho = l / phi = 28.5 m
    s = step_bicycle(VehicleState(0, 0, 0, 10), ControlCommand(0, 0.1), P)
    dth = 1.0 / 28.5
    assert abs(s.theta - dth) < 1e-12
    assert abs(s.x - 28.5 * math.sin(dth)) < 1e-12
    assert abs(s.y - 28.5 * (1 - math.cos(dth))) < 1e-12
    assert s.v == 10


def test_straight_limit_continuity():
    s0 = VehicleState(3.0, -2.0, 0.7, 8.0)
    a = step_bicycle(s0, ControlCommand(0.5, 1e-9), P)
    b = step_bicycle(s0, ControlCommand(0.5, 0.0), P)
    c = step_bicycle(s0, ControlCommand(0.5, 2e-6), P)  # just past the switch
    for u, w in [(a, b), (a, c)]:
        assert max(abs(p - q) for p, q in zip(u.as_tuple(), w.as_tuple())) < 1e-6


@settings(max_examples=200, deadline=None)
@given(v=st.floats(0, 20), a=st.floats(-2, 2), phi=st.floats(-0.55, 0.55),
       th=st.floats(-math.pi, math.pi))
def test_arc_length_identity(v, a, phi, th):
    s0 = VehicleState(0.0, 0.0, th, v)
    s1 = step_bicycle(s0, ControlCommand(a, phi), P)
    d = 0.5 * a * P.dt ** 2 + v * P.dt
    if d < 0:
        return
    got, _ = true_increment(s0, s1)
    assert abs(got - d) < 1e-9
    assert -math.pi < s1.theta <= math.pi


def test_heading_wraps():
    s = VehicleState(0, 0, math.pi - 0.001, 10)
    s1 = step_bicycle(s, ControlCommand(0, 0.5), P)
    assert -math.pi < s1.theta < 0


def test_saturation():
    s = step_bicycle(VehicleState(0, 0, 0, 0), ControlCommand(100.0, 0.0), P)
    assert s.v == pytest.approx(P.a_max * P.dt)


def test_invalid_params():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase=0)


def test_on_path_fixed_point():
    path = np.array([[0.0, 0.0], [500.0, 0.0]])
    u = follow_path(VehicleState(100, 0, 0, P.v_cruise), path)
    assert abs(u.phi) < 1e-9
    assert abs(u.a) < 1e-9


def test_empty_path_holds():
    assert follow_path(VehicleState(0, 0, 0, 5), []) == ControlCommand(0.0, 0.0)


def test_offset_steers_back():
    path = np.array([[0.0, 0.0], [500.0, 0.0]])
    assert follow_path(VehicleState(100, 2.0, 0, 10), path).phi < 0
    assert follow_path(VehicleState(100, -2.0, 0, 10), path).phi > 0


def test_rectangle_lap():
    corners = [(0, 0), (300, 0), (300, 200), (0, 200), (0, 0), (300, 0)]
    path = build_path(corners, 8.0)
    f = PathFollower(path)
    s = VehicleState(0.0, 0.0, 0.0, 0.0)
    worst, travelled = 0.0, 0.0
    for _ in range(4000):
        u = f.command(s)
        s1 = step_bicycle(s, u, P)
        travelled += true_increment(s, s1)[0]
        s = s1
        _, _, cte, _ = project_on_path(s.x, s.y, path, f.cursor)
        worst = max(worst, abs(cte))
        if travelled > 1000 + 100:
            break
    assert travelled > 1000  # one full lap
    assert worst < 1.0


def test_uturn_loop_is_continuous():
    path = build_path([(0, 0), (100, 0), (0, 0)], 8.0)
    steps = np.hypot(*np.diff(path, axis=0).T)
    assert steps.max() < 110
    assert path[:, 1].max() == pytest.approx(16.0, abs=0.1)


def test_zero_noise_sense_is_identity():
    rng = np.random.default_rng(0)
    s0 = VehicleState(0, 0, 0.3, 10)
    s1 = step_bicycle(s0, ControlCommand(0.2, 0.2), P)
    r = sense(s0, s1, NoiseConfig.zero(), rng)
    d, dth = true_increment(s0, s1)
    assert r.odo_distance == pytest.approx(d, abs=1e-12)
    assert r.odo_dtheta == pytest.approx(dth, abs=1e-12)
    assert r.compass == pytest.approx(s1.theta, abs=1e-15)


def test_compass_spread():
    noise = NoiseConfig(compass_2sigma=math.radians(30.0))
    rng = np.random.default_rng(5)
    s0 = VehicleState(0, 0, 0, 10)
    s1 = step_bicycle(s0, ControlCommand(), P)
    z = np.array([sense(s0, s1, noise, rng).compass for _ in range(10000)])
    assert abs(2 * z.std() - math.radians(30.0)) < 0.05 * math.radians(30.0)


def test_quantization_bound():
    noise = NoiseConfig.zero(quantization=True, encoder_counts=4096, wheel_radius=0.35)
    assert noise.tick / 2 == pytest.approx(math.pi * 0.7 / 4096 / 2)
    rng = np.random.default_rng(1)
    s0 = VehicleState(0, 0, 0, 10)
    s1 = step_bicycle(s0, ControlCommand(), P)
    errs = [abs(sense(s0, s1, noise, rng).odo_distance - 1.0) for _ in range(2000)]
    assert max(errs) <= noise.tick / 2 + 1e-12


def test_same_seed_same_readings():
    s0 = VehicleState(0, 0, 0, 10)
    s1 = step_bicycle(s0, ControlCommand(), P)
    a = [sense(s0, s1, NoiseConfig(), np.random.default_rng(3)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_trace_record_fields():
    s0 = VehicleState(0, 0, 0, 10)
    r = sense(s0, s0, NoiseConfig.zero(), np.random.default_rng(0))
    rec = trace_record(4, s0, ControlCommand(), r)
    assert set(rec) == {"step", "truth", "command", "readings"}
