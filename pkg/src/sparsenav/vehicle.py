"""Ground-truth vehicle: kinematic bicycle model, path following and noisy sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .estimator import NoiseConfig
from .geometry import wrap_angle

STRAIGHT_EPS = 1e-6


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.theta, self.v)


@dataclass(frozen=True)
class ControlCommand:
    a: float = 0.0
    phi: float = 0.0


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.85
    dt: float = 0.1
    phi_max: float = 0.55
    a_max: float = 2.0
    v_cruise: float = 10.0

    def __post_init__(self):
        if not (self.wheelbase > 0 and self.dt > 0):
            raise ValueError("wheelbase and dt must be positive")

    def saturate(self, u: ControlCommand) -> ControlCommand:
        return ControlCommand(min(max(u.a, -self.a_max), self.a_max),
                              min(max(u.phi, -self.phi_max), self.phi_max))


@dataclass(frozen=True)
class ControllerGains:
    lookahead_min: float = 4.0
    lookahead_time: float = 0.6  # lookahead grows with speed
    steer_kp: float = 0.02
    steer_ki: float = 0.0
    steer_kd: float = 0.0
    speed_kp: float = 1.0
    speed_ki: float = 0.05
    speed_kd: float = 0.0
    v_turn: float = 5.0
    slow_distance: float = 20.0  # start slowing this far before a turn
    turn_radius: float = 8.0


@dataclass(frozen=True)
class SensorReadings:
    odo_distance: float
    odo_dtheta: float
    compass: float | None


# --- model cores -------------------------------------------------------------

@njit(cache=True)
def bicycle_increment(v, a, phi, dt, wheelbase):
    """Body-frame (dx, dy, dtheta) and travelled distance for one step."""
    d = 0.5 * a * dt * dt + v * dt
    if abs(phi) < STRAIGHT_EPS:
        return d, d * d * phi / (2.0 * wheelbase), d * phi / wheelbase, d
    rho = wheelbase / phi
    dth = d / rho
    # 1 - cos(x) written as 2 sin^2(x/2) to avoid cancellation at small angles
    h = math.sin(0.5 * dth)
    return rho * math.sin(dth), 2.0 * rho * h * h, dth, d


@njit(cache=True)
def bicycle_step(x, y, th, v, a, phi, dt, wheelbase):
    dx, dy, dth, d = bicycle_increment(v, a, phi, dt, wheelbase)
    c, s = math.cos(th), math.sin(th)
    return (x + dx * c - dy * s, y + dx * s + dy * c, wrap_angle(th + dth), v + a * dt, d, dth)


def step_bicycle(s: VehicleState, u: ControlCommand, p: VehicleParams) -> VehicleState:
    """Advance the rear-axle state by one step of the kinematic bicycle model."""
    u = p.saturate(u)
    x, y, th, v, _, _ = bicycle_step(s.x, s.y, s.theta, s.v, u.a, u.phi, p.dt, p.wheelbase)
    return VehicleState(x, y, th, v)


# --- path generation and following ----------------------------------------------

def _fillet(prev, corner, nxt, radius, spacing=1.0):
    u = corner - prev
    w = nxt - corner
    u /= np.linalg.norm(u)
    w /= np.linalg.norm(w)
    turn = math.atan2(u[0] * w[1] - u[1] * w[0], float(u @ w))
    if abs(turn) < 1e-6:
        return [corner]
    left = np.array([-u[1], u[0]])
    if abs(abs(turn) - math.pi) < 1e-6:
        # reversal (dead end): loop around a circle to the left of the road
        centre = corner + radius * left
        n = max(8, int(math.pi * radius / spacing))
        start = -left
        pts = []
        for k in range(n + 1):
            ang = math.atan2(start[1], start[0]) + math.pi * k / n
            pts.append(centre + radius * np.array([math.cos(ang), math.sin(ang)]))
        return pts
    t = radius * math.tan(abs(turn) / 2.0)
    side = 1.0 if turn > 0 else -1.0
    t1 = corner - t * u
    centre = t1 + side * radius * left
    a0 = math.atan2(t1[1] - centre[1], t1[0] - centre[0])
    n = max(2, int(abs(turn) * radius / spacing))
    return [centre + radius * np.array([math.cos(a0 + side * turn * k / n),
                                        math.sin(a0 + side * turn * k / n)])
            for k in range(n + 1)]


def build_path(waypoints, turn_radius: float = 8.0) -> np.ndarray:
    """Polyline through ``waypoints`` with circular fillets at every turn.

    Returns an (n, 2) array; straight runs are kept as single segments.
    """
    w = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(w) <= 2:
        return w.copy()
    pts = [w[0]]
    for i in range(1, len(w) - 1):
        pts.extend(_fillet(w[i - 1].copy(), w[i], w[i + 1].copy(), turn_radius))
    pts.append(w[-1])
    out = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - out[-1])) > 1e-9:
            out.append(p)
    return np.array(out)


@njit(cache=True)
def project_on_path(x, y, path, cursor):
    """Advance ``cursor`` to the segment under (x, y).

    Returns (cursor, t, cross-track error, segment length); the error is
    positive when the point lies left of the path.
    """
    n = path.shape[0]
    while True:
        ax, ay = path[cursor, 0], path[cursor, 1]
        dx, dy = path[cursor + 1, 0] - ax, path[cursor + 1, 1] - ay
        seg = math.sqrt(dx * dx + dy * dy)
        t = ((x - ax) * dx + (y - ay) * dy) / (seg * seg)
        if t > 1.0 and cursor < n - 2:
            cursor += 1
            continue
        cte = (dx * (y - ay) - dy * (x - ax)) / seg
        return cursor, t, cte, seg


@njit(cache=True)
def point_ahead(path, cursor, t, dist):
    """Point ``dist`` metres along the path from parameter t on segment ``cursor``."""
    n = path.shape[0]
    i = cursor
    tt = max(t, 0.0)
    while True:
        ax, ay = path[i, 0], path[i, 1]
        dx, dy = path[i + 1, 0] - ax, path[i + 1, 1] - ay
        seg = math.sqrt(dx * dx + dy * dy)
        left = (1.0 - tt) * seg
        if dist <= left or i == n - 2:
            s = tt + dist / seg
            if i == n - 2 and s > 1.0:
                s = 1.0
            return ax + s * dx, ay + s * dy
        dist -= left
        i += 1
        tt = 0.0


@njit(cache=True)
def pursuit_command(x, y, th, v, path, cursor, slow_s, cum_s, ctrl, gains, vp):
    """Steering/speed PID around a pure-pursuit law.

    ``ctrl`` holds controller memory [cte_int, cte_prev, v_int, v_err_prev,
    initialised flag] and is updated in place. ``gains`` packs
    ControllerGains in declaration order; ``vp`` packs
    [wheelbase, dt, phi_max, a_max, v_cruise]. ``slow_s`` lists path
    arc-length positions of upcoming turns; ``cum_s`` holds cumulative
    arc length at each path vertex.
    Returns (a, phi, cursor, cte).
    """
    wheelbase, dt, phi_max, a_max, v_cruise = vp[0], vp[1], vp[2], vp[3], vp[4]
    cursor, t, cte, seg = project_on_path(x, y, path, cursor)
    ld = max(gains[0], gains[1] * v)
    lx, ly = point_ahead(path, cursor, t, ld)
    alpha = wrap_angle(math.atan2(ly - y, lx - x) - th)
    phi = 2.0 * wheelbase * math.sin(alpha) / ld
    if ctrl[4] == 0.0:
        ctrl[1] = cte
        ctrl[3] = 0.0
        ctrl[4] = 1.0
    ctrl[0] += cte * dt
    dcte = (cte - ctrl[1]) / dt
    ctrl[1] = cte
    phi -= gains[2] * cte + gains[3] * ctrl[0] + gains[4] * dcte
    phi = min(max(phi, -phi_max), phi_max)

    s_here = cum_s[cursor] + min(max(t, 0.0), 1.0) * seg
    v_target = v_cruise
    for k in range(slow_s.shape[0]):
        ahead = slow_s[k] - s_here
        if -gains[10] * 1.5 <= ahead <= gains[9]:
            v_target = gains[8]
    remaining = cum_s[cum_s.shape[0] - 1] - s_here
    # stop at the end of the known path
    v_stop = math.sqrt(max(2.0 * 0.5 * a_max * max(remaining - 2.0, 0.0), 0.0))
    v_target = min(v_target, v_stop)
    err = v_target - v
    ctrl[2] += err * dt
    derr = (err - ctrl[3]) / dt
    ctrl[3] = err
    a = gains[5] * err + gains[6] * ctrl[2] + gains[7] * derr
    a = min(max(a, -a_max), a_max)
    if v + a * dt < 0.0:
        a = -v / dt
    return a, phi, cursor, cte


def gains_vector(g: ControllerGains) -> np.ndarray:
    return np.array([g.lookahead_min, g.lookahead_time, g.steer_kp, g.steer_ki, g.steer_kd,
                     g.speed_kp, g.speed_ki, g.speed_kd, g.v_turn, g.slow_distance,
                     g.turn_radius], dtype=float)


def params_vector(p: VehicleParams) -> np.ndarray:
    return np.array([p.wheelbase, p.dt, p.phi_max, p.a_max, p.v_cruise], dtype=float)


def turn_positions(path: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative arc length per vertex and the arc-length positions of bends."""
    seg = np.hypot(*np.diff(path, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if len(path) < 3:
        return cum, np.zeros(0)
    d = np.diff(path, axis=0)
    head = np.arctan2(d[:, 1], d[:, 0])
    bend = np.abs((np.diff(head) + np.pi) % (2 * np.pi) - np.pi) > math.radians(3.0)
    return cum, cum[1:-1][bend]


@dataclass
class PathFollower:
    """Stateful wrapper over :func:`pursuit_command` for step-by-step use."""

    path: np.ndarray
    params: VehicleParams = field(default_factory=VehicleParams)
    gains: ControllerGains = field(default_factory=ControllerGains)

    def __post_init__(self):
        self.path = np.asarray(self.path, dtype=float).reshape(-1, 2)
        if len(self.path) == 1:
            self.path = np.vstack([self.path, self.path + [1e-6, 0.0]])
        self.cursor = 0
        self.memory = np.zeros(5)
        self.cum_s, self.slow_s = turn_positions(self.path)
        self._g = gains_vector(self.gains)
        self._p = params_vector(self.params)
        self.last_cte = 0.0

    def command(self, s: VehicleState) -> ControlCommand:
        a, phi, self.cursor, self.last_cte = pursuit_command(
            s.x, s.y, s.theta, s.v, self.path, self.cursor, self.slow_s, self.cum_s,
            self.memory, self._g, self._p)
        return ControlCommand(a, phi)


def follow_path(s: VehicleState, path, p: VehicleParams | None = None,
                gains: ControllerGains | None = None) -> ControlCommand:
    """One-shot controller output for ``s`` against ``path`` (fresh PID memory).

    An empty path holds the vehicle (zero command).
    """
    path = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(path) == 0:
        return ControlCommand(0.0, 0.0)
    return PathFollower(path, p or VehicleParams(), gains or ControllerGains()).command(s)


# --- sensing ---------------------------------------------------------------

@njit(cache=True)
def wheel_odometry(d, dth, track, slip, tick, n_r, n_l, u_r, u_l):
    """Noisy (distance, heading change) from two wheel encoders.

    ``n_*`` are standard normals (slip), ``u_*`` uniforms on [-0.5, 0.5]
    (quantization, in ticks).
    """
    dr = d + 0.5 * track * dth
    dl = d - 0.5 * track * dth
    mr = dr * (1.0 + slip * n_r) + tick * u_r
    ml = dl * (1.0 + slip * n_l) + tick * u_l
    return 0.5 * (mr + ml), (mr - ml) / track


def true_increment(s_prev: VehicleState, s: VehicleState) -> tuple[float, float]:
    """Arc length and heading change between two consecutive states."""
    dth = wrap_angle(s.theta - s_prev.theta)
    chord = math.hypot(s.x - s_prev.x, s.y - s_prev.y)
    if abs(dth) < 1e-9:
        return chord, dth
    return chord * (0.5 * dth) / math.sin(0.5 * dth), dth


def sense(s_prev: VehicleState, s: VehicleState, noise: NoiseConfig,
          rng: np.random.Generator) -> SensorReadings:
    d, dth = true_increment(s_prev, s)
    n = rng.standard_normal(3)
    u = rng.random(2) - 0.5
    tick = noise.tick if noise.quantization else 0.0
    odo, odo_dth = wheel_odometry(d, dth, noise.track, noise.slip_sigma, tick,
                                  n[0], n[1], u[0], u[1])
    sig = noise.compass_sigma
    compass = None if sig is None else float(wrap_angle(s.theta + sig * n[2]))
    return SensorReadings(float(odo), float(odo_dth), compass)


def trace_record(step: int, s: VehicleState, u: ControlCommand, r: SensorReadings) -> dict:
    return {"step": step,
            "truth": {"x": s.x, "y": s.y, "theta": s.theta, "v": s.v},
            "command": {"a": u.a, "phi": u.phi},
            "readings": {"odo_distance": r.odo_distance, "odo_dtheta": r.odo_dtheta,
                         "compass": r.compass}}
