"""Lightweight sparse pose estimator: EKF over [x, y, theta].

Odometry drives the prediction (distance plus wheel-differential heading
change), a compass corrects heading, and sparse landmark fixes correct
position. The lost criterion and landmark gating both read the 2-sigma
position ellipse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .geometry import wrap_angle


class GateRejected(ValueError):
    """A landmark fix fell outside the Mahalanobis gate (likely false association)."""


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor and process noise. Angles in radians; ``compass_2sigma=None`` disables the compass."""

    compass_2sigma: float | None = math.radians(30.0)
    compass_rate_hz: float = 5.0
    encoder_counts: int = 4096
    wheel_radius: float = 0.35
    # 1-sigma multiplicative wheel slip per wheel reading, calibrated so dead reckoning
    # without a compass stays within the lost threshold for about 300 m
    slip_sigma: float = 0.0123
    track: float = 1.7  # wheel separation for differential heading odometry
    landmark_fix_sigma: float = 5.0
    q_theta: float = math.radians(0.1) ** 2  # heading random-walk floor per predict
    init_pos_sigma: float = 2.0
    init_heading_sigma: float = math.radians(2.0)
    quantization: bool = True

    @property
    def tick(self) -> float:
        """Wheel travel between two encoder counts."""
        return 2.0 * math.pi * self.wheel_radius / self.encoder_counts

    @property
    def compass_sigma(self) -> float | None:
        return None if self.compass_2sigma is None else 0.5 * self.compass_2sigma

    @classmethod
    def zero(cls, **overrides) -> "NoiseConfig":
        base = cls(compass_2sigma=0.0, slip_sigma=0.0, q_theta=0.0, init_pos_sigma=0.0,
                   init_heading_sigma=0.0, quantization=False)
        return replace(base, **overrides)

    def validate(self) -> None:
        vals = [self.compass_rate_hz, self.wheel_radius, self.slip_sigma, self.track,
                self.landmark_fix_sigma, self.q_theta, self.init_pos_sigma,
                self.init_heading_sigma, self.encoder_counts]
        if self.compass_2sigma is not None:
            vals.append(self.compass_2sigma)
        if any(v < 0 for v in vals):
            raise ValueError("noise parameters must be non-negative")
        if self.track <= 0 or self.encoder_counts <= 0:
            raise ValueError("track and encoder_counts must be positive")


@dataclass(frozen=True, eq=False)
class PoseBelief:
    mean: np.ndarray
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(3).copy())
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(3, 3).copy())

    @classmethod
    def initial(cls, x: float, y: float, theta: float, noise: NoiseConfig) -> "PoseBelief":
        cov = np.diag([noise.init_pos_sigma ** 2, noise.init_pos_sigma ** 2,
                       noise.init_heading_sigma ** 2])
        return cls(np.array([x, y, wrap_angle(theta)]), cov)

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]


@dataclass(frozen=True)
class LandmarkFix:
    id: int
    x: float
    y: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("landmark fix sigma must be positive")


# --- jitted cores (also used by the trial kernel) -------------------------------

@njit(cache=True)
def arc_terms(d, a):
    """Body-frame arc displacement for distance ``d`` and heading change ``a``.

    Returns (dx, dy, ddx/dd, ddy/dd, ddx/da, ddy/da).
    """
    if abs(a) < 1e-6:
        return (d * (1.0 - a * a / 6.0), d * a * 0.5,
                1.0 - a * a / 6.0, 0.5 * a,
                -d * a / 3.0, d * (0.5 - a * a / 8.0))
    s, c = math.sin(a), math.cos(a)
    h = math.sin(0.5 * a)
    omc = 2.0 * h * h  # 1 - cos(a) without cancellation
    return (d * s / a, d * omc / a,
            s / a, omc / a,
            d * (a * c - s) / (a * a), d * (a * s - omc) / (a * a))


@njit(cache=True)
def odometry_variances(d, dth, slip, tick, track, quantization):
    """(var_d, var_dtheta, cov) of the averaged/differenced wheel readings."""
    dr = d + 0.5 * track * dth
    dl = d - 0.5 * track * dth
    q = tick * tick / 12.0 if quantization else 0.0
    vr = slip * slip * dr * dr + q
    vl = slip * slip * dl * dl + q
    return 0.25 * (vr + vl), (vr + vl) / (track * track), 0.5 * (vr - vl) / track


@njit(cache=True)
def predict_inplace(mean, cov, d, dth, var_d, var_a, cov_da, q_th):
    th = mean[2]
    dx, dy, gxd, gyd, gxa, gya = arc_terms(d, dth)
    c, s = math.cos(th), math.sin(th)
    mean[0] += dx * c - dy * s
    mean[1] += dx * s + dy * c
    mean[2] = wrap_angle(th + dth)
    f02 = -dx * s - dy * c
    f12 = dx * c - dy * s
    # noise Jacobian columns for (d, dtheta)
    g0d = gxd * c - gyd * s
    g1d = gxd * s + gyd * c
    g0a = gxa * c - gya * s
    g1a = gxa * s + gya * c
    p00, p01, p02 = cov[0, 0], cov[0, 1], cov[0, 2]
    p11, p12, p22 = cov[1, 1], cov[1, 2], cov[2, 2]
    # F P F^T with F = [[1,0,f02],[0,1,f12],[0,0,1]]
    n00 = p00 + 2.0 * f02 * p02 + f02 * f02 * p22
    n01 = p01 + f02 * p12 + f12 * p02 + f02 * f12 * p22
    n02 = p02 + f02 * p22
    n11 = p11 + 2.0 * f12 * p12 + f12 * f12 * p22
    n12 = p12 + f12 * p22
    n22 = p22
    # G Q G^T with G = [[g0d,g0a],[g1d,g1a],[0,1]]
    n00 += g0d * g0d * var_d + 2.0 * g0d * g0a * cov_da + g0a * g0a * var_a
    n01 += g0d * g1d * var_d + (g0d * g1a + g0a * g1d) * cov_da + g0a * g1a * var_a
    n02 += g0d * cov_da + g0a * var_a
    n11 += g1d * g1d * var_d + 2.0 * g1d * g1a * cov_da + g1a * g1a * var_a
    n12 += g1d * cov_da + g1a * var_a
    n22 += var_a + q_th
    cov[0, 0] = n00
    cov[0, 1] = n01
    cov[1, 0] = n01
    cov[0, 2] = n02
    cov[2, 0] = n02
    cov[1, 1] = n11
    cov[1, 2] = n12
    cov[2, 1] = n12
    cov[2, 2] = n22


@njit(cache=True)
def compass_inplace(mean, cov, z, r):
    """Scalar heading update in Joseph form; returns the wrapped innovation."""
    nu = wrap_angle(z - mean[2])
    s = cov[2, 2] + r
    if s <= 0.0:
        return nu
    k0 = cov[0, 2] / s
    k1 = cov[1, 2] / s
    k2 = cov[2, 2] / s
    mean[0] += k0 * nu
    mean[1] += k1 * nu
    mean[2] = wrap_angle(mean[2] + k2 * nu)
    # (I - K H) P (I - K H)^T + K r K^T, H = [0, 0, 1]
    a = np.eye(3)
    a[0, 2] -= k0
    a[1, 2] -= k1
    a[2, 2] -= k2
    k = np.array([k0, k1, k2])
    new = a @ cov @ a.T + r * np.outer(k, k)
    for i in range(3):
        for j in range(3):
            cov[i, j] = 0.5 * (new[i, j] + new[j, i])
    return nu


@njit(cache=True)
def major_axis_of(cov):
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    half = 0.5 * (a - c)
    lam = 0.5 * (a + c) + math.sqrt(half * half + b * b)
    return 4.0 * math.sqrt(max(lam, 0.0))


# --- public value-semantics API ------------------------------------------------

def predict(b: PoseBelief, odo: float, dtheta: float = 0.0,
            noise: NoiseConfig | None = None) -> PoseBelief:
    """Dead-reckon by ``odo`` metres along an arc turning ``dtheta``.

    ``dtheta = 0`` holds the heading (straight advance along the current estimate).
    """
    if odo < 0:
        raise ValueError("odometry distance must be non-negative")
    noise = noise or NoiseConfig()
    var_d, var_a, cov_da = odometry_variances(odo, dtheta, noise.slip_sigma, noise.tick,
                                              noise.track, noise.quantization)
    mean, cov = b.mean.copy(), b.cov.copy()
    predict_inplace(mean, cov, float(odo), float(dtheta), var_d, var_a, cov_da, noise.q_theta)
    return PoseBelief(mean, cov)


def update_compass(b: PoseBelief, z: float, sigma: float) -> PoseBelief:
    if not sigma > 0:
        raise ValueError("compass sigma must be positive")
    mean, cov = b.mean.copy(), b.cov.copy()
    compass_inplace(mean, cov, float(z), float(sigma) ** 2)
    return PoseBelief(mean, cov)


def landmark_distance(b: PoseBelief, x: float, y: float, extra_var: float = 0.0) -> float:
    """Mahalanobis distance of a point from the position estimate."""
    off = np.array([x, y]) - b.mean[:2]
    s = b.cov[:2, :2] + extra_var * np.eye(2)
    if not off.any():
        return 0.0
    try:
        return float(math.sqrt(max(off @ np.linalg.solve(s, off), 0.0)))
    except np.linalg.LinAlgError:
        return math.inf


def update_landmark(b: PoseBelief, fix: LandmarkFix, gate: float = 2.0) -> PoseBelief:
    """Fuse a direct (x, y) position observation with covariance sigma^2 I."""
    r = fix.sigma ** 2
    if landmark_distance(b, fix.x, fix.y, extra_var=r) > gate:
        raise GateRejected(f"landmark {fix.id} outside the {gate}-sigma gate")
    h = np.zeros((2, 3))
    h[0, 0] = h[1, 1] = 1.0
    s = h @ b.cov @ h.T + r * np.eye(2)
    k = np.linalg.solve(s, h @ b.cov).T
    nu = np.array([fix.x, fix.y]) - b.mean[:2]
    mean = b.mean + k @ nu
    mean[2] = wrap_angle(mean[2])
    a = np.eye(3) - k @ h
    cov = a @ b.cov @ a.T + r * (k @ k.T)
    return PoseBelief(mean, 0.5 * (cov + cov.T))


def ellipse_major_axis(b: PoseBelief) -> float:
    """Full major-axis length of the 2-sigma position ellipse, 4 sqrt(lambda_max)."""
    return float(major_axis_of(b.cov))


def is_lost(b: PoseBelief, threshold: float = 100.0) -> bool:
    return ellipse_major_axis(b) > threshold


def gate_landmarks(b: PoseBelief, landmarks, radius: float = 2.0) -> list:
    """Landmarks inside the 2-sigma position ellipse (boundary inclusive)."""
    entries = getattr(landmarks, "entries", landmarks)
    if not len(entries):
        return []
    pos = np.array([(m.x, m.y) for m in entries], dtype=float)
    off = pos - b.mean[:2]
    p = b.cov[:2, :2]
    zero = ~off.any(axis=1)
    try:
        d2 = np.einsum("ij,ij->i", off, np.linalg.solve(p, off.T).T)
    except np.linalg.LinAlgError:
        d2 = np.where(zero, 0.0, np.inf)
    # tolerate rounding on the boundary
    keep = zero | (d2 <= radius * radius * (1.0 + 1e-12))
    return [m for m, k in zip(entries, keep) if k]


def belief_record(b: PoseBelief, step: int, threshold: float = 100.0) -> dict:
    iu = np.triu_indices(3)
    axis = ellipse_major_axis(b)
    return {"step": step, "mean": b.mean.tolist(), "cov_upper": b.cov[iu].tolist(),
            "major_axis_m": axis, "lost": axis > threshold}
