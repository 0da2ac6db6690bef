"""Angle helpers shared by every module (jitted so the trial kernel can call them)."""

import math

from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
    # the division can round across a period boundary near +-pi
    if r > math.pi:
        r -= TWO_PI
    elif r <= -math.pi:
        r += TWO_PI
    return r


@njit(cache=True)
def angle_diff(a: float, b: float) -> float:
    """Absolute wrapped difference |a - b| in [0, pi]."""
    return abs(wrap_angle(a - b))
