"""Jitted inner loop of a trial: drive, sense, estimate until something needs Python.

The loop runs the same cores as the public API (bicycle_step, pursuit_command,
wheel_odometry, predict_inplace, compass_inplace) and returns an event code
whenever the harness has to act: a decision point, a landmark pass, the goal,
the lost criterion, an exhausted noise buffer or the step budget.
"""

import math

from numba import njit

from .estimator import compass_inplace, major_axis_of, odometry_variances, predict_inplace
from .geometry import wrap_angle
from .vehicle import bicycle_step, pursuit_command, wheel_odometry

EV_BUDGET = 0
EV_DECIDE = 1
EV_GOAL = 2
EV_LOST = 3
EV_LANDMARK = 4
EV_BUFFER = 5
EV_CAP = 6
EV_STALL = 7

# int state slots
I_CURSOR, I_STEP, I_BUF, I_COMPASS, I_LM = 0, 1, 2, 3, 4
# stop-condition slots
S_NODE_X, S_NODE_Y, S_APPROACH, S_GOAL_X, S_GOAL_Y, S_GOAL_R, S_LOST, S_CAP, S_SENSE = range(9)
# noise parameter slots
N_TRACK, N_SLIP, N_TICK, N_QUANT, N_COMPASS, N_EVERY, N_QTH = range(7)


@njit(cache=True)
def drive(truth, mean, cov, ctrl, ist, acc, stop, npar, path, cum_s, slow_s, gains, vp,
          buf, lm_pos, lm_state, cand, max_steps):
    """Advance up to ``max_steps`` steps; returns an event code.

    truth = [x, y, theta, v]; acc = [true distance, measured odometry];
    lm_state rows = [inside, last distance, fired] per landmark, checked only
    for indices in ``cand``.
    """
    dt, wheelbase = vp[1], vp[0]
    csig = npar[N_COMPASS]
    every = int(npar[N_EVERY])
    for _ in range(max_steps):
        k = ist[I_BUF]
        if k >= buf.shape[0]:
            return EV_BUFFER
        a, phi, cur, cte = pursuit_command(truth[0], truth[1], truth[2], truth[3], path,
                                           ist[I_CURSOR], slow_s, cum_s, ctrl, gains, vp)
        ist[I_CURSOR] = cur
        x, y, th, v, d, dth = bicycle_step(truth[0], truth[1], truth[2], truth[3], a, phi,
                                           dt, wheelbase)
        truth[0], truth[1], truth[2], truth[3] = x, y, th, v
        ist[I_BUF] = k + 1
        odo, odth = wheel_odometry(d, dth, npar[N_TRACK], npar[N_SLIP], npar[N_TICK],
                                   buf[k, 0], buf[k, 1], buf[k, 2], buf[k, 3])
        vd, va, cda = odometry_variances(odo, odth, npar[N_SLIP], npar[N_TICK], npar[N_TRACK],
                                         npar[N_QUANT] > 0.5)
        predict_inplace(mean, cov, odo, odth, vd, va, cda, npar[N_QTH])
        ist[I_STEP] += 1
        acc[0] += d
        acc[1] += odo
        if csig >= 0.0:
            ist[I_COMPASS] += 1
            if ist[I_COMPASS] >= every:
                ist[I_COMPASS] = 0
                compass_inplace(mean, cov, wrap_angle(th + csig * buf[k, 4]), csig * csig)

        if major_axis_of(cov) > stop[S_LOST]:
            return EV_LOST
        if math.hypot(x - stop[S_GOAL_X], y - stop[S_GOAL_Y]) <= stop[S_GOAL_R]:
            return EV_GOAL
        for j in range(cand.shape[0]):
            m = cand[j]
            dist = math.hypot(x - lm_pos[m, 0], y - lm_pos[m, 1])
            if dist <= stop[S_SENSE]:
                if lm_state[m, 0] == 0.0:
                    lm_state[m, 0] = 1.0
                    lm_state[m, 1] = dist
                    lm_state[m, 2] = 0.0
                elif lm_state[m, 2] == 0.0 and dist > lm_state[m, 1]:
                    # moving away again: closest approach was the previous step
                    lm_state[m, 2] = 1.0
                    lm_state[m, 1] = dist
                    ist[I_LM] = m
                    return EV_LANDMARK
                else:
                    lm_state[m, 1] = dist
            elif lm_state[m, 0] != 0.0:
                fired = lm_state[m, 2]
                lm_state[m, 0] = 0.0
                if fired == 0.0:
                    # left the radius while still closing (coarse step); count the pass
                    lm_state[m, 2] = 1.0
                    ist[I_LM] = m
                    return EV_LANDMARK
        if stop[S_APPROACH] > 0.0 and \
                math.hypot(x - stop[S_NODE_X], y - stop[S_NODE_Y]) <= stop[S_APPROACH]:
            return EV_DECIDE
        if acc[0] >= stop[S_CAP]:
            return EV_CAP
        if v < 1e-3 and a <= 0.0 and cum_s[cum_s.shape[0] - 1] - cum_s[cur] < 5.0:
            return EV_STALL
    return EV_BUDGET
