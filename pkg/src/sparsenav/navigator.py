"""Compass-based intersection navigation with Tabu-style revisit penalties."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import PoseBelief, ellipse_major_axis
from .geometry import angle_diff, wrap_angle

STRAIGHT_TO_GOAL = "straight-to-goal"
LANDMARK_TO_LANDMARK = "landmark-to-landmark"
HYBRID = "hybrid"
STRATEGIES = (STRAIGHT_TO_GOAL, LANDMARK_TO_LANDMARK, HYBRID)


@dataclass(frozen=True)
class DecisionOption:
    index: int
    exit_bearing: float
    goal_bearing: float
    penalty: float = 0.0

    @property
    def cost(self) -> float:
        return float(angle_diff(self.exit_bearing, self.goal_bearing)) + self.penalty


@dataclass(frozen=True)
class NavConfig:
    penalty_step: float = math.pi / 2
    match_radius: float = 30.0
    lookahead: float = 175.0  # predicted travel past the intersection for goal bearings
    # never look further ahead than this fraction of the remaining distance
    lookahead_fraction: float = 0.5
    same_exit_tol: float = math.pi / 4
    uturn_at_through_nodes: bool = False


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = STRAIGHT_TO_GOAL
    hybrid_threshold: float = 50.0
    goal_radius: float = 25.0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if not (self.hybrid_threshold > 0 and self.goal_radius > 0):
            raise ValueError("strategy thresholds must be positive")


@dataclass(frozen=True)
class Visit:
    position: tuple[float, float]
    decisions: tuple[tuple[float, int], ...] = ()  # (exit bearing, repeat count)

    def count_for(self, bearing: float, tol: float = math.pi / 4) -> int:
        for b, n in self.decisions:
            if angle_diff(b, bearing) < tol:
                return n
        return 0


@dataclass(frozen=True)
class IntersectionMemory:
    visits: tuple[Visit, ...] = ()

    def __len__(self) -> int:
        return len(self.visits)


def decide_intersection(options) -> int:
    """Pick the option minimising wrapped |exit - goal bearing| + penalty.

    Ties go to the lowest position in ``options``; returns that option's ``index``.
    """
    if not options:
        raise ValueError("no turning options at this intersection")
    best = None
    best_cost = math.inf
    for opt in options:
        c = opt.cost
        if c < best_cost:
            best, best_cost = opt, c
    return best.index


def match_intersection(mem: IntersectionMemory, est_position, radius: float = 30.0) -> int | None:
    """Index of the nearest remembered visit within ``radius``, else None."""
    if not mem.visits:
        return None
    pos = np.array([v.position for v in mem.visits])
    d = np.hypot(pos[:, 0] - est_position[0], pos[:, 1] - est_position[1])
    k = int(np.argmin(d))
    return k if d[k] <= radius else None


def record_visit(mem: IntersectionMemory, est_position, decision: float,
                 radius: float = 30.0, tol: float = math.pi / 4) -> IntersectionMemory:
    """Return a memory with ``decision`` (an exit bearing) counted at this intersection."""
    k = match_intersection(mem, est_position, radius)
    if k is None:
        visit = Visit((float(est_position[0]), float(est_position[1])),
                      ((float(wrap_angle(decision)), 1),))
        return IntersectionMemory(mem.visits + (visit,))
    old = mem.visits[k]
    decisions = list(old.decisions)
    for i, (b, n) in enumerate(decisions):
        if angle_diff(b, decision) < tol:
            decisions[i] = (b, n + 1)
            break
    else:
        decisions.append((float(wrap_angle(decision)), 1))
    visits = list(mem.visits)
    visits[k] = Visit(old.position, tuple(decisions))
    return IntersectionMemory(tuple(visits))


def penalty_for(mem: IntersectionMemory, est_position, bearing: float,
                cfg: NavConfig = NavConfig()) -> float:
    k = match_intersection(mem, est_position, cfg.match_radius)
    if k is None:
        return 0.0
    return cfg.penalty_step * mem.visits[k].count_for(bearing, cfg.same_exit_tol)


def build_options(est_position, exit_bearings, target, mem: IntersectionMemory,
                  cfg: NavConfig = NavConfig()) -> list[DecisionOption]:
    """Options for each exit: bearing to ``target`` from one lookahead past the junction.

    Near the target the lookahead shrinks so the predicted point cannot overshoot it.
    """
    opts = []
    px, py = float(est_position[0]), float(est_position[1])
    ahead = min(cfg.lookahead,
                cfg.lookahead_fraction * math.hypot(target[0] - px, target[1] - py))
    for i, b in enumerate(exit_bearings):
        qx = px + ahead * math.cos(b)
        qy = py + ahead * math.sin(b)
        phi = math.atan2(target[1] - qy, target[0] - qx)
        opts.append(DecisionOption(i, float(wrap_angle(b)), phi,
                                   penalty_for(mem, (px, py), b, cfg)))
    return opts


def _nearest_qualifying(mean, positions, goal, exclude) -> int | None:
    if len(positions) == 0:
        return None
    pos = np.asarray(positions, dtype=float)
    d_here = math.hypot(goal[0] - mean[0], goal[1] - mean[1])
    d_lm_goal = np.hypot(pos[:, 0] - goal[0], pos[:, 1] - goal[1])
    d_lm_here = np.hypot(pos[:, 0] - mean[0], pos[:, 1] - mean[1])
    ok = d_lm_goal < d_here
    if exclude:
        ok[list(exclude)] = False
    if not ok.any():
        return None
    d_lm_here = np.where(ok, d_lm_here, np.inf)
    return int(np.argmin(d_lm_here))


def select_waypoint(strategy: StrategyConfig, b: PoseBelief, landmarks, goal,
                    exclude=()) -> tuple[float, float]:
    """Where the vehicle steers next under ``strategy``.

    ``exclude`` holds landmark indices already used or abandoned.
    """
    goal = (float(goal[0]), float(goal[1]))
    if strategy.kind == STRAIGHT_TO_GOAL:
        return goal
    if strategy.kind == HYBRID and ellipse_major_axis(b) < strategy.hybrid_threshold:
        return goal
    entries = getattr(landmarks, "entries", landmarks)
    pos = [(m.x, m.y) for m in entries]
    k = _nearest_qualifying(b.mean, pos, goal, exclude)
    return goal if k is None else (float(pos[k][0]), float(pos[k][1]))


def target_landmark(strategy: StrategyConfig, b: PoseBelief, positions: np.ndarray, goal,
                    exclude=()) -> int | None:
    """Index of the landmark :func:`select_waypoint` would steer to (None for the goal)."""
    if strategy.kind == STRAIGHT_TO_GOAL:
        return None
    if strategy.kind == HYBRID and ellipse_major_axis(b) < strategy.hybrid_threshold:
        return None
    return _nearest_qualifying(b.mean, positions, goal, exclude)


def decision_record(est_position, options, chosen: int) -> dict:
    return {"intersection_est": [float(est_position[0]), float(est_position[1])],
            "options": [{"index": o.index, "exit_bearing": o.exit_bearing,
                         "goal_bearing": o.goal_bearing, "penalty": o.penalty,
                         "cost": o.cost} for o in options],
            "chosen": chosen}
