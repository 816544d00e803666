"""ToA-based 2D positioning: linear least squares and Gauss-Newton refinement.

The linear solver subtracts the first observation's circle equation from the
rest, giving a system that is exact for noise-free ranges. The iterative
solver runs plain Gauss-Newton on the range residuals and is normally
initialized at the linear solution; an alternative starts near the anchor
with the smallest range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PhysConstants, Position2D, toa_to_range
from .errors import DegenerateGeometry, SingularUpdate, TooFewAnchors

COND_LIMIT = 1e12
ON_ANCHOR_EPS_CM = 1e-9
# Offset applied to the closest-anchor init so the first iterate is never
# exactly on an anchor (which would make the Jacobian row 0/0).
CLOSEST_INIT_NUDGE_CM = 1.0


@dataclass(frozen=True)
class RangeObservation:
    """One anchor position with its estimated range in cm."""

    anchor_pos: Position2D
    range_cm: float

    def __post_init__(self):
        if not np.isfinite(self.range_cm) or self.range_cm < 0:
            raise ValueError("range_cm must be finite and non-negative")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50
    tol_cm: float = 1e-6
    damping: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_cm <= 0:
            raise ValueError("tol_cm must be positive")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")


@dataclass(frozen=True)
class SolveResult:
    position: Position2D
    iterations: int
    converged: bool


@dataclass(frozen=True)
class PositionFix:
    """End-to-end positioning result with solver diagnostics."""

    position: Position2D
    iterations: int
    converged: bool
    init_mode: str
    init_fallback: bool = False


def _obs_arrays(obs):
    anchors = np.array([[o.anchor_pos.x, o.anchor_pos.y] for o in obs])
    ranges = np.array([o.range_cm for o in obs])
    return anchors, ranges


def algo1_lls(obs) -> Position2D:
    """Non-iterative linear least squares position from >= 3 range observations.

    The caller fixes the reference by putting the canonical first anchor at
    obs[0]. Raises DegenerateGeometry when the normal matrix is singular or
    ill-conditioned (e.g. collinear anchors).
    """
    if len(obs) < 3:
        raise TooFewAnchors(f"need >= 3 observations, got {len(obs)}")
    anchors, ranges = _obs_arrays(obs)
    a0, r0 = anchors[0], ranges[0]
    a = anchors[1:]
    r = ranges[1:]
    A = 2.0 * (a - a0)
    b = r0**2 - r**2 + (a**2).sum(axis=1) - (a0**2).sum()
    normal = A.T @ A
    if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > COND_LIMIT:
        raise DegenerateGeometry("anchor geometry does not determine a 2D position")
    p = np.linalg.solve(normal, A.T @ b)
    return Position2D(float(p[0]), float(p[1]))


def algo2_iterative(obs, init: Position2D, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Gauss-Newton iteration on range residuals from an initial position.

    Stops when the step norm drops below tol_cm; a run that exhausts
    max_iters is returned with converged=False rather than raised.
    """
    if len(obs) < 3:
        raise TooFewAnchors(f"need >= 3 observations, got {len(obs)}")
    anchors, ranges = _obs_arrays(obs)
    p = np.array([init.x, init.y], dtype=float)

    for it in range(1, cfg.max_iters + 1):
        diff = p - anchors
        dists = np.linalg.norm(diff, axis=1)
        if np.any(dists < ON_ANCHOR_EPS_CM):
            raise SingularUpdate("iterate coincides with an anchor")
        residuals = dists - ranges
        J = diff / dists[:, None]
        normal = J.T @ J + cfg.damping * np.eye(2)
        if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > COND_LIMIT:
            raise SingularUpdate("Jacobian rank < 2 at the current iterate")
        step = np.linalg.solve(normal, -J.T @ residuals)
        p += step
        if np.linalg.norm(step) < cfg.tol_cm:
            return SolveResult(Position2D(float(p[0]), float(p[1])), it, True)
    return SolveResult(Position2D(float(p[0]), float(p[1])), cfg.max_iters, False)


def _closest_anchor_init(anchors: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    nearest = anchors[int(np.argmin(ranges))]
    centroid = anchors.mean(axis=0)
    direction = centroid - nearest
    norm = np.linalg.norm(direction)
    if norm < ON_ANCHOR_EPS_CM:
        direction, norm = np.array([1.0, 0.0]), 1.0
    return nearest + CLOSEST_INIT_NUDGE_CM * direction / norm


def position_from_toas(
    toas,
    anchor_positions,
    k: PhysConstants = PhysConstants(),
    cfg: SolverConfig = SolverConfig(),
    init_mode: str = "algo1",
) -> PositionFix:
    """Ranges from absolute ToAs, then linear init and Gauss-Newton refinement.

    ``init_mode``: "algo1" (default), "closest_anchor", or "algo1_only" to
    return the linear solution without refinement. Negative ToAs clip to
    range 0. Solver breakdowns degrade to a flagged, unrefined result rather
    than raising, so batch evaluation never aborts on a bad test point.
    """
    toas = np.asarray(toas, dtype=float)
    usable = np.isfinite(toas)
    if usable.sum() < 3:
        raise TooFewAnchors(f"need >= 3 usable ToAs, got {int(usable.sum())}")
    obs = [
        RangeObservation(pos, max(toa_to_range(t, k), 0.0))
        for t, pos in zip(toas, anchor_positions)
        if np.isfinite(t)
    ]
    anchors, ranges = _obs_arrays(obs)

    init_fallback = False
    if init_mode in ("algo1", "algo1_only"):
        try:
            p0 = algo1_lls(obs)
        except DegenerateGeometry:
            centroid = anchors.mean(axis=0)
            p0 = Position2D(float(centroid[0]), float(centroid[1]))
            init_fallback = True
        if init_mode == "algo1_only":
            return PositionFix(p0, 0, True, init_mode, init_fallback)
    elif init_mode == "closest_anchor":
        q = _closest_anchor_init(anchors, ranges)
        p0 = Position2D(float(q[0]), float(q[1]))
    else:
        raise ValueError(f"unknown init_mode {init_mode!r}")

    try:
        res = algo2_iterative(obs, p0, cfg)
    except SingularUpdate:
        return PositionFix(p0, 0, False, init_mode, init_fallback)
    return PositionFix(res.position, res.iterations, res.converged, init_mode, init_fallback)


def positioning_error(est: Position2D, truth: Position2D) -> float:
    """2-norm of the position estimate error, in cm."""
    return est.distance_to(truth)
