"""Analytic enumeration of evaluation candidates from the piecewise-cubic mean."""
from __future__ import annotations

import math
from dataclasses import dataclass

EDGE_TOL = 1e-10
MIN_STEP = 1e-10


@dataclass(frozen=True)
class CandidateList:
    points: tuple
    extrapolation_point: float
    alpha_ext: float

    @property
    def all_points(self):
        return self.points + (self.extrapolation_point,)


def cell_minimum(d1, d2, d3, t_left, t_right):
    """Local minimizer of the cubic with left-edge derivatives ``d1, d2, d3``.

    Within the cell the mean's derivative is the quadratic
    ``d1 + d2 s + d3 s**2 / 2`` in ``s = t - t_left``. Returns the root with
    positive curvature if it falls in ``(t_left, t_right]`` (edges within
    ``EDGE_TOL``: a stationary point at the left edge belongs to the previous
    cell), else ``None``.
    """
    if not t_left < t_right:
        raise ValueError("cell must have t_left < t_right")
    width = t_right - t_left
    a, b, c = 0.5 * d3, d2, d1
    scale = max(abs(b), abs(c) / width, abs(a) * width, 1e-300)
    roots = []
    if abs(a) * width <= 1e-14 * scale:
        if abs(b) > 1e-14 * scale:
            roots.append(-c / b)
    else:
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
            roots.append(q / a)
            if q != 0.0:
                roots.append(c / q)
    for s in roots:
        if EDGE_TOL < s <= width + EDGE_TOL and d2 + d3 * s > 0.0:
            return t_left + min(s, width)
    return None


def generate(posterior, alpha_ext):
    """Local minima of the posterior mean over ``[0, t_max]`` plus the extrapolation node."""
    if alpha_ext < 1:
        raise ValueError(f"extrapolation step must be >= 1, got {alpha_ext}")
    ts = posterior.ts
    points = []
    for t_left, t_right in zip(ts[:-1], ts[1:]):
        _, d1, d2, d3 = posterior.mean_derivatives(float(t_left))
        t_star = cell_minimum(d1, d2, d3, float(t_left), float(t_right))
        if t_star is None or t_star <= MIN_STEP:
            continue
        if points and abs(points[-1] - t_star) <= EDGE_TOL:
            continue
        points.append(t_star)
    t_max = posterior.t_max
    return CandidateList(tuple(points), t_max + alpha_ext, alpha_ext)
