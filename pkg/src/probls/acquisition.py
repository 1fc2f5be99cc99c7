"""Expected improvement weighted by the Wolfe probability."""
from __future__ import annotations

import math

from .wolfe import WolfeParams, p_wolfe


def expected_improvement(mu, var, eta):
    """``E[max(0, eta - f)]`` for ``f ~ N(mu, var)``."""
    if var < 0:
        raise ValueError(f"variance must be nonnegative, got {var}")
    diff = eta - mu
    if var == 0.0:
        return max(0.0, diff)
    sd = math.sqrt(var)
    z = diff / sd
    ei = 0.5 * diff * math.erfc(-z / math.sqrt(2.0)) + sd * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return max(0.0, ei)


def incumbent(posterior):
    """Lowest posterior mean over the observed locations (including ``t = 0``)."""
    return float(min(posterior.mean(posterior.ts)))


def scores(points, posterior, params=WolfeParams()):
    eta = incumbent(posterior)
    out = []
    for t in points:
        ei = expected_improvement(posterior.mean(t), max(posterior.variance(t), 0.0), eta)
        out.append(ei * p_wolfe(posterior, t, params) if ei > 0 else 0.0)
    return out


def select_next(candidates, posterior, params=WolfeParams()):
    """Candidate maximizing EI times ``p_wolfe``; ties go to the smaller ``t``."""
    points = sorted(candidates.all_points)
    best_t, best_score = points[0], -1.0
    for t, s in zip(points, scores(points, posterior, params)):
        if s > best_score:
            best_t, best_score = t, s
    return best_t
