"""Probability that the Wolfe conditions hold under the GP belief.

Sufficient decrease and curvature are positivity constraints on two linear
projections ``a_t`` and ``b_t`` of ``(f(0), f'(0), f(t), f'(t))``, so their
joint belief is bivariate Gaussian and the acceptance probability is a
quadrant (or, for the strong variant, a strip) probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .bvn import bvn_prob, phi

DEGENERATE_VAR = 1e-12
RHO_CLIP = 1.0 - 1e-12


@dataclass(frozen=True)
class WolfeParams:
    c1: float = 0.05
    c2: float = 0.8
    threshold: float = 0.3
    strong: bool = True

    def __post_init__(self):
        if not 0.0 <= self.c1 < self.c2 <= 1.0:
            raise ValueError(f"need 0 <= c1 < c2 <= 1, got c1={self.c1}, c2={self.c2}")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {self.threshold}")


@dataclass(frozen=True)
class WolfeBelief:
    t: float
    m_a: float
    m_b: float
    c_aa: float
    c_bb: float
    c_ab: float
    rho: float
    b_bar: float | None = None
    p_wolfe: float | None = None


def wolfe_moments(posterior, t, params=WolfeParams()):
    """Mean and covariance of ``(a_t, b_t)`` (``p_wolfe`` left unset)."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    c1, c2 = params.c1, params.c2
    mu0, dmu0 = posterior.mean(0.0), posterior.mean(0.0, order=1)
    mut, dmut = posterior.mean(t), posterior.mean(t, order=1)
    m_a = mu0 - mut + c1 * t * dmu0
    m_b = dmut - c2 * dmu0

    # joint covariance over (f(0), f'(0), f(t), f'(t))
    K = posterior.joint_covariance(t)
    k00, dk00, dkd00 = K[0, 0], K[0, 1], K[1, 1]
    ktt, kdtt, dkdtt = K[2, 2], K[2, 3], K[3, 3]
    k0t = K[0, 2]
    dk0t = K[1, 2]    # Cov(f'(0), f(t))
    dkt0 = K[3, 0]    # Cov(f'(t), f(0))
    dkd0t = K[1, 3]
    ct = c1 * t
    c_aa = k00 + ct**2 * dkd00 + ktt + 2.0 * (ct * (dk00 - dk0t) - k0t)
    c_bb = c2**2 * dkd00 - 2.0 * c2 * dkd0t + dkdtt
    c_ab = (-c2 * (dk00 + ct * dkd00) + c2 * dk0t + dkt0 + ct * dkd0t - kdtt)
    c_aa, c_bb = max(c_aa, 0.0), max(c_bb, 0.0)
    if c_aa > 0 and c_bb > 0:
        rho = min(RHO_CLIP, max(-RHO_CLIP, c_ab / math.sqrt(c_aa * c_bb)))
    else:
        rho = 0.0
    b_bar = None
    if params.strong:
        b_bar = 2.0 * c2 * (abs(dmu0) + 2.0 * math.sqrt(max(dkd00, 0.0)))
    return WolfeBelief(t, m_a, m_b, c_aa, c_bb, c_ab, rho, b_bar)


def belief_probability(belief):
    """Acceptance probability of a :class:`WolfeBelief`."""
    m_a, m_b, c_aa, c_bb = belief.m_a, belief.m_b, belief.c_aa, belief.c_bb
    b_hi_raw = math.inf if belief.b_bar is None else belief.b_bar
    if any(math.isnan(v) for v in (m_a, m_b, c_aa, c_bb, b_hi_raw)):
        return 0.0
    a_degen = c_aa <= DEGENERATE_VAR
    b_degen = c_bb <= DEGENERATE_VAR

    if a_degen:
        pa = 1.0 if m_a >= 0 else 0.0
    if b_degen:
        pb = 1.0 if 0.0 <= m_b <= b_hi_raw else 0.0
    if a_degen and b_degen:
        return pa * pb
    if a_degen or b_degen:
        if a_degen:
            sb = math.sqrt(c_bb)
            hi = phi((b_hi_raw - m_b) / sb) if b_hi_raw < math.inf else 1.0
            return pa * max(0.0, hi - phi(-m_b / sb))
        return pb * (1.0 - phi(-m_a / math.sqrt(c_aa)))

    sa, sb = math.sqrt(c_aa), math.sqrt(c_bb)
    b_high = math.inf if b_hi_raw == math.inf else (b_hi_raw - m_b) / sb
    b_low = -m_b / sb
    if b_high < b_low:
        return 0.0
    return bvn_prob(a_low=-m_a / sa, a_high=math.inf, b_low=b_low, b_high=b_high, rho=belief.rho)


def wolfe_belief(posterior, t, params=WolfeParams()):
    """:class:`WolfeBelief` at ``t`` with ``p_wolfe`` filled in."""
    belief = wolfe_moments(posterior, t, params)
    return WolfeBelief(**{**belief.__dict__, "p_wolfe": belief_probability(belief)})


def p_wolfe(posterior, t, params=WolfeParams()):
    return belief_probability(wolfe_moments(posterior, t, params))


def accept(observed_ts, posterior, params=WolfeParams()):
    """Observed node with ``p_wolfe > threshold`` and lowest posterior mean, or ``None``."""
    best, best_mu = None, math.inf
    for t in observed_ts:
        if t <= 0 or p_wolfe(posterior, t, params) <= params.threshold:
            continue
        mu = posterior.mean(t)
        if mu < best_mu:
            best, best_mu = t, mu
    return best
