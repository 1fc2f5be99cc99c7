"""Standard normal and bivariate normal probabilities.

The bivariate upper-orthant routine follows Drezner & Wesolowsky (1990) with
Genz's double-precision modifications for ``|rho|`` near one: a Gauss-Legendre
rule on the Plackett/Owen integral, with the node count picked by ``|rho|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_INF = math.inf
_TWOPI = 2.0 * math.pi


def _half_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    keep = x > 0
    return x[keep], w[keep]


# (nodes, weights) on the positive half of [-1, 1]; rule is symmetric
_RULES = {n: _half_rule(n) for n in (6, 12, 20)}


def phi(x):
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


_CLIP = 40.0


def upper_orthant(h, k, rho):
    """``P(X > h, Y > k)`` for a standard bivariate normal with correlation ``rho``."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    # beyond |40| the normal tail underflows, so clipping is exact in double precision
    if h >= _CLIP or k >= _CLIP:
        return 0.0
    h = -_INF if h <= -_CLIP else h
    k = -_INF if k <= -_CLIP else k
    if h == -_INF:
        return 1.0 if k == -_INF else phi(-k)
    if k == -_INF:
        return phi(-h)
    if rho == 1.0:
        return phi(-max(h, k))
    if rho == -1.0:
        # Y = -X: need h < X < -k
        return max(0.0, phi(-h) - phi(k))
    if rho == 0.0:
        return phi(-h) * phi(-k)

    r = abs(rho)
    x, w = _RULES[6 if r < 0.3 else 12 if r < 0.75 else 20]
    hk = h * k
    if r < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(rho)
        sn = np.sin(asr * np.concatenate([1.0 + x, 1.0 - x]) / 2.0)
        ww = np.concatenate([w, w])
        bvn = float(ww @ np.exp((sn * hk - hs) / (1.0 - sn * sn)))
        bvn = bvn * asr / (2.0 * _TWOPI) + phi(-h) * phi(-k)
    else:
        if rho < 0:
            k = -k
            hk = -hk
        as_ = (1.0 - rho) * (1.0 + rho)
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -0.5 * (bs / as_ + hk)
        bvn = 0.0
        if asr > -100.0:
            bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                                       + c * d * as_ * as_ / 5.0)
        if hk > -100.0:
            b = math.sqrt(bs)
            bvn -= (math.exp(-hk / 2.0) * math.sqrt(_TWOPI) * phi(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
        a /= 2.0
        xs = (a * np.concatenate([1.0 + x, 1.0 - x])) ** 2
        ww = np.concatenate([w, w])
        rs = np.sqrt(1.0 - xs)
        asr = -0.5 * (bs / xs + hk)
        ok = asr > -100.0
        terms = (np.exp(asr[ok])
                 * (np.exp(-hk * (1.0 - rs[ok]) / (2.0 * (1.0 + rs[ok]))) / rs[ok]
                    - (1.0 + c * xs[ok] * (1.0 + d * xs[ok]))))
        bvn = -(bvn + a * float(ww[ok] @ terms)) / _TWOPI
        if rho > 0:
            bvn += phi(-max(h, k))
        else:
            bvn = -bvn + max(0.0, phi(-h) - phi(-k))
    return min(1.0, max(0.0, bvn))


@dataclass(frozen=True)
class BvnQuery:
    a_low: float
    a_high: float
    b_low: float
    b_high: float
    rho: float

    def __post_init__(self):
        if not self.a_low <= self.a_high or not self.b_low <= self.b_high:
            raise ValueError("integration limits must satisfy low <= high")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.rho}")


def bvn_prob(query=None, /, **limits):
    """Rectangle probability ``P(a_low <= A <= a_high, b_low <= B <= b_high)``.

    Accepts a :class:`BvnQuery` or its fields as keywords.
    """
    q = query if query is not None else BvnQuery(**limits)
    al, ah, bl, bh, rho = q.a_low, q.a_high, q.b_low, q.b_high, q.rho
    if rho == 1.0:
        return max(0.0, phi(min(ah, bh)) - phi(max(al, bl)))
    if rho == -1.0:
        # B = -A
        lo, hi = max(al, -bh), min(ah, -bl)
        return max(0.0, phi(hi) - phi(lo))
    terms = [upper_orthant(al, bl, rho)]
    if ah < _INF:
        terms.append(-upper_orthant(ah, bl, rho))
    if bh < _INF:
        terms.append(-upper_orthant(al, bh, rho))
    if ah < _INF and bh < _INF:
        terms.append(upper_orthant(ah, bh, rho))
    return min(1.0, max(0.0, math.fsum(terms)))
