"""Gaussian process surrogate over a univariate objective and its derivative.

The prior is the once-integrated Wiener process on the shifted domain
``t + tau``. Its posterior mean is a piecewise cubic spline with knots at the
observed locations, which is what makes analytic candidate search possible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NOISE_FLOOR = 1e-12
DUPLICATE_TOL = 1e-10
_JITTER_TRIES = 3


class DegenerateSurrogateError(RuntimeError):
    """Raised when the Gram matrix cannot be factorized even with jitter."""


@dataclass(frozen=True)
class KernelParams:
    theta2: float = 1.0
    tau: float = 10.0

    def __post_init__(self):
        if not self.theta2 > 0:
            raise ValueError(f"theta2 must be positive, got {self.theta2}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class Observation:
    """A function value and projected gradient observed at step ``t``."""

    t: float
    y: float
    dy: float
    var_f: float = 0.0
    var_df: float = 0.0

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError(f"observation location must be >= 0, got {self.t}")
        if not (self.var_f >= 0 and self.var_df >= 0):
            raise ValueError("noise variances must be nonnegative")


def kernel(i, j, t, u, params=KernelParams()):
    """Partial derivative ``d^(i+j) k / dt^i du^j`` of the integrated Wiener kernel.

    ``i`` ranges over 0..3 and ``j`` over 0..1. Arrays broadcast. For ``i >= 2``
    the kernel has a kink at ``t == u``; there the right-sided derivative in
    ``t`` is returned.
    """
    if i not in (0, 1, 2, 3) or j not in (0, 1):
        raise ValueError(f"unsupported derivative orders ({i}, {j})")
    a = np.asarray(t, dtype=float) + params.tau
    b = np.asarray(u, dtype=float) + params.tau
    left = a < b
    if (i, j) == (0, 0):
        # min^3/3 + |a-b| min^2/2, written per branch to match the cached rows bit for bit
        val = np.where(left, 0.5 * a * a * b - a**3 / 6.0, 0.5 * b * b * a - b**3 / 6.0)
    elif (i, j) == (0, 1):
        val = np.where(left, 0.5 * a**2, a * b - 0.5 * b**2)
    elif (i, j) == (1, 0):
        val = np.where(left, a * b - 0.5 * a**2, 0.5 * b**2)
    elif (i, j) == (1, 1):
        val = np.minimum(a, b)
    elif (i, j) == (2, 0):
        val = np.where(left, b - a, 0.0)
    elif (i, j) == (2, 1):
        val = np.where(left, 1.0, 0.0)
    elif (i, j) == (3, 0):
        val = np.where(left, -1.0, 0.0)
    else:
        val = np.zeros(np.broadcast(a, b).shape)
    return params.theta2 * val


@dataclass(frozen=True)
class SurrogatePosterior:
    """GP posterior conditioned on a list of observations (always including ``t = 0``).

    Build one with :func:`posterior_from` or grow it with :meth:`update`.
    Instances are immutable; every query is a read.
    """

    obs: tuple
    params: KernelParams = KernelParams()
    ts: np.ndarray = field(init=False, repr=False)
    _chol_inv: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.obs:
            raise ValueError("posterior needs at least one observation")
        obs = tuple(sorted(self.obs, key=lambda o: o.t))
        if obs[0].t != 0.0:
            raise ValueError("the t = 0 observation must be present")
        ts = np.array([o.t for o in obs])
        if np.any(np.diff(ts) <= DUPLICATE_TOL):
            raise ValueError("duplicate observation locations")
        ys = np.array([o.y for o in obs] + [o.dy for o in obs])
        noise = np.array(
            [max(o.var_f, NOISE_FLOOR) for o in obs] + [max(o.var_df, NOISE_FLOOR) for o in obs]
        )
        n = len(ts)
        T, U = ts[:, None], ts[None, :]
        p = self.params
        gram = np.empty((2 * n, 2 * n))
        gram[:n, :n] = kernel(0, 0, T, U, p)
        gram[:n, n:] = kernel(0, 1, T, U, p)
        gram[n:, :n] = gram[:n, n:].T
        gram[n:, n:] = kernel(1, 1, T, U, p)
        gram[np.diag_indices(2 * n)] += noise
        chol = _cholesky_with_jitter(gram)
        chol_inv = np.linalg.solve(chol, np.eye(len(noise)))
        # gram^-1 y = L^-T L^-1 y
        weights = chol_inv.T @ (chol_inv @ ys)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "_chol_inv", chol_inv)
        object.__setattr__(self, "_weights", weights)

    def _cross(self, order, t):
        # one row per t: [k^(order,0)(t, t_k) ..., k^(order,1)(t, t_k) ...]
        if np.ndim(t) == 0:
            return self._rows(float(t))[order][None, :]
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        return np.hstack([kernel(order, 0, t, self.ts, self.params),
                          kernel(order, 1, t, self.ts, self.params)])

    def _rows(self, t):
        # cross-kernel rows for derivative orders 0..3 at a scalar t, memoized
        cache = self.__dict__.setdefault("_row_cache", {})
        rows = cache.get(t)
        if rows is None:
            a = t + self.params.tau
            b = self.ts + self.params.tau
            left = a < b
            zero = np.zeros_like(b)
            one = np.ones_like(b)
            rows = self.params.theta2 * np.array([
                np.concatenate([np.where(left, 0.5 * a * a * b - a**3 / 6.0, 0.5 * b * b * a - b**3 / 6.0),
                                np.where(left, 0.5 * a * a, a * b - 0.5 * b * b)]),
                np.concatenate([np.where(left, a * b - 0.5 * a * a, 0.5 * b * b), np.minimum(a, b)]),
                np.concatenate([np.where(left, b - a, zero), np.where(left, one, zero)]),
                np.concatenate([np.where(left, -one, zero), zero]),
            ])
            cache[t] = rows
        return rows

    @property
    def n_obs(self):
        return len(self.obs)

    @property
    def t_max(self):
        return float(self.ts[-1])

    def update(self, new_obs):
        """Return a new posterior that also conditions on ``new_obs``."""
        if np.any(np.abs(self.ts - new_obs.t) <= DUPLICATE_TOL):
            raise ValueError(f"an observation at t={new_obs.t} already exists")
        return SurrogatePosterior(self.obs + (new_obs,), self.params)

    def mean(self, t, order=0):
        """Posterior mean (or its ``order``-th derivative, up to 3) at ``t``."""
        scalar = np.ndim(t) == 0
        out = self._cross(order, t) @ self._weights
        return float(out[0]) if scalar else out

    def mean_derivatives(self, t):
        """Mean and its first three derivatives at scalar ``t``.

        The second and third derivatives jump at observed locations; the
        right-sided values are returned.
        """
        rows = np.vstack([self._cross(order, t) for order in range(4)])
        return tuple(float(v) for v in rows @ self._weights)

    def covariance(self, i, j, t, u):
        """Posterior covariance between ``f^(i)(t)`` and ``f^(j)(u)`` for ``i, j`` in {0, 1}."""
        if i not in (0, 1) or j not in (0, 1):
            raise ValueError("covariance is defined for f and f' only")
        if np.ndim(t) == 0 and np.ndim(u) == 0:
            t, u = float(t), float(u)
            wl = self._chol_inv @ self._rows(t)[i]
            wr = self._chol_inv @ self._rows(u)[j]
            return float(kernel(i, j, t, u, self.params)) - float(wl @ wr)
        t, u = np.broadcast_arrays(np.atleast_1d(np.asarray(t, dtype=float)),
                                   np.atleast_1d(np.asarray(u, dtype=float)))
        wl = self._cross(i, t) @ self._chol_inv.T
        wr = self._cross(j, u) @ self._chol_inv.T
        return kernel(i, j, t, u, self.params) - np.sum(wl * wr, axis=1)

    def variance(self, t):
        return self.covariance(0, 0, t, t)

    def joint_covariance(self, t):
        """4x4 posterior covariance of ``(f(0), f'(0), f(t), f'(t))``."""
        t = float(t)
        r0, rt = self._rows(0.0), self._rows(t)
        w = np.array([r0[0], r0[1], rt[0], rt[1]]) @ self._chol_inv.T
        # prior covariance of (f(0), f'(0), f(t), f'(t)); 0 <= t so the origin is the smaller point
        a, b = self.params.tau, t + self.params.tau
        prior = self.params.theta2 * np.array([
            [a**3 / 3.0, 0.5 * a * a, 0.5 * a * a * b - a**3 / 6.0, 0.5 * a * a],
            [0.5 * a * a, a, a * b - 0.5 * a * a, a],
            [0.5 * a * a * b - a**3 / 6.0, a * b - 0.5 * a * a, b**3 / 3.0, 0.5 * b * b],
            [0.5 * a * a, a, 0.5 * b * b, b],
        ])
        return prior - w @ w.T


def posterior_from(observations, params=KernelParams()):
    return SurrogatePosterior(tuple(observations), params)


def _cholesky_with_jitter(gram):
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(gram) / gram.shape[0]
    for _ in range(_JITTER_TRIES):
        try:
            return np.linalg.cholesky(gram + jitter * np.eye(gram.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise DegenerateSurrogateError("Gram matrix is not positive definite after jitter")
