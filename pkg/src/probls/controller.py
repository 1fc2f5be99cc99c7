"""One probabilistic line search, driven step by step by the caller.

Usage::

    search = begin(f0, df0, sigma_f, sigma_df)
    while True:
        t = search.proposal
        y, dy = evaluate(t)
        outcome = search.step(t, y, dy)
        if outcome is not None:
            break

All bookkeeping happens in a standardized frame where ``y(0) = 0`` and
``y'(0) = -1``; the caller only ever sees raw values and step multiples ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import acquisition, candidates
from .gp import DUPLICATE_TOL, DegenerateSurrogateError, KernelParams, Observation, SurrogatePosterior
from .wolfe import WolfeParams, accept, p_wolfe

DEFAULT_BUDGET = 7
STEP_GROWTH = 1.3
# slopes below this are numerically zero; the standardized frame would overflow
MIN_SLOPE = 1e-300


class NotDescentDirection(ValueError):
    """The projected gradient at ``t = 0`` is not negative (or not usable)."""


class NonFiniteEvaluation(ArithmeticError):
    """Every evaluation of a search overflowed."""


@dataclass(frozen=True)
class SearchFrame:
    f0_raw: float
    df0_raw: float
    sigma_f_scaled: float
    sigma_df_scaled: float

    @property
    def scale(self):
        return abs(self.df0_raw)

    def to_scaled(self, y_raw, dy_raw):
        return (y_raw - self.f0_raw) / self.scale, dy_raw / self.scale


@dataclass(frozen=True)
class SearchOutcome:
    t_accepted: float
    accepted_raw_y: float
    accepted_raw_dy: float
    evals: int
    forced: bool
    p_wolfe: float
    next_alpha0: float | None = None


@dataclass
class SearchState:
    frame: SearchFrame
    posterior: SurrogatePosterior
    wolfe: WolfeParams = WolfeParams()
    budget: int = DEFAULT_BUDGET
    alpha_ext: float = 1.0
    evals_used: int = 0
    proposal: float = 1.0
    alpha0: float | None = None
    alpha_bounds: tuple = (0.0, math.inf)
    proposals: list = field(default_factory=list)
    _raw: dict = field(default_factory=dict, repr=False)

    def step(self, t, y_raw, dy_raw):
        """Feed the evaluation at the pending proposal; return an outcome or ``None``.

        When ``None`` is returned, :attr:`proposal` holds the next ``t`` to evaluate.
        """
        if abs(t - self.proposal) > DUPLICATE_TOL * max(1.0, abs(t)):
            raise ValueError(f"expected an evaluation at t={self.proposal}, got t={t}")
        t = self.proposal
        y, dy = self.frame.to_scaled(y_raw, dy_raw)
        sf2, sdf2 = self.frame.sigma_f_scaled**2, self.frame.sigma_df_scaled**2
        self.evals_used += 1
        if not (math.isfinite(y) and math.isfinite(dy)):
            # overflowed evaluation: never condition on it, back off instead
            if self._raw and self.evals_used >= self.budget:
                return self._finish(self._lowest_mean(), forced=True)
            if self.evals_used >= self.budget:
                raise NonFiniteEvaluation(f"no finite evaluation within budget (last t={t})")
            self.proposal = 0.5 * min([t] + [s for s in self._raw])
            self.proposals.append(self.proposal)
            return None
        self._raw[t] = (y_raw, dy_raw)
        try:
            self.posterior = self.posterior.update(Observation(t, y, dy, sf2, sdf2))
        except DegenerateSurrogateError:
            return self._finish(self._lowest_mean(), forced=True)

        observed = [float(s) for s in self.posterior.ts if s > 0]
        t_acc = accept(observed, self.posterior, self.wolfe)
        if t_acc is not None:
            return self._finish(t_acc, forced=False)
        if self.evals_used >= self.budget:
            return self._finish(self._lowest_mean(), forced=True)

        cand = candidates.generate(self.posterior, self.alpha_ext)
        interior = tuple(c for c in cand.points if not _near_any(c, self.posterior.ts))
        cand = candidates.CandidateList(interior, cand.extrapolation_point, cand.alpha_ext)
        t_next = acquisition.select_next(cand, self.posterior, self.wolfe)
        if t_next == cand.extrapolation_point:
            self.alpha_ext *= 2.0
        self.proposal = t_next
        self.proposals.append(t_next)
        return None

    def _lowest_mean(self):
        observed = [float(s) for s in self.posterior.ts if s > 0 and float(s) in self._raw]
        return min(observed, key=self.posterior.mean)

    def _finish(self, t_acc, forced):
        y_raw, dy_raw = self._raw[t_acc]
        next_alpha0 = None
        if self.alpha0 is not None:
            next_alpha0 = propagate(t_acc, self.alpha0, *self.alpha_bounds)
        return SearchOutcome(
            t_accepted=t_acc,
            accepted_raw_y=y_raw,
            accepted_raw_dy=dy_raw,
            evals=self.evals_used,
            forced=forced,
            p_wolfe=p_wolfe(self.posterior, t_acc, self.wolfe),
            next_alpha0=next_alpha0,
        )


def _near_any(t, ts):
    return any(abs(t - s) <= DUPLICATE_TOL for s in ts)


def begin(f0_raw, df0_raw, sigma_f_raw=0.0, sigma_df_raw=0.0, wolfe=WolfeParams(),
          budget=DEFAULT_BUDGET, *, alpha0=None, alpha_bounds=(0.0, math.inf),
          kernel_params=KernelParams()):
    """Open a line search from ``(f(0), f'(0))`` with the given noise levels (std devs)."""
    if not df0_raw < 0:
        raise NotDescentDirection(f"projected gradient at t=0 must be negative, got {df0_raw}")
    if not (math.isfinite(df0_raw) and math.isfinite(f0_raw)) or -df0_raw < MIN_SLOPE:
        raise NotDescentDirection(f"projected gradient at t=0 is unusable: {df0_raw}")
    if not (sigma_f_raw >= 0 and sigma_df_raw >= 0):
        raise ValueError("noise standard deviations must be nonnegative")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    scale = abs(df0_raw)
    if not (math.isfinite(sigma_f_raw / scale) and math.isfinite(sigma_df_raw / scale)):
        raise NotDescentDirection("noise estimates overflow the standardized frame")
    frame = SearchFrame(f0_raw, df0_raw, sigma_f_raw / scale, sigma_df_raw / scale)
    origin = Observation(0.0, 0.0, -1.0, frame.sigma_f_scaled**2, frame.sigma_df_scaled**2)
    posterior = SurrogatePosterior((origin,), kernel_params)
    return SearchState(frame, posterior, wolfe, budget, alpha0=alpha0,
                       alpha_bounds=alpha_bounds, proposals=[1.0])


def propagate(t_accepted, alpha0_prev, alpha_min=0.0, alpha_max=math.inf):
    """Scale for the next search direction: 1.3 times the accepted step, clamped."""
    if not t_accepted > 0:
        raise ValueError(f"accepted step must be positive, got {t_accepted}")
    return min(alpha_max, max(alpha_min, STEP_GROWTH * t_accepted * alpha0_prev))
