"""Discrete-time noise schedules and categorical transition matrices.

The forward process at step ``t`` keeps a state with probability
``alpha_t`` and otherwise resamples it from a fixed marginal ``m``::

    Q_t = alpha_t * I + (1 - alpha_t) * 1 m^T

Products of these matrices stay in the same two-parameter family, with the
retention probabilities multiplying, which gives the closed-form cumulative
matrix used for single-shot corruption to any step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidT(ValueError):
    """Horizon must be a positive integer."""


class BadMarginal(ValueError):
    """Marginal must be a probability vector."""


class StepOutOfRange(ValueError):
    """Step index outside the schedule's valid range."""


ALPHA_BAR_FLOOR = 1e-5


def _check_marginal(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1 or m.size == 0:
        raise BadMarginal(f"marginal must be a non-empty vector, got shape {m.shape}")
    if np.any(m < 0) or not np.isfinite(m).all():
        raise BadMarginal("marginal has negative or non-finite entries")
    if abs(m.sum() - 1.0) > 1e-9:
        raise BadMarginal(f"marginal sums to {m.sum()!r}, not 1")
    return m


def transition_matrix(alpha: float, m: np.ndarray) -> np.ndarray:
    """Single-step matrix ``alpha * I + (1 - alpha) * 1 m^T`` (rows sum to 1)."""
    m = _check_marginal(m)
    if not 0.0 < alpha <= 1.0:
        raise StepOutOfRange(f"retention probability {alpha} outside (0, 1]")
    k = m.size
    return alpha * np.eye(k) + (1.0 - alpha) * np.ones((k, 1)) * m[None, :]


def cumulative_transition(alpha_bar: float, m: np.ndarray) -> np.ndarray:
    """Closed form for the product of single-step matrices up to some step."""
    return transition_matrix(alpha_bar, m)


@dataclass(frozen=True)
class NoiseSchedule:
    """Retention probabilities ``alphas[t-1]`` for steps ``1..T``.

    ``alpha_bar(t)`` is the cumulative product, with ``alpha_bar(0) == 1``
    so that step 0 is the clean data.
    """

    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        ab = np.asarray(self.alpha_bars, dtype=np.float64)
        if a.ndim != 1 or a.size < 1:
            raise InvalidT(f"need at least one step, got shape {a.shape}")
        if a.shape != ab.shape:
            raise InvalidT("alphas and alpha_bars must have equal length")
        if np.any(a <= 0) or np.any(a > 1):
            raise InvalidT("retention probabilities must lie in (0, 1]")
        a.setflags(write=False)
        ab.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "alpha_bars", ab)

    @property
    def T(self) -> int:
        return int(self.alphas.size)

    def _check_step(self, t: int, lo: int) -> int:
        t = int(t)
        if not lo <= t <= self.T:
            raise StepOutOfRange(f"step {t} outside [{lo}, {self.T}]")
        return t

    def alpha(self, t: int) -> float:
        """Retention probability of step ``t`` in ``1..T``."""
        return float(self.alphas[self._check_step(t, 1) - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative retention after ``t`` steps, for ``t`` in ``0..T``."""
        t = self._check_step(t, 0)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def transition(self, t: int, m: np.ndarray) -> np.ndarray:
        return transition_matrix(self.alpha(t), m)

    def cumulative(self, t: int, m: np.ndarray) -> np.ndarray:
        return cumulative_transition(self.alpha_bar(t), m)

    @classmethod
    def from_alphas(cls, alphas, enforce_horizon: bool = True) -> "NoiseSchedule":
        """Build from per-step retention probabilities.

        ``enforce_horizon`` requires the chain to end close to the marginal
        (cumulative retention below 0.05); disable only for short synthetic
        chains in tests.
        """
        a = np.asarray(alphas, dtype=np.float64)
        schedule = cls(alphas=a, alpha_bars=np.cumprod(a))
        if enforce_horizon and schedule.alpha_bar(schedule.T) >= 0.05:
            raise InvalidT(
                f"cumulative retention {schedule.alpha_bar(schedule.T):.4f} at the "
                "final step; the chain would not mix to the marginal")
        return schedule


def cosine_schedule(T: int, s0: float = 0.008) -> NoiseSchedule:
    """Cosine-squared cumulative retention, shifted by ``s0`` and normalized
    to start at 1, with a small floor to keep every step usable."""
    if int(T) < 1 or T != int(T):
        raise InvalidT(f"horizon must be a positive integer, got {T!r}")
    T = int(T)
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(0.5 * np.pi * (steps / T + s0) / (1.0 + s0)) ** 2
    bars = np.clip(f / f[0], ALPHA_BAR_FLOOR, 1.0)
    alphas = bars[1:] / bars[:-1]
    return NoiseSchedule(alphas=alphas, alpha_bars=np.cumprod(alphas))
