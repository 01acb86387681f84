"""Mean-reverting diffusion: closed-form forward process, exact score, and
reverse-time Euler-Maruyama integration.

The forward process is dy = alpha(t) (mu - y) dt + beta(t) dV with the
solvability condition beta(t)^2 = 2 kappa^2 alpha(t), so the transition
from step s to step t is Gaussian with

    mean = mu + (y_s - mu) exp(-A(s:t)),   var = kappa^2 (1 - exp(-2 A(s:t))),

where A(s:t) is the integral of alpha between the two times. Reverse
integration replaces the unknown score with either the exact conditional
score (oracle mode) or a learned noise predictor.

All state arrays are plain float64 ndarrays shaped like images (N,C,H,W);
nothing here participates in gradient tapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SdeSchedule",
    "SdeState",
    "make_schedule",
    "transition_stats",
    "forward_sample",
    "exact_score",
    "reverse_step",
    "reverse_integrate",
    "DEFAULT_STEPS",
    "DEFAULT_KAPPA",
]

DEFAULT_STEPS = 300
DEFAULT_KAPPA = 90.0 / 255.0  # stationary std in normalized [0,1] pixel units
DEFAULT_ALPHA_SCALE = 6.0


@dataclass(frozen=True)
class SdeSchedule:
    """Discretized mean-reversion process.

    ``alpha[i]`` is the reversion rate on step i+1 (1-based time indices
    1..T; index 0 is the clean state). ``cum_alpha[t]`` is the integral of
    alpha over (0, t], so ``cum_alpha[0] == 0``. ``beta`` satisfies
    beta^2 = 2 kappa^2 alpha exactly at every step.
    """

    steps: int
    kappa: float
    dt: float
    alpha: np.ndarray
    beta: np.ndarray
    cum_alpha: np.ndarray

    def integral_alpha(self, s: int, t: int) -> float:
        """Integral of alpha over steps s+1..t."""
        return float(self.cum_alpha[t] - self.cum_alpha[s])

    def sigma(self, t: int, s: int = 0) -> float:
        """Transition std from step s to step t."""
        a = self.integral_alpha(s, t)
        return self.kappa * np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * a)))


@dataclass
class SdeState:
    """Current integration state: value, reversion target, time index."""

    y: np.ndarray
    mu: np.ndarray
    t_index: int

    def __post_init__(self):
        if self.y.shape != self.mu.shape:
            raise ValueError(f"state/target shape mismatch: {self.y.shape} vs {self.mu.shape}")


def make_schedule(steps: int = DEFAULT_STEPS, kappa: float = DEFAULT_KAPPA,
                  profile: str = "constant", alpha_scale: float = DEFAULT_ALPHA_SCALE) -> SdeSchedule:
    """Build a schedule with dt = 1/steps and the chosen alpha profile.

    Profiles: ``constant`` sets alpha to alpha_scale everywhere; ``linear``
    ramps up; ``cosine`` ramps smoothly from near zero. All profiles are
    normalized so the total integral of alpha over [0,1] is alpha_scale.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if kappa <= 0 or alpha_scale <= 0:
        raise ValueError("kappa and alpha_scale must be positive")
    dt = 1.0 / steps
    i = np.arange(1, steps + 1, dtype=np.float64)
    if profile == "constant":
        alpha = np.full(steps, alpha_scale)
    elif profile == "linear":
        w = (2.0 * i - 1.0) / steps
        alpha = alpha_scale * steps * w / w.sum()
    elif profile == "cosine":
        w = 1.0 - np.cos(np.pi * (i - 0.5) / steps)
        alpha = alpha_scale * steps * w / w.sum()
    else:
        raise ValueError(f"unknown profile: {profile!r}")
    beta = np.sqrt(2.0 * kappa * kappa * alpha)
    cum = np.concatenate([[0.0], np.cumsum(alpha) * dt])
    return SdeSchedule(steps=steps, kappa=kappa, dt=dt, alpha=alpha, beta=beta, cum_alpha=cum)


def _check_times(schedule: SdeSchedule, s: int, t: int) -> None:
    if not (0 <= s <= t <= schedule.steps):
        raise ValueError(f"need 0 <= s <= t <= T, got s={s}, t={t}, T={schedule.steps}")


def transition_stats(schedule: SdeSchedule, y_s: np.ndarray, mu: np.ndarray,
                     s: int, t: int) -> tuple[np.ndarray, float]:
    """Gaussian transition mean and variance from step s to step t."""
    _check_times(schedule, s, t)
    if y_s.shape != mu.shape:
        raise ValueError("y_s and mu must be shape-equal")
    a = schedule.integral_alpha(s, t)
    decay = np.exp(-a)
    mean = mu + (y_s - mu) * decay
    var = schedule.kappa ** 2 * (1.0 - np.exp(-2.0 * a))
    return mean, float(var)


def forward_sample(schedule: SdeSchedule, y0: np.ndarray, mu: np.ndarray, t: int,
                   rng_seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw y_t from the closed-form transition; returns (y_t, noise).

    ``rng_seed`` may be an int seed or a Generator. The returned noise is
    the standard normal draw, kept so exact_score can be cross-checked.
    """
    _check_times(schedule, 0, t)
    mean, var = transition_stats(schedule, y0, mu, 0, t)
    if t == 0:
        return y0.copy(), np.zeros_like(y0)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    noise = rng.standard_normal(y0.shape)
    return mean + np.sqrt(var) * noise, noise


def exact_score(schedule: SdeSchedule, y_t: np.ndarray, y0: np.ndarray,
                mu: np.ndarray, t: int) -> np.ndarray:
    """Conditional score of the transition density at y_t: -(y_t - m_t)/var_t."""
    if t == 0:
        raise ValueError("score undefined at t=0 (zero transition variance)")
    mean, var = transition_stats(schedule, y0, mu, 0, t)
    return -(y_t - mean) / var


def reverse_step(schedule: SdeSchedule, state: SdeState, score: np.ndarray,
                 rng_seed=None, deterministic: bool = False) -> SdeState:
    """One reverse-time Euler-Maruyama step from t_index to t_index - 1.

    Update: y' = y - [alpha (mu - y) - beta^2 score] dt + beta sqrt(dt) z,
    with the noise dropped when deterministic.
    """
    t = state.t_index
    if t < 1:
        raise ValueError("reverse_step requires t_index >= 1")
    if t > schedule.steps:
        raise ValueError(f"t_index {t} beyond schedule length {schedule.steps}")
    a = schedule.alpha[t - 1]
    b = schedule.beta[t - 1]
    drift = a * (state.mu - state.y) - b * b * score
    y_next = state.y - drift * schedule.dt
    if not deterministic:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        y_next = y_next + b * np.sqrt(schedule.dt) * rng.standard_normal(state.y.shape)
    return SdeState(y=y_next, mu=state.mu, t_index=t - 1)


def reverse_integrate(schedule: SdeSchedule, y_terminal: np.ndarray, mu: np.ndarray,
                      score_fn, rng_seed=None, deterministic: bool = False,
                      callback=None) -> np.ndarray:
    """Integrate the reverse SDE from step T down to 0.

    ``score_fn(y, t)`` supplies the score at each step (exact_score closure
    for oracle runs, a network wrapper for restoration). One standard
    normal field is drawn per step in descending t order, so trajectories
    are bitwise reproducible for a given seed.
    """
    rng = None
    if not deterministic:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    state = SdeState(y=y_terminal.copy(), mu=mu, t_index=schedule.steps)
    while state.t_index > 0:
        score = score_fn(state.y, state.t_index)
        state = reverse_step(schedule, state, score, rng_seed=rng, deterministic=deterministic)
        if callback is not None:
            callback(state)
    return state.y
