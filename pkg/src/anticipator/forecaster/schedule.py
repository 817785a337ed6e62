"""Linear variance schedule and the closed-form forward/reverse diffusion updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays are indexed by diffusion step t = 1..T at position t - 1."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    @property
    def T(self) -> int:
        return self.beta.size

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"diffusion step {t} outside 1..{self.T}")


def schedule_from_betas(beta) -> NoiseSchedule:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.size < 1 or np.any(beta <= 0) or np.any(beta >= 1):
        raise ValueError("every beta must lie in (0, 1)")
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    post = beta.copy()
    post[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    for a in (beta, alpha, alpha_bar, post):
        a.setflags(write=False)
    return NoiseSchedule(beta, alpha, alpha_bar, post)


def build_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.1) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        return schedule_from_betas([beta_start])
    return schedule_from_betas(np.linspace(beta_start, beta_end, T))


def noise_sample(x0, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    """Corrupt ``x0`` directly to step ``t``: sqrt(abar) x0 + sqrt(1 - abar) eps."""
    schedule.check_step(t)
    ab = schedule.alpha_bar[t - 1]
    return np.sqrt(ab) * np.asarray(x0, dtype=np.float64) + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=np.float64)


def noise_batch(x0: np.ndarray, t: np.ndarray, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Row-wise ``noise_sample`` for x0 of shape (B, m) and integer steps t of shape (B,)."""
    ab = schedule.alpha_bar[np.asarray(t) - 1][:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def reverse_sigma(schedule: NoiseSchedule, t: int, literal_variance: bool = False) -> float:
    """Standard deviation of the noise added when stepping from t to t - 1.

    ``literal_variance`` uses (1 - abar[t-1]) / (1 - abar[t]) without the beta
    factor.
    """
    if t <= 1:
        return 0.0
    if literal_variance:
        ab = schedule.alpha_bar
        return float(np.sqrt((1.0 - ab[t - 2]) / (1.0 - ab[t - 1])))
    return float(np.sqrt(schedule.posterior_var[t - 1]))


def denoise_step(x_t, t: int, eps_hat, schedule: NoiseSchedule, noise=None,
                 literal_variance: bool = False) -> np.ndarray:
    """One ancestral sampling step x_t -> x_{t-1}.

    ``noise`` is the standard-normal draw; it is ignored at t = 1.
    """
    schedule.check_step(t)
    a = schedule.alpha[t - 1]
    b = schedule.beta[t - 1]
    ab = schedule.alpha_bar[t - 1]
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = (x_t - b / np.sqrt(1.0 - ab) * np.asarray(eps_hat, dtype=np.float64)) / np.sqrt(a)
    if t == 1 or noise is None:
        return mean
    return mean + reverse_sigma(schedule, t, literal_variance) * np.asarray(noise, dtype=np.float64)
