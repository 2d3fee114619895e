"""Variance-preserving forward SDE and its scalar time functions.

All functions accept a float or an array of times and broadcast. Linear
schedules interpolate ``beta`` from ``beta_min`` at t=0 to ``beta_max`` at
t=T; a constant schedule has ``beta_min == beta_max``.
"""

from dataclasses import dataclass

import numpy as np

from dbae.errors import DomainError


@dataclass(frozen=True)
class VpSchedule:
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_end: float = 1.0
    quadrature_steps: int = 1000

    def __post_init__(self):
        if not (self.beta_min > 0 and self.beta_max > 0):
            raise ValueError("beta must be positive on [0, T]")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.quadrature_steps < 1:
            raise ValueError("quadrature_steps must be a positive integer")

    @classmethod
    def constant(cls, rate, t_end=1.0, quadrature_steps=1000):
        return cls(rate, rate, t_end, quadrature_steps)

    @property
    def is_constant(self):
        return self.beta_min == self.beta_max

    def _check(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.t_end) or np.any(np.isnan(t)):
            raise DomainError(f"time outside [0, {self.t_end}]: {t}")
        return t

    def beta(self, t):
        t = self._check(t)
        return self.beta_min + (t / self.t_end) * (self.beta_max - self.beta_min)

    def beta_integral(self, t):
        """Closed-form primitive of beta from 0 to t."""
        t = self._check(t)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t / self.t_end

    def beta_integral_numeric(self, t):
        """Composite Simpson estimate of the same primitive (verification only)."""
        t = float(self._check(t))
        n = 2 * self.quadrature_steps
        s = np.linspace(0.0, t, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return float(np.dot(w, self.beta(s)) * (t / n) / 3.0)

    def drift_vol(self, x, t):
        """Return ``(f(x, t), g(t))`` = ``(-beta(t) x / 2, sqrt(beta(t)))``."""
        b = self.beta(t)
        return -0.5 * b * x, np.sqrt(b)

    def alpha_sigma(self, t):
        big_b = self.beta_integral(t)
        return np.exp(-0.5 * big_b), np.sqrt(-np.expm1(-big_b))

    def snr(self, t):
        """alpha^2 / sigma^2; infinite at t = 0."""
        big_b = self.beta_integral(t)
        with np.errstate(divide="ignore"):
            return 1.0 / np.expm1(big_b)

    def snr_ratio(self, t):
        """SNR(T) / SNR(t), extended continuously by R(0) = 0."""
        return np.expm1(self.beta_integral(t)) / np.expm1(self.beta_integral(self.t_end))

    def one_minus_snr_ratio(self, t):
        """1 - R(t) without cancellation near t = T."""
        bt = self.beta_integral(t)
        bT = self.beta_integral(self.t_end)
        return np.exp(bt) * np.expm1(bT - bt) / np.expm1(bT)

    def to_dict(self):
        return {"beta_min": self.beta_min, "beta_max": self.beta_max,
                "t_end": self.t_end, "quadrature_steps": self.quadrature_steps}
