"""Closed-form mathematics of the pinned VP bridge.

Conventions: ``x`` arrays are (d,) or (batch, d); a time may be a float or a
(batch,) array, in which case it is broadcast over the trailing axis. Apart
from the random draw in :meth:`BridgeKernel.sample_bridge` every method is
pure, and the affine ones (``bridge_stats``, ``x0_from_score``,
``score_from_x0``) also accept :class:`dbae.nn.Tensor` operands so the training
losses differentiate through them.
"""

from dataclasses import dataclass, field

import numpy as np

from dbae.errors import ShapeError, SingularityError
from dbae.schedule import VpSchedule


def _col(t, x):
    """Shape a time (scalar or per-row array) to broadcast against ``x``."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    ndim = x.ndim if hasattr(x, "ndim") else np.ndim(x)
    return t.reshape(t.shape + (1,) * (ndim - t.ndim))


def gaussian_h(x, y, a, v):
    """Score in ``x`` of log N(y; a x, v I): ``(a / v) (y - a x)``."""
    return (a / v) * (y - a * x)


@dataclass(frozen=True)
class BridgeKernel:
    schedule: VpSchedule = field(default_factory=VpSchedule)
    eps_t: float = 1e-4

    @property
    def t_min(self):
        return self.eps_t * self.schedule.t_end

    @property
    def t_max(self):
        return (1.0 - self.eps_t) * self.schedule.t_end

    def _tol(self):
        return 1e-12 * self.schedule.t_end

    def check_interior(self, t, lower=True):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t > self.t_max + self._tol()):
            raise SingularityError(f"t={t} too close to T={self.schedule.t_end}; "
                                   f"admissible upper limit is {self.t_max}")
        if lower and np.any(t < self.t_min - self._tol()):
            raise SingularityError(f"t={t} too close to 0; admissible lower limit is {self.t_min}")
        return t

    def h_coeffs(self, t):
        """``(a, v)`` of the transition N(x_T; a x_t, v I) from t to T."""
        t = self.check_interior(t, lower=False)
        sch = self.schedule
        gap = sch.beta_integral(sch.t_end) - sch.beta_integral(t)
        return np.exp(-0.5 * gap), -np.expm1(-gap)

    def h_transform(self, x_t, t, y):
        """Doob drift correction grad_{x_t} log q(x_T = y | x_t)."""
        if np.shape(x_t) != np.shape(y):
            raise ShapeError(f"x_t {np.shape(x_t)} vs y {np.shape(y)}")
        a, v = self.h_coeffs(t)
        return gaussian_h(x_t, y, _col(a, x_t), _col(v, x_t))

    def mean_coeffs(self, t):
        """Coefficients ``(c_T, c_0)`` of the bridge mean c_T x_T + c_0 x_0 and the std."""
        sch = self.schedule
        alpha_t, sigma_t = sch.alpha_sigma(t)
        alpha_T, _ = sch.alpha_sigma(sch.t_end)
        r = sch.snr_ratio(t)
        one_m_r = sch.one_minus_snr_ratio(t)
        return r * alpha_t / alpha_T, alpha_t * one_m_r, sigma_t * np.sqrt(one_m_r)

    def bridge_stats(self, x0, xT, t):
        """Mean and (isotropic) std of q(x_t | x_0, x_T)."""
        shape0 = x0.shape if hasattr(x0, "shape") else np.shape(x0)
        shapeT = xT.shape if hasattr(xT, "shape") else np.shape(xT)
        if tuple(shape0) != tuple(shapeT):
            raise ShapeError(f"x0 {shape0} vs xT {shapeT}")
        c_T, c_0, std = self.mean_coeffs(t)
        return _col(c_T, xT) * xT + _col(c_0, x0) * x0, std

    def sample_bridge(self, x0, xT, t, rng):
        mean, std = self.bridge_stats(x0, xT, t)
        eps = rng.standard_normal(np.shape(x0))
        return mean + _col(std, x0) * eps

    def bridge_score(self, x_t, x0, xT, t):
        """grad_{x_t} log q(x_t | x_0, x_T) = (mean - x_t) / std^2."""
        self.check_interior(t)
        mean, std = self.bridge_stats(x0, xT, t)
        return (mean - x_t) / _col(std * std, x_t)

    def x0_coeffs(self, t):
        """``(alpha(t), beta(t), gamma(t), lambda(t))`` of the pred-x map.

        x0_hat = alpha x_t + beta x_T + gamma s inverts the bridge score, and
        g^2 |s - s*|^2 = lambda |x0_hat - x0|^2 holds exactly with
        lambda = g^2 alpha_t^2 / sigma_t^4.
        """
        t = self.check_interior(t)
        sch = self.schedule
        alpha_t, sigma_t = sch.alpha_sigma(t)
        alpha_T, _ = sch.alpha_sigma(sch.t_end)
        r = sch.snr_ratio(t)
        one_m_r = sch.one_minus_snr_ratio(t)
        var_t = sigma_t * sigma_t
        g2 = sch.beta(t)
        return (1.0 / (alpha_t * one_m_r), -r / (alpha_T * one_m_r), var_t / alpha_t,
                g2 * alpha_t * alpha_t / (var_t * var_t))

    def x0_from_score(self, x_t, t, xT, s):
        a, b, c, _ = self.x0_coeffs(t)
        return _col(a, x_t) * x_t + _col(b, x_t) * xT + _col(c, x_t) * s

    def score_from_x0(self, x_t, t, xT, x0_hat):
        self.check_interior(t)
        mean, std = self.bridge_stats(x0_hat, xT, t)
        return (mean - x_t) / _col(std * std, x_t)
