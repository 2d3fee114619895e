"""Reverse-time integration of the bridge and the user-facing procedures.

A score function here is any callable ``score_fn(x, t) -> array`` for the
current endpoint; the bundle-backed one wraps the EMA score network. The
reverse probability-flow velocity is f - g^2 s / 2 + g^2 h and the reverse SDE
drift is f - g^2 s + g^2 h.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from dbae.errors import ContractError, NumericFault
from dbae.train import denormalize_z

KINDS = ("heun_ode", "euler_ode", "euler_maruyama_sde")


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    t_min: float
    steps: int
    spacing: str = "quadratic"

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError("a time grid needs at least one step")
        if not self.t_min < self.t_max:
            raise ContractError("t_min must be below t_max")
        if self.spacing not in ("uniform", "quadratic"):
            raise ContractError(f"unknown spacing {self.spacing!r}")

    @classmethod
    def for_kernel(cls, kernel, steps, spacing="quadratic"):
        return cls(kernel.t_max, kernel.t_min, steps, spacing)

    def times(self):
        """Strictly decreasing times t_N = t_max, ..., t_0 = t_min."""
        u = np.linspace(1.0, 0.0, self.steps + 1)
        if self.spacing == "quadratic":
            u = u * u
        ts = self.t_min + (self.t_max - self.t_min) * u
        ts[0], ts[-1] = self.t_max, self.t_min
        return ts


@dataclass(frozen=True)
class SamplerCfg:
    kind: str = "heun_ode"
    steps: int = 50
    seed: int = 0
    spacing: str = "quadratic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown sampler kind {self.kind!r}")
        if self.steps < 1:
            raise ContractError("steps must be >= 1")

    @property
    def stochastic(self):
        return self.kind == "euler_maruyama_sde"


def ode_velocity(x, t, xT, score_fn, kernel):
    f, g = kernel.schedule.drift_vol(x, t)
    g2 = g * g
    return f - 0.5 * g2 * score_fn(x, t) + g2 * kernel.h_transform(x, t, xT)


def sde_drift(x, t, xT, score_fn, kernel):
    f, g = kernel.schedule.drift_vol(x, t)
    g2 = g * g
    return f - g2 * score_fn(x, t) + g2 * kernel.h_transform(x, t, xT)


def reverse_ode_step(x, t_hi, t_lo, xT, score_fn, kernel, method="heun", corrector=True):
    """One step of the reverse ODE from ``t_hi`` down to ``t_lo``.

    ``method="heun"`` is the explicit trapezoidal predictor-corrector; with
    ``corrector=False`` (or ``method="euler"``) it is a plain Euler step.
    """
    if not t_lo < t_hi:
        raise ContractError("reverse steps need t_lo < t_hi")
    dt = t_lo - t_hi
    v_hi = ode_velocity(x, t_hi, xT, score_fn, kernel)
    x_euler = x + dt * v_hi
    if method == "euler" or not corrector:
        return x_euler
    if method != "heun":
        raise ContractError(f"unknown ODE method {method!r}")
    v_lo = ode_velocity(x_euler, t_lo, xT, score_fn, kernel)
    return x + dt * 0.5 * (v_hi + v_lo)


def reverse_sde_step(x, t_hi, t_lo, xT, score_fn, kernel, rng):
    """Euler-Maruyama step of the reverse SDE with noise scale g(t_hi) sqrt(dt)."""
    if not t_lo < t_hi:
        raise ContractError("reverse steps need t_lo < t_hi")
    dt = t_hi - t_lo
    _, g = kernel.schedule.drift_vol(x, t_hi)
    noise = rng.standard_normal(np.shape(x))
    return x - dt * sde_drift(x, t_hi, xT, score_fn, kernel) + g * np.sqrt(dt) * noise


def solve_reverse(xT, score_fn, kernel, cfg, rng=None, trajectory=None):
    """Integrate from t_max (started at x = x_T) down to t_min.

    Heun uses 2N - 1 score evaluations (no corrector on the final step).
    ``trajectory``, if a list, receives ``(t, x)`` at every node.
    """
    xT = np.asarray(xT, dtype=np.float64)
    ts = TimeGrid.for_kernel(kernel, cfg.steps, cfg.spacing).times()
    x = xT.copy()
    if trajectory is not None:
        trajectory.append((ts[0], x.copy()))
    if cfg.stochastic and rng is None:
        raise ContractError("the SDE sampler needs a random stream")
    for i in range(cfg.steps):
        t_hi, t_lo = ts[i], ts[i + 1]
        if cfg.kind == "heun_ode":
            x = reverse_ode_step(x, t_hi, t_lo, xT, score_fn, kernel, "heun",
                                 corrector=i < cfg.steps - 1)
        elif cfg.kind == "euler_ode":
            x = reverse_ode_step(x, t_hi, t_lo, xT, score_fn, kernel, "euler")
        else:
            x = reverse_sde_step(x, t_hi, t_lo, xT, score_fn, kernel, rng)
        if trajectory is not None:
            trajectory.append((t_lo, x.copy()))
    if not np.all(np.isfinite(x)):
        raise NumericFault("reverse integration produced non-finite values")
    return x


def bundle_score_fn(bundle, xT, z=None, ema=True):
    xT = np.asarray(xT, dtype=np.float64)

    def score_fn(x, t):
        return np.asarray(bundle.score(x, t, xT, z, ema=ema).data, dtype=np.float64)

    return score_fn


def decode_and_reverse(bundle, z, cfg, rng=None, trajectory=None):
    """x_T = Dec(z), then reverse to x0 conditioned on z."""
    z = np.asarray(z, dtype=bundle.dtype)
    xT = bundle.decode(z, ema=True).data
    return solve_reverse(xT, bundle_score_fn(bundle, xT, z), bundle.kernel, cfg, rng, trajectory)


def reconstruct(x0, bundle, cfg, rng=None, trajectory=None):
    """Encode (mean code), decode the endpoint, and integrate back to data.

    With a deterministic encoder and an ODE sampler no random draws are made.
    """
    z, _ = bundle.encode(x0, ema=True, noise_scale=0.0)
    return decode_and_reverse(bundle, z.data, cfg, rng, trajectory)


def sample_latent_prior(prior, n, rng, steps=None, eps_fn=None):
    """Deterministic DDIM over the prior's normalized latent space.

    Draws z_T ~ N(0, I) from ``rng`` and returns denormalized codes.
    """
    if prior.z_stats is None:
        raise ContractError("latent prior has no z normalization stats")
    steps = steps or prior.cfg.sample_steps
    sch = prior.schedule
    ts = np.linspace(sch.t_end, 0.0, steps + 1)
    z = rng.standard_normal((n, prior.latent_dim))
    if eps_fn is None:
        def eps_fn(zz, t):
            return np.asarray(prior.predict_eps(zz, t, ema=True).data, dtype=np.float64)
    for t_hi, t_lo in zip(ts[:-1], ts[1:]):
        a_hi, s_hi = sch.alpha_sigma(t_hi)
        a_lo, s_lo = sch.alpha_sigma(t_lo)
        eps = eps_fn(z, t_hi)
        z0 = (z - s_hi * eps) / a_hi
        z = a_lo * z0 + s_lo * eps
    return denormalize_z(z, prior.z_stats)


def generate(bundle, prior, n, cfg, rng, latent_steps=None, return_nfe=False):
    """Prior z -> Dec -> reverse bridge. NFE = latent steps + data-space score evals."""
    z = sample_latent_prior(prior, n, rng, latent_steps)
    before = bundle.nfe["score"]
    x = decode_and_reverse(bundle, z, cfg, rng)
    if return_nfe:
        return x, {"latent": latent_steps or prior.cfg.sample_steps,
                   "score": bundle.nfe["score"] - before}
    return x


def generate_ae(bundle, z_pool, n, cfg, rng):
    """Like :func:`generate`, but codes come from the empirical encoder distribution."""
    z_pool = np.asarray(z_pool)
    idx = rng.choice(len(z_pool), size=n, replace=len(z_pool) < n)
    return decode_and_reverse(bundle, z_pool[idx], cfg, rng)


def interpolate(x0_a, x0_b, lambdas, bundle, cfg, return_endpoints=False):
    """Decode z^lam = lam z_a + (1 - lam) z_b and reverse, one lam at a time."""
    lambdas = [float(v) for v in lambdas]
    if any(v < 0 or v > 1 for v in lambdas):
        warnings.warn("interpolation weight outside [0, 1]; extrapolating", stacklevel=2)
    z_a = bundle.encode(x0_a, ema=True, noise_scale=0.0)[0].data
    z_b = bundle.encode(x0_b, ema=True, noise_scale=0.0)[0].data
    outs, ends = [], []
    for lam in lambdas:
        z = lam * z_a + (1.0 - lam) * z_b
        xT = bundle.decode(z, ema=True).data
        ends.append(xT)
        outs.append(solve_reverse(xT, bundle_score_fn(bundle, xT, z), bundle.kernel, cfg))
    return (outs, ends) if return_endpoints else outs


def manipulate(x0, direction, strength, bundle, cfg):
    """Shift the code along ``direction`` by ``strength`` and reconstruct from it."""
    direction = np.asarray(direction, dtype=bundle.dtype)
    if direction.shape[-1] != bundle.latent_dim:
        raise ContractError(f"direction must have {bundle.latent_dim} entries")
    z = bundle.encode(x0, ema=True, noise_scale=0.0)[0].data
    z_new = z + strength * direction
    return decode_and_reverse(bundle, z_new, cfg)


def write_trajectory_csv(path, trajectory):
    """Rows ``(path_id, t, x[0..d-1])`` for a list of ``(t, x)`` batch states."""
    d = trajectory[0][1].shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t"] + [f"x{i}" for i in range(d)])
        for t, x in trajectory:
            for pid, row in enumerate(np.atleast_2d(x)):
                w.writerow([pid, repr(float(t))] + [repr(float(v)) for v in row])
