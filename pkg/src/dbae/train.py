"""Autoencoding loss, total-correlation regularizer and the latent prior.

Stage one trains encoder, decoder and score network jointly on the bridge
loss (optionally plus a TC penalty). Stage two freezes them, normalizes the
inferred codes and fits a small epsilon-prediction diffusion model to them.
"""

import logging
import time
import warnings
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from dbae.bridge import _col
from dbae.errors import ContractError, DegenerateLatentError, NumericFault
from dbae.nn import (Mlp, ParamStore, Tape, Tensor, adam_step, concat, ema_update,
                     global_grad_norm, logsumexp, pairwise_gauss_logpdf, square, tabs,
                     time_embed)
from dbae.schedule import VpSchedule

log = logging.getLogger(__name__)

LOSS_FORMS = ("score_matching", "x0_weighted", "x0_simple")


@dataclass(frozen=True)
class TrainCfg:
    batch_size: int = 128
    lr: float = 1e-3
    ema_rate: float = 0.999
    total_steps: int = 5000
    t_sampling: str = "uniform"
    loss_form: str = "x0_simple"
    tc_weight: float = 0.0
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.loss_form not in LOSS_FORMS:
            raise ContractError(f"unknown loss form {self.loss_form!r}")
        if self.t_sampling != "uniform":
            raise ContractError("only uniform time sampling is supported")
        if self.tc_weight < 0:
            raise ContractError("tc_weight must be non-negative")


def sample_times(kernel, n, rng):
    return rng.uniform(kernel.t_min, kernel.t_max, size=n)


def ae_forward(batch, bundle, rng, t=None):
    """Run Enc -> Dec -> bridge sample -> x0 prediction on one batch.

    Draw order from ``rng``: times, encoder noise (gaussian mode), bridge noise.
    """
    x0 = np.asarray(batch, dtype=bundle.dtype)
    n = x0.shape[0]
    kernel = bundle.kernel
    if t is None:
        t = sample_times(kernel, n, rng)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    z, moments = bundle.encode(x0, rng)
    xT = bundle.decode(z)
    mean, std = kernel.bridge_stats(x0, xT, t)
    eps = rng.standard_normal(x0.shape).astype(bundle.dtype)
    x_t = mean + _col(std, x0) * eps
    x0_hat = bundle.predict_x0(x_t, t, xT, z)
    return SimpleNamespace(x0=x0, t=t, z=z, moments=moments, xT=xT, x_t=x_t, x0_hat=x0_hat)


def ae_loss_per_sample(fwd, kernel, form):
    """Per-sample loss of a forward pass under one of the three loss forms."""
    if form == "score_matching":
        s = kernel.score_from_x0(fwd.x_t, fwd.t, fwd.xT, fwd.x0_hat)
        target = kernel.bridge_score(fwd.x_t, fwd.x0, fwd.xT, fwd.t)
        g2 = kernel.schedule.beta(fwd.t)
        return 0.5 * g2 * square(s - target).sum(axis=1)
    if form == "x0_weighted":
        lam = kernel.x0_coeffs(fwd.t)[3]
        return 0.5 * lam * square(fwd.x0_hat - fwd.x0).sum(axis=1)
    if form == "x0_simple":
        return 0.5 * square(fwd.x0_hat - fwd.x0).sum(axis=1)
    raise ContractError(f"unknown loss form {form!r}")


def loss_ae(batch, bundle, rng, form="x0_simple", t=None):
    fwd = ae_forward(batch, bundle, rng, t)
    return ae_loss_per_sample(fwd, bundle.kernel, form).mean(), fwd


def _log_weights(n, dataset_size):
    """Log importance weights of the minibatch-weighted estimate of q(z_i).

    Row i puts 1/N on its own posterior and (N - 1) / (N (M - 1)) on each other
    one, so every row sums to one and the estimate is consistent in N.
    """
    big_n = max(float(dataset_size), float(n))
    w = np.full((n, n), (big_n - 1.0) / (big_n * (n - 1)))
    np.fill_diagonal(w, 1.0 / big_n)
    with np.errstate(divide="ignore"):
        return np.log(w)


def loss_tc(enc_moments, z_samples, dataset_size):
    """Minibatch-weighted-sampling estimate of the total correlation of q(z)."""
    if enc_moments is None:
        raise ContractError("TC regularization needs a gaussian encoder")
    mu, log_sigma = enc_moments
    n = z_samples.shape[0]
    if n < 2:
        raise ContractError("TC estimate needs a batch of at least 2")
    logq = pairwise_gauss_logpdf(z_samples, mu, log_sigma)  # (i, j, k)
    logw = _log_weights(n, dataset_size).astype(logq.dtype)
    log_qz = logsumexp(logq.sum(axis=2) + logw, axis=1)
    log_prod = logsumexp(logq + logw[:, :, None], axis=1).sum(axis=1)
    return (log_qz - log_prod).mean()


def _check_finite(value, what, context):
    if not np.all(np.isfinite(value)):
        detail = ", ".join(f"{k}={v}" for k, v in context.items())
        raise NumericFault(f"non-finite {what} ({detail})")


def train_step(bundle, batch, cfg, rng, dataset_size=None):
    """One Adam + EMA update of encoder, decoder and score network."""
    stores = bundle.stores
    params = {f"{s}/{k}": v for s, st in stores.items() for k, v in st.params.items()}
    with Tape() as tape:
        l_ae, fwd = loss_ae(batch, bundle, rng, cfg.loss_form)
        total = l_ae
        l_tc = 0.0
        if cfg.tc_weight > 0:
            tc = loss_tc(fwd.moments, fwd.z, dataset_size or len(batch))
            total = total + cfg.tc_weight * tc
            l_tc = tc.item()
        grads = tape.gradient(total, params)
    _check_finite(total.data, "loss", {"step": bundle.encoder.step, "loss_ae": l_ae.item(),
                                        "t_min": float(fwd.t.min()), "t_max": float(fwd.t.max())})
    per_store = {s: {k: grads[f"{s}/{k}"] for k in st.params} for s, st in stores.items()}
    for name, gd in per_store.items():
        for k, g in gd.items():
            _check_finite(g, "gradient", {"param": f"{name}/{k}", "step": bundle.encoder.step})
    for name, st in stores.items():
        adam_step(st, per_store[name], cfg.lr)
        ema_update(st, cfg.ema_rate)
    return {"loss_ae": l_ae.item(), "loss_tc": l_tc, "grad_norm": global_grad_norm(*per_store.values())}


METRIC_COLUMNS = ("step", "loss_ae", "loss_tc", "grad_norm", "wall_ms")


def train_loop(dataset, cfg, bundle, rng, start_step=0, on_metrics=None, on_step=None):
    """Run steps ``start_step+1 .. cfg.total_steps``.

    Each step draws its batch indices from ``rng`` before the loss draws, so a
    run resumed from a checkpoint (same bundle state and rng state) reproduces
    the uninterrupted stream. ``on_metrics`` receives one row per step;
    ``on_step(step)`` runs after each update (for checkpointing).
    """
    data = np.asarray(dataset)
    n = data.shape[0]
    rows = []
    for step in range(start_step + 1, cfg.total_steps + 1):
        t0 = time.perf_counter()
        idx = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
        m = train_step(bundle, data[idx], cfg, rng, dataset_size=n)
        row = {"step": step, **m, "wall_ms": 1e3 * (time.perf_counter() - t0)}
        rows.append(row)
        if on_metrics is not None:
            on_metrics(row)
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("step %d loss_ae %.5f loss_tc %.4f", step, m["loss_ae"], m["loss_tc"])
        if on_step is not None:
            on_step(step)
    return rows


def encode_dataset(bundle, data, batch=4096):
    """Mean codes (EMA weights) of every row of ``data``."""
    out = []
    for i in range(0, len(data), batch):
        z, _ = bundle.encode(data[i:i + batch], ema=True, noise_scale=0.0)
        out.append(z.data.astype(np.float64))
    return np.concatenate(out)


def fit_z_stats(dataset, bundle):
    z = encode_dataset(bundle, np.asarray(dataset))
    return z_stats(z)


def z_stats(z):
    mean = z.mean(axis=0)
    std = z.std(axis=0)
    if np.any(std <= 1e-12 * np.maximum(1.0, np.abs(mean))):
        raise DegenerateLatentError(f"latent dims {np.flatnonzero(std <= 1e-12).tolist()} are constant")
    return mean, std


def normalize_z(z, stats):
    mean, std = stats
    return (z - mean) / std


def denormalize_z(z, stats):
    mean, std = stats
    return z * std + mean


@dataclass(frozen=True)
class LatentPriorCfg:
    depth: int = 4
    width: int = 256
    beta: float = 0.008
    discrete_steps: int = 1000
    loss: str = "l2"
    time_dim: int = 32
    batch_size: int = 256
    lr: float = 1e-3
    ema_rate: float = 0.999
    total_steps: int = 4000
    sample_steps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("l1", "l2"):
            raise ContractError(f"prior loss must be l1 or l2, got {self.loss!r}")

    @property
    def schedule(self):
        # beta is per discrete step, so time runs over [0, discrete_steps]
        return VpSchedule.constant(self.beta, t_end=float(self.discrete_steps))


@dataclass
class LatentPrior:
    cfg: LatentPriorCfg
    latent_dim: int
    store: ParamStore
    z_stats: tuple = None
    net: Mlp = field(init=False)

    def __post_init__(self):
        self.net = Mlp("prior", (self.latent_dim + self.cfg.time_dim,)
                       + (self.cfg.width,) * (self.cfg.depth - 1) + (self.latent_dim,))

    @classmethod
    def create(cls, cfg, latent_dim, rng, dtype=np.float32):
        prior = cls(cfg, latent_dim, ParamStore(dtype))
        prior.net.init(prior.store, rng)
        return prior

    @property
    def schedule(self):
        return self.cfg.schedule

    def predict_eps(self, z_t, t, ema=False):
        n = z_t.shape[0]
        tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)) / self.schedule.t_end
        z_t = z_t if isinstance(z_t, Tensor) else Tensor(np.asarray(z_t, dtype=self.store.dtype))
        feats = Tensor(time_embed(tt, self.cfg.time_dim).astype(self.store.dtype))
        return self.net(self.store.view(ema), concat([z_t, feats]))


def loss_prior(z_batch, prior, rng, eps_fn=None):
    """Denoising loss of the latent prior on normalized codes.

    The residual is taken in epsilon space (score = -eps / sigma_t) with unit
    weight; ``eps_fn(z_t, t)`` may replace the network (for oracle checks).
    """
    z = np.asarray(z_batch, dtype=prior.store.dtype)
    if z.shape[0] > 1:
        std = z.std(axis=0)
        if np.any(np.abs(np.log(np.maximum(std, 1e-12))) > np.log(3.0)):
            warnings.warn(f"latent batch std {std} is far from 1; normalize codes first", stacklevel=2)
    sch = prior.schedule
    k = rng.integers(1, prior.cfg.discrete_steps + 1, size=z.shape[0])
    t = k * (sch.t_end / prior.cfg.discrete_steps)
    alpha, sigma = sch.alpha_sigma(t)
    eps = rng.standard_normal(z.shape).astype(z.dtype)
    z_t = _col(alpha, z) * z + _col(sigma, z) * eps
    pred = prior.predict_eps(z_t, t) if eps_fn is None else Tensor(eps_fn(z_t, t))
    resid = pred - eps
    per = (square(resid) if prior.cfg.loss == "l2" else tabs(resid)).sum(axis=1)
    return per.mean()


def train_prior(z_dataset, prior, rng, on_metrics=None):
    """Fit the prior on raw codes; stores normalization stats on ``prior``."""
    cfg = prior.cfg
    prior.z_stats = z_stats(np.asarray(z_dataset, dtype=np.float64))
    zn = normalize_z(np.asarray(z_dataset, dtype=np.float64), prior.z_stats)
    n = len(zn)
    rows = []
    params = prior.store.params
    for step in range(1, cfg.total_steps + 1):
        idx = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
        with Tape() as tape:
            loss = loss_prior(zn[idx], prior, rng)
            grads = tape.gradient(loss, params)
        _check_finite(loss.data, "prior loss", {"step": step})
        adam_step(prior.store, grads, cfg.lr)
        ema_update(prior.store, cfg.ema_rate)
        row = {"step": step, "loss_prior": loss.item()}
        rows.append(row)
        if on_metrics is not None:
            on_metrics(row)
    return rows
