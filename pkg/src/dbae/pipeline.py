"""In-process desk run: train the autoencoder and latent prior, then score."""

import time

import numpy as np

from dbae import eval as ev
from dbae.io.datasets import make_toy
from dbae.model import ModelBundle
from dbae.sample import generate, generate_ae, reconstruct
from dbae.train import LatentPrior, encode_dataset, train_loop, train_prior


def desk_run(cfg, data=None, heldout=None):
    """Fit on ``cfg.toy`` (or ``data``) and return a metrics dict.

    Seeds derive from ``cfg.seed``: the data uses ``seed`` and ``seed + 1``
    (held-out), training uses ``seed``, the prior ``seed + 7919`` and the
    samplers ``seed + 104729``, matching the CLI.
    """
    t0 = time.perf_counter()
    labels = None
    if data is None:
        data, labels = make_toy(cfg.toy, cfg.n, cfg.seed)
    if heldout is None:
        heldout, _ = make_toy(cfg.toy, cfg.n, cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    enc, dec, sc = cfg.model_cfgs()
    bundle = ModelBundle.create(enc, dec, sc, cfg.bridge_kernel(), rng)
    train_loop(data, cfg.train_cfg(), bundle, rng)
    z = encode_dataset(bundle, data)

    prior_rng = np.random.default_rng(cfg.seed + 7919)
    prior = LatentPrior.create(cfg.prior_cfg(), bundle.latent_dim, prior_rng)
    train_prior(z, prior, prior_rng)

    n = min(len(data), cfg.eval.n_samples)
    scfg = cfg.sampler_cfg()
    srng = np.random.default_rng(cfg.seed + 104729)
    x_hat = reconstruct(data[:n], bundle, scfg, srng if scfg.stochastic else None)
    gen = generate(bundle, prior, n, scfg, srng)
    gen_ae = generate_ae(bundle, z, n, scfg, srng)
    sw = lambda x: ev.sliced_wasserstein(x, heldout[:n], cfg.eval.n_projections, cfg.seed)
    return {
        "recon_mse": ev.recon_error(data[:n], x_hat),
        "sliced_wasserstein": sw(gen),
        "sliced_wasserstein_ae": sw(gen_ae),
        "gaussian_tc": ev.latent_stats(z)["gaussian_tc"],
        "seconds": time.perf_counter() - t0,
        "bundle": bundle,
        "prior": prior,
        "latents": z,
        "data": data,
        "labels": labels,
    }
