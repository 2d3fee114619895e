"""Encoder, decoder and pred-x score network of a diffusion bridge autoencoder.

The encoder maps data (d) to a latent code (l); the decoder maps the code to
the bridge endpoint x_T with a single forward pass; the score network
predicts x0 from ``concat(x_t, x_T, time features[, z])`` and its score is
recovered through the bridge's affine inverse.
"""

from dataclasses import dataclass, field

import numpy as np

from dbae.bridge import BridgeKernel
from dbae.errors import ContractError, ShapeError
from dbae.nn import Mlp, ParamStore, Tensor, concat, exp, log, softplus, time_embed

SIGMA_MIN = 1e-4
SIGMA_MAX = 10.0


@dataclass(frozen=True)
class EncoderCfg:
    data_dim: int = 2
    latent_dim: int = 2
    hidden: tuple = (128, 128)
    mode: str = "deterministic"  # or "gaussian"

    def __post_init__(self):
        if self.mode not in ("deterministic", "gaussian"):
            raise ContractError(f"unknown encoder mode {self.mode!r}")
        if not 0 < self.latent_dim <= self.data_dim:
            raise ContractError("latent dim must satisfy 0 < l <= d")


@dataclass(frozen=True)
class DecoderCfg:
    latent_dim: int = 2
    data_dim: int = 2
    hidden: tuple = (128, 128)


@dataclass(frozen=True)
class ScoreNetCfg:
    data_dim: int = 2
    latent_dim: int = 2
    hidden: tuple = (256, 256, 256)
    time_dim: int = 32
    use_z_condition: bool = True

    @property
    def input_dim(self):
        return 2 * self.data_dim + self.time_dim + (self.latent_dim if self.use_z_condition else 0)


def make_cfgs(data_dim=2, latent_dim=2, encoder_mode="deterministic", enc_hidden=(128, 128),
              dec_hidden=(128, 128), score_hidden=(256, 256, 256), time_dim=32,
              use_z_condition=True):
    return (EncoderCfg(data_dim, latent_dim, tuple(enc_hidden), encoder_mode),
            DecoderCfg(latent_dim, data_dim, tuple(dec_hidden)),
            ScoreNetCfg(data_dim, latent_dim, tuple(score_hidden), time_dim, use_z_condition))


@dataclass
class ModelBundle:
    enc_cfg: EncoderCfg
    dec_cfg: DecoderCfg
    score_cfg: ScoreNetCfg
    kernel: BridgeKernel
    encoder: ParamStore
    decoder: ParamStore
    score_net: ParamStore
    nfe: dict = field(default_factory=lambda: {"enc": 0, "dec": 0, "score": 0})

    def __post_init__(self):
        e, d, s = self.enc_cfg, self.dec_cfg, self.score_cfg
        if not (e.data_dim == d.data_dim == s.data_dim and e.latent_dim == d.latent_dim == s.latent_dim):
            raise ContractError("encoder/decoder/score-net dimensions disagree")
        out = e.latent_dim * (2 if e.mode == "gaussian" else 1)
        self._enc = Mlp("enc", (e.data_dim,) + e.hidden + (out,))
        self._dec = Mlp("dec", (d.latent_dim,) + d.hidden + (d.data_dim,))
        self._net = Mlp("score", (s.input_dim,) + s.hidden + (s.data_dim,))

    @classmethod
    def create(cls, enc_cfg, dec_cfg, score_cfg, kernel, rng, dtype=np.float32):
        stores = [ParamStore(dtype) for _ in range(3)]
        bundle = cls(enc_cfg, dec_cfg, score_cfg, kernel, *stores)
        bundle._enc.init(bundle.encoder, rng)
        bundle._dec.init(bundle.decoder, rng)
        bundle._net.init(bundle.score_net, rng)
        return bundle

    @property
    def stores(self):
        return {"encoder": self.encoder, "decoder": self.decoder, "score": self.score_net}

    @property
    def data_dim(self):
        return self.enc_cfg.data_dim

    @property
    def latent_dim(self):
        return self.enc_cfg.latent_dim

    @property
    def dtype(self):
        return self.encoder.dtype

    def reset_nfe(self):
        self.nfe = {"enc": 0, "dec": 0, "score": 0}

    def _in(self, x, dim, what):
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 2 or x.shape[1] != dim:
            raise ShapeError(f"{what} must be (batch, {dim}), got {x.shape}")
        return x

    def encode(self, x0, rng=None, ema=False, noise_scale=1.0):
        """Return ``(z, moments)``; moments is ``(mu, log_sigma)`` or None.

        Gaussian mode draws z = mu + sigma * eps from ``rng``; ``noise_scale=0``
        returns the mean without consuming draws.
        """
        x0 = self._in(x0, self.enc_cfg.data_dim, "x0")
        self.nfe["enc"] += 1
        out = self._enc(self.encoder.view(ema), x0)
        if self.enc_cfg.mode == "deterministic":
            return out, None
        l = self.enc_cfg.latent_dim
        mu, raw = out[:, :l], out[:, l:]
        # bounded in (SIGMA_MIN, SIGMA_MAX) and smooth
        sigma = softplus(raw) - softplus(raw - (SIGMA_MAX - SIGMA_MIN)) + SIGMA_MIN
        log_sigma = log(sigma)
        if noise_scale == 0:
            return mu, (mu, log_sigma)
        if rng is None:
            raise ContractError("gaussian encoder needs a random stream")
        eps = rng.standard_normal(mu.shape).astype(self.dtype)
        return mu + exp(log_sigma) * (noise_scale * eps), (mu, log_sigma)

    def decode(self, z, ema=False):
        z = self._in(z, self.dec_cfg.latent_dim, "z")
        self.nfe["dec"] += 1
        return self._dec(self.decoder.view(ema), z)

    def predict_x0(self, x_t, t, xT, z=None, ema=False):
        cfg = self.score_cfg
        x_t = self._in(x_t, cfg.data_dim, "x_t")
        xT = self._in(xT, cfg.data_dim, "xT")
        n = x_t.shape[0]
        tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)) / self.kernel.schedule.t_end
        parts = [x_t, xT, Tensor(time_embed(tt, cfg.time_dim).astype(self.dtype))]
        if cfg.use_z_condition:
            if z is None:
                raise ContractError("score network conditions on z but none was given")
            parts.append(self._in(z, cfg.latent_dim, "z"))
        self.nfe["score"] += 1
        return self._net(self.score_net.view(ema), concat(parts))

    def score(self, x_t, t, xT, z=None, ema=False):
        x0_hat = self.predict_x0(x_t, t, xT, z, ema)
        x_t = x_t if isinstance(x_t, Tensor) else np.asarray(x_t, dtype=self.dtype)
        return self.kernel.score_from_x0(x_t, t, xT, x0_hat)

    def infer_endpoint(self, x0, ema=True):
        """Deterministic endpoint inference x0 -> z -> x_T (mean code for gaussian mode).

        Returns ``(z, xT, nfe)`` with nfe counted for this call only.
        """
        before = dict(self.nfe)
        z, _ = self.encode(x0, ema=ema, noise_scale=0.0)
        xT = self.decode(z, ema=ema)
        nfe = {k: self.nfe[k] - before[k] for k in self.nfe}
        return z.data, xT.data, nfe
