"""Minimal autodiff engine, SiLU MLPs, Adam and EMA."""

from dbae.nn.autodiff import (Tape, Tensor, active_tape, as_tensor, backward, concat, exp,
                              linear, log, logsumexp, mse, pairwise_gauss_logpdf, silu,
                              softplus, sqrt, square, tabs, tmean, tsum)
from dbae.nn.layers import Mlp, time_embed
from dbae.nn.optim import ParamStore, adam_step, ema_update, global_grad_norm

__all__ = [
    "Tape", "Tensor", "active_tape", "as_tensor", "backward", "concat", "exp", "linear", "log",
    "logsumexp", "mse", "pairwise_gauss_logpdf", "silu", "softplus", "sqrt", "square", "tabs",
    "tmean", "tsum",
    "Mlp", "time_embed", "ParamStore", "adam_step", "ema_update", "global_grad_norm",
]
