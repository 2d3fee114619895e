"""Feed-forward building blocks: sinusoidal time features and SiLU MLPs."""

from dataclasses import dataclass

import numpy as np

from dbae.nn.autodiff import linear, silu


def time_embed(t, dim, freqs=None, max_freq=100.0):
    """Sinusoidal features ``[sin(f t)..., cos(f t)...]`` of width ``dim``.

    ``t`` is a scalar or (batch,) array; the result is (dim,) or (batch, dim).
    Frequencies default to a geometric ladder from 1 to ``max_freq``.
    """
    if dim % 2:
        raise ValueError("time embedding width must be even")
    half = dim // 2
    if freqs is None:
        freqs = np.exp(np.linspace(0.0, np.log(max_freq), half))
    freqs = np.asarray(freqs, dtype=np.float64)
    args = np.multiply.outer(np.asarray(t, dtype=np.float64), freqs)
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


@dataclass(frozen=True)
class Mlp:
    """Dense SiLU network ``sizes[0] -> ... -> sizes[-1]``; no activation on the output."""

    prefix: str
    sizes: tuple

    def init(self, store, rng, zero_last=False):
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            last = i == len(self.sizes) - 2
            if zero_last and last:
                w = np.zeros((n_in, n_out))
            else:
                w = rng.uniform(-bound, bound, size=(n_in, n_out))
            store.add(f"{self.prefix}.{i}.W", w)
            store.add(f"{self.prefix}.{i}.b", np.zeros(n_out))
        return store

    def __call__(self, params, x):
        h = x
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            h = linear(h, params[f"{self.prefix}.{i}.W"], params[f"{self.prefix}.{i}.b"])
            if i < n_layers - 1:
                h = silu(h)
        return h
