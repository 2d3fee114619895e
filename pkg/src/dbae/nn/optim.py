"""Named parameters with Adam moments and an EMA shadow copy."""

import hashlib

import numpy as np

from dbae.errors import ContractError
from dbae.nn.autodiff import Tensor


class ParamStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.ema = {}
        self.m = {}
        self.v = {}
        self.step = 0

    def add(self, name, value):
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=self.dtype)
        self.params[name] = Tensor(value, requires_grad=True, name=name)
        self.ema[name] = value.copy()
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return self.params[name]

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __len__(self):
        return len(self.params)

    def names(self):
        return list(self.params)

    def arrays(self, ema=False):
        """name -> ndarray of the live (or EMA) values."""
        if ema:
            return dict(self.ema)
        return {k: t.data for k, t in self.params.items()}

    def view(self, ema=False):
        """name -> Tensor; live tensors are tracked, EMA copies are constants."""
        if ema:
            return {k: Tensor(v) for k, v in self.ema.items()}
        return dict(self.params)

    def num_parameters(self):
        return sum(t.data.size for t in self.params.values())

    def digest(self):
        h = hashlib.sha256()
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k].data).tobytes())
            h.update(np.ascontiguousarray(self.ema[k]).tobytes())
        return h.hexdigest()

    def freeze(self):
        for t in self.params.values():
            t.requires_grad = t.tracked = False

    def unfreeze(self):
        for t in self.params.values():
            t.requires_grad = t.tracked = True


def adam_step(store, grads, lr, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update of every parameter in ``store``."""
    missing = set(store.params) - set(grads)
    if missing:
        raise ContractError(f"gradients missing for {sorted(missing)}")
    b1, b2 = betas
    store.step += 1
    c1 = 1.0 - b1 ** store.step
    c2 = 1.0 - b2 ** store.step
    for name, p in store.params.items():
        g = np.asarray(grads[name], dtype=store.dtype)
        if g.shape != p.data.shape:
            raise ContractError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        m = store.m[name] = b1 * store.m[name] + (1.0 - b1) * g
        v = store.v[name] = b2 * store.v[name] + (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (p.data - update).astype(store.dtype, copy=False)
    return store


def ema_update(store, rate, warmup=True):
    """Polyak average of the live weights.

    With ``warmup`` the effective rate is min(rate, (1 + n) / (10 + n)), n the
    Adam step count, so the average forgets its random initialization quickly.
    A rate of exactly 1 freezes the shadow regardless.
    """
    if warmup and rate < 1.0:
        rate = min(rate, (1.0 + store.step) / (10.0 + store.step))
    for name, p in store.params.items():
        store.ema[name] = (rate * store.ema[name] + (1.0 - rate) * p.data).astype(store.dtype, copy=False)
    return store


def global_grad_norm(*grad_dicts):
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64)))
                             for gd in grad_dicts for g in gd.values())))
