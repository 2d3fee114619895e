"""Hot inner loops with a compiled backend and a numpy fallback.

The Cython extension ``dbae._ext._kernels`` is used when it imports; otherwise
(or when ``DBAE_PURE_PYTHON=1``) the numpy versions in ``dbae._ext._fallback``
are used. ``BACKEND`` names the active one. Both follow identical semantics, so
callers never branch on it.
"""

import os

import numpy as np

from dbae._ext import _fallback

_impl = _fallback
BACKEND = "python"
if not os.environ.get("DBAE_PURE_PYTHON"):
    try:
        from dbae._ext import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def backends():
    """Return the importable kernel modules keyed by name."""
    out = {"python": _fallback}
    try:
        from dbae._ext import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out


def silu(x, impl=None):
    """Return ``(x * sigmoid(x), sigmoid(x))`` with the shape of ``x``."""
    impl = impl or _impl
    xf = np.ascontiguousarray(x).reshape(-1)
    y = np.empty_like(xf)
    sig = np.empty_like(xf)
    impl.silu_forward(xf, y, sig)
    return y.reshape(np.shape(x)), sig.reshape(np.shape(x))


def silu_grad(g, x, sig, impl=None):
    impl = impl or _impl
    dtype = np.result_type(x)
    gf = np.ascontiguousarray(g, dtype=dtype).reshape(-1)
    xf = np.ascontiguousarray(x).reshape(-1)
    sf = np.ascontiguousarray(sig, dtype=dtype).reshape(-1)
    out = np.empty_like(xf)
    impl.silu_backward(gf, xf, sf, out)
    return out.reshape(np.shape(x))


def affine_sde_paths(x, y, drift_x, drift_y, vol, noise, record, impl=None):
    """Iterate ``x <- x + a_k x + b_k y + c_k noise_k`` over k.

    ``x`` and ``y`` are flattened to n entries, ``noise`` is (steps, n) and
    ``record`` lists the step indices (0 = initial state) whose states are
    returned as a (len(record), n) array.
    """
    impl = impl or _impl
    x = np.array(x, dtype=np.float64)
    y = np.ascontiguousarray(np.broadcast_to(np.asarray(y, dtype=np.float64), x.shape)).reshape(-1)
    x = x.reshape(-1)
    drift_x = np.ascontiguousarray(drift_x, dtype=np.float64)
    drift_y = np.ascontiguousarray(drift_y, dtype=np.float64)
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    noise = np.ascontiguousarray(noise, dtype=np.float64).reshape(len(drift_x), x.size)
    record = np.ascontiguousarray(np.sort(np.asarray(record, dtype=np.int64)))
    if record.size and (record[0] < 0 or record[-1] > len(drift_x)):
        raise ValueError("record indices must lie in [0, steps]")
    out = np.empty((record.size, x.size))
    impl.affine_sde_paths(x, y, drift_x, drift_y, vol, noise, record, out)
    return out


def pairwise_gauss_logpdf(z, mu, logsig, impl=None):
    """``out[i, j, k] = log N(z[i, k]; mu[j, k], exp(logsig[j, k])**2)``."""
    impl = impl or _impl
    z = np.ascontiguousarray(z, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    logsig = np.ascontiguousarray(logsig, dtype=np.float64)
    out = np.empty((z.shape[0], mu.shape[0], z.shape[1]))
    impl.pairwise_gauss_logpdf(z, mu, logsig, out)
    return out
