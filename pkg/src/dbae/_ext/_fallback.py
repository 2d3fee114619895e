"""Pure numpy versions of the compiled kernels, same signatures and semantics."""

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


def silu_forward(x, y, sig):
    np.reciprocal(1.0 + np.exp(-x), out=sig)
    np.multiply(x, sig, out=y)


def silu_backward(g, x, sig, out):
    out[:] = g * sig * (1.0 + x * (1.0 - sig))


def affine_sde_paths(x, y, drift_x, drift_y, vol, noise, record, out):
    r = 0
    nrec = len(record)
    while r < nrec and record[r] == 0:
        out[r] = x
        r += 1
    for k in range(len(drift_x)):
        x[:] = x + drift_x[k] * x + drift_y[k] * y + vol[k] * noise[k]
        while r < nrec and record[r] == k + 1:
            out[r] = x
            r += 1


def pairwise_gauss_logpdf(z, mu, logsig, out):
    u = (z[:, None, :] - mu[None, :, :]) * np.exp(-logsig)[None, :, :]
    out[:] = -0.5 * LOG_2PI - logsig[None, :, :] - 0.5 * u * u
