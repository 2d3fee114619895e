"""Reconstruction, probe, distributional and disentanglement metrics.

Also hosts the mutual-information diagnostic on linear-Gaussian instances,
where every term of the bound MI(x0, z) >= H(x0) - L_AE is available in
closed form or by one-dimensional quadrature.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import integrate
from scipy.stats import rankdata

from dbae.bridge import BridgeKernel
from dbae.errors import ContractError, ShapeError

# ---------------------------------------------------------------- reconstruction


def ssim(a, b, data_range=1.0, win_size=7, k1=0.01, k2=0.03):
    """Mean SSIM of two 2-D images over all fully contained square windows.

    Uses uniform windows and sample (n - 1) covariances.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"ssim needs two equal 2-D images, got {a.shape} and {b.shape}")
    if min(a.shape) < win_size:
        raise ShapeError(f"images smaller than the {win_size}x{win_size} window")
    wa = sliding_window_view(a, (win_size, win_size))
    wb = sliding_window_view(b, (win_size, win_size))
    n = win_size * win_size
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    norm = n / (n - 1.0)
    var_a = norm * ((wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a)
    var_b = norm * ((wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b)
    cov = norm * ((wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())


def recon_error(x0_batch, x0_hat_batch, metric="mse", grid_shape=None, data_range=1.0):
    """Batch mean of the per-sample distance (mse) or similarity (ssim_window)."""
    x = np.asarray(x0_batch, dtype=np.float64)
    y = np.asarray(x0_hat_batch, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"batch shapes differ: {x.shape} vs {y.shape}")
    if metric == "mse":
        return float(np.mean(((x - y) ** 2).reshape(len(x), -1).mean(axis=1)))
    if metric == "ssim_window":
        if grid_shape is None:
            raise ContractError("ssim_window needs grid data (pass grid_shape)")
        if int(np.prod(grid_shape)) != x[0].size:
            raise ContractError(f"grid shape {grid_shape} does not match sample size {x[0].size}")
        return float(np.mean([ssim(p.reshape(grid_shape), q.reshape(grid_shape), data_range)
                              for p, q in zip(x, y)]))
    raise ContractError(f"unknown metric {metric!r}")


# ---------------------------------------------------------------- linear probes


@dataclass
class ProbeModel:
    w: np.ndarray  # (l, k)
    b: np.ndarray  # (k,)
    kind: str  # "classification" or "regression"

    def decision(self, z):
        return np.asarray(z, dtype=np.float64) @ self.w + self.b

    def predict(self, z):
        s = self.decision(z)
        return 1.0 / (1.0 + np.exp(-s)) if self.kind == "classification" else s


def _as_2d(y):
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


def _ridge_fit(z, y, ridge):
    zm, ym = z.mean(axis=0), y.mean(axis=0)
    zc = z - zm
    gram = zc.T @ zc
    if np.linalg.matrix_rank(gram) < z.shape[1]:
        warnings.warn("probe features are rank deficient; increasing regularization", stacklevel=3)
        ridge = max(ridge, 1e-3 * max(np.trace(gram) / z.shape[1], 1e-12))
    w = np.linalg.solve(gram + ridge * np.eye(z.shape[1]), zc.T @ (y - ym))
    return w, ym - zm @ w


def _logistic_fit(z, y, ridge, iters=100):
    n, l = z.shape
    X = np.hstack([z, np.ones((n, 1))])
    reg = ridge * np.eye(l + 1)
    reg[-1, -1] = 0.0
    W = np.zeros((l + 1, y.shape[1]))
    for k in range(y.shape[1]):
        theta = np.zeros(l + 1)
        for _ in range(iters):
            p = 1.0 / (1.0 + np.exp(-(X @ theta)))
            grad = X.T @ (p - y[:, k]) + reg @ theta
            hess = (X * (p * (1 - p))[:, None]).T @ X + reg + 1e-12 * np.eye(l + 1)
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            theta -= step
            if np.max(np.abs(step)) < 1e-10:
                break
        W[:, k] = theta
    return W[:-1], W[-1]


def fit_probe(z, labels, kind=None, ridge=None):
    """Affine probe: logistic (binary labels) or ridge least squares."""
    z = np.asarray(z, dtype=np.float64)
    y = _as_2d(labels)
    if kind is None:
        kind = "classification" if np.all(np.isin(y, (0.0, 1.0))) else "regression"
    if kind == "classification":
        if np.linalg.matrix_rank(z - z.mean(axis=0)) < z.shape[1]:
            warnings.warn("probe features are rank deficient; increasing regularization", stacklevel=2)
            ridge = max(ridge or 0.0, 1e-2)
        w, b = _logistic_fit(z, y, 1e-4 if ridge is None else ridge)
    elif kind == "regression":
        w, b = _ridge_fit(z, y, 1e-10 if ridge is None else ridge)
    else:
        raise ContractError(f"unknown probe kind {kind!r}")
    return ProbeModel(w, b, kind)


def auroc(scores, labels):
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def probe_scores(model, z, labels):
    y = _as_2d(labels)
    pred = model.predict(z)
    out = {"mse": float(np.mean((pred - y) ** 2))}
    rs = []
    for k in range(y.shape[1]):
        if np.std(pred[:, k]) > 0 and np.std(y[:, k]) > 0:
            rs.append(np.corrcoef(pred[:, k], y[:, k])[0, 1])
    out["pearson_r"] = float(np.mean(rs)) if rs else float("nan")
    if np.all(np.isin(y, (0.0, 1.0))):
        dec = model.decision(z)
        out["auroc"] = float(np.mean([auroc(dec[:, k], y[:, k]) for k in range(y.shape[1])]))
    else:
        out["auroc"] = float("nan")
    return out


# ---------------------------------------------------------------- distributions


def _w2_1d(u, v):
    """Exact Wasserstein-2 distance between two 1-D empirical measures."""
    u, v = np.sort(u), np.sort(v)
    n, m = len(u), len(v)
    if n == m:
        return float(np.sqrt(np.mean((u - v) ** 2)))
    cuts = np.union1d(np.arange(n + 1) / n, np.arange(m + 1) / m)
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    iu = np.minimum((mid * n).astype(int), n - 1)
    iv = np.minimum((mid * m).astype(int), m - 1)
    return float(np.sqrt(np.sum(np.diff(cuts) * (u[iu] - v[iv]) ** 2)))


def random_directions(dim, n, rng):
    d = rng.standard_normal((n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sliced_wasserstein(a, b, n_projections=128, seed=0, directions=None):
    """Mean over random unit directions of the 1-D W2 between the projections."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ContractError("sliced Wasserstein of an empty point set")
    a, b = a.reshape(len(a), -1), b.reshape(len(b), -1)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"point dims differ: {a.shape[1]} vs {b.shape[1]}")
    if directions is None:
        directions = random_directions(a.shape[1], n_projections, np.random.default_rng(seed))
    pa, pb = a @ directions.T, b @ directions.T
    return float(np.mean([_w2_1d(pa[:, k], pb[:, k]) for k in range(len(directions))]))


# ---------------------------------------------------------------- latent statistics


def gaussian_tc(cov):
    """Total correlation of a Gaussian with covariance ``cov``."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    diag = np.diag(cov)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        eig = np.linalg.eigvalsh(cov)
        pos = eig[eig > 1e-12 * max(eig.max(), 1e-300)]
        warnings.warn("singular latent covariance; using the pseudo-determinant", stacklevel=2)
        logdet = float(np.sum(np.log(pos)))
    return 0.5 * (float(np.sum(np.log(diag))) - logdet)


def latent_stats(z):
    z = np.asarray(z, dtype=np.float64)
    n, l = z.shape
    if n < l + 1:
        raise ContractError(f"need at least {l + 1} samples for {l} latent dims")
    cov = np.cov(z, rowvar=False).reshape(l, l)
    return {"mean": z.mean(axis=0), "std": z.std(axis=0, ddof=1), "cov": cov,
            "gaussian_tc": gaussian_tc(cov)}


# ---------------------------------------------------------------- MI diagnostic


@dataclass
class LinearGaussianInstance:
    """x0 ~ N(0, data_cov); z = enc x0 + n, n ~ N(0, enc_noise^2 I); x_T = dec z.

    The score network is the exact Gaussian score of x_t given x_T under a
    model whose decoder is ``score_dec`` (defaults to ``dec``; a different
    matrix injects mismatch).
    """

    data_cov: np.ndarray
    enc: np.ndarray
    enc_noise: float
    dec: np.ndarray
    kernel: BridgeKernel = None
    score_dec: np.ndarray = None

    def __post_init__(self):
        self.data_cov = np.atleast_2d(np.asarray(self.data_cov, dtype=np.float64))
        self.enc = np.atleast_2d(np.asarray(self.enc, dtype=np.float64))
        self.dec = np.atleast_2d(np.asarray(self.dec, dtype=np.float64))
        self.score_dec = self.dec if self.score_dec is None else np.atleast_2d(
            np.asarray(self.score_dec, dtype=np.float64))
        if self.kernel is None:
            self.kernel = BridgeKernel()
        d, l = self.data_cov.shape[0], self.enc.shape[0]
        if self.enc.shape != (l, d) or self.dec.shape != (d, l) or self.score_dec.shape != (d, l):
            raise ContractError("instance matrices have inconsistent shapes")
        if not self.enc_noise > 0:
            raise ContractError("encoder noise must be positive (MI is infinite otherwise)")

    @property
    def dims(self):
        return self.data_cov.shape[0], self.enc.shape[0]

    def base_cov(self):
        d, l = self.dims
        cov = np.zeros((2 * d + l, 2 * d + l))
        cov[:d, :d] = self.data_cov
        cov[d:d + l, d:d + l] = self.enc_noise ** 2 * np.eye(l)
        cov[d + l:, d + l:] = np.eye(d)
        return cov

    def maps(self, t, dec):
        """Linear maps from base noise (x0, n, xi) to x_T and x_t."""
        d, l = self.dims
        c_T, c_0, std = self.kernel.mean_coeffs(t)
        A_T = np.hstack([dec @ self.enc, dec, np.zeros((d, d))])
        A_0 = np.hstack([np.eye(d), np.zeros((d, l + d))])
        A_xi = np.hstack([np.zeros((d, d + l)), np.eye(d)])
        return A_T, c_T * A_T + c_0 * A_0 + std * A_xi, A_xi, std

    def score_error(self, t):
        """E |s_theta(x_t, x_T) - grad log q(x_t | x0, x_T)|^2 at time t."""
        S = self.base_cov()
        A_T, A_t, A_xi, std = self.maps(t, self.dec)
        mA_T, mA_t, _, _ = self.maps(t, self.score_dec)
        # Gaussian conditional of x_t given x_T under the (possibly mismatched) model
        ctT = mA_t @ S @ mA_T.T
        cTT = mA_T @ S @ mA_T.T
        K = ctT @ np.linalg.pinv(cTT, rcond=1e-12, hermitian=True)
        C = mA_t @ S @ mA_t.T - K @ ctT.T
        P = np.linalg.inv(C)
        L = -P @ (A_t - K @ A_T) + A_xi / std
        return float(np.trace(L @ S @ L.T))

    def loss_ae(self):
        kern = self.kernel
        sch = kern.schedule

        def integrand(u):
            t = np.exp(u)
            return 0.5 * float(sch.beta(t)) * self.score_error(t) * t

        val, _ = integrate.quad(integrand, np.log(kern.t_min), np.log(kern.t_max),
                                limit=400, epsabs=1e-10, epsrel=1e-9)
        return val

    def entropy(self):
        d = self.dims[0]
        return 0.5 * (d * np.log(2 * np.pi * np.e) + np.linalg.slogdet(self.data_cov)[1])

    def mutual_info(self):
        l = self.dims[1]
        cz = self.enc @ self.data_cov @ self.enc.T + self.enc_noise ** 2 * np.eye(l)
        return 0.5 * (np.linalg.slogdet(cz)[1] - l * np.log(self.enc_noise ** 2))


def mi_bound_check(instance):
    """Check -MI(x0, z) <= L_AE - H on a linear-Gaussian instance."""
    if not isinstance(instance, LinearGaussianInstance):
        raise ContractError("the MI diagnostic is defined for linear-Gaussian instances only")
    mi = instance.mutual_info()
    h = instance.entropy()
    l_ae = instance.loss_ae()
    lhs, rhs = -mi, l_ae - h
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs), "slack": rhs - lhs,
            "mi": mi, "entropy": h, "loss_ae": l_ae}
