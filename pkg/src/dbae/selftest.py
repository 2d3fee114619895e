"""Analytic identities checked by ``dbae selftest``."""

import numpy as np

from dbae.bridge import BridgeKernel
from dbae.schedule import VpSchedule


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def run(seed=0, n=1000):
    """Return ``[(name, passed, detail)]`` for the identity suite."""
    rng = np.random.default_rng(seed)
    sch = VpSchedule()
    kern = BridgeKernel(sch)
    results = []

    ts = np.linspace(0.0, 1.0, 101)
    a, s = sch.alpha_sigma(ts)
    err = float(np.max(np.abs(a * a + s * s - 1.0)))
    results.append(("variance preserved", err < 1e-12, f"max |a^2+s^2-1| = {err:.2e}"))

    quad = sch.beta_integral_numeric(0.73)
    closed = float(sch.beta_integral(0.73))
    results.append(("beta primitive vs quadrature", abs(quad - closed) < 1e-9 * closed,
                    f"{closed:.12g} vs {quad:.12g}"))

    r = sch.snr_ratio(np.linspace(1e-3, 1.0, 200))
    results.append(("snr ratio monotone to 1", bool(np.all(np.diff(r) > 0) and r[-1] == 1.0),
                    f"R(T) = {r[-1]!r}"))

    x0 = rng.standard_normal((n, 3))
    xT = rng.standard_normal((n, 3))
    t = rng.uniform(kern.t_min, kern.t_max, n)
    xt = kern.sample_bridge(x0, xT, t, rng)
    rec = kern.x0_from_score(xt, t, xT, kern.bridge_score(xt, x0, xT, t))
    rel = float(np.max(np.abs(rec - x0)) / np.max(np.abs(x0)))
    results.append(("pred-x inverts bridge score", rel < 1e-8, f"rel err {rel:.2e}"))

    sc = rng.standard_normal((n, 3))
    back = kern.score_from_x0(xt, t, xT, kern.x0_from_score(xt, t, xT, sc))
    rel = float(np.max(np.abs(back - sc) / (1.0 + np.abs(sc))))
    results.append(("score/x0 round trip", rel < 1e-10, f"rel err {rel:.2e}"))

    lam = kern.x0_coeffs(t)[3]
    _, g = sch.drift_vol(0.0, t)
    gam = kern.x0_coeffs(t)[2]
    rel = float(np.max(np.abs(lam * gam * gam - g * g) / (g * g)))
    results.append(("lambda gamma^2 = g^2", rel < 1e-12, f"rel err {rel:.2e}"))

    tt = 0.4
    xs = rng.standard_normal(3)
    y = rng.standard_normal(3)
    a_, v_ = kern.h_coeffs(tt)
    fd = _fd_grad(lambda u: -0.5 * np.sum((y - a_ * u) ** 2) / v_, xs)
    h = kern.h_transform(xs, tt, y)
    rel = float(np.max(np.abs(fd - h)) / np.max(np.abs(h)))
    results.append(("h-transform = grad log transition", rel < 1e-5, f"rel err {rel:.2e}"))

    m0, s0 = kern.bridge_stats(x0[:1], xT[:1], 0.0)
    m1, s1 = kern.bridge_stats(x0[:1], xT[:1], 1.0)
    ok = np.array_equal(m0, x0[:1]) and np.array_equal(m1, xT[:1]) and s0 == 0 and s1 == 0
    results.append(("bridge pinned at both ends", bool(ok), "exact"))
    return results
