import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from dbae import eval as ev
from dbae.errors import ContractError, ShapeError


def test_recon_error_examples():
    x = np.random.default_rng(0).uniform(size=(4, 64))
    assert ev.recon_error(x, x) == 0.0
    assert ev.recon_error(x, x, "ssim_window", (8, 8)) == pytest.approx(1.0)
    assert ev.recon_error(np.zeros((3, 64)), np.ones((3, 64))) == 1.0
    with pytest.raises(ContractError):
        ev.recon_error(x, x, "ssim_window")
    with pytest.raises(ShapeError):
        ev.recon_error(x, x[:2])


def _ssim_loop(a, b, win=7):
    # straightforward per-window statistics
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for i in range(a.shape[0] - win + 1):
        for j in range(a.shape[1] - win + 1):
            p = a[i:i + win, j:j + win].ravel()
            q = b[i:i + win, j:j + win].ravel()
            mp, mq = p.mean(), q.mean()
            vp, vq = p.var(ddof=1), q.var(ddof=1)
            cpq = np.cov(p, q)[0, 1]
            vals.append((2 * mp * mq + c1) * (2 * cpq + c2) / ((mp ** 2 + mq ** 2 + c1) * (vp + vq + c2)))
    return np.mean(vals)


@pytest.mark.parametrize("seed", range(5))
def test_ssim_oracles(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(8, 8))
    b = np.clip(a + 0.2 * rng.standard_normal((8, 8)), 0, 1)
    ours = ev.ssim(a, b)
    assert ours == pytest.approx(_ssim_loop(a, b), rel=1e-12)
    ref = structural_similarity(a, b, win_size=7, data_range=1.0, gaussian_weights=False,
                                use_sample_covariance=True)
    assert ours == pytest.approx(ref, rel=1e-9)


def test_probe_separable_and_chance():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((400, 2))
    y = (z[:, 0] + 0.5 * z[:, 1] > 0).astype(float)
    m = ev.fit_probe(z, y)
    assert ev.probe_scores(m, z, y)["auroc"] == 1.0
    shuffled = rng.permutation(y)
    m2 = ev.fit_probe(z[:200], shuffled[:200])
    assert abs(ev.probe_scores(m2, z[200:], shuffled[200:])["auroc"] - 0.5) < 0.1


def test_ridge_recovers_weights():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((50, 1))
    m = ev.fit_probe(z, 2.5 * z[:, 0] - 0.7, kind="regression")
    assert m.w[0, 0] == pytest.approx(2.5, abs=1e-6) and m.b[0] == pytest.approx(-0.7, abs=1e-6)


def test_probe_rank_deficient_warns():
    z = np.ones((20, 2))
    z[:, 0] = np.arange(20)
    with pytest.warns(UserWarning, match="rank deficient"):
        ev.fit_probe(z, np.arange(20.0), kind="regression")


def test_auroc_invariant_under_affine_refit():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((300, 2))
    y = (z[:, 0] - z[:, 1] + 0.8 * rng.standard_normal(300) > 0).astype(float)
    A = np.array([[2.0, 0.5], [-0.3, 1.5]])
    a1 = ev.probe_scores(ev.fit_probe(z, y), z, y)["auroc"]
    z2 = z @ A + np.array([3.0, -1.0])
    a2 = ev.probe_scores(ev.fit_probe(z2, y), z2, y)["auroc"]
    assert a1 == pytest.approx(a2, abs=1e-4)


def test_auroc_needs_two_classes():
    with pytest.raises(ContractError):
        ev.auroc([0.1, 0.2], [1, 1])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_sw_self_zero(n, d, seed):
    a = np.random.default_rng(seed).standard_normal((n, d))
    assert ev.sliced_wasserstein(a, a, 16) == 0.0


def test_sw_symmetric():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((100, 2)), rng.standard_normal((70, 2)) + 1
    assert ev.sliced_wasserstein(a, b, 32, seed=5) == pytest.approx(ev.sliced_wasserstein(b, a, 32, seed=5), rel=1e-12)


def test_sw_translation():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((200, 2))
    v = np.array([0.6, -0.8])
    dirs = ev.random_directions(2, 4000, np.random.default_rng(9))
    sw = ev.sliced_wasserstein(a, a + v, directions=dirs)
    assert sw == pytest.approx(np.mean(np.abs(dirs @ v)), rel=1e-10)
    # E|<u, v>| for u uniform on the circle is 2|v|/pi
    assert sw == pytest.approx(2 * np.linalg.norm(v) / np.pi, rel=0.03)


def test_w2_unequal_sizes_matches_replication():
    rng = np.random.default_rng(5)
    u, v = rng.standard_normal(6), rng.standard_normal(4)
    # replicate to a common size: each atom of u 2x, of v 3x
    ur, vr = np.sort(np.repeat(u, 2)), np.sort(np.repeat(v, 3))
    assert ev._w2_1d(u, v) == pytest.approx(np.sqrt(np.mean((ur - vr) ** 2)), rel=1e-12)


def test_sw_errors():
    with pytest.raises(ContractError):
        ev.sliced_wasserstein(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        ev.sliced_wasserstein(np.zeros((3, 2)), np.zeros((3, 3)))


def test_gaussian_tc_cases():
    rng = np.random.default_rng(6)
    z = rng.standard_normal((20000, 3))
    assert abs(ev.latent_stats(z)["gaussian_tc"]) < 5e-3
    assert ev.gaussian_tc([[1, 0.9], [0.9, 1]]) == pytest.approx(-0.5 * np.log(1 - 0.81), rel=1e-12)
    zc = rng.multivariate_normal([0, 0], [[1, 0.9], [0.9, 1]], 50000)
    tc = ev.latent_stats(zc)["gaussian_tc"]
    assert tc == pytest.approx(0.830, abs=0.02)
    assert ev.latent_stats(zc * [3.0, 0.2] + [1, -4])["gaussian_tc"] == pytest.approx(tc, rel=1e-9)


def test_gaussian_tc_singular_fallback():
    with pytest.warns(UserWarning, match="pseudo-determinant"):
        val = ev.gaussian_tc([[1.0, 1.0], [1.0, 1.0]])
    assert np.isfinite(val)
    with pytest.raises(ContractError):
        ev.latent_stats(np.zeros((2, 2)))


def test_mi_independent_encoder():
    inst = ev.LinearGaussianInstance([[1.0]], [[0.0]], 0.1, [[1.0]])
    r = ev.mi_bound_check(inst)
    assert r["mi"] == 0.0 and r["loss_ae"] >= r["entropy"] and r["holds"]


def test_mi_one_dim_closed_form():
    inst = ev.LinearGaussianInstance([[1.0]], [[1.0]], 0.1, [[1.0]])
    r = ev.mi_bound_check(inst)
    assert r["mi"] == pytest.approx(0.5 * np.log(1 + 1 / 0.01), rel=1e-12)
    assert r["entropy"] == pytest.approx(0.5 * np.log(2 * np.pi * np.e), rel=1e-12)
    assert r["holds"] and r["slack"] > 0


def test_mi_slack_tightens_with_decoder_match():
    slacks = [ev.mi_bound_check(ev.LinearGaussianInstance([[1.0]], [[1.0]], 0.1, [[1.0]],
                                                          score_dec=[[1.0 + d]]))["slack"]
              for d in (0.8, 0.4, 0.2, 0.1, 0.0)]
    assert slacks == sorted(slacks, reverse=True)


def test_mi_contracts():
    with pytest.raises(ContractError):
        ev.mi_bound_check({"not": "an instance"})
    with pytest.raises(ContractError):
        ev.LinearGaussianInstance([[1.0]], [[1.0]], 0.0, [[1.0]])
    with pytest.raises(ContractError):
        ev.LinearGaussianInstance(np.eye(2), [[1.0]], 0.1, [[1.0]])


def test_score_error_zero_for_exact_x0_coupling():
    # with a huge encoder SNR and matching decoder, the network is nearly the bridge score
    tight = ev.LinearGaussianInstance([[1.0]], [[1.0]], 1e-4, [[1.0]]).score_error(0.5)
    loose = ev.LinearGaussianInstance([[1.0]], [[1.0]], 1.0, [[1.0]]).score_error(0.5)
    assert tight < 1e-3 * loose
