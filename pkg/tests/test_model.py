import inspect

import numpy as np
import pytest

from dbae.errors import ContractError, ShapeError
from dbae.model import EncoderCfg, ModelBundle
from dbae.nn import Tape, Tensor
from conftest import small_bundle


def test_deterministic_encode_decode_repeatable(bundle64):
    x = np.random.default_rng(0).standard_normal((5, 2))
    z1, m = bundle64.encode(x)
    z2, _ = bundle64.encode(x)
    assert m is None and np.array_equal(z1.data, z2.data)
    assert np.array_equal(bundle64.decode(z1).data, bundle64.decode(z2).data)


def test_gaussian_needs_rng():
    b = small_bundle(mode="gaussian")
    with pytest.raises(ContractError):
        b.encode(np.zeros((2, 2)))


def test_gaussian_zero_noise_is_mean():
    b = small_bundle(mode="gaussian")
    x = np.random.default_rng(1).standard_normal((3, 2))
    z, (mu, ls) = b.encode(x, noise_scale=0.0)
    assert np.array_equal(z.data, mu.data)
    sig = np.exp(ls.data)
    assert np.all((sig > 1e-4) & (sig < 10))


def test_gaussian_sample_variance():
    b = small_bundle(mode="gaussian")
    x = np.tile([[0.3, -0.7]], (10_000, 1))
    z, (mu, ls) = b.encode(x, np.random.default_rng(2))
    var = z.data.var(axis=0)
    assert np.allclose(var, np.exp(2 * ls.data[0]), rtol=0.05)


def test_latent_dim_constraint():
    with pytest.raises(ContractError):
        EncoderCfg(data_dim=2, latent_dim=3)
    with pytest.raises(ContractError):
        EncoderCfg(mode="vae")


def test_dimension_errors(bundle64):
    with pytest.raises(ShapeError):
        bundle64.encode(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        bundle64.decode(np.zeros((2, 1)))


def test_decode_depends_on_z_only():
    params = list(inspect.signature(ModelBundle.decode).parameters)
    assert params == ["self", "z", "ema"]


def test_endpoint_inference_nfe(bundle64):
    _, xT, nfe = bundle64.infer_endpoint(np.zeros((4, 2)))
    assert nfe == {"enc": 1, "dec": 1, "score": 0}
    assert xT.shape == (4, 2)


def test_predict_x0_shape_and_z_requirement(bundle64):
    x = np.random.default_rng(3).standard_normal((6, 2))
    out = bundle64.predict_x0(x, 0.5, x, np.zeros((6, 2)))
    assert out.shape == (6, 2)
    again = bundle64.predict_x0(x, 0.5, x, np.zeros((6, 2)))
    assert np.array_equal(out.data, again.data)
    with pytest.raises(ContractError):
        bundle64.predict_x0(x, 0.5, x)
    free = small_bundle(use_z=False)
    assert free.predict_x0(x, 0.5, x).shape == (6, 2)
    z1, z2 = np.zeros((6, 2)), np.ones((6, 2))
    assert np.array_equal(free.predict_x0(x, 0.5, x, z1).data, free.predict_x0(x, 0.5, x, z2).data)


def test_score_round_trip(bundle64):
    rng = np.random.default_rng(4)
    x, xT, z = rng.standard_normal((3, 5, 2))
    t = rng.uniform(0.01, 0.99, 5)
    s = bundle64.score(x, t, xT, z)
    x0 = bundle64.kernel.x0_from_score(x, t, xT, s.data)
    assert np.allclose(x0, bundle64.predict_x0(x, t, xT, z).data, rtol=1e-9, atol=1e-12)


def test_decode_gradient_fd(bundle64):
    z0 = np.random.default_rng(5).standard_normal((1, 2))
    w = np.array([[0.7, -1.1]])
    zt = Tensor(z0, requires_grad=True)
    with Tape() as tape:
        g = tape.gradient((bundle64.decode(zt) * Tensor(w)).sum(), {"z": zt})["z"]
    h = 1e-6
    fd = np.zeros(2)
    for i in range(2):
        e = np.zeros((1, 2))
        e[0, i] = h
        fd[i] = ((bundle64.decode(z0 + e).data - bundle64.decode(z0 - e).data) * w).sum() / (2 * h)
    assert np.allclose(g[0], fd, rtol=1e-7)


def test_score_jacobian_fd(bundle64):
    rng = np.random.default_rng(6)
    x, xT, z = rng.standard_normal((3, 1, 2))
    w = rng.standard_normal((1, 2))
    xt = Tensor(x, requires_grad=True)
    with Tape() as tape:
        g = tape.gradient((bundle64.score(xt, 0.4, xT, z) * Tensor(w)).sum(), {"x": xt})["x"]
    h = 1e-6
    fd = np.zeros(2)
    for i in range(2):
        e = np.zeros((1, 2))
        e[0, i] = h
        fd[i] = ((bundle64.score(x + e, 0.4, xT, z).data - bundle64.score(x - e, 0.4, xT, z).data) * w).sum() / (2 * h)
    assert np.allclose(g[0], fd, rtol=1e-6)
