import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from dbae.errors import (ConfigError, DataError, MagicError, ManifestError, RaggedCsvError,
                         TruncationError, VersionError)
from dbae.io.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from dbae.io.config import RunConfig
from dbae.io.datasets import load_dataset, make_toy, read_csv, save_dataset
from dbae.io.reports import MetricsWriter, read_metrics, read_pgm, tile_grid, write_eval_report, write_pgm
from dbae.io.tensorfile import decode_tensor, encode_tensor, read_tensor, write_tensor
from dbae.model import ModelBundle
from dbae.train import LatentPrior, encode_dataset, train_loop, train_prior

TINY = ["model.enc_hidden=[16]", "model.dec_hidden=[16]", "model.score_hidden=[32, 32]",
        "model.time_dim=8", "train.batch_size=32", "train.total_steps=200",
        "prior.depth=2", "prior.width=16", "prior.time_dim=8", "prior.batch_size=32",
        "prior.total_steps=20"]


def tiny_config(*extra):
    return RunConfig().with_overrides(TINY + list(extra)).validate()


def fresh(cfg):
    rng = np.random.default_rng(cfg.seed)
    bundle = ModelBundle.create(*cfg.model_cfgs(), cfg.bridge_kernel(), rng)
    return bundle, rng


# -- tensor files

@settings(max_examples=50, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float32, np.float64]),
                  hnp.array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5)))
def test_tensor_roundtrip(arr):
    back = decode_tensor(encode_tensor(arr))
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_tensor_file(tmp_path):
    x = np.arange(12, dtype=np.float32).reshape(3, 4)
    write_tensor(tmp_path / "x.dbt", x)
    np.testing.assert_array_equal(read_tensor(tmp_path / "x.dbt"), x)


def test_tensor_bad_magic():
    buf = bytearray(encode_tensor(np.zeros(3)))
    buf[:4] = b"NOPE"
    with pytest.raises(MagicError):
        decode_tensor(bytes(buf))


def test_tensor_truncation_names_sizes():
    buf = encode_tensor(np.zeros((4, 4)))
    with pytest.raises(TruncationError, match=f"expected {len(buf)} bytes, got {len(buf) - 8}"):
        decode_tensor(buf[:-8])


# -- datasets

def test_csv_example(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0.5,1.5\n−1,2\n")
    np.testing.assert_array_equal(read_csv(p), [[0.5, 1.5], [-1.0, 2.0]])


def test_csv_header_skipped(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    assert read_csv(p).shape == (1, 2)


def test_csv_ragged(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(RaggedCsvError, match="row 2"):
        read_csv(p)


def test_csv_garbage(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(DataError):
        read_csv(p)


def test_dataset_with_labels(tmp_path):
    x, y = make_toy("two_moons", 64, seed=3)
    save_dataset(tmp_path / "d.dbt", x, y)
    data, labels = load_dataset(tmp_path / "d.dbt")
    np.testing.assert_array_equal(data, x)
    np.testing.assert_array_equal(labels, y)


def test_dataset_csv_labels(tmp_path):
    (tmp_path / "d.csv").write_text("1,2\n3,4\n")
    (tmp_path / "d.labels.csv").write_text("0\n1\n")
    data, labels = load_dataset(tmp_path / "d.csv")
    assert data.shape == (2, 2) and labels.tolist() == [0.0, 1.0]


def test_dataset_label_count_mismatch(tmp_path):
    save_dataset(tmp_path / "d.dbt", np.zeros((4, 2)), np.zeros(3))
    with pytest.raises(DataError, match="3 labels for 4 rows"):
        load_dataset(tmp_path / "d.dbt")


def test_missing_dataset(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.dbt")


@pytest.mark.parametrize("name", ["two_moons", "circles", "eight_gaussians", "checkerboard", "shapes"])
def test_toys_deterministic(name):
    a, ya = make_toy(name, 32, seed=1)
    b, yb = make_toy(name, 32, seed=1)
    assert np.array_equal(a, b) and np.array_equal(ya, yb)
    assert len(a) == len(ya) == 32


# -- config

def test_config_unknown_key():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_toml("[model]\nlatent_dims = 3\n")


def test_config_unknown_override():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["train.lrr=0.1"])


def test_config_type_error():
    with pytest.raises(ConfigError, match="expected int"):
        RunConfig.from_toml("[model]\nlatent_dim = 'two'\n")


def test_config_override_and_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 4\n[train]\nlr = 0.01\n")
    cfg = RunConfig.load(p, ["train.lr=2e-4", "model.score_hidden=[8, 8]"])
    assert cfg.seed == 4 and cfg.train.lr == 2e-4 and cfg.model.score_hidden == (8, 8)


def test_config_cross_field():
    with pytest.raises(ConfigError, match="gaussian"):
        RunConfig().with_overrides(["train.tc_weight=1.0"]).validate()


def test_config_hash():
    a = RunConfig()
    assert a.hash() == RunConfig().hash()
    assert a.hash() != a.with_overrides(["train.lr=0.002"]).hash()
    # run length is not drift
    assert a.hash() == a.with_overrides(["train.total_steps=9"]).hash()


# -- checkpoints

def trained(cfg, steps=5):
    bundle, rng = fresh(cfg)
    data, _ = make_toy("two_moons", 256, seed=0)
    train_loop(data, cfg.with_overrides([f"train.total_steps={steps}"]).train_cfg(), bundle, rng)
    return bundle, rng, data


def test_checkpoint_bytes_stable():
    cfg = tiny_config()
    bundle, rng, _ = trained(cfg)
    buf = encode_checkpoint(cfg, bundle, rng, 5)
    ck = decode_checkpoint(buf)
    assert ck.step == 5
    assert encode_checkpoint(ck.config, ck.bundle, ck.rng, ck.step) == buf


def test_checkpoint_with_prior_roundtrip(tmp_path):
    cfg = tiny_config()
    bundle, rng, data = trained(cfg)
    prior = LatentPrior.create(cfg.prior_cfg(), 2, rng)
    train_prior(encode_dataset(bundle, data), prior, rng)
    path = tmp_path / "c.dbck"
    save_checkpoint(path, cfg, bundle, rng, 5, prior)
    ck = load_checkpoint(path)
    np.testing.assert_array_equal(ck.prior.z_stats[0], prior.z_stats[0])
    again = encode_checkpoint(ck.config, ck.bundle, ck.rng, ck.step, ck.prior)
    assert again == path.read_bytes()


def _header(buf):
    (hlen,) = struct.unpack_from("<I", buf, 4)
    return json.loads(buf[8:8 + hlen]), hlen


def _rewrite(buf, header, hlen):
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return b"DBCK" + struct.pack("<I", len(head)) + head + buf[8 + hlen:]


def test_checkpoint_bad_offset():
    cfg = tiny_config()
    bundle, rng = fresh(cfg)
    buf = encode_checkpoint(cfg, bundle, rng, 0)
    header, hlen = _header(buf)
    header["manifest"][1]["offset"] += 4
    with pytest.raises(ManifestError, match="offset"):
        decode_checkpoint(_rewrite(buf, header, hlen))


def test_checkpoint_version():
    cfg = tiny_config()
    bundle, rng = fresh(cfg)
    buf = encode_checkpoint(cfg, bundle, rng, 0)
    header, hlen = _header(buf)
    header["format_version"] = 2
    with pytest.raises(VersionError):
        decode_checkpoint(_rewrite(buf, header, hlen))


def test_checkpoint_truncated_body():
    cfg = tiny_config()
    bundle, rng = fresh(cfg)
    buf = encode_checkpoint(cfg, bundle, rng, 0)
    with pytest.raises(ManifestError):
        decode_checkpoint(buf[:-4])
    with pytest.raises(MagicError):
        decode_checkpoint(b"XXXX" + buf[4:])


def test_checkpoint_config_drift():
    cfg = tiny_config()
    bundle, rng = fresh(cfg)
    buf = encode_checkpoint(cfg, bundle, rng, 0)
    decode_checkpoint(buf, expect_config=cfg.with_overrides(["train.total_steps=400"]))
    with pytest.raises(ConfigError, match="drift"):
        decode_checkpoint(buf, expect_config=cfg.with_overrides(["train.lr=0.5"]))


def _strip(rows):
    return [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]


def resume_matches(total=200, split=100):
    """Uninterrupted run vs. checkpoint at ``split`` and resume; returns (metrics equal, params equal)."""
    cfg = tiny_config(f"train.total_steps={total}")
    data, _ = make_toy("two_moons", 512, seed=0)
    tcfg = cfg.train_cfg()

    bundle, rng = fresh(cfg)
    full = train_loop(data, tcfg, bundle, rng)

    b2, r2 = fresh(cfg)
    head = train_loop(data, cfg.with_overrides([f"train.total_steps={split}"]).train_cfg(), b2, r2)
    ck = decode_checkpoint(encode_checkpoint(cfg, b2, r2, split), expect_config=cfg)
    tail = train_loop(data, tcfg, ck.bundle, ck.rng, ck.step)

    same_rows = _strip(full) == _strip(head + tail)
    same_params = encode_checkpoint(cfg, bundle, rng, total) == encode_checkpoint(cfg, ck.bundle, ck.rng, total)
    return same_rows, same_params


def test_resume_bit_exact():
    rows, params = resume_matches()
    assert rows and params


# -- reports

def test_metrics_writer(tmp_path):
    p = tmp_path / "m.csv"
    w = MetricsWriter(p)
    w({"step": 1, "loss_ae": 0.25, "loss_tc": 0.0, "grad_norm": 1.5, "wall_ms": 3.0})
    MetricsWriter(p)({"step": 2, "loss_ae": 0.125, "loss_tc": 0.0, "grad_norm": 1.0, "wall_ms": 2.0})
    rows = read_metrics(p)
    assert [r["step"] for r in rows] == ["1", "2"]
    assert float(rows[1]["loss_ae"]) == 0.125


def test_eval_report(tmp_path):
    p = tmp_path / "e.csv"
    write_eval_report(p, {"recon_mse": 0.1}, "abc", 3)
    write_eval_report(p, {"sliced_wasserstein": 0.2}, "abc", 3)
    rows = read_metrics(p)
    assert [r["metric"] for r in rows] == ["recon_mse", "sliced_wasserstein"]
    assert rows[0]["config_hash"] == "abc" and rows[0]["seed"] == "3"


def test_pgm_roundtrip(tmp_path):
    img = np.round(np.random.default_rng(0).random((7, 5)) * 255) / 255
    write_pgm(tmp_path / "a.pgm", img)
    np.testing.assert_allclose(read_pgm(tmp_path / "a.pgm"), img, atol=1e-12)


def test_tile_grid_shape():
    grid = tile_grid(np.zeros((10, 16)), (4, 4), cols=8, pad=1)
    assert grid.shape == (2 * 5 + 1, 8 * 5 + 1)
