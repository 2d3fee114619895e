"""Checkpoint files.

Layout: ``b"DBCK"``, u32 little-endian header length, UTF-8 JSON header,
then the body: little-endian parameter blocks, all live tensors first, then
the EMA copies, then the Adam first and second moments. The header carries
the format version, the full run config and its hash, a manifest with the
name, shape, dtype, offset and size of every block, the random stream state,
the step count and (when fitted) the latent normalization stats.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from dbae.errors import ConfigError, ManifestError, MagicError, TruncationError, VersionError
from dbae.io.config import RunConfig
from dbae.model import ModelBundle
from dbae.nn import ParamStore
from dbae.train import LatentPrior

MAGIC = b"DBCK"
FORMAT_VERSION = 1
KINDS = ("live", "ema", "adam_m", "adam_v")


@dataclass
class Checkpoint:
    config: RunConfig
    bundle: ModelBundle
    rng: np.random.Generator
    step: int
    prior: LatentPrior = None


def _block(store, kind, name):
    if kind == "live":
        return store.params[name].data
    return {"ema": store.ema, "adam_m": store.m, "adam_v": store.v}[kind][name]


def _stores(bundle, prior):
    stores = dict(bundle.stores)
    if prior is not None:
        stores["prior"] = prior.store
    return stores


def encode_checkpoint(config, bundle, rng, step, prior=None):
    stores = _stores(bundle, prior)
    manifest, chunks, offset = [], [], 0
    for kind in KINDS:
        for sname, store in stores.items():
            for pname in store.names():
                arr = np.ascontiguousarray(_block(store, kind, pname))
                le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
                raw = le.tobytes()
                manifest.append({"kind": kind, "store": sname, "name": pname, "shape": list(arr.shape),
                                 "dtype": arr.dtype.str.lstrip("<>=|"), "offset": offset,
                                 "nbytes": len(raw)})
                chunks.append(raw)
                offset += len(raw)
    z_stats = None
    if prior is not None and prior.z_stats is not None:
        z_stats = {"mean": [float(v) for v in prior.z_stats[0]],
                   "std": [float(v) for v in prior.z_stats[1]]}
    header = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "manifest": manifest,
        "body_bytes": offset,
        "rng_state": rng.bit_generator.state,
        "step": int(step),
        "adam_steps": {s: st.step for s, st in stores.items()},
        "z_stats": z_stats,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(chunks)


def save_checkpoint(path, config, bundle, rng, step, prior=None):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(config, bundle, rng, step, prior))


def _check_manifest(manifest, body_len):
    spans = sorted((m["offset"], m["nbytes"], m) for m in manifest)
    pos = 0
    for off, nbytes, m in spans:
        expect = int(np.prod(m["shape"], dtype=np.int64)) * np.dtype(m["dtype"]).itemsize
        if nbytes != expect:
            raise ManifestError(f"block {m['store']}/{m['name']} ({m['kind']}): "
                                f"{nbytes} bytes for shape {m['shape']}")
        if off != pos:
            raise ManifestError(f"block {m['store']}/{m['name']} ({m['kind']}) at offset {off}, "
                                f"expected {pos}")
        pos += nbytes
    if pos != body_len:
        raise ManifestError(f"manifest covers {pos} bytes but the body has {body_len}")


def decode_checkpoint(buf, source="<buffer>", expect_config=None):
    if buf[:4] != MAGIC:
        raise MagicError(f"{source}: not a checkpoint (magic {bytes(buf[:4])!r})")
    if len(buf) < 8:
        raise TruncationError(f"{source}: truncated header")
    (hlen,) = struct.unpack_from("<I", buf, 4)
    if len(buf) < 8 + hlen:
        raise TruncationError(f"{source}: header needs {hlen} bytes, file has {len(buf) - 8}")
    try:
        header = json.loads(buf[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ManifestError(f"{source}: unreadable header: {err}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"{source}: format version {header.get('format_version')}, "
                           f"this build reads {FORMAT_VERSION}")
    body = memoryview(buf)[8 + hlen:]
    if header["body_bytes"] != len(body):
        raise ManifestError(f"{source}: header declares {header['body_bytes']} body bytes, "
                            f"found {len(body)}")
    _check_manifest(header["manifest"], len(body))

    config = RunConfig.from_dict(header["config"])
    if config.hash() != header["config_hash"]:
        raise ConfigError(f"{source}: stored config does not match its hash")
    if expect_config is not None and expect_config.hash() != header["config_hash"]:
        raise ConfigError(f"{source}: config drift (checkpoint {header['config_hash']}, "
                          f"current {expect_config.hash()})")

    blocks = {}
    for m in header["manifest"]:
        dt = np.dtype(m["dtype"]).newbyteorder("<")
        arr = np.frombuffer(body, dtype=dt, count=int(np.prod(m["shape"], dtype=np.int64)),
                            offset=m["offset"]).reshape(m["shape"])
        blocks[(m["kind"], m["store"], m["name"])] = arr.astype(dt.newbyteorder("="))

    def fill(store_name):
        names = [m["name"] for m in header["manifest"] if m["kind"] == "live" and m["store"] == store_name]
        if not names:
            return None
        store = ParamStore(blocks[("live", store_name, names[0])].dtype)
        for n in names:
            store.add(n, blocks[("live", store_name, n)])
            store.ema[n] = blocks[("ema", store_name, n)]
            store.m[n] = blocks[("adam_m", store_name, n)]
            store.v[n] = blocks[("adam_v", store_name, n)]
        store.step = header["adam_steps"][store_name]
        return store

    enc_cfg, dec_cfg, score_cfg = config.model_cfgs()
    bundle = ModelBundle(enc_cfg, dec_cfg, score_cfg, config.bridge_kernel(),
                         fill("encoder"), fill("decoder"), fill("score"))
    prior = None
    prior_store = fill("prior")
    if prior_store is not None:
        prior = LatentPrior(config.prior_cfg(), enc_cfg.latent_dim, prior_store)
        if header["z_stats"] is not None:
            prior.z_stats = (np.array(header["z_stats"]["mean"]), np.array(header["z_stats"]["std"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]
    return Checkpoint(config, bundle, rng, header["step"], prior)


def load_checkpoint(path, expect_config=None):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), str(path), expect_config)
