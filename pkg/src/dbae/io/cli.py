"""Command line: ``dbae <subcommand> [--config FILE] [--set key=value ...] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric fault.
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from dbae import eval as ev
from dbae import selftest
from dbae.errors import ConfigError, ContractError, DataError, DbaeError, NumericFault, ShapeError
from dbae.io.checkpoint import load_checkpoint, save_checkpoint
from dbae.io.config import RunConfig
from dbae.io.datasets import load_dataset, make_toy, save_dataset
from dbae.io.reports import MetricsWriter, read_metrics, tile_grid, write_eval_report, write_pgm
from dbae.io.tensorfile import write_tensor
from dbae.model import ModelBundle
from dbae.sample import generate, interpolate, manipulate, reconstruct, write_trajectory_csv
from dbae.train import LatentPrior, encode_dataset, train_loop, train_prior

log = logging.getLogger("dbae")


def _grid_shape(d):
    side = int(round(np.sqrt(d)))
    return (side, side) if side * side == d and d >= 16 else None


def _dataset(cfg, args):
    path = args.data or cfg.dataset
    if not path:
        raise ConfigError("no dataset: set dataset=PATH or pass --data")
    data, labels = load_dataset(path)
    if data.shape[1] != cfg.model.data_dim:
        raise DataError(f"{path}: rows have {data.shape[1]} columns, model.data_dim is {cfg.model.data_dim}")
    return data, labels


def _ckpt_path(args):
    return args.checkpoint or os.path.join(args.out, "checkpoint.dbck")


def _load(args, cfg):
    """Read the checkpoint; without --config, overrides apply to its stored config."""
    path = _ckpt_path(args)
    if not os.path.exists(path):
        raise DataError(f"checkpoint {path} does not exist")
    ck = load_checkpoint(path)
    if args.config is None:
        cfg = ck.config.with_overrides(args.overrides).validate()
    return ck, cfg


def _save_images(args, name, x):
    shape = _grid_shape(x.shape[1])
    if shape is not None:
        write_pgm(os.path.join(args.out, f"{name}.pgm"), tile_grid(x[:64], shape))


def cmd_make_toy_data(cfg, args):
    x, y = make_toy(cfg.toy, cfg.n, cfg.seed)
    path = os.path.join(args.out, "data.dbt")
    save_dataset(path, x, y)
    xh, yh = make_toy(cfg.toy, cfg.n, cfg.seed + 1)
    save_dataset(os.path.join(args.out, "heldout.dbt"), xh, yh)
    _save_images(args, "data", x)
    print(path)


def _trim_metrics(path, last_step):
    """Drop rows logged after ``last_step`` so a resumed stream has no duplicates."""
    if not os.path.exists(path):
        return
    rows = read_metrics(path)
    keep = [r for r in rows if int(r["step"]) <= last_step]
    if len(keep) != len(rows):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(keep)


def cmd_train(cfg, args):
    ckpt_path = os.path.join(args.out, "checkpoint.dbck")
    metrics_path = os.path.join(args.out, "metrics.csv")
    if args.resume:
        if args.config is None:
            stored = load_checkpoint(args.resume).config
            cfg = stored.with_overrides(args.overrides).validate()
        ck = load_checkpoint(args.resume, expect_config=cfg)
        bundle, rng, start = ck.bundle, ck.rng, ck.step
        if ck.prior is not None:
            log.warning("resumed training drops the latent prior; rerun train-prior afterwards")
        _trim_metrics(metrics_path, start)
    else:
        rng = np.random.default_rng(cfg.seed)
        enc, dec, sc = cfg.model_cfgs()
        bundle = ModelBundle.create(enc, dec, sc, cfg.bridge_kernel(), rng)
        start = 0
        if os.path.exists(metrics_path):
            os.remove(metrics_path)
    data, _ = _dataset(cfg, args)
    tcfg = cfg.train_cfg()
    writer = MetricsWriter(metrics_path)
    every = cfg.train.checkpoint_every

    def on_step(step):
        if (every and step % every == 0) or step == tcfg.total_steps:
            save_checkpoint(ckpt_path, cfg, bundle, rng, step)

    rows = train_loop(data, tcfg, bundle, rng, start, writer, on_step)
    if start >= tcfg.total_steps:
        save_checkpoint(ckpt_path, cfg, bundle, rng, start)
    last = rows[-1]["loss_ae"] if rows else float("nan")
    print(f"trained to step {max(start, tcfg.total_steps)}; final loss_ae {last:.6g}; checkpoint {ckpt_path}")


def cmd_train_prior(cfg, args):
    ck, cfg = _load(args, cfg)
    data, _ = _dataset(cfg, args)
    rng = np.random.default_rng(cfg.seed + 7919)
    z = encode_dataset(ck.bundle, data)
    prior = LatentPrior.create(cfg.prior_cfg(), ck.bundle.latent_dim, rng)
    writer = MetricsWriter(os.path.join(args.out, "prior_metrics.csv"), ("step", "loss_prior"))
    train_prior(z, prior, rng, writer)
    out = os.path.join(args.out, "checkpoint.dbck")
    # stage two may change only the prior section of the stored config
    save_checkpoint(out, dataclasses.replace(ck.config, prior=cfg.prior), ck.bundle, ck.rng, ck.step, prior)
    print(f"latent prior trained ({prior.cfg.total_steps} steps); checkpoint {out}")


def _sampler_rng(cfg):
    return np.random.default_rng(cfg.seed + 104729)


def cmd_reconstruct(cfg, args):
    ck, cfg = _load(args, cfg)
    data, _ = _dataset(cfg, args)
    traj = [] if args.trajectory else None
    scfg = cfg.sampler_cfg()
    x_hat = reconstruct(data, ck.bundle, scfg, _sampler_rng(cfg) if scfg.stochastic else None, traj)
    write_tensor(os.path.join(args.out, "recon.dbt"), x_hat)
    if traj is not None:
        write_trajectory_csv(os.path.join(args.out, "trajectory.csv"), traj)
    _save_images(args, "recon", x_hat)
    print(f"reconstruction mse {ev.recon_error(data, x_hat):.6g}")


def cmd_generate(cfg, args):
    ck, cfg = _load(args, cfg)
    if ck.prior is None:
        raise DataError("checkpoint has no latent prior; run train-prior first")
    rng = _sampler_rng(cfg)
    x, nfe = generate(ck.bundle, ck.prior, args.n or cfg.eval.n_samples, cfg.sampler_cfg(), rng,
                      return_nfe=True)
    write_tensor(os.path.join(args.out, "samples.dbt"), x)
    _save_images(args, "samples", x)
    print(json.dumps({"nfe": nfe, "n": len(x)}))


def _parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_interpolate(cfg, args):
    ck, cfg = _load(args, cfg)
    data, _ = _dataset(cfg, args)
    a = data[args.index_a:args.index_a + 1]
    b = data[args.index_b:args.index_b + 1]
    lams = _parse_floats(args.lambdas)
    outs, ends = interpolate(a, b, lams, ck.bundle, cfg.sampler_cfg(), return_endpoints=True)
    write_tensor(os.path.join(args.out, "interp.dbt"), np.concatenate(outs))
    write_tensor(os.path.join(args.out, "interp_endpoints.dbt"), np.concatenate(ends))
    _save_images(args, "interp", np.concatenate(outs))
    print(f"{len(lams)} interpolants written")


def cmd_manipulate(cfg, args):
    ck, cfg = _load(args, cfg)
    data, labels = _dataset(cfg, args)
    if args.direction:
        w = np.array(_parse_floats(args.direction))
    else:
        if labels is None:
            raise DataError("no labels to fit a probe direction; pass --direction")
        y = labels if labels.ndim == 1 else labels[:, args.label_col]
        probe = ev.fit_probe(encode_dataset(ck.bundle, data), y, kind="classification")
        w = probe.w[:, 0] / np.linalg.norm(probe.w[:, 0])
    x = data[:args.n] if args.n else data
    outs = [manipulate(x, w, s, ck.bundle, cfg.sampler_cfg()) for s in _parse_floats(args.strengths)]
    write_tensor(os.path.join(args.out, "manipulate.dbt"), np.stack(outs))
    _save_images(args, "manipulate", np.concatenate(outs))
    print(f"direction {np.array2string(w, precision=4)}")


def cmd_eval(cfg, args):
    ck, cfg = _load(args, cfg)
    data, labels = _dataset(cfg, args)
    n = min(len(data), cfg.eval.n_samples)
    scfg = cfg.sampler_cfg()
    rng = _sampler_rng(cfg)
    x = data[:n]
    x_hat = reconstruct(x, ck.bundle, scfg, rng if scfg.stochastic else None)
    metrics = {"recon_mse": ev.recon_error(x, x_hat)}
    shape = _grid_shape(x.shape[1])
    if shape is not None:
        metrics["recon_ssim"] = ev.recon_error(x, x_hat, "ssim_window", shape)
    z = encode_dataset(ck.bundle, data)
    metrics["gaussian_tc"] = ev.latent_stats(z)["gaussian_tc"]
    if labels is not None:
        y = labels if labels.ndim == 1 else labels[:, 0]
        if np.all(np.isin(y, (0, 1))):
            half = len(z) // 2
            probe = ev.fit_probe(z[:half], y[:half], kind="classification")
            metrics.update({f"probe_{k}": v for k, v in probe_scores_safe(probe, z[half:], y[half:]).items()})
    held = cfg.eval.holdout
    if ck.prior is not None and held:
        ref, _ = load_dataset(held)
        gen = generate(ck.bundle, ck.prior, n, scfg, rng)
        metrics["sliced_wasserstein"] = ev.sliced_wasserstein(gen, ref[:n], cfg.eval.n_projections, cfg.seed)
    write_eval_report(os.path.join(args.out, "eval.csv"), metrics, ck.config.hash(), cfg.seed)
    for k, v in metrics.items():
        print(f"{k},{v:.6g}")


def probe_scores_safe(probe, z, y):
    try:
        return ev.probe_scores(probe, z, y)
    except ContractError:
        return {}


def cmd_selftest(cfg, args):
    results = selftest.run(cfg.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        raise NumericFault("selftest identities failed")


COMMANDS = {
    "train": cmd_train, "train-prior": cmd_train_prior, "reconstruct": cmd_reconstruct,
    "generate": cmd_generate, "interpolate": cmd_interpolate, "manipulate": cmd_manipulate,
    "eval": cmd_eval, "make-toy-data": cmd_make_toy_data, "selftest": cmd_selftest,
}


def build_parser():
    p = argparse.ArgumentParser(prog="dbae", description="Diffusion bridge autoencoders")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted key), repeatable")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--data", help="dataset path (defaults to the config's dataset)")
    p.add_argument("--checkpoint", help="checkpoint to read (defaults to OUT/checkpoint.dbck)")
    p.add_argument("--resume", help="resume training from this checkpoint")
    p.add_argument("--trajectory", action="store_true", help="dump the reverse trajectory as CSV")
    p.add_argument("--n", type=int, default=0, help="number of samples / rows")
    p.add_argument("--index-a", type=int, default=0)
    p.add_argument("--index-b", type=int, default=1)
    p.add_argument("--lambdas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--direction", help="latent direction for manipulate (comma-separated)")
    p.add_argument("--label-col", type=int, default=0)
    p.add_argument("--strengths", default="-2,-1,0,1,2")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.overrides = list(args.set)
        if args.seed is not None:
            args.overrides.append(f"seed={args.seed}")
        cfg = RunConfig.load(args.config, args.overrides).validate()
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except (NumericFault, FloatingPointError) as err:
        print(f"numeric fault: {err}", file=sys.stderr)
        return 4
    except (ContractError, ShapeError, DbaeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
