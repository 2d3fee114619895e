"""Run configuration: TOML files, ``--set key=value`` overrides, hashing.

Every section is a dataclass; unknown keys and ill-typed values raise
:class:`~dbae.errors.ConfigError`.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from dbae.bridge import BridgeKernel
from dbae.errors import ConfigError, ContractError
from dbae.model import make_cfgs
from dbae.sample import SamplerCfg
from dbae.schedule import VpSchedule
from dbae.train import LatentPriorCfg, TrainCfg


RUN_CONTROL = ("total_steps", "checkpoint_every", "log_every")


@dataclass
class ScheduleSection:
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_end: float = 1.0
    eps_t: float = 1e-4


@dataclass
class ModelSection:
    data_dim: int = 2
    latent_dim: int = 2
    encoder_mode: str = "deterministic"
    enc_hidden: tuple = (128, 128)
    dec_hidden: tuple = (128, 128)
    score_hidden: tuple = (256, 256, 256)
    time_dim: int = 32
    use_z_condition: bool = True


@dataclass
class TrainSection:
    batch_size: int = 128
    lr: float = 1e-3
    ema_rate: float = 0.999
    total_steps: int = 5000
    t_sampling: str = "uniform"
    loss_form: str = "x0_simple"
    tc_weight: float = 0.0
    log_every: int = 50
    checkpoint_every: int = 0


@dataclass
class PriorSection:
    depth: int = 4
    width: int = 256
    beta: float = 0.008
    discrete_steps: int = 1000
    loss: str = "l2"
    time_dim: int = 32
    batch_size: int = 256
    lr: float = 1e-3
    ema_rate: float = 0.999
    total_steps: int = 4000
    sample_steps: int = 100


@dataclass
class SamplerSection:
    kind: str = "heun_ode"
    steps: int = 50
    spacing: str = "quadratic"


@dataclass
class EvalSection:
    n_samples: int = 2048
    n_projections: int = 128
    holdout: str = ""


@dataclass
class RunConfig:
    seed: int = 0
    dataset: str = ""
    toy: str = "two_moons"
    n: int = 4096
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    prior: PriorSection = field(default_factory=PriorSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # -- construction
    @classmethod
    def from_dict(cls, data):
        return _build(cls, data, "")

    @classmethod
    def from_toml(cls, text):
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"invalid TOML: {err}") from None

    @classmethod
    def load(cls, path=None, overrides=()):
        if path is None:
            cfg = cls()
        else:
            try:
                with open(path, "rb") as fh:
                    raw = tomllib.load(fh)
            except OSError as err:
                raise ConfigError(f"cannot read config {path}: {err}") from None
            except tomllib.TOMLDecodeError as err:
                raise ConfigError(f"{path}: invalid TOML: {err}") from None
            cfg = cls.from_dict(raw)
        return cfg.with_overrides(overrides)

    def with_overrides(self, overrides):
        data = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            parts = key.strip().split(".")
            node = data
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section in {key!r}")
                node = node[p]
            if parts[-1] not in node or isinstance(node[parts[-1]], dict):
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = _parse_value(raw.strip())
        return RunConfig.from_dict(data)

    # -- serialization
    def to_dict(self):
        return _to_plain(dataclasses.asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self):
        """Digest of everything except run-length controls, so extending a run is not drift."""
        data = self.to_dict()
        for key in RUN_CONTROL:
            data["train"].pop(key)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- typed views used by the library
    def vp_schedule(self):
        s = self.schedule
        return VpSchedule(s.beta_min, s.beta_max, s.t_end)

    def bridge_kernel(self):
        return BridgeKernel(self.vp_schedule(), self.schedule.eps_t)

    def model_cfgs(self):
        m = self.model
        return make_cfgs(m.data_dim, m.latent_dim, m.encoder_mode, m.enc_hidden, m.dec_hidden,
                         m.score_hidden, m.time_dim, m.use_z_condition)

    def train_cfg(self):
        t = self.train
        return TrainCfg(t.batch_size, t.lr, t.ema_rate, t.total_steps, t.t_sampling, t.loss_form,
                        t.tc_weight, self.seed, t.log_every)

    def prior_cfg(self):
        p = self.prior
        return LatentPriorCfg(p.depth, p.width, p.beta, p.discrete_steps, p.loss, p.time_dim,
                              p.batch_size, p.lr, p.ema_rate, p.total_steps, p.sample_steps, self.seed)

    def sampler_cfg(self):
        s = self.sampler
        return SamplerCfg(s.kind, s.steps, self.seed, s.spacing)

    def validate(self):
        """Instantiate every typed view so cross-field constraints are checked."""
        try:
            self.vp_schedule()
            enc, _, _ = self.model_cfgs()
            train = self.train_cfg()
            self.prior_cfg()
            self.sampler_cfg()
        except (ContractError, ValueError) as err:
            raise ConfigError(str(err)) from None
        if train.tc_weight > 0 and enc.mode != "gaussian":
            raise ConfigError("train.tc_weight > 0 requires model.encoder_mode = 'gaussian'")
        return self


def _parse_value(raw):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _coerce(value, default, where):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, tuple):
        if isinstance(value, (list, tuple)) and all(isinstance(v, int) and not isinstance(v, bool)
                                                     for v in value):
            return tuple(value)
    raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in sorted(unknown))}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(value, default, prefix + name)
    return cls(**kwargs)
