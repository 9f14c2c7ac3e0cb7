"""Declarative TOML experiment configuration with validated, fully resolved defaults."""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import LipParams
from .errors import ConfigError
from .plant import GSpec, PIDGains, PlantConfig
from .trajectory import Bounds
from .training import MODES, TrainingConfig


@dataclass(frozen=True)
class GSection:
    kind: str = "default"
    A: float = 5.0
    P: float = 0.1
    B: float = 2.0
    v0: float = 0.01
    hidden: int = 16
    mlp_seed: int = 12345
    amplitude: float = 1.0
    y_scale: float = 0.1
    v_scale: float = 0.05


@dataclass(frozen=True)
class ControllerSection:
    bandwidth_hz: float = 50.0
    zeta: float = 0.7
    integral_hz: float = 5.0
    i_clamp: float = 1000.0


@dataclass(frozen=True)
class PlantSection:
    m: float = 18.8
    fv: float = 172.0
    fc: float = 7.21
    fk: float = 1.36e-8
    encoder_resolution: float = 0.5e-5
    dither_sigma: float = 50.0
    g: GSection = field(default_factory=GSection)
    controller: ControllerSection = field(default_factory=ControllerSection)


@dataclass(frozen=True)
class ReferenceSection:
    vmax: float = 0.05
    amax: float = 4.0
    jmax: float = 1000.0
    dwell: float = 0.2


@dataclass(frozen=True)
class DataSection:
    reference: str = "r1"
    # identification data log the exact position; tracking runs always quantize
    quantize: bool = False


@dataclass(frozen=True)
class TrainingSection:
    lambda_: float = 0.01
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 5000
    tol: float = 0.0
    init_scale: float = 1.0
    pinn_lambda: float = 0.01
    pinn_train_phy: bool = False
    subsample: int = 10


@dataclass(frozen=True)
class ExperimentSection:
    modes: tuple = MODES
    nl_values: tuple = (16, 8)
    references: tuple = ("r1", "r2")
    n_seeds: int = 5
    sweep_lambdas: tuple = (0.0, 1e-4, 1e-2, 1.0)
    sweep_n_seeds: int = 1
    trace_stride: int = 10  # decimation of the error traces written by reproduce


@dataclass(frozen=True)
class Config:
    seed: int = 0
    Ts: float = 1e-4
    threads: int = 1
    plant: PlantSection = field(default_factory=PlantSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)
    data: DataSection = field(default_factory=DataSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # derived objects

    def bounds(self) -> Bounds:
        r = self.reference
        return Bounds(r.vmax, r.amax, r.jmax)

    def plant_config(self, quantize: bool = True) -> PlantConfig:
        p = self.plant
        c = p.controller
        return PlantConfig(
            m=p.m, fv=p.fv, fc=p.fc, fk=p.fk, g=GSpec(**asdict(p.g)), Ts=self.Ts,
            encoder_resolution=p.encoder_resolution if quantize else 0.0,
            dither_sigma=p.dither_sigma,
            controller=PIDGains.for_mass(p.m, c.bandwidth_hz, c.zeta, c.integral_hz, c.i_clamp),
            seed=self.derived_seeds("dither", 1)[0],
        )

    def training_config(self, lip: LipParams, mode: str = "regularized", n_l: int = 16,
                        seed: int = 0, lam: float | None = None) -> TrainingConfig:
        t = self.training
        if lam is None:
            lam = 0.0 if mode == "unregularized" else t.lambda_
        return TrainingConfig(
            theta_lip_ref=lip, lambda_diag=lam, mode=mode, step_size=t.step_size, beta1=t.beta1,
            beta2=t.beta2, eps=t.eps, max_iter=t.max_iter, tol=t.tol, seed=seed, hidden=(n_l,),
            init_scale=t.init_scale, pinn_lambda=t.pinn_lambda, pinn_train_phy=t.pinn_train_phy,
            subsample=t.subsample,
        )

    _STREAMS = {"dither": 0, "train": 1, "sweep": 2}

    def derived_seeds(self, stream: str, n: int) -> list[int]:
        """Independent seed streams, all derived from the root seed."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self._STREAMS[stream],))
        return [int(s) for s in ss.generate_state(n, dtype=np.uint32)]

    def to_dict(self) -> dict:
        return _to_toml_dict(self)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _toml_key(name: str) -> str:
    return name.rstrip("_")


def _to_toml_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if f.name.startswith("_"):
            continue
        out[_toml_key(f.name)] = _to_toml_dict(v) if is_dataclass(v) else (list(v) if isinstance(v, tuple) else v)
    return out


def _coerce(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a nonempty array, got {value!r}")
        item = default[0]
        return tuple(_coerce(f"{path}[{i}]", item, v) for i, v in enumerate(value))
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a table")
    proto = cls()
    known = {_toml_key(f.name): f for f in fields(cls) if not f.name.startswith("_")}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}: unknown field")
    kwargs = {}
    for key, f in known.items():
        if key not in data:
            continue
        default = getattr(proto, f.name)
        path = prefix + key
        if is_dataclass(default):
            kwargs[f.name] = _build(type(default), data[key], path + ".")
        else:
            kwargs[f.name] = _coerce(path, default, data[key])
    return cls(**kwargs)


def _positive(path, v):
    if not v > 0:
        raise ConfigError(f"{path}: must be positive, got {v}")


def _nonneg(path, v):
    if not v >= 0:
        raise ConfigError(f"{path}: must be >= 0, got {v}")


def validate(cfg: Config) -> Config:
    _nonneg("seed", cfg.seed)
    _positive("Ts", cfg.Ts)
    _positive("threads", cfg.threads)
    p = cfg.plant
    _positive("plant.m", p.m)
    for name in ("fv", "fc", "fk"):
        if not np.isfinite(getattr(p, name)):
            raise ConfigError(f"plant.{name}: must be finite")
    _nonneg("plant.encoder_resolution", p.encoder_resolution)
    _nonneg("plant.dither_sigma", p.dither_sigma)
    if p.g.kind not in ("none", "default", "mlp"):
        raise ConfigError(f"plant.g.kind: must be none, default or mlp, got {p.g.kind!r}")
    _positive("plant.g.P", p.g.P)
    _positive("plant.g.v0", p.g.v0)
    _positive("plant.g.hidden", p.g.hidden)
    for name in ("bandwidth_hz", "zeta"):
        _positive(f"plant.controller.{name}", getattr(p.controller, name))
    _nonneg("plant.controller.integral_hz", p.controller.integral_hz)
    _nonneg("plant.controller.i_clamp", p.controller.i_clamp)
    for name in ("vmax", "amax", "jmax"):
        _positive(f"reference.{name}", getattr(cfg.reference, name))
    _nonneg("reference.dwell", cfg.reference.dwell)
    t = cfg.training
    _nonneg("training.lambda", t.lambda_)
    _positive("training.step_size", t.step_size)
    _positive("training.max_iter", t.max_iter)
    _positive("training.subsample", t.subsample)
    _positive("training.eps", t.eps)
    _nonneg("training.tol", t.tol)
    _nonneg("training.pinn_lambda", t.pinn_lambda)
    for name in ("beta1", "beta2"):
        v = getattr(t, name)
        if not 0 <= v < 1:
            raise ConfigError(f"training.{name}: must lie in [0, 1), got {v}")
    e = cfg.experiment
    for m in e.modes:
        if m not in MODES:
            raise ConfigError(f"experiment.modes: unknown mode {m!r}; choose from {list(MODES)}")
    for n in e.nl_values:
        _positive("experiment.nl_values", n)
    for lam in e.sweep_lambdas:
        _nonneg("experiment.sweep_lambdas", lam)
    _positive("experiment.n_seeds", e.n_seeds)
    _positive("experiment.sweep_n_seeds", e.sweep_n_seeds)
    _positive("experiment.trace_stride", e.trace_stride)
    return cfg


def from_dict(data: dict) -> Config:
    return validate(_build(Config, data, ""))


def load(path) -> Config:
    """Read a TOML experiment file; missing keys take the defaults."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    return from_dict(data)


def with_seed(cfg: Config, seed: int) -> Config:
    return validate(replace(cfg, seed=seed))
