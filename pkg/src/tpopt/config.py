"""Experiment configuration: YAML text <-> validated dataclasses.

Unknown keys are rejected at every level; only ``seed`` is required.
Every omitted value is filled from the defaults below. The bundled
``configs/desk.yaml`` overrides several of them (family ranges, learning
rate, training set size, step and bandwidth candidates); see the comments
there.
"""

from dataclasses import MISSING, dataclass, field, fields, asdict, is_dataclass
import re
import typing

import yaml

from .errors import ConfigurationError


@dataclass
class FamilyConfig:
    kind: str = "chirp"  # chirp | image
    f0_range: list = field(default_factory=lambda: [30.0, 34.0])
    chirp_rate_range: list = field(default_factory=lambda: [-10.0, 10.0])
    duration: float = 1.0
    sample_rate: float = 256.0
    peak_position: float = 0.9
    rise_fraction: float = 0.3
    envelope: str = "raised_cosine"
    phase_origin: str = "peak"
    # image family
    idx_images: str = ""
    idx_labels: str = ""
    digit: int = 3
    max_shift: float = 0.1
    max_angle: float = 30.0


@dataclass
class DataConfig:
    sigma: float = 0.1
    amplitude: float = 1.0
    n_train: int = 10000
    n_val_pos: int = 2000
    n_val_neg: int = 2000
    n_test_pos: int = 2000
    n_test_neg: int = 2000
    n_embed: int = 3000


@dataclass
class EmbeddingConfig:
    dim: int = 2
    grid: str = "even"
    intervals: int = 30
    n_subset: int = 1000


@dataclass
class JacobianConfig:
    neighbors: int = 4
    bandwidth: float = 0.0
    ridge: str = "auto"


@dataclass
class TuneConfig:
    layers: int = 6
    steps: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0, 1.5, 2.0])
    bandwidths: list = field(default_factory=lambda: [1.0, 3.0, 10.0, 30.0, 100.0, 1000.0])
    neighbors: int = 1
    n_tune: int = 2000
    objective: str = "statistic"
    monotone: bool = True
    mode: str = "interpolated"


@dataclass
class TrainSection:
    learning_rate: float = 1e-2
    batch_size: int = 100
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    neighbors: int = 4
    train_bandwidths: bool = True
    select_every: int = 0  # batches between validation checkpoints; 0 keeps the last


@dataclass
class MFConfig:
    n_draws: int = 100


@dataclass
class EvalConfig:
    layers: list = field(default_factory=lambda: [1, 2, 4, 6])


@dataclass
class LabConfig:
    kappas: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    ambient_dim: int = 16
    n_seeds: int = 20
    iters: int = 2000
    covering_radii: list = field(default_factory=lambda: [1.0, 0.5, 0.25, 0.1])
    tradeoff_radii: list = field(default_factory=lambda: [0.5, 0.25, 0.125, 0.0625, 0.03125,
                                                           0.015625])


@dataclass
class ExperimentConfig:
    seed: int
    output_dir: str = "runs/desk"
    family: FamilyConfig = field(default_factory=FamilyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    jacobians: JacobianConfig = field(default_factory=JacobianConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    train: TrainSection = field(default_factory=TrainSection)
    mf: MFConfig = field(default_factory=MFConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    lab: LabConfig = field(default_factory=LabConfig)


REQUIRED = ("seed",)

# YAML 1.1 reads exponent forms without a dot (1e-2) as strings
_FLOAT_TEXT = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+$")

_CHOICES = {
    ("family", "kind"): ("chirp", "image"),
    ("family", "envelope"): ("raised_cosine", "flat"),
    ("family", "phase_origin"): ("start", "peak"),
    ("embedding", "grid"): ("even", "subset"),
    ("tune", "objective"): ("statistic", "param_error"),
    ("tune", "mode"): ("interpolated", "gradient"),
}


def _coerce(value, default, path):
    kind = type(default)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, str) and _FLOAT_TEXT.match(value.strip()):
            value = float(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigurationError(f"{path}: expected a list, got {value!r}")
        if default and isinstance(default[0], float):
            return [_coerce(v, 0.0, path) for v in value]
        if default and isinstance(default[0], int):
            return [_coerce(v, 0, path) for v in value]
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigurationError(f"{path}: unsupported value {value!r} for {kind.__name__}")


def _build(cls, data, prefix):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{prefix or 'config'}: expected a mapping")
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        where = f" in [{prefix}]" if prefix else ""
        raise ConfigurationError(f"unknown key(s){where}: {', '.join(unknown)}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name, f in names.items():
        path = f"{prefix}.{name}" if prefix else name
        sub = hints.get(name)
        if is_dataclass(sub):
            kwargs[name] = _build(sub, data.get(name), name)
            continue
        if name not in data:
            continue
        if f.default is not MISSING:
            default = f.default
        elif f.default_factory is not MISSING:
            default = f.default_factory()
        else:
            default = 0  # required integer keys
        kwargs[name] = _coerce(data[name], default, path)
        choices = _CHOICES.get((prefix, name))
        if choices and kwargs[name] not in choices:
            raise ConfigurationError(f"{path}: {kwargs[name]!r} not in {list(choices)}")
    return cls(**kwargs)


def load_config(text):
    """Parse and validate YAML text into an :class:`ExperimentConfig`."""
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping of sections")
    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise ConfigurationError(f"missing required key(s): {', '.join(missing)}")
    return _build(ExperimentConfig, data, "")


def dump_config(cfg):
    return yaml.safe_dump(asdict(cfg), sort_keys=True, default_flow_style=False)


def load_config_file(path):
    with open(path) as fh:
        return load_config(fh.read())


def config_dict(cfg):
    return asdict(cfg)
