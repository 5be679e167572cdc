"""Run configuration: YAML round-trip, dotted overrides, content hash.

A run file has four sections (``data``, ``model``, ``train``, ``metrics``)
mirroring the dataclasses below. Parsing is strict: an unrecognized key
anywhere in the document is an error naming the full dotted path. The
config hash covers the model and train sections, so resuming refuses when
anything that shapes the optimization changed, while dataset relocation
stays harmless.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict, fields, is_dataclass
from pathlib import Path

import yaml

from .metrics import MetricConfig
from .network import AblationConfig, default_mid_channels

DESK_INPUT_SIZE = 64
DESK_BATCH_SIZE = 4
DESK_LR = 1e-3


class ConfigError(ValueError):
    """Malformed run configuration (unknown key, bad value, missing path)."""


@dataclass
class DataPaths:
    train_root: Path | None = None
    val_root: Path | None = None
    test_root: Path | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                setattr(self, f.name, Path(v))


@dataclass
class ModelConfig:
    backbone: str = "tiny"  # "tiny" | "res2net50"
    mid_channels: int | None = None  # resolved per backbone when omitted
    pretrained: Path | None = None
    backbone_seed: int = 0
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self):
        if self.backbone not in ("tiny", "res2net50"):
            raise ConfigError(f"model.backbone must be tiny or res2net50, got {self.backbone!r}")
        if self.mid_channels is None:
            self.mid_channels = default_mid_channels(self.backbone)
        if self.mid_channels < 1:
            raise ConfigError("model.mid_channels must be positive")
        if self.pretrained is not None:
            self.pretrained = Path(self.pretrained)

    def backbone_spec(self):
        from .backbone import BackboneSpec
        if self.backbone == "tiny":
            return BackboneSpec.tiny(seed=self.backbone_seed)
        return BackboneSpec.res2net50(pretrained=self.pretrained)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    lr_decay_every: int = 30   # epochs between /10 steps
    lr_decay_factor: float = 0.1
    batch_size: int = 20
    epochs: int = 200
    input_size: int = 352
    seed: int = 0
    augment: bool = True
    checkpoint_every: int = 50  # epochs between periodic checkpoints

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.input_size % 32:
            raise ConfigError("train.input_size must be divisible by 32")
        if self.lr_decay_every < 1:
            raise ConfigError("train.lr_decay_every must be >= 1")

    def learning_rate_at(self, epoch):
        """lr for a 0-indexed epoch under the step schedule."""
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class RunConfig:
    data: DataPaths = field(default_factory=DataPaths)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)

    @classmethod
    def desk(cls, **train_overrides):
        """Small CPU profile used by the fast test suite."""
        train = dict(lr=DESK_LR, lr_decay_every=100, batch_size=DESK_BATCH_SIZE,
                     epochs=10, input_size=DESK_INPUT_SIZE, augment=False,
                     checkpoint_every=5)
        train.update(train_overrides)
        return cls(model=ModelConfig(backbone="tiny"), train=TrainConfig(**train))


_SECTIONS = {"data": DataPaths, "model": ModelConfig, "train": TrainConfig,
             "metrics": MetricConfig}


def _to_plain(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def to_dict(config: RunConfig) -> dict:
    return _to_plain(asdict(config))


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key: {path}.{key}" if path else
                              f"unknown config key: {key}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        sub = f.type if is_dataclass(f.type) else None
        if name == "ablation":
            value = _build(AblationConfig, value, f"{path}.{name}")
        elif sub is not None:
            value = _build(sub, value, f"{path}.{name}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in section {path or 'root'}: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key: {key}")
    parts = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            parts[name] = _build(cls, data[name], name)
    return RunConfig(**parts)


def apply_overrides(data: dict, overrides):
    """Apply ``section.key=value`` pairs to a plain config dict in place.

    Values parse as YAML scalars, so ``true``, ``0.001`` and quoted strings
    all do what they look like.
    """
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through scalar at {part} in {key}")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    apply_overrides(data, overrides)
    return from_dict(data)


def save_config(config: RunConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(config), fh, default_flow_style=False, sort_keys=False)


def config_hash(config: RunConfig) -> str:
    """Digest of the optimization-shaping sections (model + train)."""
    payload = {"model": to_dict(config)["model"], "train": to_dict(config)["train"]}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def diff_configs(a: RunConfig, b: RunConfig) -> list:
    """Dotted paths whose values differ between two configs."""
    out = []

    def walk(da, db, path):
        for key in sorted(set(da) | set(db)):
            va, vb = da.get(key), db.get(key)
            sub = f"{path}.{key}" if path else key
            if isinstance(va, dict) and isinstance(vb, dict):
                walk(va, vb, sub)
            elif va != vb:
                out.append(f"{sub}: {va!r} != {vb!r}")

    walk(to_dict(a), to_dict(b), "")
    return out
