"""JSON run configuration with full defaulting and strict key checking."""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .discdetect import MorphologyConfig
from .losses import LossWeights
from .model import BackboneSpec
from .synthgen import SynthParams
from .trainer import TrainConfig
from .views import ViewMode


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSection:
    n_subjects: int = 100
    images_per_subject: int = 3


@dataclass(frozen=True)
class ViewSection:
    mode: str = "eval"

    def __post_init__(self):
        ViewMode(self.mode)


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    patience: int = 5


@dataclass(frozen=True)
class EvalSection:
    mode: str = "kfold"
    k: int = 10
    repeats: int = 5
    test_fraction: float = 0.25
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.mode not in ("kfold", "shuffle"):
            raise ValueError("mode must be 'kfold' or 'shuffle'")
        if self.k < 2 or self.repeats < 1:
            raise ValueError("need k >= 2 and repeats >= 1")
        if not 0 < self.test_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ValueError("fractions must lie in (0, 1)")


@dataclass(frozen=True)
class PathSection:
    manifest: str | None = None
    out_dir: str = "out"


SECTIONS = {
    "synth": SynthParams,
    "dataset": DatasetSection,
    "morphology": MorphologyConfig,
    "views": ViewSection,
    "model": BackboneSpec,
    "train": TrainSection,
    "loss": LossWeights,
    "evaluation": EvalSection,
    "paths": PathSection,
}
TOP_LEVEL = {"seed": 0, "workers": 1}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    synth: SynthParams = field(default_factory=SynthParams)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    morphology: MorphologyConfig = field(default_factory=MorphologyConfig)
    views: ViewSection = field(default_factory=ViewSection)
    model: BackboneSpec = field(default_factory=BackboneSpec)
    train: TrainSection = field(default_factory=TrainSection)
    loss: LossWeights = field(default_factory=LossWeights)
    evaluation: EvalSection = field(default_factory=EvalSection)
    paths: PathSection = field(default_factory=PathSection)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, loss=self.loss, **asdict(self.train))

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def with_overrides(self, **kw):
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


def _line_of(text, key, start=0):
    m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, start)
    if m is None:
        return None, start
    return text.count("\n", 0, m.start()) + 1, m.end()


def _type_ok(value, default):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if default is None:
        return value is None or isinstance(value, str)
    return True


def _where(source, line):
    return f"{source}:{line}" if line else source


def parse_config(text: str, source="<config>") -> RunConfig:
    """Parse JSON text into a RunConfig; errors name the key and line."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    kwargs = {}
    for key, value in data.items():
        line, pos = _line_of(text, key)
        if key in TOP_LEVEL:
            if not _type_ok(value, TOP_LEVEL[key]):
                raise ConfigError(f"{_where(source, line)}: key {key!r} must be an integer")
            kwargs[key] = value
            continue
        if key not in SECTIONS:
            raise ConfigError(f"{_where(source, line)}: unknown key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{_where(source, line)}: section {key!r} must be an object")
        cls = SECTIONS[key]
        defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls)}
        for sub, sub_value in value.items():
            sub_line, _ = _line_of(text, sub, pos)
            if sub not in defaults:
                raise ConfigError(f"{_where(source, sub_line)}: unknown key {key}.{sub!r}")
            if not _type_ok(sub_value, defaults[sub]):
                raise ConfigError(f"{_where(source, sub_line)}: key {key}.{sub} has the wrong type "
                                  f"(got {type(sub_value).__name__})")
        try:
            kwargs[key] = cls(**value)
        except ValueError as exc:
            raise ConfigError(f"{_where(source, line)}: section {key!r}: {exc}") from None
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
