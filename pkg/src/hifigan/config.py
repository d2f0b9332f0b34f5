"""Flat ``key = value`` run configuration files.

One setting per line, ``#`` starts a comment. Keys are ``<section>.<field>``
where the section is one of ``gen``, ``mel``, ``train``, ``mpd``, ``msd`` or
``loss``. A bare ``variant = v1|v2|v3`` line selects a generator preset that
later ``gen.*`` lines may override. Values are JSON literals (numbers,
``true``/``false``, ``null``, nested lists); a bare word is read as a string.
"""

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from typing import Dict, Tuple

from .checkpoint import atomic_write
from .discriminators import MPDConfig, MSDConfig
from .generator import PRESETS, V1, GeneratorConfig
from .losses import LossWeights
from .signal import MelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    gen: GeneratorConfig = V1
    mel: MelConfig = field(default_factory=MelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mpd: MPDConfig = field(default_factory=MPDConfig)
    msd: MSDConfig = field(default_factory=MSDConfig)
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.gen.hop != self.mel.hop:
            raise ConfigError(f"gen.hop={self.gen.hop} differs from mel.hop={self.mel.hop}")
        if self.gen.input_mels != self.mel.n_mels:
            raise ConfigError(f"gen.input_mels={self.gen.input_mels} differs from "
                              f"mel.n_mels={self.mel.n_mels}")


SECTIONS = {
    "gen": GeneratorConfig,
    "mel": MelConfig,
    "train": TrainConfig,
    "mpd": MPDConfig,
    "msd": MSDConfig,
    "loss": LossWeights,
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig(gen=PRESETS[name])


def _coerce(value, hint, where):
    """Check a decoded JSON value against a dataclass field annotation."""
    origin = typing.get_origin(hint)
    if origin is typing.Union:  # Optional[...]
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], where)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if hint is tuple or origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    return value


def _field_hints(cls) -> Dict[str, object]:
    return typing.get_type_hints(cls)


def _parse_value(text: str, where: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if text and all(ch.isalnum() or ch in "_-." for ch in text):
            return text
        raise ConfigError(f"{where}: cannot parse value {text!r}") from None


def parse_config(text: str, source="<config>") -> RunConfig:
    variant = None
    overrides: Dict[str, Dict[str, Tuple[object, str]]] = {s: {} for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value_text = (part.strip() for part in line.split("=", 1))
        value = _parse_value(value_text, where)
        if key == "variant":
            if value not in PRESETS:
                raise ConfigError(f"{where}: unknown variant {value!r}; choose from {sorted(PRESETS)}")
            variant = value
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"{where}: unknown key {key!r} (sections: {', '.join(SECTIONS)})")
        hints = _field_hints(SECTIONS[section])
        if name not in hints:
            raise ConfigError(f"{where}: {SECTIONS[section].__name__} has no field {name!r}")
        if name in overrides[section]:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        overrides[section][name] = (_coerce(value, hints[name], f"{where}: {key}"), where)

    base = preset(variant) if variant else RunConfig()
    built = {}
    for section, cls in SECTIONS.items():
        current = getattr(base, section)
        kwargs = {name: v for name, (v, _) in overrides[section].items()}
        try:
            built[section] = dataclasses.replace(current, **kwargs) if kwargs else current
        except (ValueError, TypeError) as err:
            lines = ", ".join(w for _, w in overrides[section].values())
            raise ConfigError(f"{source}: invalid {section} settings ({lines}): {err}") from None
    try:
        return RunConfig(**built)
    except ValueError as err:
        raise ConfigError(f"{source}: {err}") from None


def _to_json(value):
    if isinstance(value, tuple):
        return [_to_json(v) for v in value]
    return value


def serialize_config(cfg: RunConfig) -> str:
    lines = ["# run configuration", f"# generator variant: {cfg.gen.variant}"]
    for section in SECTIONS:
        obj = getattr(cfg, section)
        lines.append("")
        lines.append(f"# {section}")
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            lines.append(f"{section}.{f.name} = {json.dumps(_to_json(value))}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, source=str(path))


def save_config(path, cfg: RunConfig):
    atomic_write(path, serialize_config(cfg).encode("utf-8"))
