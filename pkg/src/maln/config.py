"""Plain-text key-value configuration: parsing, presets, resolution.

Files hold one ``key = value`` pair per line; ``#`` starts a comment.
Run configuration resolves in layers: built-in defaults, then a named
preset, then a user config file, then command-line overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError


def parse_kv_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        out[key] = value.strip()
    return out


def format_kv(pairs: dict[str, str]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in pairs.items())


@dataclass
class RunConfig:
    """Every knob a run can turn, with desk-scale synthetic defaults."""

    # dataset: a binary dataset path, or (when empty) the synthetic keys
    dataset: str = ""
    synth_classes: int = 3
    synth_samples_per_class: int = 200
    synth_truth_dim: int = 4
    synth_sensor_ids: tuple = ("A", "B", "C")
    synth_sensor_dims: tuple = (20, 6, 12)
    synth_view_depths: tuple = (1, 1, 1)
    synth_noise: float = 0.05
    synth_cluster_spread: float = 0.35
    train_fraction: float = 0.4
    data_seed: int = 11        # drives synthetic generation and the split
    sensors: tuple = ("A", "B")

    # model
    latent_dim: int = 8
    enc_hidden: tuple = (64, 32)
    dec_hidden: tuple = ()          # empty mirrors enc_hidden
    hidden_activation: str = "tanh"

    # objective
    alpha: float = 1.0
    gamma: float = 0.2
    hinge: bool = True

    # mining
    strategy: str = "semi_hard"
    easy_fraction: float = 0.2

    # training plan
    checkpoints: int = 5
    epochs_per_checkpoint: int = 50
    triplets_per_checkpoint: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    triplet_sensor: str = "A"
    seed: int = 7

    # classification
    classifier_hidden: tuple = (128, 64)
    classifier_epochs: int = 150
    classifier_lr: float = 1e-3
    classifier_batch: int = 64
    knn_k: int = 5
    knn_sweep: tuple = (1, 3, 5, 9, 15, 25, 35, 51)
    ensemble_members: int = 3

    # translation
    regressor_hidden: tuple = (128, 64)
    regressor_folds: int = 5
    regressor_epochs: int = 100
    regressor_lr: float = 1e-3
    regressor_batch: int = 32
    translate_from: str = "A"
    translate_to: str = "B"

    # additional-sensor mapping
    map_sensor: str = "C"
    map_encoder: str = "A"
    map_epochs: int = 300
    map_batch: int = 256
    map_lr: float = 5e-4
    latent_gap_threshold: float = 0.1

    figures: bool = True

    @classmethod
    def from_sources(cls, preset: str | None = None, config_path=None,
                     overrides: dict[str, str] | None = None) -> "RunConfig":
        merged: dict[str, str] = {}
        if preset is not None:
            merged.update(parse_kv_file(preset_path(preset)))
        if config_path is not None:
            merged.update(parse_kv_file(config_path))
        if overrides:
            merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(merged)

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = {}
        defaults = cls()
        for key, value in raw.items():
            kwargs[key] = _coerce(key, value, getattr(defaults, key))
        return cls(**kwargs)

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                out[f.name] = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                out[f.name] = "true" if value else "false"
            else:
                out[f.name] = str(value)
        return out

    def validate(self) -> None:
        if self.strategy not in ("hard", "semi_hard", "random"):
            raise ConfigError(f"strategy '{self.strategy}' not in hard|semi_hard|random")
        if self.triplet_sensor not in ("A", "B", "alternating"):
            raise ConfigError(f"triplet_sensor '{self.triplet_sensor}' not in A|B|alternating")
        if len(self.sensors) != 2:
            raise ConfigError(f"sensors must name exactly two ids, got {self.sensors}")
        if not self.dataset:
            ids, dims, depths = self.synth_sensor_ids, self.synth_sensor_dims, self.synth_view_depths
            if not (len(ids) == len(dims) == len(depths)):
                raise ConfigError(
                    f"synth sensor ids ({len(ids)}), dims ({len(dims)}), and depths "
                    f"({len(depths)}) must have equal length")


def _coerce(key: str, value, default):
    if isinstance(value, (int, float, bool, tuple)):
        return value  # already typed (programmatic overrides)
    text = str(value).strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            tokens = [tok.strip() for tok in text.split(",") if tok.strip()]
            if default and isinstance(default[0], str):
                return tuple(tokens)
            if key in ("synth_sensor_ids", "sensors"):
                return tuple(tokens)
            return tuple(int(tok) for tok in tokens)
        return text
    except ValueError as err:
        raise ConfigError(f"config key '{key}': {err}") from None


def preset_path(name: str) -> Path:
    base = resources.files("maln") / "presets"
    path = Path(str(base / f"{name}.cfg"))
    if not path.exists():
        available = sorted(p.stem for p in Path(str(base)).glob("*.cfg"))
        raise ConfigError(f"unknown preset '{name}'; available: {available}")
    return path


def available_presets() -> list[str]:
    base = Path(str(resources.files("maln") / "presets"))
    return sorted(p.stem for p in base.glob("*.cfg"))
