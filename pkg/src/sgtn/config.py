"""Run configuration: typed defaults, INI files and ``--key value`` overrides."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .encoder import DESK, PAPER, VARIANTS
from .model import ModelConfig

__all__ = ["RunConfig", "ConfigError", "PRESETS", "load_config"]

PRESETS = {"desk": DESK, "paper-scale": PAPER}
SECTION = "run"


class ConfigError(ValueError):
    """Unknown key or unparsable value in a configuration source."""


@dataclass(frozen=True)
class RunConfig:
    # model
    preset: str = "desk"
    variant: str = "lswin"
    sgm_enabled: bool = True
    seed: int = 0
    # optimiser
    optimizer: str = "adam"
    lr: float = 1e-3
    steps: int = 2000
    batch: int = 2
    warmup: int = 50
    # paths
    data: str = "data"
    out: str = "run"
    checkpoint: str = ""
    predictions: str = ""
    # dataset generation
    count: int = 16
    extent: int = 64
    min_instances: int = 1
    max_instances: int = 4
    overlap_max: float = 0.0
    # diagnostics
    bench_sizes: str = "16,32,64"
    bench_dim: int = 24
    bench_window: int = 8
    bench_heads: int = 1
    bench_repeats: int = 3
    gradcheck_tol: float = 1e-5

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {list(VARIANTS)}, got {self.variant!r}")
        if self.optimizer != "adam":
            raise ConfigError(f"optimizer {self.optimizer!r} is not supported (only 'adam')")
        for key in ("steps", "count", "warmup"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        for key in ("batch", "extent", "bench_dim", "bench_window", "bench_heads", "bench_repeats"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        if not 0 <= self.min_instances <= self.max_instances:
            raise ConfigError(f"instance range [{self.min_instances}, {self.max_instances}] is empty")

    # -- derived -------------------------------------------------------------
    def model_config(self) -> ModelConfig:
        enc = PRESETS[self.preset].with_variant(self.variant)
        return ModelConfig(encoder=enc, sgm_enabled=self.sgm_enabled)

    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.out) / "model.sgtn"

    def predictions_path(self) -> Path:
        return Path(self.predictions) if self.predictions else Path(self.out) / "predictions"

    def bench_size_list(self) -> list:
        try:
            sizes = [int(s) for s in self.bench_sizes.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"bench_sizes must be comma-separated integers, got {self.bench_sizes!r}") from None
        if not sizes or min(sizes) < 1:
            raise ConfigError(f"bench_sizes must list positive integers, got {self.bench_sizes!r}")
        return sizes

    # -- (de)serialisation ---------------------------------------------------
    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    def to_ini(self) -> str:
        lines = [f"[{SECTION}]"]
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def updated(self, raw: dict, source: str) -> "RunConfig":
        """New config with string values from ``source`` parsed onto the typed fields."""
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, text in raw.items():
            name = key.replace("-", "_")
            if name not in types:
                raise ConfigError(f"{source}: unknown key {key!r}")
            parsed[name] = _parse(types[name], text, f"{source}: {key}")
        return replace(self, **parsed)


def _parse(kind, text, where: str):
    text = str(text).strip()
    try:
        if kind in (bool, "bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {getattr(kind, '__name__', kind)}") from None
    return text


def read_ini(path) -> dict:
    """``key = value`` pairs; a leading ``[run]`` header is optional."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        if not text.lstrip().startswith("["):
            text = f"[{SECTION}]\n" + text
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    extra = [s for s in parser.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"{path}: unknown section(s) {extra}")
    return dict(parser[SECTION]) if parser.has_section(SECTION) else {}


def load_config(config_file=None, overrides=None, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if config_file:
        cfg = cfg.updated(read_ini(config_file), str(config_file))
    if overrides:
        cfg = cfg.updated(overrides, "command line")
    return cfg
