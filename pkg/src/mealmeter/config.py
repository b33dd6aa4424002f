"""Run configuration: defaults, INI-style config files and flag overrides.

A config file is plain ``key = value`` lines, optionally under a
``[mealmeter]`` header. Command-line flags win over file values.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .preprocess import DEFAULT_SIGNALS, PreprocessConfig, SignalName

SCOPES = ("pooled", "per-subject")
METHODS = ("mealmeter", "huo")
SECTION = "mealmeter"


@dataclass(frozen=True)
class RunConfig:
    data: str = "data"
    out: str = "out"
    signals: tuple = tuple(s.value for s in DEFAULT_SIGNALS)
    horizon_min: float = 90.0
    rate: float = 8.0
    smoothing_window: int = 20
    smooth_all: bool = False
    n_components: int = 3
    split_ratio: float = 0.8
    seed: int = 0
    scope: str = "pooled"
    method: str = "mealmeter"
    entropy_bins: int = 16
    huo_kernels: int = 5
    huo_bandwidth_min: float = 0.0  # 0 -> half the kernel spacing
    svg: bool = True
    # simulate only
    n_subjects: int = 12
    days_per_subject: int = 3
    emit_bvp: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self) -> "RunConfig":
        if not self.signals:
            raise ConfigError("signal set must not be empty")
        for s in self.signals:
            try:
                SignalName(s)
            except ValueError:
                raise ConfigError(f"unknown signal {s!r}") from None
        for name in ("horizon_min", "rate", "smoothing_window", "n_components", "entropy_bins",
                     "huo_kernels"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.huo_bandwidth_min < 0:
            raise ConfigError("huo_bandwidth_min must be >= 0")
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must be in (0, 1)")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.n_subjects < 1 or self.days_per_subject < 1:
            raise ConfigError("n_subjects and days_per_subject must be >= 1")
        return self

    def preprocess(self) -> PreprocessConfig:
        return PreprocessConfig(rate=self.rate, horizon_min=self.horizon_min,
                                smoothing_window=self.smoothing_window, smooth_all=self.smooth_all,
                                signals=tuple(SignalName(s) for s in self.signals))

    def as_dict(self, exclude=("out", "extra")) -> dict[str, str]:
        """Rendered settings in declaration order; output paths left out so
        identical runs written to different places echo identically."""
        return {f.name: _render(getattr(self, f.name)) for f in fields(self) if f.name not in exclude}

    def echo(self, exclude=("out", "extra")) -> list[str]:
        return [f"{k} = {v}" for k, v in self.as_dict(exclude).items()]

    def to_ini(self) -> str:
        return f"[{SECTION}]\n" + "\n".join(self.echo(exclude=("extra",))) + "\n"


def _render(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not text.lstrip().startswith("["):
        text = f"[{SECTION}]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not parser.has_section(SECTION):
        raise ConfigError(f"{path}: missing [{SECTION}] section")
    return dict(parser.items(SECTION))


def resolve(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults <- config file <- non-None overrides."""
    defaults = {f.name: f.default for f in fields(RunConfig) if f.name != "extra"}
    values = {}
    if file_path is not None:
        for key, raw in read_config_file(file_path).items():
            key = key.replace("-", "_")
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, defaults[key])
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return dataclasses.replace(RunConfig(), **values).validate()
