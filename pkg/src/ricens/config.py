"""Flat ``key = value`` pipeline configuration.

Blank lines, lines starting with ``#`` and trailing `` # ...`` comments are ignored. Member-specific
training overrides use a ``<member>.`` prefix, e.g. ``cnn.loss = huber:1``
or ``ae.epochs = 300``.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .nn import LossKind, OptimizerSpec, TrainConfig
from .regressors import MEMBER_IDS
from .selection import SelectionConfig


class ConfigError(ValueError):
    pass


MODES = ("paper_fixed", "run_pipeline")
TRAIN_KEYS = ("optimizer", "lr", "momentum", "epochs", "batch_size", "patience", "loss")
DEFAULT_LOSSES = {"Dense": "mse", "AE": "mse", "MLP": "mse", "CNN": "huber:1"}


@dataclass
class PipelineConfig:
    seed: int = 0
    mode: str = "paper_fixed"
    test_fraction: float = 0.25
    folds: int = 10
    validation_fraction: float = 0.15
    max_cloud: float = 0.6
    growth_start_days: int = 90
    maturity_days: int = 30
    s2_window_days: int = 50
    iqr_factor: float = 1.5
    min_variance: float = 1e-4
    max_pvalue: float = 0.05
    max_abs_correlation: float = 0.9
    chi2_alpha: float = 0.05
    max_cramers_v: float = 0.9
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    epochs: int = 200
    batch_size: int = 32
    patience: int = 20
    elasticnet_alpha: float = 0.5
    elasticnet_lambda: float = 1e-3
    member_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not 0 <= self.max_cloud <= 1:
            raise ConfigError("max_cloud must lie in [0, 1]")
        if not self.growth_start_days > self.maturity_days > 0 or self.s2_window_days < 1:
            raise ConfigError("window lengths must satisfy growth_start_days > maturity_days > 0")
        if self.elasticnet_lambda < 0 or not 0 <= self.elasticnet_alpha <= 1:
            raise ConfigError("elastic-net lambda must be >= 0 and alpha in [0, 1]")
        try:
            self.selection()
            for member in MEMBER_IDS:
                self.train_config(member)
                self.loss(member)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def selection(self) -> SelectionConfig:
        return SelectionConfig(self.iqr_factor, self.min_variance, self.max_pvalue,
                               self.max_abs_correlation, self.chi2_alpha, self.max_cramers_v)

    def window_days(self) -> dict:
        return {"growth_start_days": self.growth_start_days, "maturity_days": self.maturity_days,
                "s2_days": self.s2_window_days}

    def _member_value(self, member: str, key: str):
        return self.member_overrides.get(member, {}).get(key)

    def train_config(self, member: str, seed: int | None = None) -> TrainConfig:
        def pick(key, default, cast):
            value = self._member_value(member, key)
            return default if value is None else cast(value)

        optimizer = OptimizerSpec(pick("optimizer", self.optimizer, str), pick("lr", self.lr, float),
                                  pick("momentum", self.momentum, float))
        return TrainConfig(optimizer, pick("epochs", self.epochs, int), pick("batch_size", self.batch_size, int),
                           self.seed if seed is None else seed, pick("patience", self.patience, int))

    def loss(self, member: str) -> LossKind:
        value = self._member_value(member, "loss")
        return LossKind.parse(value or DEFAULT_LOSSES[member])

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "member_overrides":
                continue
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        for member in sorted(self.member_overrides):
            for key in sorted(self.member_overrides[member]):
                lines.append(f"{member.lower()}.{key} = {self.member_overrides[member][key]}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def with_updates(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)


_MEMBER_PREFIX = {m.lower(): m for m in MEMBER_IDS}


def parse_config(text: str) -> PipelineConfig:
    scalar = {f.name: f.type for f in fields(PipelineConfig) if f.name != "member_overrides"}
    defaults = PipelineConfig()
    values: dict = {}
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = re.split(r"\s#", raw, maxsplit=1)[0].strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        prefix, dot, sub = key.partition(".")
        if dot:
            if prefix.lower() not in _MEMBER_PREFIX or sub not in TRAIN_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            overrides.setdefault(_MEMBER_PREFIX[prefix.lower()], {})[sub] = value
            continue
        if key not in scalar:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cast = type(getattr(defaults, key))
        try:
            values[key] = cast(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return PipelineConfig(**values, member_overrides=overrides)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))
