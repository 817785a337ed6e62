"""Run configuration: a flat ``section.key = value`` text document.

Lines starting with ``#`` are comments. Precedence when resolving a value:
command-line flag > environment (seed only) > config file > default.
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field

SEED_ENV = "ANTICIPATOR_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class PathsSection:
    data: str = "data.csv"
    checkpoint: str = "model.ckpt"
    loss_trace: str = ""
    forest: str = "forest.bin"
    mask: str = "features.mask"
    results: str = "results.csv"
    report: str = "report.txt"
    special_dates: str = ""


@dataclass
class WindowSection:
    context_len: int = 24
    forecast_len: int = 4
    stride: int = 1
    detector_stride: int = 1


@dataclass
class SplitSection:
    train: float = 0.6
    val: float = 0.1
    test: float = 0.3


@dataclass
class DiffusionSection:
    steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.1
    literal_variance: bool = False
    hidden_size: int = 64
    rnn_layers: int = 2
    residual_layers: int = 8
    residual_channels: int = 64
    kernel_size: int = 3
    dilation_cycle: int = 4
    step_embed_dim: int = 32
    learning_rate: float = 5e-4
    batch_size: int = 256
    epochs: int = 50
    batches_per_epoch: int = 100
    patience: int = 5
    num_samples: int = 16
    detector_num_samples: int = 16
    aggregation: str = "mean"


@dataclass
class FeaturesSection:
    acf_lags: int = 5
    fourier_k: int = 3
    c3_lags: str = "1,2,3"
    tlcc_max_lag: int = 3
    mi_bins: int = 4
    rolling_sub_len: int = 6
    z_threshold: float = 3.5
    io_aspect: str = "io"
    aspects: str = ""


@dataclass
class SelectionSection:
    method: str = "redundancy"
    threshold: float = 0.95
    coverage: float = 0.95


@dataclass
class ForestSection:
    psi: int = 256
    gamma: int = 100
    isolation_threshold: float = 0.5
    threshold: float = 0.5
    incremental_keep: str = "normal"


@dataclass
class SynthSection:
    m: int = 2
    length: int = 2000
    period: int = 24
    noise: float = 0.1
    amplitude: float = 1.0
    interval: int = 3600
    anomaly_types: str = "spike,level_shift,dropout_to_zero"
    anomaly_ratio: float = 0.05
    span_min: int = 3
    span_max: int = 12
    magnitude: float = 4.0
    region_start: float = 0.0
    region_end: float = 1.0


@dataclass
class RunConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    window: WindowSection = field(default_factory=WindowSection)
    split: SplitSection = field(default_factory=SplitSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    selection: SelectionSection = field(default_factory=SelectionSection)
    forest: ForestSection = field(default_factory=ForestSection)
    synth: SynthSection = field(default_factory=SynthSection)
    seed: int = 0
    jobs: int = 1

    def set(self, key: str, raw: str) -> None:
        parts = key.strip().split(".")
        if len(parts) == 1:
            target, name = self, parts[0]
        elif len(parts) == 2 and hasattr(self, parts[0]) and dataclasses.is_dataclass(getattr(self, parts[0])):
            target, name = getattr(self, parts[0]), parts[1]
        else:
            raise ConfigError(f"unknown config key {key!r}")
        hints = typing.get_type_hints(type(target))
        if name not in hints or dataclasses.is_dataclass(getattr(target, name, None)):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(target, name, _coerce(hints[name], raw.strip(), key))

    def validate(self) -> None:
        w, d, f = self.window, self.diffusion, self.forest
        checks = [
            (w.context_len >= 2, "window.context_len must be >= 2"),
            (1 <= w.forecast_len < w.context_len, "window.forecast_len must be in [1, context_len)"),
            (w.stride >= 1 and w.detector_stride >= 1, "window strides must be >= 1"),
            (d.steps >= 1, "diffusion.steps must be >= 1"),
            (0 < d.beta_start <= d.beta_end < 1, "need 0 < diffusion.beta_start <= beta_end < 1"),
            (d.learning_rate > 0, "diffusion.learning_rate must be positive"),
            (min(d.batch_size, d.epochs, d.batches_per_epoch, d.patience) >= 1,
             "diffusion batch/epoch settings must be >= 1"),
            (d.num_samples >= 1 and d.detector_num_samples >= 1, "num_samples must be >= 1"),
            (d.aggregation in ("mean", "max", "min"), "diffusion.aggregation must be mean/max/min"),
            (f.psi >= 2 and f.gamma >= 1, "forest.psi must be >= 2 and forest.gamma >= 1"),
            (0 <= f.threshold <= 1 and 0 <= f.isolation_threshold <= 1, "forest thresholds must be in [0, 1]"),
            (f.incremental_keep in ("isolated", "normal"), "forest.incremental_keep must be isolated/normal"),
            (self.selection.method in ("redundancy", "importance"), "selection.method must be redundancy/importance"),
            (self.jobs >= 1, "jobs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        s = self.split
        if min(s.train, s.val, s.test) <= 0 or abs(s.train + s.val + s.test - 1) > 1e-9:
            raise ConfigError("split fractions must be positive and sum to 1")

    def items(self):
        """Flat (key, value) pairs in declaration order."""
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                for g in dataclasses.fields(v):
                    yield f"{f.name}.{g.name}", getattr(v, g.name)
            else:
                yield f.name, v

    def to_text(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.items())


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(tp, raw: str, key: str):
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def parse_config_text(text: str, config: RunConfig | None = None) -> RunConfig:
    config = config or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        config.set(key, value)
    return config


def load_config(path: str | os.PathLike | None = None, overrides: typing.Iterable[str] = (),
                seed: int | None = None, jobs: int | None = None) -> RunConfig:
    config = RunConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            parse_config_text(fh.read(), config)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        config.set("seed", env_seed)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        config.set(k, v)
    if seed is not None:
        config.seed = seed
    if jobs is not None:
        config.jobs = jobs
    config.validate()
    return config
