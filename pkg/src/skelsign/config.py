"""INI run configuration.

Sections and their keys (defaults in parentheses):

[graph]    partition (spatial)
[streams]  mode (2d), frames (150), augment (true), mirror_prob (0.5),
           rotation_range (13), scale_range (0.1), jitter_std (0.01),
           shift_range (0.1), temporal_sampling (random_window)
[sl_gcn]   every SLGCNConfig field except partition; lists comma separated
[sstcn]    every SSTCNConfig field
[train]    every TrainConfig field; target_top1 accepts "none"
[fusion]   weights (1,0.9,0.4,0.4), grid (0.0:2.0:0.1), filters (64),
           depth (2), weight_mode (sample), epochs (100), lr (0.05),
           momentum (0.9), weight_decay (1e-4), batch_size (64),
           label_smoothing (0.1)

Unknown sections or keys raise ConfigError.
"""
import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .slgcn import SLGCNConfig
from .sstcn import SSTCNConfig
from .streams import AugmentationConfig
from .training import TrainConfig


@dataclass
class GraphSection:
    partition: str = "spatial"

    def __post_init__(self):
        if self.partition not in ("uniform", "spatial"):
            raise ConfigError(f"unknown partition {self.partition!r}")


@dataclass
class StreamsSection:
    mode: str = "2d"
    frames: int = 150
    augment: bool = True
    mirror_prob: float = 0.5
    rotation_range: float = 13.0
    scale_range: float = 0.1
    jitter_std: float = 0.01
    shift_range: float = 0.1
    temporal_sampling: str = "random_window"

    def __post_init__(self):
        if self.mode not in ("2d", "3d"):
            raise ConfigError(f"mode must be 2d or 3d, got {self.mode!r}")
        if self.frames < 2:
            raise ConfigError("frames must be at least 2")

    def augmentation(self):
        if not self.augment:
            return AugmentationConfig.identity()
        names = [f.name for f in dataclasses.fields(AugmentationConfig)]
        return AugmentationConfig(**{n: getattr(self, n) for n in names})


@dataclass
class FusionSection:
    weights: str = "1,0.9,0.4,0.4"
    grid: str = "0.0:2.0:0.1"
    filters: int = 64
    depth: int = 2
    weight_mode: str = "sample"
    epochs: int = 100
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    label_smoothing: float = 0.1

    def weight_values(self):
        try:
            return [float(v) for v in self.weights.split(",")]
        except ValueError as e:
            raise ConfigError(f"bad fusion weights {self.weights!r}") from e


@dataclass
class RunConfig:
    graph: GraphSection = field(default_factory=GraphSection)
    streams: StreamsSection = field(default_factory=StreamsSection)
    sl_gcn: SLGCNConfig = field(default_factory=SLGCNConfig)
    sstcn: SSTCNConfig = field(default_factory=SSTCNConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fusion: FusionSection = field(default_factory=FusionSection)

    def slgcn_config(self, in_channels=None, num_classes=None):
        kw = dataclasses.asdict(self.sl_gcn)
        kw["partition"] = self.graph.partition
        if in_channels is not None:
            kw["in_channels"] = in_channels
        if num_classes is not None:
            kw["num_classes"] = num_classes
        return SLGCNConfig(**kw)

    def to_ini(self):
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            obj = getattr(self, section)
            for f in _keys(section):
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()


SECTIONS = ("graph", "streams", "sl_gcn", "sstcn", "train", "fusion")
_TYPES = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}


def _keys(section):
    fields = dataclasses.fields(_TYPES[section]())
    return [f for f in fields if not (section == "sl_gcn" and f.name == "partition")]


def _format(value):
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse(text, default, key):
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, list):
            return [int(v) for v in text.split(",") if v.strip()]
        if default is None:
            return None if text.lower() == "none" else float(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as e:
        raise ConfigError(f"bad value {text!r} for {key}") from e
    return text


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from e
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    built = {}
    for section in SECTIONS:
        defaults = _TYPES[section]()
        allowed = {f.name for f in _keys(section)}
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[key] = _parse(raw, getattr(defaults, key), f"{section}.{key}")
        try:
            built[section] = dataclasses.replace(defaults, **values)
        except (ValueError, TypeError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"[{section}]: {e}") from e
    return RunConfig(**built)


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
