# Pipeline configuration: one JSON file with a section per stage, loaded into
# dataclasses and validated. res/default_config.json is the reference file.
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Union, get_args, get_origin

from voxrefine.errors import ConfigError
from voxrefine.generation.classes import RES_DIR
from voxrefine.refine.hvfr import DEFAULT_TAU1, DEFAULT_TAU2
from voxrefine.voxel.grid import PRESETS, SCALES, GridGeometry

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "VOXREFINE_DATA_ROOT"
DEFAULT_CONFIG = RES_DIR / "default_config.json"


@dataclass
class GeometryConfig:
    preset: str = "nuscenes-occ"  # a preset name or "custom"
    origin: Optional[List[float]] = None
    voxel_size: Optional[float] = None
    dims: Optional[List[int]] = None

    def validate(self) -> None:
        if self.preset == "custom":
            if self.origin is None or self.voxel_size is None or self.dims is None:
                raise ConfigError("custom geometry needs origin, voxel_size and dims")
            if len(self.origin) != 3 or len(self.dims) != 3 or min(self.dims) <= 0 \
                    or self.voxel_size <= 0:
                raise ConfigError("custom geometry: origin/dims are triples, sizes positive")
        elif self.preset not in PRESETS:
            raise ConfigError(f"unknown geometry preset '{self.preset}'")

    def build(self) -> GridGeometry:
        if self.preset == "custom":
            return GridGeometry(tuple(self.origin), float(self.voxel_size), tuple(self.dims))
        return GridGeometry.from_preset(self.preset)


@dataclass
class ChannelsConfig:
    lidar: Dict[int, int] = field(default_factory=lambda: {1: 16, 2: 16, 4: 32, 8: 32, 16: 32})
    image: int = 16

    def __post_init__(self) -> None:
        try:
            self.lidar = {int(k): int(v) for k, v in self.lidar.items()}
        except (AttributeError, ValueError):
            raise ConfigError("channels.lidar maps scale -> width")

    def validate(self) -> None:
        if sorted(self.lidar) != list(SCALES):
            raise ConfigError(f"channels.lidar needs widths for scales {SCALES}")
        if min(self.lidar.values()) <= 0 or self.image <= 0:
            raise ConfigError("channel widths must be positive")


@dataclass
class LidarConfig:
    downsample: str = "conv"

    def validate(self) -> None:
        if self.downsample not in ("conv", "mean"):
            raise ConfigError(f"lidar.downsample is 'conv' or 'mean', got '{self.downsample}'")


@dataclass
class DensifyConfig:
    broadcast: bool = False

    def validate(self) -> None:
        pass


@dataclass
class AttentionConfig:
    n_ref: int = 4
    offset_scale: float = 2.0
    query_conditioned: bool = False
    query_std: float = 0.02
    residual: bool = True

    def validate(self) -> None:
        if self.n_ref <= 0:
            raise ConfigError("attention.n_ref must be positive")
        if self.query_std < 0 or self.offset_scale < 0:
            raise ConfigError("attention scales must be non-negative")


@dataclass
class RefineConfig:
    tau1: float = DEFAULT_TAU1
    tau2: float = DEFAULT_TAU2
    oracle_scorer: bool = False

    def validate(self) -> None:
        if self.tau1 < 0 or self.tau2 < 0:
            raise ConfigError(f"thresholds must be non-negative, got {self.tau1}, {self.tau2}")
        if self.tau2 < self.tau1:
            logger.warning("tau2 < tau1: the fine set is not contained in the semi-fine set")
        for name in ("tau1", "tau2"):
            if getattr(self, name) > 1:
                logger.warning("%s > 1 disables that refinement level", name)


@dataclass
class OcclusionConfig:
    camera_stride: int = 4
    margin: Optional[float] = None  # meters past each LiDAR point; None = grid diagonal
    head_hidden: int = 32

    def validate(self) -> None:
        if self.camera_stride <= 0 or self.head_hidden <= 0:
            raise ConfigError("occlusion.camera_stride and head_hidden must be positive")
        if self.margin is not None and self.margin < 0:
            raise ConfigError("occlusion.margin must be non-negative")


@dataclass
class DecoderConfig:
    hidden: List[int] = field(default_factory=lambda: [32, 32])

    def validate(self) -> None:
        if any(h <= 0 for h in self.hidden):
            raise ConfigError("decoder.hidden widths must be positive")


@dataclass
class LossesConfig:
    ce: float = 1.0
    lovasz: float = 1.0
    geo_scal: float = 1.0
    sem_scal: float = 1.0
    rie_bce: float = 1.0
    occlusion_ce: float = 1.0

    def validate(self) -> None:
        if any(getattr(self, f.name) < 0 for f in fields(self)):
            raise ConfigError("loss weights must be non-negative")


@dataclass
class SeedsConfig:
    root: int = 0
    queries: Optional[int] = 0  # None gives zero base queries

    def validate(self) -> None:
        pass


@dataclass
class PathsConfig:
    dataset_root: Optional[str] = None
    output: str = "out"

    def validate(self) -> None:
        pass


def _type_ok(value, tp) -> bool:
    # JSON value against a section field annotation; ints pass as floats,
    # bools pass as neither
    origin = get_origin(tp)
    if origin is Union:
        return any(_type_ok(value, t) for t in get_args(tp))
    if tp is type(None):
        return value is None
    if origin is list:
        return isinstance(value, list) and all(_type_ok(v, get_args(tp)[0]) for v in value)
    if origin is dict:
        return isinstance(value, dict)
    if isinstance(value, bool):
        return tp is bool
    if tp is float:
        return isinstance(value, (int, float))
    return isinstance(value, tp)


def _type_name(tp) -> str:
    return getattr(tp, "__name__", None) or str(tp).replace("typing.", "")


_SECTIONS = {
    "geometry": GeometryConfig,
    "channels": ChannelsConfig,
    "lidar": LidarConfig,
    "densify": DensifyConfig,
    "attention": AttentionConfig,
    "refine": RefineConfig,
    "occlusion": OcclusionConfig,
    "decoder": DecoderConfig,
    "losses": LossesConfig,
    "seeds": SeedsConfig,
    "paths": PathsConfig,
}


@dataclass
class PipelineConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    channels: ChannelsConfig = field(default_factory=ChannelsConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    densify: DensifyConfig = field(default_factory=DensifyConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    losses: LossesConfig = field(default_factory=LossesConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "PipelineConfig":
        for name in _SECTIONS:
            getattr(self, name).validate()
        if self.lidar.downsample == "mean" and len(set(self.channels.lidar.values())) != 1:
            raise ConfigError("mean-pool downsampling needs one LiDAR width at every scale")
        return self

    @classmethod
    def from_dict(cls, d: Dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        sections = {}
        for name, section_cls in _SECTIONS.items():
            values = d.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"section '{name}' must be an object")
            known = {f.name for f in fields(section_cls)}
            bad = set(values) - known
            if bad:
                raise ConfigError(f"unknown keys in '{name}': {sorted(bad)}")
            types = {f.name: f.type for f in fields(section_cls)}
            for key, value in values.items():
                if not _type_ok(value, types[key]):
                    raise ConfigError(f"{name}.{key}: expected {_type_name(types[key])}, "
                                      f"got {value!r}")
            try:
                sections[name] = section_cls(**values)
            except TypeError as e:
                raise ConfigError(f"section '{name}': {e}")
        return cls(**sections).validate()

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["channels"]["lidar"] = {str(k): v for k, v in self.channels.lidar.items()}
        return d

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path=DEFAULT_CONFIG) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as f:
                d = json.load(f)
        except ValueError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})")
        return cls.from_dict(d)

    def dataset_root(self, name: Optional[str] = None) -> Path:
        # Absolute --dataset paths win; relative names resolve under
        # $VOXREFINE_DATA_ROOT, then paths.dataset_root
        if name and Path(name).is_absolute():
            return Path(name)
        base = os.environ.get(DATA_ROOT_ENV) or self.paths.dataset_root
        if base is None:
            return Path(name or ".")
        return Path(base) / name if name else Path(base)
