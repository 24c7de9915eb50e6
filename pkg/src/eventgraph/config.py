"""Engine configuration: every graph-building hyperparameter, endpoint
definitions and seeds.

Config files are YAML. A provided file must be complete (every threshold
key present) and must not contain unknown threshold keys, so runs stay
reproducible; omitting the file entirely uses the built-in defaults,
which are also checked in as assets/defaults.yaml.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple, Union

import yaml

from .errors import ConfigError
from .refine import EndpointConfig


@dataclass(frozen=True)
class Thresholds:
    """Graph-construction hyperparameters. docs/configuration.md maps
    each key to the corresponding engine rule."""

    action_confidence_min: float = 0.75
    actions_per_frame_top_k: int = 2
    vote_window_halfwidth: int = 5
    vote_min_count: int = 5
    bridge_max_gap_frames: int = 10
    bridge_iou_min: float = 0.6
    reid_similarity_threshold: float = 0.3
    hue_bins: int = 20
    saturation_bins: int = 10
    value_bins: int = 5
    representative_std_factor: float = 1.5
    box_enlarge_fraction: float = 0.10
    object_iou_min: float = 0.1
    depth_max_relative: float = 0.25
    object_presence_min_fraction: float = 0.10
    event_unify_max_gap_fraction: float = 0.10
    spatial_ratio_threshold: float = 0.5
    spatial_frame_fraction: float = 0.75
    same_time_tolerance_fraction: float = 0.05
    next_max_gap_fraction: float = 0.10

    def __post_init__(self):
        ranges = {
            "action_confidence_min": (0.0, 1.0),
            "bridge_iou_min": (0.0, 1.0),
            "reid_similarity_threshold": (-1.0, 1.0),
            "box_enlarge_fraction": (0.0, 10.0),
            "object_iou_min": (0.0, 1.0),
            "depth_max_relative": (0.0, 100.0),
            "object_presence_min_fraction": (0.0, 1.0),
            "event_unify_max_gap_fraction": (0.0, 1.0),
            "spatial_frame_fraction": (0.0, 1.0),
            "same_time_tolerance_fraction": (0.0, 1.0),
            "next_max_gap_fraction": (0.0, 1.0),
        }
        for key, (lo, hi) in ranges.items():
            value = getattr(self, key)
            if not (lo <= value <= hi):
                raise ConfigError(key, f"value {value} outside [{lo}, {hi}]")
        for key in ("actions_per_frame_top_k", "vote_window_halfwidth",
                    "vote_min_count", "bridge_max_gap_frames",
                    "hue_bins", "saturation_bins", "value_bins"):
            value = getattr(self, key)
            if int(value) != value or value <= 0:
                raise ConfigError(key, f"value {value} must be a positive integer")
        if self.spatial_ratio_threshold <= 0:
            raise ConfigError("spatial_ratio_threshold", "must be positive")

    @property
    def bins(self) -> Tuple[int, int, int]:
        return (self.hue_bins, self.saturation_bins, self.value_bins)


@dataclass(frozen=True)
class Seeds:
    shuffle: int = 17
    fewshot: int = 17
    judge: int = 17


@dataclass(frozen=True)
class EngineConfig:
    thresholds: Thresholds = field(default_factory=Thresholds)
    seeds: Seeds = field(default_factory=Seeds)
    refine_endpoint: Optional[EndpointConfig] = None
    judge_endpoints: Tuple[EndpointConfig, ...] = ()
    image_width: Optional[float] = None
    image_height: Optional[float] = None

    @property
    def image_size(self) -> Optional[Tuple[float, float]]:
        if self.image_width is None or self.image_height is None:
            return None
        return (self.image_width, self.image_height)


def _endpoint_from_dict(raw: dict, context: str) -> EndpointConfig:
    required = {"base_url", "model_name"}
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"{context}.{sorted(missing)[0]}", "missing")
    return EndpointConfig(
        base_url=str(raw["base_url"]),
        model_name=str(raw["model_name"]),
        auth_token_env=raw.get("auth_token_env"),
        timeout_seconds=float(raw.get("timeout_seconds", 30.0)),
        max_retries=int(raw.get("max_retries", 2)),
        response_text_path=str(raw.get("response_text_path",
                                       "choices.0.message.content")),
    )


def config_from_dict(raw: dict) -> EngineConfig:
    """Strict load: the thresholds section must list every key and
    nothing else; errors name the offending key."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    known_sections = {"thresholds", "seeds", "refine_endpoint",
                      "judge_endpoints", "image_width", "image_height"}
    for key in raw:
        if key not in known_sections:
            raise ConfigError(key, "unknown section")

    threshold_keys = {f.name for f in fields(Thresholds)}
    raw_thresholds = raw.get("thresholds")
    if raw_thresholds is None:
        raise ConfigError("thresholds", "missing")
    unknown = set(raw_thresholds) - threshold_keys
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown threshold key")
    missing = threshold_keys - set(raw_thresholds)
    if missing:
        raise ConfigError(sorted(missing)[0], "missing")
    thresholds = Thresholds(**raw_thresholds)

    seeds = Seeds(**raw.get("seeds", {}))
    refine_ep = None
    if raw.get("refine_endpoint"):
        refine_ep = _endpoint_from_dict(raw["refine_endpoint"], "refine_endpoint")
    judges = tuple(
        _endpoint_from_dict(j, f"judge_endpoints[{i}]")
        for i, j in enumerate(raw.get("judge_endpoints", []))
    )
    return EngineConfig(
        thresholds=thresholds,
        seeds=seeds,
        refine_endpoint=refine_ep,
        judge_endpoints=judges,
        image_width=raw.get("image_width"),
        image_height=raw.get("image_height"),
    )


def config_to_dict(config: EngineConfig) -> dict:
    out: dict = {
        "thresholds": asdict(config.thresholds),
        "seeds": asdict(config.seeds),
    }
    if config.refine_endpoint is not None:
        out["refine_endpoint"] = asdict(config.refine_endpoint)
    if config.judge_endpoints:
        out["judge_endpoints"] = [asdict(j) for j in config.judge_endpoints]
    if config.image_width is not None:
        out["image_width"] = config.image_width
    if config.image_height is not None:
        out["image_height"] = config.image_height
    return out


def load_config(path: Union[str, Path, None]) -> EngineConfig:
    if path is None:
        return EngineConfig()
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return config_from_dict(raw or {})


def default_profile_text() -> str:
    return resources.files("eventgraph.assets").joinpath(
        "defaults.yaml").read_text(encoding="utf-8")
