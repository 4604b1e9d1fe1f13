"""YAML configuration loading: platform, design_space and search sections.

The unit-cost calibration table lives in its own data file (units in the
header); a packaged desk-calibration default is used when neither the
config nor the IMCSEARCH_UNIT_COSTS environment variable names one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .designspace import (
    ADCType,
    DesignSpace,
    HierarchyParams,
    LayerShape,
    PlatformParams,
    UnitCost,
    UnitCostTable,
    vgg16_space,
)
from .search import SearchConfig

#: Environment variable naming the default calibration file.
UNIT_COSTS_ENV = "IMCSEARCH_UNIT_COSTS"


class ConfigError(ValueError):
    """Configuration file is missing, unparsable or inconsistent."""


@dataclass(frozen=True)
class FixtureConfig:
    """Synthetic-data settings for HD scoring and phase 2."""

    kind: str = "patterns"  # blobs | patterns
    train_samples: int = 256
    eval_samples: int = 128
    adapt_fraction: float = 0.25
    adapt_batch_size: int = 32
    noise: float = 0.15
    train_epochs: int = 30
    train_lr: float = 0.05

    def __post_init__(self) -> None:
        if self.kind not in ("blobs", "patterns"):
            raise ConfigError(f"fixture.kind must be blobs|patterns, got {self.kind!r}")
        if not 0 < self.adapt_fraction <= 1:
            raise ConfigError("fixture.adapt_fraction must be in (0, 1]")


@dataclass
class AppConfig:
    platform: PlatformParams
    space: DesignSpace
    search: SearchConfig
    fixture: FixtureConfig = field(default_factory=FixtureConfig)


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def load_unit_costs(path: str | Path | None = None) -> UnitCostTable:
    """Load a calibration table; falls back to env var, then packaged default."""
    if path is None:
        path = os.environ.get(UNIT_COSTS_ENV)
    if path is None:
        ref = resources.files("imcsearch").joinpath("data/default_unit_costs.yaml")
        raw = yaml.safe_load(ref.read_text())
        source = "packaged default"
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"unit-cost file not found: {path}")
        with open(path) as f:
            raw = yaml.safe_load(f)
        source = str(path)
    try:
        components = {
            name: UnitCost(area=float(entry["area"]), energy=float(entry["energy"]),
                           latency=float(entry["latency"]))
            for name, entry in raw["components"].items()
        }
        return UnitCostTable(calibration_id=str(raw["calibration_id"]),
                             components=components)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid unit-cost table ({source}): {exc}") from exc


def _parse_platform(section: dict, base_dir: Path) -> PlatformParams:
    cost_path = section.get("unit_costs_file")
    if cost_path is not None:
        cost_path = base_dir / cost_path if not Path(cost_path).is_absolute() \
            else Path(cost_path)
    unit_costs = load_unit_costs(cost_path)
    hier_raw = section.get("hierarchy", {})
    try:
        hierarchy = HierarchyParams(**hier_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"platform.hierarchy: {exc}") from exc
    kwargs = {}
    for key, cast in (("xbar_size", int), ("xbars_per_tile", int),
                      ("device_bits", int), ("sigma_over_mu", float),
                      ("r_on", float), ("on_off_ratio", float),
                      ("weight_bits", int), ("weight_slice_bits", int),
                      ("input_slice_bits", int), ("clock_period", float)):
        if key in section:
            kwargs[key] = cast(section[key])
    try:
        return PlatformParams(unit_costs=unit_costs, hierarchy=hierarchy, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"platform: {exc}") from exc


def _parse_space(section: dict) -> DesignSpace:
    preset = section.get("preset")
    if preset is not None:
        if preset != "vgg16_cifar":
            raise ConfigError(f"design_space.preset: unknown preset {preset!r}")
        return vgg16_space(
            input_channels=int(section.get("input_channels", 3)),
            class_count=int(section.get("class_count", 10)))
    layers_raw = _require(section, "layers", "design_space")
    shapes = []
    cd_opts = []
    for i, entry in enumerate(layers_raw):
        ctx = f"design_space.layers[{i}]"
        try:
            if entry.get("is_fc", False):
                shapes.append(LayerShape.fc())
            else:
                h = int(_require(entry, "in_h", ctx))
                w = int(entry.get("in_w", h))
                shapes.append(LayerShape(kernel=int(entry.get("kernel", 3)),
                                         in_spatial=(h, w),
                                         stride=int(entry.get("stride", 1))))
            cd_opts.append(tuple(int(c) for c in _require(entry, "cd_options", ctx)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{ctx}: {exc}") from exc
    kwargs = {}
    if "cs_options" in section:
        kwargs["cs_options"] = tuple(int(v) for v in section["cs_options"])
    if "at_options" in section:
        try:
            kwargs["at_options"] = tuple(ADCType(v) for v in section["at_options"])
        except ValueError as exc:
            raise ConfigError(f"design_space.at_options: {exc}") from exc
    if "ap_options" in section:
        kwargs["ap_options"] = tuple(int(v) for v in section["ap_options"])
    if "ip_options" in section:
        kwargs["ip_options"] = tuple(int(v) for v in section["ip_options"])
    try:
        return DesignSpace(
            layer_shapes=tuple(shapes),
            cd_options_per_layer=tuple(cd_opts),
            input_channels=int(section.get("input_channels", 3)),
            class_count=int(section.get("class_count", 10)),
            **kwargs)
    except ValueError as exc:
        raise ConfigError(f"design_space: {exc}") from exc


def _parse_search(section: dict) -> SearchConfig:
    kwargs = {"area_constraint": float(_require(section, "area_constraint_mm2",
                                                "search"))}
    for key, name, cast in (("phase1_steps", "n1_steps", int),
                            ("phase2_steps", "n2_steps", int),
                            ("lambda1", "lambda1", float),
                            ("lambda2", "lambda2", float),
                            ("lr_phase1", "lr1", float),
                            ("lr_phase2", "lr2", float),
                            ("seed", "seed", int),
                            ("phase1_ap", "phase1_ap", int),
                            ("phase1_ip", "phase1_ip", int),
                            ("hd_batch_size", "hd_batch_size", int),
                            ("adapt_momentum", "adapt_momentum", float),
                            ("temperature", "temperature", float)):
        if key in section:
            kwargs[name] = cast(section[key])
    try:
        return SearchConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"search: {exc}") from exc


def _parse_fixture(section: dict) -> FixtureConfig:
    kwargs = {}
    for key, cast in (("kind", str), ("train_samples", int), ("eval_samples", int),
                      ("adapt_fraction", float), ("adapt_batch_size", int),
                      ("noise", float), ("train_epochs", int), ("train_lr", float)):
        if key in section:
            kwargs[key] = cast(section[key])
    try:
        return FixtureConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"fixture: {exc}") from exc


def load_config(path: str | Path) -> AppConfig:
    """Parse a run configuration file into validated parameter objects."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    platform = _parse_platform(raw.get("platform", {}), path.parent)
    space = _parse_space(_require(raw, "design_space", str(path)))
    search = _parse_search(_require(raw, "search", str(path)))
    fixture = _parse_fixture(raw.get("fixture", {}))
    if max(space.cs_options) > platform.xbar_size:
        raise ConfigError(
            f"design_space.cs_options: max cs {max(space.cs_options)} exceeds "
            f"platform.xbar_size {platform.xbar_size}")
    return AppConfig(platform=platform, space=space, search=search,
                     fixture=fixture)
