"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored, list values are comma separated
and unknown keys are rejected. Per-level keys use a ``layerN.`` prefix
(level 1 is the lowest) and schedule phases use ``schedule.phaseN``::

    seed = 0
    frame_height = 28
    frame_width = 28
    levels = 2
    layer1.field_height = 14
    layer1.field_width = 14
    layer1.stride = 14
    layer1.theta_new = 0.6
    layer2.theta_new = 0.6
    schedule.phase0 = 0, 1, 2, 3, 4
    schedule.phase1 = 5, 6, 7, 8, 9
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace

from .errors import GeometryError, ParseError, ValidationError
from .hierarchy import Hierarchy
from .unit import UnitConfig


@dataclass(frozen=True)
class LevelConfig:
    field_height: int | None = None
    field_width: int | None = None
    stride: int | None = None
    fields_per_unit: int | None = None
    capacity: int = 64
    theta_new: float = 1.0
    theta_merge: float = 0.25
    alpha_floor: float = 0.01

    def unit_config(self):
        return UnitConfig(self.capacity, self.theta_new, self.theta_merge, self.alpha_floor)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    settle_iterations: int = 3
    blend_lambda: float = 0.5
    frame_height: int = 28
    frame_width: int = 28
    levels: tuple = (LevelConfig(),)
    data_source: str = "synth"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    synth_kind: str = "prototypes"
    synth_classes: int = 10
    synth_sigma: float = 0.05
    synth_per_class: int = 300
    synth_min_separation: float = 0.0
    synth_detail_size: int = 1
    synth_low: float = 0.0
    phases: tuple = ()
    per_phase_count: int = 1000
    probes_per_class: int = 5
    test_per_class: int = 20
    test_corruption: float = 0.0
    base_dir: str = field(default=".", compare=False)

    def phase_label_sets(self, all_labels):
        if self.phases:
            return [tuple(p) for p in self.phases]
        return [tuple(sorted(int(v) for v in all_labels))]

    def resolve(self, path):
        if path is None or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def build_hierarchy(self):
        l1 = self.levels[0]
        fh = l1.field_height or self.frame_height
        fw = l1.field_width or self.frame_width
        stride = l1.stride or fh
        return Hierarchy.build(
            self.frame_height,
            self.frame_width,
            fh,
            fw,
            stride,
            [lv.unit_config() for lv in self.levels],
            fields_per_unit=[lv.fields_per_unit for lv in self.levels[1:]],
            settle_iterations=self.settle_iterations,
            blend_lambda=self.blend_lambda,
        )

    def validate(self):
        """Check every construction invariant up front; returns ``self``."""
        for i, lv in enumerate(self.levels, 1):
            try:
                lv.unit_config()
            except ValidationError as exc:
                raise ValidationError(f"layer{i}: {exc}") from None
        try:
            self.build_hierarchy()
        except (GeometryError, ValidationError) as exc:
            raise ValidationError(f"geometry: {exc}") from None
        if self.data_source not in ("synth", "idx"):
            raise ValidationError(f"data.source must be 'synth' or 'idx', got {self.data_source!r}")
        if self.data_source == "idx" and not self.train_images:
            raise ValidationError("data.source = idx requires data.train_images")
        if self.synth_kind not in ("prototypes", "composites"):
            raise ValidationError(f"synth.kind must be 'prototypes' or 'composites', got {self.synth_kind!r}")
        if self.synth_classes < 1 or self.synth_per_class < 1:
            raise ValidationError("synth.classes and synth.per_class must be positive")
        if self.synth_sigma < 0:
            raise ValidationError("synth.sigma must be non-negative")
        if not 0.0 <= self.synth_low < 1.0:
            raise ValidationError("synth.low must lie in [0, 1)")
        if self.per_phase_count < 1:
            raise ValidationError("schedule.per_phase_count must be positive")
        if self.probes_per_class < 1:
            raise ValidationError("eval.probes_per_class must be at least 1")
        if self.test_per_class < 1:
            raise ValidationError("eval.test_per_class must be at least 1")
        if not 0.0 <= self.test_corruption <= 1.0:
            raise ValidationError("eval.corruption must lie in [0, 1]")
        for k, phase in enumerate(self.phases):
            if not phase:
                raise ValidationError(f"schedule.phase{k} is empty")
            if self.data_source == "synth" and max(phase) >= self.synth_classes:
                raise ValidationError(f"schedule.phase{k} names a label >= synth.classes")
        return self


# key -> (attribute, parser)
_GLOBAL_KEYS = {
    "seed": ("seed", int),
    "settle_iterations": ("settle_iterations", int),
    "blend_lambda": ("blend_lambda", float),
    "frame_height": ("frame_height", int),
    "frame_width": ("frame_width", int),
    "data.source": ("data_source", str),
    "data.train_images": ("train_images", str),
    "data.train_labels": ("train_labels", str),
    "data.test_images": ("test_images", str),
    "data.test_labels": ("test_labels", str),
    "synth.kind": ("synth_kind", str),
    "synth.classes": ("synth_classes", int),
    "synth.sigma": ("synth_sigma", float),
    "synth.per_class": ("synth_per_class", int),
    "synth.min_separation": ("synth_min_separation", float),
    "synth.detail_size": ("synth_detail_size", int),
    "synth.low": ("synth_low", float),
    "schedule.per_phase_count": ("per_phase_count", int),
    "eval.probes_per_class": ("probes_per_class", int),
    "eval.test_per_class": ("test_per_class", int),
    "eval.corruption": ("test_corruption", float),
}
_LEVEL_PARSERS = {
    "field_height": int,
    "field_width": int,
    "stride": int,
    "fields_per_unit": int,
    "capacity": int,
    "theta_new": float,
    "theta_merge": float,
    "alpha_floor": float,
}
_LAYER_RE = re.compile(r"^layer([1-9][0-9]*)\.([a-z_]+)$")
_PHASE_RE = re.compile(r"^schedule\.phase(0|[1-9][0-9]*)$")


def _parse_scalar(parser, raw, lineno, key):
    try:
        if parser is int:
            return int(raw, 10)
        return parser(raw)
    except ValueError:
        raise ParseError(f"bad value {raw!r} for {key}", lineno) from None


def parse_config(text, base_dir="."):
    """Parse configuration text into a validated :class:`RunConfig`."""
    seen = {}
    values = {}
    level_values = {}
    phases = {}
    n_levels = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("missing key", lineno)
        if key in seen:
            raise ParseError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        if key == "levels":
            n_levels = _parse_scalar(int, raw, lineno, key)
            if n_levels < 1:
                raise ParseError("levels must be at least 1", lineno)
        elif key in _GLOBAL_KEYS:
            attr, parser = _GLOBAL_KEYS[key]
            values[attr] = _parse_scalar(parser, raw, lineno, key)
        elif m := _LAYER_RE.match(key):
            level, name = int(m.group(1)), m.group(2)
            if name not in _LEVEL_PARSERS:
                raise ParseError(f"unknown key {key!r}", lineno)
            if level == 1 and name == "fields_per_unit":
                raise ParseError("layer1 has no fields_per_unit", lineno)
            if level > 1 and name in ("field_height", "field_width", "stride"):
                raise ParseError(f"{name} is only configurable on layer1", lineno)
            level_values.setdefault(level, {})[name] = (_parse_scalar(_LEVEL_PARSERS[name], raw, lineno, key), lineno)
        elif m := _PHASE_RE.match(key):
            try:
                labels = tuple(int(v, 10) for v in raw.split(",") if v.strip())
            except ValueError:
                raise ParseError(f"bad label list {raw!r}", lineno) from None
            if not labels or min(labels) < 0:
                raise ParseError(f"{key} needs non-negative labels", lineno)
            phases[int(m.group(1))] = tuple(sorted(set(labels)))
        else:
            raise ParseError(f"unknown key {key!r}", lineno)

    top = max(level_values, default=1)
    if n_levels is None:
        n_levels = top
    elif top > n_levels:
        raise ParseError(f"layer{top} given but levels = {n_levels}", level_values[top][next(iter(level_values[top]))][1])
    levels = tuple(
        LevelConfig(**{name: v for name, (v, _) in level_values.get(i, {}).items()}) for i in range(1, n_levels + 1)
    )
    if phases and sorted(phases) != list(range(len(phases))):
        raise ValidationError("schedule phases must be numbered contiguously from phase0")
    cfg = RunConfig(levels=levels, phases=tuple(phases[k] for k in sorted(phases)), base_dir=base_dir, **values)
    return cfg.validate()


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def emit_config(cfg):
    """Canonical text form of ``cfg``; every set key is written, defaults included."""
    lines = [f"levels = {len(cfg.levels)}"]
    for key, (attr, _) in _GLOBAL_KEYS.items():
        v = getattr(cfg, attr)
        if v is not None:
            lines.append(f"{key} = {_fmt(v)}")
    for i, lv in enumerate(cfg.levels, 1):
        for name in _LEVEL_PARSERS:
            v = getattr(lv, name)
            if v is not None:
                lines.append(f"layer{i}.{name} = {_fmt(v)}")
    for k, phase in enumerate(cfg.phases):
        lines.append(f"schedule.phase{k} = {', '.join(str(v) for v in phase)}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def with_overrides(cfg, **changes):
    return replace(cfg, **changes).validate()
