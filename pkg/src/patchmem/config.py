"""Engine configuration: every tunable constant in one validated dataclass.

The config round-trips through an INI-style text file (sections of
key=value pairs) and hashes to a short digest that output headers carry, so
score maps are traceable to the exact settings that produced them.
"""

import configparser
import hashlib
import io
import json
from dataclasses import dataclass, field, replace

from .errors import InvalidConfigError


@dataclass(frozen=True)
class AugmentationSpec:
    """Reference-image augmentations applied while building memory banks."""
    h_flip: bool = True
    v_flip: bool = True
    rotations: tuple = (-10.0, 10.0)
    translations: tuple = ((12, 0), (-12, 0), (0, 12), (0, -12))
    seed: int = 0

    def variant_count(self) -> int:
        return (1 + int(self.h_flip) + int(self.v_flip)
                + len(self.rotations) + len(self.translations))

    def validate(self, image_side: int):
        for deg in self.rotations:
            if abs(deg) > 15.0:
                raise InvalidConfigError(f"rotation {deg} exceeds 15 degrees")
        limit = 0.10 * image_side
        for dx, dy in self.translations:
            if abs(dx) > limit or abs(dy) > limit:
                raise InvalidConfigError(
                    f"translation ({dx}, {dy}) exceeds 10% of side {image_side}")

    @classmethod
    def none(cls) -> "AugmentationSpec":
        return cls(h_flip=False, v_flip=False, rotations=(), translations=())

    @classmethod
    def default_for(cls, side: int) -> "AugmentationSpec":
        """Standard family with translations at 5% of the canonical side."""
        t = max(1, round(0.05 * side))
        return cls(translations=((t, 0), (-t, 0), (0, t), (0, -t)))


@dataclass(frozen=True)
class EngineConfig:
    canonical_side: int = 240
    patch_size: int = 16
    stride_small: int = 1
    stride_middle: int = 1
    temperature: float = 0.01
    text_free: bool = False
    include_full_image_windows: bool = False

    zero_shot_weights: tuple = (1.8, 0.2)
    global_weights: tuple = (1.0, 1.0, 1.0)
    individual_weights: tuple = (1.5, 0.5, 6.0)
    final_weights: tuple = (0.55, 0.45)

    min_object_area: float = 0.001
    crop_margin: float = 0.05
    dedupe_iou: float = 0.9

    capacity_cap: int = 100_000
    augment: AugmentationSpec = field(default_factory=AugmentationSpec)

    seg_thresholds: int = 2000
    exact_seg_sweep: bool = False

    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.canonical_side < 1 or self.canonical_side % self.patch_size:
            raise InvalidConfigError(
                f"canonical side {self.canonical_side} not divisible by "
                f"patch size {self.patch_size}")
        if self.stride_small < 1 or self.stride_middle < 1:
            raise InvalidConfigError("strides must be >= 1")
        if self.temperature <= 0:
            raise InvalidConfigError(f"temperature must be > 0, got {self.temperature}")
        for name in ("zero_shot_weights", "global_weights",
                     "individual_weights", "final_weights"):
            if any(w < 0 for w in getattr(self, name)):
                raise InvalidConfigError(f"{name} must be nonnegative")
        if len(self.zero_shot_weights) != 2 or len(self.final_weights) != 2:
            raise InvalidConfigError("two-scale weight tuples need 2 entries")
        if len(self.global_weights) != 3 or len(self.individual_weights) != 3:
            raise InvalidConfigError("three-scale weight tuples need 3 entries")
        if self.capacity_cap < 1:
            raise InvalidConfigError("capacity cap must be >= 1")
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")
        if self.seg_thresholds < 2:
            raise InvalidConfigError("seg_thresholds must be >= 2")
        if not 0.0 <= self.min_object_area < 1.0:
            raise InvalidConfigError("min_object_area must be in [0, 1)")
        self.augment.validate(self.canonical_side)

    @property
    def grid_side(self) -> int:
        return self.canonical_side // self.patch_size

    def without_augmentation(self) -> "EngineConfig":
        return replace(self, augment=AugmentationSpec.none())

    def to_dict(self) -> dict:
        aug = self.augment
        return {
            "image": {
                "canonical_side": self.canonical_side,
                "patch_size": self.patch_size,
            },
            "windows": {
                "stride_small": self.stride_small,
                "stride_middle": self.stride_middle,
                "include_full_image_windows": self.include_full_image_windows,
            },
            "scoring": {
                "temperature": self.temperature,
                "text_free": self.text_free,
                "zero_shot_weights": list(self.zero_shot_weights),
                "global_weights": list(self.global_weights),
                "individual_weights": list(self.individual_weights),
                "final_weights": list(self.final_weights),
            },
            "objects": {
                "min_object_area": self.min_object_area,
                "crop_margin": self.crop_margin,
                "dedupe_iou": self.dedupe_iou,
            },
            "memory": {
                "capacity_cap": self.capacity_cap,
            },
            "augment": {
                "h_flip": aug.h_flip,
                "v_flip": aug.v_flip,
                "rotations": list(aug.rotations),
                "translations": [list(t) for t in aug.translations],
                "seed": aug.seed,
            },
            "eval": {
                "seg_thresholds": self.seg_thresholds,
                "exact_seg_sweep": self.exact_seg_sweep,
            },
            "run": {
                "seed": self.seed,
                "workers": self.workers,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        def sec(name):
            return data.get(name, {})

        base = cls()
        side = int(sec("image").get("canonical_side", base.canonical_side))
        if "augment" in data:
            aug_d = sec("augment")
            scaled = AugmentationSpec.default_for(side)
            aug = AugmentationSpec(
                h_flip=bool(aug_d.get("h_flip", True)),
                v_flip=bool(aug_d.get("v_flip", True)),
                rotations=tuple(float(r) for r in _listify(
                    aug_d.get("rotations", (-10.0, 10.0)))),
                translations=tuple(_pairs(aug_d.get(
                    "translations", scaled.translations))),
                seed=int(aug_d.get("seed", 0)),
            )
        else:
            aug = AugmentationSpec.default_for(side)
        return cls(
            canonical_side=int(sec("image").get("canonical_side", base.canonical_side)),
            patch_size=int(sec("image").get("patch_size", base.patch_size)),
            stride_small=int(sec("windows").get("stride_small", base.stride_small)),
            stride_middle=int(sec("windows").get("stride_middle", base.stride_middle)),
            include_full_image_windows=bool(sec("windows").get(
                "include_full_image_windows", base.include_full_image_windows)),
            temperature=float(sec("scoring").get("temperature", base.temperature)),
            text_free=bool(sec("scoring").get("text_free", base.text_free)),
            zero_shot_weights=tuple(float(w) for w in _listify(sec("scoring").get(
                "zero_shot_weights", base.zero_shot_weights))),
            global_weights=tuple(float(w) for w in _listify(sec("scoring").get(
                "global_weights", base.global_weights))),
            individual_weights=tuple(float(w) for w in _listify(sec("scoring").get(
                "individual_weights", base.individual_weights))),
            final_weights=tuple(float(w) for w in _listify(sec("scoring").get(
                "final_weights", base.final_weights))),
            min_object_area=float(sec("objects").get(
                "min_object_area", base.min_object_area)),
            crop_margin=float(sec("objects").get("crop_margin", base.crop_margin)),
            dedupe_iou=float(sec("objects").get("dedupe_iou", base.dedupe_iou)),
            capacity_cap=int(sec("memory").get("capacity_cap", base.capacity_cap)),
            augment=aug,
            seg_thresholds=int(sec("eval").get("seg_thresholds", base.seg_thresholds)),
            exact_seg_sweep=bool(sec("eval").get(
                "exact_seg_sweep", base.exact_seg_sweep)),
            seed=int(sec("run").get("seed", base.seed)),
            workers=int(sec("run").get("workers", base.workers)),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section, entries in self.to_dict().items():
            parser[section] = {}
            for key, value in entries.items():
                parser[section][key] = _render_value(value)
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "EngineConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InvalidConfigError(f"unparseable config: {exc}") from exc
        data: dict = {}
        for section in parser.sections():
            data[section] = {k: _parse_value(v) for k, v in parser[section].items()}
        try:
            return cls.from_dict(data)
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"bad config value: {exc}") from exc


def _listify(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _pairs(value) -> list:
    lst = _listify(value)
    if lst and not isinstance(lst[0], (list, tuple)):
        lst = [lst]
    return [tuple(int(x) for x in p) for p in lst]


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return "; ".join(",".join(str(x) for x in item) for item in value)
        return ", ".join(str(x) for x in value)
    return str(value)


def _parse_value(text: str):
    s = text.strip()
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    if ";" in s:
        return [[_parse_scalar(x) for x in part.split(",")]
                for part in s.split(";") if part.strip()]
    if "," in s:
        return [_parse_scalar(x) for x in s.split(",") if x.strip()]
    if s == "":
        return []
    return _parse_scalar(s)


def _parse_scalar(text: str):
    s = text.strip()
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s
