"""Run configuration: flat ``section.key`` values with range checking.

Config files are line-oriented ``section.key=value`` with ``#`` comments.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exceptions import ConfigError


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "on", "yes"):
        return True
    if low in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.split(",") if v.strip())


def _choice(*options):
    def parse(raw: str) -> str:
        v = raw.strip()
        if v not in options:
            raise ValueError(f"must be one of {options}, got {raw!r}")
        return v

    return parse


def _label_list(raw: str) -> tuple[tuple[int, int], ...]:
    """Parse e.g. ``4:1,5:3`` into label tuples; empty means default mix."""
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        t1, _, t2 = item.partition(":")
        out.append((int(t1), int(t2)))
    return tuple(out)


# key -> (parser, validator or None, default)
SCHEMA = {
    "preprocess.radius": (int, lambda v: v >= 1, 4),
    "preprocess.epsilon": (float, lambda v: v > 0, 0.1),
    "preprocess.delta": (float, lambda v: v > 1, 1.06),
    "lanemodel.roi_top_frac": (float, lambda v: 0 < v < 1, 0.60),
    "lanemodel.roi_halfwidth_top_frac": (float, lambda v: 0 < v < 0.5, 0.10),
    "lanemodel.roi_halfwidth_bottom_frac": (float, lambda v: 0 < v <= 0.5, 0.22),
    "lanemodel.area_min": (int, lambda v: v >= 1, 20),
    "lanemodel.area_max": (int, lambda v: v >= 1, 2000),
    "lanemodel.min_elongation": (float, lambda v: v >= 1, 3.0),
    "lanemodel.max_tilt_deg": (float, lambda v: 0 < v <= 90, 60.0),
    "lanemodel.use_ransac": (_bool, None, True),
    "lanemodel.ransac_threshold": (float, lambda v: v > 0, 2.0),
    "lanemodel.ransac_iterations": (int, lambda v: v >= 1, 100),
    "lanemodel.ransac_seed": (int, None, 0),
    "lanemodel.horizon_frac": (float, lambda v: 0 < v < 1, 0.58),
    "lanemodel.offsets_file": (str, None, ""),
    "features.band_halfwidth": (int, lambda v: v >= 1, 6),
    "features.step": (int, lambda v: v >= 1, 5),
    "classifier.C": (float, lambda v: v > 0, 1.0),
    "classifier.epochs": (int, lambda v: v >= 1, 30),
    "classifier.seed": (int, None, 0),
    "classifier.calibration_folds": (int, lambda v: v >= 2, 5),
    "classifier.trees": (int, lambda v: v >= 1, 100),
    "classifier.max_depth": (int, lambda v: v >= 1, 16),
    "classifier.min_leaf": (int, lambda v: v >= 1, 5),
    "classifier.mtry": (int, lambda v: v >= 1, 16),
    "smoothing.p": (int, lambda v: v >= 0, 15),
    "smoothing.rate": (float, lambda v: v > 0, 0.1),
    "smoothing.initial_value": (float, lambda v: v > 0, 1.0),
    "detection.stride": (int, lambda v: v >= 1, 8),
    "detection.sizes": (_int_list, lambda v: len(v) > 0 and all(s >= 1 for s in v), (24, 32, 48, 64, 96)),
    "detection.max_size": (int, lambda v: v >= 1, 96),
    "detection.t_lo": (float, lambda v: v > 0, 0.3),
    "detection.t_hi": (float, lambda v: v > 0, 1.1),
    "detection.score_threshold": (float, None, 0.056),
    "detection.nms_iou": (float, lambda v: 0 < v <= 1, 0.5),
    "detection.margin": (int, lambda v: v >= 1, 5),
    "detection.uniformity_penalty": (float, lambda v: v >= 0, 0.38),
    "pipeline.fallback_frames": (int, lambda v: v >= 0, 15),
    "pipeline.refine": (_bool, None, True),
    "pipeline.smooth": (_bool, None, True),
    "pipeline.refine_rho": (float, lambda v: 0 < v <= 1, 0.2),
    "pipeline.refine_order": (_choice("pre", "post"), None, "pre"),
    "synth.n_clips": (int, lambda v: v >= 1, 40),
    "synth.frames_per_clip": (int, lambda v: v >= 1, 60),
    "synth.noise": (float, lambda v: v >= 0, 0.02),
    "synth.occlusion_rate": (float, lambda v: v >= 0, 0.3),
    "synth.brightness_jitter": (float, lambda v: v >= 0, 0.05),
    "synth.seed": (int, None, 7),
    "synth.classes": (_label_list, None, ()),
}


@dataclass
class RunConfig:
    """All tunables, keyed ``section.key``; values are parsed and checked."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {key: default for key, (_, _, default) in SCHEMA.items()}
        for key, value in self.values.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            merged[key] = value
        self.values = merged

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key: {key}") from None

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        parser, validator, _ = SCHEMA[key]
        try:
            value = parser(raw) if isinstance(raw, str) else raw
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
        if validator is not None and not validator(value):
            raise ConfigError(f"{key}: value {value!r} out of range")
        self.values[key] = value

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected section.key=value")
                key, _, raw = line.partition("=")
                cfg.set(key.strip(), raw.strip())
        return cfg

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for key in sorted(self.values):
                value = self.values[key]
                if isinstance(value, tuple):
                    if value and isinstance(value[0], tuple):
                        value = ",".join(f"{a}:{b}" for a, b in value)
                    else:
                        value = ",".join(str(v) for v in value)
                fh.write(f"{key}={value}\n")
