"""Scenario configuration, read from and written to JSON."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .compensator import CompensatorConfig
from .errors import ConfigError
from .plant import PlantConfig
from .tracking import ReferencePath, double_lane_change_path

CALIBRATE = "calibrate"


@dataclass
class PipelineSettings:
    collection_speeds_kmh: list = field(default_factory=lambda: [25.0, 30.0, 35.0])
    slalom_length_m: float = 400.0
    slaloms_per_speed: int = 2
    training_samples: int = 6000
    small_training_samples: int = 425
    features: object = "pca"  # "pca" or an explicit list of log channels
    pca_channels: list = field(default_factory=lambda: [
        "u_track", "theta_measured", "v", "gamma_measured", "lat_accel", "psi"])
    pca_top_k: int = 3
    pca_threshold: float = 0.99
    taps: int = 6
    ensemble_size: int = 10
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 0.001
    validation_split: float = 0.2
    heldout_runs: int = 5
    eval_runs: int = 10


@dataclass
class ScenarioConfig:
    """One experiment: course, speed, plant, tracker, compensator, predictor."""

    seed: int
    path: str = "double_lane_change"  # or a CSV file with s_m,x_m,y_m
    speed_kmh: float = 30.0
    lookahead_m: float = 3.8
    plant: dict = field(default_factory=lambda: {
        "wheelbase": 2.85, "steering_ratio": 16.0, "actuator_delay": 0.2,
        "disturbance_sigma": CALIBRATE, "w1": 0.713, "w2": 0.287, "T": 0.05})
    compensator: object = field(default_factory=lambda: asdict(CompensatorConfig()))
    predictor: str = "none"  # ensemble file, or "none"
    max_time_s: float | None = None
    output_dir: str = "out"
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)

    def __post_init__(self):
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("an integer seed is mandatory")
        if self.speed_kmh <= 0.36:
            raise ConfigError("speed must exceed 0.1 m/s")
        if self.lookahead_m <= 0:
            raise ConfigError("lookahead must be positive")
        if isinstance(self.pipeline, dict):
            known = {f.name for f in fields(PipelineSettings)}
            unknown = set(self.pipeline) - known
            if unknown:
                raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
            self.pipeline = PipelineSettings(**self.pipeline)
        # validate eagerly so config errors surface at load time
        self.plant_config(sigma=0.0)
        self.compensator_config()

    # resolution -------------------------------------------------------

    @property
    def calibrate_sigma(self) -> bool:
        return self.plant.get("disturbance_sigma", CALIBRATE) == CALIBRATE

    def plant_config(self, sigma=None, seed=None) -> PlantConfig:
        p = dict(self.plant)
        if sigma is not None:
            p["disturbance_sigma"] = sigma
        elif p.get("disturbance_sigma", CALIBRATE) == CALIBRATE:
            raise ConfigError("disturbance_sigma is 'calibrate'; resolve it before building the plant")
        p["seed"] = self.seed if seed is None else seed
        try:
            return PlantConfig(**p)
        except TypeError as exc:
            raise ConfigError(f"bad plant section: {exc}") from None

    def compensator_config(self) -> CompensatorConfig | None:
        if self.compensator in (None, "off"):
            return None
        c = dict(self.compensator)
        c.setdefault("T", self.plant.get("T", 0.05))
        try:
            return CompensatorConfig(**c)
        except TypeError as exc:
            raise ConfigError(f"bad compensator section: {exc}") from None

    def reference_path(self) -> ReferencePath:
        if self.path == "double_lane_change":
            return double_lane_change_path()
        return ReferencePath.from_csv(self.path)

    # io ---------------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ScenarioConfig":
        d = copy.deepcopy(d)
        if "seed" not in d:
            raise ConfigError("an integer seed is mandatory")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = Path(base_dir) if base_dir else Path(".")
        for key in ("path", "predictor"):
            value = d.get(key)
            if value and value not in ("double_lane_change", "none"):
                p = Path(value)
                if not p.is_absolute():
                    p = base / p
                if not p.exists():
                    raise ConfigError(f"{key} file {p} does not exist")
                d[key] = str(p)
        if "plant" in d:
            plant = ScenarioConfig.__dataclass_fields__["plant"].default_factory()
            plant.update(d["plant"])
            d["plant"] = plant
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
