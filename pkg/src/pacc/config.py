"""Experiment configuration: one JSON document with a block per stage."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
import json
from pathlib import Path

from .data import DEFAULT_SPEC, DiscretizationSpec, DriverProfile, GeneratorSettings
from .irl import IrlConfig
from .model import ModelConfig
from .solver import PlannerConfig


@dataclass
class PopulationConfig:
    """Synthetic drivers: one archetype per preferred grid cell."""

    archetypes: list = field(default_factory=lambda: [6, 8, 16, 18])
    speed_noise_sd: float = 1.0
    gap_noise_sd: float = 3.0
    policy_temperature: float = 0.3
    n_source: int = 42
    source_events: list = field(default_factory=lambda: [11, 60])
    n_target: int = 7
    target_events: list = field(default_factory=lambda: [61, 80])
    test_events: int = 20
    generator: GeneratorSettings = field(default_factory=GeneratorSettings)

    def __post_init__(self):
        if isinstance(self.generator, dict):
            g = dict(self.generator)
            g["accel_levels"] = tuple(g.get("accel_levels", GeneratorSettings.accel_levels))
            self.generator = GeneratorSettings(**g)
        if self.n_source < 1 or self.n_target < 1:
            raise ValueError("need at least one source and one target driver")
        if not self.archetypes:
            raise ValueError("need at least one archetype")
        for lo, hi in (self.source_events, self.target_events):
            if not 1 <= lo <= hi:
                raise ValueError("event count ranges must satisfy 1 <= lo <= hi")
        if self.target_events[0] <= self.test_events:
            raise ValueError("target drivers need more events than test_events")
        for cell in self.archetypes:
            self.profile(cell)

    def profile(self, cell: int) -> DriverProfile:
        return DriverProfile(int(cell), self.speed_noise_sd, self.gap_noise_sd, self.policy_temperature)


@dataclass
class ClusterConfig:
    k_min: int = 1
    k_max: int = 8
    n_restarts: int = 10
    k: int | None = None  # None selects k at the elbow

    def __post_init__(self):
        if not 1 <= self.k_min < self.k_max:
            raise ValueError("need 1 <= k_min < k_max")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class PredictionConfig:
    n_components: int = 3
    kl_samples: int = 10_000
    max_events: int = 10
    trials: int = 20

    def __post_init__(self):
        if self.n_components < 1 or self.kl_samples < 100 or self.max_events < 1 or self.trials < 1:
            raise ValueError("invalid prediction config")


@dataclass
class PaccConfig:
    n_episodes: int = 30
    warm_up_steps: int = 20
    cluster: int | None = None  # None: the centroid with the highest reward at the start cell
    budgets: list = field(default_factory=lambda: [32, 64, 128, 256, 512, 1024, 2048, 4096])
    sweep_episodes: int = 20

    def __post_init__(self):
        if self.n_episodes < 1 or self.sweep_episodes < 1 or self.warm_up_steps < 0:
            raise ValueError("invalid pacc config")
        if not self.budgets or min(self.budgets) < 1:
            raise ValueError("budgets must be positive simulation counts")


_BLOCKS = {
    "population": PopulationConfig,
    "discretization": DiscretizationSpec,
    "irl": IrlConfig,
    "clustering": ClusterConfig,
    "prediction": PredictionConfig,
    "model": ModelConfig,
    "planner": PlannerConfig,
    "pacc": PaccConfig,
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    population: PopulationConfig = field(default_factory=PopulationConfig)
    discretization: DiscretizationSpec = DEFAULT_SPEC
    irl: IrlConfig = field(default_factory=IrlConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    pacc: PaccConfig = field(default_factory=PaccConfig)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "output_dir": self.output_dir}
        for name in _BLOCKS:
            block = getattr(self, name)
            d = block.to_dict() if hasattr(block, "to_dict") else asdict(block)
            if name == "population":
                d["generator"]["accel_levels"] = list(d["generator"]["accel_levels"])
            if name == "discretization":
                d = {k: list(v) for k, v in d.items()}
            out[name] = d
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        unknown = set(doc) - set(_BLOCKS) - {"seed", "output_dir"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {"seed": int(doc.get("seed", 0)), "output_dir": str(doc.get("output_dir", "out"))}
        for name, typ in _BLOCKS.items():
            if name not in doc:
                continue
            block = dict(doc[name])
            allowed = {f.name for f in fields(typ)}
            extra = set(block) - allowed
            if extra:
                raise ValueError(f"unknown keys in '{name}': {sorted(extra)}")
            if hasattr(typ, "from_dict") and typ is not DiscretizationSpec:
                kwargs[name] = typ.from_dict(block)
            elif typ is DiscretizationSpec:
                kwargs[name] = DiscretizationSpec(**{k: tuple(v) for k, v in block.items()})
            else:
                kwargs[name] = typ(**block)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=seed)
        if output_dir is not None:
            out = replace(out, output_dir=str(output_dir))
        return out
