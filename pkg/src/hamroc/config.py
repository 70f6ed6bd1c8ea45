"""Structured run configuration: one section per pipeline stage.

Configs load from JSON; unknown keys are rejected so typos fail loudly.
All randomness flows from the seeds recorded here, never from the clock,
and every command stamps its outputs with the config hash.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import serialize
from .dataset import (
    DEFAULT_EPSILON,
    DEFAULT_TEST_G_RANGE,
    DEFAULT_TEST_THETA_RANGE,
    DEFAULT_TRAIN_G,
    DEFAULT_TRAIN_THETA,
    GravityProtocol,
)
from .errors import InvalidConfig
from .network import GeneratorConfig
from .autoencoder import TrainConfig

WORKSPACE_ENV = "HAMROC_WORKSPACE"


@dataclass(frozen=True)
class SimulationSection:
    duration: float = 10.0
    dt: float = 1e-3
    sample_dt: float = 0.02
    init_amplitude: float = 0.1
    init_seed: int = 0


@dataclass(frozen=True)
class DatasetSection:
    epsilon: float = DEFAULT_EPSILON
    train_g: tuple[float, ...] = DEFAULT_TRAIN_G
    train_theta: tuple[float, ...] = DEFAULT_TRAIN_THETA
    test_g_range: tuple[float, float] = DEFAULT_TEST_G_RANGE
    test_theta_range: tuple[float, float] = DEFAULT_TEST_THETA_RANGE
    n_test: int = 28
    seed: int = 0
    valid_fraction: float = 1.0 / 7.0

    def protocol(self) -> GravityProtocol:
        if len(self.train_g) != len(self.train_theta):
            raise InvalidConfig("train_g and train_theta must pair positionally")
        return GravityProtocol(
            train_conditions=tuple(zip(self.train_g, self.train_theta)),
            test_g_range=tuple(self.test_g_range),
            test_theta_range=tuple(self.test_theta_range),
            n_test=self.n_test,
            seed=self.seed,
        )


@dataclass(frozen=True)
class TrainingSection:
    latent_dim: int = 5
    hidden: tuple[int, ...] | None = None  # None scales widths from n
    lr: float = 1e-3
    weight_decay: float = 1e-6
    lr_gamma: float = 0.5
    lr_step: int = 100
    epochs: int = 500
    batch_size: int = 64
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            weight_decay=self.weight_decay,
            lr_gamma=self.lr_gamma,
            lr_step=self.lr_step,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )


@dataclass(frozen=True)
class ReductionSection:
    dt: float | None = None        # None reuses the simulation dt
    sample_dt: float | None = None


@dataclass(frozen=True)
class ControlSection:
    alpha: float = 1.0
    beta: float = 1.0
    duration: float = 5.0
    n_tasks: int = 50
    seed: int = 0
    u_max: float | None = None
    recompute_input_field: bool = False


@dataclass(frozen=True)
class EvalSection:
    sigmas: tuple[float, ...] = (0.01, 0.05, 0.1, 0.5, 1.0, 5.0)
    noise_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    fractions: tuple[float, ...] = (0.07, 0.14, 0.21)
    latent_sizes: tuple[int, ...] = (1, 2, 3, 4, 5)
    n_eval_trajectories: int = 10


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    reduction: ReductionSection = field(default_factory=ReductionSection)
    control: ControlSection = field(default_factory=ControlSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return {
            "generator": _section_dict(self.generator),
            "simulation": _section_dict(self.simulation),
            "dataset": _section_dict(self.dataset),
            "training": _section_dict(self.training),
            "reduction": _section_dict(self.reduction),
            "control": _section_dict(self.control),
            "eval": _section_dict(self.eval),
        }

    def hash(self) -> str:
        return serialize.config_hash(self.to_dict())


_SECTION_TYPES = {
    "generator": GeneratorConfig,
    "simulation": SimulationSection,
    "dataset": DatasetSection,
    "training": TrainingSection,
    "reduction": ReductionSection,
    "control": ControlSection,
    "eval": EvalSection,
}

# Fields whose JSON lists become tuples on load.
_TUPLE_FIELDS = {
    "mass_range",
    "stiffness_range",
    "damping_range",
    "cell_types",
    "train_g",
    "train_theta",
    "test_g_range",
    "test_theta_range",
    "hidden",
    "sigmas",
    "noise_seeds",
    "fractions",
    "latent_sizes",
}


def _section_dict(section) -> dict:
    out = {}
    for f in fields(section):
        value = getattr(section, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _section_from_dict(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise InvalidConfig(f"section {name!r} must be an object")
        sections[name] = _section_from_dict(cls, raw)
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    return from_dict(serialize.read_json(path))


def save_config(path, cfg: RunConfig) -> None:
    serialize.write_json(path, cfg.to_dict())


def workspace_root() -> Path:
    return Path(os.environ.get(WORKSPACE_ENV, ".")).resolve()


def resolve_path(path) -> Path:
    """Resolve a possibly relative path against the workspace root."""
    p = Path(path)
    return p if p.is_absolute() else workspace_root() / p


def desk_scale_config(seed: int = 3) -> RunConfig:
    """Defaults sized for the fast desk-scale experiments."""
    return RunConfig(
        generator=GeneratorConfig(
            seed=seed, n_base_cells=6, lateral_attach_probability=0.35
        ),
        simulation=SimulationSection(duration=4.0),
        dataset=DatasetSection(n_test=10, seed=42),
        training=TrainingSection(latent_dim=3),
    )
