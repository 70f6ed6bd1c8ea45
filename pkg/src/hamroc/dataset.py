"""Configuration datasets built from simulations under varied gravity.

Follows the data protocol of the reference experiments: a fixed list of
training gravity conditions, uniformly sampled test conditions, rest
starts from randomly perturbed initial configurations, and a greedy
epsilon filter that drops configurations too close to an already kept one.
Validation is whole simulations withheld from the training conditions,
never shuffled frames, to avoid leakage between nearly identical samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serialize
from .errors import InvalidConfig
from .network import GravityField, MassSpringNetwork
from .simulate import random_initial_configuration, simulate_full

# Training gravity conditions: five simulations at standard gravity plus a
# weak and a strong one, paired positionally with the orientation list.
DEFAULT_TRAIN_G = (9.81, 9.81, 9.81, 9.81, 9.81, 6.0, 14.0)
DEFAULT_TRAIN_THETA = (
    -3.0 * math.pi / 4.0,
    -math.pi / 3.0,
    -math.pi / 4.0,
    -2.0 * math.pi / 3.0,
    math.pi / 2.0,
    -math.pi / 3.0,
    -2.0 * math.pi / 3.0,
)
DEFAULT_TEST_G_RANGE = (3.0, 17.0)
DEFAULT_TEST_THETA_RANGE = (-3.0 * math.pi / 4.0, -math.pi / 4.0)
DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class GravityProtocol:
    """Gravity conditions for training and test simulations."""

    train_conditions: tuple[tuple[float, float], ...] = tuple(
        zip(DEFAULT_TRAIN_G, DEFAULT_TRAIN_THETA)
    )
    test_g_range: tuple[float, float] = DEFAULT_TEST_G_RANGE
    test_theta_range: tuple[float, float] = DEFAULT_TEST_THETA_RANGE
    n_test: int = 28
    seed: int = 0

    def __post_init__(self):
        if not self.train_conditions:
            raise InvalidConfig("train condition list must be non-empty")
        if self.test_g_range[0] > self.test_g_range[1]:
            raise InvalidConfig("test_g_range is empty")
        if self.test_theta_range[0] > self.test_theta_range[1]:
            raise InvalidConfig("test_theta_range is empty")
        if self.n_test < 0:
            raise InvalidConfig("n_test must be >= 0")

    def sample_test_conditions(self) -> list[tuple[float, float]]:
        rng = np.random.default_rng(self.seed)
        gs = rng.uniform(*self.test_g_range, size=self.n_test)
        thetas = rng.uniform(*self.test_theta_range, size=self.n_test)
        return list(zip(gs.tolist(), thetas.tolist()))


@dataclass
class ConfigurationDataset:
    """Configurations (q only) retained from one or more simulations."""

    configurations: np.ndarray          # (S, n)
    source: list[tuple[int, float]]     # (simulation id, sample time) per row
    split: str                          # train | valid | test
    epsilon: float

    def __len__(self) -> int:
        return self.configurations.shape[0]

    @property
    def n_dof(self) -> int:
        return self.configurations.shape[1]


def epsilon_filter(configs: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices kept by the greedy pass: a configuration survives iff it is
    at least epsilon away from every previously kept one. Stable in time
    order, so the earliest representative of each cluster wins."""
    if epsilon <= 0:
        raise InvalidConfig(f"epsilon must be positive, got {epsilon}")
    configs = np.asarray(configs, dtype=float)
    kept: list[int] = []
    for i in range(configs.shape[0]):
        if not kept:
            kept.append(i)
            continue
        dists = np.linalg.norm(configs[kept] - configs[i], axis=1)
        if np.all(dists >= epsilon):
            kept.append(i)
    return np.array(kept, dtype=int)


@dataclass
class SimulationRecord:
    sim_id: int
    g: float
    theta: float
    kept_times: np.ndarray
    kept_configs: np.ndarray


def build_dataset(
    net: MassSpringNetwork,
    protocol: GravityProtocol,
    duration: float = 10.0,
    dt: float = 1e-3,
    sample_dt: float = 0.02,
    init_amplitude: float = 0.1,
    epsilon: float = DEFAULT_EPSILON,
    valid_fraction: float = 1.0 / 7.0,
    trajectory_sink=None,
) -> dict[str, ConfigurationDataset]:
    """Simulate every gravity condition and assemble train/valid/test splits.

    Each simulation starts at rest (p = 0) from a seeded random initial
    configuration and is epsilon-filtered independently. The validation
    split withholds whole simulations from the tail of the train-condition
    list. trajectory_sink(sim_id, split, trajectory), when given, receives
    every raw simulation before filtering.
    """
    if not 0.0 < valid_fraction < 1.0:
        raise InvalidConfig("valid_fraction must be in (0, 1)")
    n_train_sims = len(protocol.train_conditions)
    n_valid = max(1, round(valid_fraction * n_train_sims)) if n_train_sims > 1 else 0

    records: dict[str, list[SimulationRecord]] = {"train": [], "valid": [], "test": []}
    conditions = list(protocol.train_conditions) + protocol.sample_test_conditions()
    for sim_id, (g, theta) in enumerate(conditions):
        if sim_id < n_train_sims - n_valid:
            split = "train"
        elif sim_id < n_train_sims:
            split = "valid"
        else:
            split = "test"
        q0 = random_initial_configuration(net, seed=protocol.seed + 1000 + sim_id, amplitude=init_amplitude)
        traj = simulate_full(
            net,
            GravityField(g=g, theta=theta),
            q0,
            np.zeros(net.n_dof),
            duration=duration,
            dt=dt,
            sample_dt=sample_dt,
        )
        if trajectory_sink is not None:
            trajectory_sink(sim_id, split, traj)
        kept = epsilon_filter(traj.qs, epsilon)
        records[split].append(
            SimulationRecord(
                sim_id=sim_id,
                g=g,
                theta=theta,
                kept_times=traj.times[kept],
                kept_configs=traj.qs[kept],
            )
        )

    out = {}
    for split, recs in records.items():
        if recs:
            configs = np.concatenate([r.kept_configs for r in recs], axis=0)
            source = [
                (r.sim_id, float(t)) for r in recs for t in r.kept_times.tolist()
            ]
        else:
            configs = np.zeros((0, net.n_dof))
            source = []
        out[split] = ConfigurationDataset(
            configurations=configs, source=source, split=split, epsilon=epsilon
        )
    return out


# ---------------------------------------------------------------------------
# Persistence: one CSV per split plus a JSON manifest
# ---------------------------------------------------------------------------

def save_dataset(out_dir, datasets: dict[str, ConfigurationDataset], seed: int) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split, ds in datasets.items():
        header = [f"q_{i}" for i in range(ds.n_dof)]
        serialize.write_csv(out_dir / f"{split}.csv", header, ds.configurations)
        manifest = {
            "split": split,
            "epsilon": ds.epsilon,
            "source_simulations": sorted({s for s, _ in ds.source}),
            "seed": seed,
            "n_configurations": len(ds),
            "sources": [[s, t] for s, t in ds.source],
        }
        serialize.write_json(out_dir / f"{split}.json", manifest)


def load_dataset(out_dir, split: str) -> ConfigurationDataset:
    out_dir = Path(out_dir)
    _, configs = serialize.read_csv(out_dir / f"{split}.csv")
    manifest = serialize.read_json(out_dir / f"{split}.json")
    return ConfigurationDataset(
        configurations=configs,
        source=[(int(s), float(t)) for s, t in manifest["sources"]],
        split=split,
        epsilon=float(manifest["epsilon"]),
    )
