"""Shared fixtures: hand-built networks and the desk-scale system."""

from __future__ import annotations

import numpy as np
import pytest

from hamroc.network import GeneratorConfig, GravityField, MassSpringNetwork, generate_network


def make_net(
    positions,
    edges,
    masses=None,
    pinned=None,
    rest_lengths=None,
) -> MassSpringNetwork:
    """Small hand-built network; edges are (i, j, k, c) tuples.

    Rest lengths default to the geometric distances of `positions`.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    idx = np.array([[e[0], e[1]] for e in edges], dtype=int)
    stiff = np.array([e[2] for e in edges], dtype=float)
    damp = np.array([e[3] for e in edges], dtype=float)
    if rest_lengths is None:
        rest_lengths = np.sqrt(
            np.sum((positions[idx[:, 0]] - positions[idx[:, 1]]) ** 2, axis=1)
        )
    return MassSpringNetwork(
        masses=np.ones(n) if masses is None else np.asarray(masses, dtype=float),
        rest_positions=positions,
        pinned=np.zeros(n, dtype=bool) if pinned is None else np.asarray(pinned, dtype=bool),
        edges=idx,
        stiffness=stiff,
        damping=damp,
        rest_lengths=np.asarray(rest_lengths, dtype=float),
    )


def two_mass_spring(k=2.0, c=0.0, l0=1.0) -> MassSpringNetwork:
    """Two unit masses at (0,0) and (1,0) joined by one spring."""
    return make_net([(0.0, 0.0), (1.0, 0.0)], [(0, 1, k, c)], rest_lengths=[l0])


@pytest.fixture(scope="session")
def desk_net() -> MassSpringNetwork:
    """The ~20-node structure used across the desk-scale tests."""
    return generate_network(
        GeneratorConfig(seed=3, n_base_cells=6, lateral_attach_probability=0.35)
    )


@pytest.fixture(scope="session")
def desk_gravity() -> GravityField:
    return GravityField(g=9.81, theta=-np.pi / 3)


def random_network(rng: np.random.Generator, n_cells: int | None = None) -> MassSpringNetwork:
    """Random small generated network for property checks."""
    cfg = GeneratorConfig(
        seed=int(rng.integers(0, 2**31)),
        n_base_cells=int(rng.integers(1, 5)) if n_cells is None else n_cells,
        lateral_attach_probability=float(rng.uniform(0, 0.6)),
    )
    return generate_network(cfg)
