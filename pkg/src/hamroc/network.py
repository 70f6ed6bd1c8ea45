"""Planar mass-spring-damper networks: procedural generation and physics.

A network is a set of point masses joined by parallel spring-damper
elements. The configuration vector q interleaves the x and y positions of
the free (unpinned) nodes in node order: q[2r], q[2r+1] are the x, y
coordinates of the r-th free node. Pinned nodes are held at their rest
positions and carry no state, so the state dimension is n = 2 * n_free.
Densely hand-built test networks without pins keep the plain n = 2 * N
layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    DegenerateSpring,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidConfig,
    PinnedNode,
)
from . import serialize

# Below this spring length the length gradient is numerically undefined;
# erroring surfaces collapsed configurations instead of hiding them.
MIN_SPRING_LENGTH = 1e-9


@dataclass(frozen=True)
class GravityField:
    """Constant gravity with intensity g and orientation angle theta.

    The gravitational energy of a mass m at (x, y) is
    m * g * (x*sin(theta) + y*cos(theta)); theta is stored normalized to
    [0, 2*pi).
    """

    g: float
    theta: float = 0.0

    def __post_init__(self):
        if self.g < 0:
            raise InvalidConfig(f"gravity intensity must be >= 0, got {self.g}")
        object.__setattr__(self, "theta", float(self.theta) % (2.0 * math.pi))


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the random structure generator.

    cell_types optionally fixes the base-chain cell sequence ("square" or
    "diamond", cycled); None draws the sequence from the seed. Extra braces
    are additional springs between nearby nodes, used to densify the mesh.
    """

    seed: int = 0
    n_base_cells: int = 4
    lateral_attach_probability: float = 0.3
    cell_size: float = 1.0
    mass_range: tuple[float, float] = (0.05, 0.2)
    stiffness_range: tuple[float, float] = (50.0, 150.0)
    damping_range: tuple[float, float] = (0.5, 2.0)
    cell_types: tuple[str, ...] | None = None
    n_extra_braces: int = 0

    def __post_init__(self):
        if self.n_base_cells < 1:
            raise InvalidConfig("n_base_cells must be >= 1")
        if not 0.0 <= self.lateral_attach_probability <= 1.0:
            raise InvalidConfig("lateral_attach_probability must be in [0, 1]")
        if self.cell_size <= 0:
            raise InvalidConfig("cell_size must be positive")
        for name, (lo, hi), min_lo in (
            ("mass_range", self.mass_range, 0.0),
            ("stiffness_range", self.stiffness_range, 0.0),
            ("damping_range", self.damping_range, -1.0),
        ):
            if lo > hi:
                raise InvalidConfig(f"{name} is empty: ({lo}, {hi})")
            if lo <= min_lo:
                raise InvalidConfig(f"{name} lower bound must exceed {min_lo}")
        if self.cell_types is not None:
            bad = set(self.cell_types) - {"square", "diamond"}
            if bad:
                raise InvalidConfig(f"unknown cell types {sorted(bad)}")
            object.__setattr__(self, "cell_types", tuple(self.cell_types))
        if self.n_extra_braces < 0:
            raise InvalidConfig("n_extra_braces must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mass_range"] = list(self.mass_range)
        d["stiffness_range"] = list(self.stiffness_range)
        d["damping_range"] = list(self.damping_range)
        d["cell_types"] = list(self.cell_types) if self.cell_types else None
        return d


@dataclass(frozen=True)
class MassSpringNetwork:
    """Immutable planar mass-spring-damper network."""

    masses: np.ndarray          # (N,) kg
    rest_positions: np.ndarray  # (N, 2) m
    pinned: np.ndarray          # (N,) bool
    edges: np.ndarray           # (E, 2) int node indices, i < j
    stiffness: np.ndarray       # (E,) N/m
    damping: np.ndarray         # (E,) N*s/m
    rest_lengths: np.ndarray    # (E,) m
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))
        object.__setattr__(self, "rest_positions", np.asarray(self.rest_positions, dtype=float))
        object.__setattr__(self, "pinned", np.asarray(self.pinned, dtype=bool))
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=int))
        object.__setattr__(self, "stiffness", np.asarray(self.stiffness, dtype=float))
        object.__setattr__(self, "damping", np.asarray(self.damping, dtype=float))
        object.__setattr__(self, "rest_lengths", np.asarray(self.rest_lengths, dtype=float))
        self._validate()
        free = np.flatnonzero(~self.pinned)
        rank = np.full(self.n_nodes, -1, dtype=int)
        rank[free] = np.arange(free.size)
        object.__setattr__(self, "_free", free)
        object.__setattr__(self, "_rank", rank)

    def _validate(self):
        n, e = self.n_nodes, self.n_edges
        if self.rest_positions.shape != (n, 2) or self.pinned.shape != (n,):
            raise InvalidConfig("node array shapes are inconsistent")
        if self.edges.shape != (e, 2) or self.damping.shape != (e,) or self.rest_lengths.shape != (e,):
            raise InvalidConfig("edge array shapes are inconsistent")
        if np.any(self.masses <= 0):
            raise InvalidConfig("all masses must be positive")
        if np.any(self.stiffness <= 0):
            raise InvalidConfig("all stiffnesses must be positive")
        if np.any(self.damping < 0):
            raise InvalidConfig("damping must be nonnegative")
        if np.any(self.rest_lengths <= 0):
            raise InvalidConfig("rest lengths must be positive")
        if e and (self.edges.min() < 0 or self.edges.max() >= n):
            raise IndexOutOfRange("edge references a node outside the network")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise InvalidConfig("self-loop edge")
        pairs = {tuple(sorted(p)) for p in self.edges.tolist()}
        if len(pairs) != e:
            raise InvalidConfig("duplicate edge")
        if not _connected(n, self.edges):
            raise InvalidConfig("network graph is not connected")

    @property
    def n_nodes(self) -> int:
        return self.masses.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def free_nodes(self) -> np.ndarray:
        return self._free

    @property
    def n_dof(self) -> int:
        """State dimension n = 2 * number of free nodes."""
        return 2 * self._free.size

    def dof_of(self, node: int) -> int:
        """First state index (x coordinate) of a free node."""
        if not 0 <= node < self.n_nodes:
            raise IndexOutOfRange(f"node {node} not in [0, {self.n_nodes})")
        if self.pinned[node]:
            raise PinnedNode(f"node {node} is pinned")
        return 2 * int(self._rank[node])

    def rest_configuration(self) -> np.ndarray:
        """Rest positions of the free nodes as a configuration vector."""
        return self.rest_positions[self._free].reshape(-1)

    def positions(self, q: np.ndarray) -> np.ndarray:
        """All node positions (N, 2) for a configuration q of the free DOF."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_dof,):
            raise DimensionMismatch(f"q has shape {q.shape}, expected ({self.n_dof},)")
        pos = self.rest_positions.copy()
        pos[self._free] = q.reshape(-1, 2)
        return pos

    def free_masses(self) -> np.ndarray:
        return self.masses[self._free]


def _connected(n_nodes: int, edges: np.ndarray) -> bool:
    if n_nodes <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, j in edges.tolist():
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(n_nodes, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


# ---------------------------------------------------------------------------
# Physics of Hamiltonian evaluation
# ---------------------------------------------------------------------------

def _edge_lengths_units(net: MassSpringNetwork, pos: np.ndarray):
    d = pos[net.edges[:, 0]] - pos[net.edges[:, 1]]
    lengths = np.sqrt(np.sum(d * d, axis=1))
    if np.any(lengths <= MIN_SPRING_LENGTH):
        bad = int(np.argmin(lengths))
        raise DegenerateSpring(
            f"edge {bad} collapsed to length {lengths[bad]:.3e} m"
        )
    return lengths, d / lengths[:, None]


def potential_energy(net: MassSpringNetwork, grav: GravityField, q: np.ndarray) -> float:
    """Total potential: gravity over free masses plus elastic energy of all edges."""
    pos = net.positions(q)
    d = pos[net.edges[:, 0]] - pos[net.edges[:, 1]]
    lengths = np.sqrt(np.sum(d * d, axis=1))
    elastic = 0.5 * float(np.sum(net.stiffness * (lengths - net.rest_lengths) ** 2))
    free = net.free_nodes
    proj = pos[free, 0] * math.sin(grav.theta) + pos[free, 1] * math.cos(grav.theta)
    gravity = grav.g * float(np.sum(net.masses[free] * proj))
    return gravity + elastic


def potential_gradient(net: MassSpringNetwork, grav: GravityField, q: np.ndarray) -> np.ndarray:
    """Analytic gradient of potential_energy w.r.t. the free DOF."""
    pos = net.positions(q)
    lengths, units = _edge_lengths_units(net, pos)
    tension = net.stiffness * (lengths - net.rest_lengths)
    grad_nodes = np.zeros_like(pos)
    np.add.at(grad_nodes, net.edges[:, 0], tension[:, None] * units)
    np.add.at(grad_nodes, net.edges[:, 1], -tension[:, None] * units)
    free = net.free_nodes
    grad = grad_nodes[free]
    grad[:, 0] += grav.g * net.masses[free] * math.sin(grav.theta)
    grad[:, 1] += grav.g * net.masses[free] * math.cos(grav.theta)
    return grad.reshape(-1)


def mass_matrix(net: MassSpringNetwork) -> np.ndarray:
    """Diagonal inertia matrix over the free DOF."""
    return np.diag(mass_diagonal(net))

def mass_diagonal(net: MassSpringNetwork) -> np.ndarray:
    """Diagonal of the inertia matrix: each free node's mass, twice."""
    return np.repeat(net.free_masses(), 2)


def edge_length_gradients(net: MassSpringNetwork, q: np.ndarray) -> np.ndarray:
    """(E, n) matrix of spring-length gradients w.r.t. the free DOF."""
    pos = net.positions(q)
    _, units = _edge_lengths_units(net, pos)
    grads = np.zeros((net.n_edges, net.n_dof))
    rows = np.arange(net.n_edges)
    rank = net._rank
    for side, sign in ((0, 1.0), (1, -1.0)):
        nodes = net.edges[:, side]
        ok = rank[nodes] >= 0
        cols = 2 * rank[nodes[ok]]
        grads[rows[ok], cols] += sign * units[ok, 0]
        grads[rows[ok], cols + 1] += sign * units[ok, 1]
    return grads


def damping_matrix(net: MassSpringNetwork, q: np.ndarray) -> np.ndarray:
    """D(q) = sum_j c_j (grad l_j)(grad l_j)^T; symmetric PSD by construction."""
    grads = edge_length_gradients(net, q)
    return grads.T @ (net.damping[:, None] * grads)


def damping_force(net: MassSpringNetwork, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """D(q) @ v without assembling D, via per-edge elongation rates."""
    pos = net.positions(q)
    _, units = _edge_lengths_units(net, pos)
    v = np.asarray(v, dtype=float)
    if v.shape != (net.n_dof,):
        raise DimensionMismatch(f"v has shape {v.shape}, expected ({net.n_dof},)")
    vel_nodes = np.zeros_like(pos)
    vel_nodes[net.free_nodes] = v.reshape(-1, 2)
    rate = np.sum(units * (vel_nodes[net.edges[:, 0]] - vel_nodes[net.edges[:, 1]]), axis=1)
    scaled = (net.damping * rate)[:, None] * units
    force_nodes = np.zeros_like(pos)
    np.add.at(force_nodes, net.edges[:, 0], scaled)
    np.add.at(force_nodes, net.edges[:, 1], -scaled)
    return force_nodes[net.free_nodes].reshape(-1)


def actuation_matrix(net: MassSpringNetwork, actuated: int) -> np.ndarray:
    """Selection matrix (n, 2) injecting a planar force at one free node."""
    base = net.dof_of(actuated)
    g = np.zeros((net.n_dof, 2))
    g[base, 0] = 1.0
    g[base + 1, 1] = 1.0
    return g


def hamiltonian(net: MassSpringNetwork, grav: GravityField, q: np.ndarray, p: np.ndarray) -> float:
    """Total energy 0.5 p^T M^-1 p + V(q), kinetic part via the diagonal inverse."""
    p = np.asarray(p, dtype=float)
    if p.shape != (net.n_dof,):
        raise DimensionMismatch(f"p has shape {p.shape}, expected ({net.n_dof},)")
    kinetic = 0.5 * float(np.sum(p * p / mass_diagonal(net)))
    return kinetic + potential_energy(net, grav, q)


# ---------------------------------------------------------------------------
# Procedural generation
# ---------------------------------------------------------------------------

def generate_network(cfg: GeneratorConfig) -> MassSpringNetwork:
    """Generate a hanging structure by chaining triangular and square cells.

    The chain grows downward from a pinned top pair. Square cells add a
    bottom pair with perimeter edges plus one diagonal brace (shear
    stiffness); diamond cells are two stacked triangles through a midpoint
    node. Lateral square cells attach to the vertical sides of square cells
    with the configured probability. Deterministic for a given config.
    """
    rng = np.random.default_rng(cfg.seed)
    s = cfg.cell_size
    nodes: list[tuple[float, float]] = [(-s / 2, 0.0), (s / 2, 0.0)]
    node_at: dict[tuple[int, int], int] = {
        _grid_key(x, y, s): i for i, (x, y) in enumerate(nodes)
    }
    edge_set: set[tuple[int, int]] = set()
    edge_list: list[tuple[int, int]] = []
    lateral_nodes: list[int] = []

    def add_node(x: float, y: float) -> int:
        # adjacent cells share boundary nodes: positions are deduplicated
        key = _grid_key(x, y, s)
        existing = node_at.get(key)
        if existing is not None:
            return existing
        nodes.append((x, y))
        node_at[key] = len(nodes) - 1
        return len(nodes) - 1

    def add_edge(i: int, j: int) -> None:
        key = (min(i, j), max(i, j))
        if key in edge_set:
            return
        edge_set.add(key)
        edge_list.append(key)

    add_edge(0, 1)
    pair = (0, 1)  # current bottom interface, left then right
    pair_y = 0.0

    for cell_idx in range(cfg.n_base_cells):
        if cfg.cell_types is not None:
            cell = cfg.cell_types[cell_idx % len(cfg.cell_types)]
        else:
            cell = "square" if rng.random() < 0.5 else "diamond"
        left, right = pair
        xl, xr = nodes[left][0], nodes[right][0]
        if cell == "square":
            bl = add_node(xl, pair_y - s)
            br = add_node(xr, pair_y - s)
            add_edge(left, bl)
            add_edge(right, br)
            add_edge(bl, br)
            add_edge(left, br)  # diagonal brace against shear collapse
            sides = [(left, bl, -1.0), (right, br, 1.0)]
            for top, bottom, direction in sides:
                if rng.random() < cfg.lateral_attach_probability:
                    ox = direction * s
                    lt = add_node(nodes[top][0] + ox, nodes[top][1])
                    lb = add_node(nodes[bottom][0] + ox, nodes[bottom][1])
                    add_edge(top, lt)
                    add_edge(bottom, lb)
                    add_edge(lt, lb)
                    add_edge(top, lb)  # diagonal brace
                    lateral_nodes.extend([lt, lb])
            pair = (bl, br)
            pair_y -= s
        else:  # diamond: triangle down then triangle up
            xm = 0.5 * (xl + xr)
            h = s * math.sqrt(3.0) / 2.0
            mid = add_node(xm, pair_y - h)
            add_edge(left, mid)
            add_edge(right, mid)
            bl = add_node(xm - s / 2, pair_y - 2 * h)
            br = add_node(xm + s / 2, pair_y - 2 * h)
            add_edge(mid, bl)
            add_edge(mid, br)
            add_edge(bl, br)
            pair = (bl, br)
            pair_y -= 2 * h

    positions = np.array(nodes)
    if cfg.n_extra_braces > 0:
        _add_braces(rng, positions, edge_set, edge_list, cfg.n_extra_braces, 2.0 * s)

    edges = np.array(edge_list, dtype=int)
    n_nodes, n_edges = len(nodes), len(edge_list)
    masses = rng.uniform(*cfg.mass_range, size=n_nodes)
    stiffness = rng.uniform(*cfg.stiffness_range, size=n_edges)
    damping = rng.uniform(*cfg.damping_range, size=n_edges)
    rest_lengths = np.sqrt(
        np.sum((positions[edges[:, 0]] - positions[edges[:, 1]]) ** 2, axis=1)
    )
    pinned = np.zeros(n_nodes, dtype=bool)
    pinned[[0, 1]] = True  # topmost pair carries the structure

    return MassSpringNetwork(
        masses=masses,
        rest_positions=positions,
        pinned=pinned,
        edges=edges,
        stiffness=stiffness,
        damping=damping,
        rest_lengths=rest_lengths,
        meta={
            "seed": cfg.seed,
            "generator_config": cfg.to_dict(),
            "lateral_nodes": lateral_nodes,
        },
    )


def _grid_key(x: float, y: float, s: float) -> tuple[int, int]:
    return (round(x / s * 4096), round(y / s * 4096))


def _add_braces(rng, positions, edge_set, edge_list, count: int, max_dist: float) -> None:
    """Add extra springs between nearby node pairs, skipping duplicates."""
    n = positions.shape[0]
    candidates = []
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in edge_set:
                continue
            d = math.dist(positions[i], positions[j])
            if 1e-6 < d <= max_dist:
                candidates.append((i, j))
    take = min(count, len(candidates))
    chosen = rng.choice(len(candidates), size=take, replace=False)
    for idx in sorted(chosen.tolist()):
        key = candidates[idx]
        edge_set.add(key)
        edge_list.append(key)


def paper_scale_config(seed: int = 0) -> GeneratorConfig:
    """Preset sized to the reference systems (~200 masses, ~636 springs)."""
    return GeneratorConfig(
        seed=seed,
        n_base_cells=51,
        lateral_attach_probability=0.95,
        cell_size=1.0,
        n_extra_braces=248,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def to_json_dict(net: MassSpringNetwork) -> dict:
    return {
        "nodes": [
            {
                "mass": float(net.masses[i]),
                "x0": float(net.rest_positions[i, 0]),
                "y0": float(net.rest_positions[i, 1]),
                "pinned": bool(net.pinned[i]),
            }
            for i in range(net.n_nodes)
        ],
        "edges": [
            {
                "i": int(net.edges[e, 0]),
                "j": int(net.edges[e, 1]),
                "k": float(net.stiffness[e]),
                "c": float(net.damping[e]),
                "l0": float(net.rest_lengths[e]),
            }
            for e in range(net.n_edges)
        ],
        "meta": net.meta,
    }


def from_json_dict(doc: dict) -> MassSpringNetwork:
    nodes = doc["nodes"]
    edges = doc["edges"]
    return MassSpringNetwork(
        masses=np.array([v["mass"] for v in nodes]),
        rest_positions=np.array([[v["x0"], v["y0"]] for v in nodes]),
        pinned=np.array([v["pinned"] for v in nodes], dtype=bool),
        edges=np.array([[e["i"], e["j"]] for e in edges], dtype=int) if edges else np.zeros((0, 2), dtype=int),
        stiffness=np.array([e["k"] for e in edges]),
        damping=np.array([e["c"] for e in edges]),
        rest_lengths=np.array([e["l0"] for e in edges]),
        meta=doc.get("meta", {}),
    )


def save_network(path, net: MassSpringNetwork) -> None:
    serialize.write_json(path, to_json_dict(net))


def load_network(path) -> MassSpringNetwork:
    return from_json_dict(serialize.read_json(path))
