"""Latent-space posture regulation of the full-order plant.

The controller drives the configuration q toward a target q_bar through a
two-force actuator at a single node:

    u = A^L(xi_bar) * ( grad_xi V(decode(.))(xi_bar)   feedforward
                        + alpha (xi_bar - xi)          latent spring
                        - beta pi )                    latent damping

with A = J^T G evaluated at the target encoding and A^L its left inverse.
The full state is compressed online through the encoder and its Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .autoencoder import decode, decoder_jacobian, encode, encoder_jacobian
from .errors import InvalidConfig
from .network import GravityField, mass_diagonal, potential_gradient
from .reduction import ReducedSystem, latent_mass_matrix
from .numerics import pseudo_left_inverse
from .simulate import Trajectory, simulate_full


@dataclass(frozen=True)
class ControlTask:
    """One posture-regulation problem: reach target from rest.

    gravity, when set, is the field the closed loop runs under (typically
    the condition the target configuration was recorded at); None keeps
    the reduced system's own field.
    """

    target: np.ndarray        # q_bar, full configuration
    actuated: int             # node index the force acts on
    alpha: float = 5.0
    beta: float = 2.0
    duration: float = 5.0
    gravity: "GravityField | None" = None

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise InvalidConfig("control gains must be positive")
        if self.duration <= 0:
            raise InvalidConfig("duration must be positive")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))


class LatentRegulator:
    """Stateful wrapper caching the target-side quantities of the control law.

    A and its left inverse are evaluated at the target encoding and cached;
    set recompute_input_field to re-evaluate A at the current xi each call
    (experimentation knob, off by default).
    """

    def __init__(self, rs: ReducedSystem, task: ControlTask, recompute_input_field: bool = False):
        gravity = task.gravity if task.gravity is not None else rs.gravity
        if rs.actuated != task.actuated or gravity != rs.gravity:
            rs = ReducedSystem(
                net=rs.net, gravity=gravity, ae=rs.ae, actuated=task.actuated
            )
        self.rs = rs
        self.task = task
        self.recompute_input_field = recompute_input_field
        self.xi_bar = encode(rs.ae, task.target)
        jac_bar = decoder_jacobian(rs.ae, self.xi_bar)
        base = rs.net.dof_of(task.actuated)
        self._a_bar = jac_bar[base : base + 2, :].T
        self._a_left = pseudo_left_inverse(self._a_bar)
        self.feedforward = jac_bar.T @ potential_gradient(
            rs.net, rs.gravity, decode(rs.ae, self.xi_bar)
        )
        self._base = base

    def input_field(self, xi: np.ndarray) -> np.ndarray:
        if not self.recompute_input_field:
            return self._a_bar
        jac = decoder_jacobian(self.rs.ae, xi)
        return jac[self._base : self._base + 2, :].T

    def left_inverse(self, xi: np.ndarray) -> np.ndarray:
        if not self.recompute_input_field:
            return self._a_left
        return pseudo_left_inverse(self.input_field(xi))

    def compress(self, q: np.ndarray, qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xi = encode(self.rs.ae, q)
        xidot = encoder_jacobian(self.rs.ae, q) @ np.asarray(qdot, dtype=float)
        pi = latent_mass_matrix(self.rs, xi) @ xidot
        return xi, pi

    def control(self, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
        xi, pi = self.compress(q, qdot)
        bracket = (
            self.feedforward
            + self.task.alpha * (self.xi_bar - xi)
            - self.task.beta * pi
        )
        return self.left_inverse(xi) @ bracket

    def __call__(self, t: float, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
        return self.control(q, qdot)


def compute_control(
    rs: ReducedSystem, task: ControlTask, q: np.ndarray, qdot: np.ndarray
) -> np.ndarray:
    """One-shot control evaluation (builds the regulator cache each call)."""
    return LatentRegulator(rs, task).control(q, qdot)


def lyapunov_value(rs: ReducedSystem, task: ControlTask, xi: np.ndarray, pi: np.ndarray) -> float:
    """Closed-loop energy diagnostic: eta(xi, pi) + alpha ||xi_bar - xi||^2."""
    from .reduction import latent_energy

    xi_bar = encode(rs.ae, task.target)
    err = xi_bar - np.asarray(xi, dtype=float)
    return latent_energy(rs, xi, pi) + task.alpha * float(err @ err)


@dataclass
class ControlLog:
    """Per-sample record of one closed-loop regulation run."""

    times: np.ndarray       # (S,)
    mse_norm: np.ndarray    # (S,) ||q - q_bar||^2 / n
    lyapunov: np.ndarray    # (S,)
    inputs: np.ndarray      # (S, 2)
    xis: np.ndarray         # (S, m)
    xi_bar: np.ndarray      # (m,)
    pis: np.ndarray         # (S, m)
    task: ControlTask | None = None
    trajectory: Trajectory | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.shape[0]

    def latent_errors(self) -> np.ndarray:
        return np.linalg.norm(self.xis - self.xi_bar[None, :], axis=1)


def run_regulation(
    rs: ReducedSystem,
    task: ControlTask,
    dt: float = 1e-3,
    sample_dt: float = 0.02,
    q0: np.ndarray | None = None,
    recompute_input_field: bool = False,
    u_max: float | None = None,
) -> ControlLog:
    """Close the loop around the full-order plant, starting from rest.

    The regulator is evaluated once per integration step (zero-order hold).
    u_max optionally clamps each input component; off by default since the
    feedforward can legitimately be large.
    """
    regulator = LatentRegulator(rs, task, recompute_input_field=recompute_input_field)
    rs = regulator.rs  # carries the task's gravity and actuated node
    net, grav = rs.net, rs.gravity
    if q0 is None:
        q0 = net.rest_configuration()
    p0 = np.zeros(net.n_dof)

    if u_max is None:
        controller = regulator
    else:
        def controller(t, q, qdot):
            return np.clip(regulator(t, q, qdot), -u_max, u_max)

    traj = simulate_full(
        net,
        grav,
        q0,
        p0,
        duration=task.duration,
        dt=dt,
        sample_dt=sample_dt,
        controller=controller,
        actuated=task.actuated,
    )

    s = len(traj)
    n = net.n_dof
    m = rs.latent_dim
    m_diag = mass_diagonal(net)
    mse = np.zeros(s)
    lyap = np.zeros(s)
    xis = np.zeros((s, m))
    pis = np.zeros((s, m))
    from .reduction import latent_energy

    for k in range(s):
        q, p = traj.qs[k], traj.ps[k]
        xi, pi = regulator.compress(q, p / m_diag)
        xis[k], pis[k] = xi, pi
        err = q - task.target
        mse[k] = float(err @ err) / n
        lerr = regulator.xi_bar - xi
        lyap[k] = latent_energy(rs, xi, pi) + task.alpha * float(lerr @ lerr)

    return ControlLog(
        times=traj.times.copy(),
        mse_norm=mse,
        lyapunov=lyap,
        inputs=traj.inputs.copy(),
        xis=xis,
        xi_bar=regulator.xi_bar.copy(),
        pis=pis,
        task=task,
        trajectory=traj,
        meta={"dt": dt, "alpha": task.alpha, "beta": task.beta},
    )


def sample_control_tasks(
    configurations: np.ndarray,
    candidate_nodes: list[int],
    n_tasks: int,
    seed: int,
    alpha: float = 5.0,
    beta: float = 2.0,
    duration: float = 5.0,
    gravities: "list[GravityField] | None" = None,
) -> list[ControlTask]:
    """Deterministically pair targets from a dataset with actuation candidates.

    gravities, when given, supplies the per-row gravity condition the
    target was recorded under; each task then runs under it.
    """
    configurations = np.asarray(configurations, dtype=float)
    if configurations.shape[0] == 0 or not candidate_nodes:
        raise InvalidConfig("need a non-empty dataset and candidate list")
    if gravities is not None and len(gravities) != configurations.shape[0]:
        raise InvalidConfig("gravities must pair with configurations row by row")
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, configurations.shape[0], size=n_tasks)
    nodes = rng.integers(0, len(candidate_nodes), size=n_tasks)
    return [
        ControlTask(
            target=configurations[r],
            actuated=candidate_nodes[int(a)],
            alpha=alpha,
            beta=beta,
            duration=duration,
            gravity=gravities[r] if gravities is not None else None,
        )
        for r, a in zip(rows.tolist(), nodes.tolist())
    ]


def dataset_targets(datasets, protocol) -> tuple[np.ndarray, list[GravityField]]:
    """Pool configurations and their source gravity conditions for task sampling."""
    conditions = list(protocol.train_conditions) + protocol.sample_test_conditions()
    configs = []
    gravities = []
    for ds in datasets:
        configs.append(ds.configurations)
        for sim_id, _ in ds.source:
            g, theta = conditions[sim_id]
            gravities.append(GravityField(g=g, theta=theta))
    return np.concatenate(configs, axis=0), gravities


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_control_log(path, log: ControlLog) -> None:
    """CSV `t,mse_norm,lyapunov,u_x,u_y,xi_*,xibar_*`."""
    m = log.xis.shape[1]
    header = (
        ["t", "mse_norm", "lyapunov", "u_x", "u_y"]
        + [f"xi_{i}" for i in range(m)]
        + [f"xibar_{i}" for i in range(m)]
    )
    xibar = np.tile(log.xi_bar, (len(log), 1))
    rows = np.column_stack([log.times, log.mse_norm, log.lyapunov, log.inputs, log.xis, xibar])
    serialize.write_csv(path, header, rows)


def quartile_summary(logs: list[ControlLog]) -> dict:
    """Across-task quartiles of the normalized posture error per time step."""
    times = logs[0].times
    errors = np.stack([log.mse_norm for log in logs])
    from .evaluate import nearest_rank_percentile

    q25 = [nearest_rank_percentile(errors[:, k], 25.0) for k in range(errors.shape[1])]
    q50 = [nearest_rank_percentile(errors[:, k], 50.0) for k in range(errors.shape[1])]
    q75 = [nearest_rank_percentile(errors[:, k], 75.0) for k in range(errors.shape[1])]
    final_latent = [float(log.latent_errors()[-1]) for log in logs]
    initial_latent = [float(log.latent_errors()[0]) for log in logs]
    return {
        "n_tasks": len(logs),
        "times": times.tolist(),
        "mse_q25": q25,
        "mse_q50": q50,
        "mse_q75": q75,
        "final_latent_error": final_latent,
        "initial_latent_error": initial_latent,
    }
