"""Full-order simulation of the dissipative Hamiltonian dynamics.

The state is (q, p) over the free DOF. Dynamics:

    q' = M^-1 p
    p' = -D(q) M^-1 p - grad V(q) + G u

integrated with fixed-step RK4. A controller callback, when given, is
evaluated once per integration step and held constant through the RK4
stages (zero-order hold).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import serialize
from .errors import DimensionMismatch, NumericalBlowup, RejectionExhausted
from .network import (
    GravityField,
    MassSpringNetwork,
    actuation_matrix,
    damping_force,
    hamiltonian,
    mass_diagonal,
    potential_gradient,
)

# State norms beyond this abort the run: the configuration has left any
# physically meaningful region and NaNs are imminent.
BLOWUP_NORM = 1e8

Controller = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FullState:
    q: np.ndarray
    p: np.ndarray
    t: float


@dataclass
class Trajectory:
    """Uniformly sampled (q, p) record of one simulation."""

    times: np.ndarray    # (S,)
    qs: np.ndarray       # (S, n)
    ps: np.ndarray       # (S, n)
    sample_dt: float
    gravity: GravityField
    inputs: np.ndarray | None = None  # (S, 2) controller samples, when present
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def n_dof(self) -> int:
        return self.qs.shape[1]

    def state(self, k: int) -> FullState:
        return FullState(q=self.qs[k], p=self.ps[k], t=float(self.times[k]))

    def velocities(self, net: MassSpringNetwork) -> np.ndarray:
        return self.ps / mass_diagonal(net)[None, :]

    def energies(self, net: MassSpringNetwork) -> np.ndarray:
        return np.array(
            [hamiltonian(net, self.gravity, self.qs[k], self.ps[k]) for k in range(len(self))]
        )


def full_rhs(
    net: MassSpringNetwork,
    grav: GravityField,
    state: FullState,
    u: np.ndarray | None = None,
    actuated: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative (q', p') of the full-order dynamics."""
    if (u is None) != (actuated is None):
        raise DimensionMismatch("u and actuated index must be supplied together")
    qdot = state.p / mass_diagonal(net)
    pdot = -damping_force(net, state.q, qdot) - potential_gradient(net, grav, state.q)
    if u is not None:
        base = net.dof_of(actuated)
        u = np.asarray(u, dtype=float)
        if u.shape != (2,):
            raise DimensionMismatch(f"u has shape {u.shape}, expected (2,)")
        pdot[base] += u[0]
        pdot[base + 1] += u[1]
    return qdot, pdot


def _sample_counts(duration: float, dt: float, sample_dt: float) -> tuple[int, int]:
    if duration <= 0:
        raise ValueError("duration must be positive")
    if dt <= 0 or dt > sample_dt:
        raise ValueError("need 0 < dt <= sample_dt")
    per_sample = round(sample_dt / dt)
    if abs(per_sample * dt - sample_dt) > 1e-9 * sample_dt:
        raise ValueError("sample_dt must be an integer multiple of dt")
    n_samples = round(duration / sample_dt)
    if abs(n_samples * sample_dt - duration) > 1e-9 * duration:
        raise ValueError("duration must be an integer multiple of sample_dt")
    return n_samples, per_sample


def simulate_full(
    net: MassSpringNetwork,
    grav: GravityField,
    q0: np.ndarray,
    p0: np.ndarray,
    duration: float,
    dt: float = 1e-3,
    sample_dt: float = 0.02,
    controller: Controller | None = None,
    actuated: int | None = None,
) -> Trajectory:
    """Integrate the full dynamics and record samples every sample_dt.

    The controller callback (t, q, qdot) -> u in R^2 is evaluated once per
    dt step; actuated names the node the force acts on.
    """
    n_samples, per_sample = _sample_counts(duration, dt, sample_dt)
    n = net.n_dof
    q = np.asarray(q0, dtype=float).copy()
    p = np.asarray(p0, dtype=float).copy()
    if q.shape != (n,) or p.shape != (n,):
        raise DimensionMismatch(f"state shapes {q.shape}, {p.shape}, expected ({n},)")
    if controller is not None and actuated is None:
        raise DimensionMismatch("controller requires an actuated node index")

    m_diag = mass_diagonal(net)
    base = net.dof_of(actuated) if actuated is not None else -1

    times = np.zeros(n_samples + 1)
    qs = np.zeros((n_samples + 1, n))
    ps = np.zeros((n_samples + 1, n))
    inputs = np.zeros((n_samples + 1, 2)) if controller is not None else None
    qs[0], ps[0] = q, p

    y = np.concatenate([q, p])
    u_hold = np.zeros(2)

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        qq, pp = state[:n], state[n:]
        qdot = pp / m_diag
        pdot = -damping_force(net, qq, qdot) - potential_gradient(net, grav, qq)
        if controller is not None:
            pdot[base] += u_hold[0]
            pdot[base + 1] += u_hold[1]
        return np.concatenate([qdot, pdot])

    step = 0
    for k in range(1, n_samples + 1):
        for i in range(per_sample):
            t = step * dt
            if controller is not None:
                u_hold[:] = controller(t, y[:n], y[n:] / m_diag)
                if i == 0:
                    inputs[k - 1] = u_hold
            y = _rk4(rhs, y, t, dt)
            step += 1
            if not np.all(np.isfinite(y)) or np.linalg.norm(y) > BLOWUP_NORM:
                raise NumericalBlowup(
                    f"state norm exceeded {BLOWUP_NORM:.0e} at t={step * dt:.4f} s; "
                    "try a smaller dt"
                )
        times[k] = k * sample_dt
        qs[k], ps[k] = y[:n], y[n:]
    if controller is not None:
        inputs[n_samples] = controller(n_samples * sample_dt, y[:n], y[n:] / m_diag)

    return Trajectory(
        times=times,
        qs=qs,
        ps=ps,
        sample_dt=sample_dt,
        gravity=grav,
        inputs=inputs,
        meta={"dt": dt, "duration": duration},
    )


def _rk4(f, y, t, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def random_initial_configuration(
    net: MassSpringNetwork,
    seed: int,
    amplitude: float,
    max_tries: int = 100,
) -> np.ndarray:
    """Rest configuration plus a uniform perturbation per free DOF.

    Resamples (up to max_tries) whenever a perturbation shortens any spring
    below 10% of its rest length.
    """
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    rng = np.random.default_rng(seed)
    rest = net.rest_configuration()
    for _ in range(max_tries):
        q = rest + rng.uniform(-amplitude, amplitude, size=rest.shape)
        pos = net.positions(q)
        lengths = np.sqrt(
            np.sum((pos[net.edges[:, 0]] - pos[net.edges[:, 1]]) ** 2, axis=1)
        )
        if np.all(lengths >= 0.1 * net.rest_lengths):
            return q
    raise RejectionExhausted(
        f"no valid configuration within {max_tries} tries at amplitude {amplitude}"
    )


# ---------------------------------------------------------------------------
# Persistence: CSV of samples plus JSON sidecar
# ---------------------------------------------------------------------------

def save_trajectory(path, traj: Trajectory, network_path=None) -> None:
    """Write `t,q_0..q_{n-1},p_0..p_{n-1}` rows plus a JSON sidecar."""
    n = traj.n_dof
    header = (
        ["t"]
        + [f"q_{i}" for i in range(n)]
        + [f"p_{i}" for i in range(n)]
    )
    rows = np.column_stack([traj.times, traj.qs, traj.ps])
    serialize.write_csv(path, header, rows)
    sidecar = {
        "g": traj.gravity.g,
        "theta": traj.gravity.theta,
        "dt": traj.meta.get("dt"),
        "sample_dt": traj.sample_dt,
        "network_sha256": serialize.file_sha256(network_path) if network_path else None,
    }
    serialize.write_json(str(path) + ".json", sidecar)


def load_trajectory(path) -> Trajectory:
    header, data = serialize.read_csv(path)
    n = (len(header) - 1) // 2
    sidecar = serialize.read_json(str(path) + ".json")
    grav = GravityField(g=sidecar["g"], theta=sidecar["theta"])
    return Trajectory(
        times=data[:, 0],
        qs=data[:, 1 : 1 + n],
        ps=data[:, 1 + n :],
        sample_dt=float(sidecar["sample_dt"]),
        gravity=grav,
        meta={"dt": sidecar.get("dt")},
    )
