"""Latent Hamiltonian system assembled from a trained decoder.

The decoder pulls the full-order quantities back into the latent space:

    V_lat(xi)  = V(decode(xi))
    M_lat(xi)  = J^T M J                 (J the decoder Jacobian at xi)
    Gamma(xi)  = J^T G
    Delta(xi)  = J^T D(decode(xi)) J

and the reduced dynamics read

    xi' = M_lat^-1 pi
    pi' = -grad_xi eta + Gamma u - Delta xi'

with eta = 0.5 pi^T M_lat^-1 pi + V_lat. The dissipation enters in the
sandwich form acting on xi', which is the unique choice that keeps the
latent power balance eta' = -xi'^T Delta xi' <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .autoencoder import (
    MlpAutoencoder,
    decode,
    decoder_bundle,
    decoder_jacobian,
    encode,
    encoder_jacobian,
)
from .errors import DimensionMismatch, NumericalBlowup, RankDeficientJacobian, NotSPD
from .network import (
    GravityField,
    MassSpringNetwork,
    damping_force,
    damping_matrix,
    hamiltonian,
    mass_diagonal,
    potential_energy,
    potential_gradient,
)
from .numerics import cholesky_factor
from .simulate import Trajectory, _sample_counts, _rk4
from scipy.linalg import solve_triangular

BLOWUP_NORM = 1e8


@dataclass(frozen=True)
class LatentState:
    xi: np.ndarray
    pi: np.ndarray
    t: float


@dataclass(frozen=True)
class ReducedSystem:
    net: MassSpringNetwork
    gravity: GravityField
    ae: MlpAutoencoder
    actuated: int | None = None

    def __post_init__(self):
        if self.ae.input_dim != self.net.n_dof:
            raise DimensionMismatch(
                f"decoder output dim {self.ae.input_dim} != network dof {self.net.n_dof}"
            )
        if self.actuated is not None:
            self.net.dof_of(self.actuated)  # validates index and pin state

    @property
    def latent_dim(self) -> int:
        return self.ae.latent_dim


def _latent_mass_solve(m_lat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M_lat x = rhs, converting factorization failures to rank errors."""
    try:
        factor = cholesky_factor(m_lat)
    except NotSPD as err:
        raise RankDeficientJacobian(
            "latent mass matrix is not positive definite; decoder Jacobian lost rank"
        ) from err
    y = solve_triangular(factor, rhs, lower=True)
    return solve_triangular(factor.T, y, lower=False)


def latent_potential(rs: ReducedSystem, xi: np.ndarray) -> float:
    """Compressed potential V(decode(xi))."""
    return potential_energy(rs.net, rs.gravity, decode(rs.ae, xi))


def latent_mass_matrix(rs: ReducedSystem, xi: np.ndarray) -> np.ndarray:
    """Pullback inertia J^T M J, symmetrized against rounding skew."""
    jac = decoder_jacobian(rs.ae, xi)
    m_lat = jac.T @ (mass_diagonal(rs.net)[:, None] * jac)
    return 0.5 * (m_lat + m_lat.T)


def latent_energy(rs: ReducedSystem, xi: np.ndarray, pi: np.ndarray) -> float:
    """Latent Hamiltonian 0.5 pi^T M_lat^-1 pi + V_lat(xi)."""
    pi = np.asarray(pi, dtype=float)
    m_lat = latent_mass_matrix(rs, xi)
    kinetic = 0.5 * float(pi @ _latent_mass_solve(m_lat, pi))
    return kinetic + latent_potential(rs, xi)


def latent_energy_gradient_xi(rs: ReducedSystem, xi: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Analytic grad_xi of the latent energy.

    Potential part: J^T grad_q V. Kinetic part per component k:
    -0.5 pi^T M_lat^-1 (dM_lat/dxi_k) M_lat^-1 pi, assembled from the
    directional derivatives of the decoder Jacobian.
    """
    pi = np.asarray(pi, dtype=float)
    q, jac, djac = decoder_bundle(rs.ae, xi)
    m_diag = mass_diagonal(rs.net)
    m_lat = jac.T @ (m_diag[:, None] * jac)
    m_lat = 0.5 * (m_lat + m_lat.T)
    grad_v = potential_gradient(rs.net, rs.gravity, q)
    grad = jac.T @ grad_v
    if np.any(pi):
        w = _latent_mass_solve(m_lat, pi)
        jw = jac @ w
        dw = np.einsum("nmk,m->nk", djac, w)
        grad -= dw.T @ (m_diag * jw)
    return grad


def latent_dissipation(rs: ReducedSystem, xi: np.ndarray) -> np.ndarray:
    """Sandwich dissipation J^T D(decode(xi)) J; symmetric PSD."""
    q = decode(rs.ae, xi)
    jac = decoder_jacobian(rs.ae, xi)
    return jac.T @ damping_matrix(rs.net, q) @ jac


def latent_input_field(rs: ReducedSystem, xi: np.ndarray) -> np.ndarray:
    """Input field J^T G: the actuated node's Jacobian rows, transposed."""
    if rs.actuated is None:
        raise DimensionMismatch("reduced system has no actuated node")
    jac = decoder_jacobian(rs.ae, xi)
    base = rs.net.dof_of(rs.actuated)
    return jac[base : base + 2, :].T


def reduced_rhs(
    rs: ReducedSystem, state: LatentState, u: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative (xi', pi') of the reduced dynamics."""
    xi = np.asarray(state.xi, dtype=float)
    pi = np.asarray(state.pi, dtype=float)
    q, jac, djac = decoder_bundle(rs.ae, xi)
    m_diag = mass_diagonal(rs.net)
    m_lat = jac.T @ (m_diag[:, None] * jac)
    m_lat = 0.5 * (m_lat + m_lat.T)
    xidot = _latent_mass_solve(m_lat, pi)

    grad = jac.T @ potential_gradient(rs.net, rs.gravity, q)
    if np.any(pi):
        jw = jac @ xidot
        dw = np.einsum("nmk,m->nk", djac, xidot)
        grad -= dw.T @ (m_diag * jw)

    pidot = -grad - jac.T @ damping_force(rs.net, q, jac @ xidot)
    if u is not None:
        if rs.actuated is None:
            raise DimensionMismatch("input supplied but no actuated node configured")
        base = rs.net.dof_of(rs.actuated)
        u = np.asarray(u, dtype=float)
        pidot += jac[base : base + 2, :].T @ u
    return xidot, pidot


@dataclass
class LatentTrajectory:
    """Uniformly sampled (xi, pi) record with the latent energy per sample."""

    times: np.ndarray   # (S,)
    xis: np.ndarray     # (S, m)
    pis: np.ndarray     # (S, m)
    etas: np.ndarray    # (S,)
    sample_dt: float
    gravity: GravityField
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.xis.shape[1]


def simulate_reduced(
    rs: ReducedSystem,
    xi0: np.ndarray,
    pi0: np.ndarray,
    duration: float,
    dt: float = 1e-3,
    sample_dt: float = 0.02,
    controller=None,
) -> LatentTrajectory:
    """Integrate the reduced dynamics with RK4, sampling every sample_dt.

    The controller callback (t, xi, pi) -> u in R^2, when given, is held
    constant through each dt step.
    """
    n_samples, per_sample = _sample_counts(duration, dt, sample_dt)
    m = rs.latent_dim
    xi = np.asarray(xi0, dtype=float).copy()
    pi = np.asarray(pi0, dtype=float).copy()
    if xi.shape != (m,) or pi.shape != (m,):
        raise DimensionMismatch(f"latent state shapes {xi.shape}, {pi.shape}, expected ({m},)")
    if controller is not None and rs.actuated is None:
        raise DimensionMismatch("controller requires an actuated node")

    times = np.zeros(n_samples + 1)
    xis = np.zeros((n_samples + 1, m))
    pis = np.zeros((n_samples + 1, m))
    xis[0], pis[0] = xi, pi

    y = np.concatenate([xi, pi])
    u_hold = np.zeros(2)
    use_u = controller is not None

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        xidot, pidot = reduced_rhs(
            rs,
            LatentState(xi=state[:m], pi=state[m:], t=t),
            u=u_hold if use_u else None,
        )
        return np.concatenate([xidot, pidot])

    step = 0
    for k in range(1, n_samples + 1):
        for _ in range(per_sample):
            t = step * dt
            if use_u:
                u_hold[:] = controller(t, y[:m], y[m:])
            y = _rk4(rhs, y, t, dt)
            step += 1
            if not np.all(np.isfinite(y)) or np.linalg.norm(y) > BLOWUP_NORM:
                raise NumericalBlowup(
                    f"latent state norm exceeded {BLOWUP_NORM:.0e} at t={step * dt:.4f} s"
                )
        times[k] = k * sample_dt
        xis[k], pis[k] = y[:m], y[m:]

    etas = np.array([latent_energy(rs, xis[k], pis[k]) for k in range(n_samples + 1)])
    return LatentTrajectory(
        times=times,
        xis=xis,
        pis=pis,
        etas=etas,
        sample_dt=sample_dt,
        gravity=rs.gravity,
        meta={"dt": dt, "duration": duration},
    )


# ---------------------------------------------------------------------------
# Compression and reconstruction maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseResult:
    xi: np.ndarray
    xidot: np.ndarray
    q_rec: np.ndarray
    qdot_rec: np.ndarray
    energy: float


def compress_state(rs: ReducedSystem, q: np.ndarray, qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(xi, pi) of a full state: xi = encode(q), pi = M_lat * (grad E) qdot."""
    xi = encode(rs.ae, q)
    xidot = encoder_jacobian(rs.ae, q) @ np.asarray(qdot, dtype=float)
    pi = latent_mass_matrix(rs, xi) @ xidot
    return xi, pi


def pointwise_compress(rs: ReducedSystem, q: np.ndarray, qdot: np.ndarray) -> PointwiseResult:
    """Push one full state through the autoencoder end to end."""
    qdot = np.asarray(qdot, dtype=float)
    xi = encode(rs.ae, q)
    xidot = encoder_jacobian(rs.ae, q) @ qdot
    q_rec, jac, _ = decoder_bundle(rs.ae, xi)
    qdot_rec = jac @ xidot
    m_lat = jac.T @ (mass_diagonal(rs.net)[:, None] * jac)
    m_lat = 0.5 * (m_lat + m_lat.T)
    pi = m_lat @ xidot
    kinetic = 0.5 * float(pi @ _latent_mass_solve(m_lat, pi))
    energy = kinetic + potential_energy(rs.net, rs.gravity, q_rec)
    return PointwiseResult(xi=xi, xidot=xidot, q_rec=q_rec, qdot_rec=qdot_rec, energy=energy)


def reconstruct_trajectory(rs: ReducedSystem, latent: LatentTrajectory) -> tuple[Trajectory, np.ndarray]:
    """Decode a latent trajectory into full-space samples plus its energies.

    The reconstructed momenta are M * J * xi', consistent with the velocity
    reconstruction qdot = J xi'.
    """
    s = len(latent)
    n = rs.net.n_dof
    qs = np.zeros((s, n))
    ps = np.zeros((s, n))
    m_diag = mass_diagonal(rs.net)
    for k in range(s):
        q, jac, _ = decoder_bundle(rs.ae, latent.xis[k])
        m_lat = jac.T @ (m_diag[:, None] * jac)
        m_lat = 0.5 * (m_lat + m_lat.T)
        xidot = _latent_mass_solve(m_lat, latent.pis[k])
        qs[k] = q
        ps[k] = m_diag * (jac @ xidot)
    traj = Trajectory(
        times=latent.times.copy(),
        qs=qs,
        ps=ps,
        sample_dt=latent.sample_dt,
        gravity=latent.gravity,
        meta=dict(latent.meta),
    )
    return traj, latent.etas.copy()


def full_energy(rs: ReducedSystem, q: np.ndarray, p: np.ndarray) -> float:
    return hamiltonian(rs.net, rs.gravity, q, p)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_latent_trajectory(path, latent: LatentTrajectory) -> None:
    """CSV `t,xi_0..,pi_0..,eta` with 17-significant-digit values."""
    m = latent.latent_dim
    header = (
        ["t"]
        + [f"xi_{i}" for i in range(m)]
        + [f"pi_{i}" for i in range(m)]
        + ["eta"]
    )
    rows = np.column_stack([latent.times, latent.xis, latent.pis, latent.etas])
    serialize.write_csv(path, header, rows)


def load_latent_trajectory(path, gravity: GravityField, sample_dt: float | None = None) -> LatentTrajectory:
    header, data = serialize.read_csv(path)
    m = (len(header) - 2) // 2
    times = data[:, 0]
    if sample_dt is None:
        sample_dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return LatentTrajectory(
        times=times,
        xis=data[:, 1 : 1 + m],
        pis=data[:, 1 + m : 1 + 2 * m],
        etas=data[:, 1 + 2 * m],
        sample_dt=sample_dt,
        gravity=gravity,
    )


def save_reconstruction(path, traj: Trajectory, etas: np.ndarray) -> None:
    """Full-trajectory CSV format plus an eta column."""
    n = traj.n_dof
    header = (
        ["t"]
        + [f"q_{i}" for i in range(n)]
        + [f"p_{i}" for i in range(n)]
        + ["eta"]
    )
    rows = np.column_stack([traj.times, traj.qs, traj.ps, etas])
    serialize.write_csv(path, header, rows)
