"""Metrics and experiment drivers: pointwise vs. compressed reconstruction,
compression sweeps, noise robustness, and latent-variable alteration.

Percentiles are exact nearest-rank (index ceil(p/100 * N) - 1 of the
sorted values), so reports reproduce bit for bit. Reconstruction errors
are emitted both as totals (sum of squares) and per DOF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import serialize
from .autoencoder import MlpAutoencoder, dataset_mse, decode, encode, reconstruct
from .errors import InvalidConfig
from .network import hamiltonian, mass_diagonal
from .reduction import (
    ReducedSystem,
    pointwise_compress,
    reconstruct_trajectory,
    simulate_reduced,
)
from .simulate import Trajectory


def nearest_rank_percentile(values, p: float) -> float:
    """Exact nearest-rank percentile: sorted value at index ceil(p/100*N)-1."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise InvalidConfig("cannot take a percentile of no values")
    if not 0.0 < p <= 100.0:
        raise InvalidConfig(f"percentile must be in (0, 100], got {p}")
    rank = math.ceil(p / 100.0 * values.size)
    return float(values[rank - 1])


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks on ties."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    rx, ry = _average_ranks(xs), _average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return 0.0
    return float(rx @ ry) / denom


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=float)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


@dataclass
class MetricBand:
    """Per-time-step median and 20-80 percentile band of one error metric."""

    median: np.ndarray
    p20: np.ndarray
    p80: np.ndarray

    def __post_init__(self):
        if np.any(self.p20 > self.median) or np.any(self.median > self.p80):
            raise InvalidConfig("percentile bands must be ordered p20 <= median <= p80")


@dataclass
class EvalReport:
    """Per-step error bands for one evaluation mode plus scalar summaries."""

    times: np.ndarray
    mode: str                                # pointwise | compressed
    bands: dict[str, MetricBand]             # keys like q, q_total, qdot, energy
    per_trajectory: dict[str, np.ndarray]    # (T, S) raw error curves
    summary: dict = field(default_factory=dict)


def _band(errors: np.ndarray) -> MetricBand:
    s = errors.shape[1]
    med = np.array([nearest_rank_percentile(errors[:, k], 50.0) for k in range(s)])
    p20 = np.array([nearest_rank_percentile(errors[:, k], 20.0) for k in range(s)])
    p80 = np.array([nearest_rank_percentile(errors[:, k], 80.0) for k in range(s)])
    return MetricBand(median=med, p20=p20, p80=p80)


def _assemble_report(
    mode: str,
    times: np.ndarray,
    q_err: np.ndarray,
    qdot_err: np.ndarray,
    energy_err: np.ndarray,
    rel_total: list[float],
    n_dof: int,
) -> EvalReport:
    bands = {
        "q": _band(q_err / n_dof),
        "q_total": _band(q_err),
        "qdot": _band(qdot_err / n_dof),
        "qdot_total": _band(qdot_err),
        "energy": _band(energy_err),
    }
    per_traj = {"q_total": q_err, "qdot_total": qdot_err, "energy": energy_err}
    summary = {
        "mode": mode,
        "n_trajectories": int(q_err.shape[0]),
        "mean_mse_q": float(np.mean(q_err) / n_dof),
        "mean_mse_qdot": float(np.mean(qdot_err) / n_dof),
        "mean_mse_energy": float(np.mean(energy_err)),
        "median_relative_total_error": nearest_rank_percentile(rel_total, 50.0),
        "relative_total_error_per_trajectory": [float(x) for x in rel_total],
    }
    return EvalReport(
        times=times, mode=mode, bands=bands, per_trajectory=per_traj, summary=summary
    )


def _relative_total_error(qs: np.ndarray, q_rec: np.ndarray, q_rest: np.ndarray) -> float:
    """Time-averaged ||q_rec - q|| / ||q - q_rest||, skipping near-rest frames."""
    num = np.linalg.norm(q_rec - qs, axis=1)
    den = np.linalg.norm(qs - q_rest[None, :], axis=1)
    ok = den > 1e-12
    if not np.any(ok):
        return 0.0
    return float(np.mean(num[ok] / den[ok]))


def evaluate_pointwise(rs: ReducedSystem, trajectories: list[Trajectory]) -> EvalReport:
    """Score decode(encode(q)) frame by frame against the ground truth."""
    _check_alignment(trajectories)
    n = rs.net.n_dof
    m_diag = mass_diagonal(rs.net)
    q_rest = rs.net.rest_configuration()
    s = len(trajectories[0])
    q_err = np.zeros((len(trajectories), s))
    qdot_err = np.zeros_like(q_err)
    energy_err = np.zeros_like(q_err)
    rel_total = []
    for ti, traj in enumerate(trajectories):
        rs_t = replace(rs, gravity=traj.gravity)
        q_recs = np.zeros((s, n))
        for k in range(s):
            q, p = traj.qs[k], traj.ps[k]
            qdot = p / m_diag
            res = pointwise_compress(rs_t, q, qdot)
            q_recs[k] = res.q_rec
            q_err[ti, k] = float(np.sum((res.q_rec - q) ** 2))
            qdot_err[ti, k] = float(np.sum((res.qdot_rec - qdot) ** 2))
            h = hamiltonian(rs.net, traj.gravity, q, p)
            energy_err[ti, k] = (res.energy - h) ** 2
        rel_total.append(_relative_total_error(traj.qs, q_recs, q_rest))
    return _assemble_report(
        "pointwise", trajectories[0].times, q_err, qdot_err, energy_err, rel_total, n
    )


def evaluate_compressed(rs: ReducedSystem, trajectories: list[Trajectory]) -> EvalReport:
    """Integrate the reduced dynamics from each trajectory's rest start and
    score the reconstruction per step."""
    _check_alignment(trajectories)
    n = rs.net.n_dof
    m_diag = mass_diagonal(rs.net)
    q_rest = rs.net.rest_configuration()
    s = len(trajectories[0])
    q_err = np.zeros((len(trajectories), s))
    qdot_err = np.zeros_like(q_err)
    energy_err = np.zeros_like(q_err)
    rel_total = []
    for ti, traj in enumerate(trajectories):
        rs_t = replace(rs, gravity=traj.gravity)
        dt = traj.meta.get("dt") or traj.sample_dt
        duration = float(traj.times[-1])
        xi0 = encode(rs.ae, traj.qs[0])
        latent = simulate_reduced(
            rs_t,
            xi0,
            np.zeros(rs.latent_dim),
            duration=duration,
            dt=dt,
            sample_dt=traj.sample_dt,
        )
        rec, etas = reconstruct_trajectory(rs_t, latent)
        vel_true = traj.ps / m_diag[None, :]
        vel_rec = rec.ps / m_diag[None, :]
        q_err[ti] = np.sum((rec.qs - traj.qs) ** 2, axis=1)
        qdot_err[ti] = np.sum((vel_rec - vel_true) ** 2, axis=1)
        hs = traj.energies(rs.net)
        energy_err[ti] = (etas - hs) ** 2
        rel_total.append(_relative_total_error(traj.qs, rec.qs, q_rest))
    return _assemble_report(
        "compressed", trajectories[0].times, q_err, qdot_err, energy_err, rel_total, n
    )


def _check_alignment(trajectories: list[Trajectory]) -> None:
    if not trajectories:
        raise InvalidConfig("need at least one trajectory")
    s = len(trajectories[0])
    if any(len(t) != s for t in trajectories):
        raise InvalidConfig("trajectories must share the sampling grid")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def compression_sweep(
    train_fn: Callable[[int], MlpAutoencoder],
    test_configs: np.ndarray,
    sizes: list[int],
) -> tuple[list[dict], dict[int, MlpAutoencoder]]:
    """Train one autoencoder per latent size and tabulate its test MSE."""
    if any(m < 1 for m in sizes):
        raise InvalidConfig("latent sizes must be >= 1")
    table = []
    models: dict[int, MlpAutoencoder] = {}
    for m in sizes:
        ae = train_fn(m)
        models[m] = ae
        table.append(
            {
                "latent_dim": m,
                "test_mse": dataset_mse(ae, test_configs),
                "test_mse_per_dof": dataset_mse(ae, test_configs) / test_configs.shape[1],
            }
        )
    return table, models


def noise_robustness(
    ae: MlpAutoencoder,
    test_configs: np.ndarray,
    sigmas: list[float],
    seed: int,
) -> list[dict]:
    """Average ||q - decode(encode(q + noise))||^2 per noise level."""
    test_configs = np.asarray(test_configs, dtype=float)
    if any(s < 0 for s in sigmas):
        raise InvalidConfig("noise levels must be >= 0")
    rng = np.random.default_rng(seed)
    table = []
    for sigma in sigmas:
        noisy = test_configs + rng.normal(0.0, 1.0, size=test_configs.shape) * sigma
        rec = reconstruct(ae, noisy)
        mse = float(np.mean(np.sum((test_configs - rec) ** 2, axis=1)))
        table.append({"sigma": float(sigma), "mse": mse})
    return table


DEFAULT_ALTERATION_FRACTIONS = (0.07, 0.14, 0.21)


def latent_sweep(
    ae: MlpAutoencoder,
    base_configs: np.ndarray,
    all_configs: np.ndarray,
    fractions: tuple[float, ...] = DEFAULT_ALTERATION_FRACTIONS,
) -> dict:
    """Alter one latent variable at a time and decode the result.

    Per-variable ranges come from the latent encodings of all available
    configurations; each base configuration yields, per latent variable,
    2 * len(fractions) decoded alterations (both directions).
    """
    base_configs = np.atleast_2d(np.asarray(base_configs, dtype=float))
    latents_all = encode(ae, np.asarray(all_configs, dtype=float))
    ranges = latents_all.max(axis=0) - latents_all.min(axis=0)
    m = ae.latent_dim
    entries = []
    for b, q in enumerate(base_configs):
        xi = encode(ae, q)
        base_rec = decode(ae, xi)
        alts = np.zeros((m, 2 * len(fractions), q.shape[0]))
        deltas = np.zeros((m, 2 * len(fractions)))
        for i in range(m):
            for fi, frac in enumerate(fractions):
                for di, sign in enumerate((-1.0, 1.0)):
                    xi_alt = xi.copy()
                    xi_alt[i] += sign * frac * ranges[i]
                    alts[i, 2 * fi + di] = decode(ae, xi_alt)
                    deltas[i, 2 * fi + di] = sign * frac * ranges[i]
        entries.append(
            {
                "base_index": b,
                "latent": xi,
                "base_reconstruction": base_rec,
                "alterations": alts,
                "deltas": deltas,
            }
        )
    return {"ranges": ranges, "fractions": list(fractions), "entries": entries}


# ---------------------------------------------------------------------------
# Report persistence: CSV curves + JSON summary, named {system}_{mode}_{metric}
# ---------------------------------------------------------------------------

def save_report(out_dir, system: str, report: EvalReport) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric, band in report.bands.items():
        path = out_dir / f"{system}_{report.mode}_{metric}.csv"
        serialize.write_csv(
            path,
            ["t", "median", "p20", "p80"],
            np.column_stack([report.times, band.median, band.p20, band.p80]),
        )
        written.append(path)
    summary_path = out_dir / f"{system}_{report.mode}_summary.json"
    serialize.write_json(summary_path, report.summary)
    written.append(summary_path)
    return written
