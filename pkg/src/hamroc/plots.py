"""Figure rendering for the CLI report paths.

Every function writes a PNG next to the delimited output it illustrates.
The CSV/JSON files remain the machine contract; these are for eyeballs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport
from .network import MassSpringNetwork

_BAND_ALPHA = 0.25


def plot_network(net: MassSpringNetwork, path, q: np.ndarray | None = None, title: str | None = None) -> Path:
    """Draw the network geometry; pinned nodes as squares."""
    pos = net.positions(q) if q is not None else net.rest_positions
    fig, ax = plt.subplots(figsize=(5, 6))
    for i, j in net.edges.tolist():
        ax.plot([pos[i, 0], pos[j, 0]], [pos[i, 1], pos[j, 1]], "-", color="#888888", lw=0.8, zorder=1)
    free = ~net.pinned
    ax.scatter(pos[free, 0], pos[free, 1], s=18, color="#348ABD", zorder=2, label="free")
    if net.pinned.any():
        ax.scatter(pos[net.pinned, 0], pos[net.pinned, 1], s=30, marker="s", color="#E24A33", zorder=3, label="pinned")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_eval_report(report: EvalReport, path, title: str | None = None) -> Path:
    """Median error with the 20-80 band, one panel per metric, log scale."""
    metrics = [("q", "MSE(q) per DOF"), ("qdot", "MSE(dq/dt) per DOF"), ("energy", "squared energy error")]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4), sharex=True)
    for ax, (key, label) in zip(axes, metrics):
        band = report.bands[key]
        ax.fill_between(report.times, np.maximum(band.p20, 1e-300), band.p80, alpha=_BAND_ALPHA)
        ax.plot(report.times, band.median, lw=1.5)
        ax.set_yscale("log")
        ax.set_xlabel("t [s]")
        ax.set_title(label, fontsize=10)
        ax.grid(True, alpha=0.3)
    fig.suptitle(title or f"{report.mode} evaluation", fontsize=11)
    return _save(fig, path)


def plot_energy_comparison(times, full_energy, reconstructed_energy, path, labels=("full", "reconstructed"), title=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(times, full_energy, "-", lw=1.5, label=labels[0])
    ax.plot(times, reconstructed_energy, "--", lw=1.5, label=labels[1])
    ax.set_xlabel("t [s]")
    ax.set_ylabel("energy [J]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_compression_sweep(table: list[dict], path) -> Path:
    sizes = [row["latent_dim"] for row in table]
    mses = [row["test_mse"] for row in table]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(sizes, mses, "o-")
    ax.set_yscale("log")
    ax.set_xlabel("latent size m")
    ax.set_ylabel("test MSE")
    ax.set_xticks(sizes)
    ax.grid(True, alpha=0.3)
    ax.set_title("reconstruction error vs. latent size")
    return _save(fig, path)


def plot_noise_table(table: list[dict], path) -> Path:
    sigmas = [row["sigma"] for row in table]
    mses = [row["mse"] for row in table]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(sigmas, mses, "o-")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("input noise std [m]")
    ax.set_ylabel("reconstruction MSE")
    ax.grid(True, alpha=0.3, which="both")
    ax.set_title("noise robustness")
    return _save(fig, path)


def plot_control_summary(summary: dict, path) -> Path:
    """Median normalized posture error over time with the quartile band."""
    times = np.asarray(summary["times"])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.fill_between(times, summary["mse_q25"], summary["mse_q75"], alpha=_BAND_ALPHA)
    ax.plot(times, summary["mse_q50"], lw=1.5)
    ax.set_yscale("log")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("||q - q_bar||^2 / n")
    ax.grid(True, alpha=0.3)
    ax.set_title(f"posture regulation across {summary['n_tasks']} tasks")
    return _save(fig, path)


def plot_loss_history(history: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    epochs = np.arange(1, len(history["train_mse"]) + 1)
    ax.plot(epochs, history["train_mse"], label="train")
    if history.get("valid_mse"):
        ax.plot(epochs, history["valid_mse"], label="valid")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("reconstruction MSE")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_latent_sweep(net: MassSpringNetwork, sweep: dict, path_prefix) -> list[Path]:
    """One figure per base configuration: the reconstruction against the
    decoded single-variable alterations."""
    written = []
    for entry in sweep["entries"]:
        m = entry["alterations"].shape[0]
        fig, axes = plt.subplots(1, m, figsize=(4.2 * m, 4.6), squeeze=False)
        base_pos = net.positions(entry["base_reconstruction"])
        for i in range(m):
            ax = axes[0][i]
            for alt in entry["alterations"][i]:
                pos = net.positions(alt)
                ax.scatter(pos[:, 0], pos[:, 1], s=6, alpha=0.5)
            ax.scatter(base_pos[:, 0], base_pos[:, 1], s=10, color="#E24A33", label="base")
            ax.set_aspect("equal")
            ax.set_title(f"latent variable {i}", fontsize=9)
            ax.grid(True, alpha=0.2)
        fig.suptitle(f"single-variable alterations, base {entry['base_index']}", fontsize=10)
        out = Path(f"{path_prefix}_base{entry['base_index']}.png")
        written.append(_save(fig, out))
    return written


def plot_reconstruction_frames(net, qs_true, qs_rec, times, path, n_frames: int = 4) -> Path:
    """Overlay true and reconstructed node positions at a few sample times."""
    idx = np.linspace(0, len(times) - 1, n_frames).round().astype(int)
    fig, axes = plt.subplots(1, n_frames, figsize=(3.6 * n_frames, 4.4), squeeze=False)
    for ax, k in zip(axes[0], idx):
        true_pos = net.positions(qs_true[k])
        rec_pos = net.positions(qs_rec[k])
        ax.scatter(true_pos[:, 0], true_pos[:, 1], s=12, color="#E8A33D", label="real")
        ax.scatter(rec_pos[:, 0], rec_pos[:, 1], s=12, color="#348ABD", marker="x", label="reconstructed")
        ax.set_aspect("equal")
        ax.set_title(f"t = {times[k]:.2f} s", fontsize=9)
        ax.grid(True, alpha=0.2)
    axes[0][0].legend(fontsize=8)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
