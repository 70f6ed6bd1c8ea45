"""Command-line entry point wiring the whole pipeline.

One binary, subcommand style. Every command reads an optional config file
(flags win over config values), prints the seeds and config hash it ran
with, and stamps its outputs. Report-producing commands render matplotlib
figures next to the CSV/JSON they illustrate unless --no-figures is given.

Exit codes:
  0  success
  1  unexpected internal error
  2  invalid configuration or schema violation
  3  missing input file
  4  invalid inputs (dimensions, rank, degenerate geometry, pinned node)
  5  numerical failure (instability, divergence, rejection sampling)
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, autoencoder as aem, config as cfgmod, control as ctl
from . import dataset as dsmod, evaluate as ev, network as nw, plots, reduction as red
from . import serialize, simulate as sim
from .errors import (
    DegenerateSpring,
    DimensionMismatch,
    HamrocError,
    IndexOutOfRange,
    InvalidConfig,
    NonFiniteLoss,
    NotSPD,
    NumericalBlowup,
    PinnedNode,
    RankDeficient,
    RankDeficientJacobian,
    RejectionExhausted,
)

EXIT_CODES = """exit codes:
  0  success
  1  unexpected internal error
  2  invalid configuration or schema violation
  3  missing input file
  4  invalid inputs (dimensions, rank, degenerate geometry, pinned node)
  5  numerical failure (instability, divergence, rejection sampling)
"""

_ERROR_EXIT = [
    ((InvalidConfig, json.JSONDecodeError, ValueError), 2),
    ((FileNotFoundError,), 3),
    (
        (
            DimensionMismatch,
            RankDeficient,
            RankDeficientJacobian,
            DegenerateSpring,
            IndexOutOfRange,
            PinnedNode,
            NotSPD,
        ),
        4,
    ),
    ((NumericalBlowup, RejectionExhausted, NonFiniteLoss), 5),
]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0
    try:
        run_config = (
            cfgmod.load_config(cfgmod.resolve_path(args.config))
            if args.config
            else cfgmod.RunConfig()
        )
        print(f"hamroc {args.command} | config hash {run_config.hash()[:16]}")
        args.func(args, run_config)
        return 0
    except HamrocError as err:
        return _report_error(err)
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as err:
        return _report_error(err)
    except Exception as err:  # pragma: no cover - safety net
        return _report_error(err, fallback=1)


def _report_error(err: Exception, fallback: int = 1) -> int:
    code = fallback
    for classes, exit_code in _ERROR_EXIT:
        if isinstance(err, classes):
            code = exit_code
            break
    payload = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamroc",
        description="Hamiltonian model order reduction and latent control "
        "for planar mass-spring-damper networks.",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"hamroc {__version__}")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="run-config JSON (flags win over its values)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub.add_parser("generate", help="generate a mass-spring-damper network file")
    common(p)
    p.add_argument("--out", required=True, help="output network JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-base-cells", type=int)
    p.add_argument("--lateral-probability", type=float)
    p.add_argument("--paper-scale", action="store_true", help="use the ~200-node preset")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="simulate the full-order dynamics")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--g", type=float, required=True, help="gravity intensity [m/s^2]")
    p.add_argument("--theta", type=float, required=True, help="gravity angle [rad]")
    p.add_argument("--init-seed", type=int, default=None, help="perturbed start; omit for rest start")
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--sample-dt", type=float)
    p.add_argument("--out", required=True, help="output trajectory CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("make-dataset", help="build train/valid/test configuration datasets")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--save-test-trajectories", action="store_true",
                   help="also write the raw test trajectories for eval")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train an autoencoder on a dataset")
    common(p)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--grid", action="store_true",
                   help="run the hyperparameter grid and keep the best validation model")
    p.add_argument("--rest-bias", help="network JSON whose rest configuration seeds the output bias")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rom-sim", help="simulate the reduced dynamics and reconstruct")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--g", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--init-seed", type=int, default=None)
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--sample-dt", type=float)
    p.add_argument("--out", required=True, help="output latent trajectory CSV")
    p.add_argument("--reconstruct", help="also write the reconstructed full trajectory CSV")
    p.set_defaults(func=cmd_rom_sim)

    p = sub.add_parser("control", help="run latent-space posture regulation tasks")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset-dir", required=True, help="targets come from train+valid splits")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-tasks", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--candidates", help="comma-separated actuation node indices")
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("eval", help="score pointwise and compressed reconstruction")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--test-dir", required=True, help="directory of trajectory CSVs")
    p.add_argument("--mode", choices=("pointwise", "compressed", "both"), default="both")
    p.add_argument("--system", default="system", help="label used in report file names")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="latent-size, noise, or latent-alteration sweeps")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--kind", choices=("sizes", "sigmas", "fractions"), required=True)
    p.add_argument("--model", help="trained model (required for sigmas/fractions)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------

def cmd_generate(args, run_config: cfgmod.RunConfig) -> None:
    gen = nw.paper_scale_config(seed=run_config.generator.seed) if args.paper_scale else run_config.generator
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n_base_cells is not None:
        overrides["n_base_cells"] = args.n_base_cells
    if args.lateral_probability is not None:
        overrides["lateral_attach_probability"] = args.lateral_probability
    if overrides:
        gen = replace(gen, **overrides)
    print(f"generator seed {gen.seed}")
    net = nw.generate_network(gen)
    out = cfgmod.resolve_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    nw.save_network(out, net)
    print(f"wrote {out} ({net.n_nodes} nodes, {net.n_edges} edges, {net.n_dof} dof)")
    if not args.no_figures:
        fig = plots.plot_network(net, out.with_suffix(".png"), title=f"seed {gen.seed}")
        print(f"wrote {fig}")


def _sim_params(args, section) -> tuple[float, float, float]:
    duration = args.duration if args.duration is not None else section.duration
    dt = args.dt if args.dt is not None else section.dt
    sample_dt = args.sample_dt if args.sample_dt is not None else section.sample_dt
    return duration, dt, sample_dt


def cmd_simulate(args, run_config: cfgmod.RunConfig) -> None:
    net_path = cfgmod.resolve_path(args.network)
    net = nw.load_network(net_path)
    grav = nw.GravityField(g=args.g, theta=args.theta)
    duration, dt, sample_dt = _sim_params(args, run_config.simulation)
    if args.init_seed is not None:
        print(f"init seed {args.init_seed}")
        q0 = sim.random_initial_configuration(
            net, seed=args.init_seed, amplitude=run_config.simulation.init_amplitude
        )
    else:
        q0 = net.rest_configuration()
    traj = sim.simulate_full(net, grav, q0, np.zeros(net.n_dof), duration, dt, sample_dt)
    out = cfgmod.resolve_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sim.save_trajectory(out, traj, network_path=net_path)
    print(f"wrote {out} ({len(traj)} samples)")
    if not args.no_figures:
        energies = traj.energies(net)
        fig = plots.plot_energy_comparison(
            traj.times, energies, energies, out.with_suffix(".png"),
            labels=("H(t)", "H(t)"), title=f"g={args.g:g}, theta={args.theta:g}",
        )
        print(f"wrote {fig}")


def cmd_make_dataset(args, run_config: cfgmod.RunConfig) -> None:
    net_path = cfgmod.resolve_path(args.network)
    net = nw.load_network(net_path)
    section = run_config.dataset
    protocol = section.protocol()
    simsec = run_config.simulation
    out_dir = cfgmod.resolve_path(args.out_dir)
    print(f"dataset seed {protocol.seed} | {len(protocol.train_conditions)} train conditions, {protocol.n_test} test")

    sink = None
    if args.save_test_trajectories:
        traj_dir = out_dir / "test_trajectories"
        traj_dir.mkdir(parents=True, exist_ok=True)

        def sink(sim_id, split, traj):
            if split == "test":
                sim.save_trajectory(traj_dir / f"sim_{sim_id:03d}.csv", traj, network_path=net_path)

    datasets = dsmod.build_dataset(
        net,
        protocol,
        duration=simsec.duration,
        dt=simsec.dt,
        sample_dt=simsec.sample_dt,
        init_amplitude=simsec.init_amplitude,
        epsilon=section.epsilon,
        valid_fraction=section.valid_fraction,
        trajectory_sink=sink,
    )
    dsmod.save_dataset(out_dir, datasets, seed=protocol.seed)
    sizes = {k: len(v) for k, v in datasets.items()}
    print(f"wrote {out_dir} {sizes}")


def cmd_train(args, run_config: cfgmod.RunConfig) -> None:
    section = run_config.training
    ds_dir = cfgmod.resolve_path(args.dataset_dir)
    train_ds = dsmod.load_dataset(ds_dir, "train")
    valid_ds = dsmod.load_dataset(ds_dir, "valid")
    n = train_ds.n_dof
    latent_dim = args.latent_dim if args.latent_dim is not None else section.latent_dim
    cfg = section.train_config()
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    output_bias = None
    if args.rest_bias:
        output_bias = nw.load_network(cfgmod.resolve_path(args.rest_bias)).rest_configuration()
    print(f"training seed {cfg.seed} | latent dim {latent_dim} | {len(train_ds)} train samples")

    if args.grid:
        result, best_cfg, table = aem.grid_search(
            n,
            latent_dim,
            train_ds.configurations,
            valid_ds.configurations,
            base=cfg,
            hidden=section.hidden,
            output_bias=output_bias,
        )
        cfg = best_cfg
        print(
            f"grid best: lr={cfg.lr:g} wd={cfg.weight_decay:g} "
            f"gamma={cfg.lr_gamma:g} step={cfg.lr_step}"
        )
    else:
        ae = aem.init_autoencoder(
            n, latent_dim, hidden=section.hidden, seed=cfg.seed, output_bias=output_bias
        )
        result = aem.train(ae, train_ds.configurations, cfg, valid_ds.configurations)
        table = None

    out = cfgmod.resolve_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    aem.save_model(out, result.ae, cfg, result.history())
    final_valid = result.valid_mse[-1] if result.valid_mse else float("nan")
    print(f"wrote {out} (train mse {result.train_mse[-1]:.4e}, valid mse {final_valid:.4e})")
    if table is not None:
        serialize.write_json(out.with_suffix(".grid.json"), table)
        print(f"wrote {out.with_suffix('.grid.json')}")
    if not args.no_figures:
        fig = plots.plot_loss_history(result.history(), out.with_suffix(".png"))
        print(f"wrote {fig}")


def cmd_rom_sim(args, run_config: cfgmod.RunConfig) -> None:
    net = nw.load_network(cfgmod.resolve_path(args.network))
    ae = aem.load_model(cfgmod.resolve_path(args.model))
    grav = nw.GravityField(g=args.g, theta=args.theta)
    duration, dt, sample_dt = _sim_params(args, run_config.simulation)
    if run_config.reduction.dt is not None and args.dt is None:
        dt = run_config.reduction.dt
    if run_config.reduction.sample_dt is not None and args.sample_dt is None:
        sample_dt = run_config.reduction.sample_dt
    rs = red.ReducedSystem(net=net, gravity=grav, ae=ae)
    if args.init_seed is not None:
        print(f"init seed {args.init_seed}")
        q0 = sim.random_initial_configuration(
            net, seed=args.init_seed, amplitude=run_config.simulation.init_amplitude
        )
    else:
        q0 = net.rest_configuration()
    xi0 = aem.encode(ae, q0)
    latent = red.simulate_reduced(rs, xi0, np.zeros(ae.latent_dim), duration, dt, sample_dt)
    out = cfgmod.resolve_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    red.save_latent_trajectory(out, latent)
    print(f"wrote {out} ({len(latent)} samples)")
    rec, etas = red.reconstruct_trajectory(rs, latent)
    if args.reconstruct:
        rec_path = cfgmod.resolve_path(args.reconstruct)
        rec_path.parent.mkdir(parents=True, exist_ok=True)
        red.save_reconstruction(rec_path, rec, etas)
        print(f"wrote {rec_path}")
    if not args.no_figures:
        full = sim.simulate_full(net, grav, q0, np.zeros(net.n_dof), duration, dt, sample_dt)
        fig = plots.plot_energy_comparison(
            latent.times, full.energies(net), etas, out.with_suffix(".png"),
            labels=("full H", "latent eta"),
        )
        print(f"wrote {fig}")
        frames = plots.plot_reconstruction_frames(
            net, full.qs, rec.qs, latent.times, Path(str(out.with_suffix("")) + "_frames.png")
        )
        print(f"wrote {frames}")


def _default_candidates(net: nw.MassSpringNetwork, k: int = 3) -> list[int]:
    """Up to k actuation candidates on lateral structures, spread out."""
    pool = [v for v in net.meta.get("lateral_nodes", []) if not net.pinned[v]]
    if not pool:
        pool = [int(v) for v in net.free_nodes]
    if len(pool) <= k:
        return list(dict.fromkeys(pool))
    idx = np.linspace(0, len(pool) - 1, k).round().astype(int)
    return [pool[i] for i in idx]


def cmd_control(args, run_config: cfgmod.RunConfig) -> None:
    net = nw.load_network(cfgmod.resolve_path(args.network))
    ae = aem.load_model(cfgmod.resolve_path(args.model))
    section = run_config.control
    ds_dir = cfgmod.resolve_path(args.dataset_dir)
    train_ds = dsmod.load_dataset(ds_dir, "train")
    valid_ds = dsmod.load_dataset(ds_dir, "valid")
    protocol = run_config.dataset.protocol()
    targets, gravities = ctl.dataset_targets([train_ds, valid_ds], protocol)

    n_tasks = args.n_tasks if args.n_tasks is not None else section.n_tasks
    alpha = args.alpha if args.alpha is not None else section.alpha
    beta = args.beta if args.beta is not None else section.beta
    if args.candidates:
        candidates = [int(v) for v in args.candidates.split(",")]
    else:
        candidates = _default_candidates(net)
    print(f"control seed {section.seed} | {n_tasks} tasks | candidates {candidates} | alpha={alpha:g} beta={beta:g}")

    tasks = ctl.sample_control_tasks(
        targets, candidates, n_tasks, section.seed,
        alpha=alpha, beta=beta, duration=section.duration, gravities=gravities,
    )
    grav0 = nw.GravityField(*protocol.train_conditions[0])
    out_dir = cfgmod.resolve_path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logs = []
    for i, task in enumerate(tasks):
        rs = red.ReducedSystem(net=net, gravity=grav0, ae=ae, actuated=task.actuated)
        log = ctl.run_regulation(
            rs, task,
            dt=run_config.simulation.dt,
            sample_dt=run_config.simulation.sample_dt,
            recompute_input_field=section.recompute_input_field,
            u_max=section.u_max,
        )
        logs.append(log)
        ctl.save_control_log(out_dir / f"task_{i:03d}.csv", log)
    summary = ctl.quartile_summary(logs)
    summary["alpha"], summary["beta"], summary["seed"] = alpha, beta, section.seed
    serialize.write_json(out_dir / "summary.json", summary)
    ratios = [f / max(i0, 1e-300) for f, i0 in zip(summary["final_latent_error"], summary["initial_latent_error"])]
    print(
        f"wrote {out_dir} | median final/initial latent error "
        f"{ev.nearest_rank_percentile(ratios, 50.0):.3f}"
    )
    if not args.no_figures:
        fig = plots.plot_control_summary(summary, out_dir / "summary.png")
        print(f"wrote {fig}")


def _load_test_trajectories(test_dir: Path) -> list[sim.Trajectory]:
    paths = sorted(p for p in test_dir.glob("*.csv"))
    if not paths:
        raise FileNotFoundError(f"no trajectory CSVs in {test_dir}")
    return [sim.load_trajectory(p) for p in paths]


def cmd_eval(args, run_config: cfgmod.RunConfig) -> None:
    net = nw.load_network(cfgmod.resolve_path(args.network))
    ae = aem.load_model(cfgmod.resolve_path(args.model))
    trajs = _load_test_trajectories(cfgmod.resolve_path(args.test_dir))
    limit = run_config.eval.n_eval_trajectories
    if limit and len(trajs) > limit:
        trajs = trajs[:limit]
    rs = red.ReducedSystem(net=net, gravity=trajs[0].gravity, ae=ae)
    out_dir = cfgmod.resolve_path(args.out_dir)
    print(f"evaluating {len(trajs)} trajectories, mode {args.mode}")
    for mode in ("pointwise", "compressed"):
        if args.mode not in (mode, "both"):
            continue
        report = (
            ev.evaluate_pointwise(rs, trajs) if mode == "pointwise" else ev.evaluate_compressed(rs, trajs)
        )
        written = ev.save_report(out_dir, args.system, report)
        print(f"wrote {len(written)} {mode} report files to {out_dir}")
        if not args.no_figures:
            fig = plots.plot_eval_report(report, out_dir / f"{args.system}_{mode}.png")
            print(f"wrote {fig}")


def cmd_sweep(args, run_config: cfgmod.RunConfig) -> None:
    net = nw.load_network(cfgmod.resolve_path(args.network))
    ds_dir = cfgmod.resolve_path(args.dataset_dir)
    out_dir = cfgmod.resolve_path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    section = run_config.eval
    test_ds = dsmod.load_dataset(ds_dir, "test")

    if args.kind == "sizes":
        train_ds = dsmod.load_dataset(ds_dir, "train")
        valid_ds = dsmod.load_dataset(ds_dir, "valid")
        cfg = run_config.training.train_config()
        print(f"sweep sizes {list(section.latent_sizes)} | training seed {cfg.seed}")

        def train_fn(m: int) -> aem.MlpAutoencoder:
            ae = aem.init_autoencoder(
                net.n_dof, m, hidden=run_config.training.hidden,
                seed=cfg.seed, output_bias=net.rest_configuration(),
            )
            aem.train(ae, train_ds.configurations, cfg, valid_ds.configurations)
            return ae

        table, models = ev.compression_sweep(train_fn, test_ds.configurations, list(section.latent_sizes))
        serialize.write_csv(
            out_dir / "latent_size_sweep.csv",
            ["latent_dim", "test_mse", "test_mse_per_dof"],
            [[r["latent_dim"], r["test_mse"], r["test_mse_per_dof"]] for r in table],
        )
        for m, model in models.items():
            aem.save_model(out_dir / f"model_m{m}.json", model, cfg)
        print(f"wrote {out_dir / 'latent_size_sweep.csv'}")
        if not args.no_figures:
            fig = plots.plot_compression_sweep(table, out_dir / "latent_size_sweep.png")
            print(f"wrote {fig}")
        return

    if not args.model:
        raise InvalidConfig(f"--model is required for kind={args.kind}")
    ae = aem.load_model(cfgmod.resolve_path(args.model))

    if args.kind == "sigmas":
        print(f"noise sweep sigmas {list(section.sigmas)} | seeds {list(section.noise_seeds)}")
        tables = [
            ev.noise_robustness(ae, test_ds.configurations, list(section.sigmas), seed)
            for seed in section.noise_seeds
        ]
        rows = []
        for i, sigma in enumerate(section.sigmas):
            mses = [t[i]["mse"] for t in tables]
            rows.append([sigma, float(np.mean(mses))] + mses)
        header = ["sigma", "mse_mean"] + [f"mse_seed{s}" for s in section.noise_seeds]
        serialize.write_csv(out_dir / "noise_sweep.csv", header, rows)
        print(f"wrote {out_dir / 'noise_sweep.csv'}")
        if not args.no_figures:
            mean_table = [{"sigma": r[0], "mse": r[1]} for r in rows]
            fig = plots.plot_noise_table(mean_table, out_dir / "noise_sweep.png")
            print(f"wrote {fig}")
        return

    # fractions: latent-variable alteration sweep
    train_ds = dsmod.load_dataset(ds_dir, "train")
    all_configs = np.concatenate([train_ds.configurations, test_ds.configurations])
    base = test_ds.configurations[:: max(1, len(test_ds) // 4)][:4]
    print(f"latent alteration sweep, fractions {list(section.fractions)}")
    sweep = ev.latent_sweep(ae, base, all_configs, fractions=tuple(section.fractions))
    doc = {
        "fractions": sweep["fractions"],
        "ranges": sweep["ranges"].tolist(),
        "entries": [
            {
                "base_index": e["base_index"],
                "latent": e["latent"].tolist(),
                "deltas": e["deltas"].tolist(),
            }
            for e in sweep["entries"]
        ],
    }
    serialize.write_json(out_dir / "latent_alterations.json", doc)
    for e in sweep["entries"]:
        rows = []
        m = e["alterations"].shape[0]
        for i in range(m):
            for a in range(e["alterations"].shape[1]):
                rows.append([i, e["deltas"][i, a]] + e["alterations"][i, a].tolist())
        header = ["latent_var", "delta"] + [f"q_{i}" for i in range(net.n_dof)]
        serialize.write_csv(out_dir / f"alterations_base{e['base_index']}.csv", header, rows)
    print(f"wrote {out_dir / 'latent_alterations.json'}")
    if not args.no_figures:
        figs = plots.plot_latent_sweep(net, sweep, out_dir / "alterations")
        print(f"wrote {len(figs)} sweep figures")


if __name__ == "__main__":
    sys.exit(main())
