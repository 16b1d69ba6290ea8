"""Command-line entry point: experiment dispatch and CSV/SVG emission.

Usage: mmwia <command> --config <path> [--seed N] [--out DIR] [--trials N]
Commands: p-los, reduction-power, reduction-pmiss, time-cluster,
single-trial, selftest. Environment overrides: SIM_SEED, SIM_OUT.
Exit codes: 0 success, 1 usage, 2 config error, 3 experiment failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .channel import noise_power, sample_blocking
from .config import ConfigError, SimConfig, load_config
from .experiments import (
    ExperimentSpec,
    ResultTable,
    run_p_los,
    run_reduction_vs_power,
    run_reduction_vs_pmiss,
    run_time_vs_cluster,
)
from .geometry import build_cluster, place_ue
from .protocol import TrialSetup, run_coordinated, run_exhaustive
from .selftest import run_selftest
from .svgplot import line_plot

COMMANDS = ("p-los", "reduction-power", "reduction-pmiss", "time-cluster",
            "single-trial", "selftest")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_EXPERIMENT = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="mmwia", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--trials", type=int, default=None,
                   help="trials-per-point override")
    return p


def _series_by_group(table: ResultTable, x_col: str, y_col: str,
                     group_col: str | None):
    if group_col is None:
        return [("all", table.column(x_col), table.column(y_col))]
    out = []
    seen = []
    groups = table.column(group_col)
    xs, ys = table.column(x_col), table.column(y_col)
    for g in groups:
        if g not in seen:
            seen.append(g)
    for g in seen:
        sel = [i for i, gi in enumerate(groups) if gi == g]
        out.append((f"{group_col}={g}", [xs[i] for i in sel], [ys[i] for i in sel]))
    return out


_PLOTS = {
    "p_los": ("n_sc", "p_los", "p_blk", "cluster size", "P(top-3 all LOS)"),
    "reduction_power": ("p_ue_dbm", "p_er_pct", "n_tx",
                        "UE Tx power (dBm)", "IA time change (%)"),
    "reduction_pmiss": ("p_miss", "p_er_pct", "n_tx",
                        "target miss probability", "IA time change (%)"),
    "time_cluster": ("n_sc", "norm_ia_time", None,
                     "cluster size", "normalized IA time"),
}


def _emit(table: ResultTable, out_dir: Path, title: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{table.name}.csv"
    table.write_csv(csv_path)
    x_col, y_col, group, xlabel, ylabel = _PLOTS[table.name]
    svg = line_plot(title, xlabel, ylabel,
                    _series_by_group(table, x_col, y_col, group))
    stamp = f"<!-- config={table.config_hash} seed={table.master_seed} -->\n"
    (out_dir / f"{table.name}.svg").write_text(stamp + svg)
    print(f"wrote {csv_path} (+.svg), {len(table.rows)} rows")


def _single_trial(cfg: SimConfig, seed: int) -> None:
    geom = build_cluster(max(cfg.geometry.n_sc, 3), cfg.geometry.side_m,
                         np.random.default_rng((seed, 0)))
    geom = geom.with_ue(place_ue(geom, np.random.default_rng((seed, 1))))
    states = sample_blocking(geom.n_sc, cfg.channel.p_blk,
                             np.random.default_rng((seed, 2)),
                             excess_mean_db=cfg.channel.nlos_excess_mean_db)
    seq = cfg.sequence()
    gamma = cfg.threshold(noise_power(cfg.link_params()), seq, seed=(seed, 3))
    setup = TrialSetup(
        geom=geom, ue_codebook=cfg.ue_codebook(), sc_codebook=cfg.sc_codebook(),
        link_params=cfg.link_params(), seq=seq, gamma_ra=gamma,
        link_states=tuple(states), t_ra_s=cfg.protocol.t_ra_s,
        backhaul_latency_s=cfg.protocol.backhaul_latency_s,
        grid_resolution_m=cfg.estimation.grid_resolution_m,
        model_propagation_delay=cfg.preamble.model_propagation_delay)
    runner = (run_coordinated if cfg.single_trial.scheme == "coordinated"
              else run_exhaustive)
    out = runner(setup, np.random.default_rng((seed, 4)))
    print(f"scheme:         {out.scheme}")
    print(f"success:        {out.success}")
    print(f"rounds:         {out.rounds}")
    print(f"slots_used:     {out.slots_used}")
    print(f"ia_time_s:      {out.ia_time_s:.6f}")
    print(f"detecting_cell: {out.detecting_cell}")
    print(f"detecting_pair: {out.detecting_pair}")
    if out.estimated_ue is not None:
        p = out.estimated_ue
        print(f"estimated_ue:   ({p.x:.2f}, {p.y:.2f})")
        print(f"estimate_error: {p.distance_to(geom.ue_position):.2f} m")
    else:
        print("estimated_ue:   none")
    print(f"true_ue:        ({geom.ue_position.x:.2f}, {geom.ue_position.y:.2f})")


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seed = cfg.experiment.master_seed
    if os.environ.get("SIM_SEED"):
        seed = int(os.environ["SIM_SEED"])
    if args.seed is not None:
        seed = args.seed
    out_dir = Path(os.environ.get("SIM_OUT") or cfg.output.dir)
    if args.out is not None:
        out_dir = Path(args.out)

    if args.command == "selftest":
        return EXIT_OK if run_selftest() else EXIT_EXPERIMENT

    try:
        if args.command == "single-trial":
            _single_trial(cfg, seed)
            return EXIT_OK

        trials = args.trials
        if args.command == "p-los":
            spec = ExperimentSpec("p_los", cfg,
                                  trials or cfg.experiment.p_los_trials, seed)
            _emit(run_p_los(spec), out_dir, "LOS selection probability")
        elif args.command == "reduction-power":
            spec = ExperimentSpec("reduction_power", cfg,
                                  trials or cfg.experiment.trials, seed)
            _emit(run_reduction_vs_power(spec), out_dir,
                  "IA time reduction vs UE power")
        elif args.command == "reduction-pmiss":
            spec = ExperimentSpec("reduction_pmiss", cfg,
                                  trials or cfg.experiment.trials, seed)
            _emit(run_reduction_vs_pmiss(spec), out_dir,
                  "IA time reduction vs target miss probability")
        elif args.command == "time-cluster":
            spec = ExperimentSpec("time_cluster", cfg,
                                  trials or cfg.experiment.trials, seed)
            _emit(run_time_vs_cluster(spec), out_dir,
                  "Normalized IA time vs cluster size")
    except Exception as exc:  # experiment-level failure -> exit 3
        print(f"experiment error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
