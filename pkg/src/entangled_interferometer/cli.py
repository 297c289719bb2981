"""Batch front end: ``entifo <subcommand> <config> [--out DIR] [--seed U64] [--windows N]``.

Exit status is 0 on success, 1 when a computation fails and 2 for usage
problems (bad arguments, unreadable or invalid config, missing section).
The output directory is ``--out``, else ``$ENTIFO_OUT``, else the config's
``output_dir``, else the working directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .csvout import write_rows
from .errors import ConvergenceError, DomainError
from .geometry import solve_geometry, synthesize
from .link_budget import run_chain
from .montecarlo import SEED_MAX, compare_with_analytic, simulate_windows, summary_rows
from .optics import WaveVectorPair, pump_locked_wavevectors
from .phase_stats import (
    a2_chain_variance,
    a4_as_printed,
    entangled_phase_variance,
    number_diff_variance,
    optimal_shifter_angle,
    phase_rms_from_number_variance,
    quadratic_coefficient,
)
from .sensitivity import sensitivity_report, sensitivity_sweep

OUT_ENV = "ENTIFO_OUT"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _require(cfg: RunConfig, *names: str):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"config is missing required section(s): {', '.join(missing)}")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _windows(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")


def run_link_budget(cfg: RunConfig, out: Path, args) -> int:
    _require(cfg, "link_budget")
    report = run_chain(cfg.link_budget)
    path = write_rows(out / "link_budget.csv", [report.as_row()])
    print(f"P_sat={report.received_power_sat:.6g} W  P_circ={report.circulating_power:.6g} W  "
          f"P_pair={report.pair_power_emitted:.6g} W  rate={report.collected_pair_rate:.6g} /s")
    print(f"wrote {path}")
    return EXIT_OK


def geometry_rows(cfg: RunConfig, seed: int) -> list[dict]:
    """Solve the configured geometry; synthetic mode returns one row per trial."""
    g = cfg.geometry
    wv = pump_locked_wavevectors(g.triplet)
    if g.synthetic is None:
        sol = solve_geometry(g.null_conditions, g.constellation, wv, g.solver)
        return [{"trial": 0, **sol.as_row()}]
    syn = g.synthetic
    guess_wv = WaveVectorPair(wv.k, wv.delta + syn.delta_guess_offset)
    rows = []
    for trial in range(syn.trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
        truth, ncs = synthesize(syn.arm_lengths, wv, g.triplet.lambda_pump, rng, syn.phase_noise)
        offsets = tuple(o + d for o, d in zip(truth.length_offsets, syn.guess_offsets))
        sol = solve_geometry(ncs, replace(truth, length_offsets=offsets), guess_wv, g.solver)
        err = sol.length_errors(truth)
        row = {"trial": trial, **sol.as_row()}
        row.update({f"err_l{i}": float(e) for i, e in enumerate(err, 1)})
        rows.append(row)
    return rows


def run_solve_geometry(cfg: RunConfig, out: Path, args) -> int:
    _require(cfg, "geometry")
    seed = _seed(cfg, args) if cfg.geometry.synthetic is not None else 0
    rows = geometry_rows(cfg, seed)
    path = write_rows(out / "geometry.csv", rows)
    if cfg.geometry.synthetic is not None:
        errs = np.array([[r[f"err_l{i}"] for i in (1, 2, 3)] for r in rows])
        print(f"{len(rows)} trial(s), length RMS error {math.sqrt(float(np.mean(errs**2))):.6g} m")
    else:
        r = rows[0]
        print(f"l=({r['l1']:.12g}, {r['l2']:.12g}, {r['l3']:.12g}) m  residual={r['residual_norm']:.3g}")
    print(f"wrote {path}")
    return EXIT_OK


def run_phase_stats(cfg: RunConfig, out: Path, args) -> int:
    _require(cfg, "pair_model")
    m = cfg.pair_model
    var = number_diff_variance(m)
    row = {
        "mean_pairs": m.mean_pairs,
        "eta1": m.eta1,
        "eta2": m.eta2,
        "shifter_angle": m.shifter_angle,
        "covariance": m.covariance,
        "number_diff_variance": var,
        "quadratic_coefficient": quadratic_coefficient(m.eta1, m.eta2, m.shifter_angle),
        "optimal_shifter_angle": optimal_shifter_angle(m.eta1, m.eta2),
        "phase_rms": phase_rms_from_number_variance(var, m.mean_pairs),
        "entangled_phase_variance": entangled_phase_variance(m.eta1 * m.mean_pairs,
                                                             m.eta2 * m.mean_pairs),
        "a4_as_printed": a4_as_printed(m.mean_pairs),
        "a2_chain_variance": a2_chain_variance(m.mean_pairs),
    }
    path = write_rows(out / "phase_stats.csv", [row])
    print(f"var(N1-N2)={var:.6g}  optimal angle={row['optimal_shifter_angle']:.12g} rad")
    print(f"wrote {path}")
    return EXIT_OK


def _seed(cfg: RunConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise UsageError("no seed: give --seed or set 'seed' in the config")
    return seed


def run_simulate(cfg: RunConfig, out: Path, args) -> int:
    _require(cfg, "pair_model", "detection_graph", "simulation")
    windows = args.windows if args.windows is not None else cfg.simulation.windows
    if windows < 1:
        raise UsageError(f"windows must be >= 1, got {windows}")
    seed = _seed(cfg, args)
    batch = simulate_windows(cfg.detection_graph, cfg.pair_model, windows, seed,
                             workers=cfg.simulation.workers)
    comparison = compare_with_analytic(batch, cfg.pair_model)
    path = write_rows(out / "simulate.csv", summary_rows(batch, comparison))
    print(f"{windows} windows, seed {seed}: z_mean={comparison.z_mean:.3f} "
          f"z_variance={comparison.z_variance:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


def run_sensitivity(cfg: RunConfig, out: Path, args) -> int:
    _require(cfg, "sensitivity")
    report = sensitivity_report(cfg.sensitivity)
    path = write_rows(out / "sensitivity.csv", [report.as_row()])
    print(f"displacement={report.displacement:.6g} m  strain={report.strain:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def run_sweep(cfg: RunConfig, out: Path, args) -> int:
    _require(cfg, "sensitivity", "sweep")
    reports = sensitivity_sweep(cfg.sensitivity, cfg.sweep)
    path = write_rows(out / "sweep.csv", [r.as_row() for r in reports])
    print(f"{len(reports)} sweep rows")
    print(f"wrote {path}")
    return EXIT_OK


def run_verify_paper(cfg: RunConfig, out: Path, args) -> int:
    from .verify import format_table, run_acceptance

    rows = run_acceptance(cfg, seed=args.seed)
    print(format_table(rows))
    path = write_rows(out / "verify.csv", [r.as_row() for r in rows])
    print(f"wrote {path}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


COMMANDS = {
    "link-budget": run_link_budget,
    "solve-geometry": run_solve_geometry,
    "phase-stats": run_phase_stats,
    "simulate": run_simulate,
    "sensitivity": run_sensitivity,
    "sweep": run_sweep,
    "verify-paper": run_verify_paper,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entifo", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=None, help="output directory for CSV artifacts")
    p.add_argument("--seed", type=_u64, default=None, help="override the config seed (u64)")
    p.add_argument("--windows", type=_windows, default=None,
                   help="override simulation.windows")
    return p


def output_dir(args, cfg: RunConfig) -> Path:
    if args.out is not None:
        return args.out
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(".")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.subcommand](cfg, output_dir(args, cfg), args)
    except (ConfigError, UsageError) as exc:
        print(f"entifo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ConvergenceError, ArithmeticError) as exc:
        print(f"entifo: {args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
