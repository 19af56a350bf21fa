"""
cli.py

Command-line front end. Each subcommand reads one experiment config,
runs it through the library and writes CSV/JSON artifacts into ``--out``.

Exit codes: 0 success, 1 config or output error, 2 tuning found no
stabilizing controller.
"""

import argparse
import os
import sys
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger
from scipy.stats import binomtest, kstest

from darca_ncs_tuning.artifacts import ArtifactException, ArtifactUtils
from darca_ncs_tuning.config import (
    ConfigException,
    Experiment,
    load_experiment,
    parse_channel,
    parse_delay_law,
    parse_grid,
    parse_loop_channel,
    parse_section,
)
from darca_ncs_tuning.fractional import fopid_controller
from darca_ncs_tuning.network import (
    ChannelConfig,
    channel_stats,
    log_rows,
    run_channel_audit,
)
from darca_ncs_tuning.optimizers import tune_controller
from darca_ncs_tuning.plants import DelayedRationalPlant, lump_delay
from darca_ncs_tuning.simloop import (
    SURFACE_HEADER,
    ExpectedCost,
    SimConfig,
    control_excursion,
    cost,
    expected_cost,
    performance_indices,
    run_closed_loop,
    surface_sweep,
)

# Initialize the logger
logger = DarcaLogger(name="cli").get_logger()

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PENALIZED = 2

TRACE_HEADER = ("t", "r", "y", "u", "e")
HISTORY_HEADER = ("generation", "best_cost")
CHANNEL_LOG_HEADER = ("seq", "send_time", "delivery_time", "tso_outcome")
STUDY_HEADER = (
    "condition",
    "mean_itae",
    "mean_isco",
    "mean_j",
    "std",
    "divergence_fraction",
    "penalized",
)


class CliException(DarcaException):
    """
    Custom exception for command-line errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "CLI_ERROR",
            metadata=metadata,
            cause=cause,
        )


def _output_path(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def _prepare_output(out_dir: str) -> None:
    try:
        ArtifactUtils.ensure_directory(out_dir)
    except ArtifactException as e:
        raise CliException(
            message=f"Output directory is not usable: {out_dir}",
            error_code="OUTPUT_DIR_ERROR",
            metadata={"out": out_dir},
            cause=e,
        ) from e


def sign_test(worse: Sequence[float], better: Sequence[float]) -> Optional[float]:
    """
    One-sided paired sign test that *worse* exceeds *better*.
    Ties are dropped; returns None when every pair ties.
    """
    wins = sum(1 for a, b in zip(worse, better) if a > b)
    trials = sum(1 for a, b in zip(worse, better) if a != b)
    if trials == 0:
        return None
    return float(binomtest(wins, trials, 0.5, alternative="greater").pvalue)


def _replicate_js(result: ExpectedCost) -> List[float]:
    return [c.j for c in result.replicates]


def _study_row(condition: str, result: ExpectedCost) -> tuple:
    m = result.mean
    return (
        condition,
        m.itae,
        m.isco,
        m.j,
        result.std,
        result.divergence_fraction,
        m.penalized,
    )


def _run_condition(
    exp: Experiment,
    sim: SimConfig,
    condition: str,
    jobs: int,
    plant: Optional[DelayedRationalPlant] = None,
) -> ExpectedCost:
    result = expected_cost(
        plant or exp.plant,
        exp.controller,
        sim,
        exp.weights,
        exp.replicates,
        exp.seed,
        jobs,
    )
    logger.info(
        f"Condition '{condition}': mean J {result.mean.j:.6g}, "
        f"divergence {result.divergence_fraction:.2f}"
    )
    return result


def cmd_tune(exp: Experiment, out_dir: str, jobs: int) -> int:
    record = tune_controller(
        exp.plant,
        exp.mode,
        exp.optimizer,
        exp.sim,
        exp.weights,
        exp.replicates,
        exp.seed,
        box=exp.box,
        jobs=jobs,
    )
    ArtifactUtils.write_json(_output_path(out_dir, "result.json"), record.to_dict())
    ArtifactUtils.write_csv(
        _output_path(out_dir, "history.csv"),
        HISTORY_HEADER,
        record.result.history_rows(),
    )
    logger.info(f"Tuning result written to {out_dir}")
    return EXIT_PENALIZED if record.penalized else EXIT_OK


def cmd_simulate(exp: Experiment, out_dir: str, jobs: int) -> int:
    controller = fopid_controller(exp.controller, band=exp.sim.band)
    trace = run_closed_loop(exp.plant, controller, exp.sim, exp.seed, 0)
    breakdown = cost(trace, exp.weights)
    report = breakdown.to_dict()
    report.update(
        {
            "diverged": trace.diverged,
            "samples": len(trace),
            "indices": performance_indices(trace),
            "control_excursion": control_excursion(
                trace, exp.sim.load_disturbance.time
            ),
            "parameters": exp.controller.to_dict(),
            "seed": exp.seed,
        }
    )
    ArtifactUtils.write_csv(
        _output_path(out_dir, "trace.csv"), TRACE_HEADER, trace.rows()
    )
    ArtifactUtils.write_json(_output_path(out_dir, "cost.json"), report)
    logger.info(f"Trace of {len(trace)} samples written to {out_dir}")
    return EXIT_OK


def _grids(exp: Experiment) -> Tuple[List[float], List[float]]:
    sweep = exp.raw["sweep"]

    def grid(name: str) -> List[float]:
        key = f"{name}_grid" if f"{name}_grid" in sweep else name
        return parse_grid(sweep[key])

    return parse_section(exp.source, "sweep", lambda: (grid("lambda"), grid("mu")))


def cmd_sweep(exp: Experiment, out_dir: str, jobs: int) -> int:
    lambda_grid, mu_grid = _grids(exp)
    gains = (exp.controller.kp, exp.controller.ki, exp.controller.kd)
    cells = surface_sweep(
        exp.plant,
        gains,
        lambda_grid,
        mu_grid,
        exp.sim,
        exp.weights,
        exp.replicates,
        exp.seed,
        jobs,
    )
    ArtifactUtils.write_csv(
        _output_path(out_dir, "surface.csv"),
        SURFACE_HEADER,
        [cell.row() for cell in cells],
    )
    return EXIT_OK


def cmd_channel_audit(exp: Experiment, out_dir: str, jobs: int) -> int:
    def audit_section():
        audit = exp.raw["audit"]
        return (
            parse_channel(audit["channel"]),
            int(audit.get("packets", 10_000)),
            float(audit.get("ts", exp.sim.ts)),
            int(audit.get("bins", 20)),
            bool(audit.get("tso_enabled", True)),
        )

    channel, packets, ts, bins, tso_enabled = parse_section(
        exp.source, "audit", audit_section
    )
    state = run_channel_audit(channel, packets, ts, tso_enabled, exp.seed)
    stats = channel_stats(state.log, channel.delay, bins)
    report = stats.to_dict()
    report["channel"] = channel.to_dict()
    if channel.delay.law == "uniform":
        delays = np.array([r.delay for r in state.log.values()])
        width = channel.delay.hi - channel.delay.lo
        ks = kstest(delays, "uniform", args=(channel.delay.lo, width))
        report["ks_statistic"] = float(ks.statistic)
        report["ks_pvalue"] = float(ks.pvalue)
    ArtifactUtils.write_json(_output_path(out_dir, "stats.json"), report)
    ArtifactUtils.write_csv(
        _output_path(out_dir, "channel_log.csv"),
        CHANNEL_LOG_HEADER,
        log_rows(state.log),
    )
    return EXIT_OK


def _study(exp: Experiment) -> dict:
    return exp.raw.get("study", {})


def cmd_degradation_study(exp: Experiment, out_dir: str, jobs: int) -> int:
    """
    Lumped static delay d against uniform(0, d) network delay, per level d.

    The static arm adds d to the plant dead time and closes the loop over
    an ideal network. The stochastic arm draws uniform(0, d) on both paths,
    with TSO buffering only when ``study.tso_enabled`` is set.
    """
    study = _study(exp)
    levels, drop_prob, tso_enabled = parse_section(
        exp.source,
        "study",
        lambda: (
            parse_grid(study["levels"]),
            float(study.get("drop_prob", 0.0)),
            bool(study.get("tso_enabled", False)),
        ),
    )
    ideal = exp.sim.with_network(ChannelConfig())
    rows, tests = [], {}
    first_divergent, largest_stable_static = None, None
    for level in levels:
        lumped = parse_section(
            exp.source, "study", lambda: lump_delay(exp.plant, level)
        )
        stochastic = replace(
            exp.sim.with_network(
                ChannelConfig(
                    drop_prob,
                    parse_delay_law({"law": "uniform", "lo": 0.0, "hi": level}),
                )
            ),
            tso_enabled=tso_enabled,
        )
        static_result = _run_condition(
            exp, ideal, f"static_{level}", jobs, plant=lumped
        )
        stochastic_result = _run_condition(exp, stochastic, f"uniform_{level}", jobs)
        rows.append(_study_row(f"static_{level}", static_result))
        rows.append(_study_row(f"uniform_{level}", stochastic_result))
        tests[repr(level)] = sign_test(
            _replicate_js(stochastic_result), _replicate_js(static_result)
        )
        if stochastic_result.mean.penalized and first_divergent is None:
            first_divergent = level
        if not static_result.mean.penalized:
            largest_stable_static = level
    ArtifactUtils.write_csv(
        _output_path(out_dir, "degradation.csv"), STUDY_HEADER, rows
    )
    ArtifactUtils.write_json(
        _output_path(out_dir, "summary.json"),
        {
            "sign_test_p": tests,
            "first_divergent_stochastic_bound": first_divergent,
            "largest_stable_static_bound": largest_stable_static,
            "tso_enabled": tso_enabled,
            "replicates": exp.replicates,
        },
    )
    return EXIT_OK


def _buffer_conditions(exp: Experiment) -> List[Tuple[str, SimConfig]]:
    study = _study(exp)
    entries = study.get(
        "conditions",
        [
            {"name": "tso_on", "tso_enabled": True},
            {"name": "tso_off", "tso_enabled": False},
        ],
    )
    conditions = []
    for entry in entries:
        sim = exp.sim
        if "network" in entry:
            sim = sim.with_network(parse_loop_channel(entry["network"]))
        sim = replace(sim, tso_enabled=bool(entry["tso_enabled"]))
        conditions.append((str(entry["name"]), sim))
    if len(conditions) < 2:
        raise ValueError("buffer study needs at least two conditions")
    return conditions


def cmd_buffer_study(exp: Experiment, out_dir: str, jobs: int) -> int:
    """
    Same network realizations with and without TSO buffering. The first
    condition is the baseline every other condition is tested against.
    """
    conditions = parse_section(exp.source, "study", lambda: _buffer_conditions(exp))
    results = [(name, _run_condition(exp, sim, name, jobs)) for name, sim in conditions]
    baseline_name, baseline = results[0]
    ArtifactUtils.write_csv(
        _output_path(out_dir, "buffer.csv"),
        STUDY_HEADER,
        [_study_row(name, result) for name, result in results],
    )
    ArtifactUtils.write_json(
        _output_path(out_dir, "summary.json"),
        {
            "baseline": baseline_name,
            "sign_test_p": {
                name: sign_test(_replicate_js(result), _replicate_js(baseline))
                for name, result in results[1:]
            },
            "replicates": exp.replicates,
        },
    )
    return EXIT_OK


def cmd_robustness_study(exp: Experiment, out_dir: str, jobs: int) -> int:
    """One condition per delay law, each applied to both paths."""
    study = _study(exp)

    def laws_section():
        drop_prob = float(study.get("drop_prob", 0.0))
        laws = []
        for entry in study["laws"]:
            law = parse_delay_law(entry)
            name = str(entry.get("name", law.law))
            laws.append((name, ChannelConfig(drop_prob, law)))
        return laws

    laws = parse_section(exp.source, "study", laws_section)
    results = [
        (name, _run_condition(exp, exp.sim.with_network(channel), name, jobs))
        for name, channel in laws
    ]
    means = [result.mean.j for _, result in results]
    spread = (max(means) - min(means)) / min(means) if min(means) > 0 else None
    ArtifactUtils.write_csv(
        _output_path(out_dir, "robustness.csv"),
        STUDY_HEADER,
        [_study_row(name, result) for name, result in results],
    )
    ArtifactUtils.write_json(
        _output_path(out_dir, "summary.json"),
        {
            "mean_j_spread": spread,
            "divergence_fraction": {
                name: result.divergence_fraction for name, result in results
            },
            "replicates": exp.replicates,
        },
    )
    return EXIT_OK


# subcommand -> (handler, required top-level config keys)
COMMANDS: Dict[str, Tuple[Callable[[Experiment, str, int], int], tuple]] = {
    "tune": (cmd_tune, ("plant", "optimizer")),
    "simulate": (cmd_simulate, ("plant", "controller")),
    "sweep": (cmd_sweep, ("plant", "controller", "sweep")),
    "channel-audit": (cmd_channel_audit, ("audit",)),
    "study-degradation": (cmd_degradation_study, ("plant", "controller", "study")),
    "study-buffer": (cmd_buffer_study, ("plant", "controller")),
    "study-robustness": (cmd_robustness_study, ("plant", "controller", "study")),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", required=True, help="Experiment config (JSON or YAML)"
    )
    common.add_argument("--out", default="results", help="Output directory")
    common.add_argument(
        "--seed", type=int, default=None, help="Overrides the config seed"
    )
    common.add_argument("--jobs", type=int, default=1, help="Worker processes")

    parser = argparse.ArgumentParser(
        prog="darca-ncs",
        description="Tune and evaluate (fractional order) PID controllers "
        "over a simulated lossy, delaying network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler, required = COMMANDS[args.command]
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigException(
                message="--seed must be a non-negative integer",
                metadata={"seed": args.seed},
            )
        exp = load_experiment(args.config, required, args.seed)
        _prepare_output(args.out)
        return handler(exp, args.out, max(1, args.jobs))
    except DarcaException as e:
        logger.error(f"{args.command} failed [{e.error_code}]: {e.message}")
        if e.metadata and "problems" in e.metadata:
            for problem in e.metadata["problems"]:
                logger.error(f"  {problem}")
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
