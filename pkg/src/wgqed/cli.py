"""Experiment runner: configuration in, CSV (and optional figures) out.

Subcommands::

    validate | cz | null-gate | graph | ncz | cluster | decay-sweep |
    scaling | fock-check

Every CSV starts with ``#``-prefixed metadata lines (config hash, tier,
cutoff, seed, version) sufficient to reproduce the run with the same binary.
Exit codes: 0 ok, 1 usage/config error, 2 regime failure, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .entangle import (
    GraphSpec,
    complete_graph_schedule,
    decoherence_fidelity,
    graph_state_schedule,
    ideal_graph_state,
    lattice_schedule,
    ncz_schedule,
    run_schedules_eff,
)
from .evolve import (
    DecayModel,
    EvolutionSpec,
    NumericalFailure,
    blockwise_decoherence_evolve,
    blockwise_tables,
    fidelity_from_tables,
    fock_convergence_check,
)
from .gates import (
    LeakageError,
    calibrate_cz_schedule,
    commensurate_period,
    cz_truth_table,
    engine_segments,
    null_gate_check,
    plan_null_gate,
)
from .model import DEFAULT_LAMBDA0, DotParams, lambda_coeff, validate_regime

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_REGIME = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for regime failure
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _metadata(config: ExperimentConfig, tier: str, seed: int) -> list[str]:
    return [
        f"# wgqed_version={__version__}",
        f"# config_sha256={config.sha256()}",
        f"# tier={tier}",
        f"# fock_cutoff={config.fock_cutoff}",
        f"# seed={seed}",
    ]


def _write_csv(path: str, meta: list[str], columns: Sequence[str], rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in meta:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(c) for c in row) + "\n")


def _format_cell(c) -> str:
    if isinstance(c, float):
        return repr(c)
    return str(c)


def _dump_schedules(path: str, schedules) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schedules": [s.to_dict() for s in schedules]}, fh, indent=2)
        fh.write("\n")


def _prepare_pair(config: ExperimentConfig, deltas_override=None):
    """Dots plus a same-detuning CZ schedule, calibrated when needed."""
    raw = list(config.dots)
    if deltas_override is not None:
        if len(deltas_override) != len(raw):
            raise ConfigError("variant length must match the dot count")
    templates = []
    explicit = []
    for i, dc in enumerate(raw):
        delta = deltas_override[i] if deltas_override is not None else dc.delta_meV
        explicit.append(dc.delta_cav_meV is not None and deltas_override is None)
        templates.append(
            DotParams(
                g=dc.g_meV,
                omega=dc.omega_meV,
                delta=delta,
                delta_cav=dc.delta_cav_meV if explicit[-1] else delta + 1.0,
                omega_prime=dc.omega_prime_meV,
                delta_prime=(
                    dc.delta_prime_meV
                    if dc.delta_prime_meV is not None and deltas_override is None
                    else delta
                ),
            )
        )
    if all(explicit):
        dots = tuple(templates)
        deltas = {d.delta_small for d in dots}
        if len(deltas) != 1:
            raise ConfigError(
                "explicit delta_cav_meV values must share one two-photon detuning"
            )
        from .gates import DotDrive, DriveSchedule, ScheduleSegment
        from .model import HBAR_MEV_NS

        delta0 = deltas.pop()
        lams = [lambda_coeff(d) for d in dots]
        lambda0 = math.exp(sum(math.log(abs(l)) for l in lams) / len(lams))
        t_gate = math.pi * HBAR_MEV_NS * delta0 / (2 * lambda0**2)
        k_float = delta0**2 / (2 * lambda0**2)
        k = int(round(k_float)) if abs(k_float - round(k_float)) < 1e-9 else None
        drives = tuple(
            DotDrive(active=True, lam=complex(l), delta=delta0, group=1) for l in lams
        )
        seg = ScheduleSegment(0.0, t_gate, drives, delta0=delta0)
        sched = DriveSchedule(
            segments=(seg,), k_integer=k, lambda0=lambda0, delta0=delta0
        )
        return dots, sched
    if any(explicit):
        raise ConfigError("set delta_cav_meV for all dots or none")
    return calibrate_cz_schedule(templates, config.scheduler.ratio_min)


def _scheduler_lambda0(config: ExperimentConfig) -> float:
    if config.scheduler.lambda0_meV is not None:
        return config.scheduler.lambda0_meV
    try:
        dots, _ = _prepare_pair(config)
        lams = [abs(lambda_coeff(d)) for d in dots]
        return math.exp(sum(math.log(l) for l in lams) / len(lams))
    except ConfigError:
        return DEFAULT_LAMBDA0


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(config: ExperimentConfig, args) -> int:
    dots, _ = _prepare_pair(config)
    report = validate_regime(dots)
    print(report.summary())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "validate.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.summary() + "\n")
    return EXIT_OK if report.passed else EXIT_REGIME


def cmd_cz(config: ExperimentConfig, args) -> int:
    tier = args.tier or config.tier
    dots, schedule = _prepare_pair(config)
    kwargs = {}
    if tier == "full":
        kwargs["period_hint"] = commensurate_period(dots)
    result = cz_truth_table(
        schedule, tier, dots=dots, fock_cutoff=config.fock_cutoff, **kwargs
    )
    row = (
        result.tier,
        result.t_gate_ns,
        *result.phases,
        result.conditional_phase,
        result.fidelity_vs_ideal_cz,
    )
    _write_csv(
        os.path.join(args.out, "cz.csv"),
        _metadata(config, tier, args.seed),
        (
            "tier",
            "t_gate_ns",
            "phase_ff",
            "phase_fg",
            "phase_gf",
            "phase_gg",
            "conditional_phase",
            "fidelity",
        ),
        [row],
    )
    print(
        f"tier={result.tier} t_gate={result.t_gate_ns:.6g} ns "
        f"conditional_phase={result.conditional_phase:+.9f} rad "
        f"fidelity={result.fidelity_vs_ideal_cz:.9f}"
    )
    return EXIT_OK


def cmd_null_gate(config: ExperimentConfig, args) -> int:
    from .config import NullGateConfig

    ng = config.null_gate or NullGateConfig()
    lambda0 = _scheduler_lambda0(config)
    delta0 = lambda0 * math.sqrt(2 * 5000)  # reference closure detuning
    rows = []
    for k in ng.k_values:
        analytic = null_gate_check(ng.m, ng.n, k, lambda0, delta0)
        schedule = plan_null_gate(ng.m, ng.n, k, lambda0, delta0)
        res = cz_truth_table(schedule, "eff1", fock_cutoff=config.fock_cutoff)
        rows.append((ng.m, ng.n, k, analytic, res.conditional_phase))
        print(
            f"m={ng.m} n={ng.n} k={k}: analytic residual {analytic:.3e}, "
            f"eff1 residual {res.conditional_phase:.3e} rad"
        )
    _write_csv(
        os.path.join(args.out, "null_gate.csv"),
        _metadata(config, "eff1", args.seed),
        ("m", "n", "k", "analytic_residual_rad", "eff1_residual_rad"),
        rows,
    )
    return EXIT_OK


def cmd_graph(config: ExperimentConfig, args) -> int:
    if config.graph is None:
        raise ConfigError("config.graph block required for the graph command")
    spec = GraphSpec.from_edges(config.graph.num_qubits, config.graph.edges)
    lambda0 = _scheduler_lambda0(config)
    schedules = graph_state_schedule(spec, lambda0, config.scheduler.ratio_min)
    final = run_schedules_eff(schedules)
    from .operators import fidelity as state_fidelity

    fid = state_fidelity(final, ideal_graph_state(spec))
    _dump_schedules(os.path.join(args.out, "graph_schedule.json"), schedules)
    _write_csv(
        os.path.join(args.out, "graph.csv"),
        _metadata(config, "eff", args.seed),
        ("num_qubits", "num_edges", "layers", "fidelity_vs_ideal"),
        [(spec.num_qubits, len(spec.edges), len(schedules), fid)],
    )
    print(
        f"graph state: N={spec.num_qubits}, edges={len(spec.edges)}, "
        f"layers={len(schedules)}, fidelity={fid:.12f}"
    )
    return EXIT_OK


def cmd_ncz(config: ExperimentConfig, args) -> int:
    from .config import NczConfig

    ncz = config.ncz or NczConfig()
    lambda0 = _scheduler_lambda0(config)
    schedules, report = ncz_schedule(
        ncz.num_controls, lambda0, config.scheduler.ratio_min
    )
    _dump_schedules(os.path.join(args.out, "ncz_schedule.json"), schedules)
    rows = [
        (i, p, t, d)
        for i, (p, t, d) in enumerate(
            zip(report.phases, report.target_phases, report.deviations)
        )
    ]
    _write_csv(
        os.path.join(args.out, "ncz.csv"),
        _metadata(config, "eff", args.seed),
        ("basis_index", "phase_rad", "target_phase_rad", "deviation_rad"),
        rows,
    )
    print(
        f"layered construction over {ncz.num_controls + 1} dots: "
        f"max deviation from the {ncz.num_controls}-controlled-Z diagonal "
        f"= {report.max_deviation_rad:.6f} rad (overlap {report.overlap:.6f}); "
        "table written, equivalence not asserted"
    )
    return EXIT_OK


def cmd_cluster(config: ExperimentConfig, args) -> int:
    if config.cluster is None:
        raise ConfigError("config.cluster block required for the cluster command")
    lambda0 = _scheduler_lambda0(config)
    graph, schedules = lattice_schedule(
        config.cluster.rows, config.cluster.cols, lambda0, config.scheduler.ratio_min
    )
    final = run_schedules_eff(schedules)
    from .operators import fidelity as state_fidelity

    fid = state_fidelity(final, ideal_graph_state(graph))
    _dump_schedules(os.path.join(args.out, "cluster_schedule.json"), schedules)
    _write_csv(
        os.path.join(args.out, "cluster.csv"),
        _metadata(config, "eff", args.seed),
        ("rows", "cols", "layers", "fidelity_vs_ideal"),
        [(config.cluster.rows, config.cluster.cols, len(schedules), fid)],
    )
    print(
        f"cluster {config.cluster.rows}x{config.cluster.cols}: "
        f"layers={len(schedules)}, fidelity={fid:.12f}"
    )
    return EXIT_OK


def _sweep_table(payload):
    segments, num_dots, cutoff, gamma = payload
    table, _ = blockwise_tables(segments, num_dots, gamma, cutoff)
    return table


def cmd_decay_sweep(config: ExperimentConfig, args) -> int:
    from .config import SweepConfig

    sweep = config.sweep or SweepConfig()
    variants = sweep.variants or (tuple(d.delta_meV for d in config.dots),)
    ratios = sweep.ratios()
    rows = []
    for variant in variants:
        label = "deltas=" + "/".join(f"{d:g}" for d in variant)
        dots, schedule = _prepare_pair(config, deltas_override=variant)
        segments = tuple(engine_segments([schedule]))
        n = schedule.num_dots
        _, mult = blockwise_tables(segments, n, 0.0, config.fock_cutoff)
        t_zero = _sweep_table((segments, n, config.fock_cutoff, 0.0))
        gammas = [r / config.tau_w_ns for r in ratios]
        payloads = [(segments, n, config.fock_cutoff, g) for g in gammas]
        if config.workers > 1:
            with concurrent.futures.ProcessPoolExecutor(
                max_workers=config.workers
            ) as pool:
                tables = list(pool.map(_sweep_table, payloads))
        else:
            tables = [_sweep_table(p) for p in payloads]
        for ratio, table in zip(ratios, tables):
            fid = fidelity_from_tables(table, t_zero, mult, n)
            rows.append((label, ratio, fid))
        print(f"{label}: F(ratio=0)={rows[-len(ratios)][2]:.6f}, "
              f"F(ratio={ratios[-1]:g})={rows[-1][2]:.6f}")
    _write_csv(
        os.path.join(args.out, "decay_sweep.csv"),
        _metadata(config, "eff1", args.seed),
        ("variant", "tau_ratio", "fidelity"),
        rows,
    )
    if args.plot:
        from .plots import render_decay_sweep

        render_decay_sweep(rows, os.path.join(args.out, "decay_sweep.png"))
    return EXIT_OK


def cmd_scaling(config: ExperimentConfig, args) -> int:
    from .config import ScalingConfig

    scaling = config.scaling or ScalingConfig()
    lambda0 = _scheduler_lambda0(config)
    decay = DecayModel.from_tau(config.tau_w_ns)
    shapes = list(scaling.shapes)
    if scaling.include_transposes:
        for r, c in list(shapes):
            if (c, r) not in shapes:
                shapes.append((c, r))
    rows = []
    for r, c in shapes:
        _, schedules = lattice_schedule(
            r, c, lambda0, config.scheduler.ratio_min, parallel_groups=False
        )
        fid = decoherence_fidelity(
            schedules, decay, fock_cutoff=config.fock_cutoff
        )
        rows.append((f"{r}x{c}", len(schedules), fid))
        print(f"shape {r}x{c}: layers={len(schedules)}, F={fid:.9f}")
    _write_csv(
        os.path.join(args.out, "scaling.csv"),
        _metadata(config, "eff1", args.seed),
        ("shape", "layers", "F"),
        rows,
    )
    size_rows = []
    for n in scaling.graph_sizes:
        scheds = complete_graph_schedule(n, lambda0, config.scheduler.ratio_min)
        fid = decoherence_fidelity(scheds, decay, fock_cutoff=config.fock_cutoff)
        size_rows.append(("graph", n, len(scheds), fid))
        print(f"complete-graph state N={n}: F={fid:.9f}")
    for n in scaling.ncz_sizes:
        scheds, _ = ncz_schedule(n, lambda0, config.scheduler.ratio_min)
        fid = decoherence_fidelity(scheds, decay, fock_cutoff=config.fock_cutoff)
        size_rows.append(("ncz", n, len(scheds), fid))
        print(f"layered construction N={n}: F={fid:.9f}")
    if size_rows:
        _write_csv(
            os.path.join(args.out, "scaling_sizes.csv"),
            _metadata(config, "eff1", args.seed),
            ("kind", "num_dots", "layers", "F"),
            size_rows,
        )
    if args.plot:
        from .plots import render_scaling, render_size_scaling

        render_scaling(rows, os.path.join(args.out, "scaling.png"))
        if size_rows:
            render_size_scaling(size_rows, os.path.join(args.out, "scaling_sizes.png"))
    return EXIT_OK


def cmd_fock_check(config: ExperimentConfig, args) -> int:
    from .config import FockCheckConfig

    fc = config.fock_check or FockCheckConfig()
    dots, schedule = _prepare_pair(config)
    segments = tuple(engine_segments([schedule], dots))
    n = schedule.num_dots
    gamma = 1.0 / config.tau_w_ns

    def scenario(cutoff: int):
        spec = EvolutionSpec(t_final=schedule.t_total, model_tier="eff1")
        return blockwise_decoherence_evolve(
            dots,
            DecayModel.from_gamma(gamma),
            spec,
            fock_cutoff=cutoff,
            segments=segments,
        )

    report = fock_convergence_check(scenario, fc.cutoffs)
    print(report.summary())
    rows = [
        (a, b, c)
        for (a, b), c in zip(zip(report.cutoffs, report.cutoffs[1:]), report.changes)
    ]
    _write_csv(
        os.path.join(args.out, "fock_check.csv"),
        _metadata(config, "eff1", args.seed),
        ("cutoff_lo", "cutoff_hi", "change"),
        rows,
    )
    return EXIT_OK if report.converged else EXIT_NUMERICAL


_COMMANDS = {
    "validate": cmd_validate,
    "cz": cmd_cz,
    "null-gate": cmd_null_gate,
    "graph": cmd_graph,
    "ncz": cmd_ncz,
    "cluster": cmd_cluster,
    "decay-sweep": cmd_decay_sweep,
    "scaling": cmd_scaling,
    "fock-check": cmd_fock_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wgqed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--tier", choices=("full", "eff1", "eff"), default=None,
            help="override the configured model tier",
        )
        p.add_argument("--plot", action="store_true", help="render figures")
        p.add_argument("--seed", type=int, default=None, help="override rng seed")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is None:
        args.seed = config.rng_seed
    if args.out is None:
        args.out = config.output_dir
    try:
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, LeakageError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
