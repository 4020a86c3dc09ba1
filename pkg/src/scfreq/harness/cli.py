"""Command-line interface (``scfreq`` / ``python -m scfreq``).

Exit codes: 0 success, 1 configuration error, 2 runtime or monitor error,
3 oracle grid larger than the cap.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from ..domain import InvalidInputError, LinkSpec, SubchannelSpec, objective_value
from ..oracle import GridCapExceeded, GridSearchSpec, brute_force
from ..plm import PlmModel, SurrogateMonitor
from .config import ConfigError, OracleSettings, builtin_scenarios, load_config, read_config_mapping
from .experiment import load_results, run_experiment, start_plans
from .report import report
from .sweep import sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CAP = 0, 1, 2, 3

log = logging.getLogger("scfreq")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers separated by commas, got {text!r}") from None


def _common(p: argparse.ArgumentParser, objective: bool = True, step: bool = True) -> None:
    p.add_argument("--config", help="YAML configuration file (default: the table1-case1 scenario)")
    p.add_argument("--scenario", help="built-in scenario alias, overriding the config's scenario")
    p.add_argument("--seed", type=int, help="seed for monitor noise, the optimizer and drifted starts")
    p.add_argument("--noise", type=float, help="monitor noise standard deviation in dB")
    p.add_argument("--out", help="output directory for artifacts")
    if objective:
        p.add_argument("--objective", help="average or min (default: both, or as configured)")
    if step:
        p.add_argument("--step", type=_floats, help="f_step in GHz; a comma list runs several")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scfreq", description="Superchannel subcarrier frequency optimisation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenarios", help="list the built-in scenarios")
    p.add_argument("--out", help="also write the list as CSV to this directory")

    p = sub.add_parser("simulate", help="evaluate the SNR of one plan")
    _common(p, step=False)
    p.add_argument("--distances", type=_floats, help="distance vector in GHz (default: the start plan)")

    p = sub.add_parser("optimize", help="run the closed-loop optimizer")
    _common(p)
    p.add_argument("--no-oracle", action="store_true", help="skip the brute-force comparison")

    p = sub.add_parser("bruteforce", help="exhaustive grid search around a plan")
    _common(p, step=False)
    p.add_argument("--distances", type=_floats, help="centre plan (default: the start plan)")
    p.add_argument("--half-range", type=float, help="GHz either side of each carrier (default: as configured)")
    p.add_argument("--grid-step", type=float, help="grid step in GHz (default: as configured)")
    p.add_argument("--force", action="store_true", help="run even when the grid exceeds the cap")

    p = sub.add_parser("sweep", help="three-carrier spacing sweep")
    _common(p, objective=False, step=False)
    p.add_argument("--d-total", type=float, default=69.0, help="d1 + d2 in GHz (default 69)")
    p.add_argument("--grid-step", type=float, default=0.25, help="d1 step in GHz (default 0.25)")
    p.add_argument("--window", type=float, default=2.0, help="concavity window around the centre, GHz")
    p.add_argument("--spans", type=int, default=0, help="spans when no config is given (default 0, back to back)")
    p.add_argument("--ripple", action="store_true", help="keep the gain ripple (off by default)")

    p = sub.add_parser("report", help="summarise persisted results")
    p.add_argument("results", nargs="+", help="JSON files written by optimize")
    p.add_argument("--out", help="write report.txt to this directory")
    return parser


def _section(data: dict, key: str) -> dict:
    value = data.get(key)
    if not isinstance(value, dict):
        value = data[key] = {} if value in (None, True) else value
    return value


def _load(args: argparse.Namespace, objective: bool = True, step: bool = True):
    """Config from --config with the command-line overrides applied before validation."""
    data = read_config_mapping(args.config)
    if args.scenario:
        data["scenario"] = args.scenario
        data.setdefault("name", args.scenario)
    if args.seed is not None:
        _section(data, "model")["rng_seed"] = args.seed
        _section(data, "optimizer")["rng_seed"] = args.seed
        _section(data, "start")["seed"] = args.seed
    if args.noise is not None:
        _section(data, "model")["monitor_noise_sigma"] = args.noise
    if objective and getattr(args, "objective", None):
        data["objectives"] = [args.objective]
    if step and getattr(args, "step", None):
        opt = _section(data, "optimizer")
        opt.pop("f_step", None)
        opt["step_sizes"] = args.step
    if getattr(args, "no_oracle", False):
        data["oracle"] = {"enabled": False}
    if args.out:
        data["output"] = {"dir": args.out}
    return load_config(data)


def _plan(config, distances):
    if not distances:
        return start_plans(config)[0]
    try:
        return config.scenario._plan(distances)
    except InvalidInputError as exc:
        raise ConfigError(f"--distances: {exc}") from None


def _cmd_scenarios(args) -> int:
    lines = ["alias,subchannels,modulation,roll_off,spans,filters,filter_bandwidth_ghz,minibatch"]
    for alias, (sc, defaults) in builtin_scenarios().items():
        lines.append(f"{alias},{sc.subchannel_count},{sc.modulation},{sc.roll_off:g},{sc.link.span_count},"
                     f"{sc.link.filter_count},{sc.filter_bandwidth:g},{defaults['minibatch_size']}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "scenarios.csv").write_text(text)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = _load(args, step=False)
    plan = _plan(config, args.distances)
    monitor = SurrogateMonitor(config.model)
    rep = monitor.measure(plan)
    out = {
        "scenario": config.scenario.name,
        "distances": list(plan.distances),
        "offsets": [float(x) for x in plan.offsets],
        "snr": list(rep.snr),
        "noise_applied": rep.noise_applied,
        "objectives": {o.value: objective_value(rep, o) for o in config.objectives},
    }
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if config.output_dir:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        (Path(config.output_dir) / f"{config.name}-snr.json").write_text(text)
    return EXIT_OK


def _cmd_optimize(args) -> int:
    config = _load(args)
    result = run_experiment(config)
    sys.stdout.write(report(result.runs, result.warnings))
    for kind, path in result.paths.items():
        log.info("wrote %s %s", kind, path)
    if any(r.status == "error" for r in result.runs):
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_bruteforce(args) -> int:
    config = _load(args, step=False)
    plan = _plan(config, args.distances)
    settings = config.oracle or OracleSettings()
    half = settings.half_range if args.half_range is None else args.half_range
    step = settings.grid_step if args.grid_step is None else args.grid_step
    model = dataclasses.replace(config.model, monitor_noise_sigma=0.0)
    summary = {"scenario": config.scenario.name, "center": list(plan.distances),
               "half_range": half, "grid_step": step, "runs": []}
    for obj in config.objectives:
        spec = GridSearchSpec(plan, half, step, obj)
        res = brute_force(spec, model, cap=settings.cap, force=args.force,
                          keep_table=bool(config.output_dir), workers=settings.workers)
        summary["runs"].append({
            "objective": obj.value,
            "evaluations": res.evaluations,
            "infeasible": res.infeasible,
            "best_value": res.best_value,
            "best_distances": list(res.best_plan.distances) if res.best_plan else None,
            "worst_value": res.worst_value,
            "worst_offsets": list(res.worst_offsets),
            "worst_feasible": res.worst_feasible,
            "margin": res.margin,
        })
        if config.output_dir and res.table is not None:
            out = Path(config.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            n = plan.n
            header = ",".join([*(f"offset{i}_ghz" for i in range(n)), *(f"snr{i}_db" for i in range(n)),
                               "objective_db", "feasible"])
            rows = (",".join(f"{v:.6f}" for v in row[:-1]) + f",{int(row[-1])}" for row in res.table)
            (out / f"{config.name}-bruteforce-{obj.value}.csv").write_text(header + "\n" + "\n".join(rows) + "\n")
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if config.output_dir:
        (Path(config.output_dir) / f"{config.name}-bruteforce.json").write_text(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.config or args.scenario:
        config = _load(args, objective=False, step=False)
        spec, model = config.scenario.subchannel, config.model
    else:
        spec = SubchannelSpec()
        model = PlmModel(link=LinkSpec(span_count=args.spans, filter_count=1))
    model = dataclasses.replace(model, monitor_noise_sigma=0.0,
                                ripple_amplitude=model.ripple_amplitude if args.ripple else 0.0)
    res = sweep(spec, args.d_total, args.grid_step, model, window=args.window)
    text = res.csv_text()
    sys.stdout.write(text)
    sys.stdout.write(f"# peak d1 = {res.peak:g} GHz, max second difference in window = "
                     f"{res.max_second_difference:.3e} dB/GHz^2\n")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.csv").write_text(text)
    return EXIT_OK


def _cmd_report(args) -> int:
    runs, warnings = [], []
    for path in args.results:
        try:
            r, w = load_results(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read results {path}: {exc}") from None
        runs.extend(r)
        warnings.extend(w)
    text = report(runs, warnings)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "report.txt").write_text(text)
    return EXIT_OK


_COMMANDS = {
    "scenarios": _cmd_scenarios,
    "simulate": _cmd_simulate,
    "optimize": _cmd_optimize,
    "bruteforce": _cmd_bruteforce,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridCapExceeded as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (InvalidInputError, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
