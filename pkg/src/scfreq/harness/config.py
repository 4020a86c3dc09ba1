"""YAML experiment configuration: parsing, validation and serialisation.

A configuration names a scenario (a built-in alias or an inline mapping) and
optionally overrides the model, optimizer, oracle, start mode, timing and
output settings.  Every key is validated; unknown keys are errors.  See the
README for the full schema.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..control_loop import OptimizerConfig, TimingModel
from ..domain import (
    DEFAULT_LASER_GRANULARITY,
    DEFAULT_SPACING,
    SCALING_CASES,
    TABLE1_CASES,
    InvalidInputError,
    LinkSpec,
    Modulation,
    Objective,
    ScenarioCase,
    SubchannelSpec,
    SuperchannelPlan,
    equidistant_distances,
)
from ..oracle import DEFAULT_CAP
from ..plm import PlmModel

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "OracleSettings",
    "ScenarioSpec",
    "StartSpec",
    "builtin_scenarios",
    "dump_config",
    "load_config",
    "read_config_mapping",
    "resolve_scenario",
]


class ConfigError(InvalidInputError):
    """Malformed or semantically invalid configuration."""


@dataclass(frozen=True)
class ScenarioSpec:
    """A uniform superchannel and the link it crosses."""

    name: str = "custom"
    subchannel_count: int = 4
    symbol_rate: float = 32.0
    roll_off: float = 0.1
    modulation: str = "QPSK"
    launch_power: float = 0.0
    filter_bandwidth: float = 137.5
    center_frequency: float = 193.1
    laser_granularity: float = DEFAULT_LASER_GRANULARITY
    spacing: float = DEFAULT_SPACING
    distances: tuple[float, ...] | None = None  # None: equidistant at ``spacing``
    link: LinkSpec = field(default_factory=LinkSpec)

    @property
    def subchannel(self) -> SubchannelSpec:
        return SubchannelSpec(self.symbol_rate, self.roll_off, Modulation(self.modulation), self.launch_power)

    def equidistant_plan(self) -> SuperchannelPlan:
        return self._plan(equidistant_distances(self.subchannel_count, self.filter_bandwidth, self.spacing))

    def plan(self) -> SuperchannelPlan:
        """The configured plan (explicit distances, else equidistant)."""
        if self.distances is None:
            return self.equidistant_plan()
        return self._plan(self.distances)

    def _plan(self, distances) -> SuperchannelPlan:
        return SuperchannelPlan(tuple(distances), self.filter_bandwidth, self.center_frequency,
                                (self.subchannel,) * self.subchannel_count, self.laser_granularity)


@dataclass(frozen=True)
class OracleSettings:
    half_range: float = 2.0  # GHz
    grid_step: float = 1.0  # GHz
    cap: int = DEFAULT_CAP
    workers: int = 1


@dataclass(frozen=True)
class StartSpec:
    mode: str = "equidistant"  # equidistant | explicit | random_drift
    distances: tuple[float, ...] | None = None
    range: float = 2.0  # GHz, random_drift only
    count: int = 10
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenario: ScenarioSpec
    model: PlmModel
    objectives: tuple[Objective, ...]
    step_sizes: tuple[float, ...]
    optimizer: OptimizerConfig
    oracle: OracleSettings | None
    start: StartSpec
    timing: TimingModel
    output_dir: str | None = None
    workers: int = 1

    def optimizer_for(self, f_step: float, seed_offset: int = 0) -> OptimizerConfig:
        return dataclasses.replace(self.optimizer, f_step=f_step,
                                   rng_seed=self.optimizer.rng_seed + seed_offset)


# -- built-in scenarios -----------------------------------------------------------

def _from_case(alias: str, case: ScenarioCase) -> ScenarioSpec:
    return ScenarioSpec(
        name=alias,
        subchannel_count=case.subchannel_count,
        roll_off=case.roll_off,
        modulation=case.modulation.value,
        filter_bandwidth=case.filter_bandwidth,
        link=case.link(),
    )


def builtin_scenarios() -> dict[str, tuple[ScenarioSpec, dict[str, Any]]]:
    """Alias -> (scenario, default overrides for the other sections)."""
    out: dict[str, tuple[ScenarioSpec, dict[str, Any]]] = {}
    for cid, case in TABLE1_CASES.items():
        out[f"table1-case{cid}"] = (_from_case(f"table1-case{cid}", case),
                                    {"minibatch_size": case.minibatch_size})
    for cid, case in SCALING_CASES.items():
        alias = f"scaling-{cid.lower()}"
        out[alias] = (_from_case(alias, case),
                      {"minibatch_size": case.minibatch_size, "f_step": 0.5, "half_range": 1.0})
    return out


def resolve_scenario(alias: str) -> ScenarioSpec:
    try:
        return builtin_scenarios()[alias][0]
    except KeyError:
        raise ConfigError(f"scenario: unknown built-in {alias!r}; known: {sorted(builtin_scenarios())}") from None


# -- parsing ----------------------------------------------------------------------

_TOP_KEYS = {"name", "scenario", "model", "objectives", "optimizer", "oracle", "start", "timing",
             "output", "workers"}
_SCENARIO_KEYS = {f.name for f in dataclasses.fields(ScenarioSpec)} | {"base"}
_LINK_KEYS = {f.name for f in dataclasses.fields(LinkSpec)}
_MODEL_KEYS = {f.name for f in dataclasses.fields(PlmModel) if f.init and f.name != "link"}
_OPT_KEYS = {f.name for f in dataclasses.fields(OptimizerConfig)} | {"step_sizes"}
_ORACLE_KEYS = {f.name for f in dataclasses.fields(OracleSettings)} | {"enabled"}
_START_KEYS = {f.name for f in dataclasses.fields(StartSpec)}
_TIMING_KEYS = {f.name for f in dataclasses.fields(TimingModel)}
_OUTPUT_KEYS = {"dir"}


def _mapping(value: Any, where: str) -> dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
    return dict(value)


def _check_keys(data: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key(s) {', '.join(prefix + str(k) for k in unknown)}; "
                          f"allowed: {', '.join(sorted(allowed))}")


def _number(value: Any, where: str, integer: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _build(cls, data: Mapping[str, Any], where: str, **extra):
    """Instantiate a dataclass, coercing numbers and re-raising errors with a field path."""
    kwargs = dict(extra)
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    for key, value in data.items():
        kind = str(types.get(key, ""))
        if kind in ("int",):
            value = _number(value, f"{where}.{key}", integer=True)
        elif kind in ("float",):
            value = _number(value, f"{where}.{key}")
        elif kind == "bool" and not isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected true/false, got {value!r}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except InvalidInputError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _distances(value: Any, where: str) -> tuple[float, ...] | None:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where}: expected a list of distances in GHz")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _parse_scenario(raw: Any) -> tuple[ScenarioSpec, dict[str, Any]]:
    if raw is None:
        raw = "table1-case1"
    if isinstance(raw, str):
        builtins = builtin_scenarios()
        if raw not in builtins:
            raise ConfigError(f"scenario: unknown built-in {raw!r}; known: {', '.join(sorted(builtins))}")
        return builtins[raw]
    data = _mapping(raw, "scenario")
    _check_keys(data, _SCENARIO_KEYS, "scenario")
    defaults: dict[str, Any] = {}
    base = ScenarioSpec()
    if "base" in data:
        base, defaults = _parse_scenario(data.pop("base"))
        base = dataclasses.replace(base, name="custom")
    link_data = _mapping(data.pop("link", None), "scenario.link")
    _check_keys(link_data, _LINK_KEYS, "scenario.link")
    link = _build(LinkSpec, {**dataclasses.asdict(base.link), **link_data}, "scenario.link")
    if "distances" in data:
        data["distances"] = _distances(data["distances"], "scenario.distances")
    if "modulation" in data:
        try:
            data["modulation"] = Modulation(str(data["modulation"]).upper()).value
        except ValueError:
            raise ConfigError(f"scenario.modulation: unknown format {data['modulation']!r}") from None
    if "name" in data and not isinstance(data["name"], str):
        raise ConfigError("scenario.name: expected a string")
    merged = {**{f.name: getattr(base, f.name) for f in dataclasses.fields(ScenarioSpec) if f.name != "link"},
              **data}
    spec = _build(ScenarioSpec, merged, "scenario", link=link)
    if spec.subchannel_count < 2:
        raise ConfigError("scenario.subchannel_count: at least 2 subchannels")
    try:
        spec.plan()
    except InvalidInputError as exc:
        raise ConfigError(f"scenario: {exc}") from None
    return spec, defaults


def _parse_objectives(raw: Any) -> tuple[Objective, ...]:
    if raw is None:
        return (Objective.AVERAGE_SNR, Objective.MIN_SNR)
    items = raw if isinstance(raw, list) else [raw]
    if not items:
        raise ConfigError("objectives: need at least one objective")
    out = []
    for item in items:
        try:
            obj = Objective.parse(item)
        except InvalidInputError as exc:
            raise ConfigError(f"objectives: {exc}") from None
        if obj not in out:
            out.append(obj)
    return tuple(out)


def _parse_yaml(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"parse error at {where}{exc.problem or exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from None


def read_config_mapping(source: str | Path | Mapping[str, Any] | None) -> dict[str, Any]:
    """Raw (unvalidated) configuration mapping from a path, YAML text or mapping."""
    if source is None:
        return {}
    if isinstance(source, Mapping):
        return dict(source)
    text = str(source)
    path = Path(text) if isinstance(source, Path) or "\n" not in text else None
    if path is not None and path.suffix in (".yaml", ".yml", ".json") and not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path is not None and path.is_file():
        text = path.read_text()
    data = _parse_yaml(text)
    if data is None:
        return {}
    if isinstance(data, str):
        return {"scenario": data}  # a bare alias is a valid config
    return _mapping(data, "config")


def load_config(source: str | Path | Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Parse and validate a configuration.

    *source* may be a path to a YAML file, YAML text, an already-parsed
    mapping, or None for the default scenario with default settings.
    """
    data = read_config_mapping(source)
    data = _mapping(data, "config")
    _check_keys(data, _TOP_KEYS, "")

    scenario, defaults = _parse_scenario(data.get("scenario"))

    model_data = _mapping(data.get("model"), "model")
    _check_keys(model_data, _MODEL_KEYS, "model")
    if "implementation_penalty" in model_data:
        pen = _mapping(model_data["implementation_penalty"], "model.implementation_penalty")
        try:
            model_data["implementation_penalty"] = tuple(
                sorted((Modulation(str(k).upper()).value, _number(v, f"model.implementation_penalty.{k}"))
                       for k, v in pen.items()))
        except ValueError as exc:
            raise ConfigError(f"model.implementation_penalty: {exc}") from None
    model = _build(PlmModel, model_data, "model", link=scenario.link)

    opt_data = _mapping(data.get("optimizer"), "optimizer")
    _check_keys(opt_data, _OPT_KEYS, "optimizer")
    steps_raw = opt_data.pop("step_sizes", None)
    if steps_raw is not None and "f_step" in opt_data:
        raise ConfigError("optimizer: give either f_step or step_sizes, not both")
    if steps_raw is not None:
        items = steps_raw if isinstance(steps_raw, list) else [steps_raw]
        if not items:
            raise ConfigError("optimizer.step_sizes: need at least one step size")
        step_sizes = tuple(_number(s, f"optimizer.step_sizes[{i}]") for i, s in enumerate(items))
    else:
        step_sizes = (_number(opt_data.get("f_step", defaults.get("f_step", 0.25)), "optimizer.f_step"),)
    opt_data.pop("f_step", None)
    opt_data.setdefault("minibatch_size", defaults.get("minibatch_size", 2))
    for i, s in enumerate(step_sizes):
        _build(OptimizerConfig, {**opt_data, "f_step": s}, f"optimizer.step_sizes[{i}]")
    optimizer = _build(OptimizerConfig, {**opt_data, "f_step": step_sizes[0]}, "optimizer")
    if optimizer.minibatch_size > scenario.subchannel_count:
        raise ConfigError(f"optimizer.minibatch_size: {optimizer.minibatch_size} exceeds "
                          f"{scenario.subchannel_count} subchannels")

    oracle_raw = data.get("oracle", {})
    oracle: OracleSettings | None
    if oracle_raw is False or (isinstance(oracle_raw, Mapping) and oracle_raw.get("enabled") is False):
        oracle = None
    else:
        oracle_data = _mapping(oracle_raw if oracle_raw is not True else {}, "oracle")
        _check_keys(oracle_data, _ORACLE_KEYS, "oracle")
        oracle_data.pop("enabled", None)
        oracle_data.setdefault("half_range", defaults.get("half_range", 2.0))
        oracle = _build(OracleSettings, oracle_data, "oracle")
        if oracle.half_range < 0 or not oracle.grid_step > 0 or oracle.cap < 1 or oracle.workers < 1:
            raise ConfigError("oracle: half_range >= 0, grid_step > 0, cap >= 1 and workers >= 1 required")
        k = oracle.half_range / oracle.grid_step
        if abs(k - round(k)) > 1e-9:
            raise ConfigError("oracle.half_range: must be a multiple of oracle.grid_step")

    start_data = _mapping(data.get("start"), "start")
    _check_keys(start_data, _START_KEYS, "start")
    if "distances" in start_data:
        start_data["distances"] = _distances(start_data["distances"], "start.distances")
    if "mode" in start_data and not isinstance(start_data["mode"], str):
        raise ConfigError("start.mode: expected a string")
    start = _build(StartSpec, start_data, "start")
    if start.mode not in ("equidistant", "explicit", "random_drift"):
        raise ConfigError(f"start.mode: {start.mode!r} is not one of equidistant, explicit, random_drift")
    if start.mode == "explicit":
        if start.distances is None:
            raise ConfigError("start.distances: required when start.mode is explicit")
        try:
            scenario._plan(start.distances)
        except InvalidInputError as exc:
            raise ConfigError(f"start.distances: {exc}") from None
    elif start.distances is not None:
        raise ConfigError(f"start.distances: only allowed when start.mode is explicit, not {start.mode}")
    if start.mode == "random_drift" and (start.count < 1 or start.range < 0):
        raise ConfigError("start: random_drift needs count >= 1 and range >= 0")

    timing_data = _mapping(data.get("timing"), "timing")
    _check_keys(timing_data, _TIMING_KEYS, "timing")
    timing = _build(TimingModel, timing_data, "timing")

    output_data = _mapping(data.get("output"), "output")
    _check_keys(output_data, _OUTPUT_KEYS, "output")
    out_dir = output_data.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output.dir: expected a path string")

    name = data.get("name", scenario.name)
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        raise ConfigError("name: expected a non-empty string without path separators")
    workers = _number(data.get("workers", 1), "workers", integer=True)
    if workers < 1:
        raise ConfigError("workers: must be >= 1")

    return ExperimentConfig(
        name=name,
        scenario=scenario,
        model=model,
        objectives=_parse_objectives(data.get("objectives")),
        step_sizes=step_sizes,
        optimizer=optimizer,
        oracle=oracle,
        start=start,
        timing=timing,
        output_dir=out_dir,
        workers=workers,
    )


# -- serialisation ----------------------------------------------------------------

def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, Objective):
        return value.value
    return value


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Fully resolved configuration as plain data (the inverse of :func:`load_config`)."""
    sc = config.scenario
    scenario = {f.name: _plain(getattr(sc, f.name)) for f in dataclasses.fields(sc) if f.name != "link"}
    scenario["link"] = dataclasses.asdict(sc.link)
    model = {f.name: _plain(getattr(config.model, f.name))
             for f in dataclasses.fields(config.model) if f.init and f.name != "link"}
    model["implementation_penalty"] = dict(config.model.implementation_penalty)
    opt = {f.name: getattr(config.optimizer, f.name) for f in dataclasses.fields(config.optimizer)
           if f.name != "f_step"}
    opt["step_sizes"] = list(config.step_sizes)
    out: dict[str, Any] = {
        "name": config.name,
        "scenario": scenario,
        "model": model,
        "objectives": [o.value for o in config.objectives],
        "optimizer": opt,
        "oracle": dataclasses.asdict(config.oracle) if config.oracle else {"enabled": False},
        "start": {k: _plain(v) for k, v in dataclasses.asdict(config.start).items()},
        "timing": dataclasses.asdict(config.timing),
        "output": {"dir": config.output_dir},
        "workers": config.workers,
    }
    if out["start"]["distances"] is None:
        del out["start"]["distances"]
    return out


def dump_config(config: ExperimentConfig) -> str:
    """YAML text that :func:`load_config` parses back to an equal configuration."""
    return yaml.safe_dump(config_to_dict(config), sort_keys=True, default_flow_style=False)
