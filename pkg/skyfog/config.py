"""Configuration management for Skyfog."""

import copy
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from skyfog.exceptions import (
    InvalidConfigurationError,
    InvalidHorizonError,
    InvalidProbabilityError,
    InvalidStakeError,
    InvalidTimescaleError,
    InvalidYAMLError,
    PositionOutOfBoundsError,
    UnconfiguredScenarioError,
    UnknownNodeError,
    UnknownPresetError,
)
from skyfog.models import AttackerProfile, AttackKind, ScenarioConfig, SolverKind, SweepConfig

DEFAULT_CONFIG_PATH = "skyfog.yaml"


class Settings(BaseSettings):
    """Settings for Skyfog with environment variable support.

    Only fields that are set are merged, and only where the config file is silent.
    """

    model_config = SettingsConfigDict(
        env_prefix="SKYFOG_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    seed: Optional[int] = None
    horizon: Optional[float] = None
    solver: Optional[SolverKind] = None
    output_dir: Optional[str] = None
    verbose: Optional[bool] = None


_SETTINGS_PATHS = {
    "seed": ("simulation", "seed"),
    "horizon": ("simulation", "horizon"),
    "solver": ("offload", "solver"),
    "output_dir": ("simulation", "output_dir"),
    "verbose": ("output", "verbose"),
}


def load_config(config_path: Optional[Union[str, Path]] = None) -> ScenarioConfig:
    """Load a scenario from YAML, falling back to environment settings and defaults.

    Args:
        config_path: Path to the scenario file. If None, `skyfog.yaml` in the
            current directory is used when present.

    Returns:
        The scenario configuration.

    Raises:
        InvalidYAMLError: The file is not valid YAML.
        InvalidConfigurationError: The contents do not match the schema.
    """
    settings = Settings()
    path = Path(str(config_path)) if config_path is not None else Path(DEFAULT_CONFIG_PATH)
    if config_path is not None and not path.exists():
        raise InvalidConfigurationError(str(path), "file not found")

    config_data: Dict[str, Any] = {}
    if path.exists():
        try:
            with path.open(encoding="utf-8") as f:
                config_data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise InvalidYAMLError(str(path)) from e
        if not isinstance(config_data, dict):
            raise InvalidConfigurationError(str(path), "top level must be a mapping")

    config_data = _merge_config_with_env(config_data, settings)
    try:
        return ScenarioConfig(**config_data)
    except ValidationError as e:
        raise InvalidConfigurationError(str(path), _first_error(e)) from e


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def _merge_config_with_env(config_data: Dict[str, Any], settings: Settings) -> Dict[str, Any]:
    """Fill keys the file leaves out from SKYFOG_* environment settings."""
    merged = copy.deepcopy(config_data)
    for field, (section, key) in _SETTINGS_PATHS.items():
        value = getattr(settings, field)
        if value is None:
            continue
        block = merged.setdefault(section, {})
        if key not in block:
            block[key] = value.value if isinstance(value, SolverKind) else value
    return merged


def _scalar(value: Any) -> str:
    text = yaml.safe_dump(value, default_flow_style=True, width=1_000_000)
    return text.replace("\n...\n", "").strip()


def _render(model: BaseModel, indent: int = 0) -> List[str]:
    pad = "  " * indent
    data = model.model_dump(mode="json")
    lines: List[str] = []
    for name, field in type(model).model_fields.items():
        value = getattr(model, name)
        comment = f"  # {field.description}" if field.description else ""
        if isinstance(value, BaseModel):
            lines.append(f"{pad}{name}:{comment}")
            lines.extend(_render(value, indent + 1))
        elif isinstance(value, dict) and value and all(isinstance(item, BaseModel) for item in value.values()):
            lines.append(f"{pad}{name}:{comment}")
            for key, item in value.items():
                lines.append(f"{pad}  {_scalar(getattr(key, 'value', key))}:")
                lines.extend(_render(item, indent + 2))
        else:
            lines.append(f"{pad}{name}: {_scalar(data[name])}{comment}")
    return lines


def render_config(config: ScenarioConfig) -> str:
    """A scenario as YAML with every field's description as an inline comment."""
    header = [
        "# Skyfog scenario. Every value below is the default unless edited.",
        "# CLI flags (--seed, --horizon, --solver, --out, --plots, --dump-links) override it.",
        "",
    ]
    return "\n".join(header + _render(config)) + "\n"


def create_default_config(config_path: Union[str, Path] = DEFAULT_CONFIG_PATH) -> bool:
    """Create a commented default scenario file if none exists.

    Args:
        config_path: Path where to create the configuration file.

    Returns:
        True when a file was written.
    """
    config_file = Path(config_path)
    if config_file.exists():
        return False
    config_file.write_text(render_config(ScenarioConfig()), encoding="utf-8")
    return True


def validate_config(config: ScenarioConfig) -> None:
    """Cross-field checks the schema cannot express.

    Args:
        config: Scenario to validate.

    Raises:
        ConfigurationError: A specific subclass naming the offending value.
    """
    sim = config.simulation
    ratio = sim.mobility_step / sim.tti
    if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9:
        raise InvalidTimescaleError(sim.tti, sim.mobility_step)
    if sim.horizon < sim.tti:
        raise InvalidHorizonError(sim.horizon, sim.tti)

    compute = config.compute
    if len(compute.lambda_probs) != len(compute.lambda_types) or not math.isclose(
        sum(compute.lambda_probs), 1.0, abs_tol=1e-9,
    ) or any(p < 0 for p in compute.lambda_probs):
        raise InvalidProbabilityError(compute.lambda_probs)

    mobility, fleet = config.mobility, config.fleet
    for i, (x, y) in enumerate(fleet.rsu_positions):
        if not (0 <= x <= mobility.width and 0 <= y <= mobility.height):
            raise PositionOutOfBoundsError(f"rsu-{i}", (x, y))

    stakes = config.ledger.rsu_stakes
    if any(stake < 0 for stake in stakes) or len(stakes) != len(fleet.rsu_positions):
        raise InvalidStakeError(stakes)

    if fleet.task_vehicles and not (fleet.uav_count or fleet.rsu_positions):
        raise UnconfiguredScenarioError("task vehicles need at least one UAV or RSU zone manager")

    wired = config.channel.wired
    if fleet.cloud_enabled and wired.background_rate >= wired.service_rate:
        raise InvalidConfigurationError(
            "channel.wired",
            f"background_rate {wired.background_rate} must be below service_rate {wired.service_rate}",
        )

    names = _node_names(config)
    for profile in config.attacks:
        if profile.node not in names:
            raise UnknownNodeError(profile.node)


def _node_names(config: ScenarioConfig) -> set:
    fleet = config.fleet
    names = {f"tv-{i}" for i in range(fleet.task_vehicles)}
    names |= {f"sv-{i}" for i in range(fleet.serving_vehicles)}
    names |= {f"uav-{i}" for i in range(fleet.uav_count)}
    names |= {f"rsu-{i}" for i in range(len(fleet.rsu_positions))}
    if fleet.cloud_enabled:
        names.add("cloud")
    return names


def set_path(data: Dict[str, Any], dotted: str, value: Any) -> None:
    """Set `a.b.c` inside nested dicts, refusing keys that do not exist."""
    *parents, leaf = dotted.split(".")
    block = data
    for part in parents:
        if not isinstance(block.get(part), dict):
            raise InvalidConfigurationError(dotted, f"no section named {part!r}")
        block = block[part]
    if leaf not in block:
        raise InvalidConfigurationError(dotted, f"no field named {leaf!r}")
    block[leaf] = value


def apply_overrides(config: ScenarioConfig, **overrides: Any) -> ScenarioConfig:
    """Return a copy with CLI flags applied one-for-one; None means not given.

    Accepted keys: seed, horizon, solver, output_dir, dump_links, plots, verbose.
    """
    paths = {
        **_SETTINGS_PATHS,
        "dump_links": ("output", "dump_links"),
        "plots": ("output", "plots"),
    }
    data = config.model_dump(mode="json")
    for key, value in overrides.items():
        if key not in paths:
            raise InvalidConfigurationError(key, "not an overridable option")
        if value is None:
            continue
        section, field = paths[key]
        data[section][field] = value.value if isinstance(value, SolverKind) else value
    try:
        return ScenarioConfig(**data)
    except ValidationError as e:
        raise InvalidConfigurationError("<overrides>", _first_error(e)) from e


def expand_sweep(config: ScenarioConfig) -> List[ScenarioConfig]:
    """One config per sweep value, each writing to its own subdirectory."""
    if config.sweep is None:
        return [config]
    leaf = config.sweep.parameter.rsplit(".", 1)[-1]
    runs = []
    for value in config.sweep.values:
        data = config.model_dump(mode="json")
        data["sweep"] = None
        set_path(data, config.sweep.parameter, value)
        data["name"] = f"{config.name}-{leaf}-{value}"
        data["simulation"]["output_dir"] = str(Path(config.simulation.output_dir) / f"{leaf}-{value}")
        try:
            runs.append(ScenarioConfig(**data))
        except ValidationError as e:
            raise InvalidConfigurationError(config.sweep.parameter, _first_error(e)) from e
    return runs


def _single_rsu(serving: int, task: int) -> Callable[[], ScenarioConfig]:
    def build() -> ScenarioConfig:
        return ScenarioConfig(
            name=f"single-rsu-{serving}-{task}",
            description=f"Small offloading case: {serving} serving and {task} task vehicles around one RSU.",
            simulation={"output_dir": f"runs/single-rsu-{serving}-{task}"},
            mobility={"width": 600.0, "height": 600.0, "grid_rows": 4, "grid_cols": 4},
            fleet={
                "task_vehicles": task,
                "serving_vehicles": serving,
                "uav_count": 0,
                "rsu_positions": [(300.0, 300.0)],
                "cloud_enabled": True,
            },
            ledger={"rsu_stakes": [100.0]},
        )

    return build


def _deployment() -> ScenarioConfig:
    return ScenarioConfig(
        name="deployment",
        description="How many UAVs to deploy next to the two RSUs.",
        simulation={"output_dir": "runs/deployment"},
        sweep=SweepConfig(parameter="fleet.uav_count", values=[0, 2, 4, 6, 8]),
    )


def _trajectory() -> ScenarioConfig:
    return ScenarioConfig(
        name="trajectory",
        description="K-means UAV trajectories with 4 and 6 UAVs.",
        simulation={"output_dir": "runs/trajectory"},
        fleet={"task_vehicles": 50, "serving_vehicles": 50},
        sweep=SweepConfig(parameter="fleet.uav_count", values=[4, 6]),
    )


def _offloading() -> ScenarioConfig:
    return ScenarioConfig(
        name="offloading",
        description="50 task vehicles while the number of serving vehicles grows.",
        simulation={"output_dir": "runs/offloading"},
        fleet={"task_vehicles": 50},
        sweep=SweepConfig(parameter="fleet.serving_vehicles", values=[10, 30, 50, 70, 90]),
    )


def _security() -> ScenarioConfig:
    return ScenarioConfig(
        name="security",
        description="Audited offloading with an always-on, an on-off, and an identity-spoofing attacker.",
        simulation={"output_dir": "runs/security"},
        fleet={"task_vehicles": 20, "serving_vehicles": 20},
        ledger={"p_audit": 0.2},
        attacks=[
            AttackerProfile(node="sv-0", kind=AttackKind.ALWAYS_ON),
            AttackerProfile(node="sv-1", kind=AttackKind.ON_OFF, on_period=5.0, off_period=5.0),
            AttackerProfile(node="sv-2", kind=AttackKind.IDENTITY_SPOOF),
        ],
    )


def _resource_allocation() -> ScenarioConfig:
    return ScenarioConfig(
        name="resource-allocation",
        description="Greedy against window-based Hungarian with alternating refinement.",
        simulation={"output_dir": "runs/resource-allocation"},
        fleet={"task_vehicles": 30, "serving_vehicles": 30},
        sweep=SweepConfig(parameter="offload.solver", values=[SolverKind.GREEDY.value, SolverKind.WHO.value]),
    )


def _ledger_throughput() -> ScenarioConfig:
    return ScenarioConfig(
        name="ledger-throughput",
        description="Ledger throughput with 50 task vehicles, 50 serving vehicles, and 4 UAVs.",
        simulation={"output_dir": "runs/ledger-throughput", "horizon": 60.0},
        fleet={"task_vehicles": 50, "serving_vehicles": 50, "uav_count": 4},
    )


PRESETS: Dict[str, Callable[[], ScenarioConfig]] = {
    "deployment": _deployment,
    "trajectory": _trajectory,
    "offloading": _offloading,
    "security": _security,
    "resource-allocation": _resource_allocation,
    "single-rsu-5-5": _single_rsu(5, 5),
    "single-rsu-10-5": _single_rsu(10, 5),
    "single-rsu-5-10": _single_rsu(5, 10),
    "single-rsu-10-10": _single_rsu(10, 10),
    "ledger-throughput": _ledger_throughput,
}
MISSION_PRESETS = ("deployment", "trajectory", "offloading", "security", "resource-allocation")


def mission_preset(name: str) -> ScenarioConfig:
    """A ready-made scenario for one mission or published case.

    Raises:
        UnknownPresetError: Lists the mission presets, then the published cases.
    """
    if name not in PRESETS:
        cases = [preset for preset in PRESETS if preset not in MISSION_PRESETS]
        raise UnknownPresetError(name, list(MISSION_PRESETS), cases)
    return PRESETS[name]()
