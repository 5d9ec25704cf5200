"""Shared fixtures for the Skyfog tests."""

from pathlib import Path

import pytest

from skyfog.models import ScenarioConfig


def small_scenario(output_dir: Path, **sections) -> ScenarioConfig:
    """A few vehicles around one RSU and one UAV, two simulated seconds."""
    data = {
        "name": "small",
        "simulation": {"seed": 3, "horizon": 2.0, "output_dir": str(output_dir)},
        "mobility": {"width": 600.0, "height": 600.0, "grid_rows": 4, "grid_cols": 4},
        "fleet": {
            "task_vehicles": 3,
            "serving_vehicles": 3,
            "uav_count": 1,
            "rsu_positions": [(300.0, 300.0)],
        },
        "ledger": {"rsu_stakes": [100.0]},
    }
    for section, values in sections.items():
        if isinstance(values, dict):
            data.setdefault(section, {}).update(values)
        else:
            data[section] = values
    return ScenarioConfig(**data)


@pytest.fixture
def small_config(tmp_path: Path) -> ScenarioConfig:
    return small_scenario(tmp_path / "run")
