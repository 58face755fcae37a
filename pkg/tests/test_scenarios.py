import pytest

from farfield.harness import resolve_config
from farfield.scenarios import SCENARIOS, get_scenario


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_passes_with_defaults(name):
    result = get_scenario(name).pipeline(resolve_config({"scenario": name}))
    failed = [flag for flag, passed in result.flags.items() if not passed]
    assert not failed, f"{name}: {failed}"
    assert result.tables


def test_scenario_descriptions():
    for scenario in SCENARIOS.values():
        description = scenario.describe()
        assert description["name"] == scenario.name
        assert scenario.defaults["extraction"]["schedule"]
