import pytest

from patchplan.scenario import scenario_from_dict
from patchplan.scenario_library import build_scenario, build_scenario_dict


@pytest.fixture
def walking():
    """Point-contact walker on flat ground, short horizon."""
    return build_scenario("walking-flat", "desk", horizon=3)


@pytest.fixture
def climbing():
    """Patch-contact climber on three faces of four holds."""
    return build_scenario("climbing-4-holds", "desk", horizon=2)


@pytest.fixture
def walking_document():
    return build_scenario_dict("walking-flat", "desk", horizon=3)


@pytest.fixture
def standing():
    """Walker whose target is its initial pose, so a motionless plan is feasible."""
    data = build_scenario_dict("walking-flat", "desk", horizon=2)
    data["target"] = {"r": list(data["initial"]["r"])}
    return scenario_from_dict(data)
