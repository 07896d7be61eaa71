import copy

import pytest

from wbansim.scenario import parse_scenario


def base_scenario_dict(**overrides):
    """A small valid CSMA scenario; tests tweak copies of it."""
    raw = {
        "mac": "csma",
        "horizon_s": 10.0,
        "seed": 1,
        "superframe": {"beacon_order": 3, "superframe_order": 3},
        "nodes": [
            {
                "id": 1,
                "class": "normal_high",
                "criticality": "critical",
                "placement": {"kind": "on_body", "x_m": 0.3},
                "traffic": {"rate_per_hour": 3600.0, "phase_s": 0.05},
            },
        ],
    }
    raw.update(copy.deepcopy(overrides))
    return raw


def make_scenario(name="scenario", **overrides):
    return parse_scenario(base_scenario_dict(**overrides), name=name)


@pytest.fixture
def tiny_scenario():
    return make_scenario()
