import json
from pathlib import Path

import pytest

from gridtwin.twin import (
    Action,
    ApplianceSpec,
    ComfortProfile,
    PanelConfig,
    TurbineConfig,
    TwinConfig,
    ZoneSpec,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
DEMO_CONFIG_PATH = REPO_ROOT / "configs" / "demo.json"


def flat_curve(value: float) -> tuple[float, ...]:
    return (float(value),) * 24


@pytest.fixture
def thermal_config() -> TwinConfig:
    """One heated zone, no shiftable appliances, flat weather."""
    return TwinConfig(
        horizon=3,
        appliances=(ApplianceSpec("heater", 2.0, "thermal", zone="main"),),
        zones=(ZoneSpec("main", 20.0, r_th=5.0, c_th=10.0),),
        comfort=ComfortProfile((20.0,), beta=0.0, lambda_unsat=0.0),
        panel=PanelConfig(),
        turbine=TurbineConfig(),
        price_curve=flat_curve(0.2),
        irradiance_curve=flat_curve(0.0),
        wind_curve=flat_curve(0.0),
        outdoor_curve=flat_curve(10.0),
    )


@pytest.fixture
def sched_config() -> TwinConfig:
    """3-hour horizon, one 1-slot shiftable appliance, price dip at hour 1."""
    price = [0.5, 0.1, 0.5] + [0.5] * 21
    return TwinConfig(
        horizon=3,
        appliances=(
            ApplianceSpec("washer", 1.5, "shiftable",
                          earliest_start=0, latest_end=2, required_hours=1),
        ),
        zones=(ZoneSpec("main", 21.0, r_th=6.0, c_th=8.0),),
        comfort=ComfortProfile((21.0,), beta=0.0, lambda_unsat=5.0),
        panel=PanelConfig(),
        turbine=TurbineConfig(),
        price_curve=tuple(price),
        irradiance_curve=flat_curve(0.0),
        wind_curve=flat_curve(0.0),
        outdoor_curve=flat_curve(21.0),
    )


@pytest.fixture
def two_appliance_config() -> TwinConfig:
    return TwinConfig(
        horizon=4,
        appliances=(
            ApplianceSpec("washer", 1.5, "shiftable",
                          earliest_start=0, latest_end=3, required_hours=1),
            ApplianceSpec("heater", 2.0, "thermal", zone="main"),
        ),
        zones=(ZoneSpec("main", 21.0, r_th=5.0, c_th=10.0),),
        comfort=ComfortProfile((21.0,), beta=0.1, lambda_unsat=1.0),
        panel=PanelConfig(eta_area=0.15, rated_kw=5.0),
        turbine=TurbineConfig(cut_in=3, rated_speed=12, cut_out=25, rated_kw=4.0),
        price_curve=flat_curve(0.2),
        outdoor_curve=flat_curve(15.0),
    )


@pytest.fixture(scope="session")
def demo_config_dict() -> dict:
    with open(DEMO_CONFIG_PATH) as fh:
        return json.load(fh)


def small_run_config(seed: int = 7) -> dict:
    """Fast end-to-end config for service/CLI tests: 8-hour episode, one
    appliance, short training budgets."""
    return {
        "seed": seed,
        "twin": {
            "horizon": 8,
            "appliances": [
                {"id": "washer", "power_kw": 1.5, "kind": "shiftable",
                 "earliest_start": 1, "latest_end": 5, "required_hours": 2},
            ],
            "zones": [{"id": "main", "initial_temp_c": 21.0, "r_th": 6.0, "c_th": 8.0}],
            "comfort": {"desired_temp_c": {"main": 21.0}, "beta": 0.0, "lambda_unsat": 5.0},
            "panel": {"eta_area": 2.0, "rated_kw": 1.0},
            "turbine": {"cut_in": 3.0, "rated_speed": 11.0, "cut_out": 25.0, "rated_kw": 0.5},
            "price_curve": [0.3, 0.1, 0.4, 0.2, 0.15, 0.3, 0.25, 0.2] + [0.2] * 16,
        },
        "surrogate": {"hidden_layers": [8], "epochs": 80,
                      "learning_rate": 0.0005, "training_episodes": 3},
        "agent": {"episodes": 400, "alpha": 0.5, "gamma": 1.0},
        "network": {"throughput_tps": 100.0, "latency_s": 0.01,
                    "participants": ["agent", "meter", "twin"]},
        "datagen": {"hours": 24},
    }


def legal_random_action(twin, space, state, rng) -> Action:
    legal = space.legal_indices(state)
    return space.actions[legal[int(rng.integers(len(legal)))]]
