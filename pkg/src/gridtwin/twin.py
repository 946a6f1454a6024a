"""Digital twin of a small smart building.

Hour-resolution simulation of appliance loads, first-order RC zone
thermals, rooftop solar and small-wind generation, and time-of-use
pricing. The twin exposes an episodic reset/step interface for the
scheduling agent. Renewable output is consumed before grid energy
(merit order), and the step reward is the negated sum of energy cost,
beta-weighted comfort deviation and lambda-weighted unmet demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, IllegalActionError, InputError

SHIFTABLE = "shiftable"
THERMAL = "thermal"
FIXED = "fixed"
APPLIANCE_KINDS = (SHIFTABLE, THERMAL, FIXED)

# Fallback daily profiles used when a config omits its weather curves.
DEFAULT_IRRADIANCE = (
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    80.0, 220.0, 400.0, 560.0, 700.0, 800.0, 850.0, 830.0,
    740.0, 600.0, 420.0, 240.0, 100.0, 30.0,
    0.0, 0.0, 0.0, 0.0,
)
DEFAULT_WIND = (
    5.2, 5.0, 4.8, 4.7, 4.6, 4.8, 5.1, 5.5, 6.0, 6.4, 6.8, 7.1,
    7.4, 7.6, 7.5, 7.2, 6.9, 6.5, 6.2, 5.9, 5.7, 5.5, 5.4, 5.3,
)
DEFAULT_OUTDOOR = (
    12.0, 11.5, 11.0, 10.6, 10.3, 10.2, 10.5, 11.3, 12.4, 13.8, 15.2, 16.5,
    17.5, 18.2, 18.5, 18.3, 17.6, 16.6, 15.4, 14.3, 13.5, 12.9, 12.5, 12.2,
)


@dataclass(frozen=True)
class ApplianceSpec:
    """One appliance.

    ``shiftable`` appliances are commanded on/off by the agent inside
    their [earliest_start, latest_end] hour window and must accumulate
    ``required_hours`` of runtime. ``fixed`` appliances draw power every
    hour. ``thermal`` appliances are zone heaters: their rating caps the
    heat_power command for the zone they serve.
    """

    id: str
    power_kw: float
    kind: str = SHIFTABLE
    earliest_start: int = 0
    latest_end: int = 23
    required_hours: int = 0
    zone: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in APPLIANCE_KINDS:
            raise ConfigError(f"appliance {self.id!r}: unknown kind {self.kind!r}")
        if not self.power_kw > 0:
            raise ConfigError(f"appliance {self.id!r}: power_kw must be > 0")
        if self.kind == SHIFTABLE:
            if self.earliest_start > self.latest_end:
                raise ConfigError(f"appliance {self.id!r}: window start after end")
            if self.earliest_start < 0:
                raise ConfigError(f"appliance {self.id!r}: negative window start")
            window = self.latest_end - self.earliest_start + 1
            if not 0 <= self.required_hours <= window:
                raise ConfigError(
                    f"appliance {self.id!r}: required_hours {self.required_hours} "
                    f"exceeds window of {window} h"
                )
        if self.kind == THERMAL and self.zone is None:
            raise ConfigError(f"appliance {self.id!r}: thermal appliance needs a zone")


@dataclass(frozen=True)
class ZoneSpec:
    """Thermal zone with first-order RC dynamics.

    r_th is the resistance to outdoors in degC per kW of steady loss,
    c_th the capacitance in kWh per degC.
    """

    id: str
    initial_temp_c: float
    r_th: float
    c_th: float

    def validate(self) -> None:
        if self.r_th <= 0 or self.c_th <= 0:
            raise ConfigError(f"zone {self.id!r}: r_th and c_th must be > 0")


@dataclass(frozen=True)
class ComfortProfile:
    desired_temp_c: tuple[float, ...]  # aligned with TwinConfig.zones
    beta: float = 0.0
    lambda_unsat: float = 0.0

    def validate(self) -> None:
        if self.beta < 0 or self.lambda_unsat < 0:
            raise ConfigError("comfort weights must be >= 0")


@dataclass(frozen=True)
class PanelConfig:
    """PV array: output = min(eta_area * irradiance / 1000, rated_kw).

    eta_area is the efficiency-area product in kW per kW/m^2 of
    irradiance, so 1000 W/m^2 through eta_area 0.15 yields 0.15 kW.
    """

    eta_area: float = 0.0
    rated_kw: float = 0.0

    def validate(self) -> None:
        if self.eta_area < 0 or self.rated_kw < 0:
            raise ConfigError("panel parameters must be >= 0")


@dataclass(frozen=True)
class TurbineConfig:
    """Piecewise wind power curve: zero outside [cut_in, cut_out], rated
    from rated_speed up to cut_out, cubic ramp between cut_in and rated.
    """

    cut_in: float = 3.0
    rated_speed: float = 12.0
    cut_out: float = 25.0
    rated_kw: float = 0.0

    def validate(self) -> None:
        if self.cut_in >= self.rated_speed:
            raise ConfigError("turbine cut_in must be below rated_speed")
        if self.rated_speed > self.cut_out:
            raise ConfigError("turbine rated_speed must not exceed cut_out")
        if self.cut_in < 0 or self.rated_kw < 0:
            raise ConfigError("turbine parameters must be >= 0")


@dataclass(frozen=True)
class NoiseConfig:
    """Additive sensor noise, zero-mean Gaussian truncated at +-3 sigma."""

    sigma_irradiance: float = 0.0
    sigma_wind: float = 0.0
    sigma_outdoor: float = 0.0

    def validate(self) -> None:
        if min(self.sigma_irradiance, self.sigma_wind, self.sigma_outdoor) < 0:
            raise ConfigError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class TwinConfig:
    horizon: int
    appliances: tuple[ApplianceSpec, ...]
    zones: tuple[ZoneSpec, ...]
    comfort: ComfortProfile
    panel: PanelConfig
    turbine: TurbineConfig
    price_curve: tuple[float, ...]
    irradiance_curve: tuple[float, ...] = DEFAULT_IRRADIANCE
    wind_curve: tuple[float, ...] = DEFAULT_WIND
    outdoor_curve: tuple[float, ...] = DEFAULT_OUTDOOR
    noise: NoiseConfig = NoiseConfig()
    dt_hours: float = 1.0

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.appliances:
            raise ConfigError("config needs at least one appliance")
        if self.dt_hours <= 0:
            raise ConfigError("dt_hours must be > 0")
        for curve, name in (
            (self.price_curve, "price_curve"),
            (self.irradiance_curve, "irradiance_curve"),
            (self.wind_curve, "wind_curve"),
            (self.outdoor_curve, "outdoor_curve"),
        ):
            if len(curve) != 24:
                raise ConfigError(f"{name} must have exactly 24 entries")
        if min(self.price_curve) < 0:
            raise ConfigError("prices must be >= 0")
        zone_ids = [z.id for z in self.zones]
        if len(set(zone_ids)) != len(zone_ids):
            raise ConfigError("duplicate zone ids")
        seen = set()
        for a in self.appliances:
            a.validate()
            if a.id in seen:
                raise ConfigError(f"duplicate appliance id {a.id!r}")
            seen.add(a.id)
            if a.kind == THERMAL and a.zone not in zone_ids:
                raise ConfigError(f"appliance {a.id!r} references unknown zone {a.zone!r}")
        for z in self.zones:
            z.validate()
        if len(self.comfort.desired_temp_c) != len(self.zones):
            raise ConfigError("comfort profile must name one setpoint per zone")
        self.comfort.validate()
        self.panel.validate()
        self.turbine.validate()
        self.noise.validate()

    @property
    def shiftable(self) -> tuple[ApplianceSpec, ...]:
        return tuple(a for a in self.appliances if a.kind == SHIFTABLE)

    @staticmethod
    def from_dict(raw: dict) -> "TwinConfig":
        try:
            zones = tuple(
                ZoneSpec(
                    id=z["id"],
                    initial_temp_c=float(z["initial_temp_c"]),
                    r_th=float(z["r_th"]),
                    c_th=float(z["c_th"]),
                )
                for z in raw.get("zones", [])
            )
            appliances = tuple(
                ApplianceSpec(
                    id=a["id"],
                    power_kw=float(a["power_kw"]),
                    kind=a.get("kind", SHIFTABLE),
                    earliest_start=int(a.get("earliest_start", 0)),
                    latest_end=int(a.get("latest_end", 23)),
                    required_hours=int(a.get("required_hours", 0)),
                    zone=a.get("zone"),
                )
                for a in raw.get("appliances", [])
            )
            comfort_raw = raw.get("comfort", {})
            desired_map = comfort_raw.get("desired_temp_c", {})
            comfort = ComfortProfile(
                desired_temp_c=tuple(float(desired_map[z.id]) for z in zones),
                beta=float(comfort_raw.get("beta", 0.0)),
                lambda_unsat=float(comfort_raw.get("lambda_unsat", 0.0)),
            )
            noise_raw = raw.get("noise", {})
            config = TwinConfig(
                horizon=int(raw["horizon"]),
                appliances=appliances,
                zones=zones,
                comfort=comfort,
                panel=PanelConfig(**raw.get("panel", {})),
                turbine=TurbineConfig(**raw.get("turbine", {})),
                price_curve=tuple(float(p) for p in raw["price_curve"]),
                irradiance_curve=tuple(raw.get("irradiance_curve", DEFAULT_IRRADIANCE)),
                wind_curve=tuple(raw.get("wind_curve", DEFAULT_WIND)),
                outdoor_curve=tuple(raw.get("outdoor_curve", DEFAULT_OUTDOOR)),
                noise=NoiseConfig(
                    sigma_irradiance=float(noise_raw.get("sigma_irradiance", 0.0)),
                    sigma_wind=float(noise_raw.get("sigma_wind", 0.0)),
                    sigma_outdoor=float(noise_raw.get("sigma_outdoor", 0.0)),
                ),
                dt_hours=float(raw.get("dt_hours", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed twin config: {exc}") from exc
        config.validate()
        return config

    @staticmethod
    def from_json_file(path: str | Path) -> "TwinConfig":
        with open(path) as fh:
            return TwinConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class BuildingState:
    """Snapshot at hour t.

    appliance_on reflects what ran during the hour that produced this
    state (all False at reset); runtime_done counts accumulated hours per
    shiftable appliance, in config order.
    """

    t: int
    zone_temp: tuple[float, ...]
    appliance_on: tuple[bool, ...]
    runtime_done: tuple[int, ...]
    price: float
    solar_irradiance: float
    wind_speed: float
    outdoor_temp: float
    cumulative_cost: float


@dataclass(frozen=True)
class Action:
    """commands align with the config's shiftable appliances, heat_power
    (kW) with its zones. heat_power is clamped to [0, zone max heat];
    commands outside an appliance's window are rejected, not clamped.
    """

    commands: tuple[bool, ...] = ()
    heat_power: tuple[float, ...] = ()


@dataclass(frozen=True)
class StepInfo:
    """Per-step energy accounting, exposed as DigitalTwin.last_info."""

    total_load_kwh: float
    solar_kw: float
    wind_kw: float
    renewable_kwh: float
    renewable_used_kwh: float
    grid_kwh: float
    energy_cost: float
    discomfort: float
    unmet_kwh: float
    reward: float
    heat_kw: tuple[float, ...] = ()


def solar_output(irradiance: float, panel: PanelConfig) -> float:
    """PV output in kW, clamped at the rated power."""
    if irradiance < 0:
        raise InputError(f"irradiance must be >= 0, got {irradiance}")
    return min(panel.eta_area * irradiance / 1000.0, panel.rated_kw)


def wind_output(speed: float, turbine: TurbineConfig) -> float:
    """Turbine output in kW along the piecewise power curve."""
    if speed < 0:
        raise InputError(f"wind speed must be >= 0, got {speed}")
    if speed < turbine.cut_in or speed > turbine.cut_out:
        return 0.0
    if speed >= turbine.rated_speed:
        return turbine.rated_kw
    frac = (speed - turbine.cut_in) / (turbine.rated_speed - turbine.cut_in)
    return turbine.rated_kw * frac**3


def appliance_shortfall(spec: ApplianceSpec, t: int, done_hours: int, on: bool) -> float:
    """kWh of required runtime that can no longer fit in the window,
    evaluated after running the appliance at hour t iff ``on``."""
    run_after = done_hours + (1 if on else 0)
    remaining = spec.required_hours - run_after
    if remaining <= 0:
        return 0.0
    first_free = max(t + 1, spec.earliest_start)
    available = max(0, spec.latest_end - first_free + 1)
    return spec.power_kw * max(0, remaining - available)


class DigitalTwin:
    """Episodic building simulator.

    A twin owns its RNG: identical (config, seed, action sequence)
    reproduces trajectories bit for bit. Instances are single-threaded;
    run several with independent seeds for episode-level parallelism.
    """

    def __init__(self, config: TwinConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = seed
        self.shiftable = config.shiftable
        self.fixed = tuple(a for a in config.appliances if a.kind == FIXED)
        self.max_heat = tuple(
            sum(a.power_kw for a in config.appliances if a.kind == THERMAL and a.zone == z.id)
            for z in config.zones
        )
        self._rng = np.random.default_rng(seed)
        self.last_info: Optional[StepInfo] = None

    def no_op_action(self) -> Action:
        return Action(
            commands=(False,) * len(self.shiftable),
            heat_power=(0.0,) * len(self.config.zones),
        )

    def reset(self, seed: Optional[int] = None) -> BuildingState:
        """Start a new episode: t=0, appliances off, zones at their
        configured initial temperature. Passing a seed restarts the noise
        stream; omitting it continues the existing one."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.last_info = None
        price, irr, wind, outdoor = self._sense(0)
        return BuildingState(
            t=0,
            zone_temp=tuple(z.initial_temp_c for z in self.config.zones),
            appliance_on=(False,) * len(self.config.appliances),
            runtime_done=(0,) * len(self.shiftable),
            price=price,
            solar_irradiance=irr,
            wind_speed=wind,
            outdoor_temp=outdoor,
            cumulative_cost=0.0,
        )

    def _noise(self, sigma: float) -> float:
        # clipping keeps the per-step draw count fixed, unlike resampling
        if sigma == 0.0:
            return 0.0
        return float(np.clip(self._rng.normal(0.0, sigma), -3.0 * sigma, 3.0 * sigma))

    def _sense(self, t: int) -> tuple[float, float, float, float]:
        cfg = self.config
        h = t % 24
        irr = max(0.0, cfg.irradiance_curve[h] + self._noise(cfg.noise.sigma_irradiance))
        wind = max(0.0, cfg.wind_curve[h] + self._noise(cfg.noise.sigma_wind))
        outdoor = cfg.outdoor_curve[h] + self._noise(cfg.noise.sigma_outdoor)
        return cfg.price_curve[h], irr, wind, outdoor

    def check_action(self, state: BuildingState, action: Action) -> None:
        """Raise IllegalActionError with a description of the violation."""
        if len(action.commands) != len(self.shiftable):
            raise IllegalActionError(
                f"expected {len(self.shiftable)} appliance commands, got {len(action.commands)}"
            )
        if len(action.heat_power) != len(self.config.zones):
            raise IllegalActionError(
                f"expected {len(self.config.zones)} heat commands, got {len(action.heat_power)}"
            )
        for spec, on in zip(self.shiftable, action.commands):
            if on and not spec.earliest_start <= state.t <= spec.latest_end:
                raise IllegalActionError(
                    f"appliance {spec.id!r} commanded on at hour {state.t}, outside its "
                    f"window [{spec.earliest_start}, {spec.latest_end}]"
                )

    def unmet_demand(self, state: BuildingState, action: Action) -> float:
        """Total kWh of appliance runtime that the (state, action) pair
        leaves impossible to schedule before the windows close."""
        self.check_action(state, action)
        return sum(
            appliance_shortfall(spec, state.t, done, on)
            for spec, done, on in zip(self.shiftable, state.runtime_done, action.commands)
        )

    def step(self, state: BuildingState, action: Action) -> tuple[BuildingState, float, bool]:
        """Advance one hour. Returns (next_state, reward, done)."""
        cfg = self.config
        if state.t >= cfg.horizon:
            raise InputError("episode is already done")
        self.check_action(state, action)
        dt = cfg.dt_hours
        heat = tuple(
            min(max(h, 0.0), cap) for h, cap in zip(action.heat_power, self.max_heat)
        )

        load_kw = sum(a.power_kw for a in self.fixed)
        load_kw += sum(a.power_kw for a, on in zip(self.shiftable, action.commands) if on)
        load_kw += sum(heat)
        solar_kw = solar_output(state.solar_irradiance, cfg.panel)
        wind_kw = wind_output(state.wind_speed, cfg.turbine)

        total_kwh = load_kw * dt
        renewable_kwh = (solar_kw + wind_kw) * dt
        used_kwh = min(total_kwh, renewable_kwh)
        grid_kwh = total_kwh - used_kwh

        cost = state.price * grid_kwh
        discomfort = sum(
            (desired - actual) ** 2
            for desired, actual in zip(cfg.comfort.desired_temp_c, state.zone_temp)
        )
        unmet = sum(
            appliance_shortfall(spec, state.t, done, on)
            for spec, done, on in zip(self.shiftable, state.runtime_done, action.commands)
        )
        reward = -(cost + cfg.comfort.beta * discomfort + cfg.comfort.lambda_unsat * unmet)

        new_temps = tuple(
            temp + (dt / z.c_th) * (q - (temp - state.outdoor_temp) / z.r_th)
            for temp, z, q in zip(state.zone_temp, cfg.zones, heat)
        )

        zone_index = {z.id: i for i, z in enumerate(cfg.zones)}
        shift_iter = iter(action.commands)
        on_flags = tuple(
            True if a.kind == FIXED
            else next(shift_iter) if a.kind == SHIFTABLE
            else heat[zone_index[a.zone]] > 0.0
            for a in cfg.appliances
        )
        runtime = tuple(
            done + (1 if on else 0)
            for done, on in zip(state.runtime_done, action.commands)
        )

        t_next = state.t + 1
        price, irr, wind, outdoor = self._sense(t_next)
        nxt = BuildingState(
            t=t_next,
            zone_temp=new_temps,
            appliance_on=on_flags,
            runtime_done=runtime,
            price=price,
            solar_irradiance=irr,
            wind_speed=wind,
            outdoor_temp=outdoor,
            cumulative_cost=state.cumulative_cost + cost,
        )
        self.last_info = StepInfo(
            total_load_kwh=total_kwh,
            solar_kw=solar_kw,
            wind_kw=wind_kw,
            renewable_kwh=renewable_kwh,
            renewable_used_kwh=used_kwh,
            grid_kwh=grid_kwh,
            energy_cost=cost,
            discomfort=discomfort,
            unmet_kwh=unmet,
            reward=reward,
            heat_kw=heat,
        )
        return nxt, reward, t_next == cfg.horizon
