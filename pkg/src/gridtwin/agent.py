"""Tabular Q-learning scheduler over the digital twin.

States are discretized as (hour, price tier, per-appliance remaining
runtime, 2-degree temperature band); actions enumerate every on/off
combination of the shiftable appliances crossed with a small grid of
heat levels per zone. Missing table entries read as 0.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, IllegalActionError, InputError
from .seeds import derive_seed
from .twin import Action, BuildingState, DigitalTwin, TwinConfig

StateKey = tuple


@dataclass(frozen=True)
class AgentParams:
    alpha: float = 0.5
    gamma: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.995
    episodes: int = 2000
    heat_levels: int = 1  # heat command grid per zone, 1 means always 0 kW
    temp_band_c: float = 2.0

    def validate(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must be in [0, 1]")
        if not (0 <= self.epsilon_end <= self.epsilon_start <= 1):
            raise ConfigError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigError("epsilon_decay must be in (0, 1]")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.heat_levels < 1:
            raise ConfigError("heat_levels must be >= 1")
        if self.temp_band_c <= 0:
            raise ConfigError("temp_band_c must be > 0")


class QTable:
    """Sparse (state key, action index) -> value map; absent entries are 0."""

    def __init__(self):
        self._values: dict[tuple[StateKey, int], float] = {}

    def get(self, state_key: StateKey, action: int) -> float:
        return self._values.get((state_key, action), 0.0)

    def set(self, state_key: StateKey, action: int, value: float) -> None:
        if not math.isfinite(value):
            raise InputError("Q values must be finite")
        self._values[(state_key, action)] = value

    def __len__(self) -> int:
        return len(self._values)

    def entries(self) -> list[tuple[StateKey, int, float]]:
        return [(k, a, v) for (k, a), v in sorted(self._values.items())]

    def to_dict(self) -> dict:
        # tuples become nested lists, sorted for canonical output
        return {
            "entries": [
                [[key[0], key[1], list(key[2]), list(key[3])], action, value]
                for key, action, value in self.entries()
            ]
        }

    @staticmethod
    def from_dict(raw: dict) -> "QTable":
        table = QTable()
        try:
            for (t, tier, remaining, bands), action, value in raw["entries"]:
                key = (int(t), int(tier), tuple(remaining), tuple(bands))
                table.set(key, int(action), float(value))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed Q-table file: {exc}") from exc
        return table

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @staticmethod
    def load(path: str | Path) -> "QTable":
        return QTable.from_dict(json.loads(Path(path).read_text()))


class ActionSpace:
    """Fixed enumeration of joint actions for one twin config.

    Index 0 is always the no-op (everything off, zero heat). Legality is
    state-dependent: a command is legal only while the hour is inside the
    appliance's window.
    """

    def __init__(self, config: TwinConfig, heat_levels: int = 1, temp_band_c: float = 2.0):
        self.config = config
        self.shiftable = config.shiftable
        self.temp_band_c = temp_band_c
        max_heat = tuple(
            sum(a.power_kw for a in config.appliances if a.kind == "thermal" and a.zone == z.id)
            for z in config.zones
        )
        command_combos = list(itertools.product((False, True), repeat=len(self.shiftable)))
        level_grid = [
            tuple(np.linspace(0.0, cap, heat_levels)) if heat_levels > 1 and cap > 0 else (0.0,)
            for cap in max_heat
        ]
        heat_combos = list(itertools.product(*level_grid)) or [()]
        self.actions: list[Action] = [
            Action(commands=c, heat_power=h)
            for c, h in itertools.product(command_combos, heat_combos)
        ]
        lo = np.quantile(config.price_curve, 1 / 3)
        hi = np.quantile(config.price_curve, 2 / 3)
        self._price_cuts = (float(lo), float(hi))

    def __len__(self) -> int:
        return len(self.actions)

    def state_key(self, state: BuildingState) -> StateKey:
        lo, hi = self._price_cuts
        tier = 0 if state.price <= lo else (1 if state.price <= hi else 2)
        remaining = tuple(
            max(0, spec.required_hours - done)
            for spec, done in zip(self.shiftable, state.runtime_done)
        )
        bands = tuple(int(math.floor(temp / self.temp_band_c)) for temp in state.zone_temp)
        return (state.t, tier, remaining, bands)

    def legal_indices(self, state: BuildingState) -> list[int]:
        windows = [
            spec.earliest_start <= state.t <= spec.latest_end for spec in self.shiftable
        ]
        return [
            idx
            for idx, action in enumerate(self.actions)
            if all(ok or not on for ok, on in zip(windows, action.commands))
        ]


def select_action(
    table: QTable,
    state_key: StateKey,
    legal: list[int],
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy over the legal action indices, ties to lowest index."""
    if not legal:
        raise InputError("state has no legal action")
    if epsilon > 0 and rng.random() < epsilon:
        return legal[int(rng.integers(len(legal)))]
    best, best_value = legal[0], table.get(state_key, legal[0])
    for idx in legal[1:]:
        value = table.get(state_key, idx)
        if value > best_value:  # strict: ties keep the lowest index
            best, best_value = idx, value
    return best


def update(
    table: QTable,
    state_key: StateKey,
    action: int,
    reward: float,
    next_key: StateKey,
    next_legal: list[int],
    done: bool,
    params: AgentParams,
) -> None:
    """One Q-learning backup; touches exactly one table entry."""
    target = reward
    if not done and next_legal:
        target += params.gamma * max(table.get(next_key, idx) for idx in next_legal)
    old = table.get(state_key, action)
    table.set(state_key, action, old + params.alpha * (target - old))


def train(
    config: TwinConfig, params: AgentParams, seed: int
) -> tuple[QTable, list[float]]:
    """Q-learning over full twin episodes; returns the table and the
    undiscounted return of every episode."""
    params.validate()
    twin = DigitalTwin(config, seed=derive_seed(seed, "agent-env"))
    space = ActionSpace(config, params.heat_levels, params.temp_band_c)
    rng = np.random.default_rng(derive_seed(seed, "agent-explore"))
    table = QTable()
    history: list[float] = []
    epsilon = params.epsilon_start
    for _ in range(params.episodes):
        state = twin.reset()
        episode_return = 0.0
        done = False
        while not done:
            key = space.state_key(state)
            legal = space.legal_indices(state)
            action = select_action(table, key, legal, epsilon, rng)
            nxt, reward, done = twin.step(state, space.actions[action])
            update(
                table, key, action, reward,
                space.state_key(nxt), space.legal_indices(nxt), done, params,
            )
            state = nxt
            episode_return += reward
        history.append(episode_return)
        epsilon = max(params.epsilon_end, epsilon * params.epsilon_decay)
    return table, history


def greedy_rollout(
    table: QTable, twin: DigitalTwin, space: ActionSpace
) -> tuple[list[Action], float]:
    """Deterministic epsilon=0 rollout; returns actions and total reward."""
    rng = np.random.default_rng(0)  # never consumed at epsilon 0
    state = twin.reset()
    actions: list[Action] = []
    total = 0.0
    done = False
    while not done:
        idx = select_action(table, space.state_key(state), space.legal_indices(state), 0.0, rng)
        state, reward, done = twin.step(state, space.actions[idx])
        actions.append(space.actions[idx])
        total += reward
    return actions, total


@dataclass(frozen=True)
class DecisionRecord:
    t: int
    action_index: int
    action: Action
    fallback: bool
    reward: float
    latency_s: float
    state_before: BuildingState
    state_after: BuildingState


def realtime_optimize(
    table: QTable,
    twin: DigitalTwin,
    space: ActionSpace,
    feedback: Optional[Callable[[DecisionRecord], None]] = None,
) -> list[DecisionRecord]:
    """Greedy control loop against a live twin standing in for the sensor
    stream. Each decision is executed, its realized effect fed back
    through ``feedback`` (e.g. a ledger transaction queue), and its
    wall-clock latency recorded. An action the twin rejects (stale table,
    mismatched config) falls back to the no-op and is flagged.
    """
    rng = np.random.default_rng(0)
    state = twin.reset()
    log: list[DecisionRecord] = []
    done = False
    while not done:
        started = time.perf_counter()
        idx = select_action(table, space.state_key(state), space.legal_indices(state), 0.0, rng)
        fallback = False
        try:
            nxt, reward, done = twin.step(state, space.actions[idx])
            action = space.actions[idx]
        except IllegalActionError:
            fallback = True
            idx = -1
            action = twin.no_op_action()
            nxt, reward, done = twin.step(state, action)
        latency = time.perf_counter() - started
        record = DecisionRecord(
            t=state.t,
            action_index=idx,
            action=action,
            fallback=fallback,
            reward=reward,
            latency_s=latency,
            state_before=state,
            state_after=nxt,
        )
        log.append(record)
        if feedback is not None:
            feedback(record)
        state = nxt
    return log
