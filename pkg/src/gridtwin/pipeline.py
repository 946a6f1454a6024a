"""End-to-end pipeline stages behind the service endpoints.

Every stage is a pure function of (run config, output directory): all
randomness is derived from the config's root seed, artifacts are written
with repr-based float formatting, and re-running a stage overwrites its
artifacts with byte-identical content. Wall-clock measurements (decision
latency) are returned to the caller but never persisted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import datagen, evaluation, ledger, surrogate
from .errors import ConfigError
from .seeds import derive_seed
from .twin import Action, DigitalTwin, TwinConfig

ARTIFACTS = {
    "dataset": "dataset.csv",
    "weights": "surrogate.json",
    "surrogate_history": "surrogate_history.csv",
    "qtable": "qtable.json",
    "returns": "returns.csv",
    "trajectory": "trajectory.csv",
    "ledger": "ledger.bin",
    "ledger_json": "ledger.json",
    "report_dir": "reports",
}

FEATURE_NAMES = (
    "hour_frac", "price", "irradiance_kw_m2",
    "wind_over_10", "outdoor_over_20", "prev_kwh_over_5",
)


@dataclass(frozen=True)
class SurrogateSettings:
    hidden_layers: tuple[int, ...] = (16,)
    activation: str = "tanh"
    loss_weights: surrogate.LossWeights = surrogate.LossWeights(0.5, 0.1)
    learning_rate: float = 2e-4
    epochs: int = 1500
    training_episodes: int = 8

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.training_episodes < 1:
            raise ConfigError("training_episodes must be >= 1")
        self.loss_weights.validate()


@dataclass(frozen=True)
class RunConfig:
    seed: int
    twin: TwinConfig
    surrogate: SurrogateSettings
    agent: agent_mod.AgentParams
    network: ledger.NetParams
    participants: tuple[str, ...]
    datagen_hours: int
    paths: dict[str, str]

    def artifact(self, out_dir: str | Path, key: str) -> Path:
        return Path(out_dir) / self.paths[key]

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        if "seed" not in raw:
            raise ConfigError("config must carry an explicit seed (no wall-clock seeding)")
        try:
            sur_raw = raw.get("surrogate", {})
            sur = SurrogateSettings(
                hidden_layers=tuple(sur_raw.get("hidden_layers", (16,))),
                activation=sur_raw.get("activation", "tanh"),
                loss_weights=surrogate.LossWeights(
                    lambda_physics=float(sur_raw.get("lambda_physics", 0.5)),
                    mu_comfort=float(sur_raw.get("mu_comfort", 0.1)),
                    normalize_losses=bool(sur_raw.get("normalize_losses", False)),
                ),
                learning_rate=float(sur_raw.get("learning_rate", 2e-4)),
                epochs=int(sur_raw.get("epochs", 1500)),
                training_episodes=int(sur_raw.get("training_episodes", 8)),
            )
            agent_raw = raw.get("agent", {})
            params = agent_mod.AgentParams(
                alpha=float(agent_raw.get("alpha", 0.5)),
                gamma=float(agent_raw.get("gamma", 1.0)),
                epsilon_start=float(agent_raw.get("epsilon_start", 1.0)),
                epsilon_end=float(agent_raw.get("epsilon_end", 0.05)),
                epsilon_decay=float(agent_raw.get("epsilon_decay", 0.998)),
                episodes=int(agent_raw.get("episodes", 3000)),
                heat_levels=int(agent_raw.get("heat_levels", 1)),
                temp_band_c=float(agent_raw.get("temp_band_c", 2.0)),
            )
            net_raw = raw.get("network", {})
            network = ledger.NetParams(
                throughput_tps=float(net_raw.get("throughput_tps", 50.0)),
                latency_s=float(net_raw.get("latency_s", 0.2)),
            )
            participants = tuple(net_raw.get("participants", ("agent", "meter", "twin")))
            paths = dict(ARTIFACTS)
            paths.update(raw.get("paths", {}))
            config = RunConfig(
                seed=int(raw["seed"]),
                twin=TwinConfig.from_dict(raw["twin"]),
                surrogate=sur,
                agent=params,
                network=network,
                participants=participants,
                datagen_hours=int(raw.get("datagen", {}).get("hours", 168)),
                paths=paths,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed run config: {exc}") from exc
        config.surrogate.validate()
        config.agent.validate()
        config.network.validate()
        if config.datagen_hours < 1:
            raise ConfigError("datagen hours must be >= 1")
        if not config.participants:
            raise ConfigError("ledger needs at least one participant")
        return config

    @staticmethod
    def from_json_file(path: str | Path) -> "RunConfig":
        with open(path) as fh:
            return RunConfig.from_dict(json.load(fh))


def features_for(t: int, price: float, irradiance: float, wind: float,
                 outdoor: float, prev_kwh: float) -> list[float]:
    """Fixed unit scaling keeps the tanh hidden layer out of saturation
    without a fitted scaler that would need persisting."""
    return [(t % 24) / 24.0, price, irradiance / 1000.0,
            wind / 10.0, outdoor / 20.0, prev_kwh / 5.0]


def build_batch(
    config: TwinConfig, seed: int, episodes: int, heat_levels: int = 1,
    explore_prob: float = 0.1,
) -> surrogate.TrainingBatch:
    """Collect a training batch from twin rollouts.

    The collection policy is the always-on schedule with seeded random
    legal deviations (explore_prob per hour), so consumption follows a
    learnable daily pattern instead of pure noise. Physics nodes are the
    zones (E = c_th * T, input power the delivered heat, losses the RC
    leak to outdoors)."""
    twin = DigitalTwin(config, seed=derive_seed(seed, "surrogate-data"))
    space = agent_mod.ActionSpace(config, heat_levels)
    rng = np.random.default_rng(derive_seed(seed, "surrogate-policy"))
    feats: list[list[float]] = []
    targets: list[float] = []
    node_energy: list[np.ndarray] = []
    node_p_in: list[np.ndarray] = []
    node_p_loss: list[np.ndarray] = []
    actual_temps: list[float] = []
    desired_temps: list[float] = []

    for _ in range(episodes):
        state = twin.reset()
        prev_kwh = 0.0
        temps = [state.zone_temp]
        heats: list[tuple[float, ...]] = []
        losses: list[tuple[float, ...]] = []
        done = False
        while not done:
            if rng.random() < explore_prob:
                legal = space.legal_indices(state)
                action = space.actions[legal[int(rng.integers(len(legal)))]]
            else:
                action = Action(
                    commands=tuple(
                        spec.earliest_start <= state.t <= spec.latest_end
                        for spec in twin.shiftable
                    ),
                    heat_power=(0.0,) * len(config.zones),
                )
            before = state
            state, _, done = twin.step(state, action)
            info = twin.last_info
            feats.append(
                features_for(before.t, before.price, before.solar_irradiance,
                             before.wind_speed, before.outdoor_temp, prev_kwh)
            )
            targets.append(info.total_load_kwh)
            prev_kwh = info.total_load_kwh
            heats.append(info.heat_kw)
            losses.append(tuple(
                (temp - before.outdoor_temp) / zone.r_th
                for temp, zone in zip(before.zone_temp, config.zones)
            ))
            temps.append(state.zone_temp)
            actual_temps.extend(before.zone_temp)
            desired_temps.extend(config.comfort.desired_temp_c)
        for k, zone in enumerate(config.zones):
            node_energy.append(np.array([zone.c_th * row[k] for row in temps]))
            node_p_in.append(np.array([h[k] for h in heats]))
            node_p_loss.append(np.array([l[k] for l in losses]))

    return surrogate.TrainingBatch(
        features=np.array(feats),
        targets=np.array(targets),
        node_energy=node_energy,
        node_power_in=node_p_in,
        node_power_loss=node_p_loss,
        dt_hours=config.dt_hours,
        desired_temps=np.array(desired_temps),
        actual_temps=np.array(actual_temps),
    )


def gen_data(cfg: RunConfig, out_dir: str | Path, hours: int | None = None,
             round3: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = datagen.generate(cfg.seed, hours or cfg.datagen_hours)
    path = cfg.artifact(out, "dataset")
    datagen.write_csv(rows, path, round3=round3)
    return {"path": str(path), "rows": len(rows)}


def train_surrogate(cfg: RunConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    batch = build_batch(cfg.twin, cfg.seed, cfg.surrogate.training_episodes,
                        cfg.agent.heat_levels)
    layer_sizes = [len(FEATURE_NAMES), *cfg.surrogate.hidden_layers, 1]
    net = surrogate.init_net(layer_sizes, cfg.surrogate.activation,
                             seed=derive_seed(cfg.seed, "surrogate-init"))
    net, history = surrogate.train(
        batch, net, cfg.surrogate.loss_weights,
        lr=cfg.surrogate.learning_rate, epochs=cfg.surrogate.epochs,
    )
    weights_path = cfg.artifact(out, "weights")
    surrogate.save_net(net, weights_path)
    history_path = cfg.artifact(out, "surrogate_history")
    history_path.write_text(
        "epoch,total_loss\n"
        + "".join(f"{e},{repr(v)}\n" for e, v in enumerate(history))
    )
    return {
        "weights_path": str(weights_path),
        "history_path": str(history_path),
        "epochs": len(history),
        "final_loss": history[-1],
        "samples": len(batch.targets),
    }


def train_agent(cfg: RunConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table, history = agent_mod.train(cfg.twin, cfg.agent, cfg.seed)
    qtable_path = cfg.artifact(out, "qtable")
    table.save(qtable_path)
    returns_path = cfg.artifact(out, "returns")
    returns_path.write_text(
        "episode,return\n"
        + "".join(f"{e},{repr(v)}\n" for e, v in enumerate(history))
    )
    return {
        "qtable_path": str(qtable_path),
        "returns_path": str(returns_path),
        "episodes": len(history),
        "final_return": history[-1],
        "table_entries": len(table),
    }


def _trajectory_header(cfg: RunConfig) -> list[str]:
    cols = ["t", "action_index", "fallback", "price", "outdoor_temp_c",
            "total_load_kwh", "solar_kw", "wind_kw", "renewable_used_kwh",
            "grid_kwh", "cost", "discomfort", "unmet_kwh", "reward"]
    cols += [f"cmd_{a.id}" for a in cfg.twin.shiftable]
    cols += [f"heat_{z.id}_kw" for z in cfg.twin.zones]
    cols += [f"temp_{z.id}_c" for z in cfg.twin.zones]
    return cols


def simulate(cfg: RunConfig, out_dir: str | Path, real_delay: bool = False) -> dict:
    """Greedy real-time loop: read state, act, execute on the twin, and
    push meter/action/feedback transactions into the ledger each hour."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = agent_mod.QTable.load(cfg.artifact(out, "qtable"))
    twin = DigitalTwin(cfg.twin, seed=derive_seed(cfg.seed, "simulate"))
    space = agent_mod.ActionSpace(cfg.twin, cfg.agent.heat_levels, cfg.agent.temp_band_c)
    chain = ledger.Chain(cfg.participants)
    consensus_total = 0.0
    seq = 0
    lines = [",".join(_trajectory_header(cfg))]

    def on_decision(record: agent_mod.DecisionRecord) -> None:
        nonlocal consensus_total, seq
        info = twin.last_info
        meter = {
            "t": record.t,
            "consumption_kwh": info.total_load_kwh,
            "solar_kw": info.solar_kw,
            "wind_kw": info.wind_kw,
            "grid_kwh": info.grid_kwh,
        }
        action = {
            "t": record.t,
            "action_index": record.action_index,
            "commands": [int(c) for c in record.action.commands],
            "heat_kw": list(info.heat_kw),
            "fallback": record.fallback,
        }
        feedback = {
            "t": record.t,
            "zone_temp_c": list(record.state_after.zone_temp),
            "reward": record.reward,
            "cost": info.energy_cost,
        }
        def tx(kind: str, payload: dict, author: str) -> ledger.Transaction:
            nonlocal seq
            raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
            t = ledger.Transaction(seq, record.t, kind, raw, author)
            seq += 1
            return t
        pending = [
            tx(ledger.KIND_METER, meter, "meter"),
            tx(ledger.KIND_ACTION, action, "agent"),
            tx(ledger.KIND_FEEDBACK, feedback, "twin"),
        ]
        consensus_total += ledger.append_block(chain, pending, cfg.network, real_delay)
        row = [str(record.t), str(record.action_index), str(int(record.fallback)),
               repr(record.state_before.price), repr(record.state_before.outdoor_temp),
               repr(info.total_load_kwh), repr(info.solar_kw), repr(info.wind_kw),
               repr(info.renewable_used_kwh), repr(info.grid_kwh), repr(info.energy_cost),
               repr(info.discomfort), repr(info.unmet_kwh), repr(record.reward)]
        row += [str(int(c)) for c in record.action.commands]
        row += [repr(h) for h in info.heat_kw]
        row += [repr(temp) for temp in record.state_after.zone_temp]
        lines.append(",".join(row))

    log = agent_mod.realtime_optimize(table, twin, space, feedback=on_decision)

    trajectory_path = cfg.artifact(out, "trajectory")
    trajectory_path.write_text("\n".join(lines) + "\n")
    ledger_path = cfg.artifact(out, "ledger")
    ledger.save_chain(chain, ledger_path)
    ledger_json = cfg.artifact(out, "ledger_json")
    ledger.export_json(chain, ledger_json)

    latencies = [r.latency_s for r in log]
    return {
        "trajectory_path": str(trajectory_path),
        "ledger_path": str(ledger_path),
        "ledger_json_path": str(ledger_json),
        "steps": len(log),
        "episode_cost": -sum(r.reward for r in log),
        "fallback_count": sum(r.fallback for r in log),
        "consensus_time_total_s": consensus_total,
        "blocks": len(chain.blocks),
        "mean_decision_latency_s": sum(latencies) / len(latencies),
        "max_decision_latency_s": max(latencies),
    }


def naive_rollout(cfg: RunConfig) -> tuple[float, list[float]]:
    """Always-on reference: every shiftable appliance runs for its whole
    window, no thermostat control. Returns (episode cost, kWh per hour)."""
    twin = DigitalTwin(cfg.twin, seed=derive_seed(cfg.seed, "simulate"))
    state = twin.reset()
    cost = 0.0
    per_hour: list[float] = []
    done = False
    while not done:
        commands = tuple(
            spec.earliest_start <= state.t <= spec.latest_end
            for spec in twin.shiftable
        )
        action = Action(commands=commands,
                        heat_power=(0.0,) * len(cfg.twin.zones))
        state, reward, done = twin.step(state, action)
        cost += -reward
        per_hour.append(twin.last_info.total_load_kwh)
    return cost, per_hour


def _read_csv_column(path: Path, name: str) -> list[float]:
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    idx = header.index(name)
    return [float(line.split(",")[idx]) for line in lines[1:]]


def evaluate(cfg: RunConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    dataset_path = cfg.artifact(out, "dataset")
    weights_path = cfg.artifact(out, "weights")
    trajectory_path = cfg.artifact(out, "trajectory")
    for path in (dataset_path, weights_path, trajectory_path):
        if not path.exists():
            raise FileNotFoundError(f"missing upstream artifact: {path}")
    report_dir = cfg.artifact(out, "report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)

    dataset = datagen.load_csv(dataset_path)
    net = surrogate.load_net(weights_path)

    # held-out twin data the surrogate never trained on
    batch = build_batch(cfg.twin, derive_seed(cfg.seed, "eval-data"),
                        episodes=4, heat_levels=cfg.agent.heat_levels)
    order = np.random.default_rng(derive_seed(cfg.seed, "eval-split")).permutation(
        len(batch.targets)
    )
    n_test = max(1, int(round(0.2 * len(order))))
    test_idx, train_idx = order[:n_test], order[n_test:]
    x_train, y_train = batch.features[train_idx], batch.targets[train_idx]
    x_test, y_test = batch.features[test_idx], batch.targets[test_idx]

    coef = evaluation.ols_fit(x_train, y_train)
    pred_linear = evaluation.predict_linear(coef, x_test)
    pred_surrogate = surrogate.forward(net, x_test)
    threshold = float(np.median(y_test))
    rows = evaluation.comparison_report(
        [("surrogate", pred_surrogate), ("linear_regression", pred_linear)],
        y_test, threshold,
    )

    report_csv = report_dir / "report.csv"
    report_csv.write_text(evaluation.report_to_csv(rows))
    report_txt = report_dir / "report.txt"
    report_txt.write_text(evaluation.report_to_text(rows))

    predictions_csv = report_dir / "predictions.csv"
    predictions_csv.write_text(
        "index,actual,surrogate,linear_regression\n"
        + "".join(
            f"{i},{repr(float(a))},{repr(float(s))},{repr(float(l))}\n"
            for i, (a, s, l) in enumerate(zip(y_test, pred_surrogate, pred_linear))
        )
    )

    coverage_csv = report_dir / "coverage.csv"
    recomputed = [
        datagen.DatasetRow(
            timestamp=r.timestamp,
            baseline_kwh=r.baseline_kwh,
            optimized_kwh=r.optimized_kwh,
            solar_kwh=r.solar_kwh,
            wind_kwh=r.wind_kwh,
            renewable_kwh=r.renewable_kwh,
            proposed_pct=evaluation.renewable_coverage(r.renewable_kwh, r.baseline_kwh),
            traditional_pct=r.traditional_pct,
        )
        for r in dataset
    ]
    datagen.write_csv(recomputed, coverage_csv)

    agent_cost = -sum(_read_csv_column(trajectory_path, "reward"))
    naive_cost, _ = naive_rollout(cfg)
    reduction_pct = 100.0 * (naive_cost - agent_cost) / naive_cost if naive_cost else 0.0

    summary = {
        "agent_cost": agent_cost,
        "naive_cost": naive_cost,
        "reduction_pct": reduction_pct,
        "n_eval_samples": int(n_test),
        "threshold_kwh": threshold,
        "models": {
            name: {
                "mae": r.mae, "rmse": r.rmse, "r2": r.r2, "mbe": r.mbe,
                "accuracy": r.accuracy, "precision": r.precision,
                "recall": r.recall, "f1": r.f1,
            }
            for name, r in rows
        },
    }
    summary_path = report_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    return {
        "report_csv": str(report_csv),
        "report_txt": str(report_txt),
        "coverage_csv": str(coverage_csv),
        "predictions_csv": str(predictions_csv),
        "summary_path": str(summary_path),
        **summary,
    }


def report_bundle(cfg: RunConfig, out_dir: str | Path) -> dict:
    """Plot-ready CSVs derived from completed simulate + evaluate runs."""
    out = Path(out_dir)
    trajectory_path = cfg.artifact(out, "trajectory")
    report_dir = cfg.artifact(out, "report_dir")
    predictions_csv = report_dir / "predictions.csv"
    for path in (trajectory_path, predictions_csv):
        if not path.exists():
            raise FileNotFoundError(f"missing upstream artifact: {path}")

    agent_kwh = _read_csv_column(trajectory_path, "total_load_kwh")
    solar = _read_csv_column(trajectory_path, "solar_kw")
    wind = _read_csv_column(trajectory_path, "wind_kw")
    _, naive_kwh = naive_rollout(cfg)

    before_after = report_dir / "before_after.csv"
    before_after.write_text(
        "hour,baseline_kwh,optimized_kwh\n"
        + "".join(
            f"{h},{repr(b)},{repr(a)}\n"
            for h, (b, a) in enumerate(zip(naive_kwh, agent_kwh))
        )
    )

    renewables = report_dir / "renewables.csv"
    renewables.write_text(
        "hour,solar_kw,wind_kw\n"
        + "".join(f"{h},{repr(s)},{repr(w)}\n" for h, (s, w) in enumerate(zip(solar, wind)))
    )

    actual = np.array(_read_csv_column(predictions_csv, "actual"))
    predicted = np.array(_read_csv_column(predictions_csv, "surrogate"))
    err = predicted - actual
    counts, edges = np.histogram(err, bins=10)
    histogram = report_dir / "error_histogram.csv"
    histogram.write_text(
        "bin_low,bin_high,count\n"
        + "".join(
            f"{repr(float(edges[i]))},{repr(float(edges[i + 1]))},{int(c)}\n"
            for i, c in enumerate(counts)
        )
    )

    cumulative = report_dir / "cumulative_error.csv"
    running = np.cumsum(np.abs(err))
    cumulative.write_text(
        "index,cumulative_abs_error\n"
        + "".join(f"{i},{repr(float(v))}\n" for i, v in enumerate(running))
    )

    files = [before_after, renewables, histogram, cumulative]
    return {"files": [str(p) for p in files]}
