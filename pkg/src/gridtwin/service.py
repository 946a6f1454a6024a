"""HTTP surface over the pipeline.

Wraps the core package behind typed request/response models. The CLI
drives this app in-process through an ASGI transport (no sockets), so
the endpoints stay usable offline; run `gridtwin serve` or point uvicorn
at gridtwin.service:app to expose them to real clients.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__, datagen, evaluation, ledger, pipeline
from .errors import (
    ConfigError,
    DataError,
    GridTwinError,
    IllegalActionError,
    InputError,
    SchemaError,
    TrainingDivergedError,
    UnauthorizedAuthorError,
)

app = FastAPI(title="gridtwin", version=__version__)

_BAD_REQUEST = (ConfigError, InputError, SchemaError, DataError, IllegalActionError,
                evaluation.FitError)


@app.exception_handler(GridTwinError)
async def _domain_error(_: Request, exc: GridTwinError) -> JSONResponse:
    if isinstance(exc, UnauthorizedAuthorError):
        status = 403
    elif isinstance(exc, TrainingDivergedError):
        status = 500
    elif isinstance(exc, _BAD_REQUEST):
        status = 400
    else:
        status = 500
    return JSONResponse(status_code=status, content={"detail": str(exc)})


@app.exception_handler(FileNotFoundError)
async def _missing_file(_: Request, exc: FileNotFoundError) -> JSONResponse:
    return JSONResponse(status_code=404, content={"detail": str(exc)})


class HealthResponse(BaseModel):
    status: str
    version: str


class GenDataRequest(BaseModel):
    seed: int
    hours: int = Field(default=168, ge=1)
    out_dir: str
    round3: bool = False
    config: Optional[dict[str, Any]] = None  # full run config; optional for gen-data


class GenDataResponse(BaseModel):
    path: str
    rows: int


class StageRequest(BaseModel):
    config: dict[str, Any]
    out_dir: str
    seed: Optional[int] = None  # overrides the config's root seed


class SimulateRequest(StageRequest):
    real_delay: bool = False


class TrainSurrogateResponse(BaseModel):
    weights_path: str
    history_path: str
    epochs: int
    final_loss: float
    samples: int


class TrainAgentResponse(BaseModel):
    qtable_path: str
    returns_path: str
    episodes: int
    final_return: float
    table_entries: int


class SimulateResponse(BaseModel):
    trajectory_path: str
    ledger_path: str
    ledger_json_path: str
    steps: int
    episode_cost: float
    fallback_count: int
    consensus_time_total_s: float
    blocks: int
    mean_decision_latency_s: float
    max_decision_latency_s: float


class ModelMetrics(BaseModel):
    mae: float
    rmse: float
    r2: float
    mbe: float
    accuracy: float
    precision: float
    recall: float
    f1: float


class EvaluateResponse(BaseModel):
    report_csv: str
    report_txt: str
    coverage_csv: str
    predictions_csv: str
    summary_path: str
    agent_cost: float
    naive_cost: float
    reduction_pct: float
    n_eval_samples: int
    threshold_kwh: float
    models: dict[str, ModelMetrics]


class ReportBundleResponse(BaseModel):
    files: list[str]


class LedgerVerifyRequest(BaseModel):
    path: str


class LedgerVerifyResponse(BaseModel):
    ok: bool
    bad_block_index: Optional[int]
    message: str


class ConsensusTimeRequest(BaseModel):
    transactions: int = Field(ge=0)
    throughput_tps: float
    latency_s: float = 0.0


class ConsensusTimeResponse(BaseModel):
    seconds: float


class RegressionMetricsRequest(BaseModel):
    predicted: list[float]
    actual: list[float]


class RegressionMetricsResponse(BaseModel):
    mae: float
    rmse: float
    r2: float
    mbe: float


def _run_config(raw: dict[str, Any], seed: Optional[int]) -> pipeline.RunConfig:
    if seed is not None:
        raw = {**raw, "seed": seed}
    return pipeline.RunConfig.from_dict(raw)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/data/generate", response_model=GenDataResponse)
def generate_data(req: GenDataRequest) -> GenDataResponse:
    if req.config is not None:
        cfg = _run_config(req.config, req.seed)
        result = pipeline.gen_data(cfg, req.out_dir, hours=req.hours, round3=req.round3)
    else:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = datagen.generate(req.seed, req.hours)
        path = out / pipeline.ARTIFACTS["dataset"]
        datagen.write_csv(rows, path, round3=req.round3)
        result = {"path": str(path), "rows": len(rows)}
    return GenDataResponse(**result)


@app.post("/surrogate/train", response_model=TrainSurrogateResponse)
def surrogate_train(req: StageRequest) -> TrainSurrogateResponse:
    cfg = _run_config(req.config, req.seed)
    return TrainSurrogateResponse(**pipeline.train_surrogate(cfg, req.out_dir))


@app.post("/agent/train", response_model=TrainAgentResponse)
def agent_train(req: StageRequest) -> TrainAgentResponse:
    cfg = _run_config(req.config, req.seed)
    return TrainAgentResponse(**pipeline.train_agent(cfg, req.out_dir))


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = _run_config(req.config, req.seed)
    return SimulateResponse(**pipeline.simulate(cfg, req.out_dir, real_delay=req.real_delay))


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate_run(req: StageRequest) -> EvaluateResponse:
    cfg = _run_config(req.config, req.seed)
    return EvaluateResponse(**pipeline.evaluate(cfg, req.out_dir))


@app.post("/report/bundle", response_model=ReportBundleResponse)
def report_bundle(req: StageRequest) -> ReportBundleResponse:
    cfg = _run_config(req.config, req.seed)
    return ReportBundleResponse(**pipeline.report_bundle(cfg, req.out_dir))


@app.post("/ledger/verify", response_model=LedgerVerifyResponse)
def ledger_verify(req: LedgerVerifyRequest) -> LedgerVerifyResponse:
    if not Path(req.path).exists():
        raise FileNotFoundError(f"no ledger file at {req.path}")
    ok, bad_index, message = ledger.verify_file(req.path)
    return LedgerVerifyResponse(ok=ok, bad_block_index=bad_index, message=message)


@app.post("/ledger/consensus-time", response_model=ConsensusTimeResponse)
def consensus(req: ConsensusTimeRequest) -> ConsensusTimeResponse:
    params = ledger.NetParams(throughput_tps=req.throughput_tps, latency_s=req.latency_s)
    return ConsensusTimeResponse(seconds=ledger.consensus_time(req.transactions, params))


@app.post("/metrics/regression", response_model=RegressionMetricsResponse)
def regression(req: RegressionMetricsRequest) -> RegressionMetricsResponse:
    mae, rmse, r2, mbe = evaluation.regression_metrics(req.predicted, req.actual)
    return RegressionMetricsResponse(mae=mae, rmse=rmse, r2=r2, mbe=mbe)
