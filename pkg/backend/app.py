import logging
from typing import List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, ValidationError

from config import config
from experiment import ExperimentRunner
from models import RunSummary, SamplingError, SimConfig
from run_store import RunStore
from scenarios import BUILTIN_SCENARIOS, list_scenarios
from simulator import run_simulation

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(title="Distributed Sampling Experiments", root_path="")

# Enable CORS for local dashboards
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

runner = ExperimentRunner(config)
run_store = RunStore(config.MAX_STORED_RUNS)


# Pydantic models for request/response
class ScenarioInfo(BaseModel):
    """A builtin scenario"""
    name: str
    description: str


class ScenarioRunRequest(BaseModel):
    """Optional overrides for a scenario run"""
    trials: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)


class SimulationResponse(BaseModel):
    """Ledger summary of a single simulation run"""
    final_sample: List[int]
    rounds: int
    upstream: int
    replies: int
    broadcasts: int
    total_messages: int
    epochs: int
    per_epoch_upstream: List[int]
    epoch_floors: List[float]


# API Endpoints

@app.get("/api/scenarios", response_model=List[ScenarioInfo])
async def get_scenarios():
    """List builtin scenarios"""
    return [ScenarioInfo(name=name, description=description) for name, description in list_scenarios()]


# plain def: FastAPI runs it in the threadpool
@app.post("/api/scenarios/{name}/run", response_model=RunSummary)
def run_scenario(name: str, request: Optional[ScenarioRunRequest] = None):
    """Run a builtin scenario without writing artifacts and keep its summary"""
    if name not in BUILTIN_SCENARIOS:
        raise HTTPException(status_code=404, detail=f"unknown scenario '{name}'")
    request = request or ScenarioRunRequest()
    try:
        result = runner.run(BUILTIN_SCENARIOS[name], write=False, trials=request.trials, seed=request.seed)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except SamplingError as e:
        raise HTTPException(status_code=400, detail=str(e))
    summary = result.to_summary(run_store.next_run_id(name))
    run_store.add(summary)
    logger.info("stored run %s (passed=%s)", summary.run_id, summary.passed)
    return summary


@app.get("/api/runs/{run_id}", response_model=RunSummary)
async def get_run(run_id: str):
    """Fetch a stored run summary"""
    summary = run_store.get(run_id)
    if summary is None:
        raise HTTPException(status_code=404, detail=f"unknown run '{run_id}'")
    return summary


# plain def: FastAPI runs it in the threadpool
@app.post("/api/simulate", response_model=SimulationResponse)
def simulate(cfg: SimConfig):
    """Run one simulation and return its ledger"""
    try:
        trace = run_simulation(cfg, settings=config)
    except SamplingError as e:
        raise HTTPException(status_code=400, detail=str(e))
    ledger = trace.ledger
    return SimulationResponse(
        final_sample=trace.final_sample,
        rounds=trace.rounds,
        upstream=ledger.upstream_count,
        replies=ledger.reply_count,
        broadcasts=ledger.broadcast_count,
        total_messages=ledger.total,
        epochs=ledger.epoch_count,
        per_epoch_upstream=ledger.per_epoch_upstream,
        epoch_floors=ledger.epoch_floors,
    )
