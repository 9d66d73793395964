"""FastAPI application entry-point."""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager

from fastapi import BackgroundTasks, FastAPI, HTTPException, status
from fastapi.middleware.cors import CORSMiddleware

from .common_utils import load_local_env
from .io_utils import read_report
from .models import RunScenarioRequest, RunScenarioResponse
from .scenario_handler import ConfigError, apply_overrides, list_scenarios, report_path, run_scenario
from .scenario_presets import PRESETS, preset_config

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)


@asynccontextmanager
async def lifespan(app: FastAPI):
    load_local_env()
    yield


app = FastAPI(
    title="ET Entanglement Simulator",
    version="0.1.0",
    description="Runs dissipative entanglement-preparation scenarios and serves their reports.",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
    expose_headers=["*"],
)


@app.get("/", status_code=status.HTTP_200_OK)
async def root() -> dict:
    """Health check endpoint."""
    return {"status": "ok", "message": "ET entanglement simulator is running."}


@app.get("/scenarios", status_code=status.HTTP_200_OK)
async def scenarios() -> list[dict]:
    return list_scenarios()


@app.post(
    "/scenarios/{scenario_id}/run",
    response_model=RunScenarioResponse,
    status_code=status.HTTP_200_OK,
)
async def run_preset(
    scenario_id: str, background_tasks: BackgroundTasks, payload: RunScenarioRequest | None = None
) -> RunScenarioResponse:
    """Accept a run request, respond immediately, and run the scenario in the background."""
    if scenario_id not in PRESETS:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Unknown scenario {scenario_id}.",
        )
    payload = payload or RunScenarioRequest()
    try:
        cfg = apply_overrides(preset_config(scenario_id), n_cutoff=payload.n_cutoff, rtol=payload.rtol, seed=payload.seed)
    except ConfigError as exc:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc)) from exc

    def background_task():
        try:
            report = run_scenario(cfg)
        except Exception as exc:
            logger.error(f"Background run of {scenario_id} failed: {exc}")
            return
        if payload.strict and not report.checkpoints_passed:
            logger.warning(f"Scenario {scenario_id} missed one or more checkpoint bands.")

    background_tasks.add_task(background_task)
    return RunScenarioResponse(status="accepted", message=f"Scenario {scenario_id} queued.")


@app.get("/reports/{scenario_id}", status_code=status.HTTP_200_OK)
async def get_report(scenario_id: str) -> dict:
    if scenario_id not in PRESETS:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown scenario {scenario_id}.")
    path = report_path(scenario_id)
    if not path.is_file():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"No report for {scenario_id} yet.")
    try:
        return read_report(path).model_dump()
    except Exception as exc:
        logger.error(f"Failed to read report {path}: {exc}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail="Failed to read report.",
        ) from exc
