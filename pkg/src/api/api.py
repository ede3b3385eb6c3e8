"""
FastAPI Application - Brinkman Averaging API
Validation suites, resolvent checks and sweep reports over HTTP
"""

import json
import os
import sys
import time

from pathlib import Path
from dotenv import load_dotenv

# Add project root to path for imports
project_root = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(project_root))

# Load environment variables
load_dotenv()

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from typing import List, Dict, Optional

from src.harness.config import ENV_OUTPUT_DIR, clean_env_value, load_config, parse_config
from src.harness.reports import load_sweep_summary, render_summary, CHECKS_JSON
from src.harness.validate import SUITES, psi_ladder, validate
from src.utils.errors import BrinkmanError, ConfigError
from src.utils.logs import log_message

app = FastAPI(
    title="Brinkman Averaging API",
    description="Validation suites and diagnostics for the slow-fast stochastic Brinkman simulator",
    version="1.0.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)


# ========== UTILITY FUNCTIONS ==========

def default_runs_dir() -> Path:
    return Path(clean_env_value(os.getenv(ENV_OUTPUT_DIR)) or "runs")


# ========== PYDANTIC MODELS ==========

class CheckItem(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class ValidateRequest(BaseModel):
    suite: str


class ValidateResponse(BaseModel):
    suite: str
    passed: bool
    runtime_seconds: float
    checks: List[CheckItem]


class PsiCheckRequest(BaseModel):
    config_path: Optional[str] = None
    config: Optional[Dict] = None
    epsilon: float = Field(0.05, gt=0.0, le=1.0)


class PsiCheckResponse(BaseModel):
    epsilon: float
    psi_sqrt_eps: float
    ladder: Dict[str, float]
    max_min_ratio: Optional[float] = None
    bounded: bool
    runtime_seconds: float


class ReportResponse(BaseModel):
    directory: str
    epsilons: List[float]
    rows: List[Dict]
    markdown: str


# ========== ENDPOINTS ==========

@app.get("/")
def root():
    return {
        "title": "Brinkman Averaging API",
        "version": "1.0.0",
        "description": "Spectral-Galerkin slow-fast Brinkman simulator: checks and reports",
        "endpoints": {
            "health": "GET /health - Health check",
            "suites": "GET /suites - List validation suites",
            "validate": "POST /validate - Run one validation suite",
            "psi_check": "POST /psi-check - Resolvent corrector ladder for a config",
            "reports": "GET /reports - Summarize a sweep output directory"
        },
        "docs": "http://localhost:8000/docs",
        "test_urls": {
            "suites": "http://localhost:8000/suites",
            "reports": "http://localhost:8000/reports?directory=runs"
        }
    }


@app.get("/health")
def health():
    runs_dir = default_runs_dir()
    return {
        "status": "ok",
        "suites_available": len(SUITES),
        "runs_dir": str(runs_dir),
        "runs_dir_exists": runs_dir.exists()
    }


@app.get("/suites")
def list_suites():
    """List validation suite names."""
    return sorted(SUITES)


@app.post("/validate", response_model=ValidateResponse)
def run_suite(request: ValidateRequest):
    if request.suite not in SUITES:
        raise HTTPException(status_code=404, detail=f"Unknown suite: {request.suite}")
    log_message(f"🧪 API validate: {request.suite}", to_console=False)
    try:
        result = validate(request.suite)
    except BrinkmanError as e:
        raise HTTPException(status_code=500, detail=str(e))
    payload = result.to_dict()
    return ValidateResponse(
        suite=payload["suite"],
        passed=payload["passed"],
        runtime_seconds=payload["runtime_seconds"],
        checks=[CheckItem(**c) for c in payload["checks"]],
    )


@app.post("/psi-check", response_model=PsiCheckResponse)
def psi_check(request: PsiCheckRequest):
    if (request.config_path is None) == (request.config is None):
        raise HTTPException(status_code=400, detail="Provide exactly one of config_path or config")
    start = time.time()
    try:
        if request.config_path is not None:
            if not Path(request.config_path).exists():
                raise HTTPException(status_code=404, detail=f"Config not found: {request.config_path}")
            config = load_config(request.config_path)
        else:
            config = parse_config(request.config)
        result = psi_ladder(config, request.epsilon)
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except BrinkmanError as e:
        raise HTTPException(status_code=500, detail=str(e))
    return PsiCheckResponse(**result, runtime_seconds=time.time() - start)


@app.get("/reports", response_model=ReportResponse)
def reports(directory: Optional[str] = Query(None, description="Sweep output directory")):
    path = Path(directory) if directory else default_runs_dir()
    try:
        rows = load_sweep_summary(path)
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))

    checks = None
    checks_path = path / CHECKS_JSON
    if checks_path.exists():
        checks = json.loads(checks_path.read_text(encoding="utf-8")).get("checks")

    return ReportResponse(
        directory=str(path),
        epsilons=[r["epsilon"] for r in rows],
        rows=rows,
        markdown=render_summary(rows, checks),
    )
