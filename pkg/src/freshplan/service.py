"""HTTP/JSON API over completed runs: read artifacts, submit what-if
scenarios, poll jobs.

Read endpoints are pure projections of the run directory on disk, so a
service restart loses nothing. Scenario re-optimization is asynchronous:
POST returns a job id, a single worker thread executes jobs FIFO (hence
at most one optimization at a time), and GET /api/jobs/{id} reports
progress. Error bodies are always {"error": message, "code": code}.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import pipeline
from .errors import ConfigError, DataError, FreshplanError, PipelineStageError


class ScenarioOverride(BaseModel):
    """Manager levers for a what-if re-optimization. All optional; an
    empty override replays the base optimization unchanged."""

    model_config = ConfigDict(extra="forbid")

    price_bands: Optional[dict[str, tuple[float, float]]] = None
    profit_margin: Optional[float] = Field(default=None, ge=0)
    inventory_caps: Optional[dict[str, Union[float, list[float]]]] = None
    iterations: Optional[int] = Field(default=None, ge=1)
    particles: Optional[int] = Field(default=None, ge=2)

    @field_validator("price_bands")
    @classmethod
    def _bands_ordered(cls, v):
        if v is not None:
            for cat, (lo, hi) in v.items():
                if not lo > 0:
                    raise ValueError(f"price band for {cat}: p_min must be > 0")
                if not lo < hi:
                    raise ValueError(f"price band for {cat}: p_min must be < p_max")
        return v

    @field_validator("inventory_caps")
    @classmethod
    def _caps_nonnegative(cls, v):
        if v is not None:
            for cat, cap in v.items():
                caps = cap if isinstance(cap, list) else [cap]
                if any(c < 0 for c in caps):
                    raise ValueError(f"inventory cap for {cat} must be >= 0")
        return v

    def levers(self) -> dict:
        """Only the levers actually provided, as plain values."""
        out: dict = {}
        if self.price_bands is not None:
            out["price_bands"] = {c: list(b) for c, b in self.price_bands.items()}
        if self.profit_margin is not None:
            out["profit_margin"] = self.profit_margin
        if self.inventory_caps is not None:
            out["inventory_caps"] = dict(self.inventory_caps)
        if self.iterations is not None:
            out["iterations"] = self.iterations
        if self.particles is not None:
            out["particles"] = self.particles
        return out


@dataclass
class Job:
    job_id: str
    base_run_id: str
    override: dict
    max_iterations: int
    state: str = "queued"  # queued -> running -> done | failed
    progress: int = 0
    result_run_id: Optional[str] = None
    error: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "job_id": self.job_id,
            "base_run_id": self.base_run_id,
            "state": self.state,
            "progress": self.progress,
            "max_iterations": self.max_iterations,
            "result_run_id": self.result_run_id,
            "result_url": (f"/api/runs/{self.result_run_id}"
                           if self.result_run_id else None),
            "error": self.error,
        }


class JobManager:
    """FIFO scenario executor: one worker thread, one job at a time."""

    def __init__(self, run_root: Path):
        self.run_root = run_root
        self.jobs: dict[str, Job] = {}
        self.queue: "queue.Queue[str]" = queue.Queue()
        self.lock = threading.Lock()
        self._counter = 0
        self._worker: Optional[threading.Thread] = None

    def _ensure_worker(self) -> None:
        if self._worker is None or not self._worker.is_alive():
            self._worker = threading.Thread(target=self._run_loop, daemon=True)
            self._worker.start()

    def submit(self, base_run_id: str, override: dict, max_iterations: int) -> Job:
        with self.lock:
            self._counter += 1
            job = Job(job_id=f"job-{self._counter:04d}", base_run_id=base_run_id,
                      override=override, max_iterations=max_iterations)
            self.jobs[job.job_id] = job
        self.queue.put(job.job_id)
        self._ensure_worker()
        return job

    def get(self, job_id: str) -> Optional[Job]:
        with self.lock:
            return self.jobs.get(job_id)

    def _run_loop(self) -> None:
        while True:
            job_id = self.queue.get()
            job = self.get(job_id)
            if job is None:
                continue
            with self.lock:
                job.state = "running"

            def on_iteration(k: int, _fit: float, job=job) -> None:
                with self.lock:
                    job.progress = k

            try:
                run_id, _ = pipeline.run_scenario(
                    self.run_root / job.base_run_id, job.override,
                    run_root=self.run_root, on_iteration=on_iteration)
                with self.lock:
                    job.result_run_id = run_id
                    job.state = "done"
            except Exception as exc:  # job failures are reported, never raised
                with self.lock:
                    job.error = str(exc)
                    job.state = "failed"
            finally:
                self.queue.task_done()


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "code": code})


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def create_app(run_root: Path | str, static_dir: Optional[Path | str] = None) -> FastAPI:
    run_root = Path(run_root)
    app = FastAPI(title="freshplan", docs_url=None, redoc_url=None)
    manager = JobManager(run_root)
    app.state.jobs = manager

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", []) if p != "body")
        msg = first.get("msg", "invalid request")
        return _error(422, "invalid_override", f"{loc}: {msg}" if loc else msg)

    def run_dir_of(run_id: str) -> Path:
        # run ids are directory names; refuse anything that escapes the root
        if "/" in run_id or "\\" in run_id or run_id in (".", ".."):
            raise DataError(f"invalid run id {run_id!r}")
        return run_root / run_id

    @app.get("/api/runs")
    def list_runs():
        runs = []
        if run_root.is_dir():
            for meta_path in sorted(run_root.glob("*/meta.json")):
                runs.append(_read_json(meta_path))
        return {"runs": runs}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        run_dir = run_dir_of(run_id)
        if not run_dir.is_dir():
            return _error(404, "unknown_run", f"no run named {run_id}")
        meta = run_dir / "meta.json"
        if not meta.exists():
            return _error(409, "run_incomplete",
                          f"run {run_id} has not completed the optimize stage")
        return _read_json(meta)

    @app.get("/api/runs/{run_id}/forecast")
    def get_forecast(run_id: str):
        run_dir = run_dir_of(run_id)
        if not run_dir.is_dir():
            return _error(404, "unknown_run", f"no run named {run_id}")
        fdir = run_dir / "forecast"
        docs = {p.stem: _read_json(p) for p in sorted(fdir.glob("*.json"))} if fdir.is_dir() else {}
        if not docs:
            return _error(409, "forecast_missing",
                          f"run {run_id} has no forecast artifacts yet")
        return {"run_id": run_id, "forecast": docs}

    @app.get("/api/runs/{run_id}/plan")
    def get_plan(run_id: str):
        run_dir = run_dir_of(run_id)
        if not run_dir.is_dir():
            return _error(404, "unknown_run", f"no run named {run_id}")
        plan = run_dir / "plan.json"
        if not plan.exists():
            return _error(409, "plan_missing", f"run {run_id} has no plan yet")
        return _read_json(plan)

    @app.post("/api/runs/{run_id}/scenarios", status_code=202)
    def post_scenario(run_id: str, override: ScenarioOverride):
        run_dir = run_dir_of(run_id)
        if not run_dir.is_dir():
            return _error(404, "unknown_run", f"no run named {run_id}")
        for required in ("meta.json", "models.json", "config.json", "dataset.csv"):
            if not (run_dir / required).exists():
                return _error(409, "run_incomplete",
                              f"run {run_id} is missing {required}; "
                              "scenarios need a completed base run")
        levers = override.levers()
        try:
            # dry-apply so bad levers fail now with a 422, not inside the job
            cfg = pipeline.load_config(run_dir / "config.json")
            inputs = pipeline.inputs_from_models_doc(_read_json(run_dir / "models.json"))
            _, pso = pipeline.apply_override(inputs, cfg.pso, levers)
        except (ConfigError, DataError) as exc:
            return _error(422, "invalid_override", str(exc))
        except PipelineStageError as exc:
            return _error(422, "invalid_override", str(exc.cause))
        job = manager.submit(run_id, levers, max_iterations=pso.max_iters)
        return job.to_doc()

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = manager.get(job_id)
        if job is None:
            return _error(404, "unknown_job", f"no job named {job_id}")
        with manager.lock:
            return job.to_doc()

    @app.exception_handler(FreshplanError)
    async def freshplan_handler(request: Request, exc: FreshplanError):
        status = 422 if isinstance(exc, (ConfigError, DataError)) else 500
        return _error(status, "error", str(exc))

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app
