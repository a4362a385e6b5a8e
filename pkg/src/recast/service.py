"""HTTP facade over the workspace and pipeline for the operator console.

Every response body is derived from workspace artifacts; no pixel math lives
here. Jobs run on a small thread pool and are observed by polling.
"""

from __future__ import annotations

import io
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .errors import EngineError, PromptError, StageError
from .pipeline import PipelineConfig, plan, run
from .workers import stubs
from .workers.types import Prompt
from .workspace import FRAME_PATTERN, Workspace

__all__ = ["create_app", "JobStatus"]


@dataclass
class JobStatus:
    job_id: str
    state: str  # queued | running | failed | done
    current_stage: str | None = None
    progress: float = 0.0
    message: str | None = None


class _Job:
    def __init__(self, job_id: str, total_stages: int, output: str):
        self.status = JobStatus(job_id=job_id, state="queued")
        self.total = total_stages
        self.completed = 0
        self.output = output
        self.final_artifact_id: str | None = None
        self.lock = threading.Lock()

    def on_event(self, event: dict) -> None:
        with self.lock:
            kind = event.get("event")
            if kind == "stage_start":
                self.status.current_stage = event["stage"]
            elif kind in ("stage_done", "cache_hit"):
                self.completed += 1
                self.status.progress = self.completed / self.total
            elif kind == "stage_failed":
                self.status.message = f"{event['stage']}: {event.get('error', '')}"

    def snapshot(self) -> dict:
        with self.lock:
            return asdict(self.status)


class _JobRegistry:
    def __init__(self, ws: Workspace):
        self.ws = ws
        self.jobs: dict[str, _Job] = {}
        self.pool = ThreadPoolExecutor(max_workers=2)
        self.lock = threading.Lock()

    def submit(self, config: PipelineConfig) -> str:
        stage_plan = plan(config, self.ws)  # validate before accepting
        job_id = uuid.uuid4().hex[:12]
        job = _Job(job_id, total_stages=len(stage_plan.order), output=config.output)
        with self.lock:
            self.jobs[job_id] = job

        def work():
            job.status.state = "running"
            try:
                result = run(stage_plan, self.ws, progress=job.on_event)
            except EngineError as exc:
                with job.lock:
                    job.status.state = "failed"
                    if job.status.message is None:
                        job.status.message = str(exc)
                    if isinstance(exc, StageError):
                        job.status.current_stage = exc.stage
                return
            with job.lock:
                job.final_artifact_id = result.final_artifact_id
                job.status.state = "done"
                job.status.progress = 1.0
                job.status.current_stage = None

        self.pool.submit(work)
        return job_id

    def get(self, job_id: str) -> _Job | None:
        with self.lock:
            return self.jobs.get(job_id)


def _png_response(array: np.ndarray) -> Response:
    img = Image.fromarray(array)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def create_app(workspace_root: Path | str, static_dir: Path | str | None = None) -> FastAPI:
    ws = Workspace(workspace_root)
    registry = _JobRegistry(ws)
    app = FastAPI(title="recast")

    @app.exception_handler(PromptError)
    async def prompt_error(request: Request, exc: PromptError):
        return JSONResponse(status_code=422, content={"error": "PromptError", "message": str(exc)})

    @app.exception_handler(EngineError)
    async def engine_error(request: Request, exc: EngineError):
        return JSONResponse(
            status_code=422, content={"error": type(exc).__name__, "message": str(exc)}
        )

    @app.get("/api/sequences")
    def sequences():
        manifest = ws.read_manifest()
        return [
            {"name": name, **info} for name, info in sorted(manifest["sequences"].items())
        ]

    @app.get("/api/sequences/{name}/frames/{index}")
    def sequence_frame(name: str, index: int):
        try:
            info = ws.sequence_info(name)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": "unknown sequence"})
        if not 0 <= index < info["frames"]:
            return JSONResponse(status_code=404, content={"error": "frame index out of range"})
        return FileResponse(ws.seq_dir(name) / (FRAME_PATTERN % index), media_type="image/png")

    @app.post("/api/prompt")
    def run_prompt(body: dict):
        name = body.get("sequence")
        if name is None:
            names = ws.sequence_names()
            if not names:
                return JSONResponse(status_code=404, content={"error": "workspace has no sequences"})
            name = names[0]
        try:
            ws.sequence_info(name)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": f"unknown sequence {name!r}"})
        prompt = Prompt.from_dict(body["prompt"] if "prompt" in body else body)
        frames = ws.read_sequence(name)
        prompt.validate(frames.width, frames.height, len(frames))
        masks = stubs.stub_segment_track(frames, prompt, tau=float(body.get("tau", 30.0)))
        mask_id = ws.write_masks(masks)
        return {"mask_id": mask_id, "frames": len(masks)}

    @app.get("/api/masks/{mask_id}/frames/{index}")
    def mask_frame(mask_id: str, index: int):
        try:
            masks = ws.read_masks(mask_id)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": "unknown mask id"})
        if not 0 <= index < len(masks):
            return JSONResponse(status_code=404, content={"error": "frame index out of range"})
        return _png_response(masks[index].astype(np.uint8) * 255)

    @app.post("/api/jobs")
    def submit_job(body: dict):
        config = PipelineConfig.from_dict(body)
        job_id = registry.submit(config)
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = registry.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={"error": "unknown job id"})
        return job.snapshot()

    @app.get("/api/jobs/{job_id}/result/frames/{index}")
    def job_result_frame(job_id: str, index: int):
        job = registry.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={"error": "unknown job id"})
        if job.status.state != "done":
            return JSONResponse(status_code=404, content={"error": "job has no result yet"})
        return sequence_frame(job.output, index)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
