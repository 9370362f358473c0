"""FastAPI application: project CRUD, coarse previews, refinement jobs.

Every mutation is validated by the same engine validators the CLI uses;
previews are pure functions of the stored payload. Errors are JSON bodies
{code, message, field?}.
"""

from __future__ import annotations

import io
import os
import zipfile
from pathlib import Path

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from ..errors import (EmptySketchError, ProjectVersionError, SketchAnimError,
                      SvgParseError, UnsupportedSvgFeatureError,
                      ValidationError)
from ..motion import build_coarse_animation, merge_groups
from ..optimize import sequence_from_json
from ..project import default_project, project_to_engine
from ..svg_io import serialize_svg
from .jobs import JobConflictError, JobManager, build_guidance
from .schemas import (GroupsUpdate, JobView, KeyframesUpdate, ProjectSummary,
                      RefineRequest)
from .storage import NotFoundError, ProjectStore

DATA_ENV = "SKETCHANIM_DATA"


def _error(status: int, code: str, message: str,
           field: str | None = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if field:
        body["field"] = field
    return JSONResponse(status_code=status, content=body)


def create_app(data_dir: str | Path | None = None,
               max_workers: int | None = None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get(DATA_ENV, "sketchanim-data"))
    store = ProjectStore(data_dir)
    jobs = JobManager(store, max_workers=max_workers)
    app = FastAPI(title="sketchanim", version="0.1.0")
    app.state.store = store
    app.state.jobs = jobs

    @app.exception_handler(ValidationError)
    async def _validation(request: Request, exc: ValidationError):
        return _error(422, "validation", str(exc), exc.field)

    @app.exception_handler(RequestValidationError)
    async def _pydantic(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return _error(422, "validation", first.get("msg", "invalid request"),
                      loc or None)

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(JobConflictError)
    async def _conflict(request: Request, exc: JobConflictError):
        return _error(409, "job_conflict", str(exc))

    @app.exception_handler(ProjectVersionError)
    async def _version(request: Request, exc: ProjectVersionError):
        return _error(409, "version_mismatch", str(exc))

    @app.exception_handler(SvgParseError)
    async def _svg(request: Request, exc: SvgParseError):
        return _error(422, "svg_parse", f"{exc} (byte offset {exc.offset})")

    @app.exception_handler(UnsupportedSvgFeatureError)
    async def _svg_feature(request: Request, exc: UnsupportedSvgFeatureError):
        return _error(422, "svg_unsupported", str(exc))

    @app.exception_handler(EmptySketchError)
    async def _svg_empty(request: Request, exc: EmptySketchError):
        return _error(422, "svg_empty", str(exc))

    @app.exception_handler(SketchAnimError)
    async def _engine(request: Request, exc: SketchAnimError):
        return _error(500, "engine", str(exc))

    def summary(project_id: str, payload: dict) -> dict:
        sketch, partition, _, _, _ = project_to_engine(payload)
        if jobs.active_job(project_id) is not None:
            status = "refining"
        elif jobs.latest_done(project_id) is not None:
            status = "done"
        else:
            status = "draft"
        return {
            "id": project_id,
            "status": status,
            "frame_count": payload["frame_count"],
            "canvas": payload["canvas"],
            "stroke_count": len(sketch.strokes),
            "groups": payload["groups"],
            "keyframes": payload["keyframes"],
        }

    def coarse_sequence(payload: dict):
        sketch, partition, trajectory, _, _ = project_to_engine(payload)
        return merge_groups(build_coarse_animation(sketch, partition, trajectory))

    def svg_response(text: str) -> Response:
        return Response(content=text, media_type="image/svg+xml")

    # projects ----------------------------------------------------------

    @app.post("/projects", response_model=ProjectSummary, status_code=201)
    async def create_project(svg: UploadFile = File(...),
                             frame_count: int = Form(24)):
        text = (await svg.read()).decode("utf-8", errors="replace")
        payload = default_project(text, frame_count=frame_count)
        project_to_engine(payload)
        project_id = store.create(payload)
        return summary(project_id, payload)

    @app.get("/projects")
    async def list_projects():
        return {"projects": [summary(pid, store.get(pid))
                             for pid in store.list_ids()]}

    @app.get("/projects/{project_id}", response_model=ProjectSummary)
    async def get_project(project_id: str):
        return summary(project_id, store.get(project_id))

    @app.get("/projects/{project_id}/groups")
    async def get_groups(project_id: str):
        return {"groups": store.get(project_id)["groups"]}

    @app.put("/projects/{project_id}/groups")
    async def put_groups(project_id: str, update: GroupsUpdate):
        with store.lock(project_id):
            payload = store.get(project_id)
            payload["groups"] = [g.model_dump() for g in update.groups]
            project_to_engine(payload)  # single validation path
            store.put(project_id, payload)
        return {"groups": payload["groups"]}

    @app.get("/projects/{project_id}/keyframes")
    async def get_keyframes(project_id: str):
        return {"keyframes": store.get(project_id)["keyframes"]}

    @app.put("/projects/{project_id}/keyframes")
    async def put_keyframes(project_id: str, update: KeyframesUpdate):
        with store.lock(project_id):
            payload = store.get(project_id)
            payload["keyframes"] = [k.model_dump() for k in update.keyframes]
            project_to_engine(payload)
            store.put(project_id, payload)
        return {"keyframes": payload["keyframes"]}

    # previews and frames ------------------------------------------------

    @app.get("/projects/{project_id}/preview/{frame}")
    async def preview(project_id: str, frame: int):
        payload = store.get(project_id)
        seq = coarse_sequence(payload)
        return svg_response(serialize_svg(seq.frame(frame)))

    @app.get("/projects/{project_id}/frames/{frame}")
    async def frames(project_id: str, frame: int, stage: str = "coarse"):
        payload = store.get(project_id)
        if stage == "coarse":
            seq = coarse_sequence(payload)
        elif stage == "refined":
            job = jobs.latest_done(project_id)
            if job is None:
                raise NotFoundError(f"project {project_id} has no refined frames")
            refined = store.job_dir(job.id) / "refined.json"
            seq = sequence_from_json(refined.read_text())
        else:
            raise ValidationError(f"unknown stage {stage!r}", field="stage")
        return svg_response(serialize_svg(seq.frame(frame)))

    # refinement jobs ------------------------------------------------------

    @app.post("/projects/{project_id}/refine", response_model=JobView,
              status_code=202)
    async def refine(project_id: str, request: RefineRequest):
        payload = store.get(project_id)
        project_to_engine(payload)
        guidance = build_guidance(request.priors, request.prompt,
                                  request.remote_endpoint)
        job = jobs.start(project_id, payload, guidance,
                         steps=request.steps, seed=request.seed)
        return job.view()

    @app.get("/jobs/{job_id}", response_model=JobView)
    async def job_status(job_id: str):
        return jobs.get(job_id).view()

    # export ---------------------------------------------------------------

    @app.get("/projects/{project_id}/export")
    async def export(project_id: str):
        store.get(project_id)
        job = jobs.latest_done(project_id)
        if job is None:
            raise NotFoundError(f"project {project_id} has nothing to export")
        export_dir = store.job_dir(job.id) / "export"
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
            for path in sorted(export_dir.rglob("*")):
                zf.write(path, path.relative_to(export_dir))
        return Response(
            content=buffer.getvalue(), media_type="application/zip",
            headers={"Content-Disposition":
                     f'attachment; filename="{project_id}.zip"'})

    return app
