"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class GroupModel(BaseModel):
    id: int
    name: str = ""
    strokes: list[int]


class KeyframeModel(BaseModel):
    group: int
    frame: int
    dx: float
    dy: float


class GroupsUpdate(BaseModel):
    groups: list[GroupModel]


class KeyframesUpdate(BaseModel):
    keyframes: list[KeyframeModel]


class RefineRequest(BaseModel):
    steps: int | None = Field(default=None, ge=1)
    seed: int | None = None
    priors: list[str] | None = None
    prompt: str = ""
    remote_endpoint: str | None = None


class CanvasModel(BaseModel):
    w: float
    h: float


class ProjectSummary(BaseModel):
    id: str
    status: str
    frame_count: int
    canvas: CanvasModel
    stroke_count: int
    groups: list[GroupModel]
    keyframes: list[KeyframeModel]


class JobView(BaseModel):
    id: str
    project: str
    state: str
    step: int
    total_steps: int
    losses: dict
    trace: list[dict] = []
    error: str | None = None


class ErrorBody(BaseModel):
    code: str
    message: str
    field: str | None = None
