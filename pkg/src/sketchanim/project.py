"""Project files: the single source of truth shared by CLI, service, and UI.

A project is a versioned JSON document embedding the SVG source, canvas
dimensions, frame count, the stroke partition, per-group keyframes, and the
model/optimizer configurations. All semantic validation funnels through the
same engine validators regardless of who edits the file.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

from .displacement import DisplacementConfig
from .errors import ProjectVersionError, ValidationError
from .geometry import Sketch
from .motion import (DEFAULT_FRAMES, GroupPartition, Keyframe, TrajectorySpec,
                     assign_groups, resolve_trajectory)
from .optimize import OptimizerConfig
from .svg_io import parse_svg

SCHEMA_VERSION = 1


def default_project(svg_text: str, frame_count: int = DEFAULT_FRAMES) -> dict:
    """A fresh payload for an uploaded SVG; all strokes start unassigned."""
    sketch = parse_svg(svg_text)
    return {
        "version": SCHEMA_VERSION,
        "svg": svg_text,
        "canvas": {"w": sketch.canvas_w, "h": sketch.canvas_h},
        "frame_count": frame_count,
        "groups": [],
        "keyframes": [],
        "model": dataclasses.asdict(DisplacementConfig()),
        "optimizer": dataclasses.asdict(OptimizerConfig()),
    }


def _require(payload: dict, key: str, kind, field: str):
    if key not in payload:
        raise ValidationError(f"missing required field {field}", field=field)
    value = payload[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValidationError(f"{field} must be a number", field=field)
        return float(value)
    if not isinstance(value, kind):
        raise ValidationError(f"{field} must be {kind.__name__}", field=field)
    return value


def project_to_engine(payload: dict) -> tuple[Sketch, GroupPartition,
                                              TrajectorySpec,
                                              DisplacementConfig,
                                              OptimizerConfig]:
    """Validate a payload and build the engine-side objects it describes."""
    version = payload.get("version")
    if version != SCHEMA_VERSION:
        raise ProjectVersionError(version)
    sketch = parse_svg(_require(payload, "svg", str, "svg"))
    canvas = _require(payload, "canvas", dict, "canvas")
    if (abs(canvas.get("w", 0) - sketch.canvas_w) > 1e-9
            or abs(canvas.get("h", 0) - sketch.canvas_h) > 1e-9):
        raise ValidationError("canvas does not match the embedded SVG",
                              field="canvas")
    frame_count = _require(payload, "frame_count", int, "frame_count")

    assignment: dict[int, int] = {}
    names: dict[int, str] = {}
    for i, group in enumerate(_require(payload, "groups", list, "groups")):
        gid = _require(group, "id", int, f"groups[{i}].id")
        names[gid] = group.get("name", f"group {gid}")
        for sid in _require(group, "strokes", list, f"groups[{i}].strokes"):
            if sid in assignment:
                raise ValidationError(f"stroke {sid} assigned twice",
                                      field=f"groups[{i}].strokes")
            assignment[sid] = gid
    partition = assign_groups(sketch, assignment, names)

    keyframes: dict[int, list[Keyframe]] = {}
    for i, kf in enumerate(_require(payload, "keyframes", list, "keyframes")):
        gid = _require(kf, "group", int, f"keyframes[{i}].group")
        frame = _require(kf, "frame", int, f"keyframes[{i}].frame")
        dx = _require(kf, "dx", float, f"keyframes[{i}].dx")
        dy = _require(kf, "dy", float, f"keyframes[{i}].dy")
        keyframes.setdefault(gid, []).append(Keyframe(frame=frame, dx=dx, dy=dy))
    trajectory = resolve_trajectory(partition, frame_count, keyframes)

    try:
        model_cfg = DisplacementConfig(**payload.get("model", {}))
    except TypeError as e:
        raise ValidationError(f"bad model config: {e}", field="model") from e
    try:
        optimizer_cfg = OptimizerConfig(**payload.get("optimizer", {}))
    except TypeError as e:
        raise ValidationError(f"bad optimizer config: {e}", field="optimizer") from e
    return sketch, partition, trajectory, model_cfg, optimizer_cfg


def validate_project(payload: dict) -> None:
    project_to_engine(payload)


def save_project(path: str | Path, payload: dict) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True))
    os.replace(tmp, path)


def load_project(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"corrupt project file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"project file {path} is not an object")
    version = data.get("version")
    if version != SCHEMA_VERSION:
        raise ProjectVersionError(version)
    return data
