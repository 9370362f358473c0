"""Canonical sketch data model: strokes of cubic Bezier control points.

All types are immutable values after construction (arrays are frozen), so
they are safe to share read-only across concurrent jobs. Coordinates stay in
canvas units at rest; normalization to [-1, 1] happens only at the network
boundary. Frame indices are 1-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Point2:
    """A 2D control point in canvas units."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValidationError("point coordinates must be finite")


@dataclass(frozen=True)
class Stroke:
    """A chain of cubic Bezier segments sharing endpoints.

    ``points`` has shape (P, 2) with P = 1 + 3 * segments; segment ``s`` uses
    rows ``3s .. 3s+3``. Shared endpoints are stored once, which guarantees C0
    continuity structurally.
    """

    id: int
    points: np.ndarray
    width: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"stroke {self.id}: points must be (P, 2)")
        if pts.shape[0] < 4 or pts.shape[0] % 3 != 1:
            raise ValidationError(
                f"stroke {self.id}: point count must be >= 4 and 1 mod 3, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"stroke {self.id}: non-finite coordinates")
        if not self.width > 0:
            raise ValidationError(f"stroke {self.id}: width must be > 0")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_segments(self) -> int:
        return (self.points.shape[0] - 1) // 3


@dataclass(frozen=True)
class SketchTopology:
    """Structural skeleton of a sketch: ids, point counts, widths, canvas."""

    stroke_ids: tuple[int, ...]
    point_counts: tuple[int, ...]
    widths: tuple[float, ...]
    canvas_w: float
    canvas_h: float

    @property
    def n_strokes(self) -> int:
        return len(self.stroke_ids)

    @property
    def total_points(self) -> int:
        return sum(self.point_counts)

    def stroke_slices(self) -> list[slice]:
        """Row ranges of each stroke inside the stacked (N, 2) point array."""
        out, start = [], 0
        for count in self.point_counts:
            out.append(slice(start, start + count))
            start += count
        return out


@dataclass(frozen=True)
class Sketch:
    """A static vector sketch: strokes on a white canvas."""

    strokes: tuple[Stroke, ...]
    canvas_w: float
    canvas_h: float

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))
        if not (self.canvas_w > 0 and self.canvas_h > 0):
            raise ValidationError("canvas dimensions must be positive")
        ids = [s.id for s in self.strokes]
        if len(set(ids)) != len(ids):
            raise ValidationError("stroke ids must be unique")
        if self.total_points == 0:
            raise ValidationError("sketch must contain at least one control point")

    @property
    def total_points(self) -> int:
        return sum(s.n_points for s in self.strokes)

    def topology(self) -> SketchTopology:
        return SketchTopology(
            stroke_ids=tuple(s.id for s in self.strokes),
            point_counts=tuple(s.n_points for s in self.strokes),
            widths=tuple(s.width for s in self.strokes),
            canvas_w=self.canvas_w,
            canvas_h=self.canvas_h,
        )

    def point_array(self) -> np.ndarray:
        """All control points stacked into (N, 2), stroke order preserved."""
        return np.concatenate([s.points for s in self.strokes], axis=0)


def sketch_from_points(topology: SketchTopology, points: np.ndarray) -> Sketch:
    """Rebuild a Sketch from a stacked (N, 2) array and its topology."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (topology.total_points, 2):
        raise ValidationError(
            f"point array shape {points.shape} does not match topology "
            f"({topology.total_points}, 2)")
    strokes = []
    for sid, width, sl in zip(topology.stroke_ids, topology.widths,
                              topology.stroke_slices()):
        strokes.append(Stroke(id=sid, points=points[sl], width=width))
    return Sketch(strokes=tuple(strokes), canvas_w=topology.canvas_w,
                  canvas_h=topology.canvas_h)


@dataclass(frozen=True)
class FrameSequence:
    """K structurally identical snapshots of a sketch.

    ``points`` has shape (N, K, 2). Frames are addressed 1..K.
    """

    topology: SketchTopology
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        n = self.topology.total_points
        if pts.ndim != 3 or pts.shape[0] != n or pts.shape[2] != 2:
            raise ValidationError(f"frame points must be ({n}, K, 2), got {pts.shape}")
        if pts.shape[1] < 2:
            raise ValidationError("a frame sequence needs at least 2 frames")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def frame_count(self) -> int:
        return self.points.shape[1]

    def frame(self, k: int) -> Sketch:
        """Sketch snapshot of frame ``k`` (1-based)."""
        if not 1 <= k <= self.frame_count:
            raise ValidationError(f"frame index {k} out of range 1..{self.frame_count}")
        return sketch_from_points(self.topology, self.points[:, k - 1, :].copy())

    def frame_points(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.frame_count:
            raise ValidationError(f"frame index {k} out of range 1..{self.frame_count}")
        return self.points[:, k - 1, :].copy()


@dataclass(frozen=True)
class NormalizedPoints:
    """Control points mapped to [-1, 1] x [-1, 1] plus the mapping metadata."""

    values: np.ndarray
    canvas_w: float
    canvas_h: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


def normalize(sketch: Sketch) -> NormalizedPoints:
    """Map canvas coordinates to [-1, 1]: x' = 2x/w - 1, y' = 2y/h - 1."""
    pts = sketch.point_array()
    return NormalizedPoints(
        values=normalize_array(pts, sketch.canvas_w, sketch.canvas_h),
        canvas_w=sketch.canvas_w, canvas_h=sketch.canvas_h)


def normalize_array(points: np.ndarray, canvas_w: float, canvas_h: float) -> np.ndarray:
    if not (canvas_w > 0 and canvas_h > 0):
        raise ValidationError("canvas dimensions must be positive")
    points = np.asarray(points, dtype=np.float64)
    scale = np.array([2.0 / canvas_w, 2.0 / canvas_h])
    return points * scale - 1.0


def denormalize_array(values: np.ndarray, canvas_w: float, canvas_h: float) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    scale = np.array([canvas_w / 2.0, canvas_h / 2.0])
    return (values + 1.0) * scale


def replicate(sketch: Sketch, frame_count: int) -> FrameSequence:
    """Tile the static sketch into K identical frames."""
    if frame_count < 2:
        raise ValidationError(f"frame count must be >= 2, got {frame_count}")
    pts = sketch.point_array()
    tiled = np.repeat(pts[:, None, :], frame_count, axis=1)
    return FrameSequence(topology=sketch.topology(), points=tiled)


def apply_displacement(seq: FrameSequence, delta: np.ndarray) -> FrameSequence:
    """Add per-point per-frame offsets: out[n, k] = in[n, k] + delta[n, k]."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != seq.points.shape:
        raise ValidationError(
            f"displacement shape {delta.shape} does not match {seq.points.shape}")
    return FrameSequence(topology=seq.topology, points=seq.points + delta)
