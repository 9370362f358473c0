"""Stage 1: stroke grouping, keyframe trajectories, and the coarse animation.

Users partition strokes into semantic groups and pin per-group 2D offsets at
keyframes; intermediate frames interpolate linearly between adjacent
keyframes. Every point of a group gets the same offset (rigid per-group
motion); non-rigid refinement is Stage 2's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import FrameSequence, Sketch, SketchTopology

STATIC_GROUP_ID = 0
MIN_FRAMES = 2
MAX_FRAMES = 64
DEFAULT_FRAMES = 24


@dataclass(frozen=True)
class GroupSpec:
    group_id: int
    name: str
    stroke_ids: tuple[int, ...]


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint cover of all stroke ids by semantic groups."""

    groups: tuple[GroupSpec, ...]

    @property
    def group_count(self) -> int:
        return len(self.groups)

    def group_ids(self) -> list[int]:
        return [g.group_id for g in self.groups]


def assign_groups(sketch: Sketch, assignment: dict[int, int],
                  names: dict[int, str] | None = None) -> GroupPartition:
    """Build a partition from a stroke-id to group-id mapping.

    Strokes absent from ``assignment`` fall into an implicit static group 0
    (omitted when empty). Unknown stroke ids are rejected.
    """
    names = names or {}
    known = {s.id for s in sketch.strokes}
    for sid in assignment:
        if sid not in known:
            raise ValidationError(f"unknown stroke id {sid}", field=f"groups[{sid}]")

    members: dict[int, list[int]] = {}
    for stroke in sketch.strokes:  # sketch order keeps groups deterministic
        gid = assignment.get(stroke.id, STATIC_GROUP_ID)
        members.setdefault(gid, []).append(stroke.id)

    groups = []
    for gid in sorted(members):
        default = "static" if gid == STATIC_GROUP_ID else f"group {gid}"
        groups.append(GroupSpec(group_id=gid, name=names.get(gid, default),
                                stroke_ids=tuple(members[gid])))
    return GroupPartition(groups=tuple(groups))


def validate_partition(sketch: Sketch, partition: GroupPartition) -> None:
    """Every stroke id appears in exactly one group."""
    seen: list[int] = []
    for g in partition.groups:
        seen.extend(g.stroke_ids)
    expected = [s.id for s in sketch.strokes]
    if sorted(seen) != sorted(expected):
        raise ValidationError("partition must cover every stroke exactly once",
                              field="groups")
    if len(partition.groups) < 1:
        raise ValidationError("partition needs at least one group", field="groups")


@dataclass(frozen=True)
class Keyframe:
    """A pinned offset for one group at one frame (1-based)."""

    frame: int
    dx: float
    dy: float

    @property
    def offset(self) -> np.ndarray:
        return np.array([self.dx, self.dy], dtype=np.float64)


@dataclass(frozen=True)
class TrajectorySpec:
    """Per-group ordered keyframes over a shared frame count."""

    frame_count: int
    keyframes: dict[int, tuple[Keyframe, ...]]

    def for_group(self, group_id: int) -> tuple[Keyframe, ...]:
        return self.keyframes.get(group_id, ())


def resolve_trajectory(partition: GroupPartition, frame_count: int,
                       keyframes: dict[int, list[Keyframe]]) -> TrajectorySpec:
    """Validate and canonicalize raw keyframe input.

    Groups without keyframes get the static pair (1, 0, 0) .. (K, 0, 0). A
    missing frame-1 keyframe is prepended as (1, 0, 0); a nonzero offset at
    frame 1 is rejected, keeping "the input sketch is the first frame"
    literal. If the last keyframe sits before frame K its offset is held to
    the final frame.
    """
    if not MIN_FRAMES <= frame_count <= MAX_FRAMES:
        raise ValidationError(
            f"frame count must be in {MIN_FRAMES}..{MAX_FRAMES}, got {frame_count}",
            field="frame_count")
    group_ids = set(partition.group_ids())
    for gid in keyframes:
        if gid not in group_ids:
            raise ValidationError(f"keyframes reference unknown group {gid}",
                                  field="keyframes")

    resolved: dict[int, tuple[Keyframe, ...]] = {}
    for gid in sorted(group_ids):
        kfs = sorted(keyframes.get(gid, []), key=lambda k: k.frame)
        for i, kf in enumerate(kfs):
            if not 1 <= kf.frame <= frame_count:
                raise ValidationError(
                    f"group {gid}: keyframe frame {kf.frame} outside 1..{frame_count}",
                    field=f"keyframes[{i}].frame")
            if i > 0 and kf.frame <= kfs[i - 1].frame:
                raise ValidationError(
                    f"group {gid}: keyframe frames must be strictly increasing",
                    field=f"keyframes[{i}].frame")
            if kf.frame == 1 and (kf.dx != 0.0 or kf.dy != 0.0):
                raise ValidationError(
                    f"group {gid}: the first frame is the input sketch; "
                    "a keyframe at frame 1 must have offset (0, 0)",
                    field=f"keyframes[{i}].dx")
        if not kfs or kfs[0].frame != 1:
            kfs.insert(0, Keyframe(frame=1, dx=0.0, dy=0.0))
        if kfs[-1].frame != frame_count:
            last = kfs[-1]
            kfs.append(Keyframe(frame=frame_count, dx=last.dx, dy=last.dy))
        resolved[gid] = tuple(kfs)
    return TrajectorySpec(frame_count=frame_count, keyframes=resolved)


def interpolate_offsets(keyframes: list[Keyframe] | tuple[Keyframe, ...],
                        frame_count: int) -> np.ndarray:
    """Per-frame offsets, linear between adjacent keyframes.

    For a frame t between keyframes t1 < t < t2 the offset is
    (1 - t') * e(t1) + t' * e(t2) with t' = (t - t1) / (t2 - t1); at a
    keyframe frame the offset is that keyframe's value exactly. Returns a
    (K, 2) array indexed by frame - 1.
    """
    kfs = list(keyframes)
    if len(kfs) < 2:
        raise ValidationError("need at least 2 keyframes to interpolate")
    frames = [k.frame for k in kfs]
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ValidationError("keyframe frames must be strictly increasing")
    if frames[0] != 1 or frames[-1] != frame_count:
        raise ValidationError("keyframes must span frames 1..K")

    out = np.zeros((frame_count, 2), dtype=np.float64)
    seg = 0
    for frame in range(1, frame_count + 1):
        while frame > frames[seg + 1]:
            seg += 1
        a, b = kfs[seg], kfs[seg + 1]
        if frame == a.frame:
            out[frame - 1] = a.offset
        elif frame == b.frame:
            out[frame - 1] = b.offset
        else:
            t = (frame - a.frame) / (b.frame - a.frame)
            out[frame - 1] = (1.0 - t) * a.offset + t * b.offset
    return out


@dataclass(frozen=True)
class GroupTensor:
    """One group's animated control points plus its place in the sketch.

    ``members`` are indices into the parent topology's stroke order, so a
    merged sequence can restore the original stroke ordering exactly.
    """

    group_id: int
    name: str
    members: tuple[int, ...]
    topology: SketchTopology
    points: np.ndarray  # (N_i, K, 2)

    @property
    def point_count(self) -> int:
        return self.points.shape[0]

    @property
    def frame_count(self) -> int:
        return self.points.shape[1]

    def member_slices(self) -> list[slice]:
        """Per-member row ranges inside this group's stacked point array."""
        counts = [self.topology.point_counts[m] for m in self.members]
        out, start = [], 0
        for c in counts:
            out.append(slice(start, start + c))
            start += c
        return out

    def centroids(self) -> np.ndarray:
        """Per-frame centroid of the group's points, shape (K, 2)."""
        return self.points.mean(axis=0)


def build_coarse_animation(sketch: Sketch, partition: GroupPartition,
                           traj: TrajectorySpec) -> list[GroupTensor]:
    """Apply interpolated rigid offsets: G_i[n, k] = P_init[n] + O_i[k].

    Frame 1 equals the input sketch restricted to each group; the final
    frame realizes each group's last keyframe offset exactly.
    """
    validate_partition(sketch, partition)
    topo = sketch.topology()
    slices = topo.stroke_slices()
    index_of = {sid: i for i, sid in enumerate(topo.stroke_ids)}
    all_points = sketch.point_array()

    groups: list[GroupTensor] = []
    for spec in partition.groups:
        kfs = traj.for_group(spec.group_id)
        if len(kfs) < 2:
            raise ValidationError(
                f"group {spec.group_id} has no resolved keyframes; "
                "run resolve_trajectory first", field="keyframes")
        offsets = interpolate_offsets(kfs, traj.frame_count)
        members = tuple(index_of[sid] for sid in spec.stroke_ids)
        base = np.concatenate([all_points[slices[m]] for m in members], axis=0)
        pts = base[:, None, :] + offsets[None, :, :]
        groups.append(GroupTensor(group_id=spec.group_id, name=spec.name,
                                  members=members, topology=topo, points=pts))
    return groups


def split_sequence(seq: FrameSequence, partition: GroupPartition,
                   names: bool = True) -> list[GroupTensor]:
    """Carve a frame sequence into per-group tensors (inverse of merge)."""
    topo = seq.topology
    slices = topo.stroke_slices()
    index_of = {sid: i for i, sid in enumerate(topo.stroke_ids)}
    out = []
    for spec in partition.groups:
        members = tuple(index_of[sid] for sid in spec.stroke_ids)
        pts = np.concatenate([np.asarray(seq.points)[slices[m]] for m in members], axis=0)
        out.append(GroupTensor(group_id=spec.group_id, name=spec.name,
                               members=members, topology=topo, points=pts))
    return out


def merge_groups(groups: list[GroupTensor]) -> FrameSequence:
    """Recombine group tensors into a sequence in original stroke order."""
    if not groups:
        raise ValidationError("nothing to merge")
    topo = groups[0].topology
    frame_count = groups[0].frame_count
    seen: set[int] = set()
    for g in groups:
        if g.topology is not topo and g.topology != topo:
            raise ValidationError("groups disagree on sketch topology")
        if g.frame_count != frame_count:
            raise ValidationError("groups disagree on frame count")
        dup = seen.intersection(g.members)
        if dup:
            raise ValidationError(f"stroke index {sorted(dup)[0]} appears in two groups")
        seen.update(g.members)
    if seen != set(range(topo.n_strokes)):
        missing = sorted(set(range(topo.n_strokes)) - seen)
        raise ValidationError(f"merge is missing stroke indices {missing}")

    merged = np.empty((topo.total_points, frame_count, 2), dtype=np.float64)
    slices = topo.stroke_slices()
    for g in groups:
        for member, gsl in zip(g.members, g.member_slices()):
            merged[slices[member]] = g.points[gsl]
    return FrameSequence(topology=topo, points=merged)
