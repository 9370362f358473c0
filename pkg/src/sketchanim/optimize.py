"""The refinement loop: Adam, alternating path schedule, logging, export.

Steps are 1-based. Odd steps update the global path, even steps the local
path; shared modules (embedding, positional projection, attention stack)
update every step at the active path's learning rate. Runs are deterministic
given the seed: identical inputs produce bit-identical loss traces and
checkpoints.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .displacement import (DisplacementConfig, GroupDisplacementModel,
                           save_params)
from .errors import RemotePriorError, ValidationError
from .geometry import FrameSequence, Sketch, SketchTopology
from .guidance import (GuidanceConfig, RemotePriorClient, pixel_mse_loss,
                       resolve_endpoint, resolve_timeout, shape_loss,
                       smoothness_loss, total_loss, trajectory_loss)
from .motion import (GroupPartition, GroupTensor, TrajectorySpec,
                     build_coarse_animation, merge_groups)
from .raster import (EXPORT_CONFIG, RasterConfig, frame_to_png_bytes,
                     patch_features, rasterize, rasterize_sequence_array)
from .svg_io import serialize_svg

logger = logging.getLogger(__name__)

DEFAULT_FPS = 8


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 500
    lr_global: float = 1e-4
    lr_local: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    snapshot_every: int = 50
    grad_clip: float = 10.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.lr_global <= 0 or self.lr_local <= 0:
            raise ValidationError("learning rates must be positive")


def adam_step(values: np.ndarray, grad: np.ndarray,
              state: tuple[np.ndarray, np.ndarray, int], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, int]]:
    """One bias-corrected Adam update; returns (new values, new state)."""
    if not np.all(np.isfinite(grad)):
        raise ValidationError("non-finite gradient")
    m, v, t = state
    t += 1
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return values - lr * m_hat / (np.sqrt(v_hat) + eps), (m, v, t)


class Adam:
    """Per-parameter Adam state keyed by name; parameters may be updated on
    different subsets of steps (the alternating schedule)."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.state: dict[str, tuple[np.ndarray, np.ndarray, int]] = {}

    def step(self, named: dict[str, Tensor], lr: float) -> None:
        cfg = self.cfg
        for name, tensor in named.items():
            if tensor.grad is None:
                continue
            if not np.all(np.isfinite(tensor.grad)):
                raise ValidationError(f"non-finite gradient in {name}")
            if name not in self.state:
                self.state[name] = (np.zeros_like(tensor.values),
                                    np.zeros_like(tensor.values), 0)
            tensor.values, self.state[name] = adam_step(
                tensor.values, tensor.grad, self.state[name], lr,
                cfg.beta1, cfg.beta2, cfg.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, (m, v, t) in self.state.items():
            out[f"adam.m/{name}"] = m
            out[f"adam.v/{name}"] = v
            out[f"adam.t/{name}"] = np.array(float(t))
        return out


@dataclass
class RefinementResult:
    refined: FrameSequence
    groups: list[GroupTensor]
    trace: list[dict]
    checkpoint: bytes
    coarse: FrameSequence
    frame_snapshots: dict[int, np.ndarray] = field(default_factory=dict)


def _raster_order_topology(groups: list[GroupTensor]) -> SketchTopology:
    """Topology matching the concatenation order of the group tensors."""
    base = groups[0].topology
    ids, counts, widths = [], [], []
    for g in groups:
        for m in g.members:
            ids.append(base.stroke_ids[m])
            counts.append(base.point_counts[m])
            widths.append(base.widths[m])
    return SketchTopology(stroke_ids=tuple(ids), point_counts=tuple(counts),
                          widths=tuple(widths), canvas_w=base.canvas_w,
                          canvas_h=base.canvas_h)


def _context_features(coarse: FrameSequence, raster_cfg: RasterConfig,
                      grid: int) -> np.ndarray:
    """Patch features of the merged coarse render, fixed for the whole run."""
    rendered = rasterize_sequence_array(coarse, raster_cfg)
    return np.stack([patch_features(frame, grid) for frame in rendered], axis=0)


def _grad_norm(tensors: list[Tensor]) -> float:
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return float(np.sqrt(total))


def run_refinement(sketch: Sketch, partition: GroupPartition,
                   trajectory: TrajectorySpec,
                   model_cfg: DisplacementConfig,
                   guidance_cfg: GuidanceConfig,
                   optimizer_cfg: OptimizerConfig,
                   raster_cfg: RasterConfig | None = None,
                   workdir: str | Path | None = None,
                   progress: Callable[[int, dict], None] | None = None,
                   trajectory_targets: list[np.ndarray] | None = None
                   ) -> RefinementResult:
    """Optimize per-group displacement models against the configured priors.

    ``trajectory_targets`` overrides the trajectory loss reference (defaults
    to the coarse animation itself). On a remote prior failure the current
    checkpoint and trace are flushed to ``workdir`` and the error propagates,
    leaving the job resumable.
    """
    raster_cfg = raster_cfg or RasterConfig()
    workdir = Path(workdir) if workdir is not None else None
    if workdir is not None:
        workdir.mkdir(parents=True, exist_ok=True)

    coarse_groups = build_coarse_animation(sketch, partition, trajectory)
    coarse_seq = merge_groups(coarse_groups)
    context = _context_features(coarse_seq, raster_cfg, model_cfg.patch_grid)

    models = [GroupDisplacementModel(model_cfg, sketch.canvas_w, sketch.canvas_h,
                                     np.random.default_rng([optimizer_cfg.seed, i]))
              for i in range(len(coarse_groups))]
    targets = ([np.asarray(t) for t in trajectory_targets]
               if trajectory_targets is not None
               else [np.asarray(g.points) for g in coarse_groups])
    if len(targets) != len(coarse_groups):
        raise ValidationError("need one trajectory target per group")

    raster_topology = _raster_order_topology(coarse_groups)
    adam = Adam(optimizer_cfg)
    endpoint = resolve_endpoint(guidance_cfg)
    client = (RemotePriorClient(endpoint, resolve_timeout(guidance_cfg))
              if endpoint else None)

    def named_params(kind: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, model in enumerate(models):
            names = {"local": model.local_param_names,
                     "global": model.global_param_names,
                     "shared": model.shared_param_names}[kind]()
            for n in names:
                out[f"group{i}/{n}"] = model.params[n]
        return out

    local_params = named_params("local")
    global_params = named_params("global")
    shared_params = named_params("shared")

    def checkpoint_bytes() -> bytes:
        merged: dict[str, np.ndarray] = {}
        for i, model in enumerate(models):
            for n, t in model.params.items():
                merged[f"group{i}/{n}"] = t.values
        merged.update(adam.state_arrays())
        return save_params(merged)

    def flush(trace: list[dict]) -> None:
        if workdir is None:
            return
        (workdir / "checkpoint.bin").write_bytes(checkpoint_bytes())
        save_trace_csv(trace, workdir / "loss_trace.csv")

    trace: list[dict] = []
    snapshots: dict[int, np.ndarray] = {}
    try:
        for step in range(1, optimizer_cfg.steps + 1):
            active = "local" if step % 2 == 0 else "global"
            active_head = local_params if active == "local" else global_params
            idle_head = global_params if active == "local" else local_params
            lr = (optimizer_cfg.lr_local if active == "local"
                  else optimizer_cfg.lr_global)
            for t in active_head.values():
                t.requires_grad = True
            for t in idle_head.values():
                t.requires_grad = False
            for t in (*shared_params.values(), *active_head.values()):
                t.zero_grad()

            tape = Tape()
            with tape:
                results = [model.predict(group, context)
                           for model, group in zip(models, coarse_groups)]
                refined_list = [r.refined for r in results]
                merged_pts = ad.concat(refined_list, axis=0)
                frames = [rasterize(merged_pts[:, k, :], raster_topology, raster_cfg)
                          for k in range(trajectory.frame_count)]
                terms: dict[str, Tensor] = {}
                if guidance_cfg.w_traj > 0:
                    terms["traj"] = trajectory_loss(refined_list, targets)
                if guidance_cfg.w_shape > 0:
                    per_group = [shape_loss(r, g)
                                 for r, g in zip(refined_list, coarse_groups)]
                    terms["shape"] = ad.mean(ad.stack(per_group))
                if guidance_cfg.w_smooth > 0 and trajectory.frame_count >= 3:
                    terms["smooth"] = smoothness_loss(refined_list)
                if guidance_cfg.pixel_target is not None and guidance_cfg.w_remote > 0:
                    terms["pixel"] = pixel_mse_loss(frames, guidance_cfg.pixel_target)
                loss, report = total_loss(terms, guidance_cfg)

            seeds: dict[Tensor, np.ndarray | float] = {loss: 1.0}
            if client is not None:
                rendered = np.stack([f.values for f in frames], axis=0)
                grads = client.gradients(rendered, guidance_cfg.prompt, step)
                for frame, g in zip(frames, grads):
                    seeds[frame] = guidance_cfg.w_remote * g
                report["remote_grad_norm"] = float(
                    guidance_cfg.w_remote * np.linalg.norm(grads))
            tape.backward(seeds)

            updated = {**shared_params, **active_head}
            norm = _grad_norm(list(updated.values()))
            if norm > optimizer_cfg.grad_clip:
                factor = optimizer_cfg.grad_clip / norm
                for t in updated.values():
                    if t.grad is not None:
                        t.grad = t.grad * factor
            adam.step(updated, lr)

            entry = {"step": step, **report}
            trace.append(entry)
            if progress is not None:
                progress(step, entry)
            if optimizer_cfg.snapshot_every and \
                    step % optimizer_cfg.snapshot_every == 0:
                snapshots[step] = np.stack([f.values for f in frames], axis=0)
                flush(trace)
    except RemotePriorError:
        logger.warning("remote prior failed at step %d; pausing", len(trace) + 1)
        flush(trace)
        raise
    finally:
        if client is not None:
            client.close()

    refined_groups = []
    final = [model.predict(group, context)
             for model, group in zip(models, coarse_groups)]
    for group, result in zip(coarse_groups, final):
        refined_groups.append(GroupTensor(
            group_id=group.group_id, name=group.name, members=group.members,
            topology=group.topology, points=result.refined.values))
    refined_seq = merge_groups(refined_groups)

    result = RefinementResult(refined=refined_seq, groups=refined_groups,
                              trace=trace, checkpoint=checkpoint_bytes(),
                              coarse=coarse_seq, frame_snapshots=snapshots)
    if workdir is not None:
        flush(trace)
        (workdir / "refined.json").write_text(sequence_to_json(refined_seq))
        (workdir / "coarse.json").write_text(sequence_to_json(coarse_seq))
    return result


def save_trace_csv(trace: list[dict], path: str | Path) -> None:
    """Loss trace as CSV: step, total, then per-term columns."""
    columns = ["step", "total"]
    for entry in trace:
        for key in entry:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        for entry in trace:
            writer.writerow(entry)


def sequence_to_json(seq: FrameSequence) -> str:
    topo = seq.topology
    return json.dumps({
        "stroke_ids": list(topo.stroke_ids),
        "point_counts": list(topo.point_counts),
        "widths": list(topo.widths),
        "canvas": {"w": topo.canvas_w, "h": topo.canvas_h},
        "frame_count": seq.frame_count,
        "points": np.asarray(seq.points).tolist(),
    })


def sequence_from_json(text: str) -> FrameSequence:
    data = json.loads(text)
    topo = SketchTopology(stroke_ids=tuple(data["stroke_ids"]),
                          point_counts=tuple(data["point_counts"]),
                          widths=tuple(data["widths"]),
                          canvas_w=data["canvas"]["w"],
                          canvas_h=data["canvas"]["h"])
    return FrameSequence(topology=topo, points=np.array(data["points"]))


def export_sequence(seq: FrameSequence, out_dir: str | Path,
                    formats: tuple[str, ...] = ("svg", "png"),
                    raster_cfg: RasterConfig = EXPORT_CONFIG,
                    fps: int = DEFAULT_FPS) -> list[str]:
    """Write per-frame SVG/PNG files plus a manifest; returns the manifest
    file list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fmt in formats:
        if fmt not in ("svg", "png"):
            raise ValidationError(f"unknown export format {fmt!r}")
    files: list[str] = []
    for k in range(1, seq.frame_count + 1):
        if "svg" in formats:
            name = f"frame_{k:04d}.svg"
            (out / name).write_text(serialize_svg(seq.frame(k)))
            files.append(name)
        if "png" in formats:
            name = f"frame_{k:04d}.png"
            intensities = rasterize(seq.frame_points(k), seq.topology,
                                    raster_cfg).values
            (out / name).write_bytes(frame_to_png_bytes(intensities))
            files.append(name)
    manifest = {"frame_count": seq.frame_count, "fps": fps, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return files
