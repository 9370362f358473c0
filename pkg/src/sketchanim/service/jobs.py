"""Refinement job management: a bounded worker pool plus polling state.

One active job per project; progress is published by the single worker
thread and read by any number of pollers. Remote prior failures pause the
job (checkpoint already flushed by the engine) instead of failing it.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor

from ..errors import RemotePriorError, SketchAnimError
from ..guidance import GuidanceConfig
from ..optimize import OptimizerConfig, export_sequence, run_refinement
from ..project import project_to_engine
from .storage import ProjectStore

logger = logging.getLogger(__name__)

PRIOR_NAMES = ("traj", "shape", "smooth")


class JobConflictError(SketchAnimError):
    """The project already has a running job."""


@dataclasses.dataclass
class Job:
    id: str
    project_id: str
    state: str = "running"  # running | paused | failed | done
    step: int = 0
    total_steps: int = 0
    losses: dict = dataclasses.field(default_factory=dict)
    trace: list = dataclasses.field(default_factory=list)
    error: str | None = None
    created: float = dataclasses.field(default_factory=time.time)

    def view(self) -> dict:
        return {"id": self.id, "project": self.project_id, "state": self.state,
                "step": self.step, "total_steps": self.total_steps,
                "losses": self.losses, "trace": self.trace, "error": self.error}


def build_guidance(priors: list[str] | None, prompt: str,
                   remote_endpoint: str | None) -> GuidanceConfig:
    """Default weights, keeping only the requested surrogate priors."""
    defaults = GuidanceConfig()
    if priors is not None:
        unknown = set(priors) - set(PRIOR_NAMES)
        if unknown:
            raise SketchAnimError(f"unknown priors: {sorted(unknown)}")
        weights = {name: (getattr(defaults, f"w_{name}") if name in priors else 0.0)
                   for name in PRIOR_NAMES}
    else:
        weights = {name: getattr(defaults, f"w_{name}") for name in PRIOR_NAMES}
    return GuidanceConfig(w_traj=weights["traj"], w_shape=weights["shape"],
                          w_smooth=weights["smooth"], w_remote=defaults.w_remote,
                          prompt=prompt, remote_endpoint=remote_endpoint)


class JobManager:
    def __init__(self, store: ProjectStore, max_workers: int | None = None):
        self.store = store
        self.executor = ThreadPoolExecutor(
            max_workers=max_workers or os.cpu_count() or 2)
        self.jobs: dict[str, Job] = {}
        self._guard = threading.Lock()

    def active_job(self, project_id: str) -> Job | None:
        for job in self.jobs.values():
            if job.project_id == project_id and job.state == "running":
                return job
        return None

    def latest_done(self, project_id: str) -> Job | None:
        done = [j for j in self.jobs.values()
                if j.project_id == project_id and j.state == "done"]
        return max(done, key=lambda j: j.created) if done else None

    def get(self, job_id: str) -> Job:
        job = self.jobs.get(job_id)
        if job is None:
            from .storage import NotFoundError
            raise NotFoundError(f"unknown job {job_id}")
        return job

    def start(self, project_id: str, payload: dict,
              guidance: GuidanceConfig, steps: int | None = None,
              seed: int | None = None) -> Job:
        with self._guard:
            if self.active_job(project_id) is not None:
                raise JobConflictError(
                    f"project {project_id} already has a running job")
            job = Job(id=uuid.uuid4().hex[:12], project_id=project_id)
            self.jobs[job.id] = job
        self.executor.submit(self._run, job, payload, guidance, steps, seed)
        return job

    def _run(self, job: Job, payload: dict, guidance: GuidanceConfig,
             steps: int | None, seed: int | None) -> None:
        workdir = self.store.job_dir(job.id)
        try:
            sketch, partition, trajectory, model_cfg, opt_cfg = \
                project_to_engine(payload)
            if steps is not None or seed is not None:
                opt_cfg = dataclasses.replace(
                    opt_cfg,
                    steps=steps if steps is not None else opt_cfg.steps,
                    seed=seed if seed is not None else opt_cfg.seed)
            job.total_steps = opt_cfg.steps

            def progress(step: int, entry: dict) -> None:
                job.step = step
                job.losses = entry
                job.trace.append({"step": step, "total": entry["total"]})

            result = run_refinement(sketch, partition, trajectory, model_cfg,
                                    guidance, opt_cfg, workdir=workdir,
                                    progress=progress)
            export_sequence(result.refined, workdir / "export")
            job.state = "done"
        except RemotePriorError as e:
            job.state = "paused"
            job.error = str(e)
            logger.warning("job %s paused: %s", job.id, e)
        except Exception as e:  # noqa: BLE001 - job boundary
            job.state = "failed"
            job.error = str(e)
            logger.exception("job %s failed", job.id)
        finally:
            self.store.write_job_record(job.id, job.view())
