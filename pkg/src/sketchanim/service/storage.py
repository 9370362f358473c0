"""File-based persistence for projects and job artifacts.

No database: the corpus is small and the JSON files stay diffable. Writes
are atomic (temp file + rename) so a crash mid-write leaves the previous
version intact.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path

from ..errors import SketchAnimError
from ..project import load_project, save_project


class NotFoundError(SketchAnimError):
    """Unknown project or job id."""


class ProjectStore:
    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.projects_dir = self.root / "projects"
        self.jobs_dir = self.root / "jobs"
        self.projects_dir.mkdir(parents=True, exist_ok=True)
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, project_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(project_id, threading.Lock())

    def _path(self, project_id: str) -> Path:
        return self.projects_dir / f"{project_id}.json"

    def create(self, payload: dict) -> str:
        project_id = uuid.uuid4().hex[:12]
        save_project(self._path(project_id), payload)
        return project_id

    def exists(self, project_id: str) -> bool:
        return self._path(project_id).exists()

    def get(self, project_id: str) -> dict:
        path = self._path(project_id)
        if not path.exists():
            raise NotFoundError(f"unknown project {project_id}")
        return load_project(path)

    def put(self, project_id: str, payload: dict) -> None:
        if not self.exists(project_id):
            raise NotFoundError(f"unknown project {project_id}")
        save_project(self._path(project_id), payload)

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.projects_dir.glob("*.json"))

    # job artifacts -----------------------------------------------------

    def job_dir(self, job_id: str) -> Path:
        path = self.jobs_dir / job_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_job_record(self, job_id: str, record: dict) -> None:
        path = self.jobs_dir / f"{job_id}.json"
        tmp = path.parent / (path.name + ".tmp")
        tmp.write_text(json.dumps(record, indent=2))
        os.replace(tmp, path)
