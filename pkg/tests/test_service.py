import io
import json
import time
import zipfile

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sketchanim.service import create_app
from sketchanim.stub_prior import StubServerThread, create_stub_app
from sketchanim.svg_io import parse_svg
from tests.conftest import make_two_object_svg

FAST_MODEL = {"hidden_dim": 16, "attn_layers": 1, "attn_heads": 2,
              "spatial_bands": 4, "patch_grid": 4}


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "data", max_workers=2)
    with TestClient(app) as c:
        yield c


def upload(client, frame_count=6) -> str:
    response = client.post(
        "/projects",
        files={"svg": ("sketch.svg", make_two_object_svg(), "image/svg+xml")},
        data={"frame_count": str(frame_count)})
    assert response.status_code == 201, response.text
    return response.json()["id"]


def shrink_configs(client, pid):
    """Point the stored project at a tiny model so jobs finish quickly."""
    from sketchanim.project import load_project, save_project

    store = client.app.state.store
    payload = store.get(pid)
    payload["model"].update(FAST_MODEL)
    payload["optimizer"].update({"steps": 4, "snapshot_every": 0})
    store.put(pid, payload)


def wait_for(client, job_id, states=("done",), timeout=60.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/jobs/{job_id}").json()
        if body["state"] in states:
            return body
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not reach {states}: {body}")


def test_upload_creates_draft_project(client):
    pid = upload(client)
    body = client.get(f"/projects/{pid}").json()
    assert body["status"] == "draft"
    assert body["stroke_count"] == 4
    assert body["frame_count"] == 6


def test_malformed_svg_rejected(client):
    response = client.post(
        "/projects", files={"svg": ("x.svg", "<svg", "image/svg+xml")})
    assert response.status_code == 422
    assert response.json()["code"] == "svg_parse"


def test_groups_roundtrip_and_validation(client):
    pid = upload(client)
    groups = [{"id": 1, "name": "ball", "strokes": [0, 1]},
              {"id": 2, "name": "hoop", "strokes": [2, 3]}]
    response = client.put(f"/projects/{pid}/groups", json={"groups": groups})
    assert response.status_code == 200
    assert client.get(f"/projects/{pid}/groups").json()["groups"] == groups

    bad = [{"id": 1, "name": "x", "strokes": [99]}]
    response = client.put(f"/projects/{pid}/groups", json={"groups": bad})
    assert response.status_code == 422
    assert response.json()["code"] == "validation"


def test_keyframe_frame1_rule_surfaces_as_422(client):
    pid = upload(client)
    response = client.put(
        f"/projects/{pid}/keyframes",
        json={"keyframes": [{"group": 0, "frame": 1, "dx": 5.0, "dy": 0.0}]})
    assert response.status_code == 422
    body = response.json()
    assert body["field"] == "keyframes[0].dx"
    assert "first frame" in body["message"]


def test_preview_frame1_matches_upload(client):
    pid = upload(client)
    response = client.get(f"/projects/{pid}/preview/1")
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("image/svg+xml")
    preview = parse_svg(response.text)
    original = parse_svg(make_two_object_svg())
    np.testing.assert_allclose(preview.point_array(), original.point_array(),
                               atol=1e-6)


def test_preview_respects_keyframes(client):
    pid = upload(client)
    client.put(f"/projects/{pid}/groups",
               json={"groups": [{"id": 1, "name": "all",
                                 "strokes": [0, 1, 2, 3]}]})
    client.put(f"/projects/{pid}/keyframes",
               json={"keyframes": [{"group": 1, "frame": 6,
                                    "dx": 10.0, "dy": 0.0}]})
    base = parse_svg(client.get(f"/projects/{pid}/preview/1").text)
    mid = parse_svg(client.get(f"/projects/{pid}/preview/6").text)
    deltas = mid.point_array() - base.point_array()
    np.testing.assert_allclose(
        deltas, np.broadcast_to([10.0, 0.0], deltas.shape), atol=1e-9)


def test_unknown_project_404(client):
    assert client.get("/projects/nope").status_code == 404
    assert client.get("/jobs/nope").status_code == 404


def test_refine_conflict_409(client):
    pid = upload(client)
    from sketchanim.project import load_project

    store = client.app.state.store
    payload = store.get(pid)
    payload["model"].update(FAST_MODEL)
    payload["optimizer"].update({"steps": 120, "snapshot_every": 0})
    store.put(pid, payload)

    first = client.post(f"/projects/{pid}/refine", json={})
    assert first.status_code == 202
    second = client.post(f"/projects/{pid}/refine", json={})
    assert second.status_code == 409
    assert second.json()["code"] == "job_conflict"
    wait_for(client, first.json()["id"], states=("done", "failed"), timeout=120)


def test_full_happy_path_with_stub_prior(client):
    pid = upload(client, frame_count=4)
    shrink_configs(client, pid)

    groups = [{"id": 1, "name": "ball", "strokes": [0, 1]},
              {"id": 2, "name": "hoop", "strokes": [2, 3]}]
    assert client.put(f"/projects/{pid}/groups",
                      json={"groups": groups}).status_code == 200
    keyframes = [{"group": 1, "frame": 4, "dx": 30.0, "dy": -20.0}]
    assert client.put(f"/projects/{pid}/keyframes",
                      json={"keyframes": keyframes}).status_code == 200

    with StubServerThread(create_stub_app("zeros")) as stub:
        response = client.post(
            f"/projects/{pid}/refine",
            json={"steps": 2, "prompt": "ball drops through hoop",
                  "remote_endpoint": stub.endpoint})
        assert response.status_code == 202, response.text
        job_id = response.json()["id"]
        body = wait_for(client, job_id, timeout=120)
    assert body["state"] == "done"
    assert body["step"] == 2
    assert "total" in body["losses"]

    refined = client.get(f"/projects/{pid}/frames/4", params={"stage": "refined"})
    assert refined.status_code == 200
    coarse = client.get(f"/projects/{pid}/frames/4", params={"stage": "coarse"})
    refined_pts = parse_svg(refined.text).point_array()
    coarse_pts = parse_svg(coarse.text).point_array()
    assert refined_pts.shape == coarse_pts.shape

    assert client.get(f"/projects/{pid}").json()["status"] == "done"

    export = client.get(f"/projects/{pid}/export")
    assert export.status_code == 200
    archive = zipfile.ZipFile(io.BytesIO(export.content))
    names = archive.namelist()
    assert "manifest.json" in names
    manifest = json.loads(archive.read("manifest.json"))
    assert manifest["frame_count"] == 4
    assert len([n for n in names if n.endswith(".svg")]) == 4
    assert len([n for n in names if n.endswith(".png")]) == 4


def test_export_before_refine_404(client):
    pid = upload(client)
    assert client.get(f"/projects/{pid}/export").status_code == 404


def test_bad_stage_rejected(client):
    pid = upload(client)
    response = client.get(f"/projects/{pid}/frames/1", params={"stage": "weird"})
    assert response.status_code == 422
