import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from synthetic import blob_scene, orbit_cameras

from gsdrag.config import parse_config
from gsdrag.render import save_cameras
from gsdrag.scene import save_ply
from gsdrag.service import create_app


@pytest.fixture
def workspace(tmp_path, rng):
    scene = blob_scene(rng, n_blob=20, n_backdrop=50)
    scene_path = tmp_path / "scene.ply"
    save_ply(scene, scene_path)
    cams = orbit_cameras(4, size=48)
    cams_path = tmp_path / "cameras.json"
    save_cameras(cams, cams_path)
    return tmp_path, scene_path, cams_path


def _config(tmp_path, scene_path, cams_path, **over):
    doc = {
        "scene_path": str(scene_path),
        "cameras_path": str(cams_path),
        "output_dir": str(tmp_path / "out"),
        "drag": {
            "handles": [[0.0, 0.0, 0.0]],
            "targets": [[0.5, 0.2, 0.0]],
            "radius": [0.5],
        },
        "intervals": 2,
        "anneal": {"passes": 1},
        "corrector": {"kind": "mock"},
        "view_count": 2,
        "optimize": {"steps_per_pass": 2, "split_per_interval": False},
        "seed": 3,
    }
    doc.update(over)
    return parse_config(doc)


@pytest.fixture
def client(workspace):
    tmp_path, scene_path, cams_path = workspace
    app = create_app(_config(tmp_path, scene_path, cams_path))
    return TestClient(app)


def _png_size(data: bytes):
    img = Image.open(io.BytesIO(data))
    return img.size


class TestReadEndpoints:
    def test_health(self, client):
        assert client.get("/health").status_code == 200

    def test_scene_info(self, client):
        r = client.get("/scene/info")
        assert r.status_code == 200
        body = r.json()
        assert body["count"] == 70 and body["sh_degree"] == 0
        assert len(body["bbox"]["min"]) == 3

    def test_cameras(self, client):
        cams = client.get("/cameras").json()["cameras"]
        assert [c["id"] for c in cams] == [f"cam{i:02d}" for i in range(4)]

    def test_render_png(self, client):
        r = client.get("/render", params={"cam": "cam00"})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert _png_size(r.content) == (48, 48)

    def test_render_resized(self, client):
        r = client.get("/render", params={"cam": "cam00", "w": 24, "h": 24})
        assert _png_size(r.content) == (24, 24)

    def test_render_unknown_camera(self, client):
        r = client.get("/render", params={"cam": "nope"})
        assert r.status_code == 404
        assert r.json()["code"] == "no_camera"

    def test_render_without_scene_409(self, workspace):
        app = create_app(None)
        c = TestClient(app)
        r = c.get("/render", params={"cam": "cam00"})
        assert r.status_code == 409
        assert r.json()["code"] == "no_scene"

    def test_pick_hit_and_miss(self, client):
        hit = client.get("/pick", params={"cam": "cam00", "x": 24, "y": 24})
        assert hit.status_code == 200
        point = np.asarray(hit.json()["point"])
        assert np.linalg.norm(point) < 1.0  # blob sits at the origin
        miss = client.get("/pick", params={"cam": "cam00", "x": 0, "y": 0})
        assert miss.status_code == 404

    def test_scene_swap(self, client, workspace):
        tmp_path, scene_path, _ = workspace
        r = client.post("/scene", json={"path": str(scene_path)})
        assert r.status_code == 200
        assert r.json()["count"] == 70


class TestSessionLifecycle:
    def _create(self, client):
        return client.post(
            "/session",
            json={
                "drag": {
                    "handles": [[0.0, 0.0, 0.0]],
                    "targets": [[0.5, 0.2, 0.0]],
                    "radius": [0.5],
                },
                "T": 2,
                "anneal": {"passes": 1},
                "corrector": {"kind": "mock"},
                "view_count": 2,
                "optimize": {"steps_per_pass": 2, "split_per_interval": False},
            },
        )

    def test_full_lifecycle(self, client):
        r = self._create(client)
        assert r.status_code == 200
        sid = r.json()["session_id"]

        state = client.get("/session/state").json()
        assert state["session_id"] == sid
        assert state["status"] == "idle" and state["current"] == 0

        step1 = client.post("/session/step")
        assert step1.status_code == 200
        body = step1.json()
        assert body["u"] == 1 and body["status"] == "awaiting-user"
        assert set(body["losses"]) == {"total", "l1", "ssim", "perc"}
        assert body["preview_urls"]

        preview = client.get(body["preview_urls"][0])
        assert preview.status_code == 200
        assert preview.headers["content-type"] == "image/png"

        mask = client.get("/mask", params={"cam": "cam00"})
        assert mask.status_code == 200

        step2 = client.post("/session/step")
        assert step2.json()["status"] == "committed"

        commit = client.post("/session/commit")
        assert commit.status_code == 200

    def test_stop_midway(self, client):
        self._create(client)
        client.post("/session/step")
        r = client.post("/session/stop")
        assert r.status_code == 200
        assert r.json() == {"status": "committed", "u": 1}

    def test_second_session_while_active_409(self, client):
        self._create(client)
        r = self._create(client)
        assert r.status_code == 409

    def test_new_session_after_commit_allowed(self, client):
        self._create(client)
        client.post("/session/step")
        client.post("/session/stop")
        r = self._create(client)
        assert r.status_code == 200

    def test_step_without_session_409(self, client):
        assert client.post("/session/step").status_code == 409

    def test_original_previews_at_interval_zero(self, client):
        self._create(client)
        state = client.get("/session/state").json()
        vid = state["views"][0]
        r = client.get("/session/preview", params={"u": 0, "cam": vid})
        assert r.status_code == 200

    def test_mask_without_session_409(self, client):
        r = client.get("/mask", params={"cam": "cam00"})
        assert r.status_code == 409
