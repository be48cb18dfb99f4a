import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from camcal import wire
from camcal.board import corner_array, simulate_detection
from camcal.camera_model import CameraIntrinsics, DistortionModel, DistortionParams
from camcal.engine import fit_pose
from camcal.service import ServerConfig, create_app
from camcal.store import CalibStore

TOKEN = "test-token-1"
K_TRUE = CameraIntrinsics(1430.0, 1430.0, 952.0, 505.0)
D_TRUE = DistortionParams(DistortionModel.RECTILINEAR, (-0.1, 0.02, 0.0))
IMG = (1280, 720)

REQUEST = {
    "camera": "C922 Pro Stream Webcam (046d:085c)",
    "platform": "X11; Linux x86_64",
    "img_size": [1280, 720],
    "zoom": 0,
}


@pytest.fixture()
def app(tmp_path):
    config = ServerConfig(storage_path=str(tmp_path / "store"), tokens=(TOKEN,))
    return create_app(config)


@pytest.fixture()
def client(app):
    return TestClient(app, follow_redirects=False)


def _create(client, body=None, token=TOKEN):
    payload = dict(body or REQUEST)
    if token is not None:
        payload["token"] = token
    return client.post("/api/v1/sessions", json=payload)


def _aligned_observation(app, target, noise_sigma, seed,
                         K=K_TRUE, d=D_TRUE, img_size=IMG):
    """What a compliant user's camera sees once the overlay lines up."""
    board = app.state.config.board
    ids = sorted(int(i) for i in target["corner_targets"])
    overlay = np.array([target["corner_targets"][str(i)] for i in ids])
    pose = fit_pose(
        corner_array(board)[ids], overlay, K, d, wire.parse_pose(target["pose"])
    )
    return simulate_detection(board, pose, K, d, noise_sigma, seed, img_size)


def _drive_session(app, client, seed, noise_sigma=0.05, K=K_TRUE, body=None):
    r = _create(client, body)
    assert r.status_code == 201
    sid = r.json()["session_id"]
    for i in range(r.json()["n_targets"]):
        target = client.get(f"/api/v1/sessions/{sid}/target").json()
        obs = _aligned_observation(app, target, noise_sigma, seed * 100 + i, K=K)
        r2 = client.post(
            f"/api/v1/sessions/{sid}/keypoints", json=wire.observation_json(obs)
        )
        assert r2.status_code == 200, r2.text
        body2 = r2.json()
        assert body2["status"] in ("need_more", "done")
    assert body2["status"] == "done"
    return sid, body2["calibration"]


def test_create_session(client):
    r = _create(client)
    assert r.status_code == 201
    body = r.json()
    assert body["n_targets"] == 10
    assert len(body["session_id"]) >= 16


def test_create_session_accepts_distortion_model(client):
    r = _create(client, body={**REQUEST, "distortion_model": "fisheye"})
    assert r.status_code == 201


def test_invalid_token_401(client):
    r = _create(client, token="nope")
    assert r.status_code == 401
    assert "session_id" not in r.json()


def test_missing_token_401(client):
    r = _create(client, token=None)
    assert r.status_code == 401


def test_malformed_key_400(client):
    bad = {k: v for k, v in REQUEST.items() if k != "img_size"}
    r = _create(client, body=bad)
    assert r.status_code == 400
    r = _create(client, body={**REQUEST, "img_size": [0, 720]})
    assert r.status_code == 400


def test_invalid_json_400(client):
    r = client.post(
        "/api/v1/sessions", content=b"{oops", headers={"content-type": "application/json"}
    )
    assert r.status_code == 400


def test_unknown_session_404(client):
    assert client.get("/api/v1/sessions/nope/target").status_code == 404
    r = client.post(
        "/api/v1/sessions/nope/keypoints",
        json={"points": [], "img_size": [1280, 720]},
    )
    assert r.status_code == 404


def test_fresh_session_serves_target_zero(client):
    sid = _create(client).json()["session_id"]
    target = client.get(f"/api/v1/sessions/{sid}/target").json()
    assert target["index"] == 0
    assert set(target) == {"index", "outline_px", "corner_targets", "pose"}


def test_target_stable_until_accepted(app, client):
    sid = _create(client).json()["session_id"]
    a = client.get(f"/api/v1/sessions/{sid}/target").json()
    b = client.get(f"/api/v1/sessions/{sid}/target").json()
    assert a == b


def test_full_session_end_to_end(app, client):
    sid, calibration = _drive_session(app, client, seed=1)
    fields = wire.parse_query_response(calibration)
    m = fields["camera_matrix"]
    assert abs(m[0][0] - K_TRUE.fx) / K_TRUE.fx < 0.005
    assert abs(m[1][2] - K_TRUE.cy) < 3.0
    # session is now complete
    assert client.get(f"/api/v1/sessions/{sid}/target").json() == {"status": "complete"}
    # exactly one record persisted
    store: CalibStore = app.state.store
    from camcal.store import CameraKey

    records = store.get_records(CameraKey("C922 Pro Stream Webcam (046d:085c)",
                                          "X11; Linux x86_64", (1280, 720), 0.0))
    assert len(records) == 1
    assert records[0].result.n_views == 10


def test_pose_mismatch_keeps_state(app, client):
    sid = _create(client).json()["session_id"]
    target = client.get(f"/api/v1/sessions/{sid}/target").json()
    # in-frame but far from the overlay: shrink toward the image center
    pts = [
        {"id": int(k), "pixel": [0.5 * v[0] + 320.0, 0.5 * v[1] + 180.0]}
        for k, v in target["corner_targets"].items()
    ]
    r = client.post(
        f"/api/v1/sessions/{sid}/keypoints",
        json={"points": pts, "img_size": [1280, 720]},
    )
    assert r.status_code == 200
    assert r.json() == {"status": "pose_mismatch", "remaining": 10}
    # target unchanged, a correct capture still accepted
    assert client.get(f"/api/v1/sessions/{sid}/target").json() == target
    obs = _aligned_observation(app, target, 0.05, seed=9)
    r = client.post(
        f"/api/v1/sessions/{sid}/keypoints", json=wire.observation_json(obs)
    )
    assert r.json() == {"status": "need_more", "remaining": 9}


def test_submission_after_complete_409(app, client):
    sid, _ = _drive_session(app, client, seed=2)
    target0 = {"points": [{"id": 0, "pixel": [5.0, 5.0]}], "img_size": [1280, 720]}
    r = client.post(f"/api/v1/sessions/{sid}/keypoints", json=target0)
    assert r.status_code == 409


def test_invalid_observation_422(client):
    sid = _create(client).json()["session_id"]
    r = client.post(f"/api/v1/sessions/{sid}/keypoints", json={"points": []})
    assert r.status_code == 422
    r = client.post(
        f"/api/v1/sessions/{sid}/keypoints",
        json={"points": [{"id": 0, "pixel": [1.0, 2.0]}], "img_size": [640, 480]},
    )
    assert r.status_code == 422  # size disagrees with the session
    r = client.post(
        f"/api/v1/sessions/{sid}/keypoints",
        json={"points": [{"id": 0, "pixel": [1.0, 2.0]}],
              "img_size": [1280, 720], "extra": 1},
    )
    assert r.status_code == 422


def test_sessions_isolated(app, client):
    sid_a = _create(client).json()["session_id"]
    sid_b = _create(client).json()["session_id"]
    assert sid_a != sid_b
    target = client.get(f"/api/v1/sessions/{sid_a}/target").json()
    obs = _aligned_observation(app, target, 0.05, seed=5)
    client.post(f"/api/v1/sessions/{sid_a}/keypoints", json=wire.observation_json(obs))
    # b is untouched
    assert client.get(f"/api/v1/sessions/{sid_b}/target").json()["index"] == 0


def test_query_no_data_redirects(client):
    r = client.post("/api/v1/calibrations/query", json=REQUEST)
    assert r.status_code == 307
    assert r.headers["location"] == "/guide"


def test_query_malformed_400(client):
    r = client.post("/api/v1/calibrations/query", json={"camera": "x"})
    assert r.status_code == 400
    r = client.post("/api/v1/calibrations/query", json={**REQUEST, "extra": 1})
    assert r.status_code == 400


def test_query_needs_no_token(app, client):
    # query bodies carry no token field; the gate result is 307 here
    r = client.post("/api/v1/calibrations/query", json=REQUEST)
    assert r.status_code == 307


def test_reliability_flip_at_five(app, client):
    for seed in range(4):
        _drive_session(app, client, seed=seed + 10)
        r = client.post("/api/v1/calibrations/query", json=REQUEST)
        assert r.status_code == 307, f"redirect expected after {seed + 1} records"
        assert r.headers["location"] == "/guide"
    _drive_session(app, client, seed=14)
    r = client.post("/api/v1/calibrations/query", json=REQUEST)
    assert r.status_code == 200
    fields = wire.parse_query_response(r.json())
    assert abs(fields["camera_matrix"][0][0] - K_TRUE.fx) / K_TRUE.fx < 0.005


def test_divergent_focals_stay_redirected(app, client):
    for i in range(5):
        scale = 1.1 if i % 2 == 0 else 0.9
        K = CameraIntrinsics(K_TRUE.fx * scale, K_TRUE.fy * scale, K_TRUE.cx, K_TRUE.cy)
        _drive_session(app, client, seed=20 + i, K=K)
    r = client.post("/api/v1/calibrations/query", json=REQUEST)
    assert r.status_code == 307


def test_query_serves_requested_model(app, client):
    for seed in range(5):
        _drive_session(app, client, seed=30 + seed)
    r = client.post(
        "/api/v1/calibrations/query", json={**REQUEST, "distortion_model": "fisheye"}
    )
    assert r.status_code == 200
    assert r.json()["distortion_model"] == "fisheye"


def test_query_closest_resolution(app, client):
    for seed in range(5):
        _drive_session(app, client, seed=40 + seed)
    r = client.post(
        "/api/v1/calibrations/query", json={**REQUEST, "img_size": [1920, 1080]}
    )
    assert r.status_code == 200
    assert r.json()["img_size"] == [1280, 720]


def test_idle_sessions_garbage_collected(app, client):
    sid = _create(client).json()["session_id"]
    registry = app.state.registry
    with registry._lock:
        registry._entries[sid].last_access = time.time() - 31 * 60
    assert client.get(f"/api/v1/sessions/{sid}/target").status_code == 404


def test_concurrent_sessions(app):
    results = {}
    errors = []

    def worker(name, seed):
        try:
            local = TestClient(app, follow_redirects=False)
            _, calibration = _drive_session(app, local, seed=seed)
            results[name] = calibration
        except Exception as exc:  # pragma: no cover - diagnostic
            errors.append((name, exc))

    threads = [
        threading.Thread(target=worker, args=(f"t{i}", 50 + i)) for i in range(3)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(results) == 3
    for calibration in results.values():
        m = wire.parse_query_response(calibration)["camera_matrix"]
        assert abs(m[0][0] - K_TRUE.fx) / K_TRUE.fx < 0.005
