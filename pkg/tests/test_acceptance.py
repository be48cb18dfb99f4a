"""Acceptance gate: one scenario per shipping requirement.

Each test asserts the stated bounds and prints a single ``[PASS]`` /
``[FAIL]`` line with the measured numbers. Run

    pytest tests/test_acceptance.py -s

to see the lines as the scenarios execute; without ``-s`` pytest shows
them only for failures.
"""

import threading
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import uvicorn
from fastapi.testclient import TestClient

from camcal.board import BoardSpec
from camcal.camera_model import (
    CameraIntrinsics,
    DistortionModel,
    DistortionParams,
    distort,
    project,
    undistort,
)
from camcal.engine import ReprojectionProblem, calibrate
from camcal.service import ServerConfig, create_app
from camcal.sim_client import SimCameraProfile, query, run_session, seed_reliability
from camcal.store import CalibStore, CalibrationRecord, CameraKey
from camcal import wire

from conftest import (
    D_WIDE_FISHEYE,
    STRONG_BOARD,
    WIDE_SIGMA,
    strong_views,
    synthesize_views,
    wide_fov_views,
)

IMG = (1280, 720)
K_TRUE = CameraIntrinsics(1430.0, 1430.0, 952.0, 505.0)
D_TRUE = DistortionParams(DistortionModel.RECTILINEAR, (-0.1, 0.02, 0.0))
TOKEN = "acceptance-token"
GOLDEN = Path(__file__).parent / "golden"


def _report(name: str, detail: str, checks: list[tuple[str, bool]]) -> None:
    failed = [label for label, ok in checks if not ok]
    status = "FAIL" if failed else "PASS"
    line = f"[{status}] {name}: {detail}"
    if failed:
        line += f"  (failed: {', '.join(failed)})"
    print(line)
    assert not failed, line


def _profile(camera: str, noise: float, seed: int = 0) -> SimCameraProfile:
    key = CameraKey(camera, "X11; Linux x86_64", IMG, 0.0)
    return SimCameraProfile(
        intrinsics=K_TRUE,
        distortion=D_TRUE,
        img_size=IMG,
        camera_key=key,
        noise_sigma=noise,
        seed=seed,
    )


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    storage = tmp_path_factory.mktemp("accept-store")
    config = ServerConfig(storage_path=str(storage), tokens=(TOKEN,))
    server = uvicorn.Server(
        uvicorn.Config(create_app(config), host="127.0.0.1", port=0, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_exact_recovery_zero_noise():
    t0 = time.perf_counter()
    views = synthesize_views(BoardSpec(), K_TRUE, D_TRUE, IMG, 0.0, seed=0)
    res = calibrate(views, BoardSpec(), DistortionModel.RECTILINEAR, IMG)
    dt = time.perf_counter() - t0

    k = res.intrinsics
    rel = max(
        abs(k.fx - K_TRUE.fx) / K_TRUE.fx,
        abs(k.fy - K_TRUE.fy) / K_TRUE.fy,
        abs(k.cx - K_TRUE.cx) / K_TRUE.cx,
        abs(k.cy - K_TRUE.cy) / K_TRUE.cy,
    )
    coeff_err = max(
        abs(est - true) / (abs(true) if true else 1.0)
        for est, true in zip(res.distortion.coefficients, D_TRUE.coefficients)
    )
    rms = res.avg_reprojection_error
    _report(
        "exact recovery",
        f"10 clean views -> max rel err {max(rel, coeff_err):.1e}, rms {rms:.1e} px, {dt:.2f} s",
        [
            ("K within 1e-6 relative", rel <= 1e-6),
            ("coefficients within 1e-6", coeff_err <= 1e-6),
            ("rms < 1e-8 px", rms < 1e-8),
            ("under 5 s", dt < 5.0),
        ],
    )


def test_noisy_recovery_fixed_seed():
    views = strong_views(K_TRUE, D_TRUE, IMG, 0.2, seed=0, board=STRONG_BOARD)
    res = calibrate(views, STRONG_BOARD, DistortionModel.RECTILINEAR, IMG)

    k = res.intrinsics
    fx_rel = abs(k.fx - K_TRUE.fx) / K_TRUE.fx
    fy_rel = abs(k.fy - K_TRUE.fy) / K_TRUE.fy
    cx_abs = abs(k.cx - K_TRUE.cx)
    cy_abs = abs(k.cy - K_TRUE.cy)
    k1_abs = abs(res.distortion.coefficients[0] - D_TRUE.coefficients[0])
    rms = res.avg_reprojection_error
    _report(
        "noisy recovery",
        f"sigma 0.2 px, seed 0 -> fx {fx_rel:.2%}, fy {fy_rel:.2%}, "
        f"center ({cx_abs:.2f}, {cy_abs:.2f}) px, |dk1| {k1_abs:.4f}, rms {rms:.3f} px",
        [
            ("fx within 0.5%", fx_rel <= 0.005),
            ("fy within 0.5%", fy_rel <= 0.005),
            ("cx within 2 px", cx_abs <= 2.0),
            ("cy within 2 px", cy_abs <= 2.0),
            ("k1 within 0.01", k1_abs <= 0.01),
            ("rms in [0.1, 0.4] px", 0.1 <= rms <= 0.4),
        ],
    )


def test_protocol_completes_in_ten_captures(live_server):
    t0 = time.perf_counter()
    report = run_session(
        _profile("accept-protocol-cam", noise=0.2, seed=0), live_server, TOKEN
    )
    dt = time.perf_counter() - t0
    _report(
        "ten-capture protocol",
        f"{report.n_accepted} accepted / {report.n_submissions} submitted "
        f"over live HTTP in {dt:.2f} s",
        [
            ("exactly 10 accepted", report.n_accepted == 10),
            ("no extra submissions", report.n_submissions == 10),
            ("under 10 s", dt < 10.0),
        ],
    )


def test_reliability_gate_flips_at_five(live_server):
    profile = _profile("accept-gate-cam", noise=0.05, seed=20)
    four = seed_reliability(profile, live_server, TOKEN, n_sessions=4)
    fifth = seed_reliability(
        replace(profile, seed=profile.seed + 1000), live_server, TOKEN, n_sessions=1
    )

    divergent = seed_reliability(
        _profile("accept-divergent-cam", noise=0.05, seed=40),
        live_server,
        TOKEN,
        n_sessions=5,
        alternate_fx_pct=0.10,
    )

    served_fx = 0.0
    if fifth["query_status"] == 200:
        served_fx = fifth["query_payload"]["camera_matrix"][0][0]
    _report(
        "reliability gate",
        f"4 sessions -> {four['query_status']} {four['query_payload']!r}; "
        f"5th -> {fifth['query_status']} (fx {served_fx:.1f}); "
        f"divergent focals -> {divergent['query_status']}",
        [
            ("redirect after 4", four["query_status"] == 307),
            ("redirect targets guide page", four["query_payload"] == "/guide"),
            ("200 after 5 consistent", fifth["query_status"] == 200),
            ("served fx within 0.5%", abs(served_fx - K_TRUE.fx) / K_TRUE.fx <= 0.005),
            ("divergent stays 307", divergent["query_status"] == 307),
        ],
    )


def test_wire_golden_bytes():
    request = {
        "camera": "C922 Pro Stream Webcam (046d:085c)",
        "img_size": [1280, 720],
        "platform": "X11; Linux x86_64",
        "zoom": 0,
    }
    response = {
        "avg_reprojection_error": 0.72,
        "camera_matrix": [
            [1430.0, 0.0, 952.0],
            [0.0, 1430.0, 505.0],
            [0.0, 0.0, 1.0],
        ],
        "distortion_coefficients": [-0.1, 0.02, 0.0],
        "distortion_model": "rectilinear",
        "img_size": [1280, 720],
    }
    req_bytes = (wire.canonical_json(request) + "\n").encode()
    resp_bytes = (wire.canonical_json(response) + "\n").encode()
    req_match = req_bytes == (GOLDEN / "query_request.json").read_bytes()
    resp_match = resp_bytes == (GOLDEN / "query_response.json").read_bytes()

    fields, model = wire.parse_query_request(request)
    parsed = wire.parse_query_response(response)
    _report(
        "wire compatibility",
        f"golden bytes match (request {len(req_bytes)} B, response {len(resp_bytes)} B), "
        "both bodies parse back",
        [
            ("request bytes identical", req_match),
            ("response bytes identical", resp_match),
            ("request fields round-trip", fields["camera"] == request["camera"] and model is None),
            ("bottom row is [0,0,1]", response["camera_matrix"][2] == [0.0, 0.0, 1.0]),
            ("exactly the served fields", set(response) == {
                "img_size", "camera_matrix", "distortion_coefficients",
                "distortion_model", "avg_reprojection_error",
            }),
            ("parsed model tag", parsed["distortion_model"] is DistortionModel.RECTILINEAR),
        ],
    )


def test_cross_model_refit_raises_error(tmp_path):
    store = CalibStore(tmp_path)
    key = CameraKey("HD Pro Webcam C920 (046d:082d)", "X11; Linux x86_64", IMG, 0)
    board = BoardSpec()
    for seed in range(5):
        views = wide_fov_views(IMG, WIDE_SIGMA, seed)
        res = calibrate(views, board, DistortionModel.FISHEYE, IMG)
        store.put_record(CalibrationRecord(key, res, views, board, time.time()))
    records = store.get_records(key)
    fisheye_err = store.pooled_result(
        records, board, DistortionModel.FISHEYE
    ).avg_reprojection_error

    app = create_app(ServerConfig(storage_path=str(tmp_path), tokens=(TOKEN,)), store=store)
    client = TestClient(app, follow_redirects=False)
    body = {
        "camera": key.camera,
        "platform": key.platform,
        "img_size": list(IMG),
        "zoom": 0,
        "distortion_model": "rectilinear",
    }
    r = client.post("/api/v1/calibrations/query", json=body)
    served = r.json() if r.status_code == 200 else {}
    ratio = served.get("avg_reprojection_error", 0.0) / fisheye_err
    _report(
        "cross-model refit",
        f"fisheye pooled rms {fisheye_err:.3f} px; rectilinear refit served "
        f"{served.get('avg_reprojection_error', float('nan')):.3f} px ({ratio:.1f}x)",
        [
            ("query returns 200", r.status_code == 200),
            ("served under requested model", served.get("distortion_model") == "rectilinear"),
            ("error at least 5x fisheye fit", ratio >= 5.0),
        ],
    )


def test_numerical_invariants():
    rng = np.random.default_rng(7)

    # distortion round-trip on both models
    worst_rt = 0.0
    for model, coeffs, radius in (
        (DistortionModel.RECTILINEAR, (-0.1, 0.02, 0.004), 0.6),
        (DistortionModel.FISHEYE, (0.05, -0.01, 0.002), 1.5),
    ):
        d = DistortionParams(model, coeffs)
        ang = rng.uniform(0, 2 * np.pi, 200)
        r = rng.uniform(0, radius, 200)
        pts = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
        back = undistort(distort(pts, d), d)
        worst_rt = max(worst_rt, float(np.abs(back - pts).max()))

    # analytic Jacobian vs central differences on a small joint problem
    board = BoardSpec()
    views = synthesize_views(board, K_TRUE, D_TRUE, IMG, 0.2, seed=2, n=4)
    res = calibrate(views, board, DistortionModel.RECTILINEAR, IMG)
    problem = ReprojectionProblem(views, board, DistortionModel.RECTILINEAR)
    x = problem.pack(res.intrinsics, res.distortion, list(res.per_view_poses))
    x = x + rng.normal(0.0, 1e-3, x.size)
    analytic = problem.jacobian(x)
    numeric = np.empty_like(analytic)
    for j in range(x.size):
        h = 1e-6 * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        numeric[:, j] = (problem.residuals(xp) - problem.residuals(xm)) / (2 * h)
    jac_rel = float(np.abs(analytic - numeric).max() / max(1.0, np.abs(numeric).max()))

    # accepted LM steps strictly decrease the cost
    hist = res.cost_history
    monotone = len(hist) >= 2 and all(b < a for a, b in zip(hist, hist[1:]))

    # projection depends only on the ray, not the point's distance
    pts3 = rng.uniform([-0.3, -0.2, 0.5], [0.3, 0.2, 2.0], (50, 3))
    scale_err = 0.0
    for model, coeffs in (
        (DistortionModel.RECTILINEAR, (-0.1, 0.02, 0.0)),
        (DistortionModel.FISHEYE, (0.05, -0.01, 0.002)),
    ):
        d = DistortionParams(model, coeffs)
        base = project(pts3, K_TRUE, d)
        scaled = project(pts3 * 3.7, K_TRUE, d)
        scale_err = max(scale_err, float(np.abs(base - scaled).max()))

    _report(
        "numerical invariants",
        f"round-trip {worst_rt:.1e}, jacobian vs FD {jac_rel:.1e}, "
        f"{len(hist)} LM costs monotone, scale invariance {scale_err:.1e}",
        [
            ("distortion round-trip <= 1e-9", worst_rt <= 1e-9),
            ("jacobian within 1e-5 of FD", jac_rel <= 1e-5),
            ("LM cost strictly decreasing", monotone),
            ("projection scale-invariant", scale_err <= 1e-9),
        ],
    )


def test_interactive_capture_out_of_scope():
    # Wall-clock figures for a person waving a printed board, and visual
    # overlay alignment on real footage, need a human and a camera; the
    # synthetic protocol run and the numerical invariants above stand in
    # for them here.
    _report(
        "interactive capture",
        "excluded by design; covered by the synthetic protocol and invariant scenarios",
        [("noted", True)],
    )
