"""Simulated-camera client: drives a live server through full calibration
sessions and compares the served results against its own ground truth.

The client plays a compliant user. A real user steers the physical board
until the camera preview lines up with the overlay; the simulated analogue
is a small pose-only fit that finds the board pose at which the *client's*
camera projects the corners onto the advertised overlay pixels. Without
that step the nominal target pose only lines up when the true intrinsics
happen to match the server's guess.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import requests

from . import wire
from .board import BoardSpec, Pose, corner_array, simulate_detection
from .camera_model import CameraIntrinsics, DistortionModel, DistortionParams
from .engine import fit_pose
from .errors import ProtocolError
from .store import CameraKey


@dataclass(frozen=True)
class SimCameraProfile:
    """Ground truth for one simulated camera."""

    intrinsics: CameraIntrinsics
    distortion: DistortionParams
    img_size: tuple[int, int]
    camera_key: CameraKey
    noise_sigma: float = 0.2
    seed: int = 0
    board: BoardSpec = field(default_factory=BoardSpec)

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if tuple(self.img_size) != tuple(self.camera_key.img_size):
            raise ValueError("profile img_size must match its camera_key")
        object.__setattr__(self, "img_size", (int(self.img_size[0]), int(self.img_size[1])))

    def to_json(self) -> dict:
        return {
            "intrinsics": {
                "fx": self.intrinsics.fx, "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx, "cy": self.intrinsics.cy,
            },
            "distortion": {
                "model": self.distortion.model.value,
                "coefficients": list(self.distortion.coefficients),
            },
            "img_size": list(self.img_size),
            "camera_key": {
                "camera": self.camera_key.camera,
                "platform": self.camera_key.platform,
                "img_size": list(self.camera_key.img_size),
                "zoom": self.camera_key.zoom,
            },
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "board": wire.board_json(self.board),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SimCameraProfile":
        k = data["intrinsics"]
        d = data["distortion"]
        key = data["camera_key"]
        return cls(
            intrinsics=CameraIntrinsics(k["fx"], k["fy"], k["cx"], k["cy"]),
            distortion=DistortionParams(
                DistortionModel(d["model"]), tuple(d["coefficients"])
            ),
            img_size=tuple(data["img_size"]),
            camera_key=CameraKey(
                key["camera"], key["platform"], tuple(key["img_size"]),
                key.get("zoom", 0.0),
            ),
            noise_sigma=data.get("noise_sigma", 0.2),
            seed=data.get("seed", 0),
            board=wire.parse_board(data["board"]) if "board" in data else BoardSpec(),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SimCameraProfile":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


@dataclass(frozen=True)
class SessionReport:
    calibration: dict                  # served calibration-response fields
    n_submissions: int
    n_accepted: int
    n_mismatched: int
    errors: dict                      # parameter errors vs profile ground truth

    def to_json(self) -> dict:
        return {
            "calibration": self.calibration,
            "n_submissions": self.n_submissions,
            "n_accepted": self.n_accepted,
            "n_mismatched": self.n_mismatched,
            "errors": self.errors,
        }


def _request_body(profile: SimCameraProfile) -> dict:
    key = profile.camera_key
    return {
        "camera": key.camera,
        "platform": key.platform,
        "img_size": list(key.img_size),
        "zoom": key.zoom,
    }


def _check(resp: requests.Response, expect: int) -> requests.Response:
    if resp.status_code != expect:
        raise ProtocolError(
            f"{resp.request.method} {resp.request.path_url}: expected "
            f"{expect}, got {resp.status_code}: {resp.text[:300]}"
        )
    return resp


def _ground_truth_errors(profile: SimCameraProfile, calibration: dict) -> dict:
    K = profile.intrinsics
    m = calibration["camera_matrix"]
    coeffs = calibration["distortion_coefficients"]
    return {
        "fx_rel": abs(m[0][0] - K.fx) / K.fx,
        "fy_rel": abs(m[1][1] - K.fy) / K.fy,
        "cx_abs": abs(m[0][2] - K.cx),
        "cy_abs": abs(m[1][2] - K.cy),
        "k_abs": [
            abs(a - b) for a, b in zip(coeffs, profile.distortion.coefficients)
        ],
    }


def _observe_at(profile: SimCameraProfile, pose: Pose, seed: int):
    return simulate_detection(
        profile.board, pose, profile.intrinsics, profile.distortion,
        profile.noise_sigma, seed, profile.img_size,
    )


def run_session(profile: SimCameraProfile, server_url: str, token: str,
                align: bool = True, wrong_first_pose: bool = False,
                session: requests.Session | None = None) -> SessionReport:
    """Drive one full calibration session; returns the served calibration
    and parameter errors computed against the profile's ground truth.

    align=False submits at exactly the nominal target pose, which only
    lines up with the overlay when the true camera matches the server's
    focal guess. wrong_first_pose deliberately botches the first capture
    to exercise the pose_mismatch path.
    """
    http = session or requests
    base = server_url.rstrip("/")
    r = _check(
        http.post(
            f"{base}/api/v1/sessions",
            json={**_request_body(profile), "token": token,
                  "distortion_model": profile.distortion.model.value},
            timeout=30,
        ),
        201,
    )
    created = r.json()
    session_id = created["session_id"]
    corners = corner_array(profile.board)

    n_accepted = n_mismatched = n_submissions = 0
    botch_pending = wrong_first_pose
    max_submissions = 4 * created.get("n_targets", 10) + 8
    while True:
        if n_submissions >= max_submissions:
            raise ProtocolError(
                f"no progress after {n_submissions} submissions "
                f"({n_accepted} accepted); giving up"
            )
        r = _check(http.get(f"{base}/api/v1/sessions/{session_id}/target", timeout=30), 200)
        target = r.json()
        if target.get("status") == "complete":
            raise ProtocolError("session completed without a 'done' payload")
        ids = sorted(int(i) for i in target["corner_targets"])
        nominal = wire.parse_pose(target["pose"])
        if align:
            overlay_px = np.array([target["corner_targets"][str(i)] for i in ids])
            pose = fit_pose(
                corners[ids], overlay_px, profile.intrinsics,
                profile.distortion, nominal,
            )
        else:
            pose = nominal
        if botch_pending:
            botch_pending = False
            bad = replace(pose, t=(pose.t[0] + 0.5 * pose.t[2], pose.t[1], pose.t[2]))
            obs = _observe_at(profile, bad, profile.seed * 1000 + 999)
            r = _check(
                http.post(
                    f"{base}/api/v1/sessions/{session_id}/keypoints",
                    json=wire.observation_json(obs), timeout=30,
                ),
                200,
            )
            n_submissions += 1
            if r.json()["status"] != "pose_mismatch":
                raise ProtocolError(
                    f"expected pose_mismatch for botched capture, got {r.json()}"
                )
            n_mismatched += 1
        obs = _observe_at(profile, pose, profile.seed * 1000 + n_accepted)
        r = _check(
            http.post(
                f"{base}/api/v1/sessions/{session_id}/keypoints",
                json=wire.observation_json(obs), timeout=30,
            ),
            200,
        )
        n_submissions += 1
        body = r.json()
        status = body.get("status")
        if status == "pose_mismatch":
            n_mismatched += 1
            continue
        if status == "need_more":
            n_accepted += 1
            continue
        if status == "done":
            n_accepted += 1
            wire.parse_query_response(body["calibration"])  # same shape as a query hit
            return SessionReport(
                calibration=body["calibration"],
                n_submissions=n_submissions,
                n_accepted=n_accepted,
                n_mismatched=n_mismatched,
                errors=_ground_truth_errors(profile, body["calibration"]),
            )
        raise ProtocolError(f"unexpected keypoints response: {body}")


def query(camera_key: CameraKey, server_url: str,
          model: DistortionModel | None = None,
          session: requests.Session | None = None) -> tuple[int, dict | str]:
    """Calibration-data request; returns (status, body dict) on 200 or
    (status, redirect location) on 307."""
    http = session or requests
    body = {
        "camera": camera_key.camera,
        "platform": camera_key.platform,
        "img_size": list(camera_key.img_size),
        "zoom": camera_key.zoom,
    }
    if model is not None:
        body["distortion_model"] = model.value
    r = http.post(
        f"{server_url.rstrip('/')}/api/v1/calibrations/query",
        json=body, timeout=30, allow_redirects=False,
    )
    if r.status_code == 307:
        return 307, r.headers.get("Location", "")
    if r.status_code == 200:
        body = r.json()
        wire.parse_query_response(body)  # reject malformed payloads early
        return 200, body
    raise ProtocolError(f"query failed with {r.status_code}: {r.text[:300]}")


def seed_reliability(profile: SimCameraProfile, server_url: str, token: str,
                     n_sessions: int, alternate_fx_pct: float = 0.0) -> dict:
    """Run n_sessions independent sessions (distinct seeds), then query.

    alternate_fx_pct alternates the true focal length by ±pct between
    sessions, simulating an interchangeable-lens camera that should fail
    the reliability gate.
    """
    if n_sessions < 1:
        raise ValueError("n_sessions must be >= 1")
    reports = []
    for i in range(n_sessions):
        p = replace(profile, seed=profile.seed + 37 * (i + 1))
        if alternate_fx_pct:
            scale = 1.0 + (alternate_fx_pct if i % 2 == 0 else -alternate_fx_pct)
            K = profile.intrinsics
            p = replace(
                p, intrinsics=CameraIntrinsics(K.fx * scale, K.fy * scale, K.cx, K.cy)
            )
        reports.append(run_session(p, server_url, token))
    status, payload = query(
        profile.camera_key, server_url, profile.distortion.model
    )
    return {
        "n_sessions": n_sessions,
        "sessions": [r.to_json() for r in reports],
        "query_status": status,
        "query_payload": payload,
    }
