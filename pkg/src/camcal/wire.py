"""JSON wire codecs.

Two families live here: the public query request/response bodies (strict,
exact field names — ``camera``/``platform``/``img_size``/``zoom`` in,
``img_size``/``camera_matrix``/``distortion_coefficients``/
``distortion_model``/``avg_reprojection_error`` out) and the internal
encodings for poses, observations and stored calibration results. Parsers
raise :class:`~camcal.errors.ProtocolError` on any shape deviation so the
HTTP layer can map them to 400/422 without guesswork.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .board import BoardSpec, Pose, ViewObservation
from .camera_model import CameraIntrinsics, DistortionModel, DistortionParams
from .engine import CalibrationResult
from .errors import ProtocolError

QUERY_REQUEST_FIELDS = ("camera", "platform", "img_size", "zoom")
QUERY_RESPONSE_FIELDS = (
    "img_size",
    "camera_matrix",
    "distortion_coefficients",
    "distortion_model",
    "avg_reprojection_error",
)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, no whitespace, no NaN/Inf."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _require_keys(body: dict, required: tuple, optional: tuple = (), what: str = "body"):
    if not isinstance(body, dict):
        raise ProtocolError(f"{what} must be a JSON object")
    missing = [k for k in required if k not in body]
    if missing:
        raise ProtocolError(f"{what} missing fields: {', '.join(missing)}")
    extra = [k for k in body if k not in required and k not in optional]
    if extra:
        raise ProtocolError(f"{what} has unknown fields: {', '.join(extra)}")


def _as_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"{what} must be a number")
    out = float(value)
    if not math.isfinite(out):
        raise ProtocolError(f"{what} must be finite")
    return out


def parse_img_size(value, what: str = "img_size") -> tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ProtocolError(f"{what} must be a [width, height] pair")
    out = []
    for v in value:
        n = _as_number(v, what)
        if n <= 0 or n != int(n):
            raise ProtocolError(f"{what} entries must be positive integers")
        out.append(int(n))
    return out[0], out[1]


# ------------------------------------------------------- query request

def parse_query_request(body) -> tuple[dict, DistortionModel | None]:
    """Strict parse of the calibration-data request; returns the camera
    key fields and the optional requested distortion model."""
    _require_keys(body, QUERY_REQUEST_FIELDS, ("distortion_model",), "request")
    camera, platform = body["camera"], body["platform"]
    if not isinstance(camera, str) or not camera:
        raise ProtocolError("camera must be a non-empty string")
    if not isinstance(platform, str) or not platform:
        raise ProtocolError("platform must be a non-empty string")
    img_size = parse_img_size(body["img_size"])
    zoom = _as_number(body["zoom"], "zoom")
    if zoom < 0:
        raise ProtocolError("zoom must be >= 0")
    model = None
    if "distortion_model" in body:
        model = parse_distortion_model(body["distortion_model"])
    return (
        {"camera": camera, "platform": platform, "img_size": img_size, "zoom": zoom},
        model,
    )


def parse_distortion_model(value) -> DistortionModel:
    if not isinstance(value, str):
        raise ProtocolError("distortion_model must be a string")
    try:
        return DistortionModel(value)
    except ValueError:
        allowed = ", ".join(m.value for m in DistortionModel)
        raise ProtocolError(f"distortion_model must be one of: {allowed}") from None


# ------------------------------------------------------ query response

def camera_matrix_json(K: CameraIntrinsics) -> list[list[float]]:
    return [[K.fx, 0.0, K.cx], [0.0, K.fy, K.cy], [0.0, 0.0, 1.0]]


def query_response_json(result: CalibrationResult) -> dict:
    """The calibration-data response body, exactly these five fields."""
    return {
        "img_size": [result.img_size[0], result.img_size[1]],
        "camera_matrix": camera_matrix_json(result.intrinsics),
        "distortion_coefficients": list(result.distortion.coefficients),
        "distortion_model": result.distortion.model.value,
        "avg_reprojection_error": result.avg_reprojection_error,
    }


def parse_query_response(body) -> dict:
    """Strict parse of a calibration-data response; returns plain fields
    (camera_matrix as a list of rows)."""
    _require_keys(body, QUERY_RESPONSE_FIELDS, (), "response")
    img_size = parse_img_size(body["img_size"])
    m = body["camera_matrix"]
    if (
        not isinstance(m, list) or len(m) != 3
        or any(not isinstance(row, list) or len(row) != 3 for row in m)
    ):
        raise ProtocolError("camera_matrix must be a 3x3 nested array")
    rows = [[_as_number(v, "camera_matrix") for v in row] for row in m]
    if rows[2] != [0.0, 0.0, 1.0]:
        raise ProtocolError("camera_matrix bottom row must be [0, 0, 1]")
    if rows[0][1] != 0.0 or rows[1][0] != 0.0 or rows[2][0] != 0.0:
        raise ProtocolError("camera_matrix must have zero skew")
    if rows[0][0] <= 0 or rows[1][1] <= 0:
        raise ProtocolError("focal lengths must be positive")
    coeffs = body["distortion_coefficients"]
    if not isinstance(coeffs, list) or len(coeffs) != 3:
        raise ProtocolError("distortion_coefficients must have 3 entries")
    err = _as_number(body["avg_reprojection_error"], "avg_reprojection_error")
    if err < 0:
        raise ProtocolError("avg_reprojection_error must be >= 0")
    return {
        "img_size": img_size,
        "camera_matrix": rows,
        "distortion_coefficients": [_as_number(c, "coefficient") for c in coeffs],
        "distortion_model": parse_distortion_model(body["distortion_model"]),
        "avg_reprojection_error": err,
    }


# ----------------------------------------------------- internal types

def pose_json(pose: Pose) -> dict:
    return {"q": list(pose.q), "t": list(pose.t)}


def parse_pose(body) -> Pose:
    _require_keys(body, ("q", "t"), (), "pose")
    q, t = body["q"], body["t"]
    if not isinstance(q, list) or len(q) != 4 or not isinstance(t, list) or len(t) != 3:
        raise ProtocolError("pose must have q[4] and t[3]")
    try:
        return Pose(
            q=tuple(_as_number(v, "q") for v in q),
            t=tuple(_as_number(v, "t") for v in t),
        )
    except ValueError as exc:
        raise ProtocolError(str(exc)) from None


def observation_json(obs: ViewObservation) -> dict:
    return {
        "points": [
            {"id": int(cid), "pixel": [float(x), float(y)]}
            for cid, (x, y) in obs.points
        ],
        "img_size": [obs.img_size[0], obs.img_size[1]],
    }


def parse_observation(body) -> ViewObservation:
    _require_keys(body, ("points", "img_size"), (), "observation")
    img_size = parse_img_size(body["img_size"])
    raw = body["points"]
    if not isinstance(raw, list):
        raise ProtocolError("points must be an array")
    points = []
    for entry in raw:
        _require_keys(entry, ("id", "pixel"), (), "point")
        cid = _as_number(entry["id"], "id")
        if cid < 0 or cid != int(cid):
            raise ProtocolError("corner id must be a non-negative integer")
        px = entry["pixel"]
        if not isinstance(px, list) or len(px) != 2:
            raise ProtocolError("pixel must be an [x, y] pair")
        points.append(
            (int(cid), (_as_number(px[0], "pixel"), _as_number(px[1], "pixel")))
        )
    try:
        return ViewObservation(points=tuple(points), img_size=img_size)
    except ValueError as exc:
        raise ProtocolError(str(exc)) from None


def target_json(target) -> dict:
    """TargetPose -> client overlay JSON (duck-typed to avoid a dependency
    on the guidance module)."""
    return {
        "index": int(target.index),
        "outline_px": [[float(x), float(y)] for x, y in target.outline_px],
        "corner_targets": {
            str(cid): [float(x), float(y)]
            for cid, (x, y) in sorted(target.corner_targets.items())
        },
        "pose": pose_json(target.pose),
    }


def board_json(board: BoardSpec) -> dict:
    return {
        "squares_x": board.squares_x,
        "squares_y": board.squares_y,
        "square_length": board.square_length,
    }


def parse_board(body) -> BoardSpec:
    _require_keys(body, ("squares_x", "squares_y", "square_length"), (), "board")
    try:
        return BoardSpec(
            squares_x=int(body["squares_x"]),
            squares_y=int(body["squares_y"]),
            square_length=float(body["square_length"]),
        )
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid board: {exc}") from None


def result_json(result: CalibrationResult) -> dict:
    """Full stored-result encoding: the response fields plus poses."""
    out = query_response_json(result)
    out["per_view_poses"] = [pose_json(p) for p in result.per_view_poses]
    out["n_views"] = result.n_views
    return out


def parse_result(body) -> CalibrationResult:
    _require_keys(
        body, QUERY_RESPONSE_FIELDS + ("per_view_poses", "n_views"), (), "result"
    )
    fields = parse_query_response({k: body[k] for k in QUERY_RESPONSE_FIELDS})
    m = fields["camera_matrix"]
    poses = body["per_view_poses"]
    if not isinstance(poses, list):
        raise ProtocolError("per_view_poses must be an array")
    try:
        return CalibrationResult(
            intrinsics=CameraIntrinsics(fx=m[0][0], fy=m[1][1], cx=m[0][2], cy=m[1][2]),
            distortion=DistortionParams(
                model=fields["distortion_model"],
                coefficients=tuple(fields["distortion_coefficients"]),
            ),
            img_size=fields["img_size"],
            avg_reprojection_error=fields["avg_reprojection_error"],
            per_view_poses=tuple(parse_pose(p) for p in poses),
            n_views=int(body["n_views"]),
        )
    except ValueError as exc:
        raise ProtocolError(str(exc)) from None
