"""Persistence and query of calibration records.

Records are schema-less JSON documents, one file per record, named by
record id. Documents are the source of truth: the in-memory index is
rebuilt by scanning the directory at startup, and writes go through a
temp-file + atomic rename so readers never see a torn document.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import wire
from .board import BoardSpec, ViewObservation
from .camera_model import DistortionModel
from .engine import CalibrationResult, refit
from .errors import ProtocolError, StorageFailure


@dataclass(frozen=True)
class CameraKey:
    """Identity of a camera configuration: device name (including the USB
    id when the platform exposes one), platform string, capture resolution
    and zoom (0 when the focal length cannot be read)."""

    camera: str
    platform: str
    img_size: tuple[int, int]
    zoom: float = 0.0

    def __post_init__(self):
        if not self.camera or not isinstance(self.camera, str):
            raise ValueError("camera must be a non-empty string")
        if not self.platform or not isinstance(self.platform, str):
            raise ValueError("platform must be a non-empty string")
        w, h = int(self.img_size[0]), int(self.img_size[1])
        if w <= 0 or h <= 0:
            raise ValueError(f"img_size must be positive, got {self.img_size!r}")
        if not self.zoom >= 0:
            raise ValueError(f"zoom must be >= 0, got {self.zoom!r}")
        object.__setattr__(self, "img_size", (w, h))
        object.__setattr__(self, "zoom", float(self.zoom))

    @property
    def group(self) -> tuple[str, str, float]:
        """Identity ignoring resolution — the closest-resolution pool."""
        return (self.camera, self.platform, self.zoom)


@dataclass(frozen=True)
class CalibrationRecord:
    key: CameraKey
    result: CalibrationResult
    keypoints: tuple[ViewObservation, ...]
    board: BoardSpec
    created_at: float
    record_id: str = ""

    def __post_init__(self):
        if not self.keypoints:
            raise ValueError("record must carry at least one observation")
        if tuple(self.result.img_size) != tuple(self.key.img_size):
            raise ValueError(
                f"result img_size {self.result.img_size} != key {self.key.img_size}"
            )
        object.__setattr__(self, "keypoints", tuple(self.keypoints))


@dataclass(frozen=True)
class ReliabilityThresholds:
    min_count: int = 5
    focal_cov: float = 0.02        # std/mean for fx, fy
    center_frac: float = 0.01      # std of cx, cy as a fraction of width
    coeff_std: float = 0.02        # absolute std per distortion coefficient

    def __post_init__(self):
        if self.min_count < 1 or min(self.focal_cov, self.center_frac, self.coeff_std) <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class ReliabilityReport:
    reliable: bool
    count: int
    stats: dict


def _record_doc(rec: CalibrationRecord) -> dict:
    return {
        "record_id": rec.record_id,
        "camera": rec.key.camera,
        "platform": rec.key.platform,
        "img_size": [rec.key.img_size[0], rec.key.img_size[1]],
        "zoom": rec.key.zoom,
        "result": wire.result_json(rec.result),
        "keypoints": [wire.observation_json(o) for o in rec.keypoints],
        "board": wire.board_json(rec.board),
        "created_at": rec.created_at,
    }


def _record_from_doc(doc: dict) -> CalibrationRecord:
    key = CameraKey(
        camera=doc["camera"],
        platform=doc["platform"],
        img_size=tuple(doc["img_size"]),
        zoom=doc["zoom"],
    )
    return CalibrationRecord(
        key=key,
        result=wire.parse_result(doc["result"]),
        keypoints=tuple(wire.parse_observation(o) for o in doc["keypoints"]),
        board=wire.parse_board(doc["board"]),
        created_at=float(doc["created_at"]),
        record_id=doc["record_id"],
    )


class CalibStore:
    """Directory-backed record store with an in-memory index.

    Thread-safe: mutation happens under a lock, and read operations hand
    out immutable snapshots.
    """

    def __init__(self, root: str | Path):
        self._root = Path(root)
        self._lock = threading.Lock()
        self._records: dict[str, CalibrationRecord] = {}
        try:
            self._root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot create store at {self._root}: {exc}") from exc
        self._load()

    def _load(self) -> None:
        for path in sorted(self._root.glob("*.json")):
            try:
                doc = json.loads(path.read_text())
                rec = _record_from_doc(doc)
            except (OSError, ValueError, KeyError, TypeError, ProtocolError) as exc:
                raise StorageFailure(f"corrupt record {path.name}: {exc}") from exc
            self._records[rec.record_id] = rec

    def __len__(self) -> int:
        return len(self._records)

    def put_record(self, rec: CalibrationRecord) -> str:
        """Durably persist a record under a fresh id; never reuses ids."""
        record_id = uuid.uuid4().hex
        stored = replace(rec, record_id=record_id)
        if not stored.created_at:
            stored = replace(stored, created_at=time.time())
        path = self._root / f"{record_id}.json"
        tmp = self._root / f".{record_id}.tmp"
        try:
            with open(tmp, "w") as fh:
                json.dump(_record_doc(stored), fh)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            raise StorageFailure(f"cannot persist record: {exc}") from exc
        with self._lock:
            self._records[record_id] = stored
        return record_id

    def get_records(self, key: CameraKey, match: str = "exact") -> list[CalibrationRecord]:
        """Records for a key, oldest first. ``match="closest_resolution"``
        relaxes the resolution: among records sharing (camera, platform,
        zoom) it returns those whose stored size minimizes
        |log(w_req/w_rec)| + |log(aspect_req/aspect_rec)|, ties going to
        the larger resolution."""
        if match not in ("exact", "closest_resolution"):
            raise ValueError(f"unknown match mode {match!r}")
        with self._lock:
            snapshot = list(self._records.values())
        if match == "exact":
            hits = [r for r in snapshot if r.key == key]
            return sorted(hits, key=lambda r: (r.created_at, r.record_id))
        pool = [r for r in snapshot if r.key.group == key.group]
        if not pool:
            return []
        req_w, req_h = key.img_size

        def distance(size):
            w, h = size
            return abs(np.log(req_w / w)) + abs(np.log((req_w / req_h) / (w / h)))

        sizes = {r.key.img_size for r in pool}
        best = min(sizes, key=lambda s: (distance(s), -s[0] * s[1], -s[0]))
        hits = [r for r in pool if r.key.img_size == best]
        return sorted(hits, key=lambda r: (r.created_at, r.record_id))

    def reliability(self, records: list[CalibrationRecord],
                    thresholds: ReliabilityThresholds | None = None) -> ReliabilityReport:
        """Gate on the spread of intrinsics across records: needs at least
        ``min_count`` calibrations whose focal lengths vary by under
        ``focal_cov``, centers by under ``center_frac`` of the width, and
        coefficients by under ``coeff_std`` absolute."""
        th = thresholds or ReliabilityThresholds()
        count = len(records)
        if count == 0:
            return ReliabilityReport(reliable=False, count=0, stats={})
        params = {
            "fx": np.array([r.result.intrinsics.fx for r in records]),
            "fy": np.array([r.result.intrinsics.fy for r in records]),
            "cx": np.array([r.result.intrinsics.cx for r in records]),
            "cy": np.array([r.result.intrinsics.cy for r in records]),
        }
        for i in range(3):
            params[f"k{i + 1}"] = np.array(
                [r.result.distortion.coefficients[i] for r in records]
            )
        stats = {
            name: {
                "mean": float(vals.mean()),
                "std": float(vals.std()),
                "spread": float(vals.std() / abs(vals.mean())) if vals.mean() else float("inf"),
            }
            for name, vals in params.items()
        }
        width = records[0].key.img_size[0]
        reliable = (
            count >= th.min_count
            and stats["fx"]["spread"] <= th.focal_cov
            and stats["fy"]["spread"] <= th.focal_cov
            and stats["cx"]["std"] <= th.center_frac * width
            and stats["cy"]["std"] <= th.center_frac * width
            and all(stats[f"k{i + 1}"]["std"] <= th.coeff_std for i in range(3))
        )
        return ReliabilityReport(reliable=reliable, count=count, stats=stats)

    def pooled_result(self, records: list[CalibrationRecord], board: BoardSpec,
                      model: DistortionModel | str) -> CalibrationResult:
        """Refit one calibration from the union of all stored keypoints —
        the result served to clients once the gate passes."""
        if not records:
            raise ValueError("no records to pool")
        keys = {(r.key.group, r.key.img_size) for r in records}
        if len(keys) > 1:
            raise ValueError("pooled records must share camera, platform, zoom and size")
        views = [obs for r in records for obs in r.keypoints]
        return refit(views, board, model, records[0].key.img_size)
