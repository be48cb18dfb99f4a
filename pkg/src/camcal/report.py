"""Render calibration reports: matplotlib figures plus a CSV summary.

Figures go to PNG files in the chosen directory; the CSV carries the same
numbers in machine-readable form so CI can diff them without parsing
images.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

from .camera_model import (
    CameraIntrinsics,
    DistortionParams,
    _distorted_radius,
    compute_rectification_map,
)

_PARAM_NAMES = ("fx", "fy", "cx", "cy", "k1", "k2", "k3")


def _param_values(K: CameraIntrinsics, d: DistortionParams) -> list[float]:
    return [K.fx, K.fy, K.cx, K.cy, *d.coefficients]


def _max_radius(K: CameraIntrinsics, img_size) -> float:
    w, h = img_size
    xs = np.array([0.0, w, 0.0, w])
    ys = np.array([0.0, 0.0, h, h])
    r = np.hypot((xs - K.cx) / K.fx, (ys - K.cy) / K.fy)
    return float(r.max())


def distortion_curve_figure(K: CameraIntrinsics, d: DistortionParams, img_size,
                            truth: tuple[CameraIntrinsics, DistortionParams] | None = None):
    """Radial displacement (pixels) against normalized radius, out to the
    image corner; overlays the ground-truth curve when given."""
    fig, ax = plt.subplots(figsize=(6, 4))
    r = np.linspace(0.0, _max_radius(K, img_size), 200)
    ax.plot(r, (_distorted_radius(r, d) - r) * K.fx,
            label=f"fitted ({d.model.value})")
    if truth is not None:
        K_t, d_t = truth
        ax.plot(r, (_distorted_radius(r, d_t) - r) * K_t.fx, "--",
                label=f"ground truth ({d_t.model.value})")
    ax.set_xlabel("normalized radius")
    ax.set_ylabel("radial displacement [px]")
    ax.set_title("Radial distortion profile")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def parameter_error_figure(errors: dict):
    """Bar chart of the session report's parameter errors."""
    labels = ["fx (rel)", "fy (rel)", "cx [px]", "cy [px]", "k1", "k2", "k3"]
    values = [
        errors["fx_rel"], errors["fy_rel"],
        errors["cx_abs"], errors["cy_abs"], *errors["k_abs"],
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    floor = 1e-12
    ax.bar(labels, np.maximum(values, floor), color="#4878d0")
    ax.set_yscale("log")
    ax.set_ylabel("error vs ground truth")
    ax.set_title("Parameter errors")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    return fig


def rectification_displacement_figure(K: CameraIntrinsics, d: DistortionParams,
                                      img_size, step: int = 40):
    """Quiver of how far each pixel moves under rectification."""
    w, h = int(img_size[0]), int(img_size[1])
    rmap = compute_rectification_map(K, d, K, (w, h))
    u, v = np.meshgrid(np.arange(0, w, step, dtype=float),
                       np.arange(0, h, step, dtype=float))
    src = rmap.map[::step, ::step]
    du = src[..., 0] - u
    dv = src[..., 1] - v
    mag = np.hypot(du, dv)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    q = ax.quiver(u, v, du, dv, mag, angles="xy", scale_units="xy", scale=1.0,
                  cmap="viridis", width=0.002)
    fig.colorbar(q, ax=ax, label="displacement [px]")
    ax.set_xlim(0, w)
    ax.set_ylim(h, 0)
    ax.set_aspect("equal")
    ax.set_title("Rectification displacement")
    fig.tight_layout()
    return fig


def write_session_report(report_dir: str | Path, calibration: dict,
                         errors: dict | None = None,
                         truth: tuple[CameraIntrinsics, DistortionParams] | None = None,
                         ) -> list[Path]:
    """Write figures + CSV for one served calibration; returns the paths.

    ``calibration`` is the served response body (camera_matrix rows and
    distortion fields); ``errors``/``truth`` come from the simulated
    profile when there is one.
    """
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = calibration["camera_matrix"]
    K = CameraIntrinsics(fx=m[0][0], fy=m[1][1], cx=m[0][2], cy=m[1][2])
    d = DistortionParams(
        calibration["distortion_model"],
        tuple(calibration["distortion_coefficients"]),
    )
    img_size = tuple(calibration["img_size"])
    written = []

    fig = distortion_curve_figure(K, d, img_size, truth)
    path = out / "distortion_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig = rectification_displacement_figure(K, d, img_size)
    path = out / "rectification_displacement.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if errors is not None:
        fig = parameter_error_figure(errors)
        path = out / "parameter_errors.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    csv_path = out / "report.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["parameter", "estimated"]
        truth_vals = None
        if truth is not None:
            truth_vals = _param_values(*truth)
            header += ["ground_truth", "abs_error"]
        writer.writerow(header)
        for i, (name, value) in enumerate(zip(_PARAM_NAMES, _param_values(K, d))):
            row = [name, repr(value)]
            if truth_vals is not None:
                row += [repr(truth_vals[i]), repr(abs(value - truth_vals[i]))]
            writer.writerow(row)
        writer.writerow(
            ["avg_reprojection_error", repr(calibration["avg_reprojection_error"])]
            + ([""] * 2 if truth_vals is not None else [])
        )
    written.append(csv_path)
    return written
