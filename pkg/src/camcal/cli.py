"""Command-line interface.

Subcommands:
  serve         run the calibration service
  session       drive one simulated calibration session against a server
  seed          run several sessions, then query the reliability gate
  query         calibration-data request (prints status and body)
  init-profile  write a simulated-camera profile JSON to edit by hand
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import wire
from .board import BoardSpec
from .camera_model import CameraIntrinsics, DistortionModel, DistortionParams
from .errors import CamcalError
from .sim_client import SimCameraProfile, query, run_session, seed_reliability
from .store import CameraKey


def _profile_from_args(args) -> SimCameraProfile:
    profile = SimCameraProfile.load(args.profile)
    if args.seed is not None:
        profile = replace(profile, seed=args.seed)
    if args.noise is not None:
        profile = replace(profile, noise_sigma=args.noise)
    return profile


def _print_session_report(report) -> None:
    c = report.calibration
    m = c["camera_matrix"]
    e = report.errors
    print(
        f"session complete: {report.n_accepted} accepted, "
        f"{report.n_mismatched} mismatched ({report.n_submissions} submissions)"
    )
    print("served calibration:")
    print(f"  fx {m[0][0]:.3f}  fy {m[1][1]:.3f}  cx {m[0][2]:.3f}  cy {m[1][2]:.3f}")
    coeffs = ", ".join(f"{k:.5f}" for k in c["distortion_coefficients"])
    print(f"  distortion {c['distortion_model']} [{coeffs}]")
    print(f"  avg reprojection error {c['avg_reprojection_error']:.4f} px")
    print("errors vs ground truth:")
    print(
        f"  fx {100 * e['fx_rel']:.4f}%  fy {100 * e['fy_rel']:.4f}%  "
        f"cx {e['cx_abs']:.3f} px  cy {e['cy_abs']:.3f} px"
    )
    print("  k  [" + ", ".join(f"{v:.5f}" for v in e["k_abs"]) + "]")


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServerConfig, create_app

    if args.config:
        config = ServerConfig.from_file(args.config)
    else:
        if not args.token:
            print("serve: provide --config or at least one --token", file=sys.stderr)
            return 2
        board = BoardSpec(int(args.board[0]), int(args.board[1]), args.board[2])
        config = ServerConfig(
            storage_path=args.storage,
            tokens=tuple(args.token),
            board=board,
            n_targets=args.n_targets,
            tau=args.tau,
            host=args.host,
            port=args.port,
        )
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


def _cmd_session(args) -> int:
    profile = _profile_from_args(args)
    report = run_session(
        profile, args.server, args.token,
        align=not args.no_align, wrong_first_pose=args.wrong_first_pose,
    )
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        _print_session_report(report)
    if args.report_dir:
        from .report import write_session_report

        paths = write_session_report(
            args.report_dir, report.calibration, report.errors,
            truth=(profile.intrinsics, profile.distortion),
        )
        for p in paths:
            print(f"wrote {p}")
    return 0


def _cmd_seed(args) -> int:
    profile = _profile_from_args(args)
    summary = seed_reliability(
        profile, args.server, args.token, args.sessions,
        alternate_fx_pct=args.alternate_fx_pct,
    )
    if args.json:
        print(json.dumps(summary, indent=2))
        return 0
    for i, s in enumerate(summary["sessions"], 1):
        e = s["errors"]
        print(
            f"session {i}: {s['n_accepted']} accepted, rms "
            f"{s['calibration']['avg_reprojection_error']:.4f}, "
            f"fx err {100 * e['fx_rel']:.4f}%"
        )
    if summary["query_status"] == 200:
        print("query: 200")
        print(wire.canonical_json(summary["query_payload"]))
    else:
        print(f"query: 307 -> {summary['query_payload']}")
    return 0


def _cmd_query(args) -> int:
    key = CameraKey(args.camera, args.platform, (args.width, args.height), args.zoom)
    model = DistortionModel(args.model) if args.model else None
    status, payload = query(key, args.server, model)
    if status == 200:
        print("200")
        print(wire.canonical_json(payload))
        return 0
    print(f"307 -> {payload}")
    return 1


def _cmd_init_profile(args) -> int:
    key = CameraKey(args.camera, args.platform, (args.width, args.height), args.zoom)
    profile = SimCameraProfile(
        intrinsics=CameraIntrinsics(args.fx, args.fy, args.cx, args.cy),
        distortion=DistortionParams(DistortionModel(args.model), tuple(args.k)),
        img_size=(args.width, args.height),
        camera_key=key,
        noise_sigma=args.noise,
        seed=args.seed or 0,
        board=BoardSpec(int(args.board[0]), int(args.board[1]), args.board[2]),
    )
    profile.save(args.out)
    print(f"wrote {args.out}")
    return 0


def _add_client_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--server", default="http://127.0.0.1:8077")
    p.add_argument("--token", required=True)
    p.add_argument("--profile", required=True, help="profile JSON path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=None, help="override noise sigma [px]")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="camcal")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the calibration service")
    p.add_argument("--config", help="server config JSON (overrides other flags)")
    p.add_argument("--storage", default="./calib-store")
    p.add_argument("--token", action="append", default=[],
                   help="accepted API token (repeatable)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.add_argument("--n-targets", type=int, default=10)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--board", nargs=3, type=float, default=[8, 5, 0.03],
                   metavar=("SQUARES_X", "SQUARES_Y", "SQUARE_LEN"))
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("session", help="run one simulated session")
    _add_client_args(p)
    p.add_argument("--no-align", action="store_true",
                   help="submit at the nominal target pose without overlay alignment")
    p.add_argument("--wrong-first-pose", action="store_true",
                   help="deliberately botch the first capture")
    p.add_argument("--report-dir", default=None,
                   help="write figures + CSV report here")
    p.set_defaults(func=_cmd_session)

    p = sub.add_parser("seed", help="seed several sessions, then query")
    _add_client_args(p)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--alternate-fx-pct", type=float, default=0.0,
                   help="alternate true focal by +/- this fraction between sessions")
    p.set_defaults(func=_cmd_seed)

    p = sub.add_parser("query", help="calibration-data request")
    p.add_argument("--server", default="http://127.0.0.1:8077")
    p.add_argument("--camera", required=True)
    p.add_argument("--platform", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--zoom", type=float, default=0.0)
    p.add_argument("--model", choices=[m.value for m in DistortionModel], default=None)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("init-profile", help="write a simulated camera profile")
    p.add_argument("--out", required=True)
    p.add_argument("--camera", default="C922 Pro Stream Webcam (046d:085c)")
    p.add_argument("--platform", default="X11; Linux x86_64")
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--zoom", type=float, default=0.0)
    p.add_argument("--fx", type=float, default=1430.0)
    p.add_argument("--fy", type=float, default=1430.0)
    p.add_argument("--cx", type=float, default=952.0)
    p.add_argument("--cy", type=float, default=505.0)
    p.add_argument("--model", choices=[m.value for m in DistortionModel],
                   default="rectilinear")
    p.add_argument("--k", nargs=3, type=float, default=[-0.1, 0.02, 0.0])
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--board", nargs=3, type=float, default=[8, 5, 0.03],
                   metavar=("SQUARES_X", "SQUARES_Y", "SQUARE_LEN"))
    p.set_defaults(func=_cmd_init_profile)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CamcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
