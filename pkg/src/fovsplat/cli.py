"""Command-line entry points for every pipeline stage.

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime failure. Errors go
to stderr as one JSON object; partially written outputs are removed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .binning import counts_grid, load_workloads, save_workloads
from .camera import DisplayGeometry
from .config import ConfigError, JobConfig, apply_overrides, load_config
from .foveation import build_foveation_map, render_foveated, train_fr
from .hvs import build_pooling_map, hvsq, hvsq_terms
from .model import FrModel, ModelValidationError
from .pngio import load_png, save_png
from .pruning import TrainingDiverged, prune_loop
from .rasterize import render, workload_stats
from .service import StreamingServer
from .simulator import imbalance_report, simulate_feature_sweep
from .splat_io import SplatFormatError, load_model, save_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class _Outputs:
    """Collects written paths so failures can clean up partial results."""

    def __init__(self):
        self.paths: list[Path] = []

    def write_bytes(self, path, data: bytes):
        path = Path(path)
        path.write_bytes(data)
        self.paths.append(path)

    def note(self, path):
        self.paths.append(Path(path))

    def discard_all(self):
        for p in self.paths:
            try:
                p.unlink()
            except OSError:
                pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fovsplat", description="foveated splatting pipeline")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted config override")
    p.add_argument("--seed", type=int, help="override the config seed")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a model to PNG plus workload and stats files")
    r.add_argument("--model", required=True)
    r.add_argument("--out", required=True, help="output PNG path")
    r.add_argument("--level", type=int, default=1)
    r.add_argument("--foveated", action="store_true")
    r.add_argument("--gaze", type=float, nargs=2, metavar=("X", "Y"))
    r.add_argument("--workloads-out")
    r.add_argument("--stats-out")

    pr = sub.add_parser("prune", help="run the efficiency-aware prune loop")
    pr.add_argument("--model", required=True)
    pr.add_argument("--out", required=True, help="output fsplat path")
    pr.add_argument("--report-out", help="JSON-lines round reports")
    pr.add_argument("--cameras", type=int, default=4, help="orbit cameras in the scoring rig")

    tf = sub.add_parser("train-fr", help="derive foveation levels 2..L")
    tf.add_argument("--model", required=True, help="level-1 model")
    tf.add_argument("--reference-model", required=True, help="dense model rendered as quality reference")
    tf.add_argument("--out", required=True)
    tf.add_argument("--report-out")
    tf.add_argument("--cameras", type=int, default=4)

    hv = sub.add_parser("hvsq", help="eccentricity-aware quality between two images")
    hv.add_argument("--reference", required=True)
    hv.add_argument("--altered", required=True)
    hv.add_argument("--gaze", type=float, nargs=2, metavar=("X", "Y"))

    si = sub.add_parser("simulate", help="pipeline simulator over a workload file")
    si.add_argument("--workloads", required=True)
    si.add_argument("--json-out")
    si.add_argument("--timeline-out", help="CSV timeline of the TM+IP run")

    st = sub.add_parser("stats", help="workload imbalance report")
    st.add_argument("--workloads", required=True)

    sv = sub.add_parser("serve", help="gaze-steered streaming service")
    sv.add_argument("--model", required=True)
    sv.add_argument("--bind", help="host:port (or FOVSPLAT_BIND env var)")
    return p


def _load(path) -> FrModel:
    return load_model(path)


def _cameras(cfg: JobConfig, count: int):
    cams = []
    for i in range(count):
        az = cfg.camera.azimuth + 360.0 * i / count
        cams.append(
            type(cfg.camera)(
                azimuth=az,
                tilt=cfg.camera.tilt,
                radius=cfg.camera.radius,
                target=cfg.camera.target,
                fov_deg=cfg.camera.fov_deg,
                width=cfg.camera.width,
                height=cfg.camera.height,
                near=cfg.camera.near,
                far=cfg.camera.far,
            ).build()
        )
    return cams


def _cmd_render(args, cfg: JobConfig, out: _Outputs) -> int:
    model = _load(args.model)
    camera = cfg.camera.build()
    if args.foveated:
        display = cfg.display.build(camera.width, camera.height)
        if args.gaze:
            display = display.with_gaze(*args.gaze)
        fov = render_foveated(model, camera, cfg.foveation, display, cfg.render)
        image, workloads, grid = fov.image, fov.tile_workloads, fov.tile_grid
        stats = fov.stats.to_dict()
    else:
        ro = render(model, camera, args.level, cfg.render)
        image, workloads, grid = ro.image, ro.tile_workloads, ro.tile_grid
        stats = workload_stats(ro).to_dict()
        stats["level"] = args.level
    save_png(args.out, image)
    out.note(args.out)
    if args.workloads_out:
        save_workloads(args.workloads_out, workloads, grid, cfg.render.tile_size)
        out.note(args.workloads_out)
    if args.stats_out:
        Path(args.stats_out).write_text(json.dumps(stats, indent=1))
        out.note(args.stats_out)
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    print(json.dumps({"image": str(args.out), "sha256": digest, "stats": stats}))
    return EXIT_OK


def _cmd_prune(args, cfg: JobConfig, out: _Outputs) -> int:
    model = _load(args.model)
    cams = _cameras(cfg, args.cameras)
    targets = [render(model, cam, 1, cfg.render).image for cam in cams]
    result = prune_loop(model, cams, targets, cfg.train, render_config=cfg.render)
    save_model(result.model, args.out)
    out.note(args.out)
    lines = [json.dumps(r.to_dict()) for r in result.rounds]
    if args.report_out:
        Path(args.report_out).write_text("\n".join(lines) + "\n")
        out.note(args.report_out)
    print("\n".join(lines))
    if not result.reached_threshold:
        print(json.dumps({"warning": "quality threshold unreachable; best model kept"}))
    return EXIT_OK


def _cmd_train_fr(args, cfg: JobConfig, out: _Outputs) -> int:
    model = _load(args.model)
    reference = _load(args.reference_model)
    cams = _cameras(cfg, args.cameras)
    refs = [render(reference, cam, 1, cfg.render).image for cam in cams]
    display = cfg.display.build(cfg.camera.width, cfg.camera.height)
    result = train_fr(model, cams, refs, cfg.foveation, display, cfg.train, cfg.render, cfg.hvs)
    save_model(result.model, args.out)
    out.note(args.out)
    report = {
        "fovea_hvsq": result.fovea_hvsq,
        "threshold": result.threshold,
        "level_sizes": result.model.level_sizes,
        "levels": [r.to_dict() for r in result.reports],
    }
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(report, indent=1))
        out.note(args.report_out)
    print(json.dumps(report, indent=1))
    return EXIT_OK


def _cmd_hvsq(args, cfg: JobConfig, out: _Outputs) -> int:
    ref = load_png(args.reference)
    alt = load_png(args.altered)
    h, w = ref.shape[:2]
    display = cfg.display.build(w, h)
    if args.gaze:
        display = display.with_gaze(*args.gaze)
    pooling = build_pooling_map(display, cfg.hvs.pooling_rate, cfg.hvs.min_radius, cfg.hvs.max_radius)
    fmap = build_foveation_map(cfg.foveation, display, cfg.render.tile_size)
    terms = hvsq_terms(ref, alt, pooling, cfg.hvs)
    per_region = {}
    for lv in range(1, cfg.foveation.level_count + 1):
        mask = fmap.region_mask(lv)
        if mask.any():
            per_region[str(lv)] = float(terms[mask].mean())
    print(json.dumps({"hvsq": float(terms.mean()), "per_region": per_region}))
    return EXIT_OK


def _cmd_simulate(args, cfg: JobConfig, out: _Outputs) -> int:
    workloads, grid, tile_size = load_workloads(args.workloads)
    if not workloads:
        raise SplatFormatError("workload file has no tiles")
    traces = simulate_feature_sweep(workloads, cfg.sim)
    rows = []
    base = traces["baseline"].makespan
    for name, tr in traces.items():
        rows.append(
            {
                "config": name,
                "makespan": tr.makespan,
                "speedup": base / tr.makespan if tr.makespan else 1.0,
                "busy": list(tr.stage_busy),
                "stall": list(tr.stage_stall),
                "utilization": [round(u, 4) for u in tr.utilization],
            }
        )
    width = max(len(r["config"]) for r in rows)
    print(f"{'config'.ljust(width)}  makespan  speedup  rast-util")
    for r in rows:
        print(
            f"{r['config'].ljust(width)}  {r['makespan']:8d}  {r['speedup']:7.3f}  {r['utilization'][-1]:9.3f}"
        )
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(rows, indent=1))
        out.note(args.json_out)
    if args.timeline_out:
        Path(args.timeline_out).write_text(traces["TM+IP"].timeline_csv())
        out.note(args.timeline_out)
    return EXIT_OK


def _cmd_stats(args, cfg: JobConfig, out: _Outputs) -> int:
    workloads, grid, _ = load_workloads(args.workloads)
    report = imbalance_report(workloads, grid)
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def _cmd_serve(args, cfg: JobConfig, out: _Outputs) -> int:
    model = _load(args.model)
    bind = args.bind or os.environ.get("FOVSPLAT_BIND")
    host, port = cfg.serve.host, cfg.serve.port
    if bind:
        host, _, port_s = bind.rpartition(":")
        try:
            port = int(port_s)
        except ValueError as exc:
            raise ConfigError(f"bad bind address {bind!r}") from exc
        host = host or cfg.serve.host
    server = StreamingServer(model, cfg, host, port)
    print(json.dumps({"serving": f"ws://{server.address[0]}:{server.address[1]}"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


_COMMANDS = {
    "render": _cmd_render,
    "prune": _cmd_prune,
    "train-fr": _cmd_train_fr,
    "hvsq": _cmd_hvsq,
    "simulate": _cmd_simulate,
    "stats": _cmd_stats,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    outputs = _Outputs()
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args.set)
        if args.seed is not None:
            cfg.seed = args.seed
        np.random.seed(cfg.seed % (2**32))
        return _COMMANDS[args.command](args, cfg, outputs)
    except ConfigError as exc:
        outputs.discard_all()
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (SplatFormatError, ModelValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        outputs.discard_all()
        print(json.dumps({"error": "data", "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        outputs.discard_all()
        print(
            json.dumps({"error": "runtime", "message": str(exc), "history": exc.history}),
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        outputs.discard_all()
        print(json.dumps({"error": "runtime", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
