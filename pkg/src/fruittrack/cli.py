"""Command-line driver: simulate scenes, run tracking, evaluate, sweep.

Exit codes: 0 success, 2 configuration error, 3 I/O or parse error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import fileio
from .metrics import SequenceData, StepReport, cumulative_report
from .perception import PerceptionConfig, PreprocStats, extract_detections, format_stats_table
from .simulator import Frame, ScenarioConfig, simulate_sequence
from .worldmodel import CONFIRMED, TrackerConfig, WorldModel, count, step

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


class ConfigError(ValueError):
    pass


_SECTIONS = {
    "scenario": ScenarioConfig,
    "perception": PerceptionConfig,
    "tracker": TrackerConfig,
}


def load_config(path: str | None) -> dict:
    """Read the JSON run configuration, rejecting unknown keys."""
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in doc:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key: {key}")
    return doc


def build_section(name: str, doc: dict, overrides: dict | None = None):
    cls = _SECTIONS[name]
    fields = {f.name for f in dataclasses.fields(cls)}
    merged = dict(doc.get(name, {}))
    if not isinstance(merged, dict):
        raise ConfigError(f"config section {name} must be an object")
    for key in merged:
        if key not in fields:
            raise ConfigError(f"unknown config key: {name}.{key}")
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} config: {exc}") from exc


def run_tracker(
    frames: list[Frame],
    perception_cfg: PerceptionConfig,
    tracker_cfg: TrackerConfig,
) -> tuple[list[tuple[int, list[dict]]], int, PreprocStats]:
    """Run perception plus tracking over a sequence.

    Returns per-frame rows for every confirmed track that consumed a
    detection that frame (matched, or spawned when ``n_init`` is 0), the
    final confirmed-track count, and the pre-processing tallies.
    """
    stats = PreprocStats()
    world = WorldModel(config=tracker_cfg)
    records: list[tuple[int, list[dict]]] = []
    for frame in frames:
        detections = extract_detections(
            frame.detections, frame.pose, perception_cfg, stats, frame.height_step
        )
        world, assoc = step(world, detections)
        matched_ids = {tid for tid, _ in assoc.matched}
        rows = [
            {
                "id": t.id,
                "status": t.status,
                "mean": [float(v) for v in t.mean],
                "bbox": t.bbox.as_list(),
            }
            for t in world.tracks
            if t.status == CONFIRMED and (t.id in matched_ids or t.frames_since_init == 0)
        ]
        records.append((frame.index, rows))
    return records, count(world), stats


def _evaluate_sequences(datasets: list[SequenceData]) -> list[StepReport]:
    return cumulative_report(datasets)


def _sequence_data(frames: list[Frame], records: list[tuple[int, list[dict]]]) -> SequenceData:
    frame_indices = {fr.index for fr in frames}
    for index, _ in records:
        if index not in frame_indices:
            raise fileio.FormatError(f"tracks frame {index} not present in sequence")
    return SequenceData(
        gt=fileio.sequence_to_gt_trajectories(frames),
        pred=fileio.tracks_to_trajectories(records),
        frame_steps={fr.index: fr.height_step for fr in frames},
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    overrides = {
        "seed": args.seed,
        "n_fruits": args.fruits,
        "heights": args.heights,
        "viewpoints_per_height": args.viewpoints,
    }
    cfg = build_section("scenario", doc, overrides)
    frames, fruits, _ = simulate_sequence(cfg)
    text = fileio.serialize_sequence(frames, fruits, cfg, seed=cfg.seed)
    Path(args.out).write_text(text)
    print(f"wrote {len(frames)} frames, {len(fruits)} objects to {args.out}")
    return EXIT_OK


def cmd_track(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    perception_cfg = build_section("perception", doc, {"confidence_threshold": args.confidence})
    tracker_cfg = build_section("tracker", doc, {"n_init": args.n_init, "gate": args.gate})
    frames, _, _ = fileio.parse_sequence(Path(args.infile).read_text())
    records, final_count, stats = run_tracker(frames, perception_cfg, tracker_cfg)
    meta = {
        "n_init": tracker_cfg.n_init,
        "gate": tracker_cfg.gate,
        "confidence_threshold": perception_cfg.confidence_threshold,
    }
    Path(args.out).write_text(fileio.serialize_tracks(records, meta))
    print(f"final count: {final_count}")
    print(format_stats_table(stats))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    frames, _, _ = fileio.parse_sequence(Path(args.gt).read_text())
    records, _ = fileio.parse_tracks(Path(args.tracks).read_text())
    steps = _evaluate_sequences([_sequence_data(frames, records)])
    text = fileio.serialize_report(steps, meta={"tracks": args.tracks, "gt": args.gt})
    if args.out:
        Path(args.out).write_text(text)
    print(fileio.format_report_table(steps))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sequences = []
    for path in args.infiles:
        frames, _, _ = fileio.parse_sequence(Path(path).read_text())
        sequences.append((Path(path).stem, frames))

    for n_init in args.n_init:
        for confidence in args.confidence:
            perception_cfg = build_section("perception", doc, {"confidence_threshold": confidence})
            tracker_cfg = build_section("tracker", doc, {"n_init": n_init})
            datasets = []
            for name, frames in sequences:
                records, _, _ = run_tracker(frames, perception_cfg, tracker_cfg)
                data = _sequence_data(frames, records)
                datasets.append(data)
                cell = _evaluate_sequences([data])
                cell_path = out_dir / f"cell_{name}_ninit{n_init}_conf{confidence}.json"
                cell_path.write_text(
                    fileio.serialize_report(
                        cell,
                        meta={"sequence": name, "n_init": n_init, "confidence": confidence},
                    )
                )
            aggregate = _evaluate_sequences(datasets)
            agg_path = out_dir / f"aggregate_ninit{n_init}_conf{confidence}.json"
            agg_path.write_text(
                fileio.serialize_report(
                    aggregate,
                    meta={
                        "sequences": [name for name, _ in sequences],
                        "n_init": n_init,
                        "confidence": confidence,
                    },
                )
            )
            print(f"n_init={n_init} confidence={confidence}")
            print(fileio.format_report_table(aggregate))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fruittrack")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic sequence file")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fruits", type=int, default=None)
    p.add_argument("--heights", type=int, default=None)
    p.add_argument("--viewpoints", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run perception and tracking over a sequence")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--n-init", type=int, default=None)
    p.add_argument("--gate", type=float, default=None)
    p.add_argument("--confidence", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="evaluate a tracks file against ground truth")
    p.add_argument("--tracks", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the parameter grid over several sequences")
    p.add_argument("--in", dest="infiles", nargs="+", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--n-init", type=int, nargs="+", default=[0, 1])
    p.add_argument("--confidence", type=float, nargs="+", default=[0.5, 0.7])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (fileio.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
