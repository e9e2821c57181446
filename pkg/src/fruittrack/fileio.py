"""JSON file formats for sequences, track outputs and evaluation reports.

All three formats are single-document JSON with a top-level ``"version": 1``.
Floats are serialised with Python's shortest round-trip representation, so
``parse(serialize(x))`` is value-identical and serialisation is
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from typing import Any

import numpy as np

from .geometry import BBox2D, Pose
from .metrics import AlphaScores, EvalReport, StepReport, TrackedBox
from .perception import RawDetection2D
from .simulator import Frame, Fruit, ScenarioConfig

FORMAT_VERSION = 1


class FormatError(ValueError):
    """A file does not conform to the expected schema."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise FormatError(message)


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def _bbox_to_list(bbox: BBox2D) -> list[float]:
    return bbox.as_list()


def _bbox_from_list(values) -> BBox2D:
    _require(isinstance(values, list) and len(values) == 4, "bbox must be [x, y, w, h]")
    return BBox2D(*(float(v) for v in values))


# -- sequence files ---------------------------------------------------------


def serialize_sequence(
    frames: list[Frame],
    fruits: list[Fruit],
    cfg: ScenarioConfig | None = None,
    seed: int | None = None,
) -> str:
    doc: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "meta": {
            "seed": seed,
            "scenario": asdict(cfg) if cfg is not None else None,
        },
        "gt_objects": [
            {"id": f.id, "center": [float(c) for c in f.center], "radius": float(f.radius)}
            for f in fruits
        ],
        "frames": [
            {
                "index": fr.index,
                "height_step": fr.height_step,
                "pose": [float(v) for v in fr.pose.matrix().reshape(16)],
                "detections": [
                    {
                        "class": d.class_label,
                        "confidence": float(d.confidence),
                        "bbox": _bbox_to_list(d.bbox),
                        "points": [[float(v) for v in p] for p in d.points],
                    }
                    for d in fr.detections
                ],
                "ground_truth": [
                    {"track_id": int(tid), "bbox": _bbox_to_list(bbox)}
                    for tid, bbox in fr.ground_truth
                ],
                "in_frustum": [int(i) for i in fr.in_frustum_ids],
            }
            for fr in sorted(frames, key=lambda fr: fr.index)
        ],
    }
    return _dump(doc)


def parse_sequence(text: str) -> tuple[list[Frame], list[Fruit], dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "sequence file must be a JSON object")
    _require(doc.get("version") == FORMAT_VERSION, "missing or unsupported version field")
    _require(isinstance(doc.get("frames"), list), "missing frames array")

    fruits = [
        Fruit(id=int(o["id"]), center=np.array(o["center"], dtype=float), radius=float(o["radius"]))
        for o in doc.get("gt_objects", [])
    ]

    frames: list[Frame] = []
    last_index = -1
    for raw in doc["frames"]:
        index = int(raw["index"])
        _require(index > last_index, "frames must be sorted by index")
        last_index = index
        pose = Pose.from_matrix(np.array(raw["pose"], dtype=float).reshape(4, 4))
        detections = [
            RawDetection2D(
                class_label=str(d["class"]),
                confidence=float(d["confidence"]),
                bbox=_bbox_from_list(d["bbox"]),
                points=np.array(d["points"], dtype=float).reshape(-1, 3),
            )
            for d in raw.get("detections", [])
        ]
        ground_truth = [
            (int(g["track_id"]), _bbox_from_list(g["bbox"])) for g in raw.get("ground_truth", [])
        ]
        frames.append(
            Frame(
                index=index,
                height_step=int(raw["height_step"]),
                pose=pose,
                detections=detections,
                ground_truth=ground_truth,
                in_frustum_ids=[int(i) for i in raw.get("in_frustum", [])],
            )
        )
    return frames, fruits, doc.get("meta", {})


# -- tracks files -----------------------------------------------------------


def serialize_tracks(
    frame_records: list[tuple[int, list[dict]]],
    meta: dict | None = None,
) -> str:
    """``frame_records`` pairs a frame index with that frame's track rows.

    Each row is a dict with keys id, status, mean and bbox.
    """
    doc = {
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "frames": [
            {
                "index": int(index),
                "tracks": [
                    {
                        "id": int(row["id"]),
                        "status": str(row["status"]),
                        "mean": [float(v) for v in row["mean"]],
                        "bbox": [float(v) for v in row["bbox"]],
                    }
                    for row in rows
                ],
            }
            for index, rows in sorted(frame_records, key=lambda item: item[0])
        ],
    }
    return _dump(doc)


def parse_tracks(text: str) -> tuple[list[tuple[int, list[dict]]], dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "tracks file must be a JSON object")
    _require(doc.get("version") == FORMAT_VERSION, "missing or unsupported version field")
    _require(isinstance(doc.get("frames"), list), "missing frames array")
    records = []
    last_index = -1
    for raw in doc["frames"]:
        index = int(raw["index"])
        _require(index > last_index, "frames must be sorted by index")
        last_index = index
        rows = []
        for r in raw.get("tracks", []):
            _require(len(r.get("mean", [])) == 3, "track mean must be [x, y, z]")
            rows.append(
                {
                    "id": int(r["id"]),
                    "status": str(r["status"]),
                    "mean": [float(v) for v in r["mean"]],
                    "bbox": [float(v) for v in r["bbox"]],
                }
            )
        records.append((index, rows))
    return records, doc.get("meta", {})


def tracks_to_trajectories(frame_records: list[tuple[int, list[dict]]]) -> list[TrackedBox]:
    return [
        TrackedBox(frame=index, track_id=row["id"], bbox=_bbox_from_list(row["bbox"]))
        for index, rows in frame_records
        for row in rows
    ]


def sequence_to_gt_trajectories(frames: list[Frame]) -> list[TrackedBox]:
    return [
        TrackedBox(frame=fr.index, track_id=tid, bbox=bbox)
        for fr in frames
        for tid, bbox in fr.ground_truth
    ]


# -- report files -----------------------------------------------------------


def serialize_report(steps: list[StepReport], meta: dict | None = None) -> str:
    doc = {
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "steps": [
            {
                "step": int(sr.step),
                "actuals": [int(a) for a in sr.actuals],
                "predictions": [int(p) for p in sr.predictions],
                "mpe": _opt(sr.report.mpe),
                "mape": _opt(sr.report.mape),
                "hota": _opt(sr.report.hota),
                "deta": _opt(sr.report.deta),
                "assa": _opt(sr.report.assa),
                "loca": _opt(sr.report.loca),
                "per_alpha": [
                    {
                        "alpha": float(s.alpha),
                        "loca": _opt(s.loca),
                        "deta": _opt(s.deta),
                        "assa": _opt(s.assa),
                        "hota": _opt(s.hota),
                        "tp": int(s.tp),
                        "fp": int(s.fp),
                        "fn": int(s.fn),
                    }
                    for s in sr.report.per_alpha
                ],
            }
            for sr in steps
        ],
    }
    return _dump(doc)


def parse_report(text: str) -> tuple[list[StepReport], dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "report file must be a JSON object")
    _require(doc.get("version") == FORMAT_VERSION, "missing or unsupported version field")
    steps = []
    for raw in doc.get("steps", []):
        report = EvalReport(
            mpe=raw.get("mpe"),
            mape=raw.get("mape"),
            hota=raw.get("hota"),
            deta=raw.get("deta"),
            assa=raw.get("assa"),
            loca=raw.get("loca"),
            per_alpha=[
                AlphaScores(
                    alpha=s["alpha"],
                    loca=s.get("loca"),
                    deta=s.get("deta"),
                    assa=s.get("assa"),
                    hota=s.get("hota"),
                    tp=int(s["tp"]),
                    fp=int(s["fp"]),
                    fn=int(s["fn"]),
                )
                for s in raw.get("per_alpha", [])
            ],
        )
        steps.append(
            StepReport(
                step=int(raw["step"]),
                report=report,
                actuals=[int(a) for a in raw.get("actuals", [])],
                predictions=[int(p) for p in raw.get("predictions", [])],
            )
        )
    return steps, doc.get("meta", {})


def _opt(value: float | None) -> float | None:
    return None if value is None else float(value)


def format_report_table(steps: list[StepReport]) -> str:
    """Aligned text table, tracking scores scaled to percentages."""

    def cell(value: float | None) -> str:
        return "   -  " if value is None else f"{value:6.2f}"

    def pct(value: float | None) -> str:
        return "   -  " if value is None else f"{100.0 * value:6.2f}"

    lines = [f"{'step':>4}  {'MAPE':>6}  {'MPE':>6}  {'HOTA':>6}  {'DetA':>6}  {'AssA':>6}  {'LocA':>6}"]
    for sr in steps:
        r = sr.report
        lines.append(
            f"{sr.step:>4}  {cell(r.mape)}  {cell(r.mpe)}  {pct(r.hota)}  {pct(r.deta)}  {pct(r.assa)}  {pct(r.loca)}"
        )
    return "\n".join(lines)
