"""Counting and tracking-quality metrics over image-space trajectories.

A trajectory set is a list of :class:`TrackedBox` records, one per (frame,
track id) pair. Detection-level scores (precision/recall), counting errors
(MPE/MAPE) and the higher-order tracking accuracy family (LocA, DetA, AssA,
HOTA) are all computed from ground-truth and predicted trajectory sets.

Per IoU threshold alpha, frames are matched one-to-one among pairs with
IoU >= alpha, maximising match count first and total IoU second. For each
true positive pairing gt track g with predicted track p, the association
score is TPA / (TPA + FNA + FPA) where TPA counts frames in which (g, p) are
matched, FNA the remaining detections of g, and FPA the remaining detections
of p. HOTA at alpha is sqrt(DetA * AssA); the headline score averages over
the 19 thresholds 0.05, 0.10, ..., 0.95.

Metric values of ``None`` mean "undefined on this input" (e.g. mean IoU over
zero true positives); they are reported as absent, never coerced to 0.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox2D, bbox_iou

ALPHA_GRID: tuple[float, ...] = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class TrackedBox:
    frame: int
    track_id: int
    bbox: BBox2D


@dataclass
class TpMatch:
    frame: int
    gt_id: int
    pred_id: int
    iou: float


@dataclass
class FrameMatchSet:
    """True positives and leftovers at one IoU threshold."""

    alpha: float
    tp: list[TpMatch] = field(default_factory=list)
    fp: list[TrackedBox] = field(default_factory=list)
    fn: list[TrackedBox] = field(default_factory=list)


@dataclass
class AlphaScores:
    alpha: float
    loca: float | None
    deta: float | None
    assa: float | None
    hota: float | None
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    mpe: float | None = None
    mape: float | None = None
    per_alpha: list[AlphaScores] = field(default_factory=list)
    hota: float | None = None
    deta: float | None = None
    assa: float | None = None
    loca: float | None = None


def mpe(actuals, predictions) -> float:
    """Mean percentage error, 100/n * sum((A - P) / A); negative means over-counting."""
    actuals, predictions = _check_count_series(actuals, predictions)
    return float(100.0 * np.mean((actuals - predictions) / actuals))


def mape(actuals, predictions) -> float:
    """Mean absolute percentage error, 100/n * sum(|A - P| / A)."""
    actuals, predictions = _check_count_series(actuals, predictions)
    return float(100.0 * np.mean(np.abs(actuals - predictions) / actuals))


def _check_count_series(actuals, predictions) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actuals, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if a.ndim != 1 or a.shape != p.shape or a.size == 0:
        raise ValueError("actuals and predictions must be equal-length, non-empty")
    if np.any(a == 0):
        raise ValueError("undefined relative error")
    return a, p


def detection_pr(
    gt_boxes: list[TrackedBox],
    pred_boxes: list[TrackedBox],
    iou_threshold: float = 0.5,
) -> tuple[float | None, float | None]:
    """Detector precision and recall with per-frame greedy-by-IoU matching.

    Returns ``(None, None)`` when both inputs are empty.
    """
    gt_frames = _group_by_frame(gt_boxes)
    pred_frames = _group_by_frame(pred_boxes)
    tp = fp = fn = 0
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        gts = gt_frames.get(frame, [])
        preds = pred_frames.get(frame, [])
        candidates = [
            (bbox_iou(g.bbox, p.bbox), gi, pi)
            for gi, g in enumerate(gts)
            for pi, p in enumerate(preds)
        ]
        candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
        used_gt: set[int] = set()
        used_pred: set[int] = set()
        for iou, gi, pi in candidates:
            if iou < iou_threshold:
                break
            if gi in used_gt or pi in used_pred:
                continue
            used_gt.add(gi)
            used_pred.add(pi)
            tp += 1
        fp += len(preds) - len(used_pred)
        fn += len(gts) - len(used_gt)
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return precision, recall


def _group_by_frame(boxes: list[TrackedBox]) -> dict[int, list[TrackedBox]]:
    frames: dict[int, list[TrackedBox]] = defaultdict(list)
    for box in boxes:
        frames[box.frame].append(box)
    return dict(frames)


Matcher = Callable[[np.ndarray, float], list[tuple[int, int]]]


def default_matcher(iou: np.ndarray, alpha: float) -> list[tuple[int, int]]:
    """Match maximising the count of pairs with IoU >= alpha, then total IoU.

    Each eligible pair scores a constant bonus larger than any achievable IoU
    total plus its IoU, so the optimal assignment yields both objectives.
    """
    n, m = iou.shape
    if n == 0 or m == 0:
        return []
    eligible = iou >= alpha
    if not eligible.any():
        return []
    bonus = float(min(n, m)) + 1.0
    score = np.where(eligible, bonus + iou, 0.0)
    rows, cols = linear_sum_assignment(score, maximize=True)
    return [(int(g), int(p)) for g, p in zip(rows, cols) if eligible[g, p]]


def match_frames(
    gt: list[TrackedBox],
    pred: list[TrackedBox],
    alpha: float,
    matcher: Matcher = default_matcher,
) -> FrameMatchSet:
    """Per-frame one-to-one matching of gt and predicted boxes at one threshold."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    result = FrameMatchSet(alpha=alpha)
    gt_frames = _group_by_frame(gt)
    pred_frames = _group_by_frame(pred)
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        gts = gt_frames.get(frame, [])
        preds = pred_frames.get(frame, [])
        iou = np.array(
            [[bbox_iou(g.bbox, p.bbox) for p in preds] for g in gts], dtype=float
        ).reshape(len(gts), len(preds))
        pairs = matcher(iou, alpha)
        matched_g = {g for g, _ in pairs}
        matched_p = {p for _, p in pairs}
        for g, p in pairs:
            result.tp.append(
                TpMatch(frame=frame, gt_id=gts[g].track_id, pred_id=preds[p].track_id, iou=float(iou[g, p]))
            )
        result.fn.extend(g for gi, g in enumerate(gts) if gi not in matched_g)
        result.fp.extend(p for pi, p in enumerate(preds) if pi not in matched_p)
    return result


def hota_alpha(
    gt: list[TrackedBox],
    pred: list[TrackedBox],
    alpha: float,
    matcher: Matcher = default_matcher,
) -> AlphaScores:
    """Localisation, detection, association and combined accuracy at one threshold."""
    matches = match_frames(gt, pred, alpha, matcher)
    return _scores_from_matches(matches, gt, pred)


def _scores_from_matches(
    matches: FrameMatchSet, gt: list[TrackedBox], pred: list[TrackedBox]
) -> AlphaScores:
    n_tp = len(matches.tp)
    n_fp = len(matches.fp)
    n_fn = len(matches.fn)

    if not gt and not pred:
        return AlphaScores(matches.alpha, None, None, None, None, 0, 0, 0)
    if n_tp == 0:
        return AlphaScores(matches.alpha, None, 0.0, None, 0.0, 0, n_fp, n_fn)

    # math.fsum is exactly rounded, so scores do not depend on frame order.
    loca = math.fsum(m.iou for m in matches.tp) / n_tp
    deta = n_tp / (n_tp + n_fn + n_fp)

    pair_counts: dict[tuple[int, int], int] = defaultdict(int)
    for m in matches.tp:
        pair_counts[(m.gt_id, m.pred_id)] += 1
    gt_totals: dict[int, int] = defaultdict(int)
    for box in gt:
        gt_totals[box.track_id] += 1
    pred_totals: dict[int, int] = defaultdict(int)
    for box in pred:
        pred_totals[box.track_id] += 1

    ass_sum = 0.0
    for m in matches.tp:
        tpa = pair_counts[(m.gt_id, m.pred_id)]
        fna = gt_totals[m.gt_id] - tpa
        fpa = pred_totals[m.pred_id] - tpa
        ass_sum += tpa / (tpa + fna + fpa)
    assa = ass_sum / n_tp

    return AlphaScores(
        alpha=matches.alpha,
        loca=loca,
        deta=deta,
        assa=assa,
        hota=float(np.sqrt(deta * assa)),
        tp=n_tp,
        fp=n_fp,
        fn=n_fn,
    )


def hota(
    gt: list[TrackedBox],
    pred: list[TrackedBox],
    matcher: Matcher = default_matcher,
) -> EvalReport:
    """Full report over the 19-threshold grid; IoU matrices are shared across thresholds."""
    report = EvalReport()
    gt_frames = _group_by_frame(gt)
    pred_frames = _group_by_frame(pred)
    frame_data = []
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        gts = gt_frames.get(frame, [])
        preds = pred_frames.get(frame, [])
        iou = np.array(
            [[bbox_iou(g.bbox, p.bbox) for p in preds] for g in gts], dtype=float
        ).reshape(len(gts), len(preds))
        frame_data.append((frame, gts, preds, iou))

    for alpha in ALPHA_GRID:
        matches = FrameMatchSet(alpha=alpha)
        for frame, gts, preds, iou in frame_data:
            pairs = matcher(iou, alpha)
            matched_g = {g for g, _ in pairs}
            matched_p = {p for _, p in pairs}
            for g, p in pairs:
                matches.tp.append(
                    TpMatch(frame=frame, gt_id=gts[g].track_id, pred_id=preds[p].track_id, iou=float(iou[g, p]))
                )
            matches.fn.extend(g for gi, g in enumerate(gts) if gi not in matched_g)
            matches.fp.extend(p for pi, p in enumerate(preds) if pi not in matched_p)
        report.per_alpha.append(_scores_from_matches(matches, gt, pred))

    report.hota = _mean_or_none([s.hota for s in report.per_alpha])
    report.deta = _mean_or_none([s.deta for s in report.per_alpha])
    report.assa = _mean_or_none([s.assa for s in report.per_alpha])
    report.loca = _mean_or_none([s.loca for s in report.per_alpha])
    return report


def _mean_or_none(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return float(np.mean(defined))


@dataclass
class SequenceData:
    """One sequence's evaluation inputs: trajectories plus the frame -> height step map."""

    gt: list[TrackedBox]
    pred: list[TrackedBox]
    frame_steps: dict[int, int]


@dataclass
class StepReport:
    step: int
    report: EvalReport
    actuals: list[int]
    predictions: list[int]


def cumulative_report(sequences: list[SequenceData]) -> list[StepReport]:
    """Evaluate every metric cumulatively per height step, averaged over sequences.

    At step h each sequence contributes its frames from the start through the
    last frame of step h. Counting uses the number of distinct track ids seen
    so far on each side, one (actual, predicted) sample pair per sequence;
    tracking scores are the arithmetic mean of the per-sequence values.
    """
    steps = sorted({s for seq in sequences for s in seq.frame_steps.values()})
    out: list[StepReport] = []
    for step in steps:
        actuals: list[int] = []
        predictions: list[int] = []
        reports: list[EvalReport] = []
        for seq in sequences:
            frames_in = {f for f, s in seq.frame_steps.items() if s <= step}
            last = max(frames_in) if frames_in else -1
            gt_slice = [b for b in seq.gt if b.frame <= last]
            pred_slice = [b for b in seq.pred if b.frame <= last]
            actuals.append(len({b.track_id for b in gt_slice}))
            predictions.append(len({b.track_id for b in pred_slice}))
            reports.append(hota(gt_slice, pred_slice))

        merged = EvalReport()
        if all(a > 0 for a in actuals):
            merged.mpe = mpe(actuals, predictions)
            merged.mape = mape(actuals, predictions)
        merged.hota = _mean_or_none([r.hota for r in reports])
        merged.deta = _mean_or_none([r.deta for r in reports])
        merged.assa = _mean_or_none([r.assa for r in reports])
        merged.loca = _mean_or_none([r.loca for r in reports])
        merged.per_alpha = _average_per_alpha(reports)
        out.append(StepReport(step=step, report=merged, actuals=actuals, predictions=predictions))
    return out


def _average_per_alpha(reports: list[EvalReport]) -> list[AlphaScores]:
    averaged = []
    for k, alpha in enumerate(ALPHA_GRID):
        rows = [r.per_alpha[k] for r in reports if r.per_alpha]
        averaged.append(
            AlphaScores(
                alpha=alpha,
                loca=_mean_or_none([r.loca for r in rows]),
                deta=_mean_or_none([r.deta for r in rows]),
                assa=_mean_or_none([r.assa for r in rows]),
                hota=_mean_or_none([r.hota for r in rows]),
                tp=sum(r.tp for r in rows),
                fp=sum(r.fp for r in rows),
                fn=sum(r.fn for r in rows),
            )
        )
    return averaged
