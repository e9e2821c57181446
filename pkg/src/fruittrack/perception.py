"""Turns per-frame 2D detections with partial point clouds into 3D detections.

Each raw detection carries the 3D points its mask selected from the
structured cloud (camera frame). The pipeline filters by confidence, fits a
sphere to the points, validates centre and radius, transforms the resulting
Gaussian into the robot frame and keeps only detections inside the working
volume around the plant row. Failure modes are tallied per height step:
detections with no points at all (RD) vanish, detections whose sphere fit is
rejected (NSF) fall back to the point centroid but keep flowing downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox2D, Pose, fit_sphere, transform_gaussian


@dataclass
class RawDetection2D:
    """One 2D detector output plus its mask-selected camera-frame points."""

    class_label: str
    confidence: float
    bbox: BBox2D
    points: np.ndarray  # (N, 3) camera frame, possibly empty

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)


@dataclass
class Detection:
    """A 3D detection in the robot frame, ready for data association."""

    mean: np.ndarray
    cov: np.ndarray
    class_label: str
    bbox: BBox2D
    radius: float = 0.0
    sphere_valid: bool = False


@dataclass
class PerceptionConfig:
    confidence_threshold: float = 0.5
    radius_min: float = 0.01
    radius_max: float = 0.05
    # Maximum distance (m) a fitted centre may sit from its point centroid
    # before the fit counts as degenerate.
    center_max_offset: float = 0.10
    measurement_sigma: float = 0.005
    x_min: float = -0.2
    x_max: float = 0.2
    y_min: float = -0.8
    z_min: float = 0.4

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if not self.radius_min < self.radius_max:
            raise ValueError("radius_min must be below radius_max")
        if self.measurement_sigma <= 0:
            raise ValueError("measurement_sigma must be positive")


@dataclass
class StepCounts:
    total: int = 0
    rejected_no_points: int = 0
    nonvalid_sphere: int = 0


@dataclass
class PreprocStats:
    """Per-height-step tallies of pre-processing outcomes.

    One accumulator per worker; accumulators for frames processed in
    parallel can be combined with :meth:`merge`.
    """

    steps: dict[int, StepCounts] = field(default_factory=dict)

    def _counts(self, height_step: int) -> StepCounts:
        return self.steps.setdefault(height_step, StepCounts())

    def add_total(self, height_step: int) -> None:
        self._counts(height_step).total += 1

    def add_rejected(self, height_step: int) -> None:
        self._counts(height_step).rejected_no_points += 1

    def add_nonvalid(self, height_step: int) -> None:
        self._counts(height_step).nonvalid_sphere += 1

    def merge(self, other: "PreprocStats") -> None:
        for step, counts in other.steps.items():
            mine = self._counts(step)
            mine.total += counts.total
            mine.rejected_no_points += counts.rejected_no_points
            mine.nonvalid_sphere += counts.nonvalid_sphere


def extract_detections(
    raw: list[RawDetection2D],
    pose: Pose,
    cfg: PerceptionConfig,
    stats: PreprocStats | None = None,
    height_step: int = 1,
) -> list[Detection]:
    """Build robot-frame 3D detections from one frame's raw detections.

    Per raw detection: drop below-confidence entries; drop point-less entries
    (counted as RD); fit a sphere and validate its radius against
    [radius_min, radius_max] and its centre against the point centroid,
    falling back to the centroid on failure (counted as NSF); attach an
    isotropic measurement covariance; transform into the robot frame; keep
    only detections inside the working volume. Input order is preserved.
    """
    if stats is None:
        stats = PreprocStats()
    sigma_sq = cfg.measurement_sigma**2
    cov_cam = sigma_sq * np.eye(3)

    out: list[Detection] = []
    for det in raw:
        if det.confidence < cfg.confidence_threshold:
            continue
        stats.add_total(height_step)
        if det.points.shape[0] == 0:
            stats.add_rejected(height_step)
            continue

        fit = fit_sphere(det.points)
        centroid = det.points.mean(axis=0)
        valid = (
            fit.valid_geometry
            and cfg.radius_min <= fit.radius <= cfg.radius_max
            and float(np.linalg.norm(fit.center - centroid)) <= cfg.center_max_offset
        )
        if valid:
            mean_cam = fit.center
            radius = fit.radius
        else:
            stats.add_nonvalid(height_step)
            mean_cam = centroid
            radius = 0.0

        mean_rob, cov_rob = transform_gaussian(mean_cam, cov_cam, pose)
        out.append(
            Detection(
                mean=mean_rob,
                cov=cov_rob,
                class_label=det.class_label,
                bbox=det.bbox,
                radius=radius,
                sphere_valid=valid,
            )
        )
    return workspace_filter(out, cfg)


def workspace_filter(dets: list[Detection], cfg: PerceptionConfig) -> list[Detection]:
    """Keep detections inside the row-aligned working volume (robot frame)."""
    return [
        d
        for d in dets
        if cfg.x_min <= d.mean[0] <= cfg.x_max
        and d.mean[1] >= cfg.y_min
        and d.mean[2] >= cfg.z_min
    ]


def stats_report(stats: PreprocStats) -> list[tuple[int, float, float]]:
    """Per-step (height step, RD%, NSF%) rows; steps with no detections are omitted."""
    rows = []
    for step in sorted(stats.steps):
        counts = stats.steps[step]
        if counts.total == 0:
            continue
        rd = 100.0 * counts.rejected_no_points / counts.total
        nsf = 100.0 * counts.nonvalid_sphere / counts.total
        rows.append((step, rd, nsf))
    return rows


def format_stats_table(stats: PreprocStats) -> str:
    """Aligned text table of per-step RD/NSF percentages."""
    lines = [f"{'step':>4}  {'total':>6}  {'RD%':>6}  {'NSF%':>6}"]
    for step, rd, nsf in stats_report(stats):
        total = stats.steps[step].total
        lines.append(f"{step:>4}  {total:>6}  {rd:>6.2f}  {nsf:>6.2f}")
    return "\n".join(lines)
