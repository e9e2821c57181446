"""Seeded synthetic greenhouse scenes and multi-view detection streams.

Fruits are spherical, grouped in trusses along a vertical stem line. The
camera sweeps a semi-cylinder around the stem: a configurable number of
height levels, each a semicircle of viewpoints aimed at the stem axis. Every
viewpoint yields a frame with raw detections (jittered bounding boxes plus
noisy partial point clouds of the camera-facing surface), false-positive
detections, and ground-truth annotations.

A fruit inside the camera frustum is detected with a height-dependent
probability, halved when its line of sight passes close to a nearer fruit.
Detected fruits are also the annotated ones: the ground-truth boxes of a
frame list exactly the fruits a human annotator could see in the image,
while ``Frame.in_frustum_ids`` records every fruit in view regardless of
visibility so detector recall can be tallied against it.

All randomness flows from ``numpy.random.default_rng`` seeded per frame, so
sequences are bit-reproducible and frames can be rendered in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox2D, Pose, project_sphere
from .metrics import TrackedBox
from .perception import RawDetection2D

_SCENE_STREAM = 0
_FRAME_STREAM = 1


@dataclass
class Fruit:
    id: int
    center: np.ndarray
    radius: float


@dataclass
class ScenarioConfig:
    # Scene layout: either a flat fruit count (grouped into trusses
    # automatically) or an explicit number of trusses.
    n_fruits: int | None = 8
    n_trusses: int | None = None
    truss_size_min: int = 3
    truss_size_max: int = 6
    spacing_min: float = 0.03
    spacing_max: float = 0.08
    fruit_radius_min: float = 0.015
    fruit_radius_max: float = 0.035
    stem_x: float = 0.0
    stem_y: float = -0.6
    fruit_z_min: float = 0.45
    fruit_z_max: float = 1.9

    # Camera path.
    heights: int = 10
    viewpoints_per_height: int = 10
    path_radius: float = 0.30
    path_z_min: float = 0.5
    path_z_max: float = 1.85

    # Detection model.
    det_prob_start: float = 0.95
    det_prob_end: float = 0.95
    occlusion_radius_scale: float = 1.5
    fp_rate: float = 0.0
    point_noise_start: float = 0.0
    point_noise_end: float = 0.0
    cloud_dropout_start: float = 0.0
    cloud_dropout_end: float = 0.0
    bbox_jitter_px: float = 0.0
    n_points: int = 150
    tp_confidence_mean: float = 0.85
    tp_confidence_sigma: float = 0.1
    fp_confidence_mean: float = 0.55
    fp_confidence_sigma: float = 0.15

    # Pinhole intrinsics.
    image_width: int = 960
    image_height: int = 540
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 480.0
    cy: float = 270.0

    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_fruits is None and self.n_trusses is None:
            raise ValueError("one of n_fruits or n_trusses is required")
        for name in ("det_prob_start", "det_prob_end", "cloud_dropout_start", "cloud_dropout_end"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.det_prob_end > self.det_prob_start:
            raise ValueError("detection probability profile must be non-increasing")
        if self.heights <= 0 or self.viewpoints_per_height <= 0:
            raise ValueError("path parameters must be positive")
        if self.path_radius <= 0:
            raise ValueError("path parameters must be positive")
        if self.fp_rate < 0 or self.n_points <= 0:
            raise ValueError("fp_rate must be >= 0 and n_points positive")

    def det_prob(self, height_step: int) -> float:
        if self.heights == 1:
            return self.det_prob_start
        frac = (height_step - 1) / (self.heights - 1)
        return self.det_prob_start + frac * (self.det_prob_end - self.det_prob_start)

    def point_noise(self, height_step: int) -> float:
        if self.heights == 1:
            return self.point_noise_start
        frac = (height_step - 1) / (self.heights - 1)
        return self.point_noise_start + frac * (self.point_noise_end - self.point_noise_start)

    def cloud_dropout(self, height_step: int) -> float:
        if self.heights == 1:
            return self.cloud_dropout_start
        frac = (height_step - 1) / (self.heights - 1)
        return self.cloud_dropout_start + frac * (self.cloud_dropout_end - self.cloud_dropout_start)


@dataclass
class Frame:
    """One viewpoint: pose, raw detections and ground-truth annotations."""

    index: int
    height_step: int
    pose: Pose
    detections: list[RawDetection2D] = field(default_factory=list)
    ground_truth: list[tuple[int, BBox2D]] = field(default_factory=list)
    in_frustum_ids: list[int] = field(default_factory=list)


def generate_scene(cfg: ScenarioConfig, seed: int | None = None) -> list[Fruit]:
    """Place fruits in trusses along the stem; deterministic under the seed."""
    rng = np.random.default_rng([cfg.seed if seed is None else seed, _SCENE_STREAM])
    sizes = _truss_sizes(cfg, rng)

    fruits: list[Fruit] = []
    z_slots = np.linspace(cfg.fruit_z_min + 0.05, cfg.fruit_z_max - 0.05, max(len(sizes), 2))
    for truss_idx, size in enumerate(sizes):
        center = np.array(
            [
                cfg.stem_x + rng.uniform(-0.04, 0.04),
                cfg.stem_y + rng.uniform(-0.04, 0.04),
                float(z_slots[truss_idx]) + rng.uniform(-0.02, 0.02),
            ]
        )
        _place_truss(cfg, rng, center, size, fruits)
    return fruits


def _truss_sizes(cfg: ScenarioConfig, rng: np.random.Generator) -> list[int]:
    if cfg.n_trusses is not None:
        return [
            int(rng.integers(cfg.truss_size_min, cfg.truss_size_max + 1))
            for _ in range(cfg.n_trusses)
        ]
    remaining = int(cfg.n_fruits)
    sizes = []
    while remaining > 0:
        take = min(remaining, int(rng.integers(cfg.truss_size_min, cfg.truss_size_max + 1)))
        sizes.append(take)
        remaining -= take
    return sizes


def _place_truss(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    center: np.ndarray,
    size: int,
    fruits: list[Fruit],
) -> None:
    """Grow one cluster in place, appending to the global fruit list."""
    cluster: list[Fruit] = []
    for _ in range(size):
        radius = rng.uniform(cfg.fruit_radius_min, cfg.fruit_radius_max)
        for _ in range(200):
            if not cluster:
                pos = center.copy()
            else:
                anchor = cluster[int(rng.integers(len(cluster)))]
                lo = max(cfg.spacing_min, anchor.radius + radius + 0.002)
                if lo > cfg.spacing_max:
                    continue
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                pos = anchor.center + rng.uniform(lo, cfg.spacing_max) * direction
            if not _pos_ok(cfg, pos, radius, fruits):
                continue
            fruit = Fruit(id=len(fruits), center=pos, radius=radius)
            cluster.append(fruit)
            fruits.append(fruit)
            break
        else:
            raise ValueError("infeasible layout: could not place fruit without overlap")


def _pos_ok(cfg: ScenarioConfig, pos: np.ndarray, radius: float, others: list[Fruit]) -> bool:
    if not (-0.2 <= pos[0] <= 0.2 and pos[1] >= -0.8 and pos[2] >= 0.4):
        return False
    if not cfg.fruit_z_min <= pos[2] <= cfg.fruit_z_max:
        return False
    for other in others:
        d = float(np.linalg.norm(pos - other.center))
        if d < max(cfg.spacing_min, radius + other.radius + 0.002):
            return False
    return True


def camera_path(cfg: ScenarioConfig) -> list[Pose]:
    """Viewpoint poses: per height level, a semicircle aimed at the stem axis.

    Cameras sit on a semicircle of ``path_radius`` around the stem axis point
    of that height and look straight at it; levels are ordered bottom-up.
    """
    poses = []
    z_levels = (
        np.linspace(cfg.path_z_min, cfg.path_z_max, cfg.heights)
        if cfg.heights > 1
        else np.array([cfg.path_z_min])
    )
    angles = (
        np.linspace(-math.pi / 2, math.pi / 2, cfg.viewpoints_per_height)
        if cfg.viewpoints_per_height > 1
        else np.array([0.0])
    )
    for z in z_levels:
        target = np.array([cfg.stem_x, cfg.stem_y, float(z)])
        for theta in angles:
            eye = target + cfg.path_radius * np.array([math.sin(theta), math.cos(theta), 0.0])
            poses.append(_look_at(eye, target))
    return poses


def _look_at(eye: np.ndarray, target: np.ndarray) -> Pose:
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    # Camera x from forward x world-up keeps image y pointing down in world z.
    x_cam = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    x_cam = x_cam / np.linalg.norm(x_cam)
    y_cam = np.cross(forward, x_cam)
    rotation = np.column_stack([x_cam, y_cam, forward])
    return Pose(rotation=rotation, translation=eye)


def render_frame(
    scene: list[Fruit],
    pose: Pose,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    frame_index: int = 0,
    height_step: int = 1,
) -> Frame:
    """Render one viewpoint into detections and annotations."""
    inv = pose.inverse()
    eye = pose.translation
    sigma_pc = cfg.point_noise(height_step)
    p_det = cfg.det_prob(height_step)

    frame = Frame(index=frame_index, height_step=height_step, pose=pose)
    for fruit in scene:
        center_cam = inv.apply(fruit.center)
        if center_cam[2] <= fruit.radius:
            continue
        bbox = project_sphere(center_cam, fruit.radius, cfg.fx, cfg.fy, cfg.cx, cfg.cy)
        u = bbox.x + bbox.w / 2.0
        v = bbox.y + bbox.h / 2.0
        if not (0.0 <= u < cfg.image_width and 0.0 <= v < cfg.image_height):
            continue
        frame.in_frustum_ids.append(fruit.id)

        p = p_det
        if _is_occluded(fruit, scene, eye, cfg.occlusion_radius_scale):
            p *= 0.5
        if rng.random() >= p:
            continue

        frame.ground_truth.append((fruit.id, bbox))
        points = _surface_points(fruit, eye, inv, sigma_pc, cfg.n_points, rng)
        dropout = cfg.cloud_dropout(height_step)
        if dropout > 0.0 and rng.random() < dropout:
            points = np.zeros((0, 3))
        confidence = _clipped_normal(rng, cfg.tp_confidence_mean, cfg.tp_confidence_sigma)
        frame.detections.append(
            RawDetection2D(
                class_label="fruit",
                confidence=confidence,
                bbox=_jitter_bbox(bbox, cfg.bbox_jitter_px, rng),
                points=points,
            )
        )

    _add_false_positives(frame, cfg, inv, rng)
    return frame


def _is_occluded(fruit: Fruit, scene: list[Fruit], eye: np.ndarray, scale: float) -> bool:
    """Line of sight passes within ``scale`` radii of a nearer fruit."""
    los = fruit.center - eye
    dist = float(np.linalg.norm(los))
    direction = los / dist
    for other in scene:
        if other.id == fruit.id:
            continue
        rel = other.center - eye
        along = float(rel @ direction)
        if along <= 0.0 or along >= dist:
            continue
        off_axis = float(np.linalg.norm(rel - along * direction))
        if off_axis < scale * other.radius:
            return True
    return False


def _surface_points(
    fruit: Fruit,
    eye: np.ndarray,
    inv: Pose,
    sigma: float,
    n_points: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample the camera-facing hemisphere of the fruit, in the camera frame."""
    toward_cam = eye - fruit.center
    toward_cam = toward_cam / np.linalg.norm(toward_cam)
    dirs = rng.normal(size=(n_points, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    flip = dirs @ toward_cam < 0.0
    dirs[flip] = -dirs[flip]
    points = fruit.center + fruit.radius * dirs
    if sigma > 0.0:
        noise = rng.normal(scale=sigma, size=(n_points, 3))
        norms = np.linalg.norm(noise, axis=1, keepdims=True)
        cap = 6.0 * sigma
        over = norms[:, 0] > cap
        if over.any():
            noise[over] *= cap / norms[over]
        points = points + noise
    return np.array([inv.apply(p) for p in points])


def _jitter_bbox(bbox: BBox2D, sigma_px: float, rng: np.random.Generator) -> BBox2D:
    if sigma_px <= 0.0:
        return BBox2D(bbox.x, bbox.y, bbox.w, bbox.h)
    cap = 6.0 * sigma_px
    dx, dy, dw, dh = np.clip(rng.normal(scale=sigma_px, size=4), -cap, cap)
    return BBox2D(
        x=bbox.x + dx,
        y=bbox.y + dy,
        w=max(1.0, bbox.w + dw),
        h=max(1.0, bbox.h + dh),
    )


def _clipped_normal(rng: np.random.Generator, mean: float, sigma: float) -> float:
    return float(np.clip(rng.normal(mean, sigma), 0.0, 1.0))


def _add_false_positives(
    frame: Frame, cfg: ScenarioConfig, inv: Pose, rng: np.random.Generator
) -> None:
    n_fp = int(rng.poisson(cfg.fp_rate)) if cfg.fp_rate > 0 else 0
    for _ in range(n_fp):
        for _ in range(50):
            # Spread around and beyond the working volume so some false
            # positives survive the workspace filter and some do not.
            center = np.array(
                [
                    rng.uniform(-0.35, 0.35),
                    rng.uniform(-0.95, -0.3),
                    rng.uniform(0.3, cfg.fruit_z_max + 0.2),
                ]
            )
            radius = rng.uniform(cfg.fruit_radius_min, cfg.fruit_radius_max)
            center_cam = inv.apply(center)
            if center_cam[2] <= radius:
                continue
            bbox = project_sphere(center_cam, radius, cfg.fx, cfg.fy, cfg.cx, cfg.cy)
            u = bbox.x + bbox.w / 2.0
            v = bbox.y + bbox.h / 2.0
            if not (0.0 <= u < cfg.image_width and 0.0 <= v < cfg.image_height):
                continue
            ghost = Fruit(id=-1, center=center, radius=radius)
            points = _surface_points(
                ghost, frame.pose.translation, inv, max(cfg.point_noise(frame.height_step), 1e-4), cfg.n_points, rng
            )
            frame.detections.append(
                RawDetection2D(
                    class_label="fruit",
                    confidence=_clipped_normal(rng, cfg.fp_confidence_mean, cfg.fp_confidence_sigma),
                    bbox=_jitter_bbox(bbox, cfg.bbox_jitter_px, rng),
                    points=points,
                )
            )
            break


def simulate_sequence(
    cfg: ScenarioConfig, seed: int | None = None
) -> tuple[list[Frame], list[Fruit], list[TrackedBox]]:
    """Generate the full viewpoint sweep for one scene.

    Returns the frames, the ground-truth fruits, and per-frame ground-truth
    trajectory records (track id = fruit id).
    """
    seed = cfg.seed if seed is None else seed
    scene = generate_scene(cfg, seed)
    poses = camera_path(cfg)
    frames = []
    gt_tracks: list[TrackedBox] = []
    for index, pose in enumerate(poses):
        height_step = index // cfg.viewpoints_per_height + 1
        rng = np.random.default_rng([seed, _FRAME_STREAM, index])
        frame = render_frame(scene, pose, cfg, rng, frame_index=index, height_step=height_step)
        frames.append(frame)
        gt_tracks.extend(
            TrackedBox(frame=index, track_id=fid, bbox=bbox) for fid, bbox in frame.ground_truth
        )
    return frames, scene, gt_tracks
