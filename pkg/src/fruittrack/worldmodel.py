"""Object-centric world model maintained by predict / associate / update.

Tracks hold a Gaussian 3D position, the class and bounding box of their last
associated detection, and a lifecycle status. Each frame the tracker predicts
all tracks forward (static motion model with additive process noise),
associates detections via the Hungarian algorithm on squared Mahalanobis
distances gated at ``TrackerConfig.gate``, fuses matched pairs with a Kalman
update, spawns tentative tracks from leftover detections and drops tentative
tracks that missed. Confirmed tracks are never removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox2D, COV_EPSILON, regularize_covariance
from .perception import Detection

TENTATIVE = "tentative"
CONFIRMED = "confirmed"


@dataclass
class TrackerConfig:
    # 0.95 quantile of the chi-square distribution with 3 degrees of freedom.
    gate: float = 7.82
    n_init: int = 1
    process_noise: float = 1e-6
    init_cov_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.gate <= 0:
            raise ValueError("gate must be positive")
        if self.n_init < 0:
            raise ValueError("n_init must be non-negative")
        if self.process_noise < 0:
            raise ValueError("process_noise must be non-negative")


@dataclass
class Track:
    id: int
    mean: np.ndarray
    cov: np.ndarray
    class_label: str
    bbox: BBox2D
    status: str = TENTATIVE
    consecutive_hits: int = 1
    frames_since_init: int = 0


@dataclass
class Association:
    """Outcome of one frame's data association.

    ``matched`` pairs track ids with detection indices; produced at the
    matrix level (``solve_assignment``) the track slots hold row indices
    instead of ids.
    """

    matched: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


@dataclass
class WorldModel:
    config: TrackerConfig = field(default_factory=TrackerConfig)
    tracks: list[Track] = field(default_factory=list)
    frame_index: int = 0
    next_id: int = 0


def predict(world: WorldModel) -> WorldModel:
    """Advance every track one frame: static mean, inflated covariance."""
    q = world.config.process_noise
    noise = q * np.eye(3)
    for track in world.tracks:
        track.cov = track.cov + noise
        track.frames_since_init += 1
    world.frame_index += 1
    return world


def build_cost_matrix(tracks: list[Track], detections: list[Detection]) -> np.ndarray:
    """Squared Mahalanobis distance of each detection under each track's Gaussian.

    The cost uses the track covariance only; near-singular covariances are
    regularised the same way as :func:`fruittrack.geometry.mahalanobis_sq`.
    """
    n, m = len(tracks), len(detections)
    if n == 0 or m == 0:
        return np.zeros((n, m))
    track_means = np.array([t.mean for t in tracks])
    track_covs = np.array([t.cov for t in tracks])
    det_means = np.array([d.mean for d in detections])

    min_eig = np.linalg.eigvalsh(track_covs)[:, 0]
    needs_reg = min_eig < COV_EPSILON
    if needs_reg.any():
        track_covs = track_covs.copy()
        track_covs[needs_reg] += COV_EPSILON * np.eye(3)

    inv_covs = np.linalg.inv(track_covs)
    diff = det_means[None, :, :] - track_means[:, None, :]
    return np.einsum("tdi,tij,tdj->td", diff, inv_covs, diff)


def solve_assignment(cost: np.ndarray, gate: float) -> Association:
    """Minimum-cost one-to-one assignment with post-hoc gating.

    Entries above the gate are replaced by a uniform sentinel larger than any
    admissible total before solving, so gated pairs are never preferred; any
    assigned pair whose original cost still exceeds the gate is demoted to
    unmatched afterwards. Equal-cost optima are canonicalised towards the
    lexicographically smallest (row, column) pair list.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n == 0 or m == 0:
        return Association(
            matched=[], unmatched_tracks=list(range(n)), unmatched_detections=list(range(m))
        )

    sentinel = (min(n, m) + 1) * max(gate, 1.0) + 1.0
    work = np.where(cost > gate, sentinel, cost)
    rows, cols = linear_sum_assignment(work)
    pairs = sorted((int(i), int(j)) for i, j in zip(rows, cols) if cost[i, j] <= gate)
    pairs = _lex_canonicalize(pairs, cost, gate, n, m)

    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    return Association(
        matched=pairs,
        unmatched_tracks=[i for i in range(n) if i not in matched_rows],
        unmatched_detections=[j for j in range(m) if j not in matched_cols],
    )


def _lex_canonicalize(
    pairs: list[tuple[int, int]], cost: np.ndarray, gate: float, n: int, m: int
) -> list[tuple[int, int]]:
    """Apply cost-preserving exchanges until the sorted pair list is lexicographically minimal.

    Covers swaps between two matched pairs and moves onto unmatched rows or
    columns; every accepted exchange strictly decreases the sorted pair list,
    so the loop terminates.
    """
    pairs = list(pairs)
    changed = True
    while changed:
        changed = False
        matched_rows = {i for i, _ in pairs}
        matched_cols = {j for _, j in pairs}
        for a in range(len(pairs)):
            i1, j1 = pairs[a]
            for b in range(a + 1, len(pairs)):
                i2, j2 = pairs[b]
                if (
                    j2 < j1
                    and cost[i1, j2] <= gate
                    and cost[i2, j1] <= gate
                    and cost[i1, j2] + cost[i2, j1] == cost[i1, j1] + cost[i2, j2]
                ):
                    pairs[a], pairs[b] = (i1, j2), (i2, j1)
                    changed = True
                    break
            if changed:
                break
            for j in range(j1):
                if j not in matched_cols and cost[i1, j] == cost[i1, j1]:
                    pairs[a] = (i1, j)
                    changed = True
                    break
            if changed:
                break
            for i in range(i1):
                if i not in matched_rows and cost[i, j1] == cost[i1, j1] and cost[i, j1] <= gate:
                    pairs[a] = (i, j1)
                    changed = True
                    break
            if changed:
                break
        pairs.sort()
    return pairs


def kalman_update(track: Track, det: Detection) -> Track:
    """Fuse a detection into a track (identity observation model).

    K = P (P + R)^-1, mean += K (z - mean), P <- (I - K) P; the class and
    bounding box are overwritten by the detection's.
    """
    p = np.asarray(track.cov, dtype=float)
    r = np.asarray(det.cov, dtype=float)
    s = regularize_covariance(p + r)
    gain = p @ np.linalg.inv(s)
    track.mean = track.mean + gain @ (det.mean - track.mean)
    new_cov = (np.eye(3) - gain) @ p
    track.cov = 0.5 * (new_cov + new_cov.T)
    track.class_label = det.class_label
    track.bbox = det.bbox
    track.consecutive_hits += 1
    return track


def lifecycle(world: WorldModel, assoc: Association, detections: list[Detection]) -> WorldModel:
    """Spawn, confirm and prune tracks after the frame's updates.

    Unmatched detections spawn tentative tracks; a tentative track with
    ``n_init + 1`` consecutive hits is confirmed (so ``n_init = 0`` confirms
    at spawn); tentative tracks that missed this frame are deleted; confirmed
    tracks are permanent.
    """
    n_init = world.config.n_init
    unmatched_track_ids = set(assoc.unmatched_tracks)

    survivors = []
    for track in world.tracks:
        if track.status == TENTATIVE and track.id in unmatched_track_ids:
            continue
        if track.status == CONFIRMED and track.id in unmatched_track_ids:
            track.consecutive_hits = 0
        if track.status == TENTATIVE and track.consecutive_hits >= n_init + 1:
            track.status = CONFIRMED
        survivors.append(track)
    world.tracks = survivors

    for j in assoc.unmatched_detections:
        det = detections[j]
        track = Track(
            id=world.next_id,
            mean=np.array(det.mean, dtype=float),
            cov=world.config.init_cov_scale * np.array(det.cov, dtype=float),
            class_label=det.class_label,
            bbox=det.bbox,
            status=CONFIRMED if n_init == 0 else TENTATIVE,
            consecutive_hits=1,
            frames_since_init=0,
        )
        world.next_id += 1
        world.tracks.append(track)
    return world


def step(world: WorldModel, detections: list[Detection]) -> tuple[WorldModel, Association]:
    """Run one full tracking cycle and return the id-level association."""
    predict(world)
    cost = build_cost_matrix(world.tracks, detections)
    index_assoc = solve_assignment(cost, world.config.gate)

    assoc = Association(
        matched=[(world.tracks[i].id, j) for i, j in index_assoc.matched],
        unmatched_tracks=[world.tracks[i].id for i in index_assoc.unmatched_tracks],
        unmatched_detections=list(index_assoc.unmatched_detections),
    )
    for i, j in index_assoc.matched:
        kalman_update(world.tracks[i], detections[j])
    lifecycle(world, assoc, detections)
    return world, assoc


def count(world: WorldModel) -> int:
    """Number of confirmed tracks."""
    return sum(1 for t in world.tracks if t.status == CONFIRMED)
