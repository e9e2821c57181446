"""Geometric kernels shared by the perception, tracking and simulation layers.

Conventions: 3D positions are metres, right-handed frames. The camera frame
follows the usual computer-vision convention (x right, y down, z along the
optical axis). Bounding boxes are pixel-space, top-left origin, continuous
(no +1 pixel padding in areas).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Conditioning limit of the sphere-fit design matrix beyond which the data is
# treated as rank deficient (coplanar/collinear point sets).
SPHERE_FIT_MAX_CONDITION = 1e8

# Floor (m^2) below which a covariance eigenvalue counts as singular; the same
# amount is added to the diagonal before inversion.
COV_EPSILON = 1e-9

_POSE_TOL = 1e-9


@dataclass
class BBox2D:
    """Axis-aligned pixel box, top-left corner plus size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w < 0 or self.h < 0:
            raise ValueError("box size must be non-negative")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]


@dataclass
class Pose:
    """Rigid transform mapping camera-frame coordinates into the robot frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("invalid pose: rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=_POSE_TOL):
            raise ValueError("invalid pose: rotation not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _POSE_TOL:
            raise ValueError("invalid pose: rotation determinant != +1")
        self.rotation = r
        self.translation = t

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


@dataclass
class SphereFit:
    """Result of fitting a sphere to a point set (camera frame)."""

    center: np.ndarray
    radius: float
    rms_residual: float
    valid_geometry: bool


def fit_sphere(points) -> SphereFit:
    """Fit a sphere to 3D points by algebraic linear least squares.

    Minimises sum((|p - c|^2 - r^2)^2), which is linear in (c, r^2 - |c|^2):
    each point contributes the row 2*p . c + k = |p|^2. Degenerate inputs
    (fewer than 4 points, or a design matrix with condition number above
    ``SPHERE_FIT_MAX_CONDITION``) fall back to the centroid with radius 0 and
    ``valid_geometry`` False.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("no points")

    centroid = pts.mean(axis=0)
    if pts.shape[0] < 4:
        return _centroid_fallback(pts, centroid)

    a = np.hstack([2.0 * pts, np.ones((pts.shape[0], 1))])
    b = np.einsum("ij,ij->i", pts, pts)
    solution, _, rank, sv = np.linalg.lstsq(a, b, rcond=None)
    if rank < 4 or sv[-1] <= 0 or sv[0] / sv[-1] > SPHERE_FIT_MAX_CONDITION:
        return _centroid_fallback(pts, centroid)

    center = solution[:3]
    r_sq = solution[3] + center @ center
    if r_sq < 0:
        return _centroid_fallback(pts, centroid)
    radius = float(np.sqrt(r_sq))
    residual = _rms_residual(pts, center, radius)
    return SphereFit(center=center, radius=radius, rms_residual=residual, valid_geometry=True)


def _centroid_fallback(pts: np.ndarray, centroid: np.ndarray) -> SphereFit:
    return SphereFit(
        center=centroid,
        radius=0.0,
        rms_residual=_rms_residual(pts, centroid, 0.0),
        valid_geometry=False,
    )


def _rms_residual(pts: np.ndarray, center: np.ndarray, radius: float) -> float:
    d = np.linalg.norm(pts - center, axis=1) - radius
    return float(np.sqrt(np.mean(d * d)))


def transform_gaussian(mean, cov, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Push a Gaussian (mean, cov) through a rigid transform.

    mean' = R mean + t and cov' = R cov R^T; the result is re-symmetrised to
    absorb floating-point drift.
    """
    mean = np.asarray(mean, dtype=float).reshape(3)
    cov = np.asarray(cov, dtype=float).reshape(3, 3)
    r = pose.rotation
    new_mean = r @ mean + pose.translation
    new_cov = r @ cov @ r.T
    new_cov = 0.5 * (new_cov + new_cov.T)
    return new_mean, new_cov


def regularize_covariance(cov: np.ndarray, epsilon: float = COV_EPSILON) -> np.ndarray:
    """Add epsilon*I when the smallest eigenvalue drops below epsilon."""
    cov = np.asarray(cov, dtype=float).reshape(3, 3)
    if np.linalg.eigvalsh(cov)[0] < epsilon:
        cov = cov + epsilon * np.eye(3)
    return cov


def mahalanobis_sq(x, mean, cov) -> float:
    """Squared Mahalanobis distance of ``x`` from a Gaussian (mean, cov)."""
    x = np.asarray(x, dtype=float).reshape(3)
    mean = np.asarray(mean, dtype=float).reshape(3)
    cov = regularize_covariance(cov)
    diff = x - mean
    return float(diff @ np.linalg.solve(cov, diff))


def bbox_iou(a: BBox2D, b: BBox2D) -> float:
    """Intersection over union of two boxes; 0 when the union has no area."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    inter = max(0.0, ix2 - ix) * max(0.0, iy2 - iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def project_sphere(center_cam, radius: float, fx: float, fy: float, cx: float, cy: float) -> BBox2D:
    """Bounding box of a sphere under a pinhole camera.

    Approximates the projected outline by the circle of radius fx*r/z,
    fy*r/z centred on the projected centre; at working distances well beyond
    the sphere radius this is within a fraction of a pixel of the exact conic.
    """
    c = np.asarray(center_cam, dtype=float).reshape(3)
    z = c[2]
    if z <= radius:
        raise ValueError("not projectable")
    u = fx * c[0] / z + cx
    v = fy * c[1] / z + cy
    half_w = fx * radius / z
    half_h = fy * radius / z
    return BBox2D(x=u - half_w, y=v - half_h, w=2.0 * half_w, h=2.0 * half_h)
