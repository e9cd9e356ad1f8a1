"""Geometric primitives and the three alignment cost terms.

Map-side geometry (lines, planes, triangle frames) lives in the global
frame; current-scan measurements stay in the sensor frame and are moved by
the pose being estimated:

* edge:    ``cross(transform(q, p), line.direction) - line.moment``  (3 rows)
* surface: ``dot(transform(q, p), plane.normal) - plane.distance``   (1 row)
* triangle descriptor: ``log(full_conj(map_frame) * q * current_frame)``
  weighted per block                                                 (6 rows)

The total objective is the sum of squared residual norms, with an optional
Huber loss on the edge and surface blocks (never on descriptor blocks).
Residuals are assembled in correspondence order, so evaluation is
deterministic regardless of how callers parallelize upstream work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dq import (
    DualQuaternion,
    Quaternion,
    _qconj_arr,
    _qmul_arr,
    dq_conjugate,
    dq_mul,
    transform_point,
    transform_points,
)
from .manifold import AmbiguousRotationError, dq_log

__all__ = [
    "PluckerLine",
    "DualPlane",
    "Correspondences",
    "EmptyCorrespondencesError",
    "fit_line",
    "fit_plane",
    "edge_residual",
    "plane_residual",
    "std_residual",
    "residual_vector",
    "total_cost",
    "huber",
]


class EmptyCorrespondencesError(RuntimeError):
    """No usable correspondences; the optimizer must not run."""


@dataclass(frozen=True, eq=False)
class PluckerLine:
    """Line as unit direction plus moment ``m = p x l``."""

    direction: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        m = np.asarray(self.moment, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("line direction must be a unit vector")
        if abs(d @ m) > 1e-9:
            raise ValueError("direction and moment must be orthogonal")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "moment", m)

    @staticmethod
    def from_point_direction(point, direction) -> "PluckerLine":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return PluckerLine(d, np.cross(np.asarray(point, dtype=float), d))

    def as_dual_quaternion(self) -> DualQuaternion:
        return DualQuaternion(
            Quaternion.from_vector(self.direction), Quaternion.from_vector(self.moment)
        )


@dataclass(frozen=True, eq=False)
class DualPlane:
    """Plane as unit normal plus perpendicular distance ``d = n . p``."""

    normal: np.ndarray
    distance: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "distance", float(self.distance))

    def as_dual_quaternion(self) -> DualQuaternion:
        return DualQuaternion(
            Quaternion.from_vector(self.normal), Quaternion(self.distance, 0.0, 0.0, 0.0)
        )


@dataclass
class Correspondences:
    """Stacked correspondence arrays consumed by the residual evaluator.

    Edge and surface points are in the sensor frame; lines, planes, and map
    descriptor frames are in the global frame.  Descriptor frames are stored
    as 8-component dual-quaternion rows.
    """

    edge_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    edge_directions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    edge_moments: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    surf_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    surf_normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    surf_distances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    std_current: np.ndarray = field(default_factory=lambda: np.zeros((0, 8)))
    std_map: np.ndarray = field(default_factory=lambda: np.zeros((0, 8)))

    @staticmethod
    def from_pairs(edge_pairs=(), surface_pairs=(), std_pairs=()) -> "Correspondences":
        """Build from (point, PluckerLine), (point, DualPlane), and
        (current DualQuaternion, map DualQuaternion) pair lists."""
        c = Correspondences()
        if edge_pairs:
            c.edge_points = np.array([p for p, _ in edge_pairs], dtype=float)
            c.edge_directions = np.array([l.direction for _, l in edge_pairs])
            c.edge_moments = np.array([l.moment for _, l in edge_pairs])
        if surface_pairs:
            c.surf_points = np.array([p for p, _ in surface_pairs], dtype=float)
            c.surf_normals = np.array([pl.normal for _, pl in surface_pairs])
            c.surf_distances = np.array([pl.distance for _, pl in surface_pairs])
        if std_pairs:
            c.std_current = np.array([cur.as_array() for cur, _ in std_pairs])
            c.std_map = np.array([m.as_array() for _, m in std_pairs])
        return c

    @property
    def n_edges(self) -> int:
        return len(self.edge_points)

    @property
    def n_surfaces(self) -> int:
        return len(self.surf_points)

    @property
    def n_std(self) -> int:
        return len(self.std_current)

    @property
    def n_blocks(self) -> int:
        return self.n_edges + self.n_surfaces + self.n_std

    @property
    def n_rows(self) -> int:
        return 3 * self.n_edges + self.n_surfaces + 6 * self.n_std

    def is_empty(self) -> bool:
        return self.n_blocks == 0


def _eigh_3x3(points: np.ndarray):
    """Ascending eigenvalues/vectors of the covariance of an (n, 3) set."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered / len(points)
    evals, evecs = np.linalg.eigh(cov)
    return centroid, evals, evecs


def _canonical_direction(d: np.ndarray) -> np.ndarray:
    """Fix the sign so the largest-magnitude component is positive."""
    i = int(np.argmax(np.abs(d)))
    return -d if d[i] < 0.0 else d


def fit_line(neighbors, eig_ratio: float = 3.0) -> PluckerLine | None:
    """Fit a line to a small neighborhood; None if it is not line-like.

    The direction is the principal eigenvector of the covariance; the fit is
    rejected unless the largest eigenvalue exceeds ``eig_ratio`` times the
    middle one.
    """
    pts = np.asarray(neighbors, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError("fit_line needs at least 2 points")
    centroid, evals, evecs = _eigh_3x3(pts)
    if evals[2] <= eig_ratio * evals[1]:
        return None
    d = _canonical_direction(evecs[:, 2])
    d = d / np.linalg.norm(d)
    return PluckerLine(d, np.cross(centroid, d))


def fit_plane(neighbors, inlier_distance: float = 0.05) -> DualPlane | None:
    """Fit a plane to a small neighborhood; None if any point sits off it.

    The normal is the smallest-eigenvalue eigenvector; the perpendicular
    distance sign is canonicalized to ``d >= 0``.
    """
    pts = np.asarray(neighbors, dtype=float)
    if pts.shape[0] < 3:
        raise ValueError("fit_plane needs at least 3 points")
    centroid, evals, evecs = _eigh_3x3(pts)
    n = evecs[:, 0]
    n = n / np.linalg.norm(n)
    d = float(n @ centroid)
    if d < 0.0:
        n, d = -n, -d
    if np.max(np.abs(pts @ n - d)) > inlier_distance:
        return None
    return DualPlane(n, d)


def edge_residual(q: DualQuaternion, p_e, line: PluckerLine) -> np.ndarray:
    """Edge error; its norm is the distance from the moved point to the line."""
    moved = transform_point(q, p_e)
    return np.cross(moved, line.direction) - line.moment


def plane_residual(q: DualQuaternion, p_s, plane: DualPlane) -> float:
    """Signed distance from the moved point to the plane."""
    moved = transform_point(q, p_s)
    return float(moved @ plane.normal - plane.distance)


def std_residual(
    q: DualQuaternion,
    current: DualQuaternion,
    map_frame: DualQuaternion,
    rotation_weight: float = 1.0,
    translation_weight: float = 1.0,
) -> np.ndarray:
    """Tangent-space distance of the descriptor alignment error to identity.

    The error motion is ``full_conj(map_frame) * q * current``; taking its
    log after sign canonicalization makes the residual identical for
    ``map_frame`` and ``-map_frame`` (double cover).
    """
    err = dq_mul(dq_conjugate(map_frame, "full"), dq_mul(q, current))
    v = dq_log(err)
    return np.concatenate([rotation_weight * v.omega, translation_weight * v.nu])


def _std_residual_block(
    q: DualQuaternion, corr: Correspondences, rotation_weight, translation_weight
) -> np.ndarray:
    """All descriptor residuals at once, (n, 6)."""
    n = corr.n_std
    if n == 0:
        return np.zeros((0, 6))
    q8 = np.concatenate([q.primary.as_array(), q.dual.as_array()])
    # full_conj(map) ⊠ q ⊠ current, on (n, 8) rows
    mp = _qconj_arr(corr.std_map[:, :4])
    md = _qconj_arr(corr.std_map[:, 4:])
    qc_p = _qmul_arr(mp, q8[:4])
    qc_d = _qmul_arr(mp, q8[4:]) + _qmul_arr(md, q8[:4])
    ep = _qmul_arr(qc_p, corr.std_current[:, :4])
    ed = _qmul_arr(qc_p, corr.std_current[:, 4:]) + _qmul_arr(qc_d, corr.std_current[:, :4])
    # canonicalize sign, then log (same series/thresholds as manifold.dq_log)
    sign = np.where(ep[:, 0] < 0.0, -1.0, 1.0)[:, None]
    ep = ep * sign
    ed = ed * sign
    w = ep[:, 0]
    im = ep[:, 1:]
    s_sq = np.einsum("ij,ij->i", im, im)
    s = np.sqrt(s_sq)
    theta = 2.0 * np.arctan2(s, w)
    if np.any(math.pi - theta < 1e-6):
        raise AmbiguousRotationError("descriptor error rotation within 1e-6 of pi")
    small = s < 1e-6
    w_safe = np.where(np.abs(w) > 0.5, w, 1.0)  # small branch only runs near w=1
    r2 = s_sq / (w_safe * w_safe)
    f_small = (2.0 / w_safe) * (1.0 - r2 / 3.0 + r2 * r2 / 5.0)
    f_large = theta / np.where(small, 1.0, s)
    f = np.where(small, f_small, f_large)
    omega = f[:, None] * im
    t4 = _qmul_arr(2.0 * ed, _qconj_arr(ep))
    t = t4[:, 1:]
    theta_sq = theta * theta
    small_t = theta < 1e-6
    c_small = 1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0
    denom = 2.0 * (1.0 - np.cos(theta))
    c_large = (1.0 - theta * np.sin(theta) / np.where(small_t, 1.0, denom)) / np.where(
        small_t, 1.0, theta_sq
    )
    c = np.where(small_t, c_small, c_large)
    nu = t - 0.5 * np.cross(omega, t) + c[:, None] * np.cross(omega, np.cross(omega, t))
    return np.hstack([rotation_weight * omega, translation_weight * nu])


def residual_blocks(
    q: DualQuaternion,
    corr: Correspondences,
    rotation_weight: float = 1.0,
    translation_weight: float = 1.0,
):
    """Raw residuals per family: edges (n,3), surfaces (n,), descriptors (n,6)."""
    if corr.n_edges:
        moved = transform_points(q, corr.edge_points)
        edge = np.cross(moved, corr.edge_directions) - corr.edge_moments
    else:
        edge = np.zeros((0, 3))
    if corr.n_surfaces:
        moved = transform_points(q, corr.surf_points)
        surf = np.einsum("ij,ij->i", moved, corr.surf_normals) - corr.surf_distances
    else:
        surf = np.zeros(0)
    std = _std_residual_block(q, corr, rotation_weight, translation_weight)
    return edge, surf, std


def huber(norm_sq: np.ndarray, delta: float) -> np.ndarray:
    """Huber-transformed squared norm: quadratic inside ``delta``, linear out."""
    a = np.sqrt(norm_sq)
    return np.where(a <= delta, norm_sq, 2.0 * delta * a - delta * delta)


def irls_weights(norms: np.ndarray, delta: float) -> np.ndarray:
    """Square-root reweighting factors that realize the Huber loss."""
    with np.errstate(divide="ignore"):
        w = np.where(norms <= delta, 1.0, delta / np.where(norms > 0, norms, 1.0))
    return np.sqrt(w)


def residual_vector(
    q: DualQuaternion,
    corr: Correspondences,
    edge_weights: np.ndarray | None = None,
    surf_weights: np.ndarray | None = None,
    rotation_weight: float = 1.0,
    translation_weight: float = 1.0,
) -> np.ndarray:
    """Stacked residual vector (edges, then surfaces, then descriptors)."""
    edge, surf, std = residual_blocks(q, corr, rotation_weight, translation_weight)
    if edge_weights is not None and len(edge):
        edge = edge * edge_weights[:, None]
    if surf_weights is not None and len(surf):
        surf = surf * surf_weights
    return np.concatenate([edge.ravel(), surf, std.ravel()])


def total_cost(
    q: DualQuaternion,
    corr: Correspondences,
    use_robust_loss: bool = False,
    huber_delta: float = 0.5,
    rotation_weight: float = 1.0,
    translation_weight: float = 1.0,
) -> float:
    """Sum of squared residual norms, optionally Huber on edge/surface blocks."""
    if corr.is_empty():
        raise EmptyCorrespondencesError("no correspondences to evaluate")
    edge, surf, std = residual_blocks(q, corr, rotation_weight, translation_weight)
    edge_sq = np.einsum("ij,ij->i", edge, edge) if len(edge) else np.zeros(0)
    surf_sq = surf * surf
    if use_robust_loss:
        edge_cost = float(np.sum(huber(edge_sq, huber_delta)))
        surf_cost = float(np.sum(huber(surf_sq, huber_delta)))
    else:
        edge_cost = float(np.sum(edge_sq))
        surf_cost = float(np.sum(surf_sq))
    std_cost = float(np.einsum("ij,ij->", std, std)) if len(std) else 0.0
    return edge_cost + surf_cost + std_cost
