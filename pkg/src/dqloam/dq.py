"""Quaternion and dual-quaternion algebra for rigid motions.

Conventions, fixed once here for the whole package:

* Quaternion storage order is ``(w, x, y, z)`` and products use the Hamilton
  convention ``i*j = k`` (so ``i^2 = j^2 = k^2 = ijk = -1``).
* Points, directions, and normals embed as pure quaternions (``w == 0``).
* A rigid motion with rotation ``r`` and translation ``t`` is the unit dual
  quaternion ``r + eps * (1/2) * t * r``; points transform through the
  sandwich ``q * (1 + eps p) * real_conjugate(q)``.
* Unit quaternions produced by constructors here are canonicalized to
  ``w >= 0``.  ``q`` and ``-q`` encode the same motion, so comparisons that
  must be blind to that sign go through :func:`dq_distance`.

Everything in this module is an immutable value and every operation is a
pure function over 64-bit floats with a fixed evaluation order, so results
are bit-reproducible and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Quaternion",
    "DualQuaternion",
    "RigidTransform",
    "quat_mul",
    "quat_cross",
    "dq_mul",
    "dq_conjugate",
    "dq_normalize",
    "dq_distance",
    "to_unit_dq",
    "from_unit_dq",
    "transform_point",
    "transform_points",
    "transform_direction",
]

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Quaternion:
    """A quaternion ``w + x*i + y*j + z*k``."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def zero() -> "Quaternion":
        return Quaternion(0.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_vector(v) -> "Quaternion":
        """Embed a 3-vector as a pure quaternion (``w == 0`` exactly)."""
        return Quaternion(0.0, float(v[0]), float(v[1]), float(v[2]))

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Quaternion":
        """Unit quaternion rotating by ``angle`` radians about ``axis``."""
        ax = np.asarray(axis, dtype=float)
        n = math.sqrt(ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2])
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        half = 0.5 * angle
        s = math.sin(half) / n
        return Quaternion(math.cos(half), s * ax[0], s * ax[1], s * ax[2]).canonical()

    @staticmethod
    def from_rotation_matrix(m) -> "Quaternion":
        """Unit quaternion of a 3x3 rotation matrix (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = Quaternion(
                0.25 * s,
                (m[2, 1] - m[1, 2]) / s,
                (m[0, 2] - m[2, 0]) / s,
                (m[1, 0] - m[0, 1]) / s,
            )
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = Quaternion(
                (m[2, 1] - m[1, 2]) / s,
                0.25 * s,
                (m[0, 1] + m[1, 0]) / s,
                (m[0, 2] + m[2, 0]) / s,
            )
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = Quaternion(
                (m[0, 2] - m[2, 0]) / s,
                (m[0, 1] + m[1, 0]) / s,
                0.25 * s,
                (m[1, 2] + m[2, 1]) / s,
            )
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = Quaternion(
                (m[1, 0] - m[0, 1]) / s,
                (m[0, 2] + m[2, 0]) / s,
                (m[1, 2] + m[2, 1]) / s,
                0.25 * s,
            )
        return q.normalized().canonical()

    def vec(self) -> np.ndarray:
        """Imaginary part as a 3-vector."""
        return np.array([self.x, self.y, self.z])

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @staticmethod
    def from_array(a) -> "Quaternion":
        return Quaternion(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def is_pure(self) -> bool:
        return self.w == 0.0

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "Quaternion") -> float:
        return (
            self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def scaled(self, s: float) -> "Quaternion":
        return Quaternion(self.w * s, self.x * s, self.y * s, self.z * s)

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(
            self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z
        )

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(
            self.w - other.w, self.x - other.x, self.y - other.y, self.z - other.z
        )

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero quaternion")
        return self.scaled(1.0 / n)

    def canonical(self) -> "Quaternion":
        """Flip sign so ``w >= 0``; only meaningful for rotation quaternions."""
        return -self if self.w < 0.0 else self

    def rotate_vector(self, v) -> np.ndarray:
        """Rotate a 3-vector by this unit quaternion (``q v q*``)."""
        p = quat_mul(quat_mul(self, Quaternion.from_vector(v)), self.conjugate())
        return np.array([p.x, p.y, p.z])

    def to_rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ]
        )


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a * b`` (non-commutative)."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def quat_cross(a: Quaternion, b: Quaternion) -> Quaternion:
    """Cross product of two pure quaternions, ``(a*b - b*a) / 2``.

    Equals the 3-vector cross product embedded as a pure quaternion; the
    output always has ``w == 0`` exactly.
    """
    if not a.is_pure() or not b.is_pure():
        raise ValueError("quat_cross requires pure quaternions (w == 0)")
    return Quaternion(
        0.0,
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )


@dataclass(frozen=True)
class DualQuaternion:
    """A dual quaternion ``primary + eps * dual`` with ``eps^2 = 0``."""

    primary: Quaternion
    dual: Quaternion

    @staticmethod
    def identity() -> "DualQuaternion":
        return DualQuaternion(Quaternion.identity(), Quaternion.zero())

    @staticmethod
    def from_point(p) -> "DualQuaternion":
        """Point dual quaternion ``1 + eps * p`` used by the sandwich form."""
        return DualQuaternion(Quaternion.identity(), Quaternion.from_vector(p))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.primary.as_array(), self.dual.as_array()])

    @staticmethod
    def from_array(a) -> "DualQuaternion":
        a = np.asarray(a, dtype=float)
        return DualQuaternion(Quaternion.from_array(a[:4]), Quaternion.from_array(a[4:]))

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return (
            abs(self.primary.norm() - 1.0) <= tol
            and abs(self.primary.dot(self.dual)) <= tol
        )

    def __add__(self, other: "DualQuaternion") -> "DualQuaternion":
        return DualQuaternion(self.primary + other.primary, self.dual + other.dual)

    def __sub__(self, other: "DualQuaternion") -> "DualQuaternion":
        return DualQuaternion(self.primary - other.primary, self.dual - other.dual)

    def __neg__(self) -> "DualQuaternion":
        return DualQuaternion(-self.primary, -self.dual)


def dq_mul(a: DualQuaternion, b: DualQuaternion) -> DualQuaternion:
    """Dual-quaternion product from the eps^2 = 0 expansion."""
    return DualQuaternion(
        quat_mul(a.primary, b.primary),
        quat_mul(a.primary, b.dual) + quat_mul(a.dual, b.primary),
    )


def dq_conjugate(q: DualQuaternion, kind: str) -> DualQuaternion:
    """One of the three dual-quaternion conjugates.

    * ``"dual"``: ``p - eps d``
    * ``"full"``: ``p* + eps d*`` (the inverse of a unit dual quaternion)
    * ``"real"``: ``p* - eps d*`` (used by the point sandwich)
    """
    if kind == "dual":
        return DualQuaternion(q.primary, -q.dual)
    if kind == "full":
        return DualQuaternion(q.primary.conjugate(), q.dual.conjugate())
    if kind == "real":
        return DualQuaternion(q.primary.conjugate(), -q.dual.conjugate())
    raise ValueError(f"unknown conjugate kind: {kind!r}")


def dq_normalize(q: DualQuaternion) -> DualQuaternion:
    """Project onto the unit dual quaternions, canonicalized to ``w >= 0``.

    Rescales by the primary norm and removes the component of the dual part
    along the primary so the orthogonality invariant holds exactly to
    rounding.
    """
    n = q.primary.norm()
    if n == 0.0:
        raise ValueError("cannot normalize: zero primary part")
    p = q.primary.scaled(1.0 / n)
    d = q.dual.scaled(1.0 / n)
    d = d - p.scaled(p.dot(d))
    if p.w < 0.0:
        p, d = -p, -d
    return DualQuaternion(p, d)


def dq_distance(a: DualQuaternion, b: DualQuaternion) -> float:
    """Max-component distance blind to the global sign (double cover)."""
    av, bv = a.as_array(), b.as_array()
    return float(min(np.max(np.abs(av - bv)), np.max(np.abs(av + bv))))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (unit quaternion) plus translation in meters."""

    rotation: Quaternion
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float).reshape(3)
        )

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(Quaternion.identity(), np.zeros(3))

    def apply(self, p) -> np.ndarray:
        return self.rotation.rotate_vector(p) + self.translation

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.conjugate()
        return RigidTransform(rinv, -rinv.rotate_vector(self.translation))


def to_unit_dq(t: RigidTransform) -> DualQuaternion:
    """Unit dual quaternion ``r + eps * (1/2) t r`` of a rigid transform."""
    r = t.rotation.normalized().canonical()
    half_t = Quaternion.from_vector(t.translation).scaled(0.5)
    return DualQuaternion(r, quat_mul(half_t, r))


def from_unit_dq(q: DualQuaternion, tol: float = UNIT_TOL) -> RigidTransform:
    """Recover rotation and translation; rejects non-unit input."""
    if not q.is_unit(tol):
        raise ValueError("from_unit_dq requires a unit dual quaternion")
    t = quat_mul(q.dual.scaled(2.0), q.primary.conjugate())
    return RigidTransform(q.primary, t.vec())


def _qmul_arr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product on ``(..., 4)`` arrays with broadcasting."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        (
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ),
        axis=-1,
    )


def _qconj_arr(a: np.ndarray) -> np.ndarray:
    out = -np.asarray(a, dtype=float)
    out[..., 0] = -out[..., 0]
    return out


def transform_points(q: DualQuaternion, points, tol: float = UNIT_TOL) -> np.ndarray:
    """Transform an ``(n, 3)`` block of points by the sandwich form.

    Each point ``p`` is embedded as ``1 + eps p`` and mapped through
    ``q * p_hat * real_conjugate(q)``; the result is read off the dual part.
    """
    if not q.is_unit(tol):
        raise ValueError("transform requires a unit dual quaternion")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    p4 = q.primary.as_array()
    d4 = q.dual.as_array()
    pt4 = np.zeros((pts.shape[0], 4))
    pt4[:, 1:] = pts
    # q * (1 + eps p): primary p4, dual p4*p + d4
    a_dual = _qmul_arr(p4, pt4) + d4
    b_prim = _qconj_arr(p4)
    b_dual = -_qconj_arr(d4)
    out_dual = _qmul_arr(p4, b_dual) + _qmul_arr(a_dual, b_prim)
    return out_dual[:, 1:]


def transform_point(q: DualQuaternion, p, tol: float = UNIT_TOL) -> np.ndarray:
    """Transform a single 3-vector point; equals ``R p + t``."""
    return transform_points(q, np.asarray(p, dtype=float).reshape(1, 3), tol)[0]


def transform_direction(q: DualQuaternion, v, tol: float = UNIT_TOL) -> np.ndarray:
    """Rotate a direction (no translation) by the primary part."""
    if not q.is_unit(tol):
        raise ValueError("transform requires a unit dual quaternion")
    return q.primary.rotate_vector(v)


def transform_directions(q: DualQuaternion, vecs, tol: float = UNIT_TOL) -> np.ndarray:
    """Rotate an ``(n, 3)`` block of directions by the primary part."""
    if not q.is_unit(tol):
        raise ValueError("transform requires a unit dual quaternion")
    vs = np.asarray(vecs, dtype=float).reshape(-1, 3)
    p4 = q.primary.as_array()
    v4 = np.zeros((vs.shape[0], 4))
    v4[:, 1:] = vs
    out = _qmul_arr(_qmul_arr(p4, v4), _qconj_arr(p4))
    return out[:, 1:]
