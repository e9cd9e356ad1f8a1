"""Mapping between unit dual quaternions and their 6-dim tangent space.

The tangent vector is ordered ``[omega; nu]``: rotation first (radians),
translation second (meters).  ``exp`` is the screw exponential: the rotation
is the axis-angle quaternion of ``omega`` (full angle) and the translation is
``V(omega) @ nu`` with ``V`` the SO(3) left Jacobian, so that
``exp(v) == exp(v/n) ** n`` holds like for any one-parameter subgroup.
``log`` is its inverse on ``|omega| < pi``.

The retraction pair is a LEFT increment and its matching difference:

    boxplus(q, v)   = normalize(exp(v) * q)
    boxminus(q2, q1) = log(q2 * full_conjugate(q1))

which gives ``boxminus(boxplus(q, v), q) == v``.  Solver Jacobian
perturbations must use the same left side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dq import (
    DualQuaternion,
    Quaternion,
    dq_conjugate,
    dq_mul,
    dq_normalize,
    quat_mul,
)

__all__ = [
    "TangentVector",
    "AmbiguousRotationError",
    "dq_exp",
    "dq_log",
    "boxplus",
    "boxminus",
]

# Below this rotation angle the closed forms switch to 4th-order series.
_SMALL_ANGLE = 1e-6


class AmbiguousRotationError(ValueError):
    """Raised when a rotation is too close to pi for the axis to be stable."""


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Element of the tangent space: ``omega`` rotational, ``nu`` translational."""

    omega: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).reshape(3)
        nu = np.asarray(self.nu, dtype=float).reshape(3)
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(nu))):
            raise ValueError("tangent vector components must be finite")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "nu", nu)

    @staticmethod
    def zero() -> "TangentVector":
        return TangentVector(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_array(v) -> "TangentVector":
        v = np.asarray(v, dtype=float).reshape(6)
        return TangentVector(v[:3], v[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.omega, self.nu])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def dq_exp(v: TangentVector) -> DualQuaternion:
    """Screw exponential mapping a tangent vector onto the unit manifold.

    ``exp(0)`` is the identity; near zero angle all trigonometric factors are
    evaluated by 4th-order series so the result is stable to ~1e-12.
    """
    omega = v.omega
    theta_sq = float(omega @ omega)
    theta = math.sqrt(theta_sq)
    if theta < _SMALL_ANGLE:
        # sin(t/2)/t, (1-cos t)/t^2, (t - sin t)/t^3 by series
        f = 0.5 - theta_sq / 48.0 + theta_sq * theta_sq / 3840.0
        a = 0.5 - theta_sq / 24.0 + theta_sq * theta_sq / 720.0
        b = 1.0 / 6.0 - theta_sq / 120.0 + theta_sq * theta_sq / 5040.0
    else:
        f = math.sin(0.5 * theta) / theta
        a = (1.0 - math.cos(theta)) / theta_sq
        b = (theta - math.sin(theta)) / (theta_sq * theta)
    r = Quaternion(math.cos(0.5 * theta), f * omega[0], f * omega[1], f * omega[2])
    wxn = np.cross(omega, v.nu)
    t = v.nu + a * wxn + b * np.cross(omega, wxn)
    half_t = Quaternion.from_vector(t).scaled(0.5)
    return DualQuaternion(r, quat_mul(half_t, r))


def dq_log(q: DualQuaternion, tol: float = 1e-9) -> TangentVector:
    """Inverse of :func:`dq_exp` on rotations strictly inside ``pi``.

    The input is canonicalized to ``primary.w >= 0`` first, so both signs of
    the same motion map to the same tangent vector.  Rotations within 1e-6 of
    ``pi`` raise :class:`AmbiguousRotationError`: the axis is not determined
    there and the caller decides what to do.
    """
    if not q.is_unit(tol):
        raise ValueError("dq_log requires a unit dual quaternion")
    p = q.primary
    d = q.dual
    if p.w < 0.0:
        p, d = -p, -d
    s_sq = p.x * p.x + p.y * p.y + p.z * p.z
    s = math.sqrt(s_sq)
    theta = 2.0 * math.atan2(s, p.w)
    if math.pi - theta < 1e-6:
        raise AmbiguousRotationError("rotation angle within 1e-6 of pi")
    if s < _SMALL_ANGLE:
        # theta/s = (2/w)(1 - (s/w)^2/3 + (s/w)^4/5 - ...)
        w = p.w
        r2 = s_sq / (w * w)
        f = (2.0 / w) * (1.0 - r2 / 3.0 + r2 * r2 / 5.0)
    else:
        f = theta / s
    omega = np.array([f * p.x, f * p.y, f * p.z])
    t = quat_mul(d.scaled(2.0), p.conjugate()).vec()
    # nu = V(omega)^-1 t with V the SO(3) left Jacobian
    theta_sq = theta * theta
    if theta < _SMALL_ANGLE:
        c = 1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0
    else:
        c = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / theta_sq
    nu = t - 0.5 * np.cross(omega, t) + c * np.cross(omega, np.cross(omega, t))
    return TangentVector(omega, nu)


def boxplus(q: DualQuaternion, v: TangentVector) -> DualQuaternion:
    """Left-increment retraction ``normalize(exp(v) * q)``."""
    return dq_normalize(dq_mul(dq_exp(v), q))


def boxminus(q2: DualQuaternion, q1: DualQuaternion) -> TangentVector:
    """Tangent-space difference matching :func:`boxplus` on the left."""
    return dq_log(dq_mul(q2, dq_conjugate(q1, "full")))
