"""Shared constructions for tests: exact synthetic correspondence sets."""

from __future__ import annotations

import numpy as np

from dqloam.dq import DualQuaternion, dq_conjugate, dq_mul, dq_normalize, transform_point
from dqloam.residuals import Correspondences, DualPlane, PluckerLine

import oracles


def random_unit_dq(rng, max_translation=5.0) -> DualQuaternion:
    return DualQuaternion.from_array(oracles.random_unit_dq8(rng, max_translation))


def exact_correspondences(
    rng, truth: DualQuaternion, n_edges=15, n_surfaces=25, n_std=8
) -> Correspondences:
    """Correspondences whose residuals are all zero exactly at ``truth``.

    Map-side primitives are drawn at random; each current-side measurement is
    the map-side geometry pulled back through the inverse of ``truth``.
    """
    inv = dq_conjugate(truth, "full")
    edge_pairs = []
    for _ in range(n_edges):
        p0 = rng.uniform(-10, 10, size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        line = PluckerLine(d, np.cross(p0, d))
        on_line = p0 + rng.uniform(-5, 5) * d
        edge_pairs.append((transform_point(inv, on_line), line))
    surface_pairs = []
    for _ in range(n_surfaces):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        dist = rng.uniform(0, 8)
        plane = DualPlane(n, dist)
        # a point on the plane: d*n plus an in-plane offset
        t1 = np.cross(n, [1.0, 0.0, 0.0])
        if np.linalg.norm(t1) < 1e-6:
            t1 = np.cross(n, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        on_plane = dist * n + rng.uniform(-5, 5) * t1 + rng.uniform(-5, 5) * t2
        surface_pairs.append((transform_point(inv, on_plane), plane))
    std_pairs = []
    for _ in range(n_std):
        current = random_unit_dq(rng)
        map_frame = dq_normalize(dq_mul(truth, current))
        std_pairs.append((current, map_frame))
    return Correspondences.from_pairs(edge_pairs, surface_pairs, std_pairs)
