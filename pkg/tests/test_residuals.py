import math

import numpy as np
import pytest

from dqloam.dq import (
    DualQuaternion,
    Quaternion,
    RigidTransform,
    dq_mul,
    dq_normalize,
    to_unit_dq,
    transform_point,
)
from dqloam.manifold import TangentVector, boxminus, boxplus, dq_exp
from dqloam.residuals import (
    Correspondences,
    DualPlane,
    EmptyCorrespondencesError,
    PluckerLine,
    edge_residual,
    fit_line,
    fit_plane,
    plane_residual,
    residual_blocks,
    residual_vector,
    std_residual,
    total_cost,
)

import helpers
import oracles


class TestFitLine:
    def test_collinear_along_z(self):
        pts = np.array([[1.0, 2.0, z] for z in (-2.0, -1.0, 0.0, 1.0, 2.0)])
        line = fit_line(pts)
        np.testing.assert_allclose(line.direction, [0, 0, 1], atol=1e-12)
        c = pts.mean(axis=0)
        np.testing.assert_allclose(line.moment, np.cross(c, [0, 0, 1]), atol=1e-12)

    def test_circle_rejected(self):
        ang = np.linspace(0, 2 * math.pi, 5, endpoint=False)
        pts = np.stack([np.cos(ang), np.sin(ang), np.zeros(5)], axis=1)
        assert fit_line(pts) is None

    def test_noisy_line_direction(self, rng):
        # Monte-Carlo: sigma = 1 cm noise on a few-meter segment keeps the
        # direction within 1 degree of truth in the bulk of the draws
        true_dir = np.array([1.0, 1.0, 0.5])
        true_dir /= np.linalg.norm(true_dir)
        within = 0
        trials = 200
        for _ in range(trials):
            s = rng.uniform(-2, 2, size=5)
            pts = np.outer(s, true_dir) + rng.normal(0, 0.01, size=(5, 3))
            line = fit_line(pts)
            assert line is not None
            angle = math.degrees(math.acos(min(1.0, abs(line.direction @ true_dir))))
            if angle < 1.0:
                within += 1
        assert within >= 0.9 * trials

    def test_plucker_constraint_enforced(self):
        with pytest.raises(ValueError):
            PluckerLine([0, 0, 1], [0, 0, 1])


class TestFitPlane:
    def test_coplanar_z2(self, rng):
        pts = np.column_stack([rng.uniform(-3, 3, size=(5, 2)), np.full(5, 2.0)])
        plane = fit_plane(pts)
        np.testing.assert_allclose(plane.normal, [0, 0, 1], atol=1e-9)
        assert plane.distance == pytest.approx(2.0, abs=1e-12)

    def test_outlier_rejected(self):
        # four coplanar corners plus a 10 cm bump at the centroid: the fit
        # splits the offset but the bump still violates the 5 cm inlier gate
        pts = np.array(
            [[3, 3, 0], [3, -3, 0], [-3, 3, 0], [-3, -3, 0], [0, 0, 0.10]], dtype=float
        )
        assert fit_plane(pts) is None

    def test_tilted_plane(self, rng):
        n = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
        t1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
        t2 = np.cross(n, t1)
        base = n * (3.0 / math.sqrt(3.0))
        pts = base + np.outer(rng.uniform(-2, 2, 5), t1) + np.outer(rng.uniform(-2, 2, 5), t2)
        plane = fit_plane(pts)
        np.testing.assert_allclose(plane.normal, n, atol=1e-6)
        assert plane.distance == pytest.approx(math.sqrt(3.0), abs=1e-9)


class TestEdgeResidual:
    def test_point_on_line_zero(self, rng):
        q = helpers.random_unit_dq(rng)
        p0 = rng.uniform(-5, 5, size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        line = PluckerLine(d, np.cross(p0, d))
        on_line = p0 + 2.345 * d
        p_e = transform_point(
            DualQuaternion.from_array(np.concatenate([q.primary.as_array(), q.dual.as_array()])),
            on_line,
        )
        # pull the map point back through the inverse so q moves it onto the line
        from dqloam.dq import dq_conjugate

        p_e = transform_point(dq_conjugate(q, "full"), on_line)
        np.testing.assert_allclose(edge_residual(q, p_e, line), np.zeros(3), atol=1e-9)

    def test_unit_offset(self):
        line = PluckerLine([0.0, 0.0, 1.0], np.zeros(3))
        r = edge_residual(DualQuaternion.identity(), [1.0, 0.0, 0.0], line)
        assert np.linalg.norm(r) == pytest.approx(1.0, abs=1e-15)

    def test_norm_is_point_line_distance(self, rng):
        for _ in range(200):
            q = helpers.random_unit_dq(rng)
            p0 = rng.uniform(-10, 10, size=3)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            line = PluckerLine(d, np.cross(p0, d))
            p_e = rng.uniform(-10, 10, size=3)
            moved = transform_point(q, p_e)
            got = np.linalg.norm(edge_residual(q, p_e, line))
            want = oracles.point_line_distance_oracle(moved, p0, d)
            assert got == pytest.approx(want, abs=1e-10)


class TestPlaneResidual:
    def test_point_on_plane_zero(self):
        plane = DualPlane([0.0, 0.0, 1.0], 1.0)
        assert plane_residual(DualQuaternion.identity(), [3.0, -2.0, 1.0], plane) == 0.0

    def test_plane_z1_point_553(self):
        plane = DualPlane([0.0, 0.0, 1.0], 1.0)
        got = plane_residual(DualQuaternion.identity(), [5.0, 5.0, 3.0], plane)
        assert got == pytest.approx(2.0, abs=1e-15)

    def test_matches_signed_distance_oracle(self, rng):
        for _ in range(200):
            q = helpers.random_unit_dq(rng)
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            d = rng.uniform(-5, 5)
            plane = DualPlane(n, d)
            p = rng.uniform(-10, 10, size=3)
            got = plane_residual(q, p, plane)
            want = oracles.point_plane_signed_distance_oracle(transform_point(q, p), n, d)
            assert got == pytest.approx(want, abs=1e-12)


class TestStdResidual:
    def test_exact_match_zero(self, rng):
        q = helpers.random_unit_dq(rng)
        current = helpers.random_unit_dq(rng)
        map_frame = dq_normalize(dq_mul(q, current))
        r = std_residual(q, current, map_frame)
        np.testing.assert_allclose(r, np.zeros(6), atol=1e-12)

    def test_pure_translation_offset(self, rng):
        current = helpers.random_unit_dq(rng)
        offset = to_unit_dq(RigidTransform(Quaternion.identity(), [0.1, 0.0, 0.0]))
        map_frame = dq_normalize(dq_mul(current, offset))
        r = std_residual(DualQuaternion.identity(), current, map_frame)
        np.testing.assert_allclose(r[:3], np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(np.abs(r[3:]), [0.1, 0.0, 0.0], atol=1e-12)

    def test_sign_flip_identical(self, rng):
        for _ in range(50):
            q = helpers.random_unit_dq(rng)
            current = helpers.random_unit_dq(rng)
            map_frame = helpers.random_unit_dq(rng)
            a = std_residual(q, current, map_frame)
            b = std_residual(q, current, -map_frame)
            np.testing.assert_array_equal(a, b)

    def test_norm_is_geodesic_distance(self, rng):
        # construct the map frame a known tangent step away from the moved
        # descriptor; the residual norm must recover that step's length
        for _ in range(100):
            q = helpers.random_unit_dq(rng)
            current = helpers.random_unit_dq(rng)
            w = TangentVector(rng.normal(size=3) * 0.5, rng.normal(size=3))
            moved = dq_normalize(dq_mul(q, current))
            map_frame = dq_normalize(
                dq_mul(moved, dq_exp(TangentVector(-w.omega, -w.nu)))
            )
            r = std_residual(q, current, map_frame)
            assert np.linalg.norm(r) == pytest.approx(w.norm(), abs=1e-9)

    def test_batch_block_matches_scalar(self, rng):
        q = helpers.random_unit_dq(rng)
        corr = helpers.exact_correspondences(rng, helpers.random_unit_dq(rng), 0, 0, 20)
        _, _, block = residual_blocks(q, corr, 0.7, 1.3)
        for i in range(corr.n_std):
            scalar = std_residual(
                q,
                DualQuaternion.from_array(corr.std_current[i]),
                DualQuaternion.from_array(corr.std_map[i]),
                0.7,
                1.3,
            )
            np.testing.assert_allclose(block[i], scalar, atol=1e-12)


class TestTotalCost:
    def test_all_zero(self, rng):
        truth = helpers.random_unit_dq(rng)
        corr = helpers.exact_correspondences(rng, truth)
        assert total_cost(truth, corr) < 1e-12

    def test_single_plane_squared(self):
        corr = Correspondences.from_pairs(
            surface_pairs=[(np.array([5.0, 5.0, 3.0]), DualPlane([0.0, 0.0, 1.0], 1.0))]
        )
        assert total_cost(DualQuaternion.identity(), corr) == pytest.approx(4.0, abs=1e-12)

    def test_huber_tames_large_blocks(self):
        corr = Correspondences.from_pairs(
            surface_pairs=[(np.array([0.0, 0.0, 3.0]), DualPlane([0.0, 0.0, 1.0], 1.0))]
        )
        raw = total_cost(DualQuaternion.identity(), corr, use_robust_loss=False)
        robust = total_cost(DualQuaternion.identity(), corr, use_robust_loss=True, huber_delta=0.5)
        assert raw == pytest.approx(4.0)
        assert robust == pytest.approx(2 * 0.5 * 2.0 - 0.25)

    def test_empty_rejected(self):
        with pytest.raises(EmptyCorrespondencesError):
            total_cost(DualQuaternion.identity(), Correspondences())

    def test_gradient_richardson_decay(self, rng):
        # central differences of the cost along random tangent directions
        # must behave like a second-order scheme: error drops ~4x per halving
        truth = helpers.random_unit_dq(rng)
        corr = helpers.exact_correspondences(rng, truth, 10, 15, 5)
        q0 = boxplus(truth, TangentVector(rng.normal(size=3) * 0.05, rng.normal(size=3) * 0.05))

        def cost_at(q):
            return total_cost(q, corr)

        for _ in range(12):
            direction = rng.normal(size=6)
            direction /= np.linalg.norm(direction)

            def dd(h):
                vp = TangentVector.from_array(h * direction)
                vm = TangentVector.from_array(-h * direction)
                return (cost_at(boxplus(q0, vp)) - cost_at(boxplus(q0, vm))) / (2 * h)

            d1, d2, d3 = dd(1e-3), dd(5e-4), dd(2.5e-4)
            # Richardson: successive central-difference estimates converge
            # with ratio ~4 in their differences
            e1, e2 = abs(d1 - d3), abs(d2 - d3)
            if e1 > 1e-10:
                assert e2 < 0.5 * e1

    def test_residual_vector_layout(self, rng):
        truth = helpers.random_unit_dq(rng)
        corr = helpers.exact_correspondences(rng, truth, 2, 3, 1)
        q = helpers.random_unit_dq(rng)
        r = residual_vector(q, corr)
        assert r.shape == (2 * 3 + 3 + 6,)
        edge, surf, std = residual_blocks(q, corr)
        np.testing.assert_array_equal(r[:6], edge.ravel())
        np.testing.assert_array_equal(r[6:9], surf)
        np.testing.assert_array_equal(r[9:], std.ravel())
