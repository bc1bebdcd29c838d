"""Camera model and pose algebra tests.

[TRIVIAL] examples are worked by hand from the projection formulas.
Round-trip and group-law properties are fuzzed with hypothesis.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panorec.errors import DomainError
from panorec.geometry import (
    EquirectCamera,
    FisheyeCamera,
    Pose,
    Ray,
    normalize,
    quat_from_axis_angle,
    quat_from_matrix,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
    transform_ray,
)


def circular_du(u0, u1, width):
    """Distance between pixel columns on the wrap-around axis."""
    d = np.abs(u0 - u1) % width
    return np.minimum(d, width - d)


# ---------------------------------------------------------------------------
# Equirectangular camera


class TestEquirect:
    def test_forward_center_pixel(self):
        # [TRIVIAL] (u, v) = (255.5, 127.5) is the exact image center of a
        # 512x256 panorama: theta = 0, phi = 0, direction +z.
        cam = EquirectCamera(512, 256)
        d = cam.pixel_to_direction(255.5, 127.5)
        np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)

    def test_forward_top_row(self):
        # [TRIVIAL] row v=0 center sits half a pixel below the pole:
        # phi = pi/2 - pi/512.
        cam = EquirectCamera(512, 256)
        d = cam.pixel_to_direction(255.5, 0.0)
        assert d[1] == pytest.approx(np.sin(np.pi / 2 - np.pi / 512), abs=1e-12)

    def test_inverse_plus_x(self):
        # [TRIVIAL] +x is theta = pi/2, which lands at u = 3W/4 - 0.5.
        cam = EquirectCamera(512, 256)
        u, v = cam.direction_to_pixel(np.array([1.0, 0.0, 0.0]))
        assert u == pytest.approx(3 * 512 / 4 - 0.5, abs=1e-9)
        assert v == pytest.approx(127.5, abs=1e-9)

    def test_seam_wrap(self):
        # Directions just left of -z map near u = width - 0.5 ~ -0.5 wrap.
        cam = EquirectCamera(512, 256)
        d = cam.pixel_to_direction(0.0, 127.5)
        u, v = cam.direction_to_pixel(d)
        assert circular_du(u, 0.0, 512) < 1e-6

    def test_out_of_bounds_rejected(self):
        cam = EquirectCamera(512, 256)
        with pytest.raises(DomainError):
            cam.pixel_to_direction(512.0, 10.0)
        with pytest.raises(DomainError):
            cam.pixel_to_direction(-0.6, 10.0)

    def test_bad_aspect_rejected(self):
        with pytest.raises(DomainError):
            EquirectCamera(511, 256)

    def test_grid_shape_and_units(self):
        cam = EquirectCamera(64, 32)
        g = cam.direction_grid()
        assert g.shape == (32, 64, 3)
        np.testing.assert_allclose(np.linalg.norm(g, axis=-1), 1.0, atol=1e-12)

    @given(
        u=st.floats(0.0, 511.999),
        v=st.floats(2.0, 253.999),  # keep away from the poles
    )
    @settings(max_examples=300, deadline=None)
    def test_round_trip(self, u, v):
        cam = EquirectCamera(512, 256)
        d = cam.pixel_to_direction(u, v)
        u2, v2 = cam.direction_to_pixel(d)
        assert circular_du(u2, u, 512) < 1e-6
        assert abs(v2 - v) < 1e-6

    def test_round_trip_batched_speed(self):
        # One full-resolution grid both ways; correctness only, the timing
        # budget lives in the acceptance suite.
        cam = EquirectCamera(2048, 1024)
        g = cam.direction_grid()
        u, v = cam.direction_to_pixel(g)
        vv, uu = np.mgrid[0:1024, 0:2048]
        assert np.max(circular_du(u, uu, 2048)) < 1e-6
        assert np.max(np.abs(v - vv)) < 1e-6


# ---------------------------------------------------------------------------
# Fisheye camera


class TestFisheye:
    def test_center_is_forward(self):
        cam = FisheyeCamera(1000, 1000, fov=np.pi)
        d, ok = cam.unproject(499.5, 499.5)
        assert ok
        np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)

    def test_right_edge_direction(self):
        # [TRIVIAL] a point f * psi pixels right of center looks along
        # (sin psi, 0, cos psi).
        cam = FisheyeCamera(1000, 1000, fov=np.pi)
        psi = 0.7
        d, ok = cam.unproject(499.5 + cam.focal * psi, 499.5)
        assert ok
        np.testing.assert_allclose(d, [np.sin(psi), 0.0, np.cos(psi)], atol=1e-12)

    def test_up_in_image_is_plus_y(self):
        cam = FisheyeCamera(1000, 1000, fov=np.pi)
        d, ok = cam.unproject(499.5, 499.5 - cam.focal * 0.5)
        assert d[1] == pytest.approx(np.sin(0.5), abs=1e-12)

    def test_beyond_fov_invalid(self):
        # The lens circle inscribes the short side; corners fall outside it.
        cam = FisheyeCamera(1000, 1000, fov=np.pi / 2)
        _, ok = cam.unproject(0.0, 0.0)
        assert not ok

    def test_fov_bounds(self):
        with pytest.raises(DomainError):
            FisheyeCamera(100, 100, fov=0.0)
        with pytest.raises(DomainError):
            FisheyeCamera(100, 100, fov=2 * np.pi)

    @given(
        psi=st.floats(1e-3, 0.95 * np.pi / 2),
        ang=st.floats(0.0, 2 * np.pi - 1e-6),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, psi, ang):
        cam = FisheyeCamera(800, 600, fov=np.pi)
        d = np.array([np.sin(psi) * np.cos(ang), np.sin(psi) * np.sin(ang), np.cos(psi)])
        u, v, ok = cam.project(d)
        assert ok
        d2, ok2 = cam.unproject(u, v)
        assert ok2
        np.testing.assert_allclose(d2, d, atol=1e-9)


# ---------------------------------------------------------------------------
# Quaternions and poses

unit_quats = st.builds(
    lambda a, b, c, d: None if (a * a + b * b + c * c + d * d) < 1e-4 else np.array([a, b, c, d]) / np.linalg.norm([a, b, c, d]),
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
).filter(lambda q: q is not None)

vec3 = st.builds(
    lambda a, b, c: np.array([a, b, c]),
    st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10),
)


class TestQuaternion:
    @given(q=unit_quats, v=vec3)
    @settings(max_examples=200, deadline=None)
    def test_rotation_matches_matrix(self, q, v):
        np.testing.assert_allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-9)

    @given(q=unit_quats)
    @settings(max_examples=200, deadline=None)
    def test_matrix_round_trip(self, q):
        q2 = quat_from_matrix(quat_to_matrix(q))
        # q and -q encode the same rotation
        assert min(np.linalg.norm(q2 - q), np.linalg.norm(q2 + q)) < 1e-9

    @given(a=unit_quats, b=unit_quats, v=vec3)
    @settings(max_examples=200, deadline=None)
    def test_multiply_is_composition(self, a, b, v):
        np.testing.assert_allclose(
            quat_rotate(quat_multiply(a, b), v), quat_rotate(a, quat_rotate(b, v)), atol=1e-9
        )

    def test_axis_angle(self):
        # [TRIVIAL] 90 degrees about +y takes +z to +x.
        q = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi / 2)
        np.testing.assert_allclose(quat_rotate(q, np.array([0.0, 0.0, 1.0])), [1, 0, 0], atol=1e-12)


poses = st.builds(
    lambda q, t: Pose(q, t),
    unit_quats,
    vec3,
)


class TestPose:
    @given(p=poses, v=vec3)
    @settings(max_examples=200, deadline=None)
    def test_inverse_cancels(self, p, v):
        np.testing.assert_allclose(p.inverse().apply(p.apply(v)), v, atol=1e-9)

    @given(a=poses, b=poses, v=vec3)
    @settings(max_examples=200, deadline=None)
    def test_compose_associates_with_apply(self, a, b, v):
        np.testing.assert_allclose(a.compose(b).apply(v), a.apply(b.apply(v)), atol=1e-9)

    @given(a=poses, b=poses, c=poses)
    @settings(max_examples=100, deadline=None)
    def test_compose_associative(self, a, b, c):
        lhs = a.compose(b).compose(c)
        rhs = a.compose(b.compose(c))
        v = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(lhs.apply(v), rhs.apply(v), atol=1e-9)

    def test_identity(self):
        p = Pose.identity()
        v = np.array([4.0, 5.0, 6.0])
        np.testing.assert_allclose(p.apply(v), v)

    def test_unnormalized_quaternion_rejected(self):
        with pytest.raises(DomainError):
            Pose(np.array([1.0, 1.0, 0.0, 0.0]), np.zeros(3))

    def test_rotation_is_orthonormal(self):
        p = Pose.from_axis_angle([1, 2, 3], 0.8, [0, 0, 0])
        r = p.rotation
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)

    @given(p=poses)
    @settings(max_examples=100, deadline=None)
    def test_transform_ray_keeps_unit_direction(self, p):
        ray = Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]))
        out = transform_ray(p, ray)
        assert abs(np.linalg.norm(out.direction) - 1.0) < 1e-9
        np.testing.assert_allclose(out.origin, p.t, atol=1e-9)


class TestNormalize:
    def test_zero_raises(self):
        with pytest.raises(DomainError):
            normalize(np.zeros(3))

    def test_batch(self):
        v = np.array([[3.0, 0.0, 0.0], [0.0, 0.0, 5.0]])
        np.testing.assert_allclose(normalize(v), [[1, 0, 0], [0, 0, 1]])
