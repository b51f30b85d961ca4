"""Geometry oracles: mapping, projection, and rotation conventions.

Expected values were computed independently with high-precision arithmetic
(mpmath) from the defining formulas and then frozen here.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvpose.geometry import (
    BehindCameraError,
    CameraIntrinsics,
    CylinderModel,
    InvalidModelError,
    LabelPoint,
    REFERENCE_INTRINSICS,
    RigidPose,
    default_intrinsics,
    euler_to_quaternion,
    label_points_to_cylinder,
    label_to_cylinder,
    matrix_to_quaternion,
    pose_compose,
    pose_inverse,
    project_point,
    project_points,
    quaternion_conjugate,
    quaternion_multiply,
    quaternion_to_euler,
    quaternion_to_matrix,
    rotation_vector_to_quaternion,
    transform_point,
    transform_points,
)


class TestLabelToCylinder:
    def test_top_left_corner_oracle(self):
        # u=0, v=0 on a 1.3333 x 1.0 label, diameter 1.5:
        #   theta = (0 - 0.66665) / 0.75 = -0.8888666666...
        #   x = 0.75 sin(theta), y = -0.75 cos(theta), z = 0.5
        cyl = CylinderModel(diameter=1.5, label_width=1.3333)
        p = label_to_cylinder(LabelPoint(0.0, 0.0), cyl)
        assert p[0] == pytest.approx(-0.582268436247542, abs=1e-12)
        assert p[1] == pytest.approx(-0.472719227607512, abs=1e-12)
        assert p[2] == pytest.approx(0.5, abs=1e-12)

    def test_label_center_sits_on_near_side(self):
        cyl = CylinderModel(diameter=1.5, label_width=1.3333)
        p = label_to_cylinder(LabelPoint(1.3333 / 2, 0.5), cyl)
        assert np.allclose(p, [0.0, -0.75, 0.0], atol=1e-12)

    def test_vertical_coordinate_is_straight(self):
        cyl = CylinderModel(diameter=2.0, label_width=1.0)
        top = label_to_cylinder(LabelPoint(0.25, 0.0), cyl)
        bottom = label_to_cylinder(LabelPoint(0.25, 1.0), cyl)
        assert top[2] == pytest.approx(0.5)
        assert bottom[2] == pytest.approx(-0.5)
        assert np.allclose(top[:2], bottom[:2])

    def test_batch_matches_single(self):
        cyl = CylinderModel(diameter=1.7, label_width=1.2)
        uv = np.array([[0.0, 0.0], [0.6, 0.5], [1.2, 1.0]])
        batch = label_points_to_cylinder(uv, cyl)
        for row, (u, v) in zip(batch, uv):
            assert np.allclose(row, label_to_cylinder(LabelPoint(u, v), cyl))

    def test_out_of_range_rejected(self):
        cyl = CylinderModel(diameter=1.5, label_width=1.0)
        with pytest.raises(ValueError):
            label_to_cylinder(LabelPoint(-0.1, 0.5), cyl)
        with pytest.raises(ValueError):
            label_to_cylinder(LabelPoint(0.5, 1.1), cyl)

    @given(
        u=st.floats(0.0, 1.3333),
        v=st.floats(0.0, 1.0),
        diameter=st.floats(1.0, 4.0),
    )
    @settings(max_examples=200)
    def test_points_lie_on_cylinder(self, u, v, diameter):
        cyl = CylinderModel(diameter=diameter, label_width=1.3333)
        p = label_to_cylinder(LabelPoint(u, v), cyl)
        assert p[0] ** 2 + p[1] ** 2 == pytest.approx(cyl.radius**2, rel=1e-9)

    @given(
        u1=st.floats(0.0, 1.3333),
        u2=st.floats(0.0, 1.3333),
        diameter=st.floats(1.0, 4.0),
    )
    @settings(max_examples=200)
    def test_wrap_preserves_arc_length(self, u1, u2, diameter):
        # horizontal label distance equals geodesic distance on the barrel
        cyl = CylinderModel(diameter=diameter, label_width=1.3333)
        p1 = label_to_cylinder(LabelPoint(u1, 0.5), cyl)
        p2 = label_to_cylinder(LabelPoint(u2, 0.5), cyl)
        t1 = math.atan2(p1[0], -p1[1])
        t2 = math.atan2(p2[0], -p2[1])
        assert abs(t1 - t2) * cyl.radius == pytest.approx(abs(u1 - u2), abs=1e-9)

    def test_self_overlapping_label_rejected(self):
        # arc angle 2W/d must not exceed 2*pi
        with pytest.raises(InvalidModelError):
            CylinderModel(diameter=0.3, label_width=1.0)
        # boundary case is allowed
        CylinderModel(diameter=2.0 / math.pi, label_width=2.0)

    def test_invalid_dimensions_rejected(self):
        with pytest.raises(InvalidModelError):
            CylinderModel(diameter=-1.0, label_width=1.0)
        with pytest.raises(InvalidModelError):
            CylinderModel(diameter=1.5, label_width=0.0)
        with pytest.raises(InvalidModelError):
            CylinderModel(diameter=1.5, label_width=1.0, label_height=2.0)


class TestProjection:
    def test_reference_camera_oracle(self):
        # px = 2670 * 0.1 + 960 = 1227, py = 2250 * 0.2 + 540 = 990
        px, py = project_point(REFERENCE_INTRINSICS, np.array([0.3, 0.6, 3.0]))
        assert px == pytest.approx(1227.0, abs=1e-9)
        assert py == pytest.approx(990.0, abs=1e-9)

    def test_principal_point_on_axis(self):
        px, py = project_point(REFERENCE_INTRINSICS, np.array([0.0, 0.0, 2.5]))
        assert (px, py) == (960.0, 540.0)

    def test_skew_contributes_to_x_only(self):
        K = CameraIntrinsics(fx=100.0, fy=100.0, s=10.0, cx=50.0, cy=50.0, width=100, height=100)
        px, py = project_point(K, np.array([0.0, 1.0, 1.0]))
        assert px == pytest.approx(60.0)
        assert py == pytest.approx(150.0)

    def test_behind_camera_raises(self):
        with pytest.raises(BehindCameraError):
            project_point(REFERENCE_INTRINSICS, np.array([0.0, 0.0, -1.0]))
        with pytest.raises(BehindCameraError):
            project_point(REFERENCE_INTRINSICS, np.array([0.0, 0.0, 0.0]))

    def test_batch_matches_single(self):
        pts = np.array([[0.3, 0.6, 3.0], [-0.1, 0.05, 1.2], [0.0, 0.0, 9.0]])
        batch = project_points(REFERENCE_INTRINSICS, pts)
        for row, p in zip(batch, pts):
            assert tuple(row) == pytest.approx(project_point(REFERENCE_INTRINSICS, p))

    @given(
        x=st.floats(-2.0, 2.0),
        y=st.floats(-2.0, 2.0),
        z=st.floats(0.1, 10.0),
        lam=st.floats(0.1, 10.0),
    )
    @settings(max_examples=200)
    def test_projection_is_scale_invariant(self, x, y, z, lam):
        p = np.array([x, y, z])
        a = project_point(REFERENCE_INTRINSICS, p)
        b = project_point(REFERENCE_INTRINSICS, lam * p)
        assert a == pytest.approx(b, abs=1e-6)

    def test_default_intrinsics_scaling(self):
        K = default_intrinsics(640, 480)
        assert K.fx == pytest.approx(2670.0 / 3)
        assert K.fy == pytest.approx(1000.0)
        assert (K.cx, K.cy) == (320.0, 240.0)
        assert (K.width, K.height) == (640, 480)

    def test_bad_intrinsics_rejected(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=-1.0, fy=1.0, s=0.0, cx=10.0, cy=10.0, width=20, height=20)
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=1.0, fy=1.0, s=0.0, cx=25.0, cy=10.0, width=20, height=20)


class TestRotationConventions:
    def test_single_axis_quaternions(self):
        q = euler_to_quaternion(np.array([math.pi / 2, 0.0, 0.0]))
        assert np.allclose(q, [math.sqrt(0.5), math.sqrt(0.5), 0.0, 0.0])
        q = euler_to_quaternion(np.array([0.0, math.pi / 2, 0.0]))
        assert np.allclose(q, [math.sqrt(0.5), 0.0, math.sqrt(0.5), 0.0])
        q = euler_to_quaternion(np.array([0.0, 0.0, math.pi / 2]))
        assert np.allclose(q, [math.sqrt(0.5), 0.0, 0.0, math.sqrt(0.5)])

    def test_intrinsic_xyz_composition_order(self):
        # R must equal Rx @ Ry @ Rz for intrinsic XYZ
        angles = np.array([0.3, -0.7, 1.1])
        ca, sa = math.cos(angles[0]), math.sin(angles[0])
        cb, sb = math.cos(angles[1]), math.sin(angles[1])
        cc, sc = math.cos(angles[2]), math.sin(angles[2])
        Rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
        Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
        Rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
        R = quaternion_to_matrix(euler_to_quaternion(angles))
        assert np.allclose(R, Rx @ Ry @ Rz, atol=1e-12)

    def test_quaternion_sign_canonicalized(self):
        q = np.array([-0.5, 0.5, 0.5, -0.5])
        pose = RigidPose(rotation=q, translation=np.zeros(3))
        assert pose.rotation[0] > 0
        assert np.allclose(quaternion_to_matrix(pose.rotation), quaternion_to_matrix(q))

    def test_zero_w_canonicalization_uses_first_nonzero(self):
        q = np.array([0.0, -1.0, 0.0, 0.0])
        pose = RigidPose(rotation=q)
        assert np.allclose(pose.rotation, [0.0, 1.0, 0.0, 0.0])

    def test_gimbal_lock_pitch_up(self):
        q = euler_to_quaternion(np.array([0.2, math.pi / 2, 0.3]))
        e = quaternion_to_euler(q)
        assert e[1] == pytest.approx(math.pi / 2, abs=1e-7)
        assert e[2] == 0.0
        # the recovered representative must reproduce the same rotation
        assert np.allclose(
            quaternion_to_matrix(euler_to_quaternion(e)), quaternion_to_matrix(q), atol=1e-7
        )

    @given(
        rx=st.floats(-3.0, 3.0),
        ry=st.floats(-1.4, 1.4),
        rz=st.floats(-3.0, 3.0),
    )
    @settings(max_examples=200)
    def test_euler_round_trip(self, rx, ry, rz):
        angles = np.array([rx, ry, rz])
        out = quaternion_to_euler(euler_to_quaternion(angles))
        assert np.allclose(out, angles, atol=1e-8)

    @given(
        w=st.floats(-1.0, 1.0),
        x=st.floats(-1.0, 1.0),
        y=st.floats(-1.0, 1.0),
        z=st.floats(-1.0, 1.0),
    )
    @settings(max_examples=200)
    def test_matrix_round_trip(self, w, x, y, z):
        q = np.array([w, x, y, z])
        if np.linalg.norm(q) < 1e-3:
            return
        pose = RigidPose(rotation=q)
        back = matrix_to_quaternion(quaternion_to_matrix(pose.rotation))
        # q and -q encode the same rotation; near w == 0 the reconstruction
        # may land on either representative
        err = min(np.abs(back - pose.rotation).max(), np.abs(back + pose.rotation).max())
        assert err < 1e-9

    def test_rotation_vector_small_angle(self):
        q = rotation_vector_to_quaternion(np.array([1e-14, 0.0, 0.0]))
        assert np.allclose(q, [1.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_rotation_vector_quarter_turn(self):
        q = rotation_vector_to_quaternion(np.array([0.0, 0.0, math.pi / 2]))
        assert np.allclose(q, [math.sqrt(0.5), 0.0, 0.0, math.sqrt(0.5)])


class TestRigidPose:
    def test_identity(self):
        pose = RigidPose.identity()
        p = np.array([1.0, 2.0, 3.0])
        assert np.allclose(transform_point(pose, p), p)

    def test_known_rotation_plus_translation(self):
        # quarter turn about z maps +x to +y, then shift
        pose = RigidPose(
            rotation=euler_to_quaternion(np.array([0.0, 0.0, math.pi / 2])),
            translation=np.array([1.0, 0.0, 0.0]),
        )
        p = transform_point(pose, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(p, [1.0, 1.0, 0.0], atol=1e-12)

    def test_transform_points_matches_loop(self):
        rng = np.random.default_rng(7)
        pose = RigidPose(rotation=rng.normal(size=4), translation=rng.normal(size=3))
        pts = rng.normal(size=(5, 3))
        batch = transform_points(pose, pts)
        for row, p in zip(batch, pts):
            assert np.allclose(row, transform_point(pose, p))

    @given(data=st.data())
    @settings(max_examples=100)
    def test_inverse_undoes_transform(self, data):
        q = np.array([data.draw(st.floats(-1, 1)) for _ in range(4)])
        if np.linalg.norm(q) < 1e-3:
            return
        t = np.array([data.draw(st.floats(-5, 5)) for _ in range(3)])
        pose = RigidPose(rotation=q, translation=t)
        inv = pose_inverse(pose)
        p = np.array([data.draw(st.floats(-5, 5)) for _ in range(3)])
        assert np.allclose(transform_point(inv, transform_point(pose, p)), p, atol=1e-9)
        ident = pose_compose(pose, inv)
        assert np.allclose(ident.rotation, [1, 0, 0, 0], atol=1e-9)
        assert np.allclose(ident.translation, 0, atol=1e-9)

    def test_compose_order(self):
        # compose(a, b) applies b first
        a = RigidPose(translation=np.array([1.0, 0.0, 0.0]))
        b = RigidPose(rotation=euler_to_quaternion(np.array([0.0, 0.0, math.pi / 2])))
        p = transform_point(pose_compose(a, b), np.array([1.0, 0.0, 0.0]))
        assert np.allclose(p, [1.0, 1.0, 0.0], atol=1e-12)

    def test_quaternion_algebra(self):
        rng = np.random.default_rng(11)
        q1 = RigidPose(rotation=rng.normal(size=4)).rotation
        q2 = RigidPose(rotation=rng.normal(size=4)).rotation
        R12 = quaternion_to_matrix(quaternion_multiply(q1, q2))
        assert np.allclose(R12, quaternion_to_matrix(q1) @ quaternion_to_matrix(q2), atol=1e-12)
        qc = quaternion_conjugate(q1)
        assert np.allclose(quaternion_multiply(q1, qc), [1, 0, 0, 0], atol=1e-12)
