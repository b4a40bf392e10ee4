import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from activevision import oracles as O
from activevision.camera import (BACKGROUND, PAN_LIMITS, TILT_LIMITS, CameraIntrinsics, CameraPosition,
                                 GrayImage, VisibilityThresholds, ball_visible, project, render,
                                 visible_landmarks, visible_mask)
from activevision.errors import ConfigurationError
from activevision.field import FieldDimensions, FieldModel, LandmarkType
from activevision.geometry import Pose2D
from activevision.selftest import check_ball_sweep, check_render_disc

from .conftest import intr_tuple

# pose (0.5, -0.3, 0.4), cam (0.2, pi/6), default intrinsics; pixel coordinates
# frozen from oracles.camera_matrix (homogeneous transform chain)
PROJECTION_GOLDEN = [
    (1.46, -0.0, (118.3263647501895, 62.66261603646849)),
    (1.38, 0.18, (92.7411759294049, 60.335479915456496)),
    (1.26, 0.34, (67.37921132848291, 60.89170772350768)),
    (1.12, 0.48, (41.47377587612692, 63.31228327139977)),
    (1.93, 0.14, (121.90893223396843, 39.90610356716722)),
    (1.82, 0.42, (93.70764980519567, 37.619518099684036)),
    (1.65, 0.67, (66.28535373180635, 37.591643217096795)),
    (1.43, 0.87, (38.434563049806584, 39.92301843301579)),
    (2.41, 0.29, (123.47262102827567, 26.67443852081761)),
    (2.26, 0.66, (94.24803777108396, 24.91826180470311)),
    (2.03, 0.99, (65.77727651041643, 24.98776972851851)),
    (1.74, 1.27, (36.2335073445895, 26.66640535213326)),
    (2.89, 0.44, (124.4705226306783, 18.230367168335036)),
    (2.69, 0.9, (94.30876424629753, 16.915533890620306)),
    (2.41, 1.31, (65.45165370552941, 16.910043617191263)),
    (2.05, 1.66, (35.2314400685628, 18.294020748937715)),
    (3.37, 0.59, (125.16267023672603, 12.373533430574566)),
    (3.13, 1.14, (94.5925641657191, 11.253616281314603)),
    (2.79, 1.63, (65.22516468962715, 11.2915297716476)),
    (2.36, 2.05, (34.53423751212684, 12.468815108096488)),
]

poses = st.builds(Pose2D, st.floats(-4.5, 4.5), st.floats(-3.0, 3.0), st.floats(-math.pi, math.pi))
cams = st.builds(CameraPosition, st.floats(PAN_LIMITS[0] + 1e-3, PAN_LIMITS[1] - 1e-3),
                 st.floats(TILT_LIMITS[0] + 1e-3, TILT_LIMITS[1] - 1e-3))


def _axis_point(intr, tilt, height=0.0):
    """Ground (or ``height``) point on the optical axis for pose origin, pan 0."""
    s = (intr.mount_height - height) / math.sin(tilt)
    return intr.mount_forward_offset + s * math.cos(tilt), s


class TestCameraTypes:
    @pytest.mark.parametrize("pan,tilt", [(math.pi / 2, 0.5), (0.0, math.pi / 36), (0.0, 13 * math.pi / 36),
                                          (-2.0, 0.5)])
    def test_joint_limits(self, pan, tilt):
        with pytest.raises(ConfigurationError):
            CameraPosition(pan, tilt)

    def test_intrinsics_validation(self):
        with pytest.raises(ConfigurationError):
            CameraIntrinsics(horizontal_fov=math.pi).validate()
        with pytest.raises(ConfigurationError):
            VisibilityThresholds(linepoint=0.0).validate()

    def test_focal_and_vertical_fov(self, intr):
        assert intr.focal == pytest.approx(80 / math.tan(math.radians(30)))
        assert intr.vertical_fov == pytest.approx(2 * math.atan(60 / intr.focal))


class TestProjection:
    def test_golden_points(self, intr):
        pose, cam = Pose2D(0.5, -0.3, 0.4), CameraPosition(0.2, math.pi / 6)
        for x, y, (u, v) in PROJECTION_GOLDEN:
            got = project(pose, cam, intr, (x, y))
            assert got is not None
            assert got[0] == pytest.approx(u, abs=1e-9)
            assert got[1] == pytest.approx(v, abs=1e-9)

    def test_optical_axis_hits_centre(self, intr):
        x, _ = _axis_point(intr, 0.5)
        u, v = project(Pose2D(0, 0, 0), CameraPosition(0.0, 0.5), intr, (x, 0.0))
        assert abs(u - 80) <= 0.5 and abs(v - 60) <= 0.5

    def test_behind_camera_is_empty(self, intr):
        assert project(Pose2D(0, 0, 0), CameraPosition(0.0, 0.5), intr, (-2.0, 0.0)) is None

    @given(pose=poses, cam=cams, x=st.floats(-5, 5), y=st.floats(-3.5, 3.5))
    def test_matches_matrix_chain(self, pose, cam, x, y):
        intr = CameraIntrinsics()
        P = O.camera_matrix(pose.x, pose.y, pose.theta, cam.pan, cam.tilt, *intr_tuple(intr))
        ref = O.project_homogeneous(P, (x, y), 160, 120)
        got = project(pose, cam, intr, (x, y))
        if ref is None or got is None:
            # only disagree within float noise of the image border
            other = ref or got
            assume(other is None or min(other[0], 160 - other[0], other[1], 120 - other[1]) > 1e-6)
            assert ref is None and got is None
        else:
            assert got == pytest.approx(ref, abs=1e-6)


class TestVisibility:
    def test_empty_field(self, intr, thr):
        empty = FieldModel(FieldDimensions(), ())
        assert visible_landmarks(Pose2D(0, 0, 0), CameraPosition(0.0, 0.5), empty, thr, intr) == []

    def test_tiny_thresholds(self, field, intr):
        tiny = VisibilityThresholds(1e-6, 1e-6, 1e-6, 1e-6)
        assert visible_landmarks(Pose2D(0.1, 0.1, 0.0), CameraPosition(0.0, 0.5), field, tiny, intr) == []

    def test_centre_facing_goal_matches_brute_force(self, field, intr, thr):
        pose, cam = Pose2D(0.0, 0.0, 0.0), CameraPosition(0.0, math.pi / 6)
        mine = [lm.id for lm in visible_landmarks(pose, cam, field, thr, intr)]
        ref = O.visible_ids(pose.as_array(), cam.pan, cam.tilt, [tuple(p) for p in field.positions],
                            [int(k) for k in field.kinds], thr.as_array(), intr_tuple(intr))
        assert mine == [field.landmarks[i].id for i in ref]
        assert mine  # the centre circle is in view

    @given(pose=poses, cam=cams)
    def test_projection_consistency(self, pose, cam):
        from activevision.field import build_field
        f, intr, thr = build_field(), CameraIntrinsics(), VisibilityThresholds()
        for lm in visible_landmarks(pose, cam, f, thr, intr):
            assert project(pose, cam, intr, lm.position) is not None

    @given(pose=poses, cam=cams, grow=st.floats(0.0, 3.0), which=st.integers(0, 3))
    def test_threshold_monotone(self, pose, cam, grow, which):
        from activevision.field import build_field
        f, intr = build_field(), CameraIntrinsics()
        base = VisibilityThresholds()
        vals = list(base.as_array())
        vals[which] += grow
        big = VisibilityThresholds(*vals)
        small_set = visible_mask(pose, cam, intr, f, base)
        big_set = visible_mask(pose, cam, intr, f, big)
        assert np.all(big_set[small_set])

    @given(pose=poses, cam=cams, delta=st.floats(-0.5, 0.5))
    def test_pan_equivariance(self, pose, cam, delta):
        assume(PAN_LIMITS[0] + 1e-3 < cam.pan - delta < PAN_LIMITS[1] - 1e-3)
        from activevision.field import build_field
        f, intr, thr = build_field(), CameraIntrinsics(), VisibilityThresholds()
        a = visible_mask(pose, cam, intr, f, thr)
        b = visible_mask(Pose2D(pose.x, pose.y, pose.theta + delta), CameraPosition(cam.pan - delta, cam.tilt),
                         intr, f, thr)
        # landmarks sitting on the image border may flip through rounding only
        diff = np.flatnonzero(a != b)
        for i in diff:
            u, v = project(pose, cam, intr, tuple(f.positions[i])) or (0.0, 0.0)
            assert min(abs(u), abs(160 - u), abs(v), abs(120 - v)) < 1e-6


class TestBallVisible:
    def test_on_axis(self, intr):
        x, _ = _axis_point(intr, 0.4, height=0.07)
        assert ball_visible(Pose2D(0, 0, 0), CameraPosition(0.0, 0.4), intr, (x, 0.0))

    def test_behind(self, intr):
        assert not ball_visible(Pose2D(0, 0, 0), CameraPosition(0.0, 0.4), intr, (-1.0, 0.0))

    def test_pan_sweep_matches_closed_form(self, rng):
        ok, detail = check_ball_sweep(rng)
        assert ok, detail


class TestRender:
    def test_sky_facing_is_uniform(self, field, intr):
        img = render(Pose2D(4.4, 0.0, 0.0), CameraPosition(0.0, TILT_LIMITS[0] + 1e-3), intr, field, (0.0, 0.0))
        assert np.all(img.pixels == round(BACKGROUND * 255))

    def test_deterministic_with_noise(self, field, intr):
        args = (Pose2D(0.3, 0.2, 0.1), CameraPosition(0.1, 0.5), intr, field, (1.0, 0.2), 0.05, 99)
        assert np.array_equal(render(*args).pixels, render(*args).pixels)

    def test_disc_diameter(self, rng):
        ok, detail = check_render_disc(rng)
        assert ok, detail

    def test_pgm_round_trip(self, field, intr, tmp_path):
        img = render(Pose2D(0, 0, 0), CameraPosition(0.0, 0.5), intr, field, (1.0, 0.0))
        back = GrayImage.read_pgm(img.write_pgm(tmp_path / "a.pgm"))
        assert back.width == 160 and back.height == 120
        assert np.array_equal(back.pixels, img.pixels)
        assert len(img.pixels.ravel()) == 160 * 120

    @given(pose=poses, cam=cams)
    def test_visible_linepoints_are_painted(self, pose, cam):
        from activevision.field import build_field
        f, intr, thr = build_field(), CameraIntrinsics(), VisibilityThresholds()
        img = render(pose, cam, intr, f, (100.0, 100.0)).pixels
        bg = round(BACKGROUND * 255)
        for lm in visible_landmarks(pose, cam, f, thr, intr):
            if lm.kind != LandmarkType.LinePoint:
                continue
            u, v = project(pose, cam, intr, lm.position)
            c, r = int(u), int(v)
            win = img[max(r - 3, 0):r + 4, max(c - 3, 0):c + 4]
            assert np.any(win > bg)
