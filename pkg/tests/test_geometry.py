import math

import numpy as np
import pytest

from panolab.errors import GeometryDomainError, InvalidInputError
from panolab.geometry import (
    CameraIntrinsics,
    CameraPose,
    EquirectFrame,
    ImageBuffer,
    Projection8DoF,
    SceneModel,
    apply_pose,
    bilinear_sample,
    direction_to_equirect,
    equirect_to_direction,
    pixel_to_ray,
    pitch_matrix,
    ray_to_scene_point,
    roll_matrix,
    solid_angle_fraction,
    warp_equirect_to_perspective,
    warp_perspective_to_equirect,
    yaw_matrix,
    yaw_shift,
)
from panolab.metrics import interior_mask, psnr
from panolab.synthetic import smooth_texture, sphere_texture_frame


def test_image_buffer_promotes_2d_and_validates():
    buf = ImageBuffer(np.zeros((4, 6)))
    assert buf.data.shape == (4, 6, 1)
    with pytest.raises(InvalidInputError):
        ImageBuffer(np.zeros((4, 6, 2)))
    with pytest.raises(InvalidInputError):
        ImageBuffer(np.full((4, 6, 3), np.nan))


def test_equirect_frame_requires_two_to_one():
    EquirectFrame(ImageBuffer(np.zeros((8, 16, 3))))
    with pytest.raises(InvalidInputError):
        EquirectFrame(ImageBuffer(np.zeros((8, 15, 3))))


def test_pixel_to_ray_inverts_intrinsic_matrix():
    rng = np.random.default_rng(2)
    for _ in range(20):
        intr = CameraIntrinsics(
            fx=50 + 200 * rng.random(), fy=50 + 200 * rng.random(),
            cx=rng.normal(128, 10), cy=rng.normal(128, 10),
            skew=rng.normal(0, 2),
        )
        pix = rng.uniform(0, 256, size=2)
        ray = pixel_to_ray(intr, pix)
        assert ray.shape == (3,)
        assert math.isclose(np.linalg.norm(ray), 1.0, abs_tol=1e-12)
        proj = intr.matrix @ ray
        assert np.allclose(proj[:2] / proj[2], pix, atol=1e-9)


def test_pixel_to_ray_broadcasts():
    intr = CameraIntrinsics(100, 100, 64, 64, 0)
    grid = np.stack(np.meshgrid(np.arange(4.0), np.arange(3.0)), axis=-1)
    rays = pixel_to_ray(intr, grid)
    assert rays.shape == (3, 4, 3)
    assert np.allclose(np.linalg.norm(rays, axis=-1), 1.0)


def test_principal_point_ray_is_forward():
    intr = CameraIntrinsics(120, 120, 64, 48, 0)
    assert np.allclose(pixel_to_ray(intr, (64.0, 48.0)), [0.0, 0.0, 1.0])


def test_rotation_matrices_follow_right_hand_rule():
    assert np.allclose(yaw_matrix(90.0) @ [0, 0, 1], [1, 0, 0], atol=1e-12)
    assert np.allclose(pitch_matrix(90.0) @ [0, 1, 0], [0, 0, 1], atol=1e-12)
    assert np.allclose(roll_matrix(90.0) @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_pose_euler_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        yaw = rng.uniform(-179, 179)
        pitch = rng.uniform(-89, 89)
        roll = rng.uniform(-179, 179)
        pose = CameraPose.from_euler(yaw, pitch, roll, translation=rng.normal(size=3))
        got_yaw, got_pitch, got_roll = pose.to_euler()
        assert math.isclose(got_yaw, yaw, abs_tol=1e-9)
        assert math.isclose(got_pitch, pitch, abs_tol=1e-9)
        assert math.isclose(got_roll, roll, abs_tol=1e-9)


def test_pose_rejects_non_rotation():
    with pytest.raises(InvalidInputError):
        CameraPose(rotation=np.eye(3) * 2.0)
    with pytest.raises(InvalidInputError):
        CameraPose(rotation=-np.eye(3))  # det -1


def test_apply_pose_is_camera_to_world():
    pose = CameraPose.from_euler(yaw_deg=90.0, translation=(1.0, 2.0, 3.0))
    world = apply_pose(pose, [0.0, 0.0, 1.0])
    assert np.allclose(world, [2.0, 2.0, 3.0], atol=1e-12)


def test_projection8dof_expand_pins_vertical_translation():
    proj = Projection8DoF(fx=100, fy=100, cx=64, cy=64, skew=0.5,
                          tx=0.2, ty=0.3, yaw_deg=10.0)
    intr, pose = proj.expand()
    assert intr.skew == 0.5
    assert np.allclose(pose.translation, [0.2, 0.0, 0.3])
    yaw, pitch, roll = pose.to_euler()
    assert (pitch, roll) == (0.0, 0.0)
    assert math.isclose(yaw, 10.0, abs_tol=1e-12)


def test_ray_scene_intersection_lies_on_sphere():
    scene = SceneModel(radius=2.0)
    rng = np.random.default_rng(1)
    for _ in range(30):
        origin = rng.uniform(-0.8, 0.8, size=3)
        direction = rng.normal(size=3)
        p = ray_to_scene_point(origin, direction / np.linalg.norm(direction), scene)
        assert math.isclose(np.linalg.norm(p), 2.0, rel_tol=1e-12)
        # the hit must be in front of the origin
        assert np.dot(p - origin, direction) > 0


def test_camera_outside_scene_rejected():
    with pytest.raises(GeometryDomainError):
        ray_to_scene_point([1.5, 0, 0], [0, 0, 1], SceneModel(radius=1.0))


def test_equirect_direction_round_trip():
    rng = np.random.default_rng(3)
    w, h = 512, 256
    d = rng.normal(size=(200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    u, v = direction_to_equirect(d, w, h)
    back = equirect_to_direction(u, v, w, h)
    assert np.allclose(back, d, atol=1e-9)


def test_forward_direction_maps_to_center():
    u, v = direction_to_equirect(np.array([0.0, 0.0, 1.0]), 512, 256)
    assert (u, v) == (256.0, 128.0)


def test_equirect_u_wraps():
    d1 = equirect_to_direction(10.0, 100.0, 512, 256)
    d2 = equirect_to_direction(522.0, 100.0, 512, 256)
    assert np.allclose(d1, d2, atol=1e-12)


def test_bilinear_sample_hits_grid_exactly():
    rng = np.random.default_rng(7)
    img = ImageBuffer(rng.random((6, 9, 3)))
    xs, ys = np.meshgrid(np.arange(9.0), np.arange(6.0))
    assert np.allclose(bilinear_sample(img, xs, ys), img.data, atol=1e-15)


def test_bilinear_sample_wrap_mixes_edges():
    img = ImageBuffer(np.array([[0.0, 0.5, 1.0]]))
    wrapped = bilinear_sample(img, np.array(2.5), np.array(0.0), wrap_horizontal=True)
    assert np.allclose(wrapped, 0.5 * (1.0 + 0.0))
    clamped = bilinear_sample(img, np.array(2.5), np.array(0.0))
    assert np.allclose(clamped, 1.0)


def test_round_trip_perspective_equirect_perspective():
    src = smooth_texture(128, 128, seed=3)
    intr = CameraIntrinsics(64, 64, 64, 64, 0)
    frame, mask = warp_perspective_to_equirect(src, (intr, CameraPose.identity()), 512, 256)
    back = warp_equirect_to_perspective(frame, intr, CameraPose.identity(), 128, 128)
    value = psnr(src, back, interior_mask(128, 128, 8))
    assert value > 45.0


def test_warp_mask_is_binary_and_matches_solid_angle():
    src = smooth_texture(128, 128, seed=0)
    intr = CameraIntrinsics(64, 64, 64, 64, 0)
    _, mask = warp_perspective_to_equirect(src, (intr, CameraPose.identity()), 512, 256)
    values = np.unique(mask.data)
    assert set(values).issubset({0.0, 1.0})
    # a 90 degree square view covers one sixth of the sphere
    analytic = 4.0 * math.asin(math.sin(math.pi / 4) ** 2) / (4.0 * math.pi)
    assert solid_angle_fraction(mask) == pytest.approx(analytic, rel=2e-3)


def test_translated_camera_must_stay_inside_scene():
    src = smooth_texture(64, 64, seed=0)
    proj = Projection8DoF(fx=32, fy=32, cx=32, cy=32, skew=0, tx=1.5, ty=0, yaw_deg=0)
    with pytest.raises(GeometryDomainError):
        warp_perspective_to_equirect(src, proj, 128, 64)


def test_yaw_warp_equals_yaw_shift_when_grid_aligned():
    """A camera yaw and a cyclic column shift must agree exactly when the
    shift lands on whole pixels."""
    src = smooth_texture(128, 128, seed=3)

    def warp(yaw):
        proj = Projection8DoF(fx=64, fy=64, cx=64, cy=64, skew=0, tx=0, ty=0, yaw_deg=yaw)
        return warp_perspective_to_equirect(src, proj, 512, 256)

    frame90, mask90 = warp(90.0)
    frame0, mask0 = warp(0.0)
    shifted = yaw_shift(frame0, 90.0)
    shifted_mask = yaw_shift(EquirectFrame(mask0), 90.0)
    assert np.max(np.abs(frame90.data - shifted.data)) < 1e-9
    assert np.array_equal(mask90.data, shifted_mask.data)


def test_yaw_shift_fractional_wraps():
    frame = sphere_texture_frame(64, 32, seed=1)
    quarter = yaw_shift(frame, 90.0)
    assert np.allclose(quarter.data, np.roll(frame.data, 16, axis=1))
    tiny = yaw_shift(frame, 0.5)  # sub-pixel, resampled
    assert tiny.data.shape == frame.data.shape
    assert not np.allclose(tiny.data, frame.data)


def test_solid_angle_fraction_full_and_empty():
    full = ImageBuffer(np.ones((32, 64, 1)))
    empty = ImageBuffer(np.zeros((32, 64, 1)))
    assert solid_angle_fraction(full) == pytest.approx(1.0, abs=1e-12)
    assert solid_angle_fraction(empty) == 0.0


def test_intrinsics_validation():
    with pytest.raises(InvalidInputError):
        CameraIntrinsics(0.0, 100, 64, 64, 0)
    with pytest.raises(InvalidInputError):
        CameraIntrinsics(100, 100, 64, 64, float("nan"))


def test_scene_model_radius_positive():
    with pytest.raises(InvalidInputError):
        SceneModel(radius=0.0)
