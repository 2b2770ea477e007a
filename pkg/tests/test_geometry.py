import numpy as np
import pytest

from mtvloop.geometry import (
    CameraModel,
    SampleGrid,
    disparity_depths,
    homography_grid,
    plane_homography,
    resize_bilinear,
    translation_homography,
    warp_bilinear,
)

from conftest import make_camera, rotation_about


class TestDisparityDepths:
    def test_endpoints(self):
        depths = disparity_depths(1.0, 1e6, 2)
        assert np.allclose(depths, [1.0, 1e6])

    def test_closed_form_three_planes(self):
        # disparities [1, 2/3, 1/3] -> depths [1, 1.5, 3]
        depths = disparity_depths(1.0, 3.0, 3)
        assert np.allclose(depths, [1.0, 1.5, 3.0])

    def test_increasing(self):
        depths = disparity_depths(0.5, 40.0, 16)
        assert np.all(np.diff(depths) > 0)

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            disparity_depths(2.0, 2.0, 2)
        with pytest.raises(ValueError):
            disparity_depths(-1.0, 2.0, 2)
        with pytest.raises(ValueError):
            disparity_depths(1.0, 2.0, 1)


def project(camera, points):
    """Pinhole projection of (N, 3) world points to pixel coordinates."""
    cam = points @ camera.rotation.T + camera.translation
    pix = cam @ camera.intrinsics.T
    return pix[:, :2] / pix[:, 2:3]


class TestPlaneHomography:
    def test_identity_when_target_is_reference(self):
        cam = make_camera()
        for depth in (0.5, 2.0, 113.0):
            hom = plane_homography(cam, cam, depth)
            assert np.allclose(hom, np.eye(3), atol=1e-12)

    def test_pure_translation_gives_pixel_shift(self):
        # target translated by (b, 0, 0) in the ref frame: inverse warp maps
        # target pixels to ref pixels shifted by +fx*b/depth
        ref = make_camera(width=20, height=12, fx=30.0)
        baseline, depth = 0.35, 2.5
        tgt = make_camera(width=20, height=12, fx=30.0, center=(baseline, 0, 0))
        hom = plane_homography(ref, tgt, depth)

        # oracle: project plane points through both cameras, fit the shift
        xs = np.linspace(-0.8, 0.8, 7)
        pts = np.stack([xs, 0.3 * xs, np.full_like(xs, depth)], axis=1)
        ref_pix = project(ref, pts)
        tgt_pix = project(tgt, pts)
        shifts = ref_pix - tgt_pix
        expected = ref.fx * baseline / depth
        assert np.allclose(shifts[:, 0], expected, atol=1e-9)
        assert np.allclose(shifts[:, 1], 0.0, atol=1e-9)

        mapped = np.concatenate([tgt_pix, np.ones((len(pts), 1))], axis=1) @ hom.T
        mapped = mapped[:, :2] / mapped[:, 2:3]
        assert np.allclose(mapped, ref_pix, atol=1e-9)

    def test_parallax_vanishes_at_infinity(self):
        ref = make_camera(fx=30.0)
        tgt = make_camera(fx=30.0, center=(0.5, 0.0, 0.0))
        hom = plane_homography(ref, tgt, 1e9)
        assert np.allclose(hom, np.eye(3), atol=1e-6)

    def test_general_pose_matches_projection_oracle(self, rng):
        ref = make_camera(width=24, height=18, fx=35.0)
        rot = rotation_about([0.2, 1.0, 0.1], 0.15)
        tgt = make_camera(width=24, height=18, fx=33.0,
                          center=(0.3, -0.2, 0.1), rotation=rot)
        depth = 3.0
        xy = rng.uniform(-1.0, 1.0, size=(40, 2))
        pts = np.concatenate([xy, np.full((40, 1), depth)], axis=1)
        ref_pix = project(ref, pts)
        tgt_pix = project(tgt, pts)
        hom = plane_homography(ref, tgt, depth)
        mapped = np.concatenate([tgt_pix, np.ones((40, 1))], axis=1) @ hom.T
        mapped = mapped[:, :2] / mapped[:, 2:3]
        assert np.allclose(mapped, ref_pix, atol=1e-8)

    def test_degenerate_plane_through_camera(self):
        ref = make_camera()
        tgt = make_camera(center=(0.0, 0.0, 2.0))
        with pytest.raises(ValueError, match="degenerate"):
            plane_homography(ref, tgt, 2.0)

    def test_invalid_depth(self):
        cam = make_camera()
        with pytest.raises(ValueError):
            plane_homography(cam, cam, -1.0)


def warp_reference(image, hom, out_size):
    """Naive per-pixel scalar inverse warp used as the oracle."""
    h, w = out_size
    height, width = image.shape[:2]
    out = np.zeros((h, w, image.shape[2]))
    for y in range(h):
        for x in range(w):
            p = hom @ np.array([x, y, 1.0])
            if abs(p[2]) < 1e-12:
                continue
            sx, sy = p[0] / p[2], p[1] / p[2]
            x0, y0 = int(np.floor(sx)), int(np.floor(sy))
            wx, wy = sx - x0, sy - y0
            acc = np.zeros(image.shape[2])
            for dy, fy in ((0, 1 - wy), (1, wy)):
                for dx, fx in ((0, 1 - wx), (1, wx)):
                    yy, xx = y0 + dy, x0 + dx
                    if 0 <= yy < height and 0 <= xx < width:
                        acc += fy * fx * image[yy, xx]
            out[y, x] = acc
    return out


class TestWarpBilinear:
    def test_identity_is_bit_exact(self, rng):
        img = rng.uniform(size=(9, 13, 3))
        out = warp_bilinear(img, np.eye(3), (9, 13))
        assert np.array_equal(out, img)

    def test_integer_translation_shifts_with_zero_border(self, rng):
        img = rng.uniform(size=(8, 8, 2))
        out = warp_bilinear(img, translation_homography(2.0, 1.0), (8, 8))
        assert np.array_equal(out[:7, :6], img[1:, 2:])
        assert np.all(out[7:, :] == 0)
        assert np.all(out[:, 6:] == 0)

    def test_matches_scalar_oracle(self, rng):
        img = rng.uniform(size=(10, 12, 3))
        hom = np.array([[0.9, 0.05, 1.2], [-0.04, 1.1, -0.7], [1e-3, -2e-3, 1.0]])
        ours = warp_bilinear(img, hom, (11, 9))
        oracle = warp_reference(img, hom, (11, 9))
        assert np.max(np.abs(ours - oracle)) < 1e-6

    def test_composition_property(self, rng):
        # smooth image so resampling error stays small
        ys, xs = np.mgrid[0:32, 0:32] / 32.0
        img = np.stack([0.5 + 0.4 * np.sin(2 * np.pi * xs),
                        0.5 + 0.4 * np.cos(2 * np.pi * ys),
                        0.3 + 0.3 * xs * ys], axis=-1)
        h1 = translation_homography(1.3, -0.4)
        h2 = np.array([[1.02, 0.01, 0.5], [0.0, 0.98, 0.2], [0.0, 0.0, 1.0]])
        two_step = warp_bilinear(warp_bilinear(img, h1, (32, 32)), h2, (32, 32))
        one_step = warp_bilinear(img, h1 @ h2, (32, 32))
        interior = (slice(4, 28), slice(4, 28))
        err = np.mean(np.abs(two_step[interior] - one_step[interior]))
        assert err < 2e-2

    def test_preserves_value_range(self, rng):
        img = rng.uniform(size=(8, 8, 4))
        hom = np.array([[1.1, 0.2, -1.0], [0.1, 0.8, 0.3], [0.001, 0.0, 1.0]])
        out = warp_bilinear(img, hom, (10, 10))
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSampleGrid:
    def test_gather_scatter_adjoint(self, rng):
        grid = homography_grid(
            np.array([[0.93, 0.1, 0.7], [-0.06, 1.05, -0.4], [0.002, 0.001, 1.0]]),
            (7, 9), (8, 10))
        img = rng.uniform(size=(8, 10, 3))
        cotangent = rng.uniform(size=(7, 9, 3))
        fwd = float(np.sum(grid.gather(img) * cotangent))
        back = np.zeros_like(img)
        grid.scatter_add(cotangent, back)
        assert abs(fwd - float(np.sum(back * img))) < 1e-10


class TestResizeBilinear:
    def test_constant_stays_constant(self):
        img = np.full((16, 16, 4), 0.37)
        out = resize_bilinear(img, (8, 8))
        assert np.allclose(out, 0.37)

    def test_ramp_round_trip(self):
        xs = np.linspace(0.0, 1.0, 16)
        img = np.tile(xs, (16, 1))[..., None]
        down = resize_bilinear(img, (8, 8))
        up = resize_bilinear(down, (16, 16))
        assert np.max(np.abs(up - img)) < 0.05


class TestCameraModel:
    def test_rejects_bad_rotation(self):
        bad = np.eye(3)
        bad[0, 0] = 1.1
        with pytest.raises(ValueError):
            CameraModel(fx=10, fy=10, cx=5, cy=5, width=10, height=10,
                        rotation=bad, translation=np.zeros(3))

    def test_rejects_reflection(self):
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            CameraModel(fx=10, fy=10, cx=5, cy=5, width=10, height=10,
                        rotation=refl, translation=np.zeros(3))

    def test_json_round_trip(self):
        cam = make_camera(center=(0.1, -0.2, 0.3),
                          rotation=rotation_about([0, 1, 0], 0.2))
        again = CameraModel.from_json(cam.to_json())
        assert again == cam

    def test_resized_projection_consistency(self):
        cam = make_camera(width=20, height=10, fx=25.0, center=(0.1, 0.0, -0.5))
        scaled = cam.resized(40, 20)
        pts = np.array([[0.2, -0.1, 3.0], [0.0, 0.3, 5.0]])
        orig = project(cam, pts)
        new = project(scaled, pts)
        assert np.allclose(new, (orig + 0.5) * 2.0 - 0.5, atol=1e-12)
