import numpy as np
import pytest

from mtvloop.errors import NumericError
from mtvloop.renderer import LoopableVolume, Mpi, RenderWindow, render_mpi
from mtvloop.scene_io import DatasetConfig, load_dataset, make_synthetic_scene
from mtvloop.stage1 import (
    AdamState,
    Stage1Config,
    Stage1LossTerms,
    adam_step,
    bce_loss,
    bce_loss_grad,
    choose_reference_view,
    init_parameters,
    load_stage1_checkpoint,
    mse_loss,
    save_stage1_checkpoint,
    sparsity_loss,
    sparsity_loss_grad,
    stage1_loss_and_grads,
    stage1_total,
    train_stage1,
    tv_loss,
    tv_loss_grad,
)
from mtvloop.metrics import psnr

from conftest import (
    finite_diff,
    lattice_array,
    make_camera,
    make_scene_spec,
    max_rel_err,
    random_loopable,
    random_mpi,
)


class TestMseLoss:
    def test_identical_is_zero(self, rng):
        x = rng.uniform(size=(5, 7, 3))
        assert mse_loss(x, x) == 0.0

    def test_constant_offset_closed_form(self):
        pred = np.full((10, 10, 3), 0.6)
        target = np.full((10, 10, 3), 0.5)
        # 0.1 deviation summed over 3 channels: 3 * 0.01
        assert abs(mse_loss(pred, target) - 0.03) < 1e-12

    def test_matches_scalar_oracle(self, rng):
        pred = rng.uniform(size=(4, 6, 3))
        target = rng.uniform(size=(4, 6, 3))
        acc = 0.0
        for y in range(4):
            for x in range(6):
                for c in range(3):
                    acc += (pred[y, x, c] - target[y, x, c]) ** 2
        assert abs(mse_loss(pred, target) - acc / 24) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))


class TestBceLoss:
    def test_perfect_prediction_is_tiny(self):
        eps = 1e-6
        target = np.array([[0.0, 1.0]])
        pred = np.array([[eps, 1.0 - eps]])
        assert bce_loss(pred, target) < 2e-6

    def test_uniform_half_is_log2(self):
        pred = np.full((8, 8), 0.5)
        target = (np.arange(64).reshape(8, 8) % 2).astype(float)
        assert abs(bce_loss(pred, target) - np.log(2.0)) < 1e-12

    def test_matches_scalar_oracle(self, rng):
        pred = rng.uniform(0.05, 0.95, size=(5, 4))
        target = rng.integers(0, 2, size=(5, 4)).astype(float)
        acc = 0.0
        for y in range(5):
            for x in range(4):
                p, t = pred[y, x], target[y, x]
                acc += -(t * np.log(p) + (1 - t) * np.log(1 - p))
        assert abs(bce_loss(pred, target) - acc / 20) < 1e-9


class TestTvLoss:
    def test_constant_is_zero(self):
        assert tv_loss(np.full((3, 8, 8, 4), 0.25)) == 0.0

    def test_two_pixel_closed_form(self):
        # single plane, H=1, W=2, one active channel: |1-0| / (H*W) = 1/2
        planes = np.zeros((1, 1, 2, 4))
        planes[0, 0, 1, 0] = 1.0
        assert abs(tv_loss(planes) - 0.5) < 1e-12

    def test_matches_scalar_oracle(self, rng):
        planes = rng.uniform(size=(2, 5, 6, 4))
        acc = 0.0
        for d in range(2):
            for c in range(4):
                for y in range(5):
                    for x in range(6):
                        if x + 1 < 6:
                            acc += abs(planes[d, y, x + 1, c] - planes[d, y, x, c])
                        if y + 1 < 5:
                            acc += abs(planes[d, y + 1, x, c] - planes[d, y, x, c])
        assert abs(tv_loss(planes) - acc / 30) < 1e-9


class TestSparsityLoss:
    def test_one_hot_everywhere_is_one(self):
        alpha = np.zeros((4, 3, 3))
        alpha[2] = 0.7
        assert abs(sparsity_loss(alpha) - 1.0) < 1e-12

    def test_uniform_is_sqrt_d(self):
        alpha = np.full((9, 4, 4), 0.3)
        assert abs(sparsity_loss(alpha) - 3.0) < 1e-12

    def test_all_zero_is_zero(self):
        assert sparsity_loss(np.zeros((4, 3, 3))) == 0.0


class TestStage1Total:
    def test_zero_components(self):
        assert stage1_total(Stage1LossTerms()) == 0.0

    def test_default_weights(self):
        terms = Stage1LossTerms(mse=1.0, bce=1.0, tv=1.0, sparsity=1.0)
        assert abs(stage1_total(terms) - 2.504) < 1e-12

    def test_zero_weights(self):
        terms = Stage1LossTerms(mse=0.25, bce=0.5, tv=9.0, sparsity=9.0)
        assert stage1_total(terms, 0.0, 0.0) == 0.75


def adam_reference(param, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar textbook implementation."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


class TestAdamStep:
    def test_zero_gradient_keeps_params(self):
        p = np.full((3, 3), 0.4)
        state = AdamState([p])
        adam_step([p], [np.zeros((3, 3))], state, lr=0.1)
        assert np.allclose(p, 0.4)
        assert state.step == 1

    def test_first_step_closed_form(self):
        p = np.array([0.5])
        state = AdamState([p])
        adam_step([p], [np.array([1.0])], state, lr=0.1, clamp=None)
        # bias-corrected m_hat / sqrt(v_hat) is exactly 1
        assert abs(p[0] - (0.5 - 0.1 / (1.0 + 1e-8))) < 1e-15

    def test_two_steps_match_reference(self):
        p = np.array([0.8])
        state = AdamState([p])
        grads = [0.3, -0.7]
        for g in grads:
            adam_step([p], [np.array([g])], state, lr=0.05, clamp=None)
        assert abs(p[0] - adam_reference(0.8, grads, lr=0.05)) < 1e-12

    def test_clamps_to_unit_interval(self):
        p = np.array([0.01])
        state = AdamState([p])
        adam_step([p], [np.array([5.0])], state, lr=0.5)
        assert p[0] == 0.0

    def test_non_finite_gradient_raises(self):
        p = np.array([0.5])
        state = AdamState([p])
        with pytest.raises(NumericError):
            adam_step([p], [np.array([np.nan])], state, lr=0.1)


class TestStage1Gradients:
    def test_total_loss_gradient_matches_fd(self, rng):
        cfg = Stage1Config(num_planes=2, dtype="float64")
        mpi = random_mpi(rng, num_planes=2, height=6, width=6)
        # distinct lattice values keep the TV kinks away from the FD step
        mpi.planes[...] = lattice_array(rng, mpi.planes.shape)
        loop = random_loopable(rng, mpi)
        tgt = make_camera(width=6, height=6, center=(0.1, 0.0, 0.0))
        window = RenderWindow(view=tgt, origin=(1, 0), size=(4, 5))
        target_rgb = rng.uniform(0.1, 0.9, size=(4, 5, 3))
        target_mask = rng.integers(0, 2, size=(4, 5)).astype(float)

        def loss():
            total, *_ = stage1_loss_and_grads(mpi, loop, window, target_rgb,
                                              target_mask, cfg)
            return total

        total, terms, d_planes, d_loop = stage1_loss_and_grads(
            mpi, loop, window, target_rgb, target_mask, cfg)
        fd_planes, fd_loop = finite_diff(loss, [mpi.planes, loop.values])
        assert max_rel_err(d_planes, fd_planes) < 1e-5
        assert max_rel_err(d_loop, fd_loop) < 1e-5

    def test_tv_gradient_matches_fd(self, rng):
        planes = lattice_array(rng, (2, 4, 5, 4))
        _, grad = tv_loss_grad(planes)
        (fd,) = finite_diff(lambda: tv_loss(planes), [planes])
        assert max_rel_err(grad, fd, floor=1e-5) < 1e-6

    def test_sparsity_gradient_matches_fd(self, rng):
        alpha = rng.uniform(0.1, 0.9, size=(3, 4, 4))
        _, grad = sparsity_loss_grad(alpha)
        (fd,) = finite_diff(lambda: sparsity_loss(alpha), [alpha])
        assert max_rel_err(grad, fd) < 1e-5

    def test_bce_gradient_matches_fd(self, rng):
        pred = rng.uniform(0.1, 0.9, size=(4, 4))
        target = rng.integers(0, 2, size=(4, 4)).astype(float)
        _, grad = bce_loss_grad(pred, target)
        (fd,) = finite_diff(lambda: bce_loss(pred, target), [pred])
        assert max_rel_err(grad, fd) < 1e-6


class TestChooseReferenceView:
    def test_central_camera_wins(self):
        cams = [make_camera(center=(x, 0.0, 0.0)) for x in (-1.0, -0.1, 1.0)]
        assert choose_reference_view(cams) == 1


@pytest.fixture(scope="module")
def static_scene(tmp_path_factory):
    spec = make_scene_spec(num_views=3, width=48, height=32, num_frames=6,
                           animated=False)
    root = tmp_path_factory.mktemp("static_scene")
    scene = make_synthetic_scene(spec, root / "scene")
    views = load_dataset(scene.root, DatasetConfig(base_min_period=2))
    return scene, views


@pytest.fixture(scope="module")
def animated_scene(tmp_path_factory):
    spec = make_scene_spec(num_views=3, width=48, height=32, num_frames=12,
                           period=6)
    root = tmp_path_factory.mktemp("anim_scene")
    scene = make_synthetic_scene(spec, root / "scene")
    views = load_dataset(scene.root, DatasetConfig(base_min_period=2))
    return scene, views


class TestTrainStage1:
    def test_converges_on_static_scene(self, static_scene):
        scene, views = static_scene
        cfg = Stage1Config(num_planes=4, window=(16, 24), epochs=30,
                           windows_per_view=16, lr=0.05, lambda_tv=0.1, seed=3)
        result = train_stage1(views, cfg, near=2.0, far=8.0)
        for view in views:
            rendered = render_mpi(result.mpi, None,
                                  RenderWindow(view=view.camera)).rgb
            assert psnr(rendered, view.average_image) > 30.0

        # loss trend: 5-epoch moving average decreases over the first epochs
        totals = [row["total"] for row in result.loss_history]
        early = np.mean(totals[:5])
        later = np.mean(totals[5:10])
        assert later < early

    def test_loop_volume_recovers_animation_mask(self, animated_scene):
        scene, views = animated_scene
        cfg = Stage1Config(num_planes=4, window=(16, 24), epochs=30,
                           windows_per_view=16, lr=0.05, lambda_tv=0.1, seed=3)
        result = train_stage1(views, cfg, near=2.0, far=8.0)
        ref = scene.spec.reference_index
        res = render_mpi(result.mpi, result.loopable,
                         RenderWindow(view=views[ref].camera))
        predicted = res.loop_mask > 0.5
        actual = scene.gt_masks[ref].astype(bool)
        inter = np.sum(predicted & actual)
        union = np.sum(predicted | actual)
        assert inter / union > 0.8

    def test_zero_epochs_returns_initialization(self, static_scene):
        _, views = static_scene
        cfg = Stage1Config(num_planes=3, epochs=0, seed=11, dtype="float64")
        result = train_stage1(views, cfg, near=2.0, far=8.0)
        rng = np.random.default_rng(11)
        planes, loop = init_parameters(result.mpi.stack, cfg, rng)
        assert np.array_equal(result.mpi.planes, planes)
        assert np.array_equal(result.loopable.values, loop)

    def test_deterministic_at_float64(self, static_scene):
        _, views = static_scene
        cfg = Stage1Config(num_planes=2, window=(16, 16), epochs=2,
                           windows_per_view=2, seed=7, dtype="float64")
        a = train_stage1(views, cfg, near=2.0, far=8.0)
        b = train_stage1(views, cfg, near=2.0, far=8.0)
        assert np.array_equal(a.mpi.planes, b.mpi.planes)
        assert np.array_equal(a.loopable.values, b.loopable.values)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        mpi = random_mpi(rng, num_planes=3, height=8, width=10,
                         dtype=np.float32)
        loop = random_loopable(rng, mpi, dtype=np.float32)
        path = tmp_path / "ck.mpi"
        save_stage1_checkpoint(path, mpi, loop, {"note": "test"})
        mpi2, loop2, header = load_stage1_checkpoint(path)
        assert np.array_equal(mpi2.planes, mpi.planes)
        assert np.array_equal(loop2.values, loop.values)
        assert np.allclose(mpi2.stack.depths, mpi.stack.depths)
        assert mpi2.stack.reference == mpi.stack.reference
        assert (tmp_path / "ck.mpi.json").exists()

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mpi"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        from mtvloop.errors import DataError
        with pytest.raises(DataError, match="magic"):
            load_stage1_checkpoint(path)
