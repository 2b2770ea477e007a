import numpy as np
import pytest

from mtvloop.geometry import CameraModel, PlaneStack, disparity_depths
from mtvloop.renderer import Mpi, LoopableVolume


def rotation_about(axis, angle):
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def make_camera(width=16, height=16, fx=None, fy=None, center=(0.0, 0.0, 0.0),
                rotation=None):
    """Camera at a world-space center; rotation is world->camera."""
    fx = fx if fx is not None else 1.2 * width
    fy = fy if fy is not None else fx
    rot = np.eye(3) if rotation is None else rotation
    center = np.asarray(center, dtype=np.float64)
    return CameraModel(fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                       width=width, height=height, rotation=rot,
                       translation=-rot @ center)


def random_mpi(rng, num_planes=4, height=16, width=16, camera=None,
               near=2.0, far=8.0, dtype=np.float64, alpha_range=(0.1, 0.9)):
    camera = camera or make_camera(width=width, height=height)
    depths = disparity_depths(near, far, num_planes)
    stack = PlaneStack(depths=depths, reference=camera)
    planes = np.empty((num_planes, height, width, 4), dtype=dtype)
    planes[..., :3] = rng.uniform(0.05, 0.95, size=(num_planes, height, width, 3))
    planes[..., 3] = rng.uniform(*alpha_range, size=(num_planes, height, width))
    return Mpi(planes=planes, stack=stack)


def random_loopable(rng, mpi, dtype=np.float64):
    return LoopableVolume(
        values=rng.uniform(0.05, 0.95, size=mpi.planes.shape[:3]).astype(dtype))


def finite_diff(func, arrays, step=1e-4):
    """Central finite differences of a scalar function of numpy arrays.

    Perturbs entries in place; the actual achieved delta is used as the
    divisor so low-precision parameter storage stays accurate.
    """
    grads = []
    for arr in arrays:
        grad = np.zeros(arr.shape, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi_val = float(flat[i])
            f_hi = func()
            flat[i] = orig - step
            lo_val = float(flat[i])
            f_lo = func()
            flat[i] = orig
            gflat[i] = (f_hi - f_lo) / (hi_val - lo_val)
        grads.append(grad)
    return grads


def lattice_array(rng, shape, lo=0.05, hi=0.95):
    """Random array whose entries are pairwise distinct with spacing well
    above the finite-difference step, keeping L1 kinks out of reach."""
    n = int(np.prod(shape))
    return rng.permutation(np.linspace(lo, hi, n)).reshape(shape)


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def make_scene_spec(num_views=3, width=48, height=32, num_frames=12,
                    period=6, animated=True, seed=5, baseline=0.5,
                    fps=12.0, amplitude=0.3, mid_depth=4.0,
                    backdrop_depth=8.0):
    """Small multi-view scene: opaque flat-textured backdrop plus an
    optional animated mid plane with a rectangular occupied region.

    Plane depths default to values on the D=4 disparity grid of the
    [2, 8] range so the scene is exactly representable.
    """
    from mtvloop.scene_io import (
        PlaneAnimation,
        ScenePlane,
        SceneSpec,
        block_noise_texture,
    )

    gen = np.random.default_rng(seed)
    cameras = []
    offsets = np.linspace(-baseline, baseline, num_views)
    for off in offsets:
        cameras.append(make_camera(width=width, height=height, fx=1.2 * width,
                                   center=(float(off), 0.0, 0.0)))
    backdrop = np.ones((height, width, 4))
    backdrop[..., :3] = block_noise_texture((height, width), gen, coarse=4,
                                            low=0.2, high=0.85)
    planes = []
    if animated:
        mid = np.zeros((height, width, 4))
        region = np.zeros((height, width), dtype=bool)
        region[height // 4: height // 2 + 2, width // 4: width // 2 + 4] = True
        mid[..., :3] = np.where(region[..., None],
                                block_noise_texture((height, width), gen,
                                                    coarse=3, low=0.5,
                                                    high=0.95), 0.0)
        mid[..., 3] = region.astype(float)
        ys, xs = np.mgrid[0:height, 0:width]
        phase = 2.0 * np.pi * (xs / width + 0.3 * ys / height)
        anim = PlaneAnimation(period=period, amplitude=amplitude, mask=region,
                              phase=phase)
        planes.append(ScenePlane(depth=mid_depth, rgba=mid, animation=anim))
    else:
        filler = np.zeros((height, width, 4))
        planes.append(ScenePlane(depth=mid_depth, rgba=filler))
    planes.append(ScenePlane(depth=backdrop_depth, rgba=backdrop))
    mid_index = len(cameras) // 2
    return SceneSpec(planes=planes, cameras=cameras, num_frames=num_frames,
                     fps=fps, near=2.0, far=8.0, reference_index=mid_index)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
