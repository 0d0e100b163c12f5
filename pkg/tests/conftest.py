"""Shared builders for randomized scenes and cameras."""

import numpy as np

from citysplat.core import CameraView, GaussianCloud, quat_to_rotmat


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def identity_camera(width=64, height=48, f=55.0, cx=None, cy=None):
    """Camera at the origin looking along +z, pixel frame = world frame."""
    return CameraView(
        width=width, height=height, fx=f, fy=f,
        cx=width / 2.0 if cx is None else cx,
        cy=height / 2.0 if cy is None else cy,
        rotation_w2c=np.eye(3), translation_w2c=np.zeros(3),
    )


def random_camera(rng):
    width = int(rng.integers(24, 65))
    height = int(rng.integers(20, 53))
    f = float(rng.uniform(0.6, 1.3)) * width
    rot = quat_to_rotmat(random_unit_quats(rng, 1)[0])
    return CameraView(
        width=width, height=height,
        fx=f, fy=f * float(rng.uniform(0.9, 1.1)),
        cx=width / 2.0 + float(rng.uniform(-2.0, 2.0)),
        cy=height / 2.0 + float(rng.uniform(-2.0, 2.0)),
        rotation_w2c=rot, translation_w2c=rng.uniform(-3.0, 3.0, 3),
    )


def cloud_in_view(rng, cam, k):
    """Random cloud mostly inside the camera frustum, with a few members
    behind the camera or outside the image to exercise culling."""
    k = int(k)
    z = rng.uniform(0.4, 12.0, k)
    behind = rng.random(k) < 0.08
    z[behind] = rng.uniform(-2.0, 0.19, int(behind.sum()))
    u = rng.uniform(-0.25 * cam.width, 1.25 * cam.width, k)
    v = rng.uniform(-0.25 * cam.height, 1.25 * cam.height, k)
    p_cam = np.stack([(u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z], axis=1)
    positions = (p_cam - cam.translation_w2c) @ cam.rotation_w2c
    return GaussianCloud(
        positions=positions,
        opacities=rng.uniform(0.0, 1.0, k) ** 1.2,
        scales=rng.uniform(0.02, 0.9, (k, 3)),
        rotations=random_unit_quats(rng, k),
        sh=rng.normal(0.0, 0.35, (k, 3, 16)),
    )
